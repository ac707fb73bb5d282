"""Image-fidelity and geometry metrics: PSNR, SSIM, normal MAE, chamfer.

Images are peak-1 floats. SSIM uses the standard 11x11 Gaussian window
(sigma 1.5) with stabilizers k1 = 0.01 and k2 = 0.03; the score is the
mean of the local SSIM map over mask centers whose window fits inside
the image. Chamfer is the bidirectional sum of mean squared
nearest-neighbor distances with exact k-d tree lookups.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import convolve2d
from scipy.spatial import cKDTree

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(img_a, img_b, mask):
    img_a = np.asarray(img_a, dtype=float)
    img_b = np.asarray(img_b, dtype=float)
    if img_a.shape != img_b.shape:
        raise ValueError(f"image shapes differ: {img_a.shape} vs {img_b.shape}")
    if mask is None:
        mask = np.ones(img_a.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img_a.shape[:2]:
        raise ValueError("mask shape must match the image grid")
    if not np.any(mask):
        raise ValueError("mask covers no pixels")
    return img_a, img_b, mask


def psnr(img_a, img_b, mask=None) -> float:
    """Peak signal-to-noise ratio in dB for peak-1 images over a mask.

    Identical inputs return the +inf sentinel.
    """
    img_a, img_b, mask = _check_pair(img_a, img_b, mask)
    diff = (img_a - img_b)[mask]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=float)
    g = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    kernel = _gaussian_kernel()
    c1 = SSIM_K1 * SSIM_K1
    c2 = SSIM_K2 * SSIM_K2

    def smooth(x):
        return convolve2d(x, kernel, mode="valid")

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a * mu_a
    var_b = smooth(b * b) - mu_b * mu_b
    cov = smooth(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(img_a, img_b, mask=None) -> float:
    """Mean local SSIM over masked window centers (window fully inside).

    Multichannel images average the per-channel scores.
    """
    img_a, img_b, mask = _check_pair(img_a, img_b, mask)
    half = SSIM_WINDOW // 2
    if img_a.shape[0] < SSIM_WINDOW or img_a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    inner = mask[half:-half, half:-half]
    if not np.any(inner):
        raise ValueError("mask covers no interior window centers")
    if img_a.ndim == 2:
        channels = [(img_a, img_b)]
    else:
        channels = [(img_a[..., c], img_b[..., c]) for c in range(img_a.shape[-1])]
    scores = [float(np.mean(_ssim_map(a, b)[inner])) for a, b in channels]
    return float(np.mean(scores))


def normal_mae(normals_a, normals_b, mask=None) -> float:
    """Mean angular error between unit-normal fields, in degrees."""
    normals_a = np.asarray(normals_a, dtype=float)
    normals_b = np.asarray(normals_b, dtype=float)
    if normals_a.shape != normals_b.shape:
        raise ValueError("normal field shapes differ")
    if mask is None:
        mask = np.ones(normals_a.shape[:-1], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not np.any(mask):
        raise ValueError("mask covers no pixels")
    na = normals_a[mask]
    nb = normals_b[mask]
    for name, n in (("first", na), ("second", nb)):
        lengths = np.linalg.norm(n, axis=-1)
        if np.any(np.abs(lengths - 1.0) > 1e-6):
            raise ValueError(f"{name} normal field is not unit length")
    dots = np.clip(np.sum(na * nb, axis=-1), -1.0, 1.0)
    return float(np.degrees(np.mean(np.arccos(dots))))


def chamfer(points_a, points_b) -> float:
    """Bidirectional sum of mean squared nearest-neighbor distances."""
    points_a = np.asarray(points_a, dtype=float).reshape(-1, 3)
    points_b = np.asarray(points_b, dtype=float).reshape(-1, 3)
    if points_a.shape[0] == 0 or points_b.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    d_ab, _ = cKDTree(points_b).query(points_a)
    d_ba, _ = cKDTree(points_a).query(points_b)
    return float(np.mean(d_ab**2) + np.mean(d_ba**2))


def normalize_points_to_unit_sphere(points) -> np.ndarray:
    """Center a point set at its centroid and scale its max radius to 1."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    centered = points - points.mean(axis=0)
    radius = np.linalg.norm(centered, axis=1).max()
    if radius == 0:
        return centered
    return centered / radius


def read_point_list(path) -> np.ndarray:
    """Plain-text point list: one ``x y z`` triple per line."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 floats per line")
        rows.append([float(p) for p in parts])
    return np.asarray(rows, dtype=float).reshape(-1, 3)


def write_metric_report(path, values: dict) -> None:
    """Line-oriented ``key: value`` metric report."""
    lines = [f"{key}: {value}" for key, value in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")
