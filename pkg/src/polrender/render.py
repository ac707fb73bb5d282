"""Cameras, sphere tracing, volume integration and Stokes-image synthesis.

Rendering is deterministic: all stratified-sampling jitter is drawn up
front from one seeded generator in a fixed order, and work is split into
fixed row bands whose results are identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pbrdf, scene as scene_mod
from .pbrdf import GRAZING_EPS, Material, ShadingGeometry
from .stokes import filter_intensity

MAX_TRACE_ITERS = 256
_BAND_ROWS = 8


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. ``rotation`` maps camera to world coordinates with
    columns (right, up, back); the camera looks along -z in its own frame.
    ``fov`` is the full horizontal field of view in radians."""

    rotation: np.ndarray
    position: np.ndarray
    fov: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-9):
            raise ValueError("camera rotation must be orthonormal")
        if not (0.0 < self.fov < np.pi):
            raise ValueError("fov must lie in (0, pi)")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    @classmethod
    def look_at(cls, position, target, up, fov, width, height) -> "Camera":
        position = np.asarray(position, dtype=float)
        forward = np.asarray(target, dtype=float) - position
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise ValueError("camera position equals its target")
        forward = forward / norm
        right = np.cross(forward, np.asarray(up, dtype=float))
        rnorm = np.linalg.norm(right)
        if rnorm < 1e-12:
            raise ValueError("up direction is parallel to the view direction")
        right = right / rnorm
        true_up = np.cross(right, forward)
        rotation = np.stack([right, true_up, -forward], axis=1)
        return cls(rotation=rotation, position=position, fov=fov, width=width, height=height)

    @property
    def forward(self) -> np.ndarray:
        return -self.rotation[:, 2]

    @property
    def x_axis(self) -> np.ndarray:
        """Camera reference axis anchoring the per-pixel Stokes frames."""
        return self.rotation[:, 0]


def _pixel_directions(camera: Camera, y0: int, y1: int) -> np.ndarray:
    """World-space unit ray directions for pixel rows [y0, y1)."""
    xs = (np.arange(camera.width) + 0.5) / camera.width * 2.0 - 1.0
    ys = 1.0 - (np.arange(y0, y1) + 0.5) / camera.height * 2.0
    tan_half = np.tan(0.5 * camera.fov)
    u, v = np.meshgrid(xs * tan_half, ys * tan_half * camera.height / camera.width)
    dirs_cam = np.stack([u, v, -np.ones_like(u)], axis=-1)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=-1, keepdims=True)
    return dirs_cam @ camera.rotation.T


def generate_ray(camera: Camera, pixel_x: int, pixel_y: int):
    """Ray through the center of one pixel: (origin, unit direction)."""
    if not (0 <= pixel_x < camera.width and 0 <= pixel_y < camera.height):
        raise IndexError(f"pixel ({pixel_x}, {pixel_y}) outside {camera.width}x{camera.height}")
    d = _pixel_directions(camera, pixel_y, pixel_y + 1)[0, pixel_x]
    return camera.position.copy(), d


def ring_cameras(count, radius, width, height, fov, elevations=(0.3, -0.3), target=(0.0, 0.0, 0.0)):
    """Cameras evenly spaced on a circle around the target, with the given
    elevation angles (radians) cycled across views."""
    cams = []
    target = np.asarray(target, dtype=float)
    for k in range(count):
        azimuth = 2.0 * np.pi * k / count
        elev = float(elevations[k % len(elevations)])
        pos = target + radius * np.array(
            [np.cos(azimuth) * np.cos(elev), np.sin(azimuth) * np.cos(elev), np.sin(elev)]
        )
        cams.append(Camera.look_at(pos, target, (0.0, 0.0, 1.0), fov, width, height))
    return cams


def _ray_sphere_span(origins, dirs, radius):
    """Entry/exit distances of rays against the bounding sphere."""
    b = np.sum(origins * dirs, axis=-1)
    c = np.sum(origins * origins, axis=-1) - radius * radius
    disc = b * b - c
    valid = disc > 0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t_in = np.maximum(-b - sq, 0.0)
    t_out = -b + sq
    valid &= t_out > t_in
    return t_in, t_out, valid


def sphere_trace(scene, origins, dirs, max_iters: int = MAX_TRACE_ITERS):
    """March rays to the first SDF zero crossing inside the bounding sphere.

    Returns a dict with ``hit`` mask, distances ``t``, hit ``points``,
    winning ``prim_index`` and an ``exhausted`` count for rays that ran out
    of iterations near grazing geometry (reported as misses).
    """
    origins = np.broadcast_to(np.asarray(origins, dtype=float), np.asarray(dirs).shape).copy()
    dirs = np.asarray(dirs, dtype=float)
    n = dirs.shape[0]
    eps = 1e-6 * scene.bounding_radius

    t_in, t_out, valid = _ray_sphere_span(origins, dirs, scene.bounding_radius)
    t = t_in.copy()
    active = valid.copy()
    hit = np.zeros(n, dtype=bool)

    for _ in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        pts = origins[idx] + t[idx, None] * dirs[idx]
        dist = scene_mod.sdf_eval(scene, pts)
        found = np.abs(dist) < eps
        hit_idx = idx[found]
        hit[hit_idx] = True
        active[hit_idx] = False
        move = idx[~found]
        t[move] = t[move] + dist[~found]
        gone = move[t[move] > t_out[move] + eps]
        active[gone] = False

    exhausted = int(np.count_nonzero(active))
    points = origins + t[:, None] * dirs
    prim_index = np.zeros(n, dtype=int)
    if np.any(hit):
        _, prim_index_hit = scene_mod.sdf_eval_with_index(scene, points[hit])
        prim_index[hit] = prim_index_hit
    return {"hit": hit, "t": t, "points": points, "prim_index": prim_index, "exhausted": exhausted}


def volume_weights(sigmas, deltas):
    """Compositing weights ``w_i = T_i (1 - exp(-sigma_i delta_i))`` with
    transmittance ``T_i`` from the exclusive sum of optical depths. The
    weights of one ray sum to at most 1."""
    sigmas = np.asarray(sigmas, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if sigmas.shape != deltas.shape:
        raise ValueError("sigmas and deltas must have matching shapes")
    if np.any(sigmas < 0):
        raise ValueError("densities must be non-negative")
    if np.any(deltas <= 0):
        raise ValueError("sample spacings must be positive")
    tau = sigmas * deltas
    accum = np.cumsum(tau, axis=-1)
    exclusive = np.concatenate([np.zeros_like(accum[..., :1]), accum[..., :-1]], axis=-1)
    transmittance = np.exp(-exclusive)
    weights = transmittance * (1.0 - np.exp(-tau))
    # Floating-point guard: the exact sum is 1 - T_final <= 1, but rounding
    # in the cumulative sums can overshoot by a few ulp on opaque rays.
    total = np.sum(weights, axis=-1, keepdims=True)
    over = total > 1.0
    if np.any(over):
        weights = np.where(over, weights / total, weights)
    return weights


@dataclass
class StokesImage:
    """Per-pixel RGB Stokes map with hit mask, surface normal and depth."""

    width: int
    height: int
    stokes: np.ndarray   # (H, W, 3, 4)
    mask: np.ndarray     # (H, W) bool
    normals: np.ndarray  # (H, W, 3)
    depth: np.ndarray    # (H, W)
    diagnostics: dict = field(default_factory=dict)
    weight_sum: np.ndarray | None = None  # (H, W), volume mode only

    @classmethod
    def zeros(cls, width: int, height: int) -> "StokesImage":
        return cls(
            width=width,
            height=height,
            stokes=np.zeros((height, width, 3, 4)),
            mask=np.zeros((height, width), dtype=bool),
            normals=np.zeros((height, width, 3)),
            depth=np.zeros((height, width)),
        )


def _material_tables(scene):
    kd = np.stack([np.broadcast_to(p.material.kd, (3,)) for p in scene.primitives])
    ks = np.stack([np.broadcast_to(p.material.ks, (3,)) for p in scene.primitives])
    rough = np.array([float(p.material.roughness) for p in scene.primitives])
    ior = np.array([float(p.material.ior) for p in scene.primitives])
    return kd, ks, rough, ior


def _shade_points(scene, normals, view_dirs, prim_index, camera_x, diagnostics):
    """Mirror-lit Stokes vectors at surface points; grazing or degenerate
    geometry yields zeros and bumps a diagnostic counter."""
    m = normals.shape[0]
    out = np.zeros((m, 3, 4))
    cos_no = np.sum(normals * view_dirs, axis=-1)
    good = cos_no > GRAZING_EPS
    diagnostics["grazing_zeroed"] = diagnostics.get("grazing_zeroed", 0) + int(
        np.count_nonzero(~good)
    )
    if not np.any(good):
        return out
    kd_t, ks_t, rough_t, ior_t = _material_tables(scene)
    sel = prim_index[good]
    mat = Material(kd=kd_t[sel], ks=ks_t[sel], roughness=rough_t[sel], ior=ior_t[sel])
    geom = ShadingGeometry.from_mirror(
        normals[good], view_dirs[good], np.broadcast_to(camera_x, normals[good].shape)
    )
    vals = pbrdf.pbrdf_stokes(geom, mat, 1.0, check_finite=False)
    finite = np.all(np.isfinite(vals), axis=(-2, -1))
    diagnostics["nonfinite_zeroed"] = diagnostics.get("nonfinite_zeroed", 0) + int(
        np.count_nonzero(~finite)
    )
    vals = np.where(finite[..., None, None], vals, 0.0)
    out[good] = vals
    return out


def _render_band_trace(scene, camera, y0, y1, diagnostics):
    dirs = _pixel_directions(camera, y0, y1).reshape(-1, 3)
    trace = sphere_trace(scene, camera.position, dirs)
    diagnostics["trace_exhausted"] = diagnostics.get("trace_exhausted", 0) + trace["exhausted"]
    m = dirs.shape[0]
    stokes = np.zeros((m, 3, 4))
    normals = np.zeros((m, 3))
    depth = np.zeros(m)
    mask = trace["hit"].copy()
    if np.any(mask):
        pts = trace["points"][mask]
        grad = scene_mod.sdf_gradient(scene, pts)
        gnorm = np.linalg.norm(grad, axis=-1)
        ok = gnorm > 1e-12
        diagnostics["degenerate_normal"] = diagnostics.get("degenerate_normal", 0) + int(
            np.count_nonzero(~ok)
        )
        n = np.where(ok[..., None], grad / np.where(gnorm[..., None] > 0, gnorm[..., None], 1.0), 0.0)
        v = -dirs[mask]
        shade = np.zeros((pts.shape[0], 3, 4))
        if np.any(ok):
            shade[ok] = _shade_points(
                scene, n[ok], v[ok], trace["prim_index"][mask][ok], camera.x_axis, diagnostics
            )
        stokes[mask] = shade
        normals[mask] = n
        depth[mask] = trace["t"][mask]
    w = camera.width
    return (
        stokes.reshape(y1 - y0, w, 3, 4),
        mask.reshape(y1 - y0, w),
        normals.reshape(y1 - y0, w, 3),
        depth.reshape(y1 - y0, w),
    )


def _render_band_volume(scene, camera, y0, y1, jitter, samples, diagnostics):
    dirs = _pixel_directions(camera, y0, y1).reshape(-1, 3)
    m = dirs.shape[0]
    origins = np.broadcast_to(camera.position, dirs.shape)
    t_in, t_out, valid = _ray_sphere_span(origins, dirs, scene.bounding_radius)

    span = np.where(valid, t_out - t_in, 1.0)
    jit = jitter[y0:y1].reshape(m, samples)
    ts = t_in[:, None] + (np.arange(samples)[None, :] + jit) * span[:, None] / samples
    deltas = np.diff(ts, axis=1)
    last = (t_in + span - ts[:, -1])[:, None]
    deltas = np.concatenate([deltas, last], axis=1)

    pts = origins[:, None, :] + ts[..., None] * dirs[:, None, :]
    flat = pts.reshape(-1, 3)
    dist, prim_index = scene_mod.sdf_eval_with_index(scene, flat)
    sigma = scene_mod.density_from_sdf(dist, scene.density).reshape(m, samples)
    sigma[~valid] = 0.0
    weights = volume_weights(sigma, deltas)

    # Shade samples that bracket a surface crossing at the secant root of
    # the SDF instead of at the raw sample position. The weights (and the
    # 128 stratified sample positions driving them) are untouched; this
    # only removes the O(spacing) bias of evaluating the surface radiance
    # up to one sample past the crossing.
    d_grid = dist.reshape(m, samples)
    shade_t = ts.copy()
    entering = (d_grid[:, :-1] > 0) & (d_grid[:, 1:] <= 0)
    if np.any(entering):
        ray_idx, left_idx = np.nonzero(entering)
        d_left = d_grid[ray_idx, left_idx]
        d_right = d_grid[ray_idx, left_idx + 1]
        t_left = ts[ray_idx, left_idx]
        t_right = ts[ray_idx, left_idx + 1]
        root = t_left + (t_right - t_left) * d_left / (d_left - d_right)
        shade_t[ray_idx, left_idx] = root
        shade_t[ray_idx, left_idx + 1] = root
    shade_pts = origins[:, None, :] + shade_t[..., None] * dirs[:, None, :]
    shade_flat = shade_pts.reshape(-1, 3)
    _, prim_index = scene_mod.sdf_eval_with_index(scene, shade_flat)

    grad = scene_mod.sdf_gradient(scene, shade_flat)
    gnorm = np.linalg.norm(grad, axis=-1)
    ok = gnorm > 1e-12
    n = np.where(ok[..., None], grad / np.where(gnorm[..., None] > 0, gnorm[..., None], 1.0), 0.0)
    v = np.broadcast_to(-dirs[:, None, :], pts.shape).reshape(-1, 3)

    sample_stokes = np.zeros((m * samples, 3, 4))
    contributing = (weights.reshape(-1) > 0) & ok & valid.repeat(samples)
    if np.any(contributing):
        sample_stokes[contributing] = _shade_points(
            scene,
            n[contributing],
            v[contributing],
            prim_index[contributing],
            camera.x_axis,
            diagnostics,
        )
    sample_stokes = sample_stokes.reshape(m, samples, 3, 4)

    stokes = np.sum(weights[..., None, None] * sample_stokes, axis=1)
    wsum = np.sum(weights, axis=1)
    mask = wsum > 0.5
    stokes = np.where(mask[..., None, None], stokes, 0.0)
    wsum_grid = wsum.reshape(y1 - y0, camera.width)

    normal_acc = np.sum(weights[..., None] * n.reshape(m, samples, 3), axis=1)
    nnorm = np.linalg.norm(normal_acc, axis=-1, keepdims=True)
    normals = np.where(mask[..., None] & (nnorm > 1e-12), normal_acc / np.where(nnorm > 0, nnorm, 1.0), 0.0)
    depth = np.where(mask, np.sum(weights * shade_t, axis=1) / np.where(wsum > 0, wsum, 1.0), 0.0)

    diagnostics["max_weight_sum"] = max(diagnostics.get("max_weight_sum", 0.0), float(wsum.max(initial=0.0)))
    w = camera.width
    return (
        stokes.reshape(y1 - y0, w, 3, 4),
        mask.reshape(y1 - y0, w),
        normals.reshape(y1 - y0, w, 3),
        depth.reshape(y1 - y0, w),
        wsum_grid,
    )


def render_stokes_image(
    scene,
    camera: Camera,
    mode: str = "sphere_trace",
    seed: int = 0,
    workers: int = 1,
    samples: int = 128,
) -> StokesImage:
    """Render the per-pixel outgoing Stokes vectors of a scene.

    ``sphere_trace`` shades the first surface intersection directly;
    ``volume`` composites 128 stratified samples per ray with SDF-derived
    densities. Identical inputs produce bit-identical images for any
    worker count.
    """
    if mode not in ("sphere_trace", "volume"):
        raise ValueError(f"unknown render mode: {mode!r}")
    img = StokesImage.zeros(camera.width, camera.height)
    diagnostics: dict = {}

    jitter = None
    if mode == "volume":
        rng = np.random.default_rng(seed)
        jitter = rng.random((camera.height, camera.width, samples))
        img.weight_sum = np.zeros((camera.height, camera.width))

    bands = [(y, min(y + _BAND_ROWS, camera.height)) for y in range(0, camera.height, _BAND_ROWS)]

    def run(band):
        y0, y1 = band
        local_diag: dict = {}
        if mode == "sphere_trace":
            result = _render_band_trace(scene, camera, y0, y1, local_diag)
        else:
            result = _render_band_volume(scene, camera, y0, y1, jitter, samples, local_diag)
        return band, result, local_diag

    if workers <= 1:
        outputs = [run(band) for band in bands]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run, bands))

    for (y0, y1), result, local_diag in outputs:
        stokes, mask, normals, depth = result[:4]
        img.stokes[y0:y1] = stokes
        img.mask[y0:y1] = mask
        img.normals[y0:y1] = normals
        img.depth[y0:y1] = depth
        if len(result) == 5:
            img.weight_sum[y0:y1] = result[4]
        for key, val in local_diag.items():
            if key == "max_weight_sum":
                diagnostics[key] = max(diagnostics.get(key, 0.0), val)
            else:
                diagnostics[key] = diagnostics.get(key, 0) + val

    img.diagnostics = diagnostics
    return img


def render_polarized_image(img: StokesImage, pol_angle: float) -> np.ndarray:
    """Scalar RGB image behind a polarizer at ``pol_angle``; background 0."""
    return filter_intensity(img.stokes, pol_angle)


def trace_toward(scene, origin, target):
    """Trace a single ray aimed at a target point.

    Returns (hit: bool, point) where point is the first intersection. Used
    to test visibility of shared sample points from other cameras.
    """
    origin = np.asarray(origin, dtype=float)
    target = np.asarray(target, dtype=float)
    d = target - origin
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("origin equals target")
    d = d / norm
    res = sphere_trace(scene, origin[None, :], d[None, :])
    return bool(res["hit"][0]), res["points"][0]
