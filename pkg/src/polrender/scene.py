"""Analytic signed-distance-field scenes and the SDF-to-density transform.

Scenes are unions of rigidly placed primitives (sphere, box, torus,
half-space plane), each carrying a material. Signed distances are exact
per primitive (negative inside); the union takes the minimum, which is a
lower bound that is exact outside overlap regions, so sphere tracing
stays safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pbrdf import Material


class DegenerateNormalError(ValueError):
    """SDF gradient vanishes (medial-axis point)."""


@dataclass(frozen=True)
class Sphere:
    radius: float

    def sdf(self, p):
        return np.linalg.norm(p, axis=-1) - self.radius

    def gradient(self, p):
        norm = np.linalg.norm(p, axis=-1, keepdims=True)
        return p / np.where(norm > 0, norm, 1.0)


@dataclass(frozen=True)
class Box:
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))

    def sdf(self, p):
        q = np.abs(p) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def gradient(self, p):
        q = np.abs(p) - self.half_extents
        outside = np.maximum(q, 0.0)
        norm = np.linalg.norm(outside, axis=-1, keepdims=True)
        grad_out = np.sign(p) * outside / np.where(norm > 0, norm, 1.0)
        # Inside: the face of the largest (least negative) component.
        axis = np.argmax(q, axis=-1)
        grad_in = np.zeros_like(np.asarray(p, dtype=float))
        idx = np.indices(axis.shape)
        grad_in[(*idx, axis)] = np.sign(p[(*idx, axis)])
        is_outside = (norm[..., 0] > 0)[..., None]
        return np.where(is_outside, grad_out, grad_in)


@dataclass(frozen=True)
class Torus:
    """Torus around the z axis: major circle of radius R in the xy plane."""

    major_radius: float
    minor_radius: float

    def sdf(self, p):
        rho = np.hypot(p[..., 0], p[..., 1])
        return np.hypot(rho - self.major_radius, p[..., 2]) - self.minor_radius

    def gradient(self, p):
        rho = np.hypot(p[..., 0], p[..., 1])
        qx = rho - self.major_radius
        qlen = np.hypot(qx, p[..., 2])
        safe_rho = np.where(rho > 0, rho, 1.0)
        safe_q = np.where(qlen > 0, qlen, 1.0)
        fx = (qx / safe_q) * (p[..., 0] / safe_rho)
        fy = (qx / safe_q) * (p[..., 1] / safe_rho)
        fz = p[..., 2] / safe_q
        grad = np.stack([fx, fy, fz], axis=-1)
        return np.where(((rho > 0) & (qlen > 0))[..., None], grad, 0.0)


@dataclass(frozen=True)
class Plane:
    """Half-space z <= 0 in local coordinates (surface is the z = 0 plane)."""

    def sdf(self, p):
        return p[..., 2]

    def gradient(self, p):
        g = np.zeros_like(np.asarray(p, dtype=float))
        g[..., 2] = 1.0
        return g


@dataclass(frozen=True)
class Placement:
    """Rigid transform plus uniform scale, local -> world."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        rt_r = self.rotation.T @ self.rotation
        if not np.allclose(rt_r, np.eye(3), atol=1e-9):
            raise ValueError("placement rotation must be orthonormal")
        if self.scale <= 0:
            raise ValueError("placement scale must be positive")

    def to_local(self, p):
        return (p - self.translation) @ self.rotation / self.scale

    def direction_to_world(self, d):
        return d @ self.rotation.T


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rotation matrix from an axis (3 floats) and angle in radians."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0:
        if angle != 0:
            raise ValueError("zero rotation axis with nonzero angle")
        return np.eye(3)
    x, y, z = axis / norm
    c, s = np.cos(angle), np.sin(angle)
    cc = 1.0 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


@dataclass(frozen=True)
class ScenePrimitive:
    shape: object
    placement: Placement
    material: Material


@dataclass(frozen=True)
class DensityParams:
    """Sharpness of the SDF-to-density transform (length units)."""

    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class SdfScene:
    """Union of placed primitives inside a bounding sphere at the origin."""

    primitives: tuple
    bounding_radius: float
    density: DensityParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if self.bounding_radius <= 0:
            raise ValueError("bounding radius must be positive")
        if self.density is None:
            object.__setattr__(self, "density", DensityParams(1e-3 * self.bounding_radius))


def _primitive_sdf(prim: ScenePrimitive, p):
    local = prim.placement.to_local(p)
    return prim.shape.sdf(local) * prim.placement.scale


def sdf_eval(scene: SdfScene, p) -> np.ndarray:
    """Signed distance of the scene union at points ``p`` of shape (..., 3)."""
    p = np.asarray(p, dtype=float)
    dists = np.stack([_primitive_sdf(prim, p) for prim in scene.primitives], axis=0)
    return np.min(dists, axis=0)


def sdf_eval_with_index(scene: SdfScene, p):
    """Union distance plus the index of the winning primitive."""
    p = np.asarray(p, dtype=float)
    dists = np.stack([_primitive_sdf(prim, p) for prim in scene.primitives], axis=0)
    idx = np.argmin(dists, axis=0)
    return np.min(dists, axis=0), idx


def sdf_gradient(scene: SdfScene, p) -> np.ndarray:
    """Analytic gradient of the union SDF (gradient of the argmin member)."""
    p = np.asarray(p, dtype=float)
    _, idx = sdf_eval_with_index(scene, p)
    grad = np.zeros_like(p)
    for k, prim in enumerate(scene.primitives):
        sel = idx == k
        if not np.any(sel):
            continue
        local = prim.placement.to_local(p[sel])
        g_local = prim.shape.gradient(local)
        grad[sel] = prim.placement.direction_to_world(g_local)
    return grad


def sdf_normal(scene: SdfScene, p) -> np.ndarray:
    """Unit surface normal (normalized SDF gradient) at points near the surface."""
    grad = sdf_gradient(scene, np.asarray(p, dtype=float))
    norm = np.linalg.norm(grad, axis=-1, keepdims=True)
    if np.any(norm[..., 0] < 1e-12):
        raise DegenerateNormalError("SDF gradient vanishes (medial-axis point)")
    return grad / norm


def sdf_normal_fd(scene: SdfScene, p, step: float | None = None) -> np.ndarray:
    """Central finite-difference gradient of the union SDF (unnormalized)."""
    p = np.asarray(p, dtype=float)
    h = step if step is not None else 1e-5 * scene.bounding_radius
    grad = np.zeros_like(p)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = h
        grad[..., axis] = (sdf_eval(scene, p + offset) - sdf_eval(scene, p - offset)) / (2 * h)
    return grad


def density_from_sdf(d, params: DensityParams) -> np.ndarray:
    """Laplace-CDF extinction density: high inside, ``1/(2 beta)`` at the
    surface, exponentially decaying outside. Continuous and monotone
    non-increasing in the signed distance."""
    d = np.asarray(d, dtype=float)
    beta = params.beta
    inside = (1.0 - 0.5 * np.exp(np.minimum(d, 0.0) / beta)) / beta
    outside = 0.5 * np.exp(-np.maximum(d, 0.0) / beta) / beta
    return np.where(d <= 0.0, inside, outside)
