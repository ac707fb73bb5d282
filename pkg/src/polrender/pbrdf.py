"""Polarimetric BRDF: outgoing Stokes vectors for glossy dielectrics.

The reflectance splits into a diffuse part (light refracts in, scatters
and depolarizes in the subsurface, refracts back out) and a specular
microfacet part (single mirror bounce). Transmission polarizes parallel
to the scattering plane, reflection perpendicular to it, which is why
the two components carry orthogonal angles of polarization and the
specular one a higher degree of polarization.

All operations broadcast over leading batch axes; direction vectors are
``(..., 3)`` arrays and per-channel quantities are ``(..., 3)`` RGB.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fresnel
from .fresnel import frame_cos_sin
from .stokes import filter_intensity

#: n.v below this renders as a zero Stokes vector instead of amplifying 1/(n.v).
GRAZING_EPS = 1e-6


class GeometryError(ValueError):
    """Shading geometry is invalid (back-facing or non-unit vectors)."""


@dataclass(frozen=True)
class Material:
    """Surface material: RGB diffuse/specular albedo, roughness, ior.

    Fields may be scalars or broadcastable arrays (trailing axis 3 for the
    albedos) so a whole image's worth of materials evaluates in one call.
    """

    kd: np.ndarray
    ks: np.ndarray
    roughness: np.ndarray
    ior: np.ndarray = field(default=fresnel.DEFAULT_IOR)

    def __post_init__(self):
        object.__setattr__(self, "kd", np.asarray(self.kd, dtype=float))
        object.__setattr__(self, "ks", np.asarray(self.ks, dtype=float))
        object.__setattr__(self, "roughness", np.asarray(self.roughness, dtype=float))
        object.__setattr__(self, "ior", np.asarray(self.ior, dtype=float))
        if not (np.all(np.isfinite(self.kd)) and np.all(np.isfinite(self.ks))):
            raise ValueError("albedos must be finite")
        if np.any(self.kd < 0) or np.any(self.kd > 1):
            raise ValueError("kd channels must lie in [0, 1]")
        if np.any(self.ks < 0):
            raise ValueError("ks channels must be non-negative")
        if np.any(self.roughness <= 0) or np.any(self.roughness > 1):
            raise ValueError("roughness must lie in (0, 1]")
        if np.any(self.ior <= 1):
            raise ValueError("ior must exceed 1")


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def mirror_incident(v, n) -> np.ndarray:
    """Mirror the view direction about the normal: ``2(n.v)n - v``.

    With the light placed along this direction the half vector equals the
    normal.
    """
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    nv = _dot(n, v)
    if np.any(nv <= 0):
        raise GeometryError("back-facing geometry: n.v must be positive")
    return 2.0 * nv[..., None] * n - v


@dataclass(frozen=True)
class ShadingGeometry:
    """Unit directions at a surface point: normal, view, incident, half,
    plus the camera reference axis that anchors the Stokes frame."""

    n: np.ndarray
    v: np.ndarray
    i: np.ndarray
    h: np.ndarray
    camera_x: np.ndarray

    @classmethod
    def from_mirror(cls, n, v, camera_x) -> "ShadingGeometry":
        """Geometry with the light along the mirrored view direction."""
        n = np.asarray(n, dtype=float)
        v = np.asarray(v, dtype=float)
        camera_x = np.asarray(camera_x, dtype=float)
        i = mirror_incident(v, n)
        h = _unit(i + v)
        return cls(n=n, v=v, i=i, h=h, camera_x=camera_x)

    def validate(self, tol: float = 1e-9):
        for name in ("n", "v", "i", "h", "camera_x"):
            vec = getattr(self, name)
            if np.any(np.abs(_dot(vec, vec) - 1.0) > 2 * tol):
                raise GeometryError(f"{name} is not unit length")
        if np.any(_dot(self.n, self.v) <= 0):
            raise GeometryError("back-facing geometry: n.v must be positive")


def ggx_distribution(cos_nh, alpha):
    """Isotropic GGX normal distribution, peak ``1/(pi alpha^2)`` at h = n."""
    c2 = cos_nh * cos_nh
    a2 = alpha * alpha
    denom = c2 * (a2 - 1.0) + 1.0
    return a2 / (np.pi * denom * denom)


def smith_lambda(cos_theta, alpha):
    """Smith shadowing auxiliary for one direction."""
    c2 = cos_theta * cos_theta
    a2 = alpha * alpha
    return 0.5 * (np.sqrt(a2 + (1.0 - a2) * c2) / cos_theta - 1.0)


def smith_g(cos_no, cos_ni, alpha):
    """Height-correlated Smith shadowing-masking term."""
    return 1.0 / (1.0 + smith_lambda(cos_no, alpha) + smith_lambda(cos_ni, alpha))


def microfacet_terms(geom: ShadingGeometry, roughness):
    """(D, G, W) with ``W = D G / (4 n.v)`` for the outgoing direction."""
    cos_no = _dot(geom.n, geom.v)
    cos_ni = _dot(geom.n, geom.i)
    if np.any(cos_no <= 0):
        raise GeometryError("back-facing geometry: n.v must be positive")
    cos_nh = _dot(geom.n, geom.h)
    d = ggx_distribution(cos_nh, roughness)
    g = smith_g(cos_no, cos_ni, roughness)
    w = d * g / (4.0 * cos_no)
    return d, g, w


def decompose_radiance(geom: ShadingGeometry, mat: Material, light=1.0):
    """Per-channel diffuse and specular radiance coefficients.

    ``c_d = L * kd * (n.i)`` and ``c_s = L * ks * D G / (4 n.v)``; the
    outgoing Stokes vector is linear in both.
    """
    light = np.asarray(light, dtype=float)
    cos_ni = _dot(geom.n, geom.i)
    _, _, w = microfacet_terms(geom, mat.roughness)
    c_d = light * mat.kd * cos_ni[..., None]
    c_s = light * mat.ks * w[..., None]
    return c_d, c_s


def _polarization_factors(geom: ShadingGeometry, mat: Material):
    """Fresnel packs and doubled frame angles shared by both render paths.

    Returns (t_entry, t_exit, r_half, cos2/sin2 of the transmission frame,
    cos2/sin2 of the reflection frame). The reflection frame axis is the
    perpendicular of the (view, half) plane, i.e. the transmission-style
    angle shifted by 90 degrees, which flips the sign of both doubled
    components.
    """
    cos_no = _dot(geom.n, geom.v)
    cos_ni = _dot(geom.n, geom.i)
    cos_hv = _dot(geom.h, geom.v)
    t_exit = fresnel.fresnel_pack(np.clip(cos_no, GRAZING_EPS, 1.0), mat.ior)
    t_entry = fresnel.fresnel_pack(np.clip(cos_ni, GRAZING_EPS, 1.0), mat.ior)
    r_half = fresnel.fresnel_pack(np.clip(cos_hv, GRAZING_EPS, 1.0), mat.ior)
    cos2_t, sin2_t, _, _ = frame_cos_sin(geom.camera_x, geom.v, geom.n, degenerate_ok=True)
    cos2_rp, sin2_rp, _, _ = frame_cos_sin(geom.camera_x, geom.v, geom.h, degenerate_ok=True)
    cos2_r = -cos2_rp
    sin2_r = -sin2_rp
    return t_entry, t_exit, r_half, cos2_t, sin2_t, cos2_r, sin2_r


def pbrdf_stokes(geom: ShadingGeometry, mat: Material, light=1.0, check_finite: bool = True) -> np.ndarray:
    """Outgoing Stokes vector per RGB channel, shape ``(..., 3, 4)``.

    Diffuse: entry transmission depolarizes in the subsurface, so only its
    plus term survives; the exit transmission re-polarizes in the exit
    plane. Specular: single Fresnel reflection at the half vector.
    Geometry with ``n.v`` below :data:`GRAZING_EPS` yields a zero vector.
    With ``check_finite`` any non-finite output raises; renderers disable
    the check and zero offending pixels instead.
    """
    cos_no = _dot(geom.n, geom.v)
    if np.any(cos_no <= 0):
        raise GeometryError("back-facing geometry: n.v must be positive")
    c_d, c_s = decompose_radiance(geom, mat, light)
    t_entry, t_exit, r_half, cos2_t, sin2_t, cos2_r, sin2_r = _polarization_factors(geom, mat)

    diff_s0 = t_exit.t_plus * t_entry.t_plus
    diff_lin = t_exit.t_minus * t_entry.t_plus
    spec_s0 = r_half.r_plus
    spec_lin = r_half.r_minus

    def channelwise(scalar):
        return np.asarray(scalar)[..., None]

    out = np.zeros(np.broadcast_shapes(c_d.shape, c_s.shape) + (4,))
    out[..., 0] = c_d * channelwise(diff_s0) + c_s * channelwise(spec_s0)
    out[..., 1] = c_d * channelwise(diff_lin * cos2_t) + c_s * channelwise(spec_lin * cos2_r)
    out[..., 2] = -(c_d * channelwise(diff_lin * sin2_t) + c_s * channelwise(spec_lin * sin2_r))

    grazing = cos_no < GRAZING_EPS
    if np.any(grazing):
        out = np.where(grazing[..., None, None], 0.0, out)
    if check_finite and not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite Stokes output")
    return out


def radiance_at_filter(geom: ShadingGeometry, mat: Material, light, pol_angle) -> np.ndarray:
    """Filtered RGB radiance behind a polarizer: Stokes-then-filter path.

    ``pol_angle`` is a scalar or an array broadcastable to the geometry's
    batch shape.
    """
    pol_angle = np.asarray(pol_angle, dtype=float)
    per_channel_angle = pol_angle[..., None] if pol_angle.ndim else pol_angle
    return filter_intensity(pbrdf_stokes(geom, mat, light), per_channel_angle)


def radiance_at_filter_direct(geom: ShadingGeometry, mat: Material, light, pol_angle) -> np.ndarray:
    """Filtered RGB radiance via the closed trigonometric form.

    Combines the Fresnel plus/minus terms with the polarizer angle
    directly, without forming Stokes vectors; must agree with
    :func:`radiance_at_filter` to machine precision.
    """
    cos_no = _dot(geom.n, geom.v)
    if np.any(cos_no <= 0):
        raise GeometryError("back-facing geometry: n.v must be positive")
    c_d, c_s = decompose_radiance(geom, mat, light)
    t_entry, t_exit, r_half, cos2_t, sin2_t, cos2_r, sin2_r = _polarization_factors(geom, mat)

    two_psi_t = np.arctan2(sin2_t, cos2_t)
    two_psi_r = np.arctan2(sin2_r, cos2_r)
    pol_angle = np.asarray(pol_angle, dtype=float)
    cos_diff_t = np.cos(two_psi_t + 2.0 * pol_angle)
    cos_diff_r = np.cos(two_psi_r + 2.0 * pol_angle)

    diff_term = t_exit.t_plus * t_entry.t_plus + t_exit.t_minus * t_entry.t_plus * cos_diff_t
    spec_term = r_half.r_plus + r_half.r_minus * cos_diff_r
    out = 0.5 * (c_d * diff_term[..., None] + c_s * spec_term[..., None])
    grazing = cos_no < GRAZING_EPS
    if np.any(grazing):
        out = np.where(grazing[..., None], 0.0, out)
    return out
