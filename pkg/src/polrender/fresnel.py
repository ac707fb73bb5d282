"""Fresnel coefficients for external reflection at a dielectric.

All coefficients are intensity (power) quantities for unpolarized-frame
s/p components, with the radiance scaling folded into the transmittances
so that ``r + t == 1`` holds per polarization for a lossless dielectric.

The frame-rotation helpers measure the signed angle between the camera
reference axis and a scattering plane, which is what converts the s/p
split of the Fresnel terms into Stokes components in the camera frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnsupportedMediumError(ValueError):
    """Refractive index outside the supported external-dielectric range."""


class FrameDegenerateError(ValueError):
    """The camera reference axis projects to zero in the transverse plane."""


#: Default refractive index for dielectric materials.
DEFAULT_IOR = 1.5


@dataclass(frozen=True)
class FresnelPack:
    """Per-polarization Fresnel coefficients and their derived combinations.

    ``r_minus = (r_s - r_p)/2`` and ``t_minus = (t_p - t_s)/2`` so both are
    non-negative for external incidence; the opposite axis orientation
    (perpendicular for reflection, parallel for transmission) is what makes
    reflected and transmitted polarization orthogonal.
    """

    r_s: np.ndarray
    r_p: np.ndarray
    t_s: np.ndarray
    t_p: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    t_plus: np.ndarray
    t_minus: np.ndarray
    dop_reflection: np.ndarray
    dop_transmission: np.ndarray


def _raw(x):
    """Plain float view of x, unwrapping forward-mode duals."""
    return np.asarray(getattr(x, "value", x), dtype=float)


def fresnel_pack(cos_theta_i, eta) -> FresnelPack:
    """Fresnel intensity coefficients for air -> dielectric incidence.

    ``cos_theta_i`` must lie in (0, 1] and ``eta`` must exceed 1, so total
    internal reflection cannot occur. Accepts arrays (broadcasting) and
    dual numbers in either argument.
    """
    raw_cos = _raw(cos_theta_i)
    raw_eta = _raw(eta)
    if np.any(raw_eta <= 1.0):
        raise UnsupportedMediumError("refractive index must exceed 1 (external dielectric)")
    if np.any(raw_cos <= 0.0) or np.any(raw_cos > 1.0):
        raise ValueError("cos_theta_i must lie in (0, 1]")

    sin2_i = 1.0 - cos_theta_i * cos_theta_i
    cos_t = np.sqrt(1.0 - sin2_i / (eta * eta))

    a = cos_theta_i          # n1 * cos_i with n1 = 1
    b = eta * cos_t          # n2 * cos_t
    c = eta * cos_theta_i    # n2 * cos_i
    d = cos_t                # n1 * cos_t

    rs_amp = (a - b) / (a + b)
    rp_amp = (c - d) / (c + d)
    r_s = rs_amp * rs_amp
    r_p = rp_amp * rp_amp
    # Intensity transmittance includes the (eta cos_t / cos_i) radiance
    # factor, which makes r + t = 1 an algebraic identity per polarization.
    scale = b / a
    ts_amp = 2.0 * a / (a + b)
    tp_amp = 2.0 * a / (c + d)
    t_s = scale * ts_amp * ts_amp
    t_p = scale * tp_amp * tp_amp

    r_plus = 0.5 * (r_s + r_p)
    r_minus = 0.5 * (r_s - r_p)
    t_plus = 0.5 * (t_s + t_p)
    t_minus = 0.5 * (t_p - t_s)

    r_sum = r_s + r_p
    t_sum = t_s + t_p
    if isinstance(r_sum, np.ndarray) or np.isscalar(r_sum):
        safe_r = np.where(_raw(r_sum) > 0, r_sum, 1.0)
        safe_t = np.where(_raw(t_sum) > 0, t_sum, 1.0)
        dop_r = np.where(_raw(r_sum) > 0, np.abs(r_s - r_p) / safe_r, 0.0)
        dop_t = np.where(_raw(t_sum) > 0, np.abs(t_p - t_s) / safe_t, 0.0)
    else:
        # Dual-number path: sums are strictly positive in the sampled range.
        dop_r = (r_s - r_p) / r_sum
        dop_t = (t_p - t_s) / t_sum

    return FresnelPack(r_s, r_p, t_s, t_p, r_plus, r_minus, t_plus, t_minus, dop_r, dop_t)


def brewster_angle(eta: float) -> float:
    """Incidence angle with vanishing parallel reflectance: arctan(eta)."""
    if eta <= 1.0:
        raise UnsupportedMediumError("refractive index must exceed 1")
    return float(np.arctan(eta))


@dataclass(frozen=True)
class FrameRotation:
    """Signed angle from the camera reference axis to a scattering plane.

    ``cos2psi``/``sin2psi`` are the doubled-angle values a Stokes frame
    rotation needs; they are computed from quotient identities so that
    ``cos2psi**2 + sin2psi**2 == 1`` holds to machine precision.
    """

    psi: np.ndarray
    cos2psi: np.ndarray
    sin2psi: np.ndarray


def _project_transverse(vec, view_dir):
    """Component of vec perpendicular to view_dir (not normalized)."""
    dot = np.sum(vec * view_dir, axis=-1, keepdims=True)
    return vec - dot * view_dir


def frame_cos_sin(camera_x_axis, view_dir, plane_normal_dir, degenerate_ok: bool = False):
    """(cos 2psi, sin 2psi) of the frame rotation, vectorized.

    With ``degenerate_ok`` a vanishing scattering-plane projection yields
    (1, 0) instead of raising; the Fresnel minus terms vanish there so the
    choice never reaches the output.
    """
    camera_x_axis = np.asarray(camera_x_axis, dtype=float)
    view_dir = np.asarray(view_dir, dtype=float)
    plane_normal_dir = np.asarray(plane_normal_dir, dtype=float)

    x_proj = _project_transverse(camera_x_axis, view_dir)
    x_norm2 = np.sum(x_proj * x_proj, axis=-1)
    if np.any(x_norm2 < 1e-18):
        raise FrameDegenerateError("camera reference axis is parallel to the view direction")

    plane_axis = _project_transverse(plane_normal_dir, view_dir)
    a_norm2 = np.sum(plane_axis * plane_axis, axis=-1)
    degenerate = a_norm2 < 1e-24
    if np.any(degenerate) and not degenerate_ok:
        raise FrameDegenerateError("scattering plane is undefined (view parallel to plane normal)")

    u = np.sum(x_proj * plane_axis, axis=-1)
    w = np.sum(np.cross(x_proj, plane_axis) * view_dir, axis=-1)
    denom = u * u + w * w
    safe = np.where(degenerate, 1.0, denom)
    cos2 = np.where(degenerate, 1.0, (u * u - w * w) / safe)
    sin2 = np.where(degenerate, 0.0, 2.0 * u * w / safe)
    return cos2, sin2, u, w


def frame_rotation(camera_x_axis, view_dir, plane_normal_dir) -> FrameRotation:
    """Signed rotation from the camera x-axis to the scattering plane.

    The scattering plane is spanned by ``view_dir`` and
    ``plane_normal_dir``; its transverse axis is the projection of the
    plane normal perpendicular to the view direction. Positive angles are
    counter-clockwise looking down the view direction.
    """
    cos2, sin2, u, w = frame_cos_sin(camera_x_axis, view_dir, plane_normal_dir)
    psi = np.arctan2(w, u)
    return FrameRotation(psi, cos2, sin2)
