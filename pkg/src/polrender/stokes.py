"""Stokes-vector and Mueller-matrix calculus for linear polarization.

A Stokes vector is any array with a trailing axis of length 4 holding
``[s0, s1, s2, s3]``: total intensity, horizontal-vertical linear
difference, diagonal linear difference, and the circular component.
Everything produced in this package is linearly polarized, so s3 is
carried through the algebra but stays zero.

Angles are radians. The angle of polarization (AoP) is defined modulo
180 degrees and reported in ``(-pi/2, pi/2]``, with exact boundary ties
mapped to ``+pi/2``. A polarizer angle is likewise only meaningful
modulo pi.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class UnconstrainedAngleError(ValueError):
    """Polarizer angle cannot be constrained (degree of polarization is 0)."""


class InconsistentObservationError(ValueError):
    """Observed intensity lies outside the physically feasible band."""


class PolarizationInfo(NamedTuple):
    """Unpolarized intensity, degree of polarization, angle of polarization."""

    unpolarized_intensity: np.ndarray
    dop: np.ndarray
    aop: np.ndarray


def stokes_vector(s0, s1=0.0, s2=0.0, s3=0.0) -> np.ndarray:
    """Stack components into a ``(..., 4)`` Stokes array."""
    parts = np.broadcast_arrays(
        np.asarray(s0, dtype=float),
        np.asarray(s1, dtype=float),
        np.asarray(s2, dtype=float),
        np.asarray(s3, dtype=float),
    )
    return np.stack(parts, axis=-1)


def is_realizable(s, tol: float = 1e-9) -> np.ndarray:
    """True where the polarized intensity does not exceed s0 (within tol)."""
    s = np.asarray(s, dtype=float)
    polarized = np.sqrt(s[..., 1] ** 2 + s[..., 2] ** 2 + s[..., 3] ** 2)
    return (s[..., 0] >= -tol) & (polarized <= s[..., 0] + tol)


def extract_polarization_info(s) -> PolarizationInfo:
    """Split a Stokes vector into unpolarized intensity, DoP and AoP.

    Black pixels (s0 == 0) yield the all-zero info by convention so that
    whole-image extraction never fails on background.
    """
    s = np.asarray(s, dtype=float)
    s0 = s[..., 0]
    if np.any(s0 < 0):
        raise ValueError("s0 must be non-negative (radiance)")
    polarized = np.hypot(s[..., 1], s[..., 2])
    safe_s0 = np.where(s0 > 0, s0, 1.0)
    dop = np.where(s0 > 0, polarized / safe_s0, 0.0)
    aop = 0.5 * np.arctan2(s[..., 2], s[..., 1])
    # arctan2 lands in [-pi, pi] so aop is in [-pi/2, pi/2]; fold the
    # -pi/2 boundary onto +pi/2 to get the half-open interval.
    aop = np.where(aop <= -0.5 * np.pi, aop + np.pi, aop)
    return PolarizationInfo(0.5 * s0, dop, aop)


def malus_intensity(info: PolarizationInfo, pol_angle) -> np.ndarray:
    """Intensity behind a linear polarizer at ``pol_angle``.

    Sinusoidal in the polarizer angle:
    ``I_un * (1 + dop * cos(2*aop - 2*pol_angle))``.
    """
    pol_angle = np.asarray(pol_angle, dtype=float)
    return info.unpolarized_intensity * (
        1.0 + info.dop * np.cos(2.0 * info.aop - 2.0 * pol_angle)
    )


def rotation_mueller(angle: float) -> np.ndarray:
    """Mueller matrix rotating the Stokes reference frame by ``angle``."""
    c = np.cos(2.0 * angle)
    s = np.sin(2.0 * angle)
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, s, 0.0],
            [0.0, -s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


#: Ideal linear polarizer with horizontal transmission axis.
MUELLER_LINEAR_POLARIZER = 0.5 * np.array(
    [
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]
)


def linear_polarizer_mueller(pol_angle: float) -> np.ndarray:
    """Mueller matrix of an ideal linear polarizer rotated to ``pol_angle``.

    Built as ``R(angle)^T @ M_LP @ R(angle)`` where M_LP transmits the
    horizontal axis.
    """
    rot = rotation_mueller(pol_angle)
    return rot.T @ MUELLER_LINEAR_POLARIZER @ rot


def apply_mueller(m, s) -> np.ndarray:
    """Apply a Mueller matrix: ``s_out = M @ s_in`` (batched)."""
    return np.einsum("...ij,...j->...i", np.asarray(m, dtype=float), np.asarray(s, dtype=float))


def filter_intensity(s, pol_angle) -> np.ndarray:
    """Intensity after filtering a Stokes vector through a linear polarizer.

    Equals the s0 component of ``linear_polarizer_mueller(pol_angle) @ s``,
    i.e. ``0.5 * (s0 + s1*cos(2a) + s2*sin(2a))``, and agrees with
    :func:`malus_intensity` of the extracted polarization info.
    """
    s = np.asarray(s, dtype=float)
    pol_angle = np.asarray(pol_angle, dtype=float)
    c = np.cos(2.0 * pol_angle)
    sn = np.sin(2.0 * pol_angle)
    return 0.5 * (s[..., 0] + s[..., 1] * c + s[..., 2] * sn)


def stokes_from_quad(i0, i45, i90, i135) -> np.ndarray:
    """Stokes vector from intensities filtered at 0/45/90/135 degrees."""
    i0 = np.asarray(i0, dtype=float)
    i45 = np.asarray(i45, dtype=float)
    i90 = np.asarray(i90, dtype=float)
    i135 = np.asarray(i135, dtype=float)
    for name, arr in (("i0", i0), ("i45", i45), ("i90", i90), ("i135", i135)):
        if np.any(arr < 0):
            raise ValueError(f"{name} must be non-negative")
    return stokes_vector(i0 + i90, i0 - i90, i45 - i135, np.zeros_like(i0))


def solve_polarizer_angle_closed_form(s, observed: float, tol: float = 1e-9) -> np.ndarray:
    """Polarizer angles in [0, pi) consistent with one filtered observation.

    Inverts the Malus form for a single Stokes vector. Generically two
    angles fit; at an extremum of the sinusoid they coincide and one is
    returned.

    Raises :class:`UnconstrainedAngleError` when the light is unpolarized
    (any angle fits) and :class:`InconsistentObservationError` when the
    observation falls outside ``[I_un(1-dop), I_un(1+dop)]`` beyond tol.
    """
    info = extract_polarization_info(np.asarray(s, dtype=float))
    i_un = float(info.unpolarized_intensity)
    dop = float(info.dop)
    aop = float(info.aop)
    if dop <= 0.0:
        raise UnconstrainedAngleError("degree of polarization is zero; any angle fits")
    u = (float(observed) / i_un - 1.0) / dop
    if abs(u) > 1.0 + tol:
        raise InconsistentObservationError(
            f"observed intensity {observed} outside feasible band "
            f"[{i_un * (1 - dop)}, {i_un * (1 + dop)}]"
        )
    u = min(1.0, max(-1.0, u))
    half = 0.5 * np.arccos(u)
    a1 = (aop - half) % np.pi
    a2 = (aop + half) % np.pi
    if np.isclose(a1, a2, atol=1e-12) or np.isclose(abs(a1 - a2), np.pi, atol=1e-12):
        return np.array([min(a1, a2) if np.isclose(abs(a1 - a2), np.pi, atol=1e-12) else a1])
    return np.array(sorted((a1, a2)))
