"""Spring gravity-compensator mechanics for the second joint.

The compensator is a planar slider-crank: a crank pin P1 rides on link 2 and
circles the joint-2 axis point P2 with radius ``L``; a linear spring of
stiffness ``Kc`` and free length ``s0`` spans from a fixed anchor P0 to P1.
With ``a = |P0 P2|`` and ``alpha`` the direction angle of the anchor-to-crank
vector ``(ax, ay)``, the spring span is

    s(q2)^2 = a^2 + L^2 + 2 a L cos(alpha - q2)

All lengths in mm, stiffness in N/mm, torques in N*mm, angles in rad.

Sign convention: ``compensator_torque`` returns the torque the spring applies
*to* the joint, i.e. minus the gradient of the spring energy with respect to
q2.  That choice makes torque, energy and the equivalent stiffness mutually
consistent: K_eq - K0 = -dM/dq2 = d^2 E/dq2^2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CompensatorGeometry:
    """Linkage geometry: crank radius and anchor-to-crank vector."""

    L_mm: float
    ax_mm: float
    ay_mm: float

    def __post_init__(self):
        if not self.L_mm > 0.0:
            raise ValueError("L_mm must be > 0")
        if not self.a_mm > self.L_mm:
            raise ValueError("anchor distance a must exceed crank radius L "
                             "(spring anchor outside the crank circle)")

    @property
    def a_mm(self) -> float:
        return float(np.hypot(self.ax_mm, self.ay_mm))

    @property
    def alpha_rad(self) -> float:
        return float(np.arctan2(self.ay_mm, self.ax_mm))


@dataclass(frozen=True)
class CompensatorElastics:
    """Spring constants: stiffness (N/mm) and free length (mm)."""

    Kc_N_per_mm: float
    s0_mm: float

    def __post_init__(self):
        if not self.Kc_N_per_mm > 0.0:
            raise ValueError("Kc_N_per_mm must be > 0")
        if self.s0_mm < 0.0:
            raise ValueError("s0_mm must be >= 0")


@dataclass(frozen=True)
class CompensatorParams:
    """Full compensator description plus the joint-2 coupling convention.

    ``q2_sign`` flips the joint angle fed into the linkage formulas for robots
    whose controller counts joint 2 opposite to the linkage convention.
    """

    geometry: CompensatorGeometry
    elastics: CompensatorElastics
    q2_sign: float = 1.0

    def __post_init__(self):
        if self.q2_sign not in (-1.0, 1.0, -1, 1):
            raise ValueError("q2_sign must be +1 or -1")

    def effective_q2(self, q2_rad: float) -> float:
        return self.q2_sign * q2_rad


def _gamma(geom: CompensatorGeometry, q2_rad) -> np.ndarray:
    return geom.alpha_rad - np.asarray(q2_rad, dtype=float)


def spring_span(geom: CompensatorGeometry, q2_rad):
    """Anchor-to-pin distance s(q2) from the linkage triangle (cosine law)."""
    a, L = geom.a_mm, geom.L_mm
    g = _gamma(geom, q2_rad)
    s2 = a * a + L * L + 2.0 * a * L * np.cos(g)
    return np.sqrt(s2)


def spring_length(params: CompensatorParams, q2_rad):
    """Spring span s(q2) honouring the params' q2 sign convention."""
    return spring_span(params.geometry, params.q2_sign * np.asarray(q2_rad, dtype=float))


def spring_angle(params: CompensatorParams, q2_rad):
    """Angle between the spring line and the anchor-crank base line.

    sin(phi) = (a/s) sin(alpha - q2); the argument is always within [-1, 1]
    because s^2 - a^2 sin^2(gamma) = (a cos(gamma) + L)^2 >= 0.
    """
    geom = params.geometry
    q2 = params.q2_sign * np.asarray(q2_rad, dtype=float)
    s = spring_span(geom, q2)
    arg = geom.a_mm * np.sin(_gamma(geom, q2)) / s
    return np.arcsin(np.clip(arg, -1.0, 1.0))


def spring_energy(params: CompensatorParams, q2_rad):
    """Elastic energy 0.5 * Kc * (s - s0)^2 stored in the spring (N*mm)."""
    el = params.elastics
    s = spring_length(params, q2_rad)
    return 0.5 * el.Kc_N_per_mm * (s - el.s0_mm) ** 2


def compensator_torque(params: CompensatorParams, q2_rad):
    """Torque (N*mm) the compensator applies about the joint-2 axis.

    Equals minus the energy gradient: -Kc (1 - s0/s) a L sin(alpha - q2),
    zero whenever the crank crosses the base line (q2 = alpha) or the spring
    is at free length (s = s0).
    """
    geom, el = params.geometry, params.elastics
    q2 = params.q2_sign * np.asarray(q2_rad, dtype=float)
    s = spring_span(geom, q2)
    g = _gamma(geom, q2)
    m = -el.Kc_N_per_mm * (1.0 - el.s0_mm / s) * geom.a_mm * geom.L_mm * np.sin(g)
    # An outer sign flip maps the torque back to the controller's convention.
    return params.q2_sign * m


def eta(geom: CompensatorGeometry, s0_mm: float, q2_rad):
    """Dimensionless stiffness kernel of the linkage.

    eta = (s0/s) * ((aL/s^2) sin^2(gamma) + cos(gamma)) - cos(gamma) with
    gamma = alpha - q2; the compensator adds ``Kc * a * L * eta`` to the
    joint-2 stiffness.  Affine in s0 at fixed q2.
    """
    a, L = geom.a_mm, geom.L_mm
    g = _gamma(geom, q2_rad)
    s = spring_span(geom, q2_rad)
    cg, sg = np.cos(g), np.sin(g)
    return (s0_mm / s) * ((a * L / (s * s)) * sg * sg + cg) - cg


def equivalent_joint_stiffness(params: CompensatorParams, K0_Nmm_per_rad: float, q2_rad):
    """Equivalent rotational stiffness of joint 2 with the compensator engaged.

    K_eq(q2) = K0 + Kc * a * L * eta(q2).  Emits a warning if the result is
    not positive (the joint would be statically unstable there).
    """
    geom, el = params.geometry, params.elastics
    q2 = params.q2_sign * np.asarray(q2_rad, dtype=float)
    k = K0_Nmm_per_rad + el.Kc_N_per_mm * geom.a_mm * geom.L_mm * eta(geom, el.s0_mm, q2)
    if np.any(np.asarray(k) <= 0.0):
        warnings.warn("equivalent joint-2 stiffness is not positive at the "
                      "requested angle(s)", RuntimeWarning, stacklevel=2)
    return k


def eta_curve(geom: CompensatorGeometry, s0_values_mm, q2_grid_rad) -> np.ndarray:
    """Tabulate eta over a q2 grid for several free lengths.

    Returns an array of rows ``(q2_rad, s0_mm, eta)``, grouped by s0 value,
    ready for long-format serialization.
    """
    q2 = np.asarray(q2_grid_rad, dtype=float)
    if q2.size == 0:
        raise ValueError("empty grid")
    rows = []
    for s0 in np.atleast_1d(np.asarray(s0_values_mm, dtype=float)):
        e = eta(geom, float(s0), q2)
        rows.append(np.column_stack([q2, np.full(q2.shape, s0), e]))
    return np.vstack(rows)
