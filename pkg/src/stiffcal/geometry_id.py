"""Compensator linkage geometry from tracker marker sweeps.

The experiment: sweep joint 2 through a set of angles and record, at each
stop, the crank-pin marker P1 (rides on link 2, circles the joint-2 axis
point P2) and at least two satellite markers P0k fixed to the spring-side
body (they trace concentric arcs about the spring anchor P0).  The crank
radius is ``L = |P1 P2|`` and the anchor-to-crank vector ``(ax, ay) =
P2 - P0`` completes the linkage geometry.

Tracker coordinates: the fit plane is x/y (a z column, if present, is
dropped for the crank fit per the planar linkage assumption).
"""
from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circle_fit import CircleFit, ConcentricFit, fit_circle_procrustes, fit_concentric_arcs
from .errors import DegenerateGeometryError

_MIN_SPAN_RAD = np.deg2rad(30.0)


@dataclass
class MarkerDataset:
    """One joint-2 sweep: angles plus crank and satellite marker tracks.

    ``crank`` is (m, d) with d = 2 or 3; ``satellites`` is a tuple of (m, d)
    arrays, one per satellite marker, row-aligned with ``q2_rad``.
    """

    q2_rad: np.ndarray
    crank: np.ndarray
    satellites: tuple

    def __post_init__(self):
        self.q2_rad = np.asarray(self.q2_rad, dtype=float)
        self.crank = np.asarray(self.crank, dtype=float)
        self.satellites = tuple(np.asarray(s, dtype=float) for s in self.satellites)
        m = self.q2_rad.shape[0]
        if self.q2_rad.ndim != 1:
            raise ValueError("q2_rad must be 1-D")
        if self.crank.ndim != 2 or self.crank.shape[0] != m:
            raise ValueError("crank track must have one row per angle")
        for i, s in enumerate(self.satellites):
            if s.shape != self.crank.shape:
                raise ValueError(f"satellite track {i} is inconsistent with the crank track")
        if not np.isfinite(self.q2_rad).all() or not np.isfinite(self.crank).all() \
                or any(not np.isfinite(s).all() for s in self.satellites):
            raise ValueError("marker dataset contains non-finite values")
        if np.unique(np.round(self.q2_rad, 9)).size < 3:
            raise ValueError("need at least 3 distinct joint angles")
        if np.ptp(self.q2_rad) < _MIN_SPAN_RAD:
            raise ValueError("joint-angle span below 30 degrees: geometry is ill-conditioned")

    @property
    def n_poses(self) -> int:
        return int(self.q2_rad.shape[0])


@dataclass(frozen=True)
class CompensatorGeometryEstimate:
    """Identified linkage geometry with the underlying fits attached."""

    L_mm: float
    ax_mm: float
    ay_mm: float
    p2: np.ndarray
    p0: np.ndarray
    crank_fit: CircleFit
    satellite_fit: ConcentricFit


@dataclass(frozen=True)
class GeometryCI:
    """Monte-Carlo +-3 sigma half-widths for the identified geometry."""

    halfwidth3_L_mm: float
    halfwidth3_ax_mm: float
    halfwidth3_ay_mm: float
    sigma_crank_mm: float
    sigma_satellite_mm: float
    n_samples: int
    seed: int


def load_marker_csv(path: str | os.PathLike) -> MarkerDataset:
    """Read a sweep CSV: ``q2_deg, P1_x, P1_y[, P1_z], P01_x, ...``.

    Any number of satellite groups ``P0k_*`` is accepted; angles are stored
    in radians internally.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=float)
    if table.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    cols = {name: table[:, i] for i, name in enumerate(header)}
    if "q2_deg" not in cols:
        raise ValueError(f"{path}: missing column q2_deg")

    def group(prefix):
        names = [f"{prefix}_x", f"{prefix}_y"]
        if f"{prefix}_z" in cols:
            names.append(f"{prefix}_z")
        if not all(n in cols for n in names[:2]):
            return None
        return np.column_stack([cols[n] for n in names])

    crank = group("P1")
    if crank is None:
        raise ValueError(f"{path}: missing P1_x/P1_y columns")
    sat_names = sorted({m.group(1) for h in header
                        for m in [re.match(r"^(P0\d+)_[xyz]$", h)] if m})
    satellites = [group(n) for n in sat_names]
    return MarkerDataset(q2_rad=np.deg2rad(cols["q2_deg"]), crank=crank,
                         satellites=tuple(s for s in satellites if s is not None))


def identify_compensator_geometry(dataset: MarkerDataset,
                                  angle_sign="auto") -> CompensatorGeometryEstimate:
    """Two-stage linkage geometry identification.

    Stage 1 fits the crank circle with the angle-annotated fit (radius L,
    centre P2); stage 2 fits the satellite arcs for the shared anchor P0.
    In 3-D input the anchor's x/y components are used for the vector.
    """
    if len(dataset.satellites) < 2:
        raise DegenerateGeometryError(
            "need at least 2 satellite marker tracks to locate the spring anchor")
    crank_fit = fit_circle_procrustes(dataset.crank, dataset.q2_rad, angle_sign=angle_sign)
    sat_fit = fit_concentric_arcs(dataset.satellites)
    p2 = crank_fit.center
    p0 = sat_fit.center
    a_vec = p2 - p0[:2]
    return CompensatorGeometryEstimate(
        L_mm=crank_fit.radius, ax_mm=float(a_vec[0]), ay_mm=float(a_vec[1]),
        p2=p2, p0=p0, crank_fit=crank_fit, satellite_fit=sat_fit)


def _clean_tracks(dataset: MarkerDataset, est: CompensatorGeometryEstimate):
    """Model-implied noise-free marker tracks for parametric resampling."""
    fit = est.crank_fit
    u = np.column_stack([np.cos(fit.angle_sign * dataset.q2_rad),
                         np.sin(fit.angle_sign * dataset.q2_rad)])
    crank_clean = fit.radius * (u @ fit.R.T) + fit.center
    sats_clean = []
    p0 = est.satellite_fit.center
    for arr, Rj in zip(dataset.satellites, est.satellite_fit.radii):
        d = arr - p0
        r = np.linalg.norm(d, axis=1, keepdims=True)
        sats_clean.append(p0 + Rj * d / r)
    return crank_clean, sats_clean


def residual_noise_sigma(dataset: MarkerDataset,
                         est: CompensatorGeometryEstimate) -> tuple[float, float]:
    """Per-coordinate noise levels implied by the two fits.

    Returned as ``(sigma_crank, sigma_satellite)``.  Crank residuals are full
    planar vectors (2m values, 4 fitted parameters); satellite residuals are
    radial only (one value per point; centre plus one radius per set fitted).
    Under isotropic noise both kinds have per-coordinate variance sigma^2,
    but the two marker groups are allowed different noise levels -- on real
    tracker data the satellite body often jitters more than the crank pin.
    """
    m = dataset.n_poses
    u = np.column_stack([np.cos(est.crank_fit.angle_sign * dataset.q2_rad),
                         np.sin(est.crank_fit.angle_sign * dataset.q2_rad)])
    crank_model = est.crank_fit.radius * (u @ est.crank_fit.R.T) + est.crank_fit.center
    F_crank = float(((dataset.crank[:, :2] - crank_model) ** 2).sum())
    sigma_crank = float(np.sqrt(F_crank / max(2 * m - 4, 1)))
    p0 = est.satellite_fit.center
    dim = dataset.satellites[0].shape[1]
    F_rad = 0.0
    n_rad = 0
    for arr, Rj in zip(dataset.satellites, est.satellite_fit.radii):
        d = np.linalg.norm(arr - p0, axis=1)
        F_rad += float(((d - Rj) ** 2).sum())
        n_rad += arr.shape[0]
    dof_rad = max(n_rad - dim - len(dataset.satellites), 1)
    return sigma_crank, float(np.sqrt(F_rad / dof_rad))


def confidence_intervals_geometry(dataset: MarkerDataset,
                                  estimate: CompensatorGeometryEstimate,
                                  n_samples: int = 200, seed: int = 0) -> GeometryCI:
    """Parametric residual-resampling +-3 sigma intervals for (L, ax, ay).

    Noise-free tracks implied by the point estimate are re-noised with the
    pooled residual sigma and refit ``n_samples`` times; each sample draws
    from its own seeded generator so runs are reproducible and order
    independent.  Zero residuals yield zero-width intervals.
    """
    s_crank, s_sat = residual_noise_sigma(dataset, estimate)
    if (s_crank == 0.0 and s_sat == 0.0) or n_samples < 2:
        return GeometryCI(0.0, 0.0, 0.0, s_crank, s_sat, n_samples, seed)
    crank_clean, sats_clean = _clean_tracks(dataset, estimate)
    sign = estimate.crank_fit.angle_sign
    out = np.empty((n_samples, 3))
    for i in range(n_samples):
        rng = np.random.default_rng((seed, i))
        crank_i = crank_clean + rng.normal(0.0, s_crank, crank_clean.shape)
        sats_i = [s + rng.normal(0.0, s_sat, s.shape) for s in sats_clean]
        cf = fit_circle_procrustes(crank_i, dataset.q2_rad, angle_sign=sign)
        sf = fit_concentric_arcs(sats_i)
        a_vec = cf.center - sf.center[:2]
        out[i] = (cf.radius, a_vec[0], a_vec[1])
    sd = out.std(axis=0, ddof=1)
    return GeometryCI(float(3.0 * sd[0]), float(3.0 * sd[1]), float(3.0 * sd[2]),
                      s_crank, s_sat, n_samples, seed)
