import numpy as np
import pytest

from stiffcal.compensator import CompensatorGeometry
from stiffcal.errors import DegenerateGeometryError
from stiffcal.geometry_id import (
    MarkerDataset,
    confidence_intervals_geometry,
    identify_compensator_geometry,
    load_marker_csv,
    residual_noise_sigma,
)
from stiffcal.sim import simulate_geometry_dataset

GEOM = CompensatorGeometry(L_mm=185.0, ax_mm=25.0, ay_mm=695.0)
SWEEP = np.radians(np.linspace(-140.0, -0.01, 8))


def test_noiseless_round_trip():
    ds = simulate_geometry_dataset(GEOM, SWEEP, p2_xy=(0.16, 1.84),
                                   crank_phase_rad=0.3, angle_sign=-1)
    est = identify_compensator_geometry(ds)
    assert est.L_mm == pytest.approx(185.0, abs=1e-9)
    assert est.ax_mm == pytest.approx(25.0, abs=1e-9)
    assert est.ay_mm == pytest.approx(695.0, abs=1e-9)
    assert np.allclose(est.p2, [0.16, 1.84], atol=1e-9)
    assert est.crank_fit.angle_sign == -1


def test_round_trip_robust_to_phase_and_sign():
    for sign in (1, -1):
        for phase in (0.0, 1.1, -2.0):
            ds = simulate_geometry_dataset(GEOM, SWEEP, crank_phase_rad=phase,
                                           angle_sign=sign)
            est = identify_compensator_geometry(ds)
            assert est.L_mm == pytest.approx(185.0, abs=1e-8)
            assert est.ax_mm == pytest.approx(25.0, abs=1e-7)
            assert est.ay_mm == pytest.approx(695.0, abs=1e-7)


def test_noisy_recovery_close():
    ds = simulate_geometry_dataset(GEOM, SWEEP, noise_mm=0.05, seed=11)
    est = identify_compensator_geometry(ds)
    assert est.L_mm == pytest.approx(185.0, abs=0.2)
    assert est.ax_mm == pytest.approx(25.0, abs=2.0)
    assert est.ay_mm == pytest.approx(695.0, abs=2.0)


def test_needs_two_satellites():
    ds = simulate_geometry_dataset(GEOM, SWEEP)
    one = MarkerDataset(q2_rad=ds.q2_rad, crank=ds.crank,
                        satellites=ds.satellites[:1])
    with pytest.raises(DegenerateGeometryError, match="satellite"):
        identify_compensator_geometry(one)


class TestDatasetValidation:
    def test_three_distinct_angles_required(self):
        q = np.radians([0.0, 0.0, -60.0])
        pts = np.zeros((3, 2))
        with pytest.raises(ValueError, match="3 distinct joint angles"):
            MarkerDataset(q2_rad=q, crank=pts, satellites=(pts,))

    def test_span_guard(self):
        q = np.radians([0.0, -5.0, -10.0, -20.0])
        pts = np.zeros((4, 2))
        with pytest.raises(ValueError, match="span below 30 degrees"):
            MarkerDataset(q2_rad=q, crank=pts, satellites=(pts,))

    def test_row_alignment(self):
        q = np.radians([0.0, -60.0, -120.0])
        with pytest.raises(ValueError, match="one row per angle"):
            MarkerDataset(q2_rad=q, crank=np.zeros((4, 2)), satellites=())

    def test_satellite_shape_mismatch(self):
        q = np.radians([0.0, -60.0, -120.0])
        with pytest.raises(ValueError, match="satellite track 0"):
            MarkerDataset(q2_rad=q, crank=np.zeros((3, 2)),
                          satellites=(np.zeros((3, 3)),))

    def test_non_finite_rejected(self):
        q = np.radians([0.0, -60.0, -120.0])
        crank = np.zeros((3, 2))
        crank[1, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            MarkerDataset(q2_rad=q, crank=crank, satellites=())


class TestCsv:
    def test_reference_table_loads(self, table1_path):
        ds = load_marker_csv(table1_path)
        assert ds.n_poses == 6
        assert len(ds.satellites) == 2
        assert ds.q2_rad[0] == pytest.approx(np.radians(-0.01))
        assert ds.crank.shape == (6, 2)

    def test_z_columns_kept(self, tmp_path):
        p = tmp_path / "sweep.csv"
        p.write_text(
            "q2_deg,P1_x,P1_y,P1_z,P01_x,P01_y,P01_z\n"
            "0,1,0,5,2,0,5\n-60,0.5,0.866,5,1,1.7,5\n-120,-0.5,0.866,5,-1,1.7,5\n")
        ds = load_marker_csv(p)
        assert ds.crank.shape == (3, 3)
        assert np.allclose(ds.crank[:, 2], 5.0)

    def test_missing_crank_columns(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("q2_deg,P01_x,P01_y\n0,1,2\n-60,2,3\n-120,3,4\n")
        with pytest.raises(ValueError, match="P1_x/P1_y"):
            load_marker_csv(p)

    def test_missing_angle_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("angle,P1_x,P1_y\n0,1,2\n")
        with pytest.raises(ValueError, match="q2_deg"):
            load_marker_csv(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(ValueError, match="empty file"):
            load_marker_csv(p)


class TestConfidence:
    def test_zero_noise_vanishing_width(self):
        ds = simulate_geometry_dataset(GEOM, SWEEP)
        est = identify_compensator_geometry(ds)
        ci = confidence_intervals_geometry(ds, est, n_samples=16, seed=0)
        assert ci.halfwidth3_L_mm < 1e-9
        assert ci.halfwidth3_ax_mm < 1e-9
        assert ci.sigma_crank_mm < 1e-9

    def test_sigma_estimates_track_injected_noise(self):
        ds = simulate_geometry_dataset(GEOM, np.radians(np.linspace(-140, 0, 40)),
                                       noise_mm=0.05, seed=2)
        est = identify_compensator_geometry(ds)
        s_crank, s_sat = residual_noise_sigma(ds, est)
        assert 0.02 < s_crank < 0.09
        assert 0.02 < s_sat < 0.09

    def test_reproducible_and_order_free(self):
        ds = simulate_geometry_dataset(GEOM, SWEEP, noise_mm=0.05, seed=4)
        est = identify_compensator_geometry(ds)
        a = confidence_intervals_geometry(ds, est, n_samples=24, seed=7)
        b = confidence_intervals_geometry(ds, est, n_samples=24, seed=7)
        assert a.halfwidth3_L_mm == b.halfwidth3_L_mm
        assert a.halfwidth3_ay_mm == b.halfwidth3_ay_mm
        c = confidence_intervals_geometry(ds, est, n_samples=24, seed=8)
        assert a.halfwidth3_L_mm != c.halfwidth3_L_mm

    def test_coverage_small(self):
        # quick sanity check; the full 200-trial version runs in acceptance
        hits = 0
        trials = 20
        for t in range(trials):
            ds = simulate_geometry_dataset(GEOM, SWEEP, noise_mm=0.05,
                                           seed=100 + t)
            est = identify_compensator_geometry(ds)
            ci = confidence_intervals_geometry(ds, est, n_samples=60,
                                               seed=200 + t)
            ok = (abs(est.L_mm - 185.0) <= ci.halfwidth3_L_mm
                  and abs(est.ax_mm - 25.0) <= ci.halfwidth3_ax_mm
                  and abs(est.ay_mm - 695.0) <= ci.halfwidth3_ay_mm)
            hits += ok
        assert hits >= trials - 2


def test_reference_table_regression(table1_path):
    """Frozen values for the shipped sweep table."""
    ds = load_marker_csv(table1_path)
    est = identify_compensator_geometry(ds)
    assert est.L_mm == pytest.approx(184.719478, abs=1e-5)
    assert est.ax_mm == pytest.approx(685.993407, abs=1e-5)
    assert est.ay_mm == pytest.approx(119.411819, abs=1e-5)
    assert np.allclose(est.p2, [0.160400, 1.841212], atol=1e-5)
    assert est.crank_fit.angle_sign == -1
    assert est.crank_fit.residual_rms == pytest.approx(0.064963, abs=1e-5)
