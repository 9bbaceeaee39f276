import math

import numpy as np
import pytest
from scipy import integrate

from spsansatz.errors import CapacityError, ConfigError
from spsansatz.experiments import (
    GeometrySpec,
    StatScanConfig,
    SweepConfig,
    entropy_typicality_scan,
    gradient_variance_scan,
    ground_state_sweep,
    loglog_slope,
    norm_histogram,
    norm_samples,
    norm_statistics,
    observable_variance_scan,
    parse_sweep_rows,
    slopes_by_L,
    variational_violation,
    write_scan,
)
from spsansatz.files import read_csv
from spsansatz.optimizer import TrainSchedule


def test_stat_config_validation():
    with pytest.raises(ConfigError):
        StatScanConfig(L=(4,), M=(0,))
    with pytest.raises(ConfigError):
        StatScanConfig(L=(4,), M=(2,), samples=1)
    with pytest.raises(ConfigError):
        StatScanConfig(L=(4,), M=(2,), site=4)
    assert StatScanConfig(L=7, M=[2, 3]).cells() == [(7, 2), (7, 3)]


def test_small_L_norm_variance_closed_form():
    row = norm_statistics(StatScanConfig(L=(4,), M=(2,), samples=100_000, seed=1))[0]
    assert row["predicted_var"] == pytest.approx(8 / 45 + 2 / (9 * 16))
    assert abs(row["var"] / row["predicted_var"] - 1) <= 0.25
    assert abs(row["mean"] - 2 / 3) <= 3 * row["std_error"]


def test_norm_samples_independent_of_chunking(monkeypatch):
    import spsansatz.experiments as ex

    cfg = StatScanConfig(L=(5,), M=(3,), samples=50, seed=2)
    a = norm_samples(cfg, 5, 3)
    monkeypatch.setattr(ex, "CHUNK_ELEMENTS", 45 * 7)
    b = norm_samples(cfg, 5, 3)
    assert np.array_equal(a, b)
    hist = norm_histogram(a, bins=5)
    assert sum(h["count"] for h in hist) == 50


def test_single_branch_sigma_x_variance():
    # Z = c^2 and <X> = sin(2 theta); Var over theta ~ U(-pi/2, pi/2)
    mean_sq, _ = integrate.quad(lambda t: np.sin(2 * t) ** 2 / np.pi, -np.pi / 2, np.pi / 2)
    row = observable_variance_scan(StatScanConfig(L=(6,), M=(1,), samples=20_000))[0]
    assert mean_sq == pytest.approx(0.5)
    assert abs(row["var"] / mean_sq - 1) <= 0.05


def test_entropy_zero_for_single_branch():
    row = entropy_typicality_scan(StatScanConfig(L=(6,), M=(1,), samples=200))[0]
    assert row["max_S2"] <= 1e-12 and math.isnan(row["min_rel_gap"])


def test_entropy_below_bound_small():
    row = entropy_typicality_scan(StatScanConfig(L=(8,), M=(4,), samples=300))[0]
    assert row["max_S2"] < row["bound"] and row["min_rel_gap"] > 0


def test_gradient_locality_single_branch():
    row = gradient_variance_scan(StatScanConfig(L=(6,), M=(1,), samples=100))[0]
    assert row["max_off_site_dtheta"] == 0.0


def test_scan_rows_are_worker_independent():
    cfg = StatScanConfig(L=(4, 5), M=(2, 3), samples=30, seed=9)
    assert observable_variance_scan(cfg, workers=1) == observable_variance_scan(cfg, workers=2)


def test_slopes():
    assert loglog_slope([1, 2, 4], [1, 0.25, 1 / 16]) == pytest.approx(-2.0)
    rows = [{"L": 3, "M": m, "v": 1 / m} for m in (2, 4, 8)] + [{"L": 5, "M": 2, "v": 1.0}]
    assert slopes_by_L(rows, "v") == pytest.approx({3: -1.0})


def test_geometry_spec_builds():
    assert GeometrySpec("chain", L=5, h_x=1.0).build().n_edges == 4
    assert GeometrySpec("cubic", dims=(2, 2, 3)).build().L == 12
    assert GeometrySpec("long-range", L=4, alpha=0.0).build().n_edges == 6
    assert GeometrySpec("random", L=6, p=1.0).build().n_edges == 15
    for bad in (dict(kind="ring"), dict(kind="chain"), dict(kind="long-range", L=4), dict(kind="random", L=4)):
        with pytest.raises(ConfigError):
            GeometrySpec(**bad)


def test_sweep_config_checks():
    with pytest.raises(CapacityError):
        SweepConfig(GeometrySpec("chain", L=24), M=(1,))
    with pytest.raises(ConfigError):
        SweepConfig(GeometrySpec("chain", L=4), M=(1,), parameter="alpha")
    cfg = SweepConfig(GeometrySpec("chain", L=4, h_x=0.3), M=(1, 2), reference="-1.5")
    assert cfg.reference == -1.5 and cfg.cells() == [(0.3, 1), (0.3, 2)]


def test_variational_violation_flag():
    assert not variational_violation(-9.0, -10.0)
    assert not variational_violation(-10.0 - 1e-12, -10.0)
    assert variational_violation(-10.1, -10.0)


def test_sweep_resume_and_monotone_in_M(tmp_path):
    cfg = SweepConfig(GeometrySpec("chain", L=6, h_z=0.25), M=(1, 2, 4), values=(0.5, 1.5),
                      schedule=TrainSchedule(epochs=3000, restarts=3))
    rows = ground_state_sweep(cfg)
    assert [(r["value"], r["M"]) for r in rows] == cfg.cells()
    assert all(r["variational_violation"] == 0 for r in rows)
    for v in (0.5, 1.5):
        errs = [abs(r["rel_error"]) for r in rows if r["value"] == v]
        assert all(b <= a for a, b in zip(errs, errs[1:])), errs
    path = tmp_path / "sweep.csv"
    write_scan(path, list(rows[0]), rows, cfg, "gs-sweep")
    back = parse_sweep_rows(path)
    calls = []
    again = ground_state_sweep(cfg, resume_rows=back[:4], on_row=calls.append)
    assert again == rows and len(calls) == 2
    assert read_csv(path)[0]["parameter"] == "h_x"
    assert path.with_suffix(".json").exists()
