import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tswls import NoiseModel, default_scenario
from tswls.experiments import (AllTrialsFailed, SweepConfig, read_csv, run_point, run_sweep,
                               snr_to_sigmas, write_csv, CSV_COLUMNS)


def test_snr_mapping():
    ref = NoiseModel.isotropic(1e-2, 1e-1, 3)
    assert np.array_equal(snr_to_sigmas(0, ref).sigmas, ref.sigmas)
    np.testing.assert_allclose(snr_to_sigmas(20, ref).sigmas, 0.1 * ref.sigmas, rtol=1e-15)
    np.testing.assert_allclose(snr_to_sigmas(-30, ref).sigmas, 10**1.5 * ref.sigmas, rtol=1e-15)
    with pytest.raises(ValueError):
        snr_to_sigmas(0, NoiseModel.isotropic(0, 1, 3))


def test_zero_noise_point():
    sc = default_scenario()
    r = run_point(sc, NoiseModel.isotropic(0, 0, 3), 20, 1, ("tswls", "geometry"))
    assert r["tswls"].mse < 1e-16 and r["geometry"].mse < 1e-16
    assert r["tswls"].failures == 0


def test_single_trial_mse_is_squared_error():
    from tswls import estimate, true_parameters
    from tswls.measurement import draw_errors, perturb, trial_rng

    sc = default_scenario()
    nm = NoiseModel.isotropic(1e-2, 1e-2, 3)
    r = run_point(sc, nm, 1, 5, stream=(9,))["tswls"]
    z = draw_errors(nm, trial_rng(5, 9, 0))
    q = estimate(perturb(true_parameters(sc), z), sc, nm).q_hat
    assert r.mse == pytest.approx(np.sum((q - sc.mu) ** 2), rel=1e-9)
    np.testing.assert_allclose(r.bias, q - sc.mu, rtol=1e-9)
    assert math.isnan(r.mse_se)


def test_doubling_trials_is_consistent():
    sc = default_scenario()
    nm = NoiseModel.isotropic(1e-2, 1e-2, 3)
    a = run_point(sc, nm, 5000, 3)["tswls"]
    b = run_point(sc, nm, 10000, 3)["tswls"]
    assert abs(a.mse - b.mse) < 5 * a.mse_se


def test_variance_decomposition():
    sc = default_scenario()
    r = run_point(sc, NoiseModel.isotropic(3e-2, 1e-2, 3), 3000, 2)["tswls"]
    assert r.mse >= np.sum(np.square(r.bias)) - 3 * r.mse_se


def test_parallel_equals_serial_and_replay():
    sc = default_scenario()
    nm = NoiseModel.isotropic(1e-2, 1e-2, 3)
    a = run_point(sc, nm, 9000, 4, ("tswls", "geometry"), threads=1)
    b = run_point(sc, nm, 9000, 4, ("tswls", "geometry"), threads=3)
    c = run_point(sc, nm, 9000, 4, ("tswls", "geometry"), threads=1)
    assert a == b == c


def test_reordering_points_keeps_results():
    base = dict(axis="sigma_a", sigma_t=1e-2, ris_subsets=[2, 3], trials=300, seed=1, algorithms=["tswls", "geometry"])
    a = run_sweep(SweepConfig(values=[1e-2, 1e-3], **base))
    b = run_sweep(SweepConfig(values=[1e-3, 1e-2], **base))
    key = lambda r: (r.n_ris, r.axis_value, r.algorithm)
    assert sorted(a, key=key) == sorted(b, key=key)
    assert len(a) == 2 * 2 * 2


def test_bias_validation_attaches_theory():
    cfg = SweepConfig(axis="sigma_t", values=[1e-2], trials=50, bias_validation=True, algorithms=["tswls", "geometry"])
    tswls, geo = run_sweep(cfg)
    assert tswls.theo_bias is not None and len(tswls.theo_bias) == 3
    assert geo.theo_bias is None


def test_all_failed_raises():
    sc = default_scenario()
    nm = NoiseModel.isotropic(1e-2, 1e-2, 3)
    from tswls.estimator import EstimatorConfig

    # one solve can never confirm convergence, so every trial counts as failed
    with pytest.raises(AllTrialsFailed):
        run_point(sc, nm, 10, 0, est_config=EstimatorConfig(max_iters=1))


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(axis="sigma_a", values=[])
    with pytest.raises(ValueError):
        SweepConfig(axis="sigma_a", values=[-1.0])
    with pytest.raises(ValueError):
        SweepConfig(axis="bogus", values=[1.0])
    with pytest.raises(ValueError):
        SweepConfig(axis="sigma_a", values=[1.0], trials=0)
    with pytest.raises(ValueError):
        SweepConfig(axis="sigma_a", values=[1.0], algorithms=["chan"])
    SweepConfig(axis="snr_db", values=[-30.0, 0.0])
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"axis": "sigma_a", "values": [1.0]})  # no schema version
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"schema_version": 1, "axis": "sigma_a", "values": [1.0], "typo": 3})


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(st.tuples(finite, finite, finite, finite), min_size=1, max_size=4))
def test_csv_round_trip_is_exact(tmp_path_factory, vals):
    from tswls.experiments import SweepResult

    rs = [SweepResult("sigma_a", v[0], 3, "tswls", 10, abs(v[1]), (v[2], v[3], v[0]), (v[1], v[2], v[3]),
                      0.5, 1, v[3], (v[0], v[1], v[2]), v[2], 2.5, 4) for v in vals]
    rs.append(SweepResult("snr_db", -30.0, 2, "geometry", 10, 1.0, (0.1, 0.2, 0.3), None, 0.0, 0))
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    write_csv(rs, path)
    back = read_csv(path)
    assert [r.to_row() for r in back] == [r.to_row() for r in rs]
    assert back[0] == rs[0]
    assert path.read_text().splitlines()[0].split(",")[:14] == CSV_COLUMNS[:14]
