import numpy as np
from hypothesis import given, strategies as st

from conftest import random_scenario
from tswls import Measurements, NoiseModel, default_scenario, geometry_estimate, synthesize, true_parameters
from tswls.baseline import geometry_estimate_batch


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_zero_noise_exact(seed, m):
    sc = random_scenario(np.random.default_rng(seed), m)
    q = geometry_estimate(Measurements.exact(true_parameters(sc)), sc)
    assert np.linalg.norm(q - sc.mu) < 1e-9 * max(1, np.linalg.norm(sc.mu))


def test_ignores_range_differences():
    sc = default_scenario().subset(2)
    tp = true_parameters(sc)
    m = synthesize(tp, NoiseModel.isotropic(1e-2, 1e-2, 2), 1)
    other = Measurements(m.theta_hat, m.phi_hat, m.rb_hat + 100.0)
    assert np.array_equal(geometry_estimate(m, sc), geometry_estimate(other, sc))


def test_batch_matches_single():
    sc = default_scenario()
    tp = true_parameters(sc)
    nm = NoiseModel.isotropic(5e-2, 1e-2, 3)
    ms = [synthesize(tp, nm, [3, i]) for i in range(50)]
    qb = geometry_estimate_batch(np.array([m.theta_hat for m in ms]), np.array([m.phi_hat for m in ms]), sc)
    for i, m in enumerate(ms):
        np.testing.assert_allclose(qb[i], geometry_estimate(m, sc), rtol=1e-10, atol=1e-10)
