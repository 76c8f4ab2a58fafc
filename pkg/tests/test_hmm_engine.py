import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalcr.emission import EmissionModel, log_density_ratio, log_energy_pdf, sample_energy
from causalcr.hmm_engine import (
    DegenerateComponentError,
    ForwardState,
    baum_welch,
    brute_force_posteriors,
    forward_backward,
    forward_init,
    forward_step,
    llr,
    llr_from_alpha,
    llr_trace,
)
from causalcr.pu_chain import (
    StationaryDistribution,
    TransitionMatrix,
    sample_trace,
    stationary_distribution,
)


def random_instance(rng, n, slow=True):
    while True:
        a01, a10 = rng.uniform(0.005, 0.5, size=2)
        if not slow or a01 + a10 < 1:
            break
    A = TransitionMatrix.from_switching(a01, a10)
    m = EmissionModel.from_snr_db(int(rng.integers(1, 20)), rng.uniform(-10, 10))
    states = sample_trace(A, n, seed=rng).states
    return A, m, sample_energy(m, states, seed=rng)


def forward_sequence(A, m, y):
    s = forward_init(stationary_distribution(A), m, y[0])
    out = [s]
    for v in y[1:]:
        s = forward_step(s, A, m, v)
        out.append(s)
    return out


class TestLlr:
    def test_boundaries(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        assert llr(ForwardState((1.0, 0.0), 0.0, 1), A) == pytest.approx(math.log(0.1 / 0.9))
        assert llr(ForwardState((0.0, 1.0), 0.0, 1), A) == pytest.approx(math.log(0.99 / 0.01))

    def test_uniform_alpha(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        z = llr(ForwardState((0.5, 0.5), 0.0, 1), A)
        assert z == pytest.approx(math.log(0.545 / 0.455), rel=1e-14)
        assert z == pytest.approx(0.1805, abs=1e-4)

    @given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.floats(1e-100, 1e100))
    def test_scale_invariance(self, a0, a1, c):
        A = TransitionMatrix.from_switching(0.2, 0.05)
        assert llr_from_alpha(c * a0, c * a1, A) == pytest.approx(llr_from_alpha(a0, a1, A), abs=1e-12)


class TestForward:
    def test_init_at_crossing_point(self):
        m = EmissionModel(10, 1.0, 2.0)
        # log b1 - log b0 = 0  <=>  y = K log(s1/s0) s0 s1 / (s1 - s0)
        y = 10 * math.log(2.0) * 2.0
        s = forward_init(StationaryDistribution(0.5, 0.5), m, y)
        assert s.alpha_norm == pytest.approx((0.5, 0.5), abs=1e-12)

    def test_init_uninformative_limit(self):
        m = EmissionModel(10, 1.0, 1.0 + 1e-12)
        s = forward_init(StationaryDistribution(1 / 11, 10 / 11), m, 9.0)
        assert s.alpha_norm == pytest.approx((1 / 11, 10 / 11), abs=1e-9)

    def test_init_pinned(self):
        m = EmissionModel(10, 1.0, 2.0)
        pi = StationaryDistribution(1 / 11, 10 / 11)
        s = forward_init(pi, m, 15.0)
        b0 = math.exp(log_energy_pdf(m, 0, 15.0))
        b1 = math.exp(log_energy_pdf(m, 1, 15.0))
        ref = np.array([pi.pi0 * b0, pi.pi1 * b1])
        assert s.alpha_norm == pytest.approx(tuple(ref / ref.sum()), rel=1e-12)
        assert s.log_evidence == pytest.approx(math.log(ref.sum()), rel=1e-12)

    def test_step_is_pure_prediction_when_uninformative(self):
        A = TransitionMatrix.from_switching(0.3, 0.2)
        m = EmissionModel(10, 1.0, 1.0 + 1e-13)
        s = ForwardState((0.7, 0.3), 0.0, 1)
        nxt = forward_step(s, A, m, 8.0)
        assert nxt.alpha_norm == pytest.approx(tuple(np.array([0.7, 0.3]) @ A.as_array()), abs=1e-9)

    def test_memoryless_chain(self):
        A = TransitionMatrix.from_switching(0.5, 0.5)
        m = EmissionModel(10, 1.0, 2.0)
        a = forward_step(ForwardState((0.9, 0.1), 0.0, 1), A, m, 12.0)
        b = forward_step(ForwardState((0.2, 0.8), -5.0, 1), A, m, 12.0)
        assert a.alpha_norm == pytest.approx(b.alpha_norm, abs=1e-14)

    def test_matches_enumeration_over_twelve_steps(self):
        rng = np.random.default_rng(0)
        A, m, y = random_instance(rng, 12)
        z_ref, _, log_ev = brute_force_posteriors(A, m, y)
        seq = forward_sequence(A, m, y)
        np.testing.assert_allclose([llr(s, A) for s in seq], z_ref, atol=1e-9)
        assert seq[-1].log_evidence == pytest.approx(log_ev, abs=1e-9)


class TestLlrTrace:
    def test_single_observation(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        m = EmissionModel(10, 1.0, 2.0)
        s = forward_init(stationary_distribution(A), m, 11.0)
        assert llr_trace(A, m, [11.0]).z[0] == pytest.approx(llr(s, A), abs=1e-13)

    def test_uninformative_limit(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        m = EmissionModel(10, 1.0, 1.0 + 1e-12)
        y = sample_energy(m, np.zeros(500, dtype=np.int8), seed=1)
        np.testing.assert_allclose(llr_trace(A, m, y).z, math.log(10.0), atol=1e-8)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(1, 13))
        A, m, y = random_instance(rng, n)
        z_ref, _, log_ev = brute_force_posteriors(A, m, y)
        tr = llr_trace(A, m, y)
        np.testing.assert_allclose(tr.z, z_ref, atol=1e-9, rtol=0)
        assert tr.log_likelihood == pytest.approx(log_ev, abs=1e-9)

    def test_matches_step_api_over_long_trace(self):
        rng = np.random.default_rng(4)
        A, m, y = random_instance(rng, 2000)
        seq = forward_sequence(A, m, y)
        np.testing.assert_allclose(llr_trace(A, m, y).z, [llr(s, A) for s in seq], atol=1e-9)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 60), st.integers(1, 59))
    @settings(max_examples=40, deadline=None)
    def test_causality(self, seed, n, cut):
        cut = min(cut, n - 1)
        rng = np.random.default_rng(seed)
        A, m, y = random_instance(rng, n)
        np.testing.assert_array_equal(llr_trace(A, m, y[:cut]).z, llr_trace(A, m, y).z[:cut])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_log_odds_decomposition(self, seed):
        rng = np.random.default_rng(seed)
        A, m, y = random_instance(rng, 200)
        tr = llr_trace(A, m, y)
        B = log_density_ratio(m, y)
        np.testing.assert_allclose(tr.log_odds[1:], tr.z[:-1] + B[1:], atol=1e-10, rtol=1e-13)
        seq = forward_sequence(A, m, y[:20])
        for k in range(1, 20):
            a0, a1 = seq[k].alpha_norm
            if min(a0, a1) > 1e-300:
                assert math.log(a1 / a0) == pytest.approx(tr.z[k - 1] + B[k], abs=1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_range_when_slow_switching(self, seed):
        rng = np.random.default_rng(seed)
        A, m, y = random_instance(rng, 300)
        z = llr_trace(A, m, y).z
        lo, hi = math.log(A.a01 / A.a00), math.log(A.a11 / A.a10)
        # open interval in exact arithmetic; saturated slots round onto the ends
        assert np.all(z >= lo - 1e-12) and np.all(z <= hi + 1e-12)

    def test_key_orders_like_z(self):
        rng = np.random.default_rng(9)
        A, m, y = random_instance(rng, 5000)
        tr = llr_trace(A, m, y)
        order = np.argsort(tr.key, kind="stable")
        assert np.all(np.diff(tr.z[order]) >= 0)

    def test_key_orders_like_z_for_fast_switching(self):
        rng = np.random.default_rng(10)
        A = TransitionMatrix.from_switching(0.7, 0.8)
        m = EmissionModel.from_snr_db(10, 0.0)
        y = sample_energy(m, sample_trace(A, 5000, seed=rng).states, seed=rng)
        tr = llr_trace(A, m, y)
        order = np.argsort(tr.key, kind="stable")
        assert np.all(np.diff(tr.z[order]) >= 0)

    def test_no_underflow_on_million_slots(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        m = EmissionModel.from_snr_db(10, 20.0)
        rng = np.random.default_rng(1)
        y = sample_energy(m, sample_trace(A, 1_000_000, seed=rng).states, seed=rng)
        tr = llr_trace(A, m, y)
        assert np.all(np.isfinite(tr.z)) and np.isfinite(tr.log_likelihood)


class TestForwardBackward:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(200 + seed)
        A, m, y = random_instance(rng, int(rng.integers(1, 13)))
        _, g_ref, log_ev = brute_force_posteriors(A, m, y)
        sm = forward_backward(A, m, y)
        np.testing.assert_allclose(sm.gamma1, g_ref, atol=1e-9, rtol=0)
        assert sm.log_likelihood == pytest.approx(log_ev, abs=1e-9)

    def test_single_slot(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        m = EmissionModel(10, 1.0, 2.0)
        s = forward_init(stationary_distribution(A), m, 14.0)
        assert forward_backward(A, m, [14.0]).gamma1[0] == pytest.approx(s.alpha_norm[1], abs=1e-14)

    def test_uninformative(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        m = EmissionModel(10, 1.0, 1.0 + 1e-13)
        y = sample_energy(m, np.zeros(100, dtype=np.int8), seed=2)
        np.testing.assert_allclose(forward_backward(A, m, y).gamma1, 10 / 11, atol=1e-9)

    def test_tie_goes_to_active(self):
        # symmetric chain, uniform prior, observation at the crossing point
        A = TransitionMatrix.from_switching(0.5, 0.5)
        m = EmissionModel(10, 1.0, 2.0)
        y = [10 * math.log(2.0) * 2.0]
        sm = forward_backward(A, m, y)
        assert sm.gamma1[0] == pytest.approx(0.5, abs=1e-15)
        if sm.gamma1[0] == 0.5:
            assert sm.q_hat[0] == 1

    def test_transition_counts_sum(self):
        rng = np.random.default_rng(3)
        A, m, y = random_instance(rng, 300)
        assert forward_backward(A, m, y).transition_counts.sum() == pytest.approx(299, abs=1e-8)


class TestBruteForce:
    def test_single_slot_matches_init(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        m = EmissionModel(10, 1.0, 2.0)
        s = forward_init(stationary_distribution(A), m, 9.0)
        z, g, log_ev = brute_force_posteriors(A, m, [9.0])
        assert g[0] == pytest.approx(s.alpha_norm[1], abs=1e-14)
        assert log_ev == pytest.approx(s.log_evidence, abs=1e-13)

    def test_total_probability(self):
        rng = np.random.default_rng(5)
        A, m, y = random_instance(rng, 8)
        _, g, _ = brute_force_posteriors(A, m, y)
        assert np.all((g >= 0) & (g <= 1))

    def test_refuses_long_input(self):
        A = TransitionMatrix.from_switching(0.1, 0.01)
        with pytest.raises(ValueError):
            brute_force_posteriors(A, EmissionModel(10, 1.0, 2.0), np.ones(17))


class TestBaumWelch:
    @staticmethod
    def data(a01, a10, snr, n, seed):
        A = TransitionMatrix.from_switching(a01, a10)
        m = EmissionModel.from_snr_db(10, snr)
        rng = np.random.default_rng(seed)
        return A, m, sample_energy(m, sample_trace(A, n, seed=rng).states, seed=rng)

    @pytest.mark.parametrize("seed", range(4))
    def test_monotone_likelihood(self, seed):
        A, m, y = self.data(0.1, 0.05, 0.0, 3000, seed)
        init = (TransitionMatrix.from_switching(0.3, 0.3), EmissionModel(10, 0.7, 3.0))
        _, _, hist = baum_welch(y, init, max_iters=60)
        assert np.all(np.diff(hist) >= -1e-8 * np.abs(hist[:-1]).clip(1.0))

    def test_recovery_at_high_snr(self):
        A, m, y = self.data(0.1, 0.01, 10.0, 100_000, 1)
        init = (TransitionMatrix.from_switching(0.05, 0.05), EmissionModel(10, 0.5, 5.0))
        A_hat, m_hat, hist = baum_welch(y, init)
        assert abs(A_hat.a01 - 0.1) <= 0.05 and abs(A_hat.a10 - 0.01) <= 0.05
        assert m_hat.sigma0_sq == pytest.approx(1.0, rel=0.02)
        assert m_hat.sigma1_sq == pytest.approx(m.sigma1_sq, rel=0.02)

    def test_fixed_point_when_started_at_truth(self):
        A, m, y = self.data(0.1, 0.01, 10.0, 100_000, 2)
        A_hat, m_hat, _ = baum_welch(y, (A, m), max_iters=3)
        assert abs(A_hat.a01 - A.a01) < 0.01 and abs(A_hat.a10 - A.a10) < 0.005

    def test_label_order(self):
        A, m, y = self.data(0.1, 0.05, 5.0, 5000, 3)
        init = (TransitionMatrix.from_switching(0.1, 0.1), EmissionModel(10, 3.0, 3.5))
        _, m_hat, _ = baum_welch(y, init)
        assert m_hat.sigma1_sq > m_hat.sigma0_sq

    def test_degenerate(self):
        # a component that explains nothing
        y = np.full(200, 10.0)
        init = (TransitionMatrix.from_switching(0.1, 0.1), EmissionModel(10, 1.0, 1e6))
        with pytest.raises(DegenerateComponentError):
            baum_welch(y, init)
