import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmmq.experiments.presets import heisenberg, random_model
from hmmq.metrology import BinomialMixture, binomial_mixture_fi, branch_gamma, diagonal_probability
from hmmq.model import HmmModel
from hmmq.numkit import Z, RngStream, haar_state
from hmmq.qec import trivial_span_code
from hmmq.trajectory import (EnvSensitivityPair, ProtocolConfig, exact_fi, fi_curve, initial_env, mc_fi,
                             round_maps, round_step, sequence_probability)

from helpers import random_diagonal_model

seeds = st.integers(0, 2**31)
PLUS, MINUS = np.array([1, 1]) / math.sqrt(2), np.array([1, -1]) / math.sqrt(2)


def qubit(omega=0.0):
    return HmmModel(1, 2, np.zeros((2, 2)), Z, omega=omega)


class TestRoundStep:
    @given(st.floats(-2, 2), st.floats(0.01, 3))
    def test_rotation_oracle(self, omega, t):
        m = qubit(omega)
        cfg = ProtocolConfig(dwell=t)
        p, dp, _ = round_step(m, initial_env(m, cfg), cfg, 0)
        assert p == pytest.approx((1 - math.sin(2 * omega * t)) / 2, abs=1e-12)
        assert dp == pytest.approx(-t * math.cos(2 * omega * t), abs=1e-12)

    def test_omega_independent(self):
        m = qubit()
        cfg = ProtocolConfig(dwell=0.7, probe_prep=np.array([1, 0]))
        for o in (0, 1):
            p, dp, _ = round_step(m, initial_env(m, cfg), cfg, o)
            assert p == pytest.approx(0.5) and dp == 0.0

    @given(seeds, st.floats(0.05, 1.5))
    def test_branches_sum(self, seed, t):
        m, env = random_model(RngStream(seed), h_e=True)
        cfg = ProtocolConfig(dwell=t, env_state=env)
        maps = round_maps(m, cfg)
        start = initial_env(m, cfg)
        # start from a non-trivial branch state
        _, _, mid = round_step(m, start, cfg, 1, maps)
        outs = [round_step(m, mid, cfg, o, maps) for o in (0, 1)]
        assert sum(o[0] for o in outs) == pytest.approx(mid.probability, abs=1e-10)
        assert sum(o[1] for o in outs) == pytest.approx(mid.dprobability, abs=1e-10)
        for _, _, e in outs:
            np.testing.assert_allclose(e.rho, e.rho.conj().T, atol=1e-12)
            assert np.linalg.eigvalsh(e.rho)[0] > -1e-9

    @given(seeds, st.floats(0.1, 1.5))
    def test_diagonal_model_probabilities(self, seed, t):
        m, phis = random_diagonal_model(seed, 2)
        code = trivial_span_code(m)
        for phi in phis:
            cfg = ProtocolConfig(dwell=t, env_state=phi, code=code)
            p, dp, _ = round_step(m, initial_env(m, cfg), cfg, 0)
            pa, dpa = diagonal_probability(branch_gamma(m, code, phi), code.delta_lambda, m.omega, t)
            assert abs(p - pa) < 1e-8 and abs(dp - dpa) < 1e-8

    def test_outcome_range(self):
        m = qubit()
        cfg = ProtocolConfig(dwell=1.0)
        with pytest.raises(ValueError):
            round_step(m, initial_env(m, cfg), cfg, 2)

    def test_config_validation(self):
        m = qubit()
        with pytest.raises(ValueError, match="orthonormal"):
            round_maps(m, ProtocolConfig(dwell=1.0, measurement_basis=[PLUS, PLUS]))
        with pytest.raises(ValueError, match="normalized"):
            round_maps(m, ProtocolConfig(dwell=1.0, probe_prep=np.array([1, 1])))
        with pytest.raises(ValueError):
            round_maps(m, ProtocolConfig(dwell=-1.0))


class TestExactFi:
    @given(st.floats(0.05, 2.0), st.integers(1, 8))
    def test_noiseless_additivity(self, t, n):
        assert exact_fi(qubit(), ProtocolConfig(dwell=t, rounds=n)) == pytest.approx(4 * n * t * t, rel=1e-9)

    def test_two_outcome_formula(self):
        omega, t = 0.3, 0.8
        m = qubit(omega)
        p = (1 - math.sin(2 * omega * t)) / 2
        dp = -t * math.cos(2 * omega * t)
        assert exact_fi(m, ProtocolConfig(dwell=t)) == pytest.approx(dp * dp / (p * (1 - p)))

    @given(seeds, st.integers(1, 8))
    def test_diagonal_equals_mixture(self, seed, n):
        m, phis = random_diagonal_model(seed, 2)
        code = trivial_span_code(m)
        t = 0.6
        psi = haar_state(2, RngStream(seed, 1)).ravel()
        weights = [abs(np.vdot(p, psi)) ** 2 for p in phis]
        pd = [diagonal_probability(branch_gamma(m, code, p), code.delta_lambda, m.omega, t) for p in phis]
        mix = BinomialMixture(weights, [q[0] for q in pd], [q[1] for q in pd])
        got = exact_fi(m, ProtocolConfig(dwell=t, rounds=n, env_state=psi, code=code))
        assert got == pytest.approx(binomial_mixture_fi(mix, n), rel=1e-8, abs=1e-10)

    @given(seeds)
    def test_relabeling_invariance(self, seed):
        m, env = random_model(RngStream(seed))
        cfg = ProtocolConfig(dwell=0.3, rounds=5, env_state=env)
        swapped = cfg.replace(measurement_basis=[MINUS, PLUS])
        assert exact_fi(m, cfg) == pytest.approx(exact_fi(m, swapped), rel=1e-10)

    def test_sequence_probabilities_normalize(self):
        m = heisenberg()
        cfg = ProtocolConfig(dwell=0.25, env_state=np.array([0.6, 0.8j]))
        maps = round_maps(m, cfg)
        seqs = [[(i >> b) & 1 for b in range(4)] for i in range(16)]
        ps = [sequence_probability(m, cfg, s, maps) for s in seqs]
        assert sum(p for p, _ in ps) == pytest.approx(1.0, abs=1e-12)
        assert sum(d for _, d in ps) == pytest.approx(0.0, abs=1e-12)

    def test_frozen_heisenberg_values(self):
        # exact FI of the exchange model from the maximally mixed environment
        m = heisenberg()
        cfg = ProtocolConfig(dwell=0.25)
        vals = [exact_fi(m, cfg.replace(rounds=n)) for n in (1, 2, 3)]
        np.testing.assert_allclose(vals, FROZEN_HEISENBERG, rtol=1e-9)

    def test_budget(self):
        with pytest.raises(ValueError, match="mc_fi"):
            exact_fi(qubit(), ProtocolConfig(dwell=1.0, rounds=20))

    def test_zero_rounds(self):
        assert exact_fi(qubit(), ProtocolConfig(dwell=1.0, rounds=0)) == 0.0


class TestMonteCarlo:
    def test_omega_independent_is_zero(self):
        est = mc_fi(qubit(), ProtocolConfig(dwell=0.5, rounds=7, samples=500, probe_prep=np.array([1, 0])))
        assert est.estimate == 0.0 and est.variance_bound == 0.0 and est.samples == 500

    def test_worker_invariance(self):
        m = heisenberg()
        cfg = ProtocolConfig(dwell=0.25, rounds=9, samples=9000, seed=12, stream=3)
        a = mc_fi(m, cfg, workers=1)
        b = mc_fi(m, cfg, workers=3)
        assert a.estimate == b.estimate and a.variance_bound == b.variance_bound

    def test_seed_changes_result(self):
        m = heisenberg()
        cfg = ProtocolConfig(dwell=0.25, rounds=4, samples=500)
        assert mc_fi(m, cfg).estimate != mc_fi(m, cfg.replace(seed=1)).estimate

    def test_agrees_with_exact(self):
        m, env = random_model(RngStream(5))
        cfg = ProtocolConfig(dwell=0.3, rounds=6, env_state=env, samples=20000, seed=2)
        est = mc_fi(m, cfg)
        assert abs(est.estimate - exact_fi(m, cfg)) <= 4 * est.std_error

    def test_seed_average(self):
        # mean of independent estimates is consistent with the exact value
        m = heisenberg()
        cfg = ProtocolConfig(dwell=0.25, rounds=3, samples=400)
        ests = [mc_fi(m, cfg.replace(seed=s)) for s in range(50)]
        mean = np.mean([e.estimate for e in ests])
        se = math.sqrt(sum(e.variance_bound for e in ests)) / 50
        assert abs(mean - exact_fi(m, cfg)) <= 2 * se

    def test_curve_additivity(self):
        t = 0.4
        curve = fi_curve(qubit(), ProtocolConfig(dwell=t, samples=4000, seed=9), [1, 5, 10])
        for n, est in curve:
            assert abs(est.estimate - 4 * t * t * n) <= 4 * est.std_error
        assert len({e.estimate for _, e in curve}) == 3

    def test_rejects(self):
        with pytest.raises(ValueError):
            mc_fi(qubit(), ProtocolConfig(dwell=1.0, samples=0))


def test_env_pair_properties():
    e = EnvSensitivityPair(np.diag([0.3, 0.2]).astype(complex), np.diag([0.1, -0.4]).astype(complex))
    assert e.probability == pytest.approx(0.5) and e.dprobability == pytest.approx(-0.3)


# Independent oracle: row-major vectorized Lindblad generator exponentiated with
# scipy, every outcome sequence enumerated, ∂ω by central differences (h = 1e-5).
FROZEN_HEISENBERG = [0.05826279818123853, 0.11678822635847763, 0.17868368146123786]
