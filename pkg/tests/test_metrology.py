import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmmq.experiments.presets import heisenberg, zz_coupling
from hmmq.metrology import (BinomialMixture, EnvelopeSeries, binomial_mixture_fi, branch_gamma,
                            dephasing_closed_form, dephasing_state, diagonal_probability, envelope_alpha,
                            find_revivals, logical_alpha, logical_dephasing_kraus, qfi_envelope, qfi_mixed)
from hmmq.model import HmmModel, propagate_with
from hmmq.numkit import I2, X, Y, Z, RngStream, ginibre, haar_state, random_hermitian
from hmmq.qec import logical_start, projected_liouvillian, trivial_span_code, with_aux

from helpers import random_diagonal_model

seeds = st.integers(0, 2**31)
PAULIS = (X, Y, Z)


def bloch(r):
    return 0.5 * (I2 + sum(c * p for c, p in zip(r, PAULIS)))


class TestQfi:
    @given(st.floats(0.01, 3.0))
    def test_pure_rotation(self, t):
        plus = np.array([1, 1]) / math.sqrt(2)
        rho = np.outer(plus, plus)
        drho = -1j * t * (Z @ rho - rho @ Z)
        assert qfi_mixed(rho, drho) == pytest.approx(4 * t * t, rel=1e-10)

    @given(seeds, st.floats(0.05, 0.95))
    def test_bloch_formula(self, seed, length):
        # F = |∂r|² + (r·∂r)²/(1 - |r|²) for a qubit
        rng = RngStream(seed)
        r = rng.normal(3)
        r *= length / np.linalg.norm(r)
        dr = rng.normal(3)
        want = dr @ dr + (r @ dr) ** 2 / (1 - r @ r)
        drho = 0.5 * sum(c * p for c, p in zip(dr, PAULIS))
        assert qfi_mixed(bloch(r), drho) == pytest.approx(want, rel=1e-9)

    def test_ignores_kernel(self):
        rho = np.diag([1.0, 0.0])
        drho = np.array([[0, 0.5], [0.5, 0]])
        # pure state with ∂ψ component 0.5 outside: F = 4·0.25 = 1
        assert qfi_mixed(rho, drho) == pytest.approx(1.0)

    @given(st.floats(0.0, 4.0))
    def test_dephasing_closed_form(self, t):
        assert dephasing_closed_form(t) == pytest.approx(4 * t * t * math.exp(-4 * t), abs=1e-12)

    def test_dephasing_value(self):
        assert dephasing_closed_form(math.pi / 2) == pytest.approx(0.0184309210036475, abs=1e-15)

    def test_dephasing_state_derivative(self):
        h = 1e-6
        rho_p, _ = dephasing_state(0.8, h)
        rho_m, _ = dephasing_state(0.8, -h)
        _, drho = dephasing_state(0.8)
        np.testing.assert_allclose((rho_p - rho_m) / (2 * h), drho, atol=1e-8)


class TestEnvelope:
    def test_zz_closed_form(self):
        g = 1.3
        m = zz_coupling(g)
        code = trivial_span_code(m)
        env = np.array([1, 1]) / math.sqrt(2)
        series = envelope_alpha(m, code, env)
        ts = np.linspace(0, 4 * math.pi / g, 50)
        np.testing.assert_allclose(np.abs(series(ts)), 0.5 * np.abs(np.cos(2 * g * ts)), atol=1e-12)

    @given(seeds, st.floats(0.0, 5.0))
    def test_matches_simulation(self, seed, t):
        rng = RngStream(seed)
        m = HmmModel(2, 2, random_hermitian(4, rng), Z, d_A=2)
        code = trivial_span_code(m)
        env = haar_state(2, rng)
        series = envelope_alpha(m, code, env)
        st_ = propagate_with(projected_liouvillian(m, code), logical_start(code, env, 2), t)
        rho, drho = st_.reduce(with_aux(m, 2).dims, [1, 2])
        assert abs(abs(series(t)) - abs(logical_alpha(rho, code))) < 1e-9
        assert abs(qfi_envelope(series, code.delta_lambda, t) - qfi_mixed(rho, drho)) < 1e-8

    def test_rejects_noise(self):
        code = trivial_span_code(heisenberg())
        with pytest.raises(ValueError, match="jump"):
            envelope_alpha(heisenberg(), code, np.array([1, 0]))
        with pytest.raises(ValueError, match="H_E"):
            envelope_alpha(heisenberg(h_e=True).replace(jumps=()), code, np.array([1, 0]))

    def test_merges_frequencies(self):
        m = HmmModel(2, 2, np.zeros((4, 4)), Z, d_A=2)
        s = envelope_alpha(m, trivial_span_code(m), np.array([0.6, 0.8]))
        assert s.freqs.size == 1 and abs(s.coeffs[0]) == pytest.approx(0.5)


class TestRevivals:
    def test_cosine_revivals(self):
        s = EnvelopeSeries(coeffs=np.array([0.25, 0.25]), freqs=np.array([-2.0, 2.0]))
        ts = find_revivals(s, 0.45, (0.3, 7.0), 400)
        np.testing.assert_allclose(ts, [k * math.pi / 2 for k in (1, 2, 3, 4)], atol=1e-7)

    def test_almost_periodic(self):
        s = EnvelopeSeries(coeffs=np.array([0.25, 0.25]), freqs=np.array([1.0, math.sqrt(2)]))
        ts = find_revivals(s, 0.49, (1.0, 200.0), 20000)
        assert ts
        for t in ts:
            v = abs(s(t))
            assert v >= 0.49
            assert v >= abs(s(t + 1e-4)) - 1e-12 and v >= abs(s(t - 1e-4)) - 1e-12

    def test_none_above_threshold(self):
        s = EnvelopeSeries(coeffs=np.array([0.1]), freqs=np.array([1.0]))
        assert find_revivals(s, 0.2, (0, 10), 100) == []

    def test_rejects(self):
        s = EnvelopeSeries(coeffs=np.array([0.1]), freqs=np.array([1.0]))
        with pytest.raises(ValueError):
            find_revivals(s, 0.6, (0, 1), 10)
        with pytest.raises(ValueError):
            find_revivals(s, 0.3, (1, 0), 10)


class TestDiagonalModel:
    def test_probability_formula(self):
        p, dp = diagonal_probability(0.3 + 0.2j, 2.0, 0.1, 0.7)
        phase = (0.2 + 0.2) * 0.7
        assert p == pytest.approx(0.5 + 0.5 * math.exp(-0.21) * math.sin(phase))
        assert dp == pytest.approx(0.5 * math.exp(-0.21) * 2.0 * 0.7 * math.cos(phase))

    def test_rejects_growth(self):
        with pytest.raises(ValueError):
            diagonal_probability(-1.0, 1.0, 0.0, 1.0)

    @given(seeds, st.floats(0.05, 2.0))
    def test_kraus_matches_qec_limit(self, seed, t):
        m, phis = random_diagonal_model(seed, 2, h_e=False, omega=0.0)
        code = trivial_span_code(m)
        basis = np.column_stack([code.c0, code.c1])
        liouv = projected_liouvillian(m, code, "dephasing")
        for phi in phis:
            st_ = propagate_with(liouv, logical_start(code, phi, 2), t)
            rho, _ = st_.reduce(with_aux(m, code.d_A).dims, [1, 2])
            a0, a1 = logical_dephasing_kraus(branch_gamma(m, code, phi), t)
            start = np.full((2, 2), 0.5)
            want = a0 @ start @ a0.conj().T + a1 @ start @ a1.conj().T
            np.testing.assert_allclose(basis.conj().T @ rho @ basis, want, atol=1e-10)

    @given(seeds)
    def test_gamma_has_nonnegative_real_part(self, seed):
        m, phis = random_diagonal_model(seed, 3)
        code = trivial_span_code(m)
        for phi in phis:
            assert branch_gamma(m, code, phi).real >= -1e-12


def enumerate_fi(weights, probs, dprobs, n):
    total = 0.0
    for seq in itertools.product((0, 1), repeat=n):
        k = sum(seq)
        pr = [p**k * (1 - p) ** (n - k) for p in probs]
        d = [pr_i * (k / p - (n - k) / (1 - p)) * dp for pr_i, p, dp in zip(pr, probs, dprobs)]
        pt = sum(a * x for a, x in zip(weights, pr))
        dt = sum(a * x for a, x in zip(weights, d))
        total += dt * dt / pt
    return total


class TestBinomialMixture:
    @given(seeds, st.integers(1, 3), st.integers(1, 10))
    def test_against_enumeration(self, seed, k, n):
        rng = RngStream(seed)
        w = rng.random(k) + 0.05
        w /= w.sum()
        p = 0.05 + 0.9 * rng.random(k)
        dp = rng.normal(k)
        got = binomial_mixture_fi(BinomialMixture(w, p, dp), n)
        assert got == pytest.approx(enumerate_fi(w, p, dp, n), rel=1e-9, abs=1e-12)

    def test_single_component(self):
        # FI of Binom(N, p) is N ∂p²/(p(1-p))
        mix = BinomialMixture([1.0], [0.3], [0.7])
        assert binomial_mixture_fi(mix, 40) == pytest.approx(40 * 0.49 / 0.21)

    def test_linear_growth(self):
        mix = BinomialMixture([0.5, 0.5], [0.3, 0.6], [0.5, -0.4])
        per = [binomial_mixture_fi(mix, n) / n for n in (50, 100, 200, 400)]
        assert max(per) / min(per) < 1.1

    def test_merging(self):
        a = BinomialMixture([0.3, 0.7], [0.4, 0.4], [1.0, 2.0])
        b = BinomialMixture([1.0], [0.4], [0.3 * 1.0 + 0.7 * 2.0])
        assert a.probs.size == 1
        assert binomial_mixture_fi(a, 7) == pytest.approx(binomial_mixture_fi(b, 7))

    def test_large_n_finite(self):
        mix = BinomialMixture([0.2, 0.8], [0.01, 0.99], [0.3, 0.1])
        assert np.isfinite(binomial_mixture_fi(mix, 5000))

    def test_rejects(self):
        with pytest.raises(ValueError):
            BinomialMixture([1.0], [1.0], [0.0])
        with pytest.raises(ValueError):
            BinomialMixture([0.5, 0.6], [0.2, 0.3], [0, 0])
        with pytest.raises(ValueError):
            binomial_mixture_fi(BinomialMixture([1.0], [0.5], [1.0]), -1)
