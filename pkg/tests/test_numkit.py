import math
import pickle

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from hmmq.numkit import (I2, X, Y, Z, NumericalFault, RngStream, as_density, dag, expm, ginibre,
                         haar_state, haar_unitary, herm_eig, hs_inner, kron_all, partial_trace,
                         require_hermitian, unvec, vec)

from helpers import rand_density, rand_matrix

seeds = st.integers(0, 2**32 - 1)


class TestExpm:
    def test_pauli_rotation(self):
        # exp(-iθX) = cos θ 1 - i sin θ X
        for theta in (0.0, 0.3, 2.0, 17.5):
            want = math.cos(theta) * I2 - 1j * math.sin(theta) * X
            np.testing.assert_allclose(expm(-1j * theta * X), want, atol=1e-13)

    def test_diagonal(self):
        d = np.array([0.1, -3.0, 5.0 + 2j])
        np.testing.assert_allclose(expm(np.diag(d)), np.diag(np.exp(d)), rtol=1e-13)

    def test_nilpotent(self):
        n = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=complex)
        np.testing.assert_allclose(expm(n), np.eye(3) + n + n @ n / 2, atol=1e-15)

    @given(seeds, st.integers(1, 12), st.floats(1e-4, 60.0))
    def test_matches_reference(self, seed, n, scale):
        a = rand_matrix(seed, n)
        a = a * scale / np.linalg.norm(a, 1)
        ref = scipy.linalg.expm(a)
        assert np.linalg.norm(expm(a) - ref) <= 1e-11 * max(1.0, np.linalg.norm(ref))

    @given(seeds, st.integers(1, 8))
    def test_group_property(self, seed, n):
        a = rand_matrix(seed, n)
        np.testing.assert_allclose(expm(a) @ expm(-a), np.eye(n), atol=1e-10)

    def test_rejects(self):
        with pytest.raises(ValueError):
            expm(np.ones((2, 3)))
        with pytest.raises(NumericalFault):
            expm(np.array([[np.nan]]))


class TestTensorTools:
    @given(seeds)
    def test_vec_identity(self, seed):
        a, x, b = rand_matrix(seed, 3), rand_matrix(seed + 1, 3), rand_matrix(seed + 2, 3)
        np.testing.assert_allclose(vec(a @ x @ b), np.kron(b.T, a) @ vec(x), atol=1e-10)
        np.testing.assert_allclose(unvec(vec(x), 3), x)

    @given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
    def test_partial_trace_of_product(self, seed, da, db, dc):
        a, b, c = rand_density(seed, da), rand_density(seed + 1, db), rand_density(seed + 2, dc)
        m = kron_all(a, b, c)
        np.testing.assert_allclose(partial_trace(m, [da, db, dc], [1]), b, atol=1e-12)
        np.testing.assert_allclose(partial_trace(m, [da, db, dc], [0, 2]), np.kron(a, c), atol=1e-12)
        assert abs(np.trace(partial_trace(m, [da, db, dc], [])) - 1) < 1e-12

    def test_partial_trace_entangled(self):
        bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
        rho = np.outer(bell, bell)
        np.testing.assert_allclose(partial_trace(rho, [2, 2], [0]), I2 / 2)

    def test_partial_trace_bad_dims(self):
        with pytest.raises(ValueError):
            partial_trace(np.eye(4), [2, 3], [0])

    def test_hs_inner_paulis(self):
        paulis = [I2, X, Y, Z]
        gram = np.array([[hs_inner(a, b) for b in paulis] for a in paulis])
        np.testing.assert_allclose(gram, 2 * np.eye(4))

    def test_require_hermitian(self):
        require_hermitian(X)
        with pytest.raises(ValueError, match="not Hermitian"):
            require_hermitian(np.array([[0, 1], [0, 0]]))


class TestEigen:
    @given(seeds, st.integers(1, 6))
    def test_reconstruct_and_phase(self, seed, n):
        a = rand_matrix(seed, n)
        h = a + dag(a)
        e = herm_eig(h)
        np.testing.assert_allclose(e.reconstruct(), h, atol=1e-10)
        assert np.all(np.diff(e.values) >= -1e-12)
        lead = e.vectors[np.argmax(np.round(np.abs(e.vectors), 12), axis=0), np.arange(n)]
        assert np.all(np.abs(lead.imag) < 1e-12) and np.all(lead.real > 0)


class TestStates:
    def test_as_density(self):
        np.testing.assert_allclose(as_density([1, 1j]), np.array([[1, -1j], [1j, 1]]) / 2)
        np.testing.assert_allclose(as_density(np.eye(2) / 2, 2), np.eye(2) / 2)
        np.testing.assert_allclose(as_density([3.0]), [[1.0]])
        with pytest.raises(ValueError):
            as_density([1, 0], 3)


class TestRandom:
    def test_deterministic(self):
        a = RngStream(7, 3).random(5)
        b = RngStream(7, 3).random(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, RngStream(7, 4).random(5))
        assert not np.array_equal(a, RngStream(8, 3).random(5))

    def test_spawn_deterministic_and_distinct(self):
        base = RngStream(11, 0)
        kids = [base.spawn(i) for i in range(4)]
        assert len({k.stream for k in kids}) == 4
        assert base.spawn(2).stream == kids[2].stream
        # spawning does not consume parent draws
        np.testing.assert_array_equal(RngStream(11, 0).random(3), base.random(3))

    def test_pickle_roundtrip(self):
        r = RngStream(5, 2)
        r.random(10)
        r2 = pickle.loads(pickle.dumps(r))
        np.testing.assert_array_equal(r.random(4), r2.random(4))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            RngStream(-1)

    def test_ginibre_moments(self):
        g = ginibre(400, 400, RngStream(0))
        assert abs(np.mean(np.abs(g) ** 2) - 1) < 0.02
        assert abs(np.mean(g)) < 0.01

    @given(seeds, st.integers(1, 6))
    def test_haar_objects(self, seed, n):
        v = haar_state(n, RngStream(seed))
        assert v.shape == (n, 1)
        assert abs(np.linalg.norm(v) - 1) < 1e-12
        u = haar_unitary(n, RngStream(seed))
        np.testing.assert_allclose(u @ dag(u), np.eye(n), atol=1e-12)

    def test_haar_first_moment(self):
        # E|ψ><ψ| = 1/d for Haar-random states
        rng = RngStream(3)
        acc = sum(np.outer(v, v.conj()) for v in (haar_state(3, rng).ravel() for _ in range(4000)))
        np.testing.assert_allclose(acc / 4000, np.eye(3) / 3, atol=0.02)
