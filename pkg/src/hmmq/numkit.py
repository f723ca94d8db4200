"""Dense complex linear algebra and seeded randomness used by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``.  Superoperators
follow the column-major convention ``vec(A X B) = (B^T kron A) vec(X)``, so that
``vec`` stacks columns (Fortran order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|


class NumericalFault(RuntimeError):
    """Raised when a computation leaves its numerically trusted regime."""


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    return a


def dag(m: np.ndarray) -> np.ndarray:
    return np.conjugate(np.swapaxes(m, -1, -2))


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros((dim, 1), dtype=complex)
    v[index, 0] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1, 1)
    return v @ dag(v)


def vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def kron_all(*ms) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def partial_trace(m, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every tensor factor not listed in ``keep``.

    ``dims`` lists the factor dimensions in order; the kept factors stay in their
    original order.
    """
    m = as_matrix(m)
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise ValueError(f"factor dimensions must be positive, got {dims}")
    total = math.prod(dims)
    if m.shape != (total, total):
        raise ValueError(f"matrix shape {m.shape} does not match factor dims {dims} (product {total})")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = m.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out_idx = keep + [n + i for i in keep]
    res = np.einsum(t, row + col, out_idx)
    d_keep = math.prod(dims[i] for i in keep)
    return res.reshape(d_keep, d_keep)


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product Tr(a^dagger b)."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and float(np.max(np.abs(m - dag(m)), initial=0.0)) <= tol


def require_hermitian(m, name: str = "matrix", tol: float = HERMITIAN_TOL) -> np.ndarray:
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got {m.shape}")
    dev = float(np.max(np.abs(m - dag(m)), initial=0.0))
    if dev > tol:
        raise ValueError(f"{name} is not Hermitian (max deviation {dev:.3e} > {tol:.0e})")
    return m


# Pade approximant coefficients and norm thresholds for scaling and squaring
# (Higham, SIAM J. Matrix Anal. Appl. 26, 2005).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
         33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}


def _pade_uv(a: np.ndarray, m: int):
    b = _PADE[m]
    ident = np.eye(a.shape[0], dtype=a.dtype)
    a2 = a @ a
    if m < 13:
        powers = [ident, a2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ a2)
        u = sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        v = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
        return a @ u, v
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def expm(m) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a diagonal Pade approximant."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expm needs a square matrix, got {a.shape}")
    if a.size == 0:
        return a.copy()
    if not np.all(np.isfinite(a)):
        raise NumericalFault("expm input contains non-finite entries")
    norm1 = float(np.max(np.sum(np.abs(a), axis=0)))
    s = 0
    for deg in (3, 5, 7, 9):
        if norm1 <= _THETA[deg]:
            u, v = _pade_uv(a, deg)
            break
    else:
        deg = 13
        if norm1 > _THETA[13]:
            s = int(math.ceil(math.log2(norm1 / _THETA[13])))
        u, v = _pade_uv(a / 2.0**s, 13)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


@dataclass(frozen=True)
class HermitianEigenSystem:
    """Ascending eigenvalues and matching orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ dag(self.vectors)


def herm_eig(m) -> HermitianEigenSystem:
    """Hermitian eigendecomposition with a deterministic eigenvector phase.

    The largest-magnitude component of every eigenvector is made real and positive.
    """
    m = require_hermitian(m)
    w, v = np.linalg.eigh(0.5 * (m + dag(m)))
    idx = np.argmax(np.round(np.abs(v), 12), axis=0)
    lead = v[idx, np.arange(v.shape[1])]
    v = v * (np.abs(lead) / lead)
    return HermitianEigenSystem(values=w, vectors=v)


def normalize_state(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1, 1)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


def as_density(state, dim: int | None = None, name: str = "state") -> np.ndarray:
    """Accept a ket (vector) or a density matrix and return a density matrix."""
    a = np.asarray(state, dtype=complex)
    if a.size == 1:
        rho = np.ones((1, 1), dtype=complex)
    elif a.ndim == 1 or (a.ndim == 2 and a.shape[1] == 1 and a.shape[0] != 1) or a.shape == (1,):
        rho = projector(normalize_state(a))
    elif a.ndim == 2 and a.shape[0] == a.shape[1]:
        rho = require_hermitian(a, name)
    else:
        raise ValueError(f"{name} must be a vector or square matrix, got shape {a.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"{name} has dimension {rho.shape[0]}, expected {dim}")
    return rho


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream)``.

    Each stream owns a Philox generator whose key is derived from the pair, so
    draws on one stream never disturb another.  ``spawn(i)`` derives an
    independent child stream deterministically.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative integers")
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.random.SeedSequence(self.seed, spawn_key=(self.stream,)).generate_state(2, np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"

    def __getstate__(self):
        return {"seed": self.seed, "stream": self.stream, "state": self._gen.bit_generator.state}

    def __setstate__(self, st):
        self.__init__(st["seed"], st["stream"])
        self._gen.bit_generator.state = st["state"]

    def spawn(self, index: int) -> "RngStream":
        child = np.random.SeedSequence((self.stream, int(index))).generate_state(1, np.uint64)[0]
        return RngStream(self.seed, int(child))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def random(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)


def ginibre(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """Matrix of i.i.d. standard complex Gaussians (E|z|^2 = 1)."""
    if rows < 1 or cols < 1:
        raise ValueError(f"ginibre needs positive dimensions, got {rows}x{cols}")
    g = rng.normal((rows, cols, 2))
    return (g[..., 0] + 1j * g[..., 1]) / math.sqrt(2.0)


def haar_state(dim: int, rng: RngStream) -> np.ndarray:
    """Haar-random unit column vector of length ``dim``."""
    if dim < 1:
        raise ValueError("haar_state needs dim >= 1")
    v = ginibre(dim, 1, rng)
    return v / np.linalg.norm(v)


def haar_unitary(dim: int, rng: RngStream) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(dim, dim, rng))
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: RngStream) -> np.ndarray:
    a = ginibre(dim, dim, rng)
    return 0.5 * (a + dag(a))
