"""Hidden-Markov-model master equation and exact propagation with ω-sensitivity.

The joint state lives on E ⊗ P ⊗ A (environment, probe, noiseless auxiliary).
The generator is

    dρ/dt = -i[H_EP, ρ] - i ω [G̃ + H̃_E, ρ] + Σ_k D[L_k](ρ)

with G̃ = 1_E⊗G⊗1_A, H̃_E = H_E⊗1_P⊗1_A and jumps acting on E⊗P.  States are
carried together with their ω-derivative; both blocks are propagated by one
exponential of the block-triangular generator [[ℒ, 0], [∂ωℒ, ℒ]].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .numkit import (HERMITIAN_TOL, as_density, as_matrix, dag, expm, kron_all,
                     partial_trace, require_hermitian, unvec, vec)

STATE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Parameters of the joint environment-probe master equation.

    ``H_EP`` and the jumps act on E⊗P (environment factor first).  ``H_E`` is the
    environment part of the signal and is multiplied by ``omega``.  ``d_A`` sets the
    auxiliary dimension used by codes; operators are lifted with 1_A.
    """

    d_E: int
    d_P: int
    H_EP: np.ndarray
    G: np.ndarray
    H_E: np.ndarray | None = None
    jumps: tuple = ()
    omega: float = 0.0
    d_A: int = 1
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.d_E < 1 or self.d_P < 1 or self.d_A < 1:
            raise ValueError(f"dimensions must be positive, got d_E={self.d_E}, d_P={self.d_P}, d_A={self.d_A}")
        d_ep = self.d_E * self.d_P
        h_ep = require_hermitian(self.H_EP, "H_EP")
        g = require_hermitian(self.G, "G")
        h_e = np.zeros((self.d_E, self.d_E), dtype=complex) if self.H_E is None else require_hermitian(self.H_E, "H_E")
        if h_ep.shape != (d_ep, d_ep):
            raise ValueError(f"H_EP has shape {h_ep.shape}, expected {(d_ep, d_ep)}")
        if g.shape != (self.d_P, self.d_P):
            raise ValueError(f"G has shape {g.shape}, expected {(self.d_P, self.d_P)}")
        if h_e.shape != (self.d_E, self.d_E):
            raise ValueError(f"H_E has shape {h_e.shape}, expected {(self.d_E, self.d_E)}")
        jumps = tuple(as_matrix(l, f"jump {k}") for k, l in enumerate(self.jumps))
        for k, l in enumerate(jumps):
            if l.shape != (d_ep, d_ep):
                raise ValueError(f"jump {k} has shape {l.shape}, expected {(d_ep, d_ep)}")
        traceless = g - np.trace(g) / self.d_P * np.eye(self.d_P)
        if np.linalg.norm(traceless) <= HERMITIAN_TOL:
            raise ValueError("G is proportional to the identity and carries no signal")
        if not np.isfinite(self.omega):
            raise ValueError("omega must be finite")
        object.__setattr__(self, "H_EP", h_ep)
        object.__setattr__(self, "G", g)
        object.__setattr__(self, "H_E", h_e)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def d_EP(self) -> int:
        return self.d_E * self.d_P

    @property
    def dim(self) -> int:
        return self.d_E * self.d_P * self.d_A

    @property
    def dims(self) -> list[int]:
        return [self.d_E, self.d_P, self.d_A]

    def replace(self, **changes) -> "HmmModel":
        return replace(self, **changes)

    def lift_ep(self, op: np.ndarray) -> np.ndarray:
        return np.kron(op, np.eye(self.d_A))

    def lift_env(self, op: np.ndarray) -> np.ndarray:
        return kron_all(op, np.eye(self.d_P), np.eye(self.d_A))

    def lift_probe(self, op: np.ndarray) -> np.ndarray:
        return kron_all(np.eye(self.d_E), op, np.eye(self.d_A))

    def signal_generator(self) -> np.ndarray:
        """G̃ + H̃_E on the full space."""
        return self.lift_probe(self.G) + self.lift_env(self.H_E)

    def hamiltonian(self) -> np.ndarray:
        return self.lift_ep(self.H_EP) + self.omega * self.signal_generator()

    def full_jumps(self) -> list[np.ndarray]:
        return [self.lift_ep(l) for l in self.jumps]

    def has_jumps(self) -> bool:
        return any(np.linalg.norm(l) > 0 for l in self.jumps)


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Column-major superoperator ℒ and its ω-derivative on a space of dimension ``dim``."""

    L: np.ndarray
    dL: np.ndarray
    dim: int


@dataclass(frozen=True, eq=False)
class StatePair:
    """A density matrix together with its ω-derivative."""

    rho: np.ndarray
    drho: np.ndarray

    def __post_init__(self):
        rho = require_hermitian(self.rho, "rho", tol=STATE_TOL)
        drho = require_hermitian(self.drho, "drho", tol=STATE_TOL)
        if rho.shape != drho.shape:
            raise ValueError(f"rho {rho.shape} and drho {drho.shape} differ in shape")
        if abs(np.trace(rho) - 1.0) > STATE_TOL:
            raise ValueError(f"rho has trace {np.trace(rho).real:.12f}, expected 1")
        if abs(np.trace(drho)) > STATE_TOL:
            raise ValueError("drho must be traceless")
        lo = np.linalg.eigvalsh(0.5 * (rho + dag(rho)))[0]
        if lo < -STATE_TOL:
            raise ValueError(f"rho has a negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "drho", drho)

    @classmethod
    def product(cls, *factors) -> "StatePair":
        """Tensor product of ω-independent factors (kets or density matrices)."""
        rho = kron_all(*(as_density(f) for f in factors))
        return cls(rho, np.zeros_like(rho))

    def reduce(self, dims: Sequence[int], keep: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        return partial_trace(self.rho, dims, keep), partial_trace(self.drho, dims, keep)


def spre(a: np.ndarray) -> np.ndarray:
    """Superoperator of X -> a X."""
    return np.kron(np.eye(a.shape[0]), a)


def spost(b: np.ndarray) -> np.ndarray:
    """Superoperator of X -> X b."""
    return np.kron(b.T, np.eye(b.shape[0]))


def sprepost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator of X -> a X b."""
    return np.kron(b.T, a)


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of X -> -i[h, X]."""
    return -1j * (spre(h) - spost(h))


def dissipator_superop(l: np.ndarray) -> np.ndarray:
    ldl = dag(l) @ l
    return sprepost(l, dag(l)) - 0.5 * spre(ldl) - 0.5 * spost(ldl)


def kraus_superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(sprepost(k, dag(k)) for k in kraus)


def build_liouvillian(model: HmmModel) -> Liouvillian:
    gen = commutator_superop(model.hamiltonian())
    for l in model.full_jumps():
        gen = gen + dissipator_superop(l)
    dgen = commutator_superop(model.signal_generator())
    return Liouvillian(L=gen, dL=dgen, dim=model.dim)


def evolution_maps(liouv: Liouvillian, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (e^{tℒ}, ∂ω e^{tℒ}) from one augmented exponential."""
    if t < 0:
        raise ValueError(f"propagation time must be non-negative, got {t}")
    n = liouv.L.shape[0]
    aug = np.zeros((2 * n, 2 * n), dtype=complex)
    aug[:n, :n] = liouv.L
    aug[n:, n:] = liouv.L
    aug[n:, :n] = liouv.dL
    big = expm(t * aug)
    return big[:n, :n], big[n:, :n]


def apply_maps(maps: tuple[np.ndarray, np.ndarray], rho: np.ndarray, drho: np.ndarray):
    phi, dphi = maps
    d = rho.shape[0]
    v, dv = vec(rho), vec(drho)
    return unvec(phi @ v, d), unvec(phi @ dv + dphi @ v, d)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dag(m))


def propagate_with(liouv: Liouvillian, state: StatePair, t: float) -> StatePair:
    if state.rho.shape != (liouv.dim, liouv.dim):
        raise ValueError(f"state dimension {state.rho.shape[0]} does not match generator dimension {liouv.dim}")
    rho, drho = apply_maps(evolution_maps(liouv, t), state.rho, state.drho)
    return StatePair(_hermitize(rho), _hermitize(drho))


def propagate(model: HmmModel, state: StatePair, t: float) -> StatePair:
    """Exact evolution of (ρ, ∂ωρ) on E⊗P⊗A for time t."""
    if t < 0:
        raise ValueError(f"propagation time must be non-negative, got {t}")
    return propagate_with(build_liouvillian(model), state, t)


def master_rhs(model: HmmModel, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the master equation in operator form."""
    h = model.hamiltonian()
    out = -1j * (h @ rho - rho @ h)
    for l in model.full_jumps():
        ldl = dag(l) @ l
        out += l @ rho @ dag(l) - 0.5 * (ldl @ rho + rho @ ldl)
    return out


def first_order_step(model: HmmModel, rho, dt: float) -> np.ndarray:
    """Euler step ρ + dt·ℒ(ρ), used to read off first-order error terms."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    rho = as_matrix(rho, "rho")
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"rho has shape {rho.shape}, expected {(model.dim, model.dim)}")
    return rho + dt * master_rhs(model, rho)


def env_dephase(model: HmmModel, basis: Sequence[np.ndarray], rho: np.ndarray) -> np.ndarray:
    """Completely dephase the environment factor of ρ in the given basis."""
    out = np.zeros_like(rho)
    for phi in basis:
        proj = model.lift_env(np.outer(phi, np.conj(phi)))
        out += proj @ rho @ proj
    return out


def _check_basis(basis, d: int) -> list[np.ndarray]:
    vecs = [np.asarray(b, dtype=complex).reshape(-1) for b in basis]
    if len(vecs) != d or any(v.shape != (d,) for v in vecs):
        raise ValueError(f"environment basis must hold {d} vectors of length {d}")
    m = np.column_stack(vecs)
    if np.max(np.abs(dag(m) @ m - np.eye(d))) > 1e-9:
        raise ValueError("environment basis is not orthonormal")
    return vecs


def _reduced_pair(model: HmmModel, pair: StatePair):
    return pair.reduce(model.dims, [1, 2])


def check_dephasing_lemma(model: HmmModel, basis, rho, t: float) -> float:
    """Largest deviation between probe-side states evolved from ρ and from its env-dephased copy.

    Covers both the state block and the ω-derivative block.  For a diagonal
    interaction in ``basis`` the deviation vanishes up to rounding.
    """
    basis = _check_basis(basis, model.d_E)
    rho = as_density(rho, model.dim, "rho")
    liouv = build_liouvillian(model)
    a = _reduced_pair(model, propagate_with(liouv, StatePair(rho, np.zeros_like(rho)), t))
    deph = env_dephase(model, basis, rho)
    b = _reduced_pair(model, propagate_with(liouv, StatePair(deph, np.zeros_like(deph)), t))
    return max(float(np.max(np.abs(a[0] - b[0]))), float(np.max(np.abs(a[1] - b[1]))))


def check_signal_removal_lemma(model: HmmModel, basis, rho, t: float) -> float:
    """Deviation of probe-side (ρ, ∂ωρ) when the environment signal H_E is dropped.

    ``rho`` is first dephased in ``basis``; for a diagonal interaction with H_E
    diagonal in that basis the environment signal leaves no trace on the probe.
    """
    basis = _check_basis(basis, model.d_E)
    rho = env_dephase(model, basis, as_density(rho, model.dim, "rho"))
    start = StatePair(rho, np.zeros_like(rho))
    a = _reduced_pair(model, propagate(model, start, t))
    b = _reduced_pair(model, propagate(model.replace(H_E=None), start, t))
    return max(float(np.max(np.abs(a[0] - b[0]))), float(np.max(np.abs(a[1] - b[1]))))
