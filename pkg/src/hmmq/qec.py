"""Metrological codes, extended errors, Knill-Laflamme checks and recovery maps.

A code is built from a traceless Hermitian operator G_⊥ on the probe: its
positive and negative spectral parts, normalized to density matrices ρ0 and ρ1,
are purified onto an auxiliary copy of the probe with disjoint auxiliary
supports ("markers").  The two purifications |C0⟩, |C1⟩ span the codespace.

Environment memory is handled through extended errors: every environment block
⟨n|E|k⟩ of a joint error is treated as a separate error on P⊗A.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (HmmModel, Liouvillian, StatePair, build_liouvillian, kraus_superop,
                    sprepost)
from .numkit import as_density, dag, expm, herm_eig, kron_all, projector
from .spans import OperatorSpan, computational_basis, g_perp

KL_TOL = 1e-8
ZERO_EIG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MetrologyCode:
    """Two codewords on P⊗A with their logical signal eigenvalues.

    ``marker0``/``marker1`` are the orthogonal auxiliary projectors carrying the
    supports of |C0⟩ and |C1⟩.
    """

    c0: np.ndarray
    c1: np.ndarray
    lambda0: float
    lambda1: float
    d_P: int
    d_A: int
    marker0: np.ndarray
    marker1: np.ndarray

    @property
    def dim(self) -> int:
        return self.d_P * self.d_A

    @property
    def delta_lambda(self) -> float:
        return self.lambda0 - self.lambda1

    @property
    def projector(self) -> np.ndarray:
        return projector(self.c0) + projector(self.c1)

    @property
    def logical_z(self) -> np.ndarray:
        return projector(self.c0) - projector(self.c1)

    def logical(self, a0: complex, a1: complex) -> np.ndarray:
        """Normalized codeword combination a0|C0⟩ + a1|C1⟩."""
        v = a0 * self.c0 + a1 * self.c1
        return v / np.linalg.norm(v)

    @property
    def plus(self) -> np.ndarray:
        return self.logical(1, 1)

    def plus_i(self, sign: int = 1) -> np.ndarray:
        return self.logical(1, 1j * sign)


def build_code_from_gperp(g_perp_op, g=None, zero_tol: float = ZERO_EIG_TOL) -> MetrologyCode:
    """Codewords purifying the positive and negative parts of G_⊥.

    Eigenvalues are taken in descending order so that auxiliary index i carries
    the i-th largest eigenvector; eigenvalues within ``zero_tol`` of zero join the
    positive part.  The logical eigenvalues are ⟨C_a|G⊗1|C_a⟩ with ``g``
    defaulting to G_⊥ itself.
    """
    gp = np.asarray(g_perp_op, dtype=complex)
    eig = herm_eig(gp)
    vals, vecs = eig.values[::-1], eig.vectors[:, ::-1]
    d = gp.shape[0]
    scale = max(1.0, float(np.max(np.abs(vals))))
    if float(np.sum(np.abs(vals))) <= zero_tol * scale:
        raise ValueError("G_perp vanishes: the signal lies in the noise span, no code exists by this route")
    pos = vals > -zero_tol * scale
    neg = ~pos
    if not np.any(neg) or np.all(np.abs(vals[pos]) <= zero_tol * scale):
        raise ValueError("G_perp must have both a positive and a negative spectral part")
    w0 = np.where(pos, np.clip(vals, 0, None), 0.0)
    w1 = np.where(neg, -vals, 0.0)
    w0, w1 = w0 / w0.sum(), w1 / w1.sum()
    c0 = np.zeros(d * d, dtype=complex)
    c1 = np.zeros(d * d, dtype=complex)
    for i in range(d):
        aux = np.zeros(d)
        aux[i] = 1.0
        c0 += np.sqrt(w0[i]) * np.kron(vecs[:, i], aux)
        c1 += np.sqrt(w1[i]) * np.kron(vecs[:, i], aux)
    gg = gp if g is None else np.asarray(g, dtype=complex)
    gl = np.kron(gg, np.eye(d))
    lam0 = float(np.real(np.vdot(c0, gl @ c0)))
    lam1 = float(np.real(np.vdot(c1, gl @ c1)))
    marker0 = np.diag(pos.astype(complex))
    marker1 = np.diag(neg.astype(complex))
    return MetrologyCode(c0=c0, c1=c1, lambda0=lam0, lambda1=lam1, d_P=d, d_A=d,
                         marker0=marker0, marker1=marker1)


def code_for_span(model: HmmModel, span: OperatorSpan) -> MetrologyCode:
    return build_code_from_gperp(g_perp(model, span), g=model.G)


def trivial_span_code(model: HmmModel) -> MetrologyCode:
    """Code from the traceless part of G (orthogonal complement of span{1})."""
    g = model.G
    return build_code_from_gperp(g - np.trace(g) / model.d_P * np.eye(model.d_P), g=g)


@dataclass(frozen=True, eq=False)
class ExtendedErrorSet:
    ops: tuple
    labels: tuple

    def __len__(self) -> int:
        return len(self.ops)


def extended_errors(errors: Sequence[np.ndarray], env_basis=None, d_E: int | None = None,
                    labels: Sequence | None = None) -> ExtendedErrorSet:
    """Environment blocks ⟨φn|E_i|φk⟩ of joint errors on E⊗(P⊗A).

    ``d_E`` may be omitted when an explicit basis is given.
    """
    if env_basis is None and d_E is None:
        raise ValueError("give an environment basis or d_E")
    basis = computational_basis(d_E) if env_basis is None else [np.asarray(b, dtype=complex).reshape(-1) for b in env_basis]
    d_E = len(basis)
    u = np.column_stack(basis)
    if np.max(np.abs(dag(u) @ u - np.eye(d_E))) > 1e-9:
        raise ValueError("environment basis is not orthonormal")
    ops, labs = [], []
    for idx, e in enumerate(errors):
        e = np.asarray(e, dtype=complex)
        if e.shape[0] % d_E or e.shape[0] != e.shape[1]:
            raise ValueError(f"error {idx} with shape {e.shape} is not square over a factor of size {d_E}")
        r = e.shape[0] // d_E
        t = np.einsum("an,apbq,bk->nkpq", np.conj(u), e.reshape(d_E, r, d_E, r), u)
        name = idx if labels is None else labels[idx]
        for n in range(d_E):
            for k in range(d_E):
                ops.append(t[n, k])
                labs.append((name, n, k))
    return ExtendedErrorSet(tuple(ops), tuple(labs))


@dataclass(frozen=True, eq=False)
class KlReport:
    satisfied: bool
    c: np.ndarray
    max_residual: float
    worst_pair: tuple | None


def _check_projector(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=complex)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"projector must be square, got {p.shape}")
    if np.max(np.abs(p - dag(p))) > 1e-9 or np.max(np.abs(p @ p - p)) > 1e-9:
        raise ValueError("input is not an orthogonal projector")
    if np.real(np.trace(p)) < 0.5:
        raise ValueError("projector has rank zero")
    return p


def kl_check(projector_op, errs: ExtendedErrorSet, tol: float = KL_TOL) -> KlReport:
    """Knill-Laflamme test P E_a† E_b P = c_ab P over every ordered pair."""
    p = _check_projector(projector_op)
    k = np.real(np.trace(p))
    ep = [e @ p for e in errs.ops]
    if any(x.shape != p.shape for x in ep):
        raise ValueError("error and projector dimensions differ")
    m = len(ep)
    c = np.zeros((m, m), dtype=complex)
    worst, worst_pair = 0.0, None
    for a in range(m):
        for b in range(m):
            blk = dag(ep[a]) @ ep[b]
            c[a, b] = np.trace(blk) / k
            res = float(np.linalg.norm(blk - c[a, b] * p))
            if res > worst:
                worst, worst_pair = res, (errs.labels[a], errs.labels[b])
    return KlReport(satisfied=worst <= tol, c=c, max_residual=worst, worst_pair=worst_pair)


class KlViolation(ValueError):
    def __init__(self, report: KlReport):
        super().__init__(f"Knill-Laflamme conditions violated: residual {report.max_residual:.3e} "
                         f"at pair {report.worst_pair}")
        self.report = report


def recovery_channel(projector_op, errs: ExtendedErrorSet, tol: float = KL_TOL) -> list[np.ndarray]:
    """Kraus operators of a recovery that undoes every error in the set.

    The c-matrix is diagonalized to get orthogonal error combinations; each one
    maps the codespace isometrically onto its own syndrome space, and the
    matching Kraus operator maps it back.  The complement of all syndrome spaces
    is sent to the first code basis vector so the map is trace preserving and
    lands in the codespace.
    """
    report = kl_check(projector_op, errs, tol)
    if not report.satisfied:
        raise KlViolation(report)
    p = np.asarray(projector_op, dtype=complex)
    pe = herm_eig(p)
    u = pe.vectors[:, pe.values > 0.5]
    cw, w = np.linalg.eigh(0.5 * (report.c + dag(report.c)))
    kraus, cover = [], np.zeros_like(p)
    top = max(float(cw.max()), 0.0)
    for b in range(len(cw)):
        if cw[b] <= max(tol, 1e-12) * max(top, 1.0) or cw[b] <= 0:
            continue
        f = sum(w[a, b] * errs.ops[a] for a in range(len(errs.ops)))
        v = f @ u / np.sqrt(cw[b])
        kraus.append(u @ dag(v))
        cover += v @ dag(v)
    rest = herm_eig(0.5 * (np.eye(p.shape[0]) - cover + dag(np.eye(p.shape[0]) - cover)))
    for j in np.nonzero(rest.values > 0.5)[0]:
        kraus.append(np.outer(u[:, 0], np.conj(rest.vectors[:, j])))
    return kraus


def dephasing_recovery(code: MetrologyCode) -> list[np.ndarray]:
    """Kraus form of X -> |C0⟩⟨C0| Tr[(1⊗M0)X] + |C1⟩⟨C1| Tr[(1⊗M1)X]."""
    if np.max(np.abs(code.marker0 @ code.marker1)) > 1e-12:
        raise ValueError("marker subspaces are not orthogonal")
    kraus = []
    for cw, marker in ((code.c0, code.marker0), (code.c1, code.marker1)):
        for a in np.nonzero(np.real(np.diag(marker)) > 0.5)[0]:
            for p in range(code.d_P):
                basis_vec = np.zeros(code.dim, dtype=complex)
                basis_vec[p * code.d_A + a] = 1.0
                kraus.append(np.outer(cw, basis_vec))
    return kraus


def apply_channel(kraus: Sequence[np.ndarray], rho: np.ndarray) -> np.ndarray:
    return sum(k @ rho @ dag(k) for k in kraus)


def with_aux(model: HmmModel, d_A: int) -> HmmModel:
    return model if model.d_A == d_A else model.replace(d_A=d_A)


def noise_error_set(model: HmmModel, code: MetrologyCode, env_basis=None) -> ExtendedErrorSet:
    """Extended errors of {1, L_k} on P⊗A, the set that fast recovery must correct."""
    m = with_aux(model, code.d_A)
    errors = [np.eye(m.dim, dtype=complex)] + m.full_jumps()
    labels = ["1"] + [f"L{k}" for k in range(len(m.jumps))]
    return extended_errors(errors, env_basis, m.d_E, labels)


def noise_recovery(model: HmmModel, code: MetrologyCode, tol: float = KL_TOL) -> list[np.ndarray]:
    return recovery_channel(code.projector, noise_error_set(model, code), tol)


def qec_superop(code: MetrologyCode, d_E: int, recovery=None) -> np.ndarray:
    """Superoperator of X -> P X P + R(P⊥ X P⊥) on E⊗P⊗A.

    ``recovery`` is None for the projector-only map P·P + P⊥·P⊥, the string
    ``"dephasing"`` for the marker-based recovery, or an explicit Kraus list.
    """
    ie = np.eye(d_E)
    p = np.kron(ie, code.projector)
    q = np.eye(p.shape[0]) - p
    sup = sprepost(p, p)
    if recovery is None:
        return sup + sprepost(q, q)
    kraus = dephasing_recovery(code) if isinstance(recovery, str) and recovery == "dephasing" else list(recovery)
    return sup + kraus_superop([np.kron(ie, k) @ q for k in kraus])


def projected_liouvillian(model: HmmModel, code: MetrologyCode, recovery=None) -> Liouvillian:
    """Generator 𝒟ℒ𝒟 of the infinitely-fast projection and recovery limit."""
    m = with_aux(model, code.d_A)
    liouv = build_liouvillian(m)
    dmap = qec_superop(code, m.d_E, recovery)
    return Liouvillian(L=dmap @ liouv.L @ dmap, dL=dmap @ liouv.dL @ dmap, dim=liouv.dim)


def logical_start(code: MetrologyCode, env_state, d_E: int, logical=None) -> StatePair:
    """Environment state tensored with a logical code state, default (|C0⟩+|C1⟩)/√2."""
    probe = code.plus if logical is None else logical
    return StatePair.product(as_density(env_state, d_E, "env_state"), probe)


def zeno_project_evolution(model: HmmModel, code: MetrologyCode, t: float, steps: int,
                           env_state=None, recovery=None, start: StatePair | None = None) -> StatePair:
    """Alternate exact propagation for t/steps with the projection-and-recovery map."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if t < 0:
        raise ValueError("t must be non-negative")
    m = with_aux(model, code.d_A)
    if start is None:
        env_state = np.eye(m.d_E) / m.d_E if env_state is None else env_state
        start = logical_start(code, env_state, m.d_E)
    liouv = build_liouvillian(m)
    n = liouv.L.shape[0]
    aug = np.zeros((2 * n, 2 * n), dtype=complex)
    aug[:n, :n] = liouv.L
    aug[n:, n:] = liouv.L
    aug[n:, :n] = liouv.dL
    dmap = qec_superop(code, m.d_E, recovery)
    daug = np.zeros_like(aug)
    daug[:n, :n] = dmap
    daug[n:, n:] = dmap
    step = daug @ expm((t / steps) * aug)
    total = np.linalg.matrix_power(step, steps)
    d = m.dim
    v = np.concatenate([start.rho.reshape(-1, order="F"), start.drho.reshape(-1, order="F")])
    out = total @ v
    rho = out[:n].reshape(d, d, order="F")
    drho = out[n:].reshape(d, d, order="F")
    return StatePair(0.5 * (rho + dag(rho)), 0.5 * (drho + dag(drho)))


def embed_single(op: np.ndarray, site: int, n_sites: int, d: int = 2) -> np.ndarray:
    """op acting on one factor of an n-fold tensor product."""
    return kron_all(*[op if s == site else np.eye(d) for s in range(n_sites)])
