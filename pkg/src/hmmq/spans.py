"""Operator spans generated by the noise and the span-membership regime classifier.

Three spans are built from a model:

* the extended span on P: identity, every environment block ⟨φi|O|φm⟩ of H_EP,
  the jumps and their adjoints, and products of a jump-adjoint block with a
  jump block;
* the diagonal span on P: the same construction restricted to i = m blocks and
  without H_EP, meaningful for diagonal interactions;
* the full-system span on E⊗P: identity, L_k, L_k†, L_k†L_j.

Spans are stored as Hilbert-Schmidt orthonormal bases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import HmmModel
from .numkit import dag, herm_eig, kron

RANK_CUTOFF = 1e-9
SPAN_TOL = 1e-8

HNES = "HNES→HL"
HNLS_VIOLATED = "HNLS-violated→SQL-bound"
HNELS = "HNELS→envelope-HL"
UNITARY = "unitary→envelope-HL"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True, eq=False)
class OperatorSpan:
    """Orthonormal basis (under Tr(a†b)) of a complex operator span."""

    dim: int
    basis: np.ndarray  # shape (k, dim, dim)
    labels: tuple = ()

    @property
    def size(self) -> int:
        return int(self.basis.shape[0])

    def contains(self, op: np.ndarray, tol: float = SPAN_TOL) -> bool:
        return project(op, self, tol).in_span


@dataclass(frozen=True, eq=False)
class SpanVerdict:
    parallel: np.ndarray
    orthogonal: np.ndarray
    residual: float
    in_span: bool


def span_from_generators(generators: Sequence[np.ndarray], labels: Sequence = (),
                         cutoff: float = RANK_CUTOFF) -> OperatorSpan:
    """Orthonormalize a generator list by SVD, keeping singular values above cutoff·σmax.

    Generators are normalized first so the rank decision does not depend on their
    scale; numerically zero generators are dropped.
    """
    gens = [np.asarray(g, dtype=complex) for g in generators]
    if not gens:
        raise ValueError("at least one generator is required")
    dim = gens[0].shape[0]
    if any(g.shape != (dim, dim) for g in gens):
        raise ValueError("generators must share one square shape")
    norms = np.array([np.linalg.norm(g) for g in gens])
    scale = norms.max()
    rows = [g.reshape(-1) / n for g, n in zip(gens, norms) if n > 1e-12 * scale and n > 0]
    if not rows:
        return OperatorSpan(dim, np.zeros((0, dim, dim), dtype=complex), tuple(labels))
    _, s, vh = np.linalg.svd(np.array(rows), full_matrices=False)
    rank = int(np.sum(s > cutoff * s[0]))
    # rows of vh are orthonormal under the plain vector inner product, which is
    # the Hilbert-Schmidt product on reshaped matrices
    basis = vh[:rank].reshape(rank, dim, dim)
    return OperatorSpan(dim, basis, tuple(labels))


def project(op, span: OperatorSpan, tol: float = SPAN_TOL) -> SpanVerdict:
    op = np.asarray(op, dtype=complex)
    if op.shape != (span.dim, span.dim):
        raise ValueError(f"operator shape {op.shape} does not match span dimension {span.dim}")
    flat = span.basis.reshape(span.size, span.dim * span.dim)
    coeffs = np.conj(flat) @ op.reshape(-1)
    par = (coeffs @ flat).reshape(op.shape) if span.size else np.zeros_like(op)
    orth = op - par
    res = float(np.linalg.norm(orth))
    return SpanVerdict(parallel=par, orthogonal=orth, residual=res,
                       in_span=res <= tol * max(1.0, float(np.linalg.norm(op))))


def _check_env_basis(basis, d_E: int) -> list[np.ndarray]:
    vecs = [np.asarray(b, dtype=complex).reshape(-1) for b in basis]
    if len(vecs) != d_E or any(v.shape != (d_E,) for v in vecs):
        raise ValueError(f"environment basis must contain {d_E} vectors of length {d_E}")
    m = np.column_stack(vecs)
    if np.max(np.abs(dag(m) @ m - np.eye(d_E))) > 1e-9:
        raise ValueError("environment basis is not orthonormal")
    return vecs


def env_blocks(op: np.ndarray, basis: Sequence[np.ndarray], d_P: int) -> np.ndarray:
    """Blocks ⟨φi|op|φm⟩ as an array of shape (d_E, d_E, d_P, d_P)."""
    d_E = len(basis)
    u = np.column_stack(basis)
    t = op.reshape(d_E, d_P, d_E, d_P)
    return np.einsum("ai,apbq,bm->impq", np.conj(u), t, u)


def computational_basis(d: int) -> list[np.ndarray]:
    return [np.eye(d, dtype=complex)[:, i] for i in range(d)]


def build_extended_span(model: HmmModel, env_basis=None) -> OperatorSpan:
    basis = _check_env_basis(env_basis if env_basis is not None else computational_basis(model.d_E), model.d_E)
    d_E, d_P = model.d_E, model.d_P
    gens, labels = [np.eye(d_P, dtype=complex)], ["1"]
    h = env_blocks(model.H_EP, basis, d_P)
    jb = [env_blocks(l, basis, d_P) for l in model.jumps]
    for i in range(d_E):
        for m in range(d_E):
            gens.append(h[i, m])
            labels.append(("H", i, m))
            for k, b in enumerate(jb):
                gens += [b[i, m], dag(b[m, i])]
                labels += [("L", k, i, m), ("Ldag", k, i, m)]
    # products ⟨φi|L_k†|φm⟩⟨φn|L_j|φl⟩ over every index combination
    for k, bk in enumerate(jb):
        for j, bj in enumerate(jb):
            for i in range(d_E):
                for m in range(d_E):
                    left = dag(bk[m, i])
                    for n in range(d_E):
                        for l in range(d_E):
                            gens.append(left @ bj[n, l])
                            labels.append(("LdagL", k, j, i, m, n, l))
    return span_from_generators(gens, labels)


def build_diagonal_span(model: HmmModel, env_basis=None) -> OperatorSpan:
    basis = _check_env_basis(env_basis if env_basis is not None else computational_basis(model.d_E), model.d_E)
    d_E, d_P = model.d_E, model.d_P
    gens, labels = [np.eye(d_P, dtype=complex)], ["1"]
    jb = [env_blocks(l, basis, d_P) for l in model.jumps]
    for i in range(d_E):
        for k, b in enumerate(jb):
            gens += [b[i, i], dag(b[i, i])]
            labels += [("L", k, i), ("Ldag", k, i)]
        for k, bk in enumerate(jb):
            for j, bj in enumerate(jb):
                gens.append(dag(bk[i, i]) @ bj[i, i])
                labels.append(("LdagL", k, j, i))
    return span_from_generators(gens, labels)


def build_full_system_span(model: HmmModel) -> OperatorSpan:
    gens, labels = [np.eye(model.d_EP, dtype=complex)], ["1"]
    for k, l in enumerate(model.jumps):
        gens += [l, dag(l)]
        labels += [("L", k), ("Ldag", k)]
    for k, lk in enumerate(model.jumps):
        for j, lj in enumerate(model.jumps):
            gens.append(dag(lk) @ lj)
            labels.append(("LdagL", k, j))
    return span_from_generators(gens, labels)


def _env_operator_family(model: HmmModel) -> list[np.ndarray]:
    """Every environment-side operator that must be diagonal for a diagonal interaction."""
    d_E, d_P = model.d_E, model.d_P
    fam = [model.H_E]
    for op in (model.H_EP, *model.jumps):
        t = op.reshape(d_E, d_P, d_E, d_P)
        fam += [t[:, p, :, q] for p in range(d_P) for q in range(d_P)]
    herm = []
    for a in fam:
        herm += [0.5 * (a + dag(a)), 0.5j * (dag(a) - a)]
    return [h for h in herm if np.linalg.norm(h) > 1e-14]


def is_diagonal_interaction(model: HmmModel, tol: float = SPAN_TOL) -> tuple[bool, list[np.ndarray] | None]:
    """Search for an environment basis that block-diagonalizes every operator.

    The environment-side operator-Schmidt factors of H_EP and the jumps, together
    with H_E, must be simultaneously unitarily diagonalizable.  That holds iff
    their Hermitian parts commute pairwise.  The common basis is built by
    diagonalizing each operator in turn inside the joint eigenspaces of the
    operators already processed, then verified on the whole family.
    """
    d_E = model.d_E
    if d_E == 1:
        return True, [np.ones(1, dtype=complex)]
    fam = _env_operator_family(model)
    scale = max([1.0] + [float(np.linalg.norm(h)) for h in fam])
    for a_idx, a in enumerate(fam):
        for b in fam[a_idx + 1:]:
            if np.linalg.norm(a @ b - b @ a) > tol * scale * scale:
                return False, None
    u = np.eye(d_E, dtype=complex)
    sig = np.zeros((d_E, 0))
    for h in fam:
        m = dag(u) @ h @ u
        new_u, new_vals = u.copy(), np.zeros(d_E)
        for cols in _clusters(sig, tol * scale):
            e = herm_eig(0.5 * (m[np.ix_(cols, cols)] + dag(m[np.ix_(cols, cols)])))
            new_u[:, cols] = u[:, cols] @ e.vectors
            new_vals[cols] = e.values
        u, sig = new_u, np.column_stack([sig, new_vals])
    for h in fam:
        m = dag(u) @ h @ u
        if np.linalg.norm(m - np.diag(np.diag(m))) > tol * scale:
            return False, None
    return True, [u[:, i] for i in range(d_E)]


def _clusters(sig: np.ndarray, tol: float) -> list[list[int]]:
    """Group rows whose signature vectors agree within tol."""
    groups: list[list[int]] = []
    for i in range(sig.shape[0]):
        for g in groups:
            if np.all(np.abs(sig[g[0]] - sig[i]) <= tol):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


@dataclass(frozen=True, eq=False)
class ClassifyResult:
    label: str
    residuals: dict
    span_sizes: dict
    env_basis: list | None = field(default=None)


def classify(model: HmmModel, tol: float = SPAN_TOL) -> ClassifyResult:
    """Apply the scaling criteria in precedence order.

    1. G outside the extended span: Heisenberg scaling with QEC.
    2. G̃ + H̃_E inside the full-system span: at most standard scaling.
    3. Diagonal interaction with G outside the diagonal span: Heisenberg-limited envelope.
    4. No jumps and H_E = 0: Heisenberg-limited envelope.
    Otherwise the scaling depends on the initial environment state.
    """
    residuals, sizes = {}, {}
    ext = build_extended_span(model)
    v_ext = project(model.G, ext, tol)
    residuals["extended"] = v_ext.residual
    sizes["extended"] = ext.size
    full = build_full_system_span(model)
    sig = np.kron(np.eye(model.d_E), model.G) + np.kron(model.H_E, np.eye(model.d_P))
    v_full = project(sig, full, tol)
    residuals["full_system"] = v_full.residual
    sizes["full_system"] = full.size
    diag_ok, basis = is_diagonal_interaction(model, tol)
    v_diag = None
    if diag_ok:
        dspan = build_diagonal_span(model, basis)
        v_diag = project(model.G, dspan, tol)
        residuals["diagonal"] = v_diag.residual
        sizes["diagonal"] = dspan.size
    unitary = not model.has_jumps() and np.linalg.norm(model.H_E) <= tol

    if not v_ext.in_span:
        label = HNES
    elif v_full.in_span:
        label = HNLS_VIOLATED
    elif diag_ok and not v_diag.in_span:
        label = HNELS
    elif unitary:
        label = UNITARY
    else:
        label = INDETERMINATE
    return ClassifyResult(label=label, residuals=residuals, span_sizes=sizes,
                          env_basis=basis if diag_ok else None)


def g_perp(model: HmmModel, span: OperatorSpan) -> np.ndarray:
    """Component of G orthogonal to a span (Hermitian whenever the span is adjoint-closed)."""
    orth = project(model.G, span).orthogonal
    return 0.5 * (orth + dag(orth))


def embed_env_op(op: np.ndarray, d_P: int) -> np.ndarray:
    return kron(op, np.eye(d_P))
