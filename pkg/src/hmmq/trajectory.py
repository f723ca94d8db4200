"""Prepare-and-measure rounds on a probe sharing a persistent environment.

Each round prepares a fresh probe, lets the joint system evolve for the dwell
time, and projects the probe onto one measurement vector.  Only the
environment survives between rounds, so a branch is carried as an unnormalized
environment matrix together with its ω-derivative; its trace is the joint
probability of the outcome history.

With a code in the protocol the evolution is the infinitely-fast
projection-and-recovery limit, and preparations/measurements act on P⊗A.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import HmmModel, build_liouvillian, evolution_maps, sprepost
from .numkit import NumericalFault, RngStream, as_density, dag, vec
from .qec import MetrologyCode, projected_liouvillian, with_aux

PRUNE_TOL = 1e-14
NEGATIVE_TOL = 1e-9
ABORT_TOL = 1e-300
MC_BLOCK = 4096
DEFAULT_MAX_LEAVES = 2**16


@dataclass(frozen=True, eq=False)
class ProtocolConfig:
    """Prepare-and-measure settings.

    Without ``code`` the defaults prepare |+i⟩ = (|0⟩ + i|1⟩)/√2 and measure in the
    X eigenbasis of a qubit probe.  With ``code`` the defaults prepare
    (|C0⟩ + |C1⟩)/√2 and measure (|C0⟩ ± i|C1⟩)/√2, evolving under fast
    projection plus ``recovery`` (the marker-based dephasing recovery by default).
    """

    dwell: float
    rounds: int = 1
    env_state: np.ndarray | None = None
    probe_prep: np.ndarray | None = None
    measurement_basis: Sequence[np.ndarray] | None = None
    code: MetrologyCode | None = None
    recovery: object = "dephasing"
    samples: int = 25000
    seed: int = 0
    stream: int = 0
    max_leaves: int = DEFAULT_MAX_LEAVES

    def replace(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)

    @property
    def rng(self) -> RngStream:
        return RngStream(self.seed, self.stream)


@dataclass(frozen=True, eq=False)
class EnvSensitivityPair:
    """Unnormalized environment branch state and its ω-derivative."""

    rho: np.ndarray
    drho: np.ndarray

    @property
    def probability(self) -> float:
        return float(np.real(np.trace(self.rho)))

    @property
    def dprobability(self) -> float:
        return float(np.real(np.trace(self.drho)))


@dataclass(frozen=True, eq=False)
class FiEstimate:
    estimate: float
    variance_bound: float
    samples: int
    aborted: int = 0
    rounds: int = 0

    @property
    def std_error(self) -> float:
        return math.sqrt(max(self.variance_bound, 0.0))


@dataclass(frozen=True, eq=False)
class RoundMaps:
    """Per-outcome linear maps on vec(ρ_E): ρ' = K ρ, ∂ρ' = K ∂ρ + dK ρ."""

    K: np.ndarray  # (n_out, d_E², d_E²)
    dK: np.ndarray
    d_E: int
    trace_vec: np.ndarray
    env0: np.ndarray  # vec of the initial environment state

    @property
    def n_out(self) -> int:
        return int(self.K.shape[0])


def _probe_space(model: HmmModel, cfg: ProtocolConfig):
    if cfg.code is not None:
        m = with_aux(model, cfg.code.d_A)
        prep = cfg.code.plus if cfg.probe_prep is None else cfg.probe_prep
        basis = [cfg.code.plus_i(1), cfg.code.plus_i(-1)] if cfg.measurement_basis is None else cfg.measurement_basis
    else:
        m = model
        r = m.d_P * m.d_A
        if (cfg.probe_prep is None or cfg.measurement_basis is None) and r != 2:
            raise ValueError("default preparation and measurement need a single qubit probe; pass them explicitly")
        prep = np.array([1.0, 1j]) / math.sqrt(2) if cfg.probe_prep is None else cfg.probe_prep
        basis = ([np.array([1.0, 1.0]) / math.sqrt(2), np.array([1.0, -1.0]) / math.sqrt(2)]
                 if cfg.measurement_basis is None else cfg.measurement_basis)
    r = m.d_P * m.d_A
    prep = np.asarray(prep, dtype=complex).reshape(-1)
    if prep.shape != (r,):
        raise ValueError(f"probe preparation must have length {r}")
    if abs(np.linalg.norm(prep) - 1) > 1e-9:
        raise ValueError("probe preparation must be normalized")
    vecs = [np.asarray(b, dtype=complex).reshape(-1) for b in basis]
    if not vecs or any(v.shape != (r,) for v in vecs):
        raise ValueError(f"measurement vectors must have length {r}")
    gram = np.array([[np.vdot(a, b) for b in vecs] for a in vecs])
    if np.max(np.abs(gram - np.eye(len(vecs)))) > 1e-9:
        raise ValueError("measurement vectors must be orthonormal")
    return m, prep, vecs


def round_maps(model: HmmModel, cfg: ProtocolConfig) -> RoundMaps:
    """Precompute the per-outcome environment maps of one round."""
    if cfg.dwell < 0:
        raise ValueError("dwell time must be non-negative")
    m, prep, basis = _probe_space(model, cfg)
    liouv = projected_liouvillian(m, cfg.code, cfg.recovery) if cfg.code is not None else build_liouvillian(m)
    phi, dphi = evolution_maps(liouv, cfg.dwell)
    ie = np.eye(m.d_E)
    embed_op = np.kron(ie, prep.reshape(-1, 1))  # (D, d_E)
    embed = sprepost(embed_op, dag(embed_op))
    ks, dks = [], []
    for b in basis:
        a = np.kron(ie, np.conj(b).reshape(1, -1))  # (d_E, D)
        extract = sprepost(a, dag(a))
        ks.append(extract @ phi @ embed)
        dks.append(extract @ dphi @ embed)
    env = np.eye(m.d_E) / m.d_E if cfg.env_state is None else as_density(cfg.env_state, m.d_E, "env_state")
    return RoundMaps(K=np.array(ks), dK=np.array(dks), d_E=m.d_E,
                     trace_vec=vec(np.eye(m.d_E)).astype(complex), env0=vec(env).astype(complex))


def initial_env(model: HmmModel, cfg: ProtocolConfig) -> EnvSensitivityPair:
    d = model.d_E
    env = np.eye(d) / d if cfg.env_state is None else as_density(cfg.env_state, d, "env_state")
    return EnvSensitivityPair(env.astype(complex), np.zeros((d, d), dtype=complex))


def _check_prob(p: float) -> float:
    if p < -NEGATIVE_TOL:
        raise NumericalFault(f"negative outcome probability {p:.3e}")
    return max(p, 0.0)


def round_step(model: HmmModel, env: EnvSensitivityPair, cfg: ProtocolConfig, outcome: int,
               maps: RoundMaps | None = None):
    """One prepare-evolve-measure round on a branch.

    Returns (probability, dprobability, env') where the probability is the trace
    of the unnormalized post-measurement environment block (the joint probability
    of the history when ``env`` carries the history's weight).
    """
    maps = round_maps(model, cfg) if maps is None else maps
    if not 0 <= outcome < maps.n_out:
        raise ValueError(f"outcome index {outcome} outside 0..{maps.n_out - 1}")
    d = maps.d_E
    r, dr = vec(env.rho), vec(env.drho)
    nr = maps.K[outcome] @ r
    ndr = maps.K[outcome] @ dr + maps.dK[outcome] @ r
    rho = nr.reshape(d, d, order="F")
    drho = ndr.reshape(d, d, order="F")
    rho, drho = 0.5 * (rho + dag(rho)), 0.5 * (drho + dag(drho))
    p = _check_prob(float(np.real(np.trace(rho))))
    return p, float(np.real(np.trace(drho))), EnvSensitivityPair(rho, drho)


def sequence_probability(model: HmmModel, cfg: ProtocolConfig, outcomes: Sequence[int],
                         maps: RoundMaps | None = None) -> tuple[float, float]:
    """Joint probability of an outcome sequence and its ω-derivative."""
    maps = round_maps(model, cfg) if maps is None else maps
    r = maps.env0.copy()
    dr = np.zeros_like(r)
    for o in outcomes:
        r, dr = maps.K[o] @ r, maps.K[o] @ dr + maps.dK[o] @ r
    return _check_prob(float(np.real(maps.trace_vec @ r))), float(np.real(maps.trace_vec @ dr))


def exact_fi(model: HmmModel, cfg: ProtocolConfig, maps: RoundMaps | None = None) -> float:
    """Classical Fisher information of all N outcomes by full branch enumeration.

    Branches are expanded one round at a time; a branch whose joint probability
    drops below 1e-14 is pruned and contributes nothing.
    """
    maps = round_maps(model, cfg) if maps is None else maps
    n = cfg.rounds
    if n < 0:
        raise ValueError("rounds must be non-negative")
    if n == 0:
        return 0.0
    if maps.n_out ** n > cfg.max_leaves:
        raise ValueError(f"{maps.n_out}^{n} branches exceed the exact budget of {cfg.max_leaves}; use mc_fi")
    tv = maps.trace_vec
    r = maps.env0[None, :]
    dr = np.zeros_like(r)
    for _ in range(n):
        nr = np.concatenate([r @ k.T for k in maps.K])
        ndr = np.concatenate([dr @ k.T + r @ dk.T for k, dk in zip(maps.K, maps.dK)])
        p = np.real(nr @ tv)
        if np.any(p < -NEGATIVE_TOL):
            raise NumericalFault(f"negative branch probability {p.min():.3e}")
        keep = p >= PRUNE_TOL
        r, dr = nr[keep], ndr[keep]
    p = np.real(r @ tv)
    dp = np.real(dr @ tv)
    return float(np.sum(dp * dp / p))


def _mc_block(K, dK, tv, env0, n_rounds: int, uniforms: np.ndarray):
    """Simulate one block of trajectories; returns (scores, aborted mask).

    Each trajectory carries (σ, τ) = (ρ, ∂ρ)/P so the score ∂P/P is Tr τ.
    """
    b = uniforms.shape[0]
    n_out, dd, _ = K.shape
    # stacked augmented maps: [σ, τ] -> [Kσ, Kτ + dKσ] for every outcome
    aug = np.zeros((n_out, 2 * dd, 2 * dd), dtype=complex)
    aug[:, :dd, :dd] = K
    aug[:, dd:, dd:] = K
    aug[:, dd:, :dd] = dK
    big = np.concatenate(list(aug), axis=0).T  # (2dd, n_out*2dd)
    state = np.zeros((b, 2 * dd), dtype=complex)
    state[:, :dd] = env0
    alive = np.ones(b, dtype=bool)
    log_p = np.zeros(b)
    idx = np.arange(b)
    for step in range(n_rounds):
        nxt = (state @ big).reshape(b, n_out, 2 * dd)
        probs = np.real(nxt[:, :, :dd] @ tv)  # (b, n_out)
        if np.any(probs[alive] < -NEGATIVE_TOL):
            raise NumericalFault(f"negative conditional probability {probs[alive].min():.3e}")
        np.clip(probs, 0.0, None, out=probs)
        cum = np.cumsum(probs, axis=1)
        u = uniforms[:, step] * cum[:, -1]
        choice = np.minimum(np.sum(u[:, None] >= cum, axis=1), n_out - 1)
        pc = probs[idx, choice]
        log_p += np.log(np.where(pc > 0, pc, 1.0))
        alive &= (pc > 0) & (log_p >= math.log(ABORT_TOL))
        safe = np.where(alive, pc, 1.0)
        state = np.where(alive[:, None], nxt[idx, choice] / safe[:, None], state)
    scores = np.where(alive, np.real(state[:, dd:] @ tv), 0.0)
    return scores, ~alive


def _run_block(args):
    K, dK, tv, env0, n_rounds, seed, stream, block, size = args
    u = RngStream(seed, stream).spawn(block).random((size, n_rounds))
    return _mc_block(K, dK, tv, env0, n_rounds, u)


def mc_fi(model: HmmModel, cfg: ProtocolConfig, maps: RoundMaps | None = None,
          workers: int = 1) -> FiEstimate:
    """Monte Carlo Fisher information (1/S) Σ (∂P/P)² with the variance bound (1/S²) Σ (∂P/P)⁴.

    Samples are processed in fixed blocks, block b drawing from the child stream
    ``spawn(b)`` of (seed, stream); results do not depend on ``workers``.
    Trajectories whose probability underflows are dropped and counted.
    """
    maps = round_maps(model, cfg) if maps is None else maps
    s, n = int(cfg.samples), int(cfg.rounds)
    if s < 1:
        raise ValueError("samples must be >= 1")
    if n < 0:
        raise ValueError("rounds must be non-negative")
    if n == 0:
        return FiEstimate(0.0, 0.0, s, 0, 0)
    sizes = [min(MC_BLOCK, s - start) for start in range(0, s, MC_BLOCK)]
    jobs = [(maps.K, maps.dK, maps.trace_vec, maps.env0, n, cfg.seed, cfg.stream, b, size)
            for b, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]
    scores = np.concatenate([r[0] for r in results])
    aborted = np.concatenate([r[1] for r in results])
    good = scores[~aborted]
    m = good.size
    if m == 0:
        raise NumericalFault("every trajectory was aborted")
    sq = good * good
    return FiEstimate(estimate=float(np.sum(sq) / m), variance_bound=float(np.sum(sq * sq) / m**2),
                      samples=m, aborted=int(aborted.sum()), rounds=n)


def fi_curve(model: HmmModel, cfg: ProtocolConfig, n_values: Sequence[int], workers: int = 1,
             maps: RoundMaps | None = None) -> list[tuple[int, FiEstimate]]:
    """Fresh Monte Carlo estimates for each N, each on its own child stream."""
    maps = round_maps(model, cfg) if maps is None else maps
    base = cfg.rng
    out = []
    for n in n_values:
        sub = cfg.replace(rounds=int(n), stream=base.spawn(int(n)).stream)
        out.append((int(n), mc_fi(model, sub, maps=maps, workers=workers)))
    return out
