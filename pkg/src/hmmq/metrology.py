"""Fisher information tools: mixed-state QFI, logical envelopes, diagonal-model
probabilities and the Fisher information of binomial mixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np
from scipy.special import gammaln

from .model import HmmModel
from .numkit import Z, dag, herm_eig, require_hermitian
from .qec import MetrologyCode, with_aux

QFI_EIG_CUTOFF = 1e-12
MERGE_TOL = 1e-10


def qfi_mixed(rho, drho, cutoff: float = QFI_EIG_CUTOFF) -> float:
    """QFI = 2 Σ |⟨γi|∂ρ|γj⟩|² / (γi + γj) over pairs with γi + γj above cutoff."""
    rho = require_hermitian(rho, "rho", tol=1e-9)
    drho = require_hermitian(drho, "drho", tol=1e-9)
    if rho.shape != drho.shape:
        raise ValueError("rho and drho differ in shape")
    eig = herm_eig(0.5 * (rho + dag(rho)))
    g = np.clip(eig.values, 0.0, None)
    d = dag(eig.vectors) @ drho @ eig.vectors
    den = g[:, None] + g[None, :]
    mask = den > cutoff
    return float(2.0 * np.sum(np.abs(d[mask]) ** 2 / den[mask]))


@dataclass(frozen=True, eq=False)
class EnvelopeSeries:
    """α(t) = Σ_m c_m e^{-i t φ_m}."""

    coeffs: np.ndarray
    freqs: np.ndarray

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        return np.sum(self.coeffs * np.exp(-1j * np.multiply.outer(t, self.freqs)), axis=-1)

    def __call__(self, t):
        return self.evaluate(t)


def codeword_blocks(model: HmmModel, code: MetrologyCode, op: np.ndarray | None = None):
    """Environment operators ⟨C0|O|C0⟩ and ⟨C1|O|C1⟩ for O on E⊗P (lifted by 1_A)."""
    m = with_aux(model, code.d_A)
    o = m.lift_ep(m.H_EP if op is None else op)
    r = code.dim
    t = o.reshape(m.d_E, r, m.d_E, r)
    b0 = np.einsum("p,apbq,q->ab", np.conj(code.c0), t, code.c0)
    b1 = np.einsum("p,apbq,q->ab", np.conj(code.c1), t, code.c1)
    return b0, b1


def envelope_alpha(model: HmmModel, code: MetrologyCode, env_state, merge_tol: float = 1e-12) -> EnvelopeSeries:
    """Logical off-diagonal envelope for jump-free dynamics with H_E = 0.

    Uses the eigensystems of the two codeword blocks of H_EP; c_k^a = ⟨ψ_k^a|ψ_E⟩/√2.
    Terms with equal frequency are combined.
    """
    if model.has_jumps():
        raise ValueError("envelope_alpha needs a model without jump operators")
    if np.linalg.norm(model.H_E) > 1e-12:
        raise ValueError("envelope_alpha needs H_E = 0")
    psi = np.asarray(env_state, dtype=complex).reshape(-1)
    if psi.shape != (model.d_E,):
        raise ValueError(f"env_state must be a vector of length {model.d_E}")
    psi = psi / np.linalg.norm(psi)
    b0, b1 = codeword_blocks(model, code)
    e0, e1 = herm_eig(b0), herm_eig(b1)
    c0 = dag(e0.vectors) @ psi / math.sqrt(2)
    c1 = dag(e1.vectors) @ psi / math.sqrt(2)
    overlap = dag(e1.vectors) @ e0.vectors  # [l, k] = ⟨ψ_l^1|ψ_k^0⟩
    coeffs = (c0[None, :] * np.conj(c1)[:, None] * overlap).reshape(-1)
    freqs = (e0.values[None, :] - e1.values[:, None]).reshape(-1)
    order = np.argsort(freqs, kind="stable")
    freqs, coeffs = freqs[order], coeffs[order]
    fs, cs = [], []
    for f, c in zip(freqs, coeffs):
        if fs and abs(f - fs[-1]) <= merge_tol * max(1.0, abs(f)):
            cs[-1] += c
        else:
            fs.append(f)
            cs.append(c)
    keep = np.abs(np.array(cs)) > 1e-15
    if not np.any(keep):
        keep[:] = True
    return EnvelopeSeries(coeffs=np.array(cs)[keep], freqs=np.array(fs)[keep])


def logical_alpha(rho_pa: np.ndarray, code: MetrologyCode, omega: float = 0.0, t: float = 0.0) -> complex:
    """Envelope read off a probe-auxiliary state: e^{iωtΔλ}⟨C0|ρ|C1⟩."""
    return complex(np.exp(1j * omega * t * code.delta_lambda) * np.vdot(code.c0, rho_pa @ code.c1))


def qfi_envelope(series: EnvelopeSeries, delta_lambda: float, t: float) -> float:
    return float(4.0 * t * t * delta_lambda**2 * abs(series.evaluate(t)) ** 2)


def _golden_max(f, a: float, b: float, iters: int = 60) -> float:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def find_revivals(series: EnvelopeSeries, threshold: float, window: tuple[float, float],
                  grid: int) -> list[float]:
    """Times in the window where |α(t)| reaches the threshold.

    Each qualifying grid point climbs the grid to its local maximum, which is then
    refined by golden-section search; a point stays put when refinement does not
    increase |α| (flat envelopes keep every grid point).  Coincident times merge.
    """
    if not 0.0 < threshold < 0.5:
        raise ValueError("threshold must lie in (0, 1/2)")
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise ValueError("window must satisfy t_min < t_max")
    if grid < 2:
        raise ValueError("grid must hold at least 2 points")
    ts = np.linspace(t0, t1, grid)
    vals = np.abs(series.evaluate(ts))
    h = ts[1] - ts[0]
    f = lambda s: float(abs(series.evaluate(s)))
    out: list[float] = []
    peak_cache: dict[int, float] = {}
    for i in np.nonzero(vals >= threshold)[0]:
        j = i
        while True:
            nxt = j
            if j + 1 < grid and vals[j + 1] > vals[nxt]:
                nxt = j + 1
            if j > 0 and vals[j - 1] > vals[nxt]:
                nxt = j - 1
            if nxt == j:
                break
            j = nxt
        if j not in peak_cache:
            ref = _golden_max(f, max(t0, ts[j] - h), min(t1, ts[j] + h))
            peak_cache[j] = ref if f(ref) > vals[j] + 1e-15 else float(ts[j])
        out.append(peak_cache[j])
    out = sorted(out)
    merged: list[float] = []
    for t in out:
        if not merged or t - merged[-1] > 1e-12 * max(1.0, abs(t)):
            merged.append(t)
    return merged


def diagonal_probability(gamma: complex, delta_lambda: float, omega: float, t: float) -> tuple[float, float]:
    """Outcome probability and its ω-derivative for one environment branch.

    p = 1/2 + 1/2 e^{-Re Γ t} sin((Im Γ + ωΔλ) t).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    gamma = complex(gamma)
    if gamma.real < -1e-12:
        raise ValueError("Re(Gamma) must be non-negative")
    decay = math.exp(-gamma.real * t)
    phase = (gamma.imag + omega * delta_lambda) * t
    return 0.5 + 0.5 * decay * math.sin(phase), 0.5 * decay * delta_lambda * t * math.cos(phase)


def logical_dephasing_kraus(gamma: complex, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Kraus pair of the logical channel in the (C0, C1) basis."""
    if t < 0:
        raise ValueError("t must be non-negative")
    gamma = complex(gamma)
    if gamma.real < -1e-12:
        raise ValueError("Re(Gamma) must be non-negative")
    decay = math.exp(-gamma.real * t)
    rot = np.diag(np.exp(-0.5j * gamma.imag * t * np.array([1.0, -1.0])))
    a0 = math.sqrt((1 + decay) / 2) * rot
    a1 = math.sqrt(max(0.0, (1 - decay) / 2)) * Z @ rot
    return a0, a1


def branch_gamma(model: HmmModel, code: MetrologyCode, env_vec) -> complex:
    """Logical decay constant Γ for an environment eigenvector of a diagonal model.

    Γ = i(h0 - h1) + Σ_k [½(⟨C0|L†L|C0⟩ + ⟨C1|L†L|C1⟩) - ⟨C0|L|C0⟩⟨C1|L|C1⟩*]
    with all operators taken in the environment branch.
    """
    m = with_aux(model, code.d_A)
    phi = np.asarray(env_vec, dtype=complex).reshape(-1)
    phi = phi / np.linalg.norm(phi)

    def branch(op):
        o = m.lift_ep(op)
        r = code.dim
        return np.einsum("a,apbq,b->pq", np.conj(phi), o.reshape(m.d_E, r, m.d_E, r), phi)

    h = branch(m.H_EP)
    gamma = 1j * (np.vdot(code.c0, h @ code.c0) - np.vdot(code.c1, h @ code.c1))
    for l in m.jumps:
        lb = branch(l)
        ldl = branch(dag(l) @ l)
        l0 = np.vdot(code.c0, lb @ code.c0)
        l1 = np.vdot(code.c1, lb @ code.c1)
        gamma += 0.5 * (np.vdot(code.c0, ldl @ code.c0) + np.vdot(code.c1, ldl @ code.c1)) - l0 * np.conj(l1)
    return complex(gamma)


@dataclass(frozen=True, eq=False)
class BinomialMixture:
    """Σ α_i Binom(N, p_i) with derivatives ∂p_i; near-equal p values are merged."""

    weights: np.ndarray
    probs: np.ndarray
    dprobs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.weights, dtype=float).reshape(-1)
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        dp = np.asarray(self.dprobs, dtype=float).reshape(-1)
        if not (a.shape == p.shape == dp.shape) or a.size == 0:
            raise ValueError("weights, probs and dprobs must be non-empty and equally long")
        if np.any(a < 0) or abs(a.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("every p_i must lie strictly between 0 and 1")
        keep = a > 0
        a, p, dp = a[keep], p[keep], dp[keep]
        order = np.argsort(p, kind="stable")
        a, p, dp = a[order], p[order], dp[order]
        ma, mp, mdp = [], [], []
        for ai, pi, di in zip(a, p, dp):
            if mp and abs(pi - mp[-1]) < MERGE_TOL:
                # equal p: the derivative term is linear in α·∂p, so merge exactly
                tot = ma[-1] + ai
                mdp[-1] = (ma[-1] * mdp[-1] + ai * di) / tot
                ma[-1] = tot
            else:
                ma.append(ai)
                mp.append(pi)
                mdp.append(di)
        object.__setattr__(self, "weights", np.array(ma))
        object.__setattr__(self, "probs", np.array(mp))
        object.__setattr__(self, "dprobs", np.array(mdp))


def binomial_mixture_fi(mix: BinomialMixture, n: int) -> float:
    """Fisher information of the outcome count of n rounds, evaluated in log space."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return 0.0
    k = np.arange(n + 1)[:, None]
    a, p, dp = mix.weights[None, :], mix.probs[None, :], mix.dprobs[None, :]
    logc = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    logw = np.log(a) + logc + k * np.log(p) + (n - k) * np.log1p(-p)
    top = logw.max(axis=1, keepdims=True)
    w = np.exp(logw - top)
    score = dp * (k - n * p) / (p * (1 - p))
    num = np.sum(w * score, axis=1)
    den = np.sum(w, axis=1)
    return float(np.sum(np.exp(top[:, 0]) * num * num / den))


def dephasing_state(t: float, omega: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Single-probe state e^{-2t} U|−⟩⟨−|U† + (1 - e^{-2t}) 1/2 with U = e^{-iωtZ}, and ∂ω of it."""
    minus = np.array([1.0, -1.0], dtype=complex) / math.sqrt(2)
    u = np.diag(np.exp(-1j * omega * t * np.array([1.0, -1.0])))
    pure = u @ np.outer(minus, np.conj(minus)) @ dag(u)
    decay = math.exp(-2.0 * t)
    rho = decay * pure + (1 - decay) * np.eye(2) / 2
    drho = decay * (-1j * t) * (Z @ pure - pure @ Z)
    return rho, drho


def dephasing_closed_form(t: float) -> float:
    """Per-probe QFI of the dephased single-probe state; e^{-2π}π² at t = π/2."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return qfi_mixed(*dephasing_state(t))
