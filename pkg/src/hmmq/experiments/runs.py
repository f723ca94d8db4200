"""Experiment drivers: Fisher-information curves for the exchange-coupled model,
ensembles of random master equations, and the two-qubit dephasing closed form.

Seeding: environment states and random models come from child streams of
(seed, fixed stream id) indexed by state or model number, and each Monte Carlo
curve point uses its own child stream, so every output is a pure function of
the configuration.
"""

from __future__ import annotations

import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..metrology import dephasing_closed_form, dephasing_state, qfi_mixed
from ..model import StatePair, propagate
from ..numkit import NumericalFault, RngStream, haar_state, kron_all
from ..trajectory import ProtocolConfig, exact_fi, fi_curve, round_maps
from .presets import dephasing_2q, heisenberg, random_model
from .stats import linregress

ENV_STREAM, MC_STREAM, MODEL_STREAM, MODEL_MC_STREAM = 0, 1, 2, 3

CURVE_COLUMNS = ["state", "N", "fi", "error_bar", "fi_exact", "method", "samples", "seed"]
FIT_COLUMNS = ["state", "slope", "intercept", "r_c", "degenerate", "n_points"]
RANDOM_COLUMNS = ["model", "slope", "intercept", "r_c", "degenerate", "fi_first", "fi_last", "h_e", "seed", "error"]


def tool_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


def manifest(command: str, config: dict) -> dict:
    """Everything needed to rerun a command and get identical outputs."""
    import scipy
    return {
        "command": command,
        "config": config,
        "tool_version": tool_version(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "argv": sys.argv,
    }


@dataclass
class HeisenbergConfig:
    seed: int = 0
    n_max: int = 60
    samples: int = 25000
    h_e: bool = False
    states: int = 5
    gamma: float = 1.0
    dwell: float = 0.25
    exact_max: int = 15
    workers: int = 1


@dataclass
class CurveResult:
    rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)


def heisenberg_env_states(seed: int, count: int) -> list[np.ndarray]:
    base = RngStream(seed, ENV_STREAM)
    return [haar_state(2, base.spawn(i)).reshape(-1) for i in range(count)]


def _fi_curve_rows(model, env, dwell, n_max, samples, exact_max, seed, stream, label, key):
    cfg = ProtocolConfig(dwell=dwell, env_state=env, samples=max(samples, 1), seed=seed, stream=stream)
    maps = round_maps(model, cfg)
    exact = {n: exact_fi(model, cfg.replace(rounds=n), maps) for n in range(1, min(exact_max, n_max) + 1)}
    rows = []
    if samples > 0:
        for n, est in fi_curve(model, cfg, range(1, n_max + 1), maps=maps):
            rows.append({key: label, "N": n, "fi": est.estimate, "error_bar": est.std_error,
                         "fi_exact": exact.get(n), "method": "mc", "samples": est.samples, "seed": seed})
    else:
        for n, v in exact.items():
            rows.append({key: label, "N": n, "fi": v, "error_bar": 0.0, "fi_exact": v,
                         "method": "exact", "samples": 0, "seed": seed})
    return rows


def _heisenberg_job(args):
    cfg, i, env = args
    model = heisenberg(cfg.gamma, cfg.h_e)
    stream = RngStream(cfg.seed, MC_STREAM).spawn(i).stream
    return _fi_curve_rows(model, env, cfg.dwell, cfg.n_max, cfg.samples, cfg.exact_max,
                          cfg.seed, stream, i, "state")


def _fit(rows, key, label):
    res = linregress([(r["N"], r["fi"]) for r in rows])
    return {key: label, "slope": res.slope, "intercept": res.intercept, "r_c": res.r,
            "degenerate": res.degenerate, "n_points": res.n}


def run_heisenberg(cfg: HeisenbergConfig) -> CurveResult:
    """FI versus N for Haar environment states, with one linear fit per state."""
    if cfg.n_max < 2 or cfg.states < 1 or cfg.samples < 0:
        raise ValueError("need n_max >= 2, states >= 1 and samples >= 0")
    if cfg.samples == 0 and min(cfg.exact_max, cfg.n_max) < 2:
        raise ValueError("exact-only mode needs at least two rounds within the exact budget")
    envs = heisenberg_env_states(cfg.seed, cfg.states)
    jobs = [(cfg, i, env) for i, env in enumerate(envs)]
    results = _map(_heisenberg_job, jobs, cfg.workers)
    out = CurveResult()
    for i, rows in enumerate(results):
        out.rows += rows
        out.fits.append(_fit(rows, "state", i))
    return out


@dataclass
class RandomModelsConfig:
    count: int = 50
    seed: int = 0
    n_max: int = 30
    samples: int = 25000
    h_e: bool = False
    dwell: float = 0.1
    workers: int = 1


def _random_job(args):
    cfg, j = args
    model, env = random_model(RngStream(cfg.seed, MODEL_STREAM).spawn(j), cfg.h_e)
    stream = RngStream(cfg.seed, MODEL_MC_STREAM).spawn(j).stream
    try:
        rows = _fi_curve_rows(model, env, cfg.dwell, cfg.n_max, cfg.samples, 0 if cfg.samples else cfg.n_max,
                              cfg.seed, stream, j, "model")
        fit = _fit(rows, "model", j)
    except (NumericalFault, np.linalg.LinAlgError, ValueError) as exc:
        # one bad model must not sink the ensemble
        nan = float("nan")
        return {"model": j, "slope": nan, "intercept": nan, "r_c": nan, "degenerate": True,
                "fi_first": nan, "fi_last": nan, "h_e": int(cfg.h_e), "seed": cfg.seed,
                "error": f"{type(exc).__name__}: {exc}"}, []
    fit.pop("n_points")
    fit.update(fi_first=rows[0]["fi"], fi_last=rows[-1]["fi"], h_e=int(cfg.h_e), seed=cfg.seed, error="")
    return fit, rows


def run_random_models(cfg: RandomModelsConfig) -> CurveResult:
    """Linear fits of FI versus N for an ensemble of random master equations."""
    if cfg.count < 1 or cfg.n_max < 2 or cfg.samples < 0:
        raise ValueError("need count >= 1, n_max >= 2 and samples >= 0")
    results = _map(_random_job, [(cfg, j) for j in range(cfg.count)], cfg.workers)
    out = CurveResult()
    for fit, rows in results:
        out.fits.append(fit)
        out.rows += rows
    return out


def summarize_fits(fits: list[dict]) -> dict:
    """Quantiles of slope and r_c over the successful fits."""
    ok = [f for f in fits if not f.get("error")]
    summary = {"models": len(fits), "failed": len(fits) - len(ok)}
    for key in ("slope", "r_c"):
        v = np.array([f[key] for f in ok], dtype=float)
        if v.size:
            summary[key] = {"min": float(v.min()), "q25": float(np.quantile(v, 0.25)),
                            "median": float(np.median(v)), "q75": float(np.quantile(v, 0.75)),
                            "max": float(v.max())}
    return summary


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


@dataclass
class DephasingReport:
    per_probe: float
    closed_form: float
    probes: int
    total: float
    state_residual: float
    model_residual: float
    product_residual: float
    explicit_probes: int

    def as_dict(self) -> dict:
        return asdict(self)


def _shelved_two_probe_state(t: float):
    """Two probes touching the environment one after the other, from the dephasing model.

    The auxiliary factor holds the second probe while the first interacts; a SWAP
    exchanges their roles for the second interaction.
    """
    model = dephasing_2q().replace(d_A=2)
    plus = np.array([1.0, 1.0]) / math.sqrt(2)
    env = np.array([0.8, 0.6j])
    state = StatePair.product(env, plus, plus)
    swap = np.eye(4)[[0, 2, 1, 3]]
    sw = np.kron(np.eye(2), swap)
    state = propagate(model, state, t)
    state = StatePair(sw @ state.rho @ sw.T, sw @ state.drho @ sw.T)
    state = propagate(model, state, t)
    return state.reduce([2, 2, 2], [1, 2])


def _product_pair(rho, drho, n: int):
    big = kron_all(*([rho] * n))
    dbig = sum(kron_all(*[drho if k == j else rho for k in range(n)]) for j in range(n))
    return big, dbig


def run_dephasing(probes: int = 10, explicit_probes: int = 6) -> DephasingReport:
    """Per-probe QFI at t = π/2 and the N-probe total, each checked a second way.

    * the closed-form single-probe state against e^{-2π}π²;
    * the dephasing model itself, run with two probes in sequence, against the
      product of two closed-form single-probe states;
    * the QFI of explicit tensor powers against N times the per-probe value.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    t = math.pi / 2
    closed = math.exp(-2 * math.pi) * math.pi**2
    per = dephasing_closed_form(t)
    rho1, drho1 = dephasing_state(t)
    two, dtwo = _shelved_two_probe_state(t)
    ref, dref = _product_pair(rho1, drho1, 2)
    model_res = max(float(np.max(np.abs(two - ref))), float(np.max(np.abs(dtwo - dref))))
    n_exp = min(probes, explicit_probes)
    prod_res = 0.0
    for n in range(1, n_exp + 1):
        prod_res = max(prod_res, abs(qfi_mixed(*_product_pair(rho1, drho1, n)) - n * per))
    return DephasingReport(per_probe=per, closed_form=closed, probes=probes, total=probes * per,
                           state_residual=abs(per - closed), model_residual=model_res,
                           product_residual=prod_res, explicit_probes=n_exp)
