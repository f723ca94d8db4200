"""Command-line entry point.

Exit codes: 0 on success, 2 for bad input (arguments, model files, I/O),
3 when a computation hits a numerical fault.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict

import numpy as np

from .. import metrology, qec, spans, trajectory
from ..model import HmmModel, StatePair, build_liouvillian, propagate_with
from ..numkit import NumericalFault, expm, projector
from .modelio import ModelFileError, ModelSpec, load_model, matrix_to_json, vector_to_json
from .presets import PRESETS, preset
from .runs import (CURVE_COLUMNS, FIT_COLUMNS, RANDOM_COLUMNS, HeisenbergConfig, RandomModelsConfig,
                   manifest, run_dephasing, run_heisenberg, run_random_models, summarize_fits)

EXIT_INPUT, EXIT_NUMERICAL = 2, 3


# -- output helpers -----------------------------------------------------------

def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, default=_jsonable)


def _table(rows: list[dict], columns: list[str], fmt: str) -> str:
    if fmt == "jsonl":
        return "".join(_dumps({c: r.get(c) for c in columns}) + "\n" for r in rows)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: ("" if r.get(c) is None else r.get(c)) for c in columns})
    return buf.getvalue()


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_manifest(args, config: dict) -> None:
    doc = manifest(args.command, config)
    text = json.dumps(doc, indent=2, default=_jsonable)
    if args.out:
        with open(args.out + ".manifest.json", "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stderr.write(text + "\n")


def _base_config(args) -> dict:
    keys = ["model", "preset", "seed", "samples", "tolerance", "format", "workers"]
    return {k: getattr(args, k, None) for k in keys}


# -- model selection ------------------------------------------------------------

def _load(args, default: str | None = None) -> ModelSpec:
    if args.model and args.preset:
        raise ValueError("pass either --model or --preset, not both")
    if args.model:
        return load_model(args.model)
    name = args.preset or default
    if name is None:
        raise ValueError("this command needs --model FILE or --preset NAME")
    return ModelSpec(preset(name), None)


def _env_vector(spec: ModelSpec) -> np.ndarray:
    if spec.env_state is not None:
        return spec.env_state
    d = spec.model.d_E
    return np.ones(d, dtype=complex) / math.sqrt(d)


def auto_code(model: HmmModel, tol: float, span: str = "auto") -> tuple[qec.MetrologyCode, str]:
    """Code from the span that the classifier says the signal escapes."""
    if span == "auto":
        verdict = spans.classify(model, tol)
        if verdict.label == spans.HNES:
            span = "extended"
        elif verdict.label == spans.HNELS:
            span = "diagonal"
        else:
            span = "trivial"
    if span == "extended":
        return qec.code_for_span(model, spans.build_extended_span(model)), span
    if span == "diagonal":
        ok, basis = spans.is_diagonal_interaction(model, tol)
        if not ok:
            raise ValueError("model has no diagonal interaction basis")
        return qec.code_for_span(model, spans.build_diagonal_span(model, basis)), span
    if span == "trivial":
        return qec.trivial_span_code(model), span
    raise ValueError(f"unknown span {span!r}")


def _code_json(code: qec.MetrologyCode, span: str) -> dict:
    return {"span": span, "lambda0": code.lambda0, "lambda1": code.lambda1,
            "delta_lambda": code.delta_lambda, "d_P": code.d_P, "d_A": code.d_A,
            "c0": vector_to_json(code.c0), "c1": vector_to_json(code.c1)}


def _times(args) -> np.ndarray:
    if args.times:
        return np.array(args.times, dtype=float)
    return np.linspace(args.t_min, args.t_max, args.points)


# -- subcommands --------------------------------------------------------------------

def cmd_classify(args) -> dict:
    spec = _load(args)
    res = spans.classify(spec.model, args.tolerance)
    doc = {"label": res.label, "residuals": res.residuals, "span_sizes": res.span_sizes}
    if res.env_basis is not None:
        doc["env_basis"] = [vector_to_json(v) for v in res.env_basis]
    _emit(args, _dumps(doc) + "\n")
    return {}


def cmd_build_code(args) -> dict:
    spec = _load(args)
    code, span = auto_code(spec.model, args.tolerance, args.span)
    _emit(args, _dumps(_code_json(code, span)) + "\n")
    return {"span": args.span}


def _repetition_errors(model: HmmModel, dwell: float) -> tuple[np.ndarray, qec.ExtendedErrorSet]:
    """Three-qubit repetition code against one-step extended errors on each qubit."""
    if model.d_P != 2:
        raise ValueError("the repetition check needs a qubit probe")
    u = expm(-1j * dwell * (model.H_EP + np.kron(model.H_E, np.eye(2))))
    blocks = qec.extended_errors([u], d_E=model.d_E)
    ops, labels = [np.eye(8, dtype=complex)], ["1"]
    for site in range(3):
        for op, lab in zip(blocks.ops, blocks.labels):
            ops.append(qec.embed_single(op, site, 3))
            labels.append(f"q{site}:{lab}")
    e0, e1 = np.zeros(8), np.zeros(8)
    e0[0], e1[7] = 1, 1
    return projector(e0) + projector(e1), qec.ExtendedErrorSet(tuple(ops), tuple(labels))


def cmd_kl_check(args) -> dict:
    spec = _load(args)
    if args.code == "repetition":
        proj, errs = _repetition_errors(spec.model, args.dwell)
        span = "repetition"
    else:
        code, span = auto_code(spec.model, args.tolerance, args.code)
        proj, errs = code.projector, qec.noise_error_set(spec.model, code)
    rep = qec.kl_check(proj, errs, args.kl_tolerance)
    doc = {"code": span, "satisfied": rep.satisfied, "max_residual": rep.max_residual,
           "worst_pair": [str(x) for x in rep.worst_pair] if rep.worst_pair else None,
           "errors": [str(l) for l in errs.labels], "c": matrix_to_json(rep.c)}
    _emit(args, _dumps(doc) + "\n")
    return {"code": args.code, "dwell": args.dwell, "kl_tolerance": args.kl_tolerance}


def cmd_qfi(args) -> dict:
    spec = _load(args)
    model = spec.model
    env = _env_vector(spec)
    rows = []
    if args.protocol == "plain":
        if model.d_P * model.d_A != 2:
            raise ValueError("the plain protocol prepares |+> on a single qubit probe")
        start = StatePair.product(env, np.array([1.0, 1.0]) / math.sqrt(2))
        liouv = build_liouvillian(model)
        bound = None
    else:
        code, _ = auto_code(model, args.tolerance, args.span)
        start = qec.logical_start(code, env, model.d_E)
        recovery = {"none": None, "dephasing": "dephasing"}.get(args.recovery)
        if args.recovery == "kl":
            recovery = qec.noise_recovery(model, code, args.kl_tolerance)
        liouv = qec.projected_liouvillian(model, code, recovery)
        model = qec.with_aux(model, code.d_A)
        bound = code.delta_lambda
    for t in _times(args):
        if args.steps and args.protocol == "qec":
            st = qec.zeno_project_evolution(spec.model, code, float(t), args.steps, start=start,
                                            recovery=recovery)
        else:
            st = propagate_with(liouv, start, float(t))
        rho, drho = st.reduce(model.dims, [1, 2])
        row = {"t": float(t), "qfi": metrology.qfi_mixed(rho, drho)}
        row["heisenberg"] = float(t * t * bound**2) if bound is not None else None
        rows.append(row)
    _emit(args, _table(rows, ["t", "qfi", "heisenberg"], args.format))
    return {"protocol": args.protocol, "steps": args.steps, "times": _times(args).tolist()}


def _series(args):
    spec = _load(args)
    code, span = auto_code(spec.model, args.tolerance, args.span)
    return metrology.envelope_alpha(spec.model, code, _env_vector(spec)), code


def cmd_alpha(args) -> dict:
    series, code = _series(args)
    rows = []
    for t in _times(args):
        a = complex(series.evaluate(float(t)))
        rows.append({"t": float(t), "alpha_abs": abs(a), "alpha_re": a.real, "alpha_im": a.imag,
                     "qfi_envelope": metrology.qfi_envelope(series, code.delta_lambda, float(t))})
    _emit(args, _table(rows, ["t", "alpha_abs", "alpha_re", "alpha_im", "qfi_envelope"], args.format))
    return {"times": _times(args).tolist()}


def cmd_revivals(args) -> dict:
    series, code = _series(args)
    ts = metrology.find_revivals(series, args.threshold, (args.t_min, args.t_max), args.points)
    rows = [{"t": t, "alpha_abs": float(abs(series.evaluate(t))),
             "qfi_envelope": metrology.qfi_envelope(series, code.delta_lambda, t)} for t in ts]
    _emit(args, _table(rows, ["t", "alpha_abs", "qfi_envelope"], args.format))
    return {"threshold": args.threshold, "window": [args.t_min, args.t_max], "grid": args.points}


def _protocol(args, spec: ModelSpec) -> trajectory.ProtocolConfig:
    code = None
    if args.with_code:
        code, _ = auto_code(spec.model, args.tolerance, args.span)
    return trajectory.ProtocolConfig(dwell=args.dwell, env_state=spec.env_state, code=code,
                                     samples=max(args.samples, 1), seed=args.seed)


def cmd_exact_fi(args) -> dict:
    spec = _load(args)
    cfg = _protocol(args, spec)
    maps = trajectory.round_maps(spec.model, cfg)
    rows = [{"N": n, "fi": trajectory.exact_fi(spec.model, cfg.replace(rounds=n), maps)}
            for n in range(1, args.n_max + 1)]
    _emit(args, _table(rows, ["N", "fi"], args.format))
    return {"dwell": args.dwell, "n_max": args.n_max, "with_code": args.with_code}


def cmd_mc_fi(args) -> dict:
    spec = _load(args)
    if args.samples < 1:
        raise ValueError("mc-fi needs --samples >= 1")
    cfg = _protocol(args, spec)
    curve = trajectory.fi_curve(spec.model, cfg, range(1, args.n_max + 1), workers=args.workers)
    rows = [{"N": n, "fi": e.estimate, "variance_bound": e.variance_bound, "error_bar": e.std_error,
             "samples": e.samples, "aborted": e.aborted, "seed": args.seed} for n, e in curve]
    _emit(args, _table(rows, ["N", "fi", "variance_bound", "error_bar", "samples", "aborted", "seed"],
                       args.format))
    return {"dwell": args.dwell, "n_max": args.n_max, "with_code": args.with_code}


def _write_fits(args, fits: list[dict], columns: list[str]) -> None:
    text = _table(fits, columns, args.format)
    if args.fits:
        with open(args.fits, "w") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def cmd_heisenberg(args) -> dict:
    cfg = HeisenbergConfig(seed=args.seed, n_max=args.n_max, samples=args.samples, h_e=args.h_e,
                           states=args.states, gamma=args.gamma, dwell=args.dwell,
                           exact_max=args.exact_max, workers=args.workers)
    res = run_heisenberg(cfg)
    _emit(args, _table(res.rows, CURVE_COLUMNS, args.format))
    _write_fits(args, res.fits, FIT_COLUMNS)
    return asdict(cfg)


def cmd_random_models(args) -> dict:
    cfg = RandomModelsConfig(count=args.count, seed=args.seed, n_max=args.n_max, samples=args.samples,
                             h_e=args.h_e, dwell=args.dwell, workers=args.workers)
    res = run_random_models(cfg)
    _emit(args, _table(res.fits, RANDOM_COLUMNS, args.format))
    if args.curves:
        with open(args.curves, "w") as fh:
            fh.write(_table(res.rows, ["model"] + CURVE_COLUMNS[1:], args.format))
    sys.stderr.write(_dumps(summarize_fits(res.fits)) + "\n")
    return asdict(cfg)


def cmd_dephasing(args) -> dict:
    rep = run_dephasing(args.probes)
    _emit(args, _dumps(rep.as_dict()) + "\n")
    return {"probes": args.probes}


# -- parser -------------------------------------------------------------------------

def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--model", metavar="FILE", help="JSON model file")
    g.add_argument("--preset", choices=sorted(PRESETS), help="named model instead of a file")
    g.add_argument("--seed", type=_u64, default=0, help="root seed (unsigned 64-bit)")
    g.add_argument("--samples", type=_nonneg_int, default=25000, help="Monte Carlo samples per point")
    g.add_argument("--tolerance", type=float, default=spans.SPAN_TOL, help="relative span-membership tolerance")
    g.add_argument("--out", metavar="PATH", help="output file (default stdout); manifest goes to PATH.manifest.json")
    g.add_argument("--format", choices=["csv", "jsonl"], default="csv", help="format of tabular output")
    g.add_argument("--workers", type=_pos_int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="hmmq", description="Metrology with error correction under hidden-Markov noise.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def times(sp, t_max=1.0, points=11):
        sp.add_argument("--times", type=float, nargs="+", help="explicit evaluation times")
        sp.add_argument("--t-min", type=float, default=0.0)
        sp.add_argument("--t-max", type=float, default=t_max)
        sp.add_argument("--points", type=_pos_int, default=points)

    def span_opt(sp):
        sp.add_argument("--span", choices=["auto", "extended", "diagonal", "trivial"], default="auto",
                        help="span whose orthogonal part of G defines the code")

    add("classify", cmd_classify, "scaling regime from the span conditions")
    span_opt(add("build-code", cmd_build_code, "codewords from the part of G outside a noise span"))

    sp = add("kl-check", cmd_kl_check, "Knill-Laflamme check of a code against extended errors")
    sp.add_argument("--code", choices=["auto", "extended", "diagonal", "trivial", "repetition"], default="auto")
    sp.add_argument("--dwell", type=float, default=1e-3, help="step for the repetition-code error blocks")
    sp.add_argument("--kl-tolerance", type=float, default=qec.KL_TOL)

    sp = add("qfi", cmd_qfi, "QFI of the probe state after evolution")
    span_opt(sp)
    times(sp)
    sp.add_argument("--protocol", choices=["qec", "plain"], default="qec")
    sp.add_argument("--recovery", choices=["kl", "dephasing", "none"], default="kl",
                    help="kl: recovery built from the Knill-Laflamme conditions for {1, L_k}")
    sp.add_argument("--kl-tolerance", type=float, default=qec.KL_TOL)
    sp.add_argument("--steps", type=_nonneg_int, default=0, help="finite Zeno steps (0 = fast-control limit)")

    for name, fn, help_ in (("alpha", cmd_alpha, "logical envelope |alpha(t)| for jump-free models"),
                            ("revivals", cmd_revivals, "times where |alpha(t)| revives above a threshold")):
        sp = add(name, fn, help_)
        span_opt(sp)
        times(sp, t_max=2 * math.pi, points=2001 if name == "revivals" else 101)
        if name == "revivals":
            sp.add_argument("--threshold", type=float, default=0.45)

    for name, fn, n_max, help_ in (("exact-fi", cmd_exact_fi, 10, "exact classical FI by outcome enumeration"),
                                   ("mc-fi", cmd_mc_fi, 20, "Monte Carlo classical FI curve")):
        sp = add(name, fn, help_)
        span_opt(sp)
        sp.add_argument("--dwell", type=float, default=0.25)
        sp.add_argument("--n-max", type=_pos_int, default=n_max)
        sp.add_argument("--with-code", action="store_true", help="run the codeword protocol in the fast-control limit")

    sp = add("heisenberg", cmd_heisenberg, "FI curves for the exchange-coupled qubit environment")
    sp.add_argument("--n-max", type=_pos_int, default=60)
    sp.add_argument("--states", type=_pos_int, default=5)
    sp.add_argument("--h-e", action="store_true", help="add H_E = Z")
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--dwell", type=float, default=0.25)
    sp.add_argument("--exact-max", type=_nonneg_int, default=15)
    sp.add_argument("--fits", metavar="PATH", help="per-state fits (default stderr)")

    sp = add("random-models", cmd_random_models, "linear fits of FI curves for random master equations")
    sp.add_argument("--count", type=_pos_int, default=50)
    sp.add_argument("--n-max", type=_pos_int, default=30)
    sp.add_argument("--h-e", action="store_true", help="add H_E = Z")
    sp.add_argument("--dwell", type=float, default=0.1)
    sp.add_argument("--curves", metavar="PATH", help="also write every FI curve")

    sp = add("dephasing", cmd_dephasing, "per-probe and N-probe QFI of the two-qubit dephasing model")
    sp.add_argument("--probes", type=_pos_int, default=10)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        extra = args.func(args)
        config = _base_config(args)
        config.update({k: v for k, v in vars(args).items() if k not in ("func",) and k not in config})
        config.update(extra or {})
        _write_manifest(args, config)
    except (ModelFileError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"hmmq {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFault, np.linalg.LinAlgError) as exc:
        print(f"hmmq {args.command}: numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
