"""Command-line interface: ``ske <subcommand> ...``.

Exit status is 0 when the command succeeded and every audit it ran passed,
1 when an audit failed, and 2 on invalid input or a numerical error.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import bench, engine, gp, oracles, quadrature, truncation
from .config import parse_model_config
from .errors import SpectralKernelError, InvalidArgumentError
from .models import make_model, normalize_amplitude

__all__ = ["main", "format_float", "dumps_json", "write_table", "read_table", "read_column"]

log = logging.getLogger("spectralkernel")

EXIT_OK, EXIT_AUDIT, EXIT_ERROR = 0, 1, 2


# ---------------------------------------------------------------- serialization


def format_float(x):
    """17 significant digits; ``nan``/``inf`` spelled out. Round-trips through ``float``."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if v is None:
        return ""
    return str(v)


def write_table(stream, header, rows):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])


def read_table(path_or_stream):
    """Read a headed CSV into ``(header, rows)`` with string cells."""
    if isinstance(path_or_stream, (str, os.PathLike)):
        with open(path_or_stream, newline="") as fh:
            return read_table(fh)
    rows = list(csv.reader(path_or_stream))
    if not rows:
        raise InvalidArgumentError("empty CSV input")
    return rows[0], rows[1:]


def read_column(path, name=None):
    """Floats from the first (or named) column of a CSV; a non-numeric first line is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidArgumentError(f"{path}: no data")
    col = 0
    try:
        float(rows[0][0])
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if name is not None:
            if name not in header:
                raise InvalidArgumentError(f"{path}: missing column {name!r} (have {header})")
            col = header.index(name)
    try:
        return np.array([float(r[col]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise InvalidArgumentError(f"{path}: bad numeric value ({exc})") from None


def _json_value(v, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(x, indent, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        v = list(v)
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in v):
            return "[" + ", ".join(_json_value(x, indent, level + 1) for x in v) + "]"
        return "[\n" + ",\n".join(pad + _json_value(x, indent, level + 1) for x in v) + "\n" + end + "]"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v) if math.isfinite(v) else "null"
    if v is None:
        return "null"
    return json.dumps(str(v))


def dumps_json(obj, indent=2):
    """JSON text with every float written to 17 significant digits (non-finite as null)."""
    return _json_value(obj, indent, 0) + "\n"


class _Output:
    """Destination for the primary result: ``--out`` file or stdout."""

    def __init__(self, path):
        self.path = path

    def write(self, text):
        if self.path:
            with open(self.path, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _emit_table(args, header, rows):
    if args.format == "json":
        text = dumps_json([dict(zip(header, row)) for row in rows])
    else:
        buf = io.StringIO()
        write_table(buf, header, rows)
        text = buf.getvalue()
    _Output(args.out).write(text)


def _emit_object(args, obj):
    _Output(args.out).write(dumps_json(obj))


# ---------------------------------------------------------------- subcommands


def _cmd_nodes(args):
    if args.kind == "legendre":
        rule = quadrature.gauss_legendre(args.m, args.a, args.b)
    elif args.kind == "jacobi":
        if args.a != 0.0:
            raise InvalidArgumentError("jacobi rules live on [0, b]; --a must be 0")
        rule = quadrature.gauss_jacobi_power(args.m, args.b, args.alpha)
    else:
        rule = quadrature.trapezoid(args.m, args.a, args.b)
    _emit_table(args, ["node", "weight"], zip(rule.nodes, rule.weights))
    return EXIT_OK


def _request(args, model, r):
    return engine.EvaluationRequest(model, r, tol=args.tol, m=args.m, summation=args.summation)


def _write_trace(path, res):
    with open(path, "w", newline="") as fh:
        write_table(fh, ["a", "b", "kind", "splits", "active_count"],
                    ([p.a, p.b, p.kind, p.splits, p.active_count] for p in res.panels))


def _kernel_output(args, res):
    _emit_table(args, ["r", "K", "estimate"], zip(res.distances, res.values, res.estimates))
    if args.trace:
        _write_trace(args.trace, res)
    log.info("panels=%d nodes=%d nufft_calls=%d scale=%s", res.panel_count, res.node_count, res.nufft_count,
             format_float(res.scale))
    # audit: every reported estimate within the requested tolerance
    return EXIT_OK if res.max_estimate() <= args.tol * res.scale else EXIT_AUDIT


def _cmd_eval(args):
    model = parse_model_config(args.model)
    res = engine.evaluate_kernel(_request(args, model, read_column(args.r_file, "r")), trace=bool(args.trace))
    return _kernel_output(args, res)


def _cmd_deriv(args):
    model = parse_model_config(args.model)
    req = _request(args, model, read_column(args.r_file, "r"))
    if args.param == "alpha":
        res = engine.evaluate_alpha_derivative(req, trace=bool(args.trace))
    else:
        res = engine.evaluate_kernel_derivative(req, args.param, trace=bool(args.trace))
    return _kernel_output(args, res)


def _cmd_cov(args):
    model = parse_model_config(args.model)
    x = read_column(args.x_file, "x")
    sigma = gp.assemble_covariance(model, x, tol=args.tol, nugget=args.nugget, m=args.m)
    if args.format == "json":
        _emit_object(args, {"x": x, "covariance": sigma})
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in sigma:
            w.writerow([format_float(v) for v in row])
        _Output(args.out).write(buf.getvalue())
    if args.diag_check:
        lam = gp.min_eigenvalue(sigma)
        # keep stdout clean for the matrix when it goes there
        stream = sys.stdout if args.out else sys.stderr
        stream.write(f"min_eigenvalue,{format_float(lam)}\n")
        return EXIT_OK if lam > 0 else EXIT_AUDIT
    return EXIT_OK


def _cmd_sample(args):
    model = parse_model_config(args.model)
    x = read_column(args.x_file, "x")
    sigma = gp.assemble_covariance(model, x, tol=args.tol, nugget=args.nugget, m=args.m)
    y = gp.sample_path(sigma, seed=args.seed)
    _emit_table(args, ["x", "y"], zip(x, y))
    return EXIT_OK


def _cmd_fit(args):
    model = parse_model_config(args.model)
    data = gp.Dataset(read_column(args.data, "x"), read_column(args.data, "y"), nugget=args.nugget)
    params = args.params.split(",") if args.params else None
    report = gp.fit_fisher_scoring(model, data, tol=args.tol, max_iter=args.max_iter, params=params, m=args.m)
    out = report.to_dict()
    out["model"] = model.kind
    _emit_object(args, out)
    return EXIT_OK if report.converged else EXIT_AUDIT


def _parse_params(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep:
            raise InvalidArgumentError(f"--params expects key=value pairs, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise InvalidArgumentError(f"--params: {key.strip()} must be a number, got {val!r}") from None
    return out


_VALIDATE_DEFAULTS = {
    "matern": {"phi": 1.0, "rho": 1.0, "nu": 0.51},
    "singular": {"phi": 1.0, "rho": 2.0, "nu": 2.1, "alpha": 0.3},
    "exp-decay": {"phi": 1.0, "alpha": 0.3},
}


def _cmd_validate(args):
    params = dict(_VALIDATE_DEFAULTS[args.case])
    params.update(_parse_params(args.params))
    r = read_column(args.r_file, "r") if args.r_file else np.geomspace(1e-3, 1.0, 20)
    if args.case == "matern":
        model = make_model("matern", params)
        oracle = oracles.matern_kernel_closed_form(r, params["phi"], params["rho"], params["nu"])
    elif args.case == "singular":
        model = make_model("singular_matern", params)
        oracle = np.array([
            oracles.singular_matern_1f2(ri, params["phi"], params["rho"], params["nu"], params["alpha"],
                                        precision=oracles.DEFAULT_BITS)
            for ri in r
        ])
    else:
        model = make_model("exponential_test", params)
        oracle = oracles.exp_sdf_alpha_kernel(r, params["alpha"], params["phi"])
    res = engine.evaluate_kernel(_request(args, model, r))
    diff = np.abs(res.values - oracle)
    passed = bool(np.all(diff <= args.tol * res.scale))
    report = {
        "case": args.case,
        "params": params,
        "tol": args.tol,
        "scale": res.scale,
        "rows": [{"r": a, "engine": b, "oracle": c, "abs_diff": d} for a, b, c, d in zip(r, res.values, oracle, diff)],
        "max_abs_diff": float(diff.max()),
        "verdict": "pass" if passed else "fail",
    }
    _emit_object(args, report)
    return EXIT_OK if passed else EXIT_AUDIT


def _cmd_truncation(args):
    est = truncation.truncation_estimate(args.c, args.beta, args.b, args.r, exact=args.exact)
    out = {"c": est.c, "beta": est.beta, "b": est.b, "r": est.r, "bound": est.bound, "branch": est.branch}
    if args.exact:
        # the exact route needs 2 pi b r >= 10; below that only the bound is reported
        out["exact"] = est.exact
    _emit_object(args, out)
    if est.exact is not None:
        return EXIT_OK if abs(est.exact) <= est.bound * (1 + 1e-12) else EXIT_AUDIT
    return EXIT_OK


def _default_bench_model():
    base = make_model("singular_matern", {"phi": 1.0, "rho": 1.0, "nu": 0.55, "alpha": 0.5})
    return normalize_amplitude(base)


def _cmd_bench(args):
    model = parse_model_config(args.model) if args.model else _default_bench_model()
    n_grid = [int(float(v)) for v in args.n.split(",")]
    tol_grid = [float(v) for v in args.tols.split(",")]
    methods = args.methods.split(",")
    records = bench.run_benchmark(model, n_grid, tol_grid, methods=methods, m=args.m, repeats=args.repeats,
                                  seed=args.seed, direct_cap=args.direct_cap)
    header = ["method", "n", "tol", "seconds", "nodes", "audit_passed", "audit_error", "status"]
    _emit_table(args, header, ([getattr(rec, h) for h in header] for rec in records))
    ok = all(rec.audit_passed for rec in records if rec.status == "ok")
    return EXIT_OK if ok else EXIT_AUDIT


# ---------------------------------------------------------------- parser


def _global_flags():
    # defaults are SUPPRESSed so a flag given before or after the subcommand both count
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap on BLAS/OpenMP threads")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS, help="output format (default csv)")
    return p


def _engine_flags(p, tol=1e-8, m=2**16):
    p.add_argument("--tol", type=float, default=tol)
    p.add_argument("--m", type=int, default=m, help="nodes per panel")
    p.add_argument("--summation", choices=("auto", "nufft", "direct"), default="auto")


def build_parser():
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="ske", description="Covariance kernels from spectral densities.",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nodes", parents=[common], help="quadrature nodes and weights")
    p.add_argument("--kind", choices=("legendre", "jacobi", "trapezoid"), required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.set_defaults(func=_cmd_nodes)

    for name, func, helptext in (("eval", _cmd_eval, "kernel values"), ("deriv", _cmd_deriv, "kernel derivative")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--model", required=True, help="model config JSON")
        p.add_argument("--r-file", required=True, help="CSV of distances (column r or first column)")
        p.add_argument("--trace", help="write panel records to this CSV")
        _engine_flags(p)
        if name == "deriv":
            p.add_argument("--param", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("cov", parents=[common], help="covariance matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--x-file", required=True)
    p.add_argument("--nugget", type=float, default=0.0)
    p.add_argument("--diag-check", action="store_true", help="report the minimum eigenvalue")
    _engine_flags(p)
    p.set_defaults(func=_cmd_cov)

    p = sub.add_parser("sample", parents=[common], help="draw a Gaussian process path")
    p.add_argument("--model", required=True)
    p.add_argument("--x-file", required=True)
    p.add_argument("--nugget", type=float, default=0.0)
    _engine_flags(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit", parents=[common], help="maximum likelihood by Fisher scoring")
    p.add_argument("--model", required=True, help="config holding the starting values")
    p.add_argument("--data", required=True, help="CSV with columns x,y")
    p.add_argument("--nugget", type=float, default=0.0)
    p.add_argument("--params", help="comma-separated subset of parameters to fit")
    p.add_argument("--max-iter", type=int, default=50)
    _engine_flags(p, m=4096)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("validate", parents=[common], help="engine against an independent oracle")
    p.add_argument("--case", choices=tuple(_VALIDATE_DEFAULTS), required=True)
    p.add_argument("--params", help="key=value list, e.g. nu=0.51,rho=1")
    p.add_argument("--r-file")
    _engine_flags(p, tol=1e-10, m=4096)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("truncation", parents=[common], help="tail truncation bound")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--exact", action="store_true")
    p.set_defaults(func=_cmd_truncation)

    p = sub.add_parser("bench", parents=[common], help="timing comparison")
    p.add_argument("--model", help="model config (default: the nu=0.55, alpha=0.5 normalized singular Matern)")
    p.add_argument("--n", default="1000,10000,100000", help="comma-separated distance counts")
    p.add_argument("--tols", default="1e-8", help="comma-separated tolerances")
    p.add_argument("--methods", default=",".join(bench.METHODS))
    p.add_argument("--m", type=int, default=2**16)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--direct-cap", type=float, default=120.0, help="seconds")
    p.set_defaults(func=_cmd_bench)
    return parser


def _configure_logging():
    level = os.environ.get("SKE_LOG", "").strip().lower()
    if level in ("debug", "info"):
        logging.basicConfig(level=getattr(logging, level.upper()), stream=sys.stderr,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    for name, default in (("threads", None), ("seed", 0), ("out", None), ("format", "csv")):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise InvalidArgumentError(f"--threads must be >= 1, got {args.threads}")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (SpectralKernelError, OSError) as exc:
        sys.stderr.write(f"ske {args.command}: error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
