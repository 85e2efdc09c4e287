"""Command-line front end: fit, compile, infer, validate, plot."""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from . import inference, mogfit, oracle, transforms
from .errors import InputError, MogBNError, ValidationFailure
from .netmodel import (
    MoGNetwork,
    NonGaussianRoot,
    effective_support,
    load_network,
    parse_evidence,
    serialize_network,
)
from .quadrature import cumulative_trapezoid

PLOT_ROWS = 1001
MEAN_BAND = 0.15  # x oracle standard deviation
VAR_BAND = 0.20  # x oracle variance
PROB_BAND = 0.02


class _UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from None


def _support(vals) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in vals)
    except ValueError:
        raise InputError(f"support bounds must be numbers, got {vals}") from None
    if not hi > lo:
        raise InputError(f"support hi ≤ lo ({lo}, {hi})")
    return lo, hi


def _finite_support(expr, lo, hi):
    if math.isfinite(lo) and math.isfinite(hi):
        return lo, hi
    return effective_support(NonGaussianRoot("x", (), expr, (lo, hi)))


# ---------------------------------------------------------------- fit


def cmd_fit(args) -> str:
    if (args.expr is None) == (args.pdf_file is None):
        raise InputError("give exactly one of --expr or --pdf-file")
    text = args.expr if args.expr is not None else _read_text(args.pdf_file).strip()
    e = ex.parse_expression(text)
    extra = ex.variables(e) - {"x"}
    if extra:
        raise InputError(f"target density may only use the variable x, found {sorted(extra)}")
    lo, hi = _finite_support(e, *_support(args.support))
    cfg = mogfit.FitConfig(k=args.k, n=args.bins, symmetry_axis=args.symmetry, restarts=args.restarts,
                           max_iterations=args.max_iterations, seed=args.seed)
    rep = mogfit.fit(e, (lo, hi), cfg)
    return _dump(rep.to_dict())


# ------------------------------------------------------------ compile


def _compile_options(args) -> transforms.CompileOptions:
    return transforms.CompileOptions(fit_k=args.fit_k, root_k=args.root_k, grid_points=args.grid,
                                     fit_bins=args.fit_bins, max_reversal_iterations=args.max_reversals,
                                     seed=args.seed)


def cmd_compile(args):
    net = load_network(args.network)
    mog, rep = transforms.compile_network(net, _compile_options(args))
    outputs = {args.out: serialize_network(mog)}
    if args.report:
        outputs[args.report] = _dump(rep.to_dict())
    return outputs


# -------------------------------------------------------------- infer


def _load_mog(path) -> MoGNetwork:
    net = load_network(path)
    try:
        return MoGNetwork.from_network(net)
    except InputError as err:
        raise InputError(f"{path}: {err}; compile it first") from None


def cmd_infer(args) -> str:
    net = _load_mog(args.network)
    ev = parse_evidence(_read_text(args.evidence), net) if args.evidence else {}
    rep = inference.posterior(net, ev, args.query)
    return _dump(rep.to_dict())


# ----------------------------------------------------------- validate


def _rows(net, post, est, mult):
    rows = []
    for name, gm in post.continuous.items():
        mean, var = mogfit.mixture_moments(gm)
        o = est.continuous[name]
        if o["variance"] <= 0:
            continue
        band = mult * MEAN_BAND * math.sqrt(o["variance"]) + 4 * o["meanSE"]
        rows.append((f"{name} mean", mean, o["mean"], o["meanSE"], band))
        band = mult * VAR_BAND * o["variance"] + 4 * o["varianceSE"]
        rows.append((f"{name} variance", var, o["variance"], o["varianceSE"], band))
    for name, probs in post.discrete.items():
        for state, p in probs.items():
            q, se = est.discrete[name][state]
            rows.append((f"P({name}={state})", p, q, se, mult * PROB_BAND + 4 * se))
    return rows


def cmd_validate(args, stdout) -> None:
    net = load_network(args.network)
    ev = parse_evidence(_read_text(args.evidence), net) if args.evidence else {}
    mog, _ = transforms.compile_network(net, _compile_options(args))
    evidenced = set(ev)
    original = [n for n in net.names if n not in evidenced]
    post = inference.posterior(mog, ev, original)
    est = oracle.estimate_conditional(net, args.n, args.seed, ev)
    rows = _rows(net, post, est, args.tolerance_multiplier)
    stdout.write(f"{'quantity':<24}{'compiled':>14}{'oracle':>14}{'oracle SE':>12}{'band':>12}  ok\n")
    failed = []
    for label, c, o, se, band in rows:
        ok = abs(c - o) <= band
        if not ok:
            failed.append(label)
        stdout.write(f"{label:<24}{c:>14.6g}{o:>14.6g}{se:>12.3g}{band:>12.3g}  {'yes' if ok else 'NO'}\n")
    if failed:
        raise ValidationFailure(f"outside the tolerance band: {', '.join(failed)}")


# --------------------------------------------------------------- plot


def _fmt(v) -> str:
    return "" if v is None else "%.17g" % v


def cmd_plot(args) -> str:
    doc = json.loads(_read_text(args.source)) if args.source else None
    if not isinstance(doc, dict):
        raise InputError("plot source must be a JSON report")
    target = None
    if "mixture" in doc:
        gm = mogfit.GaussianMixture1D.from_dict(doc["mixture"])
    elif "continuous" in doc:
        if not args.var:
            raise _UsageError(f"{_plot_usage}plot: error: --var is required for a posterior report")
        if args.var not in doc["continuous"]:
            raise InputError(f"unknown variable {args.var!r} in the posterior report")
        gm = mogfit.GaussianMixture1D.from_dict(doc["continuous"][args.var]["mixture"], allow_zero_sd=True)
    else:
        raise InputError("plot source is neither a fit report nor a posterior report")
    if args.expr is not None:
        if args.support is None:
            raise InputError("--expr needs --support")
        e = ex.parse_expression(args.expr)
        lo, hi = _finite_support(e, *_support(args.support))
        target = e
    elif args.support is not None:
        lo, hi = _support(args.support)
    else:
        _, m, s = gm.arrays()
        lo, hi = float(m.min() - 4 * s.max()), float(m.max() + 4 * s.max())
    xs = np.linspace(lo, hi, PLOT_ROWS)
    mog_pdf = mogfit.mixture_pdf(gm, xs)
    mog_cdf = mogfit.mixture_cdf(gm, xs)
    tp = tc = [None] * PLOT_ROWS
    if target is not None:
        fine = np.linspace(lo, hi, 10 * (PLOT_ROWS - 1) + 1)
        f = np.maximum(ex.evaluate_on(target, {"x": fine}, fine.shape), 0.0)
        tp = f[::10]
        tc = cumulative_trapezoid(f, fine)[::10]
    out = io.StringIO()
    out.write("x,target_pdf,mog_pdf,target_cdf,mog_cdf\n")
    for i, x in enumerate(xs):
        out.write(",".join([_fmt(x), _fmt(tp[i]), _fmt(mog_pdf[i]), _fmt(tc[i]), _fmt(mog_cdf[i])]) + "\n")
    return out.getvalue()


_plot_usage = "usage: mogbn plot SOURCE --var NAME [--out CSV]\n"


# ------------------------------------------------------------- parser


def _add_compile_flags(p):
    p.add_argument("--fit-k", type=int, default=2, help="components per refitted conditional")
    p.add_argument("--root-k", type=int, default=5, help="components per non-Gaussian root")
    p.add_argument("--grid", type=int, default=601, help="grid points for arc reversal")
    p.add_argument("--fit-bins", type=int, default=600, help="bins for refitting reversed conditionals")
    p.add_argument("--max-reversals", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mogbn", description="Compile hybrid Bayesian networks to mixtures of Gaussians.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a Gaussian mixture to a univariate density")
    p.add_argument("--expr", help="density expression in x")
    p.add_argument("--pdf-file", help="file holding the density expression")
    p.add_argument("--support", nargs=2, required=True, metavar=("LO", "HI"))
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--symmetry", type=float, default=None)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iterations", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("compile", help="compile a hybrid network to a MoG network")
    p.add_argument("network")
    _add_compile_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--report")

    p = sub.add_parser("infer", help="exact posterior marginals on a MoG network")
    p.add_argument("network")
    p.add_argument("--evidence")
    p.add_argument("--query", nargs="+")
    p.add_argument("--out")

    p = sub.add_parser("validate", help="compare compiled inference with Monte Carlo on the original")
    p.add_argument("network")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--evidence")
    p.add_argument("--tolerance-multiplier", type=float, default=1.0)
    _add_compile_flags(p)

    p = sub.add_parser("plot", help="CSV of mixture (and target) pdf/cdf curves")
    p.add_argument("source", help="fit report or posterior report (JSON)")
    p.add_argument("--var")
    p.add_argument("--expr", help="target density in x for the target columns")
    p.add_argument("--support", nargs=2, metavar=("LO", "HI"))
    p.add_argument("--out")
    return parser


def _write(outputs: dict, stdout):
    for path, text in outputs.items():
        if path is None:
            stdout.write(text)
        else:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as err:
        stderr.write(f"{err}\n")
        return err.exit_code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
    try:
        if args.command == "fit":
            outputs = {args.out: cmd_fit(args)}
        elif args.command == "compile":
            outputs = cmd_compile(args)
        elif args.command == "infer":
            outputs = {args.out: cmd_infer(args)}
        elif args.command == "plot":
            outputs = {args.out: cmd_plot(args)}
        else:
            cmd_validate(args, stdout)
            outputs = {}
    except MogBNError as err:
        stderr.write(f"mogbn {args.command}: {err}\n")
        return err.exit_code
    except json.JSONDecodeError as err:
        stderr.write(f"mogbn {args.command}: invalid JSON: {err}\n")
        return 2
    _write(outputs, stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
