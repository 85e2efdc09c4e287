"""Compiler passes that turn a hybrid network into a MoG network.

Pass order: non-Gaussian roots become selector + CLG fragments; nonlinear
deterministic nodes are linearised piecewise behind a region indicator;
heteroscedastic nodes get a per-region constant variance behind a region
indicator; finally every arc from a continuous node into a discrete node is
reversed, refitting the reversed conditionals as Gaussian mixtures.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as ex
from . import inference, mogfit, oracle, potentials
from .errors import CompileError, InputError, MogBNError, UnsupportedError
from .netmodel import (
    CLG,
    CLGRow,
    Deterministic,
    DiscreteCPT,
    Heteroscedastic,
    HybridNetwork,
    MoGNetwork,
    NonGaussianRoot,
    SoftDiscrete,
    deterministic_value,
    effective_support,
    is_mog,
    node_ranges,
    probe_points,
)

log = logging.getLogger(__name__)

CONTINUITY_TOL = 1e-9
LINEAR_TOL = 1e-9


# ------------------------------------------------------ piecewise linear


@dataclass(frozen=True)
class PiecewiseLinear:
    breakpoints: tuple
    segments: tuple  # ((slope, intercept), ...), one more than breakpoints

    def __post_init__(self):
        bp = tuple(float(t) for t in self.breakpoints)
        seg = tuple((float(m), float(c)) for m, c in self.segments)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "segments", seg)
        if len(seg) != len(bp) + 1:
            raise InputError("a piecewise-linear map needs one more segment than breakpoints")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise InputError("breakpoints must be strictly increasing")
        gap = self.max_gap()
        if gap > CONTINUITY_TOL * max(1.0, max((abs(c) for _, c in seg), default=1.0)):
            raise InputError(f"piecewise-linear map is discontinuous (gap {gap:g})")

    def max_gap(self) -> float:
        gaps = [abs((m1 * t + c1) - (m2 * t + c2))
                for t, (m1, c1), (m2, c2) in zip(self.breakpoints, self.segments, self.segments[1:])]
        return max(gaps, default=0.0)

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        idx = np.searchsorted(np.asarray(self.breakpoints), a, side="right")
        m = np.array([s[0] for s in self.segments])[idx]
        c = np.array([s[1] for s in self.segments])[idx]
        return m * a + c


def _as_univariate(fn) -> Callable:
    if callable(fn):
        return fn
    names = ex.variables(fn)
    if len(names) > 1:
        raise InputError(f"{ex.to_string(fn)} is not univariate")
    var = next(iter(names)) if names else "x"
    return lambda t: ex.evaluate_on(fn, {var: np.asarray(t, dtype=float)}, np.shape(t))


def piecewise_linearize(fn, breakpoints: Sequence[float]) -> PiecewiseLinear:
    """Chords between consecutive breakpoints; the two unbounded outer pieces
    are chords to an auxiliary point one breakpoint spacing beyond each end
    (spacing 1 when there is a single breakpoint)."""
    t = [float(b) for b in breakpoints]
    if not t:
        raise InputError("piecewise linearisation needs at least one breakpoint")
    if any(b <= a for a, b in zip(t, t[1:])):
        raise InputError("breakpoints must be strictly increasing")
    lead = t[1] - t[0] if len(t) > 1 else 1.0
    tail = t[-1] - t[-2] if len(t) > 1 else 1.0
    pts = np.array([t[0] - lead] + t + [t[-1] + tail])
    f = _as_univariate(fn)
    try:
        y = np.asarray(f(pts), dtype=float)
    except MogBNError as err:
        raise InputError(f"cannot evaluate the function at the breakpoints: {err}") from None
    if not np.all(np.isfinite(y)):
        raise InputError("function is not finite at a breakpoint")
    segs = []
    for i in range(len(pts) - 1):
        m = (y[i + 1] - y[i]) / (pts[i + 1] - pts[i])
        segs.append((m, y[i] - m * pts[i]))
    return PiecewiseLinear(tuple(t), tuple(segs))


# ------------------------------------------------------------ structure


def _unique(net: HybridNetwork, base: str) -> str:
    return potentials.unique_name(net, base)


def _insert_before(net: HybridNetwork, anchor: str, new_nodes, replacement) -> HybridNetwork:
    nodes = []
    for nd in net.nodes:
        if nd.name == anchor:
            nodes.extend(new_nodes)
            nodes.append(replacement)
        else:
            nodes.append(nd)
    return HybridNetwork(net.name, tuple(nodes))


def _indicator(net, node, parent, cutpoints):
    name = _unique(net, f"{node}_S")
    states = tuple(f"s{i + 1}" for i in range(len(cutpoints) + 1))
    return SoftDiscrete(name, (parent,), states, None, tuple(float(c) for c in cutpoints))


def linear_form(net: HybridNetwork, name: str, e: ex.Expression, tol: float = LINEAR_TOL):
    """Per discrete-parent configuration, (intercept, {parent: coeff}) if
    ``e`` is affine in the node's continuous parents, else None."""
    cont = net.continuous_parents(name)
    dpa = net.discrete_parents(name)
    ranges = node_ranges(net)
    centre = {p: 0.5 * (ranges[p][0] + ranges[p][1]) for p in cont}
    probes = probe_points(net, name, ranges, 41)
    out = {}
    for ci, cfg in enumerate(net.configs(dpa)):
        denv = {p: float(net.states(p).index(s)) for p, s in zip(dpa, cfg)}
        try:
            f0 = ex.evaluate(e, {**centre, **denv})
            coeffs = {}
            for p in cont:
                shifted = dict(centre, **denv)
                shifted[p] = centre[p] + 1.0
                coeffs[p] = ex.evaluate(e, shifted) - f0
            b0 = f0 - sum(coeffs[p] * centre[p] for p in cont)
            for env in probes:
                if any(env[p] != i for p, i in denv.items()):
                    continue
                shape = np.broadcast_shapes(*[np.shape(v) for v in env.values()]) if env else ()
                got = ex.evaluate_on(e, env, shape)
                want = b0 + sum(coeffs[p] * np.asarray(env[p]) for p in cont)
                scale = max(1.0, float(np.max(np.abs(got))))
                if np.max(np.abs(got - want)) > tol * scale * 1e3:
                    return None
        except MogBNError:
            return None
        out[cfg] = (float(b0), {p: float(c) for p, c in coeffs.items()})
    return out


def expand_linear_deterministic(net: HybridNetwork, name: str, form: dict) -> HybridNetwork:
    nd = net[name]
    rows = {cfg: CLGRow(b0, coeffs, 0.0) for cfg, (b0, coeffs) in form.items()}
    return net.replace(CLG(name, nd.parents, rows))


def expand_deterministic(net: HybridNetwork, name: str, pl: PiecewiseLinear) -> HybridNetwork:
    """Replace a one-parent deterministic node by a zero-variance CLG on the
    parent and a region indicator selecting the linear piece."""
    nd = net[name]
    if not isinstance(nd, Deterministic):
        raise InputError(f"{name!r} is not deterministic")
    cont = net.continuous_parents(name)
    if len(cont) != 1 or net.discrete_parents(name):
        raise UnsupportedError(f"{name!r}: piecewise expansion supports exactly one continuous parent")
    a = cont[0]
    if not pl.breakpoints:
        m, c = pl.segments[0]
        return net.replace(CLG(name, (a,), {(): CLGRow(c, {a: m}, 0.0)}))
    ind = _indicator(net, name, a, pl.breakpoints)
    rows = {(st,): CLGRow(c, {a: m}, 0.0) for st, (m, c) in zip(ind.states, pl.segments)}
    return _insert_before(net, name, [ind], CLG(name, (a, ind.name), rows))


# ----------------------------------------------------- variance segments


@dataclass(frozen=True)
class SegmentationSpec:
    cutpoints: tuple
    sigmas: tuple

    def __post_init__(self):
        cps = tuple(float(c) for c in self.cutpoints)
        sig = tuple(float(s) for s in self.sigmas)
        object.__setattr__(self, "cutpoints", cps)
        object.__setattr__(self, "sigmas", sig)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise InputError("cutpoints must be strictly increasing")
        if len(sig) != len(cps) + 1:
            raise InputError("need one sigma per region (cutpoints + 1)")
        if any(not s > 0 for s in sig):
            raise InputError("region sigmas must be positive")


def region_probes(cutpoints: Sequence[float]) -> list[float]:
    """Region midpoints; the unbounded regions use the point half the median
    cutpoint spacing beyond their boundary (spacing 1 for one cutpoint)."""
    c = [float(v) for v in cutpoints]
    if not c:
        return [0.0]
    w = float(np.median(np.diff(c))) if len(c) > 1 else 1.0
    return [c[0] - w / 2] + [(a + b) / 2 for a, b in zip(c, c[1:])] + [c[-1] + w / 2]


def default_variance_sigmas(variance_fn, cutpoints: Sequence[float]) -> tuple:
    f = _as_univariate(variance_fn)
    pts = np.array(region_probes(cutpoints))
    v = np.asarray(f(pts), dtype=float)
    if np.any(~(v > 0)):
        i = int(np.argmax(~(v > 0)))
        raise InputError(f"variance is not positive at probe point {pts[i]:g}")
    return tuple(float(s) for s in np.sqrt(v))


def segment_variance(net: HybridNetwork, name: str, spec: SegmentationSpec) -> HybridNetwork:
    nd = net[name]
    if not isinstance(nd, Heteroscedastic):
        raise InputError(f"{name!r} is not heteroscedastic")
    cont = net.continuous_parents(name)
    if len(cont) != 1 or net.discrete_parents(name):
        raise UnsupportedError(f"{name!r}: variance segmentation supports exactly one continuous parent")
    a = cont[0]
    lo, hi = node_ranges(net)[a]
    probe = np.linspace(lo, hi, 201)
    var = ex.evaluate_on(nd.variance_fn, {a: probe}, probe.shape)
    if np.any(var <= 0):
        raise InputError(f"{name!r}: variance is not positive at {a} = {probe[np.argmax(var <= 0)]:g}")
    form = linear_form(net, name, nd.mean)
    if form is None:
        raise InputError(f"{name!r}: mean is not linear in {a}")
    b0, coeffs = form[()]
    if not spec.cutpoints:
        return net.replace(CLG(name, (a,), {(): CLGRow(b0, coeffs, spec.sigmas[0] ** 2)}))
    ind = _indicator(net, name, a, spec.cutpoints)
    rows = {(st,): CLGRow(b0, coeffs, s * s) for st, s in zip(ind.states, spec.sigmas)}
    return _insert_before(net, name, [ind], CLG(name, (a, ind.name), rows))


# ------------------------------------------------------- root replacement


def is_symmetric(pdf, lo: float, hi: float, points: int = 101) -> bool:
    f = _as_univariate(pdf)
    t = np.linspace(0.0, 0.5 * (hi - lo), points)
    left, right = np.asarray(f(lo + t)), np.asarray(f(hi - t))
    return bool(np.allclose(left, right, rtol=1e-9, atol=1e-12))


def fit_root(node: NonGaussianRoot, cfg: mogfit.FitConfig) -> mogfit.FitReport:
    """Fit on the support rescaled to [0, 1], then map back affinely."""
    lo, hi = effective_support(node)
    width = hi - lo
    f = mogfit.as_function(node.pdf)
    std = lambda u: width * np.asarray(f(lo + width * np.asarray(u, dtype=float)), dtype=float)
    axis = cfg.symmetry_axis
    if axis is None and is_symmetric(f, lo, hi):
        axis = 0.5
    elif axis is not None:
        axis = (axis - lo) / width
    local = mogfit.FitConfig(cfg.k, cfg.n, axis, cfg.restarts, cfg.max_iterations,
                             cfg.penalty_schedule, cfg.seed, cfg.min_sigma)
    rep = mogfit.fit(std, (0.0, 1.0), local)
    gm = mogfit.affine_transform(rep.mixture, lo, hi)
    mm, mv = mogfit.mixture_moments(gm)
    return mogfit.FitReport(gm, rep.sse, rep.kl, lo + width * rep.target_mean, width**2 * rep.target_var,
                            mm, mv, rep.converged)


def replace_nongaussian_root(net: HybridNetwork, name: str, cfg: mogfit.FitConfig):
    """Returns (network, selector name, FitReport)."""
    nd = net[name]
    if not isinstance(nd, NonGaussianRoot):
        raise InputError(f"{name!r} is not a non-Gaussian root")
    rep = fit_root(nd, cfg)
    sel_name = _unique(net, f"{name}_sel")
    frag = mogfit.to_selector_fragment(rep.mixture, name, sel_name, net.names)
    sel, clg = frag[sel_name], frag[name]
    return _insert_before(net, name, [sel], clg), sel_name, rep


# ----------------------------------------------------------- the driver


@dataclass
class CompileOptions:
    fit_k: int = 2
    root_k: int = 5
    root_bins: int = 100
    fit_bins: int = 600
    grid_points: int = 601
    breakpoints: dict = field(default_factory=dict)
    auto_breakpoints: int = 5
    variance_cutpoints: dict = field(default_factory=dict)
    variance_sigmas: dict = field(default_factory=dict)
    auto_cutpoints: int = 5
    auto_span: float = 2.0
    max_reversal_iterations: Optional[int] = None
    restarts: int = 8
    seed: int = 0
    moment_samples: int = 200_000

    def __post_init__(self):
        for key in ("fit_k", "root_k", "auto_breakpoints", "auto_cutpoints", "restarts"):
            if getattr(self, key) < 1:
                raise InputError(f"{key} must be >= 1")
        if self.grid_points < 3:
            raise InputError("grid_points must be >= 3")
        if self.max_reversal_iterations is not None and self.max_reversal_iterations < 1:
            raise InputError("max_reversal_iterations must be >= 1")


@dataclass
class CompileReport:
    passes: list = field(default_factory=list)
    reversals: list = field(default_factory=list)
    selectors: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passes": list(self.passes),
            "arcsReversed": [list(a) for a in self.reversals],
            "selectors": list(self.selectors),
            "fits": list(self.fits),
            "warnings": list(self.warnings),
        }


def parent_moments(net: HybridNetwork, name: str, seed: int = 0, samples: int = 200_000) -> tuple[float, float]:
    """Mean and variance of ``name``: exact when its ancestral sub-network is
    already MoG, otherwise by forward sampling with a fixed seed."""
    keep = set()
    stack = [name]
    while stack:
        n = stack.pop()
        if n not in keep:
            keep.add(n)
            stack.extend(net[n].parents)
    sub = HybridNetwork(net.name, tuple(nd for nd in net.nodes if nd.name in keep))
    if is_mog(sub):
        gm = inference.marginal_continuous(inference.build_mixture(sub), name)
        return mogfit.mixture_moments(gm)
    vals = oracle.sample(sub, samples, seed).values[name]
    return float(np.mean(vals)), float(np.var(vals))


def auto_points(net, parent, count, span, opts) -> tuple:
    mean, var = parent_moments(net, parent, opts.seed, opts.moment_samples)
    if count == 1:
        return (mean,)
    sd = math.sqrt(var)
    return tuple(float(v) for v in mean + sd * np.linspace(-span, span, count))


def _fit_cfg(opts, k, n):
    return mogfit.FitConfig(k=k, n=n, restarts=opts.restarts, seed=opts.seed)


def _offending_arcs(net):
    return [(p, nd.name) for nd in net.nodes if nd.discrete for p in net.continuous_parents(nd.name)]


def compile_network(net: HybridNetwork, opts: Optional[CompileOptions] = None):
    """Returns (MoGNetwork, CompileReport)."""
    opts = opts or CompileOptions()
    rep = CompileReport()
    net = _pass_roots(net, opts, rep)
    net = _pass_deterministic(net, opts, rep)
    net = _pass_heteroscedastic(net, opts, rep)
    net = _pass_reversals(net, opts, rep)
    bad = [nd.name for nd in net.nodes if not isinstance(nd, (DiscreteCPT, CLG))]
    if bad or _offending_arcs(net):
        raise CompileError(f"compiled network is not MoG: nodes {bad}, arcs {_offending_arcs(net)}")
    return MoGNetwork.from_network(net), rep


compile = compile_network


def _pass_roots(net, opts, rep):
    roots = [n for n in net.topological_order() if isinstance(net[n], NonGaussianRoot)]
    for name in roots:
        try:
            net, sel, fr = replace_nongaussian_root(net, name, _fit_cfg(opts, opts.root_k, opts.root_bins))
        except MogBNError as err:
            raise type(err)(f"replace_roots: {name}: {err}") from err
        rep.selectors.append(sel)
        rep.fits.append({"node": name, "kl": fr.kl, "sse": fr.sse})
    if roots:
        rep.passes.append("replace_roots")
    return net


def _pass_deterministic(net, opts, rep):
    done = False
    for name in net.topological_order():
        nd = net[name]
        if not isinstance(nd, Deterministic):
            continue
        done = True
        form = linear_form(net, name, nd.fn) if nd.fn is not None else None
        if form is not None:
            net = expand_linear_deterministic(net, name, form)
            continue
        cont = net.continuous_parents(name)
        if len(cont) != 1 or net.discrete_parents(name):
            raise UnsupportedError(f"linearize: {name!r} is nonlinear in several parents; compose it from one-parent nodes")
        a = cont[0]
        bps = opts.breakpoints.get(name)
        if bps is None:
            bps = auto_points(net, a, opts.auto_breakpoints, opts.auto_span, opts)
            rep.warnings.append(f"{name}: automatic breakpoints {[round(b, 6) for b in bps]}")
        fn = nd.fn if nd.fn is not None else (lambda t, nd=nd: deterministic_value(nd, {a: t}))
        pl = piecewise_linearize(fn, bps)
        net = expand_deterministic(net, name, pl)
    if done:
        rep.passes.append("linearize")
    return net


def _pass_heteroscedastic(net, opts, rep):
    done = False
    for name in net.topological_order():
        nd = net[name]
        if not isinstance(nd, Heteroscedastic):
            continue
        done = True
        cont = net.continuous_parents(name)
        if not (ex.variables(nd.variance_fn) & set(cont)):
            form = linear_form(net, name, nd.mean)
            if form is None:
                raise InputError(f"segment_variance: {name!r}: mean is not linear")
            v = ex.evaluate(nd.variance_fn, {p: 0.0 for p in net.discrete_parents(name)})
            rows = {cfg: CLGRow(b0, c, float(v)) for cfg, (b0, c) in form.items()}
            net = net.replace(CLG(name, nd.parents, rows))
            continue
        if len(cont) != 1:
            raise UnsupportedError(f"segment_variance: {name!r} has several continuous parents")
        a = cont[0]
        cps = opts.variance_cutpoints.get(name)
        if cps is None:
            cps = auto_points(net, a, opts.auto_cutpoints, opts.auto_span, opts)
            rep.warnings.append(f"{name}: automatic variance cutpoints {[round(c, 6) for c in cps]}")
        sig = opts.variance_sigmas.get(name)
        if sig is None:
            sig = default_variance_sigmas(lambda t: ex.evaluate_on(nd.variance_fn, {a: t}, np.shape(t)), cps)
        net = segment_variance(net, name, SegmentationSpec(tuple(cps), tuple(sig)))
    if done:
        rep.passes.append("segment_variance")
    return net


def _pass_reversals(net, opts, rep):
    arcs = sum(len(nd.parents) for nd in net.nodes)
    cap = opts.max_reversal_iterations or max(10 * arcs, 1)
    count = 0
    while True:
        todo = None
        order = net.topological_order()
        pos = {n: i for i, n in enumerate(order)}
        for y in order:
            if net.is_discrete(y):
                cont = net.continuous_parents(y)
                if cont:
                    todo = (max(cont, key=pos.get), y)
                    break
        if todo is None:
            break
        if count >= cap:
            raise CompileError(f"reverse_arcs: iteration cap {cap} exceeded; remaining arcs {_offending_arcs(net)}")
        x, y = todo
        count += 1
        xcont = net.continuous_parents(x)
        lin = potentials._linear_clg_parent(net, x) if len(xcont) == 1 else None
        if lin is not None and not net.continuous_parents(xcont[0]):
            # x is a linear function of one parent: move the density onto x first
            b = xcont[0]
            net = potentials.reverse_deterministic_arc(net, b, x)
            rep.reversals.append((b, x))
            continue
        try:
            r = potentials.reverse_arc_full(net, x, y, opts.grid_points, opts.fit_k, fit_bins=opts.fit_bins,
                                            seed=opts.seed, restarts=opts.restarts)
        except UnsupportedError as err:
            raise UnsupportedError(f"reverse_arcs: {err}") from err
        except InputError as err:
            raise CompileError(f"reverse_arcs: {x} -> {y}: {err}") from err
        net = r.network
        rep.reversals.append((x, y))
        rep.selectors.append(r.selector)
        rep.fits.extend({"node": label, "kl": f.kl, "sse": f.sse} for label, f in r.fits.items())
        rep.warnings.extend(r.warnings)
    if count:
        rep.passes.append("reverse_arcs")
    return net
