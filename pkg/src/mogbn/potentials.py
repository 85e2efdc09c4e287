"""Mixed potentials (mass, density) on grids, and arc reversal.

A potential stores, for every discrete configuration and every cell of the
continuous grids, a probability mass and a density value.  ``density=None``
is the vacuous density: the identity for pointwise multiplication.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as ex
from . import mogfit
from .errors import InputError, UnsupportedError
from .netmodel import (
    CLG,
    Branch,
    CLGRow,
    Deterministic,
    DiscreteCPT,
    GridDensity,
    HybridNetwork,
    NonGaussianRoot,
    SoftDiscrete,
    effective_support,
    indicator_masses,
    soft_masses,
)

DEFAULT_GRID_POINTS = 601
TAIL_SD = 8.0
ZERO_MASS = 1e-12
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class MixedPotential:
    discrete: tuple  # ((name, states), ...)
    continuous: tuple  # ((name, grid), ...)
    mass: np.ndarray
    density: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "discrete", tuple((n, tuple(s)) for n, s in self.discrete))
        object.__setattr__(self, "continuous", tuple((n, np.asarray(g, float)) for n, g in self.continuous))
        shape = self.shape
        mass = np.broadcast_to(np.asarray(self.mass, dtype=float), shape).copy()
        object.__setattr__(self, "mass", mass)
        if self.density is not None:
            if not self.continuous:
                raise InputError("a potential without continuous variables has a vacuous density")
            dens = np.broadcast_to(np.asarray(self.density, dtype=float), shape).copy()
            object.__setattr__(self, "density", dens)
        if np.any(mass < 0) or (self.density is not None and np.any(self.density < 0)):
            raise InputError("potential masses and densities must be nonnegative")

    @property
    def shape(self) -> tuple:
        return tuple(len(s) for _, s in self.discrete) + tuple(len(g) for _, g in self.continuous)

    @property
    def dnames(self) -> list[str]:
        return [n for n, _ in self.discrete]

    @property
    def cnames(self) -> list[str]:
        return [n for n, _ in self.continuous]

    @property
    def variables(self) -> list[str]:
        return self.dnames + self.cnames

    def grid(self, name: str) -> np.ndarray:
        return dict(self.continuous)[name]

    def product(self) -> np.ndarray:
        """Pointwise mass x density (vacuous density counts as 1)."""
        return self.mass if self.density is None else self.mass * self.density


def unit_potential(discrete=(), continuous=()) -> MixedPotential:
    """Mass 1, vacuous density: the identity for ``combine``."""
    shape = tuple(len(s) for _, s in discrete) + tuple(len(g) for _, g in continuous)
    return MixedPotential(discrete, continuous, np.ones(shape), None)


def _aligned(pot: MixedPotential, dvars: Sequence[str], cvars: Sequence[str]):
    """Mass/density of ``pot`` rearranged to broadcast over (dvars + cvars)."""
    target = list(dvars) + list(cvars)
    own = pot.variables
    perm = [own.index(v) for v in target if v in own]
    shape = [pot.shape[own.index(v)] if v in own else 1 for v in target]

    def fix(a):
        return None if a is None else np.transpose(a, perm).reshape(shape)

    return fix(pot.mass), fix(pot.density)


def _union_domain(p1: MixedPotential, p2: MixedPotential):
    disc = list(p1.discrete)
    known = dict(p1.discrete)
    for n, s in p2.discrete:
        if n in known:
            if tuple(known[n]) != tuple(s):
                raise InputError(f"state mismatch on shared discrete variable {n!r}")
        else:
            disc.append((n, s))
            known[n] = s
    cont = list(p1.continuous)
    grids = dict(p1.continuous)
    for n, g in p2.continuous:
        if n in grids:
            if grids[n].shape != g.shape or not np.array_equal(grids[n], g):
                raise InputError(f"grid mismatch on shared continuous variable {n!r}")
        else:
            cont.append((n, g))
            grids[n] = g
    return disc, cont


def combine(p1: MixedPotential, p2: MixedPotential) -> MixedPotential:
    disc, cont = _union_domain(p1, p2)
    dv, cv = [n for n, _ in disc], [n for n, _ in cont]
    m1, d1 = _aligned(p1, dv, cv)
    m2, d2 = _aligned(p2, dv, cv)
    if d1 is None and d2 is None:
        dens = None
    elif d1 is None:
        dens = d2
    elif d2 is None:
        dens = d1
    else:
        dens = d1 * d2
    shape = tuple(len(s) for _, s in disc) + tuple(len(g) for _, g in cont)
    if dens is not None:
        dens = np.broadcast_to(dens, shape)
    return MixedPotential(disc, cont, np.broadcast_to(m1 * m2, shape), dens)


def _refactor(disc, cont, h: np.ndarray) -> MixedPotential:
    """Split a pointwise product h into (mass per configuration, normalised
    density) over the continuous axes."""
    if not cont:
        return MixedPotential(disc, (), h, None)
    nd = len(disc)
    total = h
    for i in reversed(range(len(cont))):
        total = np.trapezoid(total, x=cont[i][1], axis=nd + i)
    total = np.asarray(total)
    expand = total.reshape(total.shape + (1,) * len(cont))
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(expand > 0, h / np.where(expand > 0, expand, 1.0), 0.0)
    return MixedPotential(disc, cont, np.broadcast_to(expand, h.shape), dens)


def marginalize_continuous(pot: MixedPotential, name: str) -> MixedPotential:
    """Integrate ``name`` out (trapezoid on its grid)."""
    if name not in pot.cnames:
        raise InputError(f"{name!r} is not a continuous variable of the potential")
    if pot.density is None:
        raise InputError(f"cannot integrate {name!r} against a vacuous density")
    axis = len(pot.discrete) + pot.cnames.index(name)
    h = np.trapezoid(pot.product(), x=pot.grid(name), axis=axis)
    cont = [(n, g) for n, g in pot.continuous if n != name]
    return _refactor(pot.discrete, cont, h)


def marginalize_discrete(pot: MixedPotential, name: str) -> MixedPotential:
    if name not in pot.dnames:
        raise InputError(f"{name!r} is not a discrete variable of the potential")
    axis = pot.dnames.index(name)
    disc = [(n, s) for n, s in pot.discrete if n != name]
    if pot.density is None:
        return MixedPotential(disc, pot.continuous, pot.mass.sum(axis=axis), None)
    return _refactor(disc, pot.continuous, pot.product().sum(axis=axis))


def _safe_div(num, den, what, pot_names, shape):
    num = np.broadcast_to(num, shape)
    den = np.broadcast_to(den, shape)
    bad = (den == 0) & (num != 0)
    if np.any(bad):
        idx = np.unravel_index(np.argmax(bad), shape)
        raise InputError(f"division of nonzero {what} by zero at index {dict(zip(pot_names, idx))}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den == 0, 0.0, num / np.where(den == 0, 1.0, den))


def divide(p: MixedPotential, q: MixedPotential) -> MixedPotential:
    """Pointwise quotient p / q with 0/0 = 0.  q's domain must lie in p's."""
    if not set(q.variables) <= set(p.variables):
        raise InputError("divisor domain must be contained in the dividend's domain")
    _union_domain(p, q)
    dv, cv = p.dnames, p.cnames
    qm, qd = _aligned(q, dv, cv)
    mass = _safe_div(p.mass, qm, "mass", p.variables, p.shape)
    if qd is None:
        dens = p.density
    else:
        num = p.density if p.density is not None else np.ones(p.shape)
        dens = _safe_div(num, qd, "density", p.variables, p.shape)
    return MixedPotential(p.discrete, p.continuous, mass, dens)


def fold_mass_into_density(pot: MixedPotential) -> MixedPotential:
    """Move the pointwise mass into the density part (mass becomes 1).

    The product mass x density is unchanged bit for bit."""
    if not pot.continuous or pot.density is None:
        raise InputError("folding needs a continuous variable with a non-vacuous density")
    return MixedPotential(pot.discrete, pot.continuous, np.ones(pot.shape), pot.mass * pot.density)


# --------------------------------------------------------- network bridge


def gaussian_pdf(x, mean, var):
    sd = math.sqrt(var)
    z = (np.asarray(x, dtype=float) - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * _SQRT_2PI)


def density_function(net: HybridNetwork, name: str, config: tuple) -> Callable:
    """f(x | discrete-parent config) for a node that has a density."""
    nd = net[name]
    if net.continuous_parents(name):
        raise UnsupportedError(f"{name!r} has continuous parents; its conditional is not a 1-D density")
    if isinstance(nd, CLG):
        row = nd.rows[tuple(config)]
        if row.variance <= 0:
            raise UnsupportedError(f"{name!r} has zero variance in configuration {list(config)}; no density")
        return lambda x, m=row.intercept, v=row.variance: gaussian_pdf(x, m, v)
    if isinstance(nd, NonGaussianRoot):
        lo, hi = nd.support

        def f(x, e=nd.pdf):
            x = np.asarray(x, dtype=float)
            inside = (x >= lo) & (x <= hi)
            out = np.zeros(x.shape)
            if np.any(inside):
                out[inside] = np.broadcast_to(ex.evaluate(e, {"x": x[inside]}), x[inside].shape)
            return out

        return f
    if isinstance(nd, GridDensity):
        row = nd.values[net.config_index(net.discrete_parents(name), config)]
        grid = nd.grid
        return lambda x: np.interp(x, grid, row, left=0.0, right=0.0)
    raise UnsupportedError(f"{name!r} ({nd.kind}) does not define a density")


def density_range(net: HybridNetwork, name: str) -> tuple[float, float]:
    nd = net[name]
    if isinstance(nd, CLG):
        los = [r.intercept - TAIL_SD * math.sqrt(r.variance) for r in nd.rows.values()]
        his = [r.intercept + TAIL_SD * math.sqrt(r.variance) for r in nd.rows.values()]
        return min(los), max(his)
    if isinstance(nd, NonGaussianRoot):
        return effective_support(nd)
    if isinstance(nd, GridDensity):
        return float(nd.support[0]), float(nd.support[1])
    raise UnsupportedError(f"{name!r} ({nd.kind}) does not define a density")


def make_grid(net, name, grid=DEFAULT_GRID_POINTS) -> np.ndarray:
    if isinstance(grid, (tuple, list)):
        lo, hi, m = grid
        return np.linspace(lo, hi, int(m))
    lo, hi = density_range(net, name)
    return np.linspace(lo, hi, int(grid))


def density_potential(net: HybridNetwork, name: str, grid: np.ndarray) -> MixedPotential:
    """(1, f(x | dpa)) over the node's discrete parents and its own grid."""
    dpa = net.discrete_parents(name)
    configs = net.configs(dpa)
    rows = np.stack([density_function(net, name, c)(grid) for c in configs])
    shape = tuple(len(net.states(p)) for p in dpa) + (len(grid),)
    disc = [(p, net.states(p)) for p in dpa]
    return MixedPotential(disc, [(name, grid)], np.ones(shape), rows.reshape(shape))


def conditional_mass_potential(net: HybridNetwork, name: str, parent: str, grid: np.ndarray) -> MixedPotential:
    """(P(y | x, dpa), vacuous) for a discrete node with one continuous parent.

    Grid points that sit exactly on an indicator cutpoint get mass 1/2 in
    each adjacent region so trapezoid integration stays second order."""
    nd = net[name]
    dpa = [p for p in net.discrete_parents(name)]
    disc = [(p, net.states(p)) for p in dpa] + [(name, nd.states)]
    if nd.is_indicator:
        m = indicator_masses(grid, nd.cutpoints)
        for i, c in enumerate(nd.cutpoints):
            hit = np.isclose(grid, c, rtol=0, atol=1e-12 * max(1.0, abs(c)))
            m[hit, :] = 0.0
            m[hit, i] = 0.5
            m[hit, i + 1] = 0.5
        mass = np.moveaxis(m, -1, 0)  # (states, grid)
    else:
        blocks = []
        for cfg in itertools.product(*[range(len(net.states(p))) for p in dpa]):
            env = {parent: grid}
            env.update({p: float(i) for p, i in zip(dpa, cfg)})
            blocks.append(np.moveaxis(soft_masses(net, name, env), -1, 0))
        mass = np.stack(blocks).reshape(
            tuple(len(net.states(p)) for p in dpa) + (len(nd.states), len(grid))
        )
    if np.any(mass < -1e-12):
        raise InputError(f"node {name!r}: negative state mass on the reversal grid")
    return MixedPotential(disc, [(parent, grid)], np.maximum(mass, 0.0), None)


def conditional_mass_function(net: HybridNetwork, name: str, parent: str, dconfig: dict, state: str) -> Callable:
    nd = net[name]
    si = nd.states.index(state)

    def g(x):
        env = {parent: np.asarray(x, dtype=float)}
        env.update(dconfig)
        return soft_masses(net, name, env)[..., si]

    return g


# ------------------------------------------------------------ arc reversal


def has_other_path(net: HybridNetwork, x: str, y: str) -> bool:
    """Is there a directed path x ~> y other than the arc x -> y itself?"""
    stack = [c for c in net.children(x) if c != y]
    seen = set()
    while stack:
        n = stack.pop()
        if n == y:
            return True
        if n in seen:
            continue
        seen.add(n)
        stack.extend(net.children(n))
    return False


def unique_name(net: HybridNetwork, base: str) -> str:
    if base not in net:
        return base
    i = 2
    while f"{base}{i}" in net:
        i += 1
    return f"{base}{i}"


@dataclass
class Reversal:
    network: HybridNetwork
    selector: Optional[str] = None
    fits: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    joint_before: Optional[MixedPotential] = None
    parts_after: tuple = ()


def _trimmed_support(grid, row, region=None):
    nz = np.nonzero(row > 0)[0]
    i0 = max(nz[0] - 1, 0)
    i1 = min(nz[-1] + 1, len(grid) - 1)
    lo, hi = grid[i0], grid[i1]
    if region is not None:
        lo, hi = max(lo, region[0]), min(hi, region[1])
    return float(lo), float(hi)


def reverse_arc_full(net: HybridNetwork, x: str, y: str, grid=DEFAULT_GRID_POINTS, k: int = 2,
                     fit_bins: int = 600, seed: int = 0, restarts: int = 8) -> Reversal:
    """Reverse the arc x -> y (x continuous with a 1-D density, y discrete).

    y becomes a discrete CPT over the discrete parents of x and y; x becomes
    a Gaussian mixture per configuration of those parents plus y, realised
    as a selector node and a CLG node.
    """
    xn, yn = net[x], net[y]
    if x not in yn.parents:
        raise InputError(f"no arc {x} -> {y}")
    if xn.discrete or not yn.discrete:
        raise InputError(f"reverse_arc needs a continuous parent and a discrete child ({x} -> {y})")
    if not isinstance(yn, SoftDiscrete):
        raise InputError(f"{y!r} is not a discrete node with continuous parents")
    if has_other_path(net, x, y):
        raise InputError(f"cannot reverse {x} -> {y}: another directed path connects them")
    other = [p for p in net.continuous_parents(y) if p != x]
    if other or net.continuous_parents(x):
        raise UnsupportedError(
            f"multidimensional reversal unsupported: reversing {x} -> {y} would integrate over "
            f"{sorted(set(other + net.continuous_parents(x) + [x]))}"
        )

    xgrid = make_grid(net, x, grid)
    alpha = density_potential(net, x, xgrid)
    beta = conditional_mass_potential(net, y, x, xgrid)
    joint = combine(alpha, beta)
    marg = marginalize_continuous(joint, x)

    # discrete CPT for y, parents in (dpa(x) + dpa(y)) order
    negligible = marg.mass < ZERO_MASS
    mass = np.where(negligible, 0.0, marg.mass)
    if np.any(negligible):
        keep = ~negligible[..., None]
        joint = MixedPotential(joint.discrete, joint.continuous, joint.mass * keep, joint.density)
    sums = mass.sum(axis=-1, keepdims=True)
    if np.any(sums <= 0):
        raise InputError(f"reversal {x} -> {y}: a parent configuration has zero total mass")
    table = mass / sums
    marg = MixedPotential(marg.discrete, (), table, None)
    new_parents = tuple(n for n, _ in marg.discrete[:-1])
    y_cpt = DiscreteCPT(y, new_parents, yn.states, table.reshape(-1, len(yn.states)))

    cond = fold_mass_into_density(divide(joint, marg))
    dvars = marg.discrete
    dnames = [n for n, _ in dvars]
    xdpa = net.discrete_parents(x)
    ydpa = net.discrete_parents(y)
    rows_density = cond.density.reshape(-1, len(xgrid))

    sel_name = unique_name(net, f"{x}_sel")
    sel_states = tuple(f"s{i + 1}" for i in range(k))
    sel_table = []
    clg_rows = {}
    fits = {}
    warnings = []
    cfg = mogfit.FitConfig(k=k, n=fit_bins, seed=seed, restarts=restarts)
    for ci, combo in enumerate(itertools.product(*[s for _, s in dvars])):
        assign = dict(zip(dnames, combo))
        p_y = float(table.reshape(-1)[ci])
        label = f"{x}|" + ",".join(f"{n}={v}" for n, v in assign.items())
        xcfg = tuple(assign[p] for p in xdpa)
        if p_y <= 0:
            # impossible configuration; any proper density will do
            m0, v0 = _density_moments(density_function(net, x, xcfg), xgrid)
            gm = mogfit.GaussianMixture1D((1.0,) + (0.0,) * (k - 1), (m0,) * k, (math.sqrt(v0),) * k)
            warnings.append(f"{label}: configuration has zero probability; placeholder conditional")
        else:
            fx = density_function(net, x, xcfg)
            dcfg = {p: float(net.states(p).index(assign[p])) for p in ydpa}
            fy = conditional_mass_function(net, y, x, dcfg, assign[y])
            region = None
            if yn.is_indicator:
                i = yn.states.index(assign[y])
                cps = (-math.inf,) + tuple(yn.cutpoints) + (math.inf,)
                region = (cps[i], cps[i + 1])
            support = _trimmed_support(xgrid, rows_density[ci], region)
            target = _normalised(lambda t, fx=fx, fy=fy: fx(t) * fy(t), support, fit_bins)
            rep = mogfit.fit(target, support, cfg)
            fits[label] = rep
            gm = rep.mixture
        sel_table.append(gm.weights)
        for st, m, s in zip(sel_states, gm.means, gm.stddevs):
            clg_rows[tuple(combo) + (st,)] = CLGRow(m, {}, s * s)

    selector = DiscreteCPT(sel_name, tuple(dnames), sel_states, np.array(sel_table))
    x_new = CLG(x, tuple(dnames) + (sel_name,), clg_rows)
    nodes = []
    for nd in net.nodes:
        if nd.name == x:
            nodes += [y_cpt, selector, x_new]
        elif nd.name != y:
            nodes.append(nd)
    new_net = type(net)(net.name, tuple(nodes))
    return Reversal(new_net, sel_name, fits, warnings, joint, (cond, marg))


def reverse_arc(net: HybridNetwork, x: str, y: str, grid=DEFAULT_GRID_POINTS, k: int = 2, **kw) -> HybridNetwork:
    return reverse_arc_full(net, x, y, grid, k, **kw).network


def _normalised(f, support, n):
    total = float(mogfit.bin_target(f, support, n).masses.sum())
    if total <= 0:
        raise InputError("conditional density has no mass on its support")
    return lambda t: f(t) / total


def _density_moments(f, grid):
    w = f(grid)
    tot = np.trapezoid(w, grid)
    m = np.trapezoid(grid * w, grid) / tot
    v = np.trapezoid((grid - m) ** 2 * w, grid) / tot
    return float(m), float(max(v, 1e-12))


# ------------------------------------------ reversal through a deterministic node


def _linear_clg_parent(net, c):
    """(parent, {config: (intercept, slope)}) if c is a zero-variance CLG
    with exactly one continuous parent, else None."""
    nd = net[c]
    cont = net.continuous_parents(c)
    if not isinstance(nd, CLG) or len(cont) != 1:
        return None
    if any(r.variance != 0 for r in nd.rows.values()):
        return None
    b = cont[0]
    return b, {cfg: (r.intercept, r.coeffs.get(b, 0.0)) for cfg, r in nd.rows.items()}


def monotone_pieces(nd: Deterministic, lo: float, hi: float, n: int = 2001) -> list[tuple[float, float]]:
    """Declared monotone pieces, or pieces found by probing the sign of the
    first difference on a grid over [lo, hi]."""
    if nd.pieces is not None:
        return [(float(a), float(b)) for a, b in nd.pieces]
    xs = np.linspace(lo, hi, n)
    ys = np.broadcast_to(ex.evaluate(nd.fn, {nd.parents[0]: xs}), xs.shape)
    sign = np.sign(np.diff(ys))
    if np.any(sign == 0):
        i = int(np.argmax(sign == 0))
        raise InputError(f"{nd.name!r} is not invertible: flat near {xs[i]:.6g}")
    cuts = [lo]
    for i in range(1, len(sign)):
        if sign[i] != sign[i - 1]:
            cuts.append(float(xs[i]))
    cuts.append(hi)
    return list(zip(cuts[:-1], cuts[1:]))


def _symbolic_inverse(fn: ex.Expression, b: str, c: str, piece):
    import sympy as sp

    bs = sp.Symbol(b, real=True)
    cs = sp.Symbol(c, real=True)
    g = ex.to_sympy(fn, {b: bs})
    try:
        sols = sp.solve(sp.Eq(g, cs), bs)
    except NotImplementedError:
        sols = []
    lo, hi = piece
    probe = np.linspace(lo, hi, 7)[1:-1] if math.isfinite(lo) and math.isfinite(hi) else None
    for sol in sols:
        try:
            inv = ex.from_sympy(sp.simplify(sol))
            dinv = ex.from_sympy(sp.simplify(sp.diff(sol, cs)))
        except InputError:
            continue
        if probe is None:
            return inv, dinv
        try:
            cval = np.broadcast_to(ex.evaluate(fn, {b: probe}), probe.shape)
            back = np.broadcast_to(ex.evaluate(inv, {c: cval}), probe.shape)
        except InputError:
            continue
        if np.allclose(back, probe, rtol=1e-8, atol=1e-10):
            return inv, dinv
    raise InputError(f"cannot invert {ex.to_string(fn)} symbolically on [{lo}, {hi}]")


def reverse_deterministic_arc(net: HybridNetwork, b: str, c: str, grid_points: int = 20001,
                              tail_sd: float = 6.0) -> HybridNetwork:
    """Reverse b -> c where c is a deterministic function of b.

    c receives b's density pushed through the function (a CLG for linear
    relations, otherwise a tabulated density summed over monotone pieces);
    b becomes deterministic in c via the inverse function.
    """
    if b not in net[c].parents:
        raise InputError(f"no arc {b} -> {c}")
    if net.continuous_parents(b):
        raise UnsupportedError(f"{b!r} has continuous parents; reversal would need a 2-D density")
    lin = _linear_clg_parent(net, c)
    if lin is not None:
        return _reverse_linear(net, b, c, lin[1])
    cn = net[c]
    if not isinstance(cn, Deterministic) or cn.branches is not None or list(cn.parents) != [b]:
        raise InputError(f"{c!r} must be deterministic with the single parent {b!r}")
    bdpa = net.discrete_parents(b)
    bconfigs = net.configs(bdpa)
    blo, bhi = _density_window(net, b, tail_sd)
    pieces = monotone_pieces(cn, blo, bhi)
    fn = cn.fn
    inverses = []
    images = []
    for lo, hi in pieces:
        lo_c, hi_c = max(lo, blo), min(hi, bhi)
        ends = np.broadcast_to(ex.evaluate(fn, {b: np.array([lo_c, hi_c])}), (2,))
        img = (float(min(ends)), float(max(ends)))
        inverses.append(_symbolic_inverse(fn, b, c, (lo_c, hi_c)))
        images.append(img)
    for i in range(len(images)):
        for j in range(i + 1, len(images)):
            if min(images[i][1], images[j][1]) > max(images[i][0], images[j][0]):
                raise InputError(
                    f"{c!r}: monotone pieces overlap in range, so {b!r} is not a function of {c!r}"
                )
    clo = min(i[0] for i in images)
    chi = max(i[1] for i in images)
    cgrid = np.linspace(clo, chi, grid_points)
    rows = []
    for cfg in bconfigs:
        fb = density_function(net, b, cfg)
        dens = np.zeros_like(cgrid)
        for (inv, dinv), (ilo, ihi) in zip(inverses, images):
            inside = (cgrid >= ilo) & (cgrid <= ihi)
            if not np.any(inside):
                continue
            cv = cgrid[inside]
            bv = np.broadcast_to(ex.evaluate(inv, {c: cv}), cv.shape)
            jac = np.abs(np.broadcast_to(ex.evaluate(dinv, {c: cv}), cv.shape))
            dens[inside] += fb(bv) * jac
        total = np.trapezoid(dens, cgrid)
        rows.append(dens / total)
    c_new = GridDensity(c, tuple(bdpa), (clo, chi), np.array(rows))
    branches = tuple(Branch(ilo, ihi, inv) for (inv, _), (ilo, ihi) in zip(inverses, images))
    b_new = Deterministic(b, (c,), None, None, branches)
    return _swap(net, b, c, b_new, c_new)


def _density_window(net, b, tail_sd):
    nd = net[b]
    if isinstance(nd, CLG):
        los = [r.intercept - tail_sd * math.sqrt(r.variance) for r in nd.rows.values()]
        his = [r.intercept + tail_sd * math.sqrt(r.variance) for r in nd.rows.values()]
        return min(los), max(his)
    return density_range(net, b)


def _reverse_linear(net, b, c, rows):
    """b ~ density, c = a0 + a1 b (zero variance) given discrete configs."""
    bn = net[b]
    if not isinstance(bn, CLG):
        raise UnsupportedError(f"linear deterministic reversal needs a Gaussian {b!r}")
    bdpa = net.discrete_parents(b)
    cdpa = net.discrete_parents(c)
    new_dpa = bdpa + [p for p in cdpa if p not in bdpa]
    c_rows = {}
    b_rows = {}
    for combo in net.configs(new_dpa):
        assign = dict(zip(new_dpa, combo))
        brow = bn.rows[tuple(assign[p] for p in bdpa)]
        a0, a1 = rows[tuple(assign[p] for p in cdpa)]
        c_rows[combo] = CLGRow(a0 + a1 * brow.intercept, {}, a1 * a1 * brow.variance)
    for combo in net.configs(cdpa):
        a0, a1 = rows[combo]
        if a1 == 0:
            raise InputError(f"{c!r} does not depend on {b!r} in configuration {list(combo)}; not invertible")
        b_rows[combo] = CLGRow(-a0 / a1, {c: 1.0 / a1}, 0.0)
    c_new = CLG(c, tuple(new_dpa), c_rows)
    b_new = CLG(b, tuple(cdpa) + (c,), b_rows)
    return _swap(net, b, c, b_new, c_new)


def _swap(net, b, c, b_new, c_new):
    nodes = []
    for nd in net.nodes:
        if nd.name == b:
            nodes.append(c_new)
        elif nd.name == c:
            nodes.append(b_new)
        else:
            nodes.append(nd)
    # keep declaration order roughly topological: c now precedes b
    return type(net)(net.name, tuple(nodes))
