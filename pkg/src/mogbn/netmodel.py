"""Hybrid network model: node kinds, validation, JSON file format, evidence."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import ClassVar, Iterable, Mapping, Optional

import numpy as np
from scipy import integrate

from . import expr as ex
from .errors import InputError

CPT_TOL = 1e-9
SOFT_TOL = 1e-6
PDF_TOL = 1e-4
TAIL_SD = 8.0
VALIDATION_POINTS = 101


# ------------------------------------------------------------------ nodes


@dataclass(frozen=True, eq=False)
class Node:
    name: str
    parents: tuple

    kind: ClassVar[str] = ""
    discrete: ClassVar[bool] = False


@dataclass(frozen=True, eq=False)
class DiscreteCPT(Node):
    states: tuple
    table: np.ndarray  # (n_parent_configs, n_states)

    kind: ClassVar[str] = "discrete"
    discrete: ClassVar[bool] = True


@dataclass(frozen=True, eq=False)
class SoftDiscrete(Node):
    """Discrete node with continuous parents.

    Either ``mass`` maps each state to an expression over the parents
    (discrete parents are bound to their 0-based state index), or
    ``cutpoints`` makes it a one-hot region indicator of its single
    continuous parent: state i <=> cutpoints[i-1] <= a < cutpoints[i].
    """

    states: tuple
    mass: Optional[dict] = None
    cutpoints: Optional[tuple] = None

    kind: ClassVar[str] = "softDiscrete"
    discrete: ClassVar[bool] = True

    @property
    def is_indicator(self) -> bool:
        return self.cutpoints is not None


@dataclass(frozen=True)
class CLGRow:
    intercept: float
    coeffs: dict
    variance: float


@dataclass(frozen=True, eq=False)
class CLG(Node):
    rows: dict  # discrete-parent config (tuple of labels) -> CLGRow

    kind: ClassVar[str] = "clg"


@dataclass(frozen=True, eq=False)
class NonGaussianRoot(Node):
    pdf: ex.Expression
    support: tuple

    kind: ClassVar[str] = "nonGaussian"


@dataclass(frozen=True)
class Branch:
    lo: float
    hi: float
    fn: ex.Expression


@dataclass(frozen=True, eq=False)
class Deterministic(Node):
    """``fn`` of the parents, or a piecewise ``branches`` form guarded on the
    single parent's value.  ``pieces`` lists parent intervals on which the
    function is monotone (needed to invert it)."""

    fn: Optional[ex.Expression] = None
    pieces: Optional[tuple] = None
    branches: Optional[tuple] = None

    kind: ClassVar[str] = "deterministic"


@dataclass(frozen=True, eq=False)
class Heteroscedastic(Node):
    mean: ex.Expression
    variance_fn: ex.Expression

    kind: ClassVar[str] = "heteroscedastic"


@dataclass(frozen=True, eq=False)
class GridDensity(Node):
    """Density tabulated on an equally spaced grid over ``support``, one row
    per discrete-parent configuration; linear interpolation in between."""

    support: tuple
    values: np.ndarray

    kind: ClassVar[str] = "gridDensity"

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.support[0], self.support[1], self.values.shape[1])


# ---------------------------------------------------------------- network


@dataclass(frozen=True, eq=False)
class HybridNetwork:
    name: str
    nodes: tuple
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        index = {}
        for nd in self.nodes:
            if nd.name in index:
                raise InputError(f"duplicate node name {nd.name!r}")
            index[nd.name] = nd
        object.__setattr__(self, "_index", index)
        for nd in self.nodes:
            for p in nd.parents:
                if p not in index:
                    raise InputError(f"node {nd.name!r} has unknown parent {p!r}")
            if len(set(nd.parents)) != len(nd.parents):
                raise InputError(f"node {nd.name!r} lists a parent twice")
        _check_acyclic(self)
        for nd in self.nodes:
            _check_structure(self, nd)

    # lookups
    def __contains__(self, name) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> Node:
        try:
            return self._index[name]
        except KeyError:
            raise InputError(f"unknown node {name!r}") from None

    @property
    def names(self) -> list[str]:
        return [nd.name for nd in self.nodes]

    def is_discrete(self, name: str) -> bool:
        return self[name].discrete

    def states(self, name: str) -> tuple:
        return self[name].states

    def discrete_parents(self, name: str) -> list[str]:
        return [p for p in self[name].parents if self[p].discrete]

    def continuous_parents(self, name: str) -> list[str]:
        return [p for p in self[name].parents if not self[p].discrete]

    def children(self, name: str) -> list[str]:
        return [nd.name for nd in self.nodes if name in nd.parents]

    def configs(self, names: Iterable[str]) -> list[tuple]:
        """All joint state tuples of ``names``, last name varying fastest."""
        return list(itertools.product(*[self.states(n) for n in names]))

    def parent_configs(self, name: str) -> list[tuple]:
        return self.configs(self.discrete_parents(name))

    def config_index(self, names: Iterable[str], config: tuple) -> int:
        idx = 0
        for n, label in zip(names, config):
            st = self.states(n)
            idx = idx * len(st) + st.index(label)
        return idx

    def replace(self, *new_nodes: Node, remove: Iterable[str] = (), name=None):
        """New network with nodes swapped in place (same name) or appended."""
        removed = set(remove)
        by_name = {nd.name: nd for nd in new_nodes}
        out = []
        for nd in self.nodes:
            if nd.name in removed:
                continue
            out.append(by_name.pop(nd.name, nd))
        out.extend(by_name.values())
        return type(self)(name or self.name, tuple(out))

    def topological_order(self) -> list[str]:
        return topological_order(self)


class MoGNetwork(HybridNetwork):
    """Restricted network: DiscreteCPT nodes with discrete parents only, and
    CLG continuous nodes."""

    def __post_init__(self):
        super().__post_init__()
        bad = [nd.name for nd in self.nodes if not isinstance(nd, (DiscreteCPT, CLG))]
        if bad:
            raise InputError(f"not a MoG network: nodes {bad} are not discrete-CPT or CLG")

    @classmethod
    def from_network(cls, net: HybridNetwork) -> "MoGNetwork":
        return cls(net.name, net.nodes)


def is_mog(net: HybridNetwork) -> bool:
    return all(isinstance(nd, (DiscreteCPT, CLG)) for nd in net.nodes)


def _check_acyclic(net: HybridNetwork):
    state = {}

    def visit(name, stack):
        state[name] = 1
        for p in net[name].parents:
            if state.get(p) == 1:
                cycle = stack[stack.index(p):] + [p] if p in stack else [p, name]
                raise InputError(f"cycle detected: {' -> '.join(reversed(cycle))}")
            if p not in state:
                visit(p, stack + [p])
        state[name] = 2

    for nd in net.nodes:
        if nd.name not in state:
            visit(nd.name, [nd.name])


def topological_order(net: HybridNetwork) -> list[str]:
    """Parents before children; ties go to the earlier-declared node."""
    placed: set[str] = set()
    order: list[str] = []
    remaining = list(net.nodes)
    while remaining:
        for i, nd in enumerate(remaining):
            if all(p in placed for p in nd.parents):
                order.append(nd.name)
                placed.add(nd.name)
                del remaining[i]
                break
    return order


def _n_configs(net, name):
    return int(np.prod([len(net.states(p)) for p in net.discrete_parents(name)], dtype=int))


def _check_structure(net: HybridNetwork, nd: Node):
    """Cheap, grid-free invariants checked on every construction."""
    cont = net.continuous_parents(nd.name)
    if isinstance(nd, DiscreteCPT):
        if cont:
            raise InputError(f"discrete node {nd.name!r} has continuous parents {cont}")
        table = nd.table
        if table.shape != (_n_configs(net, nd.name), len(nd.states)):
            raise InputError(
                f"node {nd.name!r}: table shape {table.shape} does not match "
                f"{_n_configs(net, nd.name)} configurations x {len(nd.states)} states"
            )
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1) > CPT_TOL):
            raise InputError(f"node {nd.name!r}: CPT rows must be nonnegative and sum to 1")
    elif isinstance(nd, SoftDiscrete):
        if nd.is_indicator:
            if len(cont) != 1 or len(nd.parents) != 1:
                raise InputError(f"indicator {nd.name!r} needs exactly one continuous parent")
            cps = list(nd.cutpoints)
            if cps != sorted(cps) or len(set(cps)) != len(cps):
                raise InputError(f"indicator {nd.name!r}: cutpoints must be strictly increasing")
            if len(nd.states) != len(cps) + 1:
                raise InputError(f"indicator {nd.name!r}: need len(cutpoints)+1 states")
        else:
            if set(nd.mass) != set(nd.states):
                raise InputError(f"node {nd.name!r}: mass expressions must cover every state")
            for st, e in nd.mass.items():
                _check_vars(nd, e, set(nd.parents), f"mass[{st}]")
    elif isinstance(nd, CLG):
        configs = net.parent_configs(nd.name)
        if set(nd.rows) != set(configs) or len(nd.rows) != len(configs):
            raise InputError(f"node {nd.name!r}: CLG rows must cover each discrete configuration once")
        for cfg, row in nd.rows.items():
            if row.variance < 0 or not math.isfinite(row.variance):
                raise InputError(f"node {nd.name!r}: negative variance in row {list(cfg)}")
            extra = set(row.coeffs) - set(cont)
            if extra:
                raise InputError(f"node {nd.name!r}: coefficients for non-continuous-parents {sorted(extra)}")
    elif isinstance(nd, NonGaussianRoot):
        if nd.parents:
            raise InputError(f"non-Gaussian root {nd.name!r} cannot have parents")
        lo, hi = nd.support
        if not lo < hi:
            raise InputError(f"node {nd.name!r}: support hi <= lo")
        _check_vars(nd, nd.pdf, {"x"}, "pdf")
    elif isinstance(nd, Deterministic):
        if nd.branches is not None:
            if len(nd.parents) != 1:
                raise InputError(f"piecewise deterministic {nd.name!r} needs a single parent")
            for b in nd.branches:
                _check_vars(nd, b.fn, set(nd.parents), "branch fn")
        else:
            _check_vars(nd, nd.fn, set(nd.parents), "fn")
        if any(net.is_discrete(p) for p in nd.parents):
            raise InputError(f"deterministic node {nd.name!r} must have continuous parents only")
    elif isinstance(nd, Heteroscedastic):
        _check_vars(nd, nd.mean, set(nd.parents), "mean")
        _check_vars(nd, nd.variance_fn, set(nd.parents), "varianceFn")
    elif isinstance(nd, GridDensity):
        if cont:
            raise InputError(f"grid density {nd.name!r} may only have discrete parents")
        if nd.values.ndim != 2 or nd.values.shape[0] != _n_configs(net, nd.name):
            raise InputError(f"node {nd.name!r}: one density row per discrete configuration required")
        if np.any(nd.values < 0):
            raise InputError(f"node {nd.name!r}: negative density value")
    else:
        raise InputError(f"unknown node type for {nd.name!r}")


def _check_vars(nd, e, allowed, what):
    unknown = ex.variables(e) - allowed
    if unknown:
        raise InputError(
            f"node {nd.name!r}: {what} references undeclared parent(s) {sorted(unknown)}"
        )


# ----------------------------------------------------- supports and grids


def pdf_function(e: ex.Expression):
    return lambda x: ex.evaluate(e, {"x": x})


def effective_support(node: NonGaussianRoot) -> tuple[float, float]:
    """Finite integration range: the declared support, with infinite ends
    truncated at mean +/- 8 standard deviations."""
    lo, hi = node.support
    if math.isfinite(lo) and math.isfinite(hi):
        return float(lo), float(hi)
    f = pdf_function(node.pdf)
    m = integrate.quad(lambda x: x * f(x), lo, hi, limit=200)[0]
    v = integrate.quad(lambda x: (x - m) ** 2 * f(x), lo, hi, limit=200)[0]
    s = math.sqrt(max(v, 0.0))
    return max(lo, m - TAIL_SD * s), min(hi, m + TAIL_SD * s)


def pdf_integral(node: NonGaussianRoot) -> float:
    f = pdf_function(node.pdf)
    lo, hi = node.support
    return float(integrate.quad(f, lo, hi, limit=200)[0])


def indicator_masses(x, cutpoints) -> np.ndarray:
    """One-hot region membership, shape x.shape + (len(cutpoints)+1,)."""
    x = np.asarray(x, dtype=float)
    idx = np.searchsorted(np.asarray(cutpoints, dtype=float), x, side="right")
    out = np.zeros(x.shape + (len(cutpoints) + 1,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def soft_masses(net: HybridNetwork, name: str, env: Mapping[str, object]) -> np.ndarray:
    """State masses of a SoftDiscrete node; last axis indexes states.

    ``env`` binds continuous parents to values and discrete parents to state
    labels or 0-based indices (arrays allowed)."""
    nd = net[name]
    if nd.is_indicator:
        return indicator_masses(env[nd.parents[0]], nd.cutpoints)
    bound = {}
    for p in nd.parents:
        v = env[p]
        if net.is_discrete(p) and isinstance(v, str):
            v = float(net.states(p).index(v))
        bound[p] = v
    shape = np.broadcast_shapes(*[np.shape(v) for v in bound.values()]) if bound else ()
    return np.stack([ex.evaluate_on(nd.mass[s], bound, shape) for s in nd.states], axis=-1)


def node_ranges(net: HybridNetwork) -> dict[str, tuple[float, float]]:
    """Conservative value ranges of continuous nodes (used for probe grids)."""
    ranges: dict[str, tuple[float, float]] = {}
    for name in topological_order(net):
        nd = net[name]
        if nd.discrete:
            continue
        if isinstance(nd, NonGaussianRoot):
            ranges[name] = effective_support(nd)
        elif isinstance(nd, GridDensity):
            ranges[name] = (float(nd.support[0]), float(nd.support[1]))
        elif isinstance(nd, CLG):
            los, his = [], []
            for row in nd.rows.values():
                lo = hi = row.intercept
                for p, b in row.coeffs.items():
                    plo, phi_ = ranges[p]
                    lo += min(b * plo, b * phi_)
                    hi += max(b * plo, b * phi_)
                sd = math.sqrt(row.variance)
                los.append(lo - TAIL_SD * sd)
                his.append(hi + TAIL_SD * sd)
            ranges[name] = (min(los), max(his))
        else:
            pts = probe_points(net, name, ranges, 201)
            vals = []
            sds = [0.0]
            for env in pts:
                if isinstance(nd, Deterministic):
                    vals.append(np.atleast_1d(deterministic_value(nd, env)))
                else:
                    vals.append(np.atleast_1d(ex.evaluate(nd.mean, env)))
                    var = np.atleast_1d(ex.evaluate(nd.variance_fn, env))
                    sds.append(float(np.sqrt(np.max(np.maximum(var, 0)))))
            v = np.concatenate(vals)
            sd = max(sds)
            ranges[name] = (float(v.min()) - TAIL_SD * sd, float(v.max()) + TAIL_SD * sd)
    return ranges


def probe_points(net, name, ranges, n=VALIDATION_POINTS) -> list[dict]:
    """Probe environments over the parents of ``name``.

    One continuous parent: an n-point grid.  Several: the diagonal plus one
    n-point sweep per parent with the others held at mid-range.  Every
    discrete-parent configuration is crossed with the continuous probes
    (bound as state indices)."""
    nd = net[name]
    cont = [p for p in nd.parents if not net.is_discrete(p)]
    disc = [p for p in nd.parents if net.is_discrete(p)]
    sweeps = []
    if len(cont) == 1:
        lo, hi = ranges[cont[0]]
        sweeps.append({cont[0]: np.linspace(lo, hi, n)})
    elif cont:
        t = np.linspace(0.0, 1.0, n)
        sweeps.append({p: ranges[p][0] + t * (ranges[p][1] - ranges[p][0]) for p in cont})
        for p in cont:
            env = {q: np.full(n, 0.5 * (ranges[q][0] + ranges[q][1])) for q in cont}
            env[p] = np.linspace(ranges[p][0], ranges[p][1], n)
            sweeps.append(env)
    else:
        sweeps.append({})
    out = []
    for cfg in itertools.product(*[range(len(net.states(d))) for d in disc]):
        for sw in sweeps:
            env = dict(sw)
            env.update({d: float(i) for d, i in zip(disc, cfg)})
            out.append(env)
    return out


def deterministic_value(nd: Deterministic, env: Mapping[str, object]):
    if nd.branches is None:
        return ex.evaluate(nd.fn, env)
    a = np.asarray(env[nd.parents[0]], dtype=float)
    out = np.full(a.shape, np.nan)
    for b in nd.branches:
        inside = (a >= b.lo) & (a <= b.hi) & np.isnan(out)
        if np.any(inside):
            sub = {nd.parents[0]: a[inside]}
            out[inside] = np.broadcast_to(ex.evaluate(b.fn, sub), a[inside].shape)
    if np.any(np.isnan(out)):
        raise InputError(f"deterministic node {nd.name!r}: value outside every branch range")
    return float(out) if out.ndim == 0 else out


def second_difference_linear(e, var, env, lo, hi, tol=1e-7) -> bool:
    """Probe linearity of ``e`` in ``var`` via second differences on a grid."""
    x = np.linspace(lo, hi, 41)
    local = dict(env)
    local[var] = x
    y = np.broadcast_to(ex.evaluate(e, local), x.shape)
    d2 = y[2:] - 2 * y[1:-1] + y[:-2]
    scale = max(1.0, float(np.max(np.abs(y))))
    return bool(np.all(np.abs(d2) <= tol * scale))


def validate_semantics(net: HybridNetwork) -> None:
    """Grid and quadrature checks (SoftDiscrete normalisation, pdf mass,
    heteroscedastic linearity/positivity, deterministic evaluability)."""
    ranges = node_ranges(net)
    for nd in net.nodes:
        if isinstance(nd, NonGaussianRoot):
            xs = np.linspace(*effective_support(nd), 1001)
            vals = np.broadcast_to(ex.evaluate(nd.pdf, {"x": xs}), xs.shape)
            if np.any(vals < 0):
                where = xs[np.argmax(vals < 0)]
                raise InputError(f"node {nd.name!r}: pdf negative at x={where:g}")
            total = pdf_integral(nd)
            if abs(total - 1.0) > PDF_TOL:
                raise InputError(
                    f"node {nd.name!r}: pdf integrates to {total:.6g} over its support, not 1"
                )
        elif isinstance(nd, SoftDiscrete) and not nd.is_indicator:
            for env in probe_points(net, nd.name, ranges):
                m = soft_masses(net, nd.name, env)
                if np.any(m < -SOFT_TOL) or np.any(np.abs(m.sum(axis=-1) - 1) > SOFT_TOL):
                    raise InputError(f"node {nd.name!r}: state masses do not sum to 1 on the validation grid")
        elif isinstance(nd, Heteroscedastic):
            cont = net.continuous_parents(nd.name)
            for env in probe_points(net, nd.name, ranges):
                var = np.asarray(ex.evaluate(nd.variance_fn, env))
                if np.any(var <= 0):
                    raise InputError(f"node {nd.name!r}: varianceFn not strictly positive on parent support")
                for p in cont:
                    point = {q: float(np.mean(v)) for q, v in env.items()}
                    if not second_difference_linear(nd.mean, p, point, *ranges[p]):
                        raise InputError(
                            f"node {nd.name!r}: mean must be linear in continuous parent {p!r}; "
                            "model nonlinear means with a deterministic node"
                        )
        elif isinstance(nd, Deterministic):
            for env in probe_points(net, nd.name, ranges):
                deterministic_value(nd, env)
        elif isinstance(nd, GridDensity):
            x = nd.grid
            for i, row in enumerate(nd.values):
                total = float(np.trapezoid(row, x))
                if abs(total - 1) > 1e-6:
                    raise InputError(f"node {nd.name!r}: density row {i} integrates to {total:.8g}")


# ------------------------------------------------------------ file format


def _num(v, what):
    if isinstance(v, str):
        if v in ("inf", "+inf"):
            return math.inf
        if v == "-inf":
            return -math.inf
        raise InputError(f"{what}: expected a number, got {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InputError(f"{what}: expected a number, got {v!r}")
    return float(v)


def _expr(text, where):
    try:
        return ex.parse_expression(text)
    except InputError as err:
        raise InputError(f"{where}: {err}") from None


def _field(d, key, where):
    if key not in d:
        raise InputError(f"{where}: missing field {key!r}")
    return d[key]


def _node_from_dict(d: dict) -> Node:
    if not isinstance(d, dict):
        raise InputError("each node must be a JSON object")
    name = _field(d, "name", "node")
    where = f"node {name!r}"
    parents = tuple(d.get("parents", []))
    kind = _field(d, "kind", where)
    if kind == "discrete":
        st = tuple(str(s) for s in _field(d, "states", where))
        raw = _field(d, "table", where)
        arr = np.asarray(raw, dtype=float)
        if arr.ndim == 1:
            if arr.size % len(st):
                raise InputError(f"{where}: table length not a multiple of the state count")
            arr = arr.reshape(-1, len(st))
        return DiscreteCPT(name, parents, st, arr)
    if kind == "softDiscrete":
        st = tuple(str(s) for s in _field(d, "states", where))
        if "cutpoints" in d:
            cps = tuple(_num(c, where) for c in d["cutpoints"])
            return SoftDiscrete(name, parents, st, None, cps)
        mass = {str(k): _expr(v, f"{where} mass[{k}]") for k, v in _field(d, "mass", where).items()}
        return SoftDiscrete(name, parents, st, mass, None)
    if kind == "clg":
        rows = {}
        for r in _field(d, "clg", where):
            cfg = tuple(str(s) for s in r.get("config", []))
            if cfg in rows:
                raise InputError(f"{where}: duplicate CLG row for configuration {list(cfg)}")
            coeffs = {str(k): _num(v, where) for k, v in r.get("coeffs", {}).items()}
            rows[cfg] = CLGRow(_num(r.get("intercept", 0.0), where), coeffs, _num(_field(r, "variance", where), where))
        return CLG(name, parents, rows)
    if kind == "nonGaussian":
        sup = _field(d, "support", where)
        if len(sup) != 2:
            raise InputError(f"{where}: support must be [lo, hi]")
        return NonGaussianRoot(name, parents, _expr(_field(d, "pdf", where), f"{where} pdf"),
                               (_num(sup[0], where), _num(sup[1], where)))
    if kind == "deterministic":
        pieces = None
        if "pieces" in d:
            pieces = tuple((_num(a, where), _num(b, where)) for a, b in d["pieces"])
        if "branches" in d:
            br = tuple(
                Branch(_num(b["range"][0], where), _num(b["range"][1], where), _expr(b["fn"], f"{where} branch"))
                for b in d["branches"]
            )
            return Deterministic(name, parents, None, pieces, br)
        return Deterministic(name, parents, _expr(_field(d, "fn", where), f"{where} fn"), pieces, None)
    if kind == "heteroscedastic":
        return Heteroscedastic(name, parents, _expr(_field(d, "mean", where), f"{where} mean"),
                               _expr(_field(d, "varianceFn", where), f"{where} varianceFn"))
    if kind == "gridDensity":
        sup = _field(d, "support", where)
        vals = np.asarray(_field(d, "values", where), dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        return GridDensity(name, parents, (_num(sup[0], where), _num(sup[1], where)), vals)
    raise InputError(f"{where}: unknown kind {kind!r}")


def network_from_dict(doc: dict, validate: bool = True) -> HybridNetwork:
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise InputError("network document must be an object with a 'nodes' list")
    nodes = tuple(_node_from_dict(d) for d in doc["nodes"])
    net = HybridNetwork(str(doc.get("name", "network")), nodes)
    if validate:
        validate_semantics(net)
    return net


def parse_network(text: str, validate: bool = True) -> HybridNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise InputError(f"syntax error at line {err.lineno}, column {err.colno}: {err.msg}") from None
    return network_from_dict(doc, validate=validate)


def load_network(path, validate: bool = True) -> HybridNetwork:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from None
    return parse_network(text, validate=validate)


def _fmt(v: float):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def node_to_dict(nd: Node) -> dict:
    d = {"name": nd.name, "parents": list(nd.parents), "kind": nd.kind}
    if isinstance(nd, DiscreteCPT):
        d["states"] = list(nd.states)
        d["table"] = [[float(v) for v in row] for row in nd.table]
    elif isinstance(nd, SoftDiscrete):
        d["states"] = list(nd.states)
        if nd.is_indicator:
            d["cutpoints"] = [float(c) for c in nd.cutpoints]
        else:
            d["mass"] = {s: ex.to_string(nd.mass[s]) for s in nd.states}
    elif isinstance(nd, CLG):
        d["clg"] = [
            {
                "config": list(cfg),
                "intercept": float(r.intercept),
                "coeffs": {k: float(v) for k, v in r.coeffs.items()},
                "variance": float(r.variance),
            }
            for cfg, r in nd.rows.items()
        ]
    elif isinstance(nd, NonGaussianRoot):
        d["pdf"] = ex.to_string(nd.pdf)
        d["support"] = [_fmt(nd.support[0]), _fmt(nd.support[1])]
    elif isinstance(nd, Deterministic):
        if nd.branches is not None:
            d["branches"] = [{"range": [_fmt(b.lo), _fmt(b.hi)], "fn": ex.to_string(b.fn)} for b in nd.branches]
        else:
            d["fn"] = ex.to_string(nd.fn)
        if nd.pieces is not None:
            d["pieces"] = [[_fmt(a), _fmt(b)] for a, b in nd.pieces]
    elif isinstance(nd, Heteroscedastic):
        d["mean"] = ex.to_string(nd.mean)
        d["varianceFn"] = ex.to_string(nd.variance_fn)
    elif isinstance(nd, GridDensity):
        d["support"] = [_fmt(nd.support[0]), _fmt(nd.support[1])]
        d["values"] = [[float(v) for v in row] for row in nd.values]
    return d


def network_to_dict(net: HybridNetwork) -> dict:
    return {"name": net.name, "nodes": [node_to_dict(nd) for nd in net.nodes]}


def serialize_network(net: HybridNetwork) -> str:
    return json.dumps(network_to_dict(net), indent=2) + "\n"


# --------------------------------------------------------------- evidence


def evidence_from_dict(doc, net: HybridNetwork) -> dict:
    if isinstance(doc, dict) and "evidence" in doc:
        doc = doc["evidence"]
    if not isinstance(doc, dict):
        raise InputError("evidence must be an object mapping node names to values")
    out = {}
    for name, value in doc.items():
        if name not in net:
            raise InputError(f"evidence on undeclared node {name!r}")
        if net.is_discrete(name):
            label = str(value)
            if label not in net.states(name):
                raise InputError(f"evidence {name}={value!r}: not a declared state {list(net.states(name))}")
            out[name] = label
        else:
            out[name] = _num(value, f"evidence {name!r}")
            if not math.isfinite(out[name]):
                raise InputError(f"evidence {name!r} must be finite")
    return out


def parse_evidence(text: str, net: HybridNetwork) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise InputError(f"evidence syntax error at line {err.lineno}, column {err.colno}: {err.msg}") from None
    return evidence_from_dict(doc, net)
