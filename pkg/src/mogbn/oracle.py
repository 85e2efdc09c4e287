"""Monte Carlo ground truth on uncompiled hybrid networks.

Ancestral sampling with a counter-based generator (Philox) and inverse-CDF
draws, so a seed reproduces a batch bit for bit.  Continuous evidence is
handled by likelihood weighting where the evidenced node has a positive
conditional variance, and by windowed rejection otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.special import ndtri

from .errors import EvidenceError, InputError
from .netmodel import (
    CLG,
    Deterministic,
    DiscreteCPT,
    GridDensity,
    Heteroscedastic,
    HybridNetwork,
    NonGaussianRoot,
    SoftDiscrete,
    SOFT_TOL,
    deterministic_value,
    effective_support,
    soft_masses,
)
from . import expr as ex
from .quadrature import cumulative_trapezoid

CDF_POINTS = 4096
MIN_ACCEPTED = 100
_U_EPS = 2.0**-54


@dataclass
class SampleBatch:
    values: dict  # name -> array; discrete nodes hold 0-based state indices
    weights: np.ndarray
    seed: int

    def __len__(self):
        return len(self.weights)


def _uniforms(rng, n):
    return np.clip(rng.random(n), _U_EPS, 1.0 - _U_EPS)


def _config_index(net, names, values) -> np.ndarray:
    idx = 0
    for p in names:
        idx = idx * len(net.states(p)) + values[p]
    return np.asarray(idx, dtype=int)


def _pick(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse CDF of categorical masses (cum: (N, S))."""
    k = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(k, cum.shape[1] - 1)


def _tabulated_inverse(pdf, lo, hi, u):
    x = np.linspace(lo, hi, CDF_POINTS)
    cdf = cumulative_trapezoid(np.maximum(pdf(x), 0.0), x)
    cdf = cdf / cdf[-1]
    return np.interp(u, cdf, x)


def _env(net, name, values):
    env = {}
    for p in net[name].parents:
        env[p] = values[p].astype(float) if net.is_discrete(p) else values[p]
    return env


def _gaussian_params(net, name, values, n):
    """Per-row conditional mean and variance for CLG / heteroscedastic nodes."""
    nd = net[name]
    if isinstance(nd, CLG):
        dpa = net.discrete_parents(name)
        rows = [nd.rows[c] for c in net.configs(dpa)]
        idx = _config_index(net, dpa, values) * np.ones(n, dtype=int)
        mean = np.array([r.intercept for r in rows])[idx]
        for p in net.continuous_parents(name):
            mean = mean + np.array([r.coeffs.get(p, 0.0) for r in rows])[idx] * values[p]
        var = np.array([r.variance for r in rows])[idx]
        return mean, var
    env = _env(net, name, values)
    mean = ex.evaluate_on(nd.mean, env, (n,))
    var = ex.evaluate_on(nd.variance_fn, env, (n,))
    if np.any(var <= 0):
        raise InputError(f"node {name!r}: nonpositive variance at a sampled parent value")
    return mean, var


def sample(net: HybridNetwork, n: int, seed: int = 0, clamp: Optional[Mapping[str, float]] = None) -> SampleBatch:
    """Ancestral sample of ``n`` rows.

    ``clamp`` fixes continuous nodes to values and multiplies the row
    weights by their conditional density (likelihood weighting)."""
    if n < 1:
        raise InputError("sample size must be >= 1")
    clamp = dict(clamp or {})
    rng = np.random.Generator(np.random.Philox(seed))
    values: dict = {}
    weights = np.ones(n)
    for name in net.topological_order():
        nd = net[name]
        u = _uniforms(rng, n)
        if isinstance(nd, DiscreteCPT):
            idx = _config_index(net, nd.parents, values) * np.ones(n, dtype=int)
            values[name] = _pick(np.cumsum(nd.table, axis=1)[idx], u)
        elif isinstance(nd, SoftDiscrete):
            masses = soft_masses(net, name, _env(net, name, values))
            masses = np.broadcast_to(masses, (n, len(nd.states)))
            if np.any(np.abs(masses.sum(axis=1) - 1.0) > SOFT_TOL):
                raise InputError(f"node {name!r}: state masses do not sum to 1 at a sampled parent value")
            values[name] = _pick(np.cumsum(masses, axis=1), u)
        elif name in clamp:
            x = float(clamp[name])
            weights = weights * _density_at(net, name, values, x, n)
            values[name] = np.full(n, x)
        elif isinstance(nd, (CLG, Heteroscedastic)):
            mean, var = _gaussian_params(net, name, values, n)
            values[name] = mean + np.sqrt(var) * ndtri(u)
        elif isinstance(nd, Deterministic):
            values[name] = np.broadcast_to(deterministic_value(nd, _env(net, name, values)), (n,)).copy()
        elif isinstance(nd, NonGaussianRoot):
            lo, hi = effective_support(nd)
            values[name] = _tabulated_inverse(lambda x: ex.evaluate_on(nd.pdf, {"x": x}, x.shape), lo, hi, u)
        elif isinstance(nd, GridDensity):
            idx = _config_index(net, nd.parents, values) * np.ones(n, dtype=int)
            out = np.empty(n)
            g = nd.grid
            for r in np.unique(idx):
                sel = idx == r
                out[sel] = _tabulated_inverse(lambda x: np.interp(x, g, nd.values[r]), g[0], g[-1], u[sel])
            values[name] = out
        else:
            raise InputError(f"cannot sample node {name!r} of kind {nd.kind}")
    return SampleBatch(values, weights, seed)


def _density_at(net, name, values, x, n):
    nd = net[name]
    if isinstance(nd, (CLG, Heteroscedastic)):
        mean, var = _gaussian_params(net, name, values, n)
        if np.any(var <= 0):
            raise EvidenceError(f"likelihood weighting needs a positive variance for {name!r}")
        return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * math.pi * var)
    if isinstance(nd, NonGaussianRoot):
        lo, hi = nd.support
        return np.full(n, ex.evaluate(nd.pdf, {"x": x}) if lo <= x <= hi else 0.0)
    if isinstance(nd, GridDensity):
        idx = _config_index(net, nd.parents, values) * np.ones(n, dtype=int)
        return np.array([np.interp(x, nd.grid, nd.values[i], left=0.0, right=0.0) for i in idx])
    raise EvidenceError(f"no density for {name!r}; use rejection")


def _weightable(net, name) -> bool:
    nd = net[name]
    if isinstance(nd, CLG):
        return all(r.variance > 0 for r in nd.rows.values())
    return isinstance(nd, (Heteroscedastic, NonGaussianRoot, GridDensity))


@dataclass
class Estimate:
    discrete: dict = field(default_factory=dict)  # name -> {state: (p, se)}
    continuous: dict = field(default_factory=dict)  # name -> dict of moments and standard errors
    accepted: float = 0.0
    method: str = "forward"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "effectiveSampleSize": self.accepted,
            "discrete": {n: {s: {"p": p, "se": se} for s, (p, se) in d.items()} for n, d in self.discrete.items()},
            "continuous": self.continuous,
        }


def estimate_conditional(net: HybridNetwork, n: int, seed: int = 0, evidence: Optional[Mapping] = None,
                         window: Optional[float] = None, method: str = "auto") -> Estimate:
    """Weighted posterior estimates with standard errors.

    ``method``: "auto" (likelihood weighting where possible), "weighting" or
    "rejection".  ``window`` is the rejection half-width; by default 1% of
    the evidenced node's prior standard deviation."""
    evidence = dict(evidence or {})
    for name, v in evidence.items():
        if name not in net:
            raise InputError(f"evidence on unknown node {name!r}")
        if net.is_discrete(name) and v not in net.states(name):
            raise InputError(f"{v!r} is not a state of {name!r}")
    cont_ev = {k: float(v) for k, v in evidence.items() if not net.is_discrete(k)}
    if method not in ("auto", "weighting", "rejection"):
        raise InputError(f"unknown estimation method {method!r}")
    if method == "weighting":
        bad = [k for k in cont_ev if not _weightable(net, k)]
        if bad:
            raise EvidenceError(f"likelihood weighting impossible for {bad}: no positive conditional density")
        clamp = cont_ev
    elif method == "auto":
        clamp = {k: v for k, v in cont_ev.items() if _weightable(net, k)}
    else:
        clamp = {}
    batch = sample(net, n, seed, clamp)
    w = batch.weights.copy()
    for name, v in evidence.items():
        if net.is_discrete(name):
            w *= batch.values[name] == net.states(name).index(v)
    reject = {k: v for k, v in cont_ev.items() if k not in clamp}
    for name, x in reject.items():
        eps = window
        if eps is None:
            eps = 0.01 * float(np.std(sample(net, n, seed).values[name]))
        w *= np.abs(batch.values[name] - x) <= eps
    total = w.sum()
    ess = total**2 / np.sum(w * w) if total > 0 else 0.0
    if ess < MIN_ACCEPTED:
        raise EvidenceError(
            f"only {ess:.0f} effective draws match the evidence (need {MIN_ACCEPTED}); "
            "widen the rejection window or increase the sample size"
        )
    w = w / total
    est = Estimate(accepted=float(ess), method="rejection" if reject else ("weighting" if clamp else "forward"))
    for name in net.names:
        vals = batch.values[name]
        if net.is_discrete(name):
            probs = np.bincount(vals, weights=w, minlength=len(net.states(name)))
            est.discrete[name] = {
                s: (float(p), float(math.sqrt(max(p * (1 - p), 0.0) / ess)))
                for s, p in zip(net.states(name), probs)
            }
        else:
            mean = float(np.sum(w * vals))
            c = vals - mean
            var = float(np.sum(w * c * c))
            m4 = float(np.sum(w * c**4))
            est.continuous[name] = {
                "mean": mean,
                "meanSE": math.sqrt(var / ess),
                "variance": var,
                "varianceSE": math.sqrt(max(m4 - var * var, 0.0) / ess),
            }
    return est
