"""Exact inference on MoG networks by enumerating discrete configurations.

Every configuration of the discrete nodes carries one multivariate Gaussian
over the continuous nodes; conditioning is a Schur-complement update per
component plus a likelihood reweighting.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .errors import EvidenceError, InputError, ResourceError
from .mogfit import GaussianMixture1D, mixture_moments, mixture_pdf
from .netmodel import CLG, DiscreteCPT, HybridNetwork, is_mog

DEFAULT_CAP = 10**6
ZERO_VARIANCE = 1e-12
MODE_GRID = 2001


@dataclass(frozen=True, eq=False)
class MultivariateGaussian:
    names: tuple
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise InputError("covariance matrix is not symmetric")
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))

    def marginal(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return float(self.mean[i]), max(float(self.cov[i, i]), 0.0)


@dataclass(frozen=True)
class Component:
    weight: float
    config: dict
    gaussian: MultivariateGaussian


class MixtureOfMVNs:
    """Weighted Gaussians indexed by discrete configurations, stored as
    stacked arrays (one row per configuration)."""

    def __init__(self, discrete, continuous, configs, weights, means, covs):
        self.discrete = tuple(discrete)  # ((name, states), ...)
        self.continuous = tuple(continuous)
        self.configs = np.asarray(configs, dtype=int).reshape(len(weights), len(self.discrete))
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float).reshape(len(weights), len(self.continuous))
        self.covs = np.asarray(covs, dtype=float).reshape(len(weights), len(self.continuous), len(self.continuous))

    def __len__(self):
        return len(self.weights)

    @property
    def components(self) -> list[Component]:
        out = []
        for i in range(len(self)):
            cfg = {n: s[j] for (n, s), j in zip(self.discrete, self.configs[i])}
            out.append(Component(float(self.weights[i]), cfg,
                                 MultivariateGaussian(self.continuous, self.means[i], self.covs[i])))
        return out

    def subset(self, keep: np.ndarray, weights=None) -> "MixtureOfMVNs":
        w = self.weights[keep] if weights is None else weights
        return MixtureOfMVNs(self.discrete, self.continuous, self.configs[keep], w,
                             self.means[keep], self.covs[keep])


def build_mixture(net: HybridNetwork, cap: int = DEFAULT_CAP) -> MixtureOfMVNs:
    if not is_mog(net):
        raise InputError("inference needs a MoG network (discrete CPTs and CLG nodes only)")
    order = net.topological_order()
    dnodes = [n for n in order if net.is_discrete(n)]
    cnodes = [n for n in order if not net.is_discrete(n)]
    sizes = [len(net.states(n)) for n in dnodes]
    total = math.prod(sizes)
    if total > cap:
        raise ResourceError(
            f"{total} discrete configurations exceed the component cap of {cap}; "
            "exact enumeration is infeasible for this network"
        )
    dpos = {n: i for i, n in enumerate(dnodes)}
    configs = np.array(list(itertools.product(*[range(s) for s in sizes])), dtype=int).reshape(total, len(dnodes))

    weights = np.ones(total)
    for n in dnodes:
        nd: DiscreteCPT = net[n]
        idx = _config_index(net, nd.parents, configs, dpos)
        weights = weights * nd.table[idx, configs[:, dpos[n]]]
    keep = weights > 0
    configs, weights = configs[keep], weights[keep]
    m = len(weights)

    c = len(cnodes)
    cpos = {n: i for i, n in enumerate(cnodes)}
    means = np.zeros((m, c))
    covs = np.zeros((m, c, c))
    for n in cnodes:
        nd: CLG = net[n]
        dpa = net.discrete_parents(n)
        cpa = net.continuous_parents(n)
        rows = [nd.rows[cfg] for cfg in net.configs(dpa)]
        idx = _config_index(net, dpa, configs, dpos)
        b0 = np.array([r.intercept for r in rows])[idx]
        var = np.array([r.variance for r in rows])[idx]
        b = np.array([[r.coeffs.get(p, 0.0) for p in cpa] for r in rows]).reshape(len(rows), len(cpa))[idx]
        j = cpos[n]
        pi = [cpos[p] for p in cpa]
        means[:, j] = b0 + np.einsum("mi,mi->m", b, means[:, pi])
        cross = np.einsum("mi,mik->mk", b, covs[:, pi, :])
        covs[:, j, :] = cross
        covs[:, :, j] = cross
        covs[:, j, j] = np.einsum("mi,mi->m", b, cross[:, pi]) + var
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    dvars = [(n, net.states(n)) for n in dnodes]
    return MixtureOfMVNs(dvars, cnodes, configs, weights / weights.sum(), means, covs)


def _config_index(net, names, configs, dpos) -> np.ndarray:
    idx = np.zeros(len(configs), dtype=int)
    for p in names:
        idx = idx * len(net.states(p)) + configs[:, dpos[p]]
    return idx


def condition(mix: MixtureOfMVNs, evidence: Mapping[str, object]) -> MixtureOfMVNs:
    """Condition on discrete labels and continuous values.

    Evidenced continuous coordinates keep their value as a zero-variance
    coordinate, so chained conditioning composes."""
    if not evidence:
        return mix
    dnames = [n for n, _ in mix.discrete]
    keep = np.ones(len(mix), dtype=bool)
    cont_ev = {}
    for name, value in evidence.items():
        if name in dnames:
            states = dict(mix.discrete)[name]
            if value not in states:
                raise InputError(f"{value!r} is not a state of {name!r}")
            keep &= mix.configs[:, dnames.index(name)] == states.index(value)
        elif name in mix.continuous:
            cont_ev[name] = float(value)
        else:
            raise InputError(f"evidence on unknown node {name!r}")
    if not np.any(keep & (mix.weights > 0)):
        raise EvidenceError("impossible evidence: every configuration has probability zero")
    out = mix.subset(keep)
    if not cont_ev:
        return out.subset(np.ones(len(out), bool), out.weights / out.weights.sum())

    e = [mix.continuous.index(n) for n in cont_ev]
    x = np.array(list(cont_ev.values()))
    r = [i for i in range(len(mix.continuous)) if i not in e]
    see = out.covs[:, e][:, :, e]
    diag = np.diagonal(see, axis1=1, axis2=2)
    if np.any(diag <= ZERO_VARIANCE):
        bad = [n for n, col in zip(cont_ev, diag.T) if np.any(col <= ZERO_VARIANCE)]
        raise EvidenceError(f"unsupported: evidence on zero-variance coordinate(s) {bad}")
    resid = x[None, :] - out.means[:, e]
    chol = np.linalg.cholesky(see)
    z = np.linalg.solve(chol, resid[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    with np.errstate(divide="ignore"):
        logw = np.log(out.weights) - 0.5 * (np.sum(z * z, axis=1) + logdet + len(e) * math.log(2 * math.pi))
    if not np.any(np.isfinite(logw)):
        raise EvidenceError("impossible evidence: zero likelihood in every configuration")
    w = np.exp(logw - logsumexp(logw))

    sre = out.covs[:, r][:, :, e]
    gain = np.linalg.solve(see, np.swapaxes(sre, 1, 2))  # (m, |e|, |r|)
    means = out.means.copy()
    means[:, r] += np.einsum("mer,me->mr", gain, resid)
    means[:, e] = x
    covs = out.covs.copy()
    rr, cc = np.ix_(r, r)
    covs[:, rr, cc] -= np.einsum("mre,mes->mrs", sre, gain)
    covs[:, e, :] = 0.0
    covs[:, :, e] = 0.0
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return MixtureOfMVNs(out.discrete, out.continuous, out.configs, w, means, covs)


def marginal_continuous(mix: MixtureOfMVNs, name: str) -> GaussianMixture1D:
    if name not in mix.continuous:
        raise InputError(f"{name!r} is not a continuous node of the mixture")
    i = mix.continuous.index(name)
    mu = mix.means[:, i]
    sd = np.sqrt(np.maximum(mix.covs[:, i, i], 0.0))
    order = np.lexsort((sd, mu))
    w, mu, sd = mix.weights[order], mu[order], sd[order]
    new = np.ones(len(w), dtype=bool)
    new[1:] = (np.abs(np.diff(mu)) > 1e-12) | (np.abs(np.diff(sd)) > 1e-12)
    group = np.cumsum(new) - 1
    weights = np.bincount(group, weights=w)
    return GaussianMixture1D(tuple(weights / weights.sum()), tuple(mu[new]), tuple(sd[new]), allow_zero_sd=True)


def marginal_discrete(mix: MixtureOfMVNs, name: str) -> dict[str, float]:
    dnames = [n for n, _ in mix.discrete]
    if name not in dnames:
        raise InputError(f"{name!r} is not a discrete node of the mixture")
    states = dict(mix.discrete)[name]
    col = mix.configs[:, dnames.index(name)]
    probs = np.bincount(col, weights=mix.weights, minlength=len(states))
    probs = probs / probs.sum()
    return {s: float(p) for s, p in zip(states, probs)}


def mixture_mode(gm: GaussianMixture1D) -> float:
    """Global maximiser of the mixture density; near-ties go to smaller x.

    Zero-width components are point masses: the heaviest one is the mode."""
    w, m, s = gm.arrays()
    atoms = s == 0
    if np.any(atoms):
        i = int(np.argmax(np.where(atoms, w, -1.0)))
        return float(m[i])
    lo = float(m.min() - 4 * s.max())
    hi = float(m.max() + 4 * s.max())
    xs = np.linspace(lo, hi, MODE_GRID)
    ys = mixture_pdf(gm, xs)
    i = int(np.argmax(ys >= ys.max() * (1 - 1e-9)))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    neg = lambda t: -float(mixture_pdf(gm, t))
    if 0 < i < len(xs) - 1:
        x = optimize.golden(neg, brack=(a, xs[i], b), tol=1e-10)
        if a <= x <= b and neg(x) <= neg(xs[i]):
            return float(x)
    return float(xs[i])


@dataclass
class PosteriorReport:
    discrete: dict  # name -> {state: probability}
    continuous: dict  # name -> GaussianMixture1D

    def to_dict(self) -> dict:
        cont = {}
        for name, gm in self.continuous.items():
            mean, var = mixture_moments(gm)
            cont[name] = {"mixture": gm.to_dict(), "mean": mean, "variance": var, "mode": mixture_mode(gm)}
        return {"discrete": self.discrete, "continuous": cont}


def posterior(net: HybridNetwork, evidence: Optional[Mapping] = None, query: Optional[Iterable[str]] = None,
              cap: int = DEFAULT_CAP) -> PosteriorReport:
    mix = condition(build_mixture(net, cap), evidence or {})
    names = list(query) if query else net.names
    for n in names:
        if n not in net:
            raise InputError(f"unknown query node {n!r}")
    disc = {n: marginal_discrete(mix, n) for n in names if net.is_discrete(n)}
    cont = {n: marginal_continuous(mix, n) for n in names if not net.is_discrete(n)}
    return PosteriorReport(disc, cont)
