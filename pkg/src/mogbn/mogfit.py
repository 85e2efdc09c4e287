"""Least-squares Gaussian-mixture approximation of univariate densities.

The target density and a candidate mixture are both discretised into ``n``
equal-width bins over a finite support, and the sum of squared bin-mass
differences is minimised subject to 3-sigma containment of every component
inside the support.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from . import expr as ex
from .errors import FitError, InputError
from .netmodel import CLG, CLGRow, DiscreteCPT, MoGNetwork
from .quadrature import simpson, simpson_weights

log = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)
POINTS_PER_BIN = 33
KL_POINTS = 2001

Pdf = Union[str, ex.Expression, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class GaussianMixture1D:
    weights: tuple
    means: tuple
    stddevs: tuple
    allow_zero_sd: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        m = tuple(float(v) for v in self.means)
        s = tuple(float(v) for v in self.stddevs)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stddevs", s)
        if not (len(w) == len(m) == len(s)) or not w:
            raise InputError("mixture needs equally many weights, means and stddevs (at least one)")
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
            raise InputError(f"mixture weights must be >= 0 and sum to 1 (sum={sum(w)!r})")
        if any(not math.isfinite(v) for v in m + s):
            raise InputError("mixture means and stddevs must be finite")
        if self.allow_zero_sd:
            if min(s) < 0:
                raise InputError("mixture stddevs must be >= 0")
        elif min(s) <= 0:
            raise InputError("mixture stddevs must be > 0")

    @property
    def k(self) -> int:
        return len(self.weights)

    def arrays(self):
        return np.array(self.weights), np.array(self.means), np.array(self.stddevs)

    def to_dict(self) -> dict:
        return {
            "components": [
                {"weight": p, "mean": m, "stddev": s}
                for p, m, s in zip(self.weights, self.means, self.stddevs)
            ]
        }

    @classmethod
    def from_dict(cls, d: dict, allow_zero_sd: bool = False) -> "GaussianMixture1D":
        comps = d["components"]
        return cls(
            tuple(c["weight"] for c in comps),
            tuple(c["mean"] for c in comps),
            tuple(c["stddev"] for c in comps),
            allow_zero_sd=allow_zero_sd,
        )

    @classmethod
    def from_arrays(cls, weights, means, stddevs, allow_zero_sd=False):
        w = np.asarray(weights, dtype=float)
        return cls(tuple(w / w.sum()), tuple(means), tuple(stddevs), allow_zero_sd=allow_zero_sd)


@dataclass(frozen=True)
class BinGrid:
    lo: float
    hi: float
    n: int
    masses: np.ndarray = field(compare=False)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)


@dataclass(frozen=True)
class FitConfig:
    k: int
    n: int = 100
    symmetry_axis: Optional[float] = None
    restarts: int = 8
    max_iterations: int = 4000
    penalty_schedule: tuple = (1.0, 1e2, 1e4)
    seed: int = 0
    min_sigma: Optional[float] = None


@dataclass(frozen=True)
class FitReport:
    mixture: GaussianMixture1D
    sse: float
    kl: float
    target_mean: float
    target_var: float
    mixture_mean: float
    mixture_var: float
    converged: bool = field(default=True, compare=False)

    def to_dict(self) -> dict:
        return {
            "mixture": self.mixture.to_dict(),
            "sse": self.sse,
            "kl": self.kl,
            "targetMean": self.target_mean,
            "targetVar": self.target_var,
            "mixtureMean": self.mixture_mean,
            "mixtureVar": self.mixture_var,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(
            GaussianMixture1D.from_dict(d["mixture"]),
            d["sse"], d["kl"], d["targetMean"], d["targetVar"], d["mixtureMean"], d["mixtureVar"],
        )


# ------------------------------------------------------------ densities


def as_function(pdf: Pdf) -> Callable[[np.ndarray], np.ndarray]:
    if callable(pdf):
        return pdf
    if isinstance(pdf, str):
        pdf = ex.parse_expression(pdf)
    return lambda x: np.broadcast_to(ex.evaluate(pdf, {"x": x}), np.shape(x))


def mixture_pdf(gm: GaussianMixture1D, x):
    p, m, s = gm.arrays()
    x = np.asarray(x, dtype=float)
    pos = s > 0
    z = (x[..., None] - m[pos]) / s[pos]
    out = (p[pos] * np.exp(-0.5 * z * z) / (s[pos] * _SQRT_2PI)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def mixture_cdf(gm: GaussianMixture1D, x):
    p, m, s = gm.arrays()
    x = np.asarray(x, dtype=float)
    pos = s > 0
    out = (p[pos] * ndtr((x[..., None] - m[pos]) / s[pos])).sum(axis=-1)
    # point-mass components
    out = out + (p[~pos] * (x[..., None] >= m[~pos])).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def mixture_moments(gm: GaussianMixture1D) -> tuple[float, float]:
    p, m, s = gm.arrays()
    mean = float(p @ m)
    var = float(p @ (s * s + m * m) - mean * mean)
    return mean, max(var, 0.0)


def affine_transform(gm: GaussianMixture1D, a: float, b: float) -> GaussianMixture1D:
    """Map a mixture on [0, 1] onto [a, b]: mu -> (b-a)mu + a, sigma -> (b-a)sigma."""
    if not b > a:
        raise InputError(f"affine_transform needs b > a (got a={a}, b={b})")
    w = b - a
    return GaussianMixture1D(
        gm.weights,
        tuple(w * m + a for m in gm.means),
        tuple(w * s for s in gm.stddevs),
    )


# ---------------------------------------------------------------- binning


def _check_support(support) -> tuple[float, float]:
    lo, hi = float(support[0]), float(support[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InputError("support must be finite; truncate infinite supports first")
    if not hi > lo:
        raise InputError(f"support hi ≤ lo ({lo}, {hi})")
    return lo, hi


def bin_target(pdf: Pdf, support, n: int) -> BinGrid:
    """Bin masses of a target density, 33-point Simpson per bin."""
    lo, hi = _check_support(support)
    f = as_function(pdf)
    h = (hi - lo) / n
    offsets = np.linspace(0.0, h, POINTS_PER_BIN)
    x = lo + h * np.arange(n)[:, None] + offsets[None, :]
    x[-1, -1] = hi
    vals = np.asarray(f(x), dtype=float)
    if np.any(vals < 0):
        i = np.unravel_index(np.argmin(vals), vals.shape)
        raise InputError(f"target pdf negative ({vals[i]:.3g}) at x={x[i]:.6g}")
    w = simpson_weights(POINTS_PER_BIN, h / (POINTS_PER_BIN - 1))
    return BinGrid(lo, hi, n, vals @ w)


def bin_mixture(gm: GaussianMixture1D, support, n: int) -> np.ndarray:
    """Exact bin masses of the mixture via Gaussian CDF differences."""
    lo, hi = _check_support(support)
    p, m, s = gm.arrays()
    return _bin_masses(np.linspace(lo, hi, n + 1), p, m, s)


def _bin_masses(edges, p, m, s):
    c = ndtr((edges[:, None] - m) / s)
    return (c[1:] - c[:-1]) @ p


def sse(grid: BinGrid, gm: GaussianMixture1D) -> float:
    g = bin_mixture(gm, (grid.lo, grid.hi), grid.n)
    return float(np.sum((grid.masses - g) ** 2))


# --------------------------------------------------------------- diagnostics


def kl_divergence(target: Pdf, gm: GaussianMixture1D, support, points: int = KL_POINTS,
                  base: float = math.e) -> float:
    """KL(target || mixture) over the support by composite Simpson.

    Points where the target is zero contribute nothing.  The mixture density
    is floored at 1e-300 before the log; if it underflows to exactly zero
    where the target is positive the divergence is reported as +inf.
    """
    lo, hi = _check_support(support)
    if points % 2 == 0:
        points += 1
    x = np.linspace(lo, hi, points)
    f = np.asarray(as_function(target)(x), dtype=float)
    g = np.asarray(mixture_pdf(gm, x), dtype=float)
    underflow = (g == 0) & (f > 0)
    if np.any(underflow):
        log.warning("mixture density underflows to 0 at x=%.6g where the target is positive",
                    x[np.argmax(underflow)])
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(f > 0, f * np.log(f / np.maximum(g, 1e-300)), 0.0)
    kl = simpson(integrand, x) / math.log(base)
    return max(kl, 0.0)


def target_moments(pdf: Pdf, support, points: int = KL_POINTS) -> tuple[float, float]:
    lo, hi = _check_support(support)
    x = np.linspace(lo, hi, points if points % 2 else points + 1)
    f = np.asarray(as_function(pdf)(x), dtype=float)
    mass = simpson(f, x)
    mean = simpson(x * f, x) / mass
    var = simpson((x - mean) ** 2 * f, x) / mass
    return mean, var


# ------------------------------------------------------------------ fitting


class _Layout:
    """Maps an unconstrained parameter vector to a feasible mixture.

    Groups are single components or mirrored pairs (symmetric fits).  Each
    group owns a weight root q (weights are normalised squares), a raw mean
    u (absent for a component pinned to the axis) and a log-sigma v.  Means
    and sigmas are clipped into the 3-sigma containment region; the clipped
    amount is returned as a violation for the penalty term.
    """

    def __init__(self, k, lo, hi, axis, min_sigma):
        self.lo, self.hi, self.axis, self.min_sigma = lo, hi, axis, min_sigma
        if axis is None:
            kinds = ["free"] * k
        else:
            kinds = ["pair"] * (k // 2) + (["center"] if k % 2 else [])
        self.kinds = kinds
        g = len(kinds)
        self.n_groups = g
        self.is_pair = np.array([kd == "pair" for kd in kinds])
        self.has_mean = np.array([kd != "center" for kd in kinds])
        self.n_means = int(self.has_mean.sum())
        self.size = 2 * g + self.n_means
        self.mult = np.where(self.is_pair, 2.0, 1.0)
        smin = min_sigma
        mlo = np.full(g, lo + 3 * smin)
        mhi = np.full(g, hi - 3 * smin)
        if axis is not None:
            mlo[self.is_pair] = max(lo, 2 * axis - hi) + 3 * smin
            mhi[self.is_pair] = min(axis, min(hi, 2 * axis - lo) - 3 * smin)
            mlo = np.minimum(mlo, mhi)
        self.mlo, self.mhi = mlo, mhi
        # component -> (group, mirrored?)
        comp_group, comp_mirror = [], []
        for gi, kd in enumerate(kinds):
            comp_group.append(gi)
            comp_mirror.append(False)
            if kd == "pair":
                comp_group.append(gi)
                comp_mirror.append(True)
        self.comp_group = np.array(comp_group)
        self.comp_mirror = np.array(comp_mirror)

    def split(self, theta):
        g = self.n_groups
        return theta[:g], theta[g: g + self.n_means], theta[g + self.n_means:]

    def pack(self, q, u, v):
        return np.concatenate([np.asarray(q, float), np.asarray(u, float), np.asarray(v, float)])

    def unpack(self, theta):
        lo, hi, smin = self.lo, self.hi, self.min_sigma
        axis = self.axis if self.axis is not None else 0.0
        width = hi - lo
        q, u, v = self.split(theta)
        qq = q * q
        total = float(qq @ self.mult)
        if total <= 0:
            qq = np.ones_like(qq)
            total = float(self.mult.sum())
        w = qq / total
        raw = np.full(self.n_groups, axis)
        raw[self.has_mean] = u
        mu = np.minimum(np.maximum(raw, self.mlo), self.mhi)
        mu[~self.has_mean] = axis
        mir = np.where(self.is_pair, 2 * axis - mu, mu)
        cap = np.minimum(np.minimum(mu - lo, hi - mu), np.minimum(mir - lo, hi - mir)) / 3.0
        sraw = np.exp(np.minimum(v, 700.0))
        sig = np.minimum(np.maximum(sraw, smin), np.maximum(cap, smin))
        viol = float(np.sum(((raw - mu) / width)[self.has_mean] ** 2) + np.sum(((sraw - sig) / width) ** 2))
        cg = self.comp_group
        means = np.where(self.comp_mirror, mir[cg], mu[cg])
        return w[cg], means, sig[cg], viol

    def start(self, k, rng=None):
        lo, hi, axis = self.lo, self.hi, self.axis
        width = hi - lo
        if rng is None:
            mus = lo + (np.arange(k) + 0.5) * width / k
            sig = np.full(self.n_groups, width / (6 * k))
            q = np.ones(self.n_groups)
        else:
            sig = width * rng.uniform(1.0 / (20 * k), 1.0 / (3 * k), self.n_groups)
            q = rng.uniform(0.5, 1.5, self.n_groups)
            mus = None
        if axis is None:
            u = list(mus) if mus is not None else sorted(rng.uniform(lo, hi, k))
        else:
            n_pairs = k // 2
            if mus is not None:
                u = list(mus[:n_pairs])
            else:
                u = sorted(rng.uniform(max(lo, 2 * axis - hi), axis, n_pairs))
        return self.pack(q, u, np.log(sig))


def _validate_config(cfg: FitConfig, lo: float, hi: float) -> float:
    if cfg.k < 1:
        raise FitError("k must be >= 1")
    if cfg.n < 10:
        raise FitError("bin count n must be >= 10")
    if cfg.restarts < 1:
        raise FitError("restarts must be >= 1")
    width = hi - lo
    smin = cfg.min_sigma if cfg.min_sigma is not None else width * 1e-6
    if smin <= 0 or width < 6 * smin:
        raise FitError(f"infeasible: support width {width:g} < 6 x minimum sigma {smin:g}")
    if cfg.symmetry_axis is not None and not lo < cfg.symmetry_axis < hi:
        raise FitError(f"infeasible: symmetry axis {cfg.symmetry_axis} outside support ({lo}, {hi})")
    return smin


def fit(pdf: Pdf, support, cfg: FitConfig) -> FitReport:
    """Fit a ``cfg.k``-component mixture to ``pdf`` on ``support``.

    Multi-start Nelder-Mead on the clipped reparameterisation, with the
    clipping penalty weight raised through ``cfg.penalty_schedule``.  The
    best restart (lowest SSE, then lowest index) wins; deterministic for a
    given ``cfg.seed``.
    """
    lo, hi = _check_support(support)
    smin = _validate_config(cfg, lo, hi)
    grid = bin_target(pdf, (lo, hi), cfg.n)
    total = float(grid.masses.sum())
    if abs(total - 1.0) > 1e-4:
        raise InputError(f"target pdf integrates to {total:.6g} on [{lo}, {hi}], not 1")

    layout = _Layout(cfg.k, lo, hi, cfg.symmetry_axis, smin)
    edges = grid.edges
    f = grid.masses
    scale = float(f @ f)

    def objective(theta, weight):
        p, m, s, viol = layout.unpack(theta)
        g = _bin_masses(edges, p, m, s)
        r = f - g
        return float(r @ r) + weight * scale * viol

    rng = np.random.default_rng(cfg.seed)
    starts = [layout.start(cfg.k)] + [layout.start(cfg.k, rng) for _ in range(cfg.restarts - 1)]
    best = None
    for idx, theta in enumerate(starts):
        converged = True
        for weight in cfg.penalty_schedule:
            res = minimize(
                objective, theta, args=(weight,), method="Nelder-Mead",
                options={"maxiter": cfg.max_iterations, "maxfev": 2 * cfg.max_iterations,
                         "xatol": 1e-10, "fatol": 1e-18, "adaptive": layout.size > 4},
            )
            theta = res.x
            converged = bool(res.success)
        p, m, s, _ = layout.unpack(theta)
        val = float(np.sum((f - _bin_masses(edges, p, m, s)) ** 2))
        if best is None or val < best[0]:
            best = (val, idx, p, m, s, converged)

    val, _, p, m, s, converged = best
    order = np.lexsort((s, m))
    gm = GaussianMixture1D.from_arrays(p[order], m[order], s[order])
    _check_containment(gm, lo, hi)
    if not converged:
        log.warning("fit did not converge within %d iterations; returning best-so-far", cfg.max_iterations)
    tm, tv = target_moments(pdf, (lo, hi))
    mm, mv = mixture_moments(gm)
    return FitReport(gm, val, kl_divergence(pdf, gm, (lo, hi)), tm, tv, mm, mv, converged)


def _check_containment(gm: GaussianMixture1D, lo, hi, tol=1e-9):
    for m, s in zip(gm.means, gm.stddevs):
        if m - 3 * s < lo - tol or m + 3 * s > hi + tol:
            raise FitError(f"internal error: component N({m}, {s}^2) violates 3-sigma containment")


# ------------------------------------------------------------- network form


def to_selector_fragment(gm: GaussianMixture1D, var_name: str, selector_name: str,
                         existing: Sequence[str] = ()) -> MoGNetwork:
    """Selector node with the mixture weights plus a CLG child holding one
    Gaussian per selector state."""
    if var_name == selector_name or selector_name in existing:
        raise InputError(f"name collision: selector {selector_name!r} already exists")
    states = tuple(f"s{i + 1}" for i in range(gm.k))
    sel = DiscreteCPT(selector_name, (), states, np.array([gm.weights]))
    rows = {
        (st,): CLGRow(m, {}, s * s) for st, m, s in zip(states, gm.means, gm.stddevs)
    }
    return MoGNetwork("fragment", (sel, CLG(var_name, (selector_name,), rows)))
