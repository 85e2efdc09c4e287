"""Acceptance criteria 1-7, each at its stated tolerance.

Every criterion prints one PASS/FAIL line (also collected into the pytest
terminal summary).  A criterion fails if any of its clauses fails.
"""

import json
import time

import numpy as np

import netgen
import oracles
from conftest import load
from mogbn import inference, mogfit, oracle, transforms
from mogbn import potentials as pt
from mogbn.netmodel import network_to_dict, serialize_network
from test_potentials import CASES, random_potential, same

RESULTS = []
REPORTS = {}


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.clauses = []

    def check(self, label, ok, detail=""):
        self.clauses.append((label, bool(ok), detail))

    def finish(self):
        ok = all(c[1] for c in self.clauses)
        failed = [f"{lab} ({det})" for lab, good, det in self.clauses if not good]
        passed = [f"{lab} ({det})" for lab, good, det in self.clauses if good]
        line = f"criterion {self.number} [{'PASS' if ok else 'FAIL'}] {self.title}"
        if failed:
            line += " | failed: " + "; ".join(failed)
        line += " | passed: " + "; ".join(passed) if passed else ""
        RESULTS.append(line)
        print(line)
        assert ok, line


def within(x, lo, hi):
    return lo <= x <= hi


# --------------------------------------------------------------- runners


def run_u01():
    t0 = time.perf_counter()
    rep = mogfit.fit("1", (0, 1), mogfit.FitConfig(k=5, n=100, symmetry_axis=0.5, seed=0))
    return rep, time.perf_counter() - t0, json.dumps(rep.to_dict(), sort_keys=True)


def run_compiled(name, evidence=None, query=None):
    t0 = time.perf_counter()
    mog, crep = transforms.compile_network(load(name), transforms.CompileOptions(seed=0))
    prior = inference.posterior(mog, {}, query)
    post = inference.posterior(mog, evidence, query) if evidence else None
    elapsed = time.perf_counter() - t0
    blob = serialize_network(mog) + json.dumps(crep.to_dict(), sort_keys=True) + json.dumps(prior.to_dict(), sort_keys=True)
    if post is not None:
        blob += json.dumps(post.to_dict(), sort_keys=True)
    return mog, crep, prior, post, elapsed, blob


# ------------------------------------------------------------ criteria


def test_criterion_1_uniform_fit():
    c = Criterion(1, "U[0,1] five-component fit")
    rep, elapsed, blob = run_u01()
    REPORTS[1] = blob
    gm = rep.mixture
    mix = dict(weights=gm.weights, means=gm.means, stddevs=gm.stddevs)
    sse = oracles.sse(lambda x: 1.0, 0, 1, 100, mix)
    kl = oracles.kl(lambda x: 1.0, mix, 0, 1)
    c.check("SSE <= paper vector", sse <= oracles.FROZEN["paper_u01_sse"],
            f"{sse:.6g} vs {oracles.FROZEN['paper_u01_sse']:.6g}")
    c.check("KL <= 0.05 (nats)", kl <= 0.05, f"{kl:.4g}")
    m, v = rep.mixture_mean, rep.mixture_var
    c.check("mean 0.5 +- 1e-3", abs(m - 0.5) <= 1e-3, f"{m:.6g}")
    c.check("variance 0.073 +- 0.003", abs(v - 0.073) <= 0.003, f"{v:.6g}")
    c.check("runtime < 60 s", elapsed < 60, f"{elapsed:.1f} s")
    c.finish()


def test_criterion_2_logistic_reversal():
    c = Criterion(2, "logistic arc reversal")
    mog, crep, prior, post, elapsed, blob = run_compiled("logistic", {"A": 1.0}, ["A", "B"])
    REPORTS[2] = blob
    pb = prior.discrete["B"]["b"]
    c.check("P(b) = 0.5 +- 1e-3", abs(pb - 0.5) <= 1e-3, f"{pb:.6g}")
    cond = inference.posterior(mog, {"B": "b"}, ["A"]).continuous["A"]
    mix = dict(weights=cond.weights, means=cond.means, stddevs=cond.stddevs)
    sse = oracles.sse(oracles.logistic_conditional, -8, 8, 600, mix)
    c.check("refit SSE <= paper fit (n=600)", sse <= oracles.FROZEN["paper_logistic_sse"],
            f"{sse:.4g} vs {oracles.FROZEN['paper_logistic_sse']:.4g}")
    m, v = mogfit.mixture_moments(prior.continuous["A"])
    c.check("|mean A| <= 0.02", abs(m) <= 0.02, f"{m:.3g}")
    c.check("var A in [0.93, 1.00]", within(v, 0.93, 1.00), f"{v:.5g}")
    p1 = post.discrete["B"]["b"]
    c.check("P(b | A=1) in [0.86, 0.89]", within(p1, 0.86, 0.89), f"{p1:.5g}")
    c.check("runtime < 2 min", elapsed < 120, f"{elapsed:.1f} s")
    c.finish()


def test_criterion_3_square_pipeline():
    c = Criterion(3, "nonlinear deterministic pipeline")
    pl = transforms.piecewise_linearize(lambda a: a * a, (-2, -1, 0, 1, 2))
    c.check("six segments exact", pl.segments == oracles.SQUARE_SEGMENTS, str(pl.segments))
    mog, crep, prior, _, elapsed, blob = run_compiled("square", None, ["B"])
    REPORTS[3] = blob
    m, v = mogfit.mixture_moments(prior.continuous["B"])
    c.check("E[B] in [1.02, 1.22]", within(m, 1.02, 1.22), f"{m:.5g}")
    c.check("Var[B] in [1.45, 1.85]", within(v, 1.45, 1.85), f"{v:.5g}")
    est = oracle.estimate_conditional(load("square"), 100_000, 0).continuous["B"]
    c.check("oracle mean 1 within 4 SE", abs(est["mean"] - 1) <= 4 * est["meanSE"],
            f"{est['mean']:.4g} +- {est['meanSE']:.2g}")
    c.check("oracle variance 2 within 4 SE", abs(est["variance"] - 2) <= 4 * est["varianceSE"],
            f"{est['variance']:.4g} +- {est['varianceSE']:.2g}")
    c.check("runtime < 2 min", elapsed < 120, f"{elapsed:.1f} s")
    c.finish()


def test_criterion_4_variance_segmentation():
    c = Criterion(4, "variance segmentation")
    sig = transforms.default_variance_sigmas(lambda a: np.square(a), (1, 2, 3, 4, 5))
    c.check("default sigmas", np.allclose(sig, oracles.HETERO_SIGMAS, atol=1e-12), str(sig))
    mog, crep, prior, _, elapsed, blob = run_compiled("hetero", None, ["B"])
    REPORTS[4] = blob
    gm = prior.continuous["B"]
    m, v = mogfit.mixture_moments(gm)
    c.check("E[B] = 3 +- 0.05", abs(m - 3) <= 0.05, f"{m:.5g}")
    c.check("Var[B] in [10.4, 11.6]", within(v, 10.4, 11.6), f"{v:.5g}")
    mode = inference.mixture_mode(gm)
    c.check("mode in [1.7, 2.1]", within(mode, 1.7, 2.1), f"{mode:.5g}")
    c.check("runtime < 2 min", elapsed < 120, f"{elapsed:.1f} s")
    c.finish()


def test_criterion_5_potential_properties():
    c = Criterion(5, "potential-algebra properties")
    rng = np.random.default_rng(5)
    counts = dict.fromkeys(["identity", "commutativity", "associativity", "divide round-trip",
                            "reversal joint", "marginal order"], 0)
    fails = dict.fromkeys(counts, 0)

    def record(key, ok):
        counts[key] += 1
        fails[key] += not ok

    for _ in range(CASES):
        p, q, r = random_potential(rng), random_potential(rng), random_potential(rng)
        record("identity", same(pt.combine(p, pt.unit_potential()), p))
        record("commutativity", same(pt.combine(p, q), pt.combine(q, p)))
        record("associativity", same(pt.combine(pt.combine(p, q), r), pt.combine(p, pt.combine(q, r))))
        joint = pt.combine(p, q)
        record("divide round-trip", same(pt.combine(pt.divide(joint, q), q), joint))
        if joint.density is None:
            continue
        x = joint.cnames[0]
        marg = pt.marginalize_continuous(joint, x)
        cond = pt.fold_mass_into_density(pt.divide(joint, marg))
        record("reversal joint", same(pt.combine(cond, marg), joint, rtol=1e-10))
        other = joint.cnames[-1] if len(joint.cnames) > 1 else None
        if other is not None and other != x:
            ab = pt.marginalize_continuous(pt.marginalize_continuous(joint, x), other)
            ba = pt.marginalize_continuous(pt.marginalize_continuous(joint, other), x)
            record("marginal order", same(ab, ba, rtol=1e-10))
        elif joint.dnames:
            d = joint.dnames[0]
            ab = pt.marginalize_discrete(pt.marginalize_continuous(joint, x), d)
            ba = pt.marginalize_continuous(pt.marginalize_discrete(joint, d), x)
            record("marginal order", same(ab, ba, rtol=1e-10))
    for key in counts:
        c.check(key, fails[key] == 0 and counts[key] > 0, f"{counts[key] - fails[key]}/{counts[key]}")
    c.check(">= 200 random cases", CASES >= 200, str(CASES))
    c.finish()


def test_criterion_6_inference_equivalence():
    c = Criterion(6, "inference oracle equivalence")
    nets = netgen.discrete_networks(seed=7, count=60)
    worst = 0.0
    queries = 0
    for net in nets:
        doc = network_to_dict(net)
        evidences = [{}] + [{n: s} for n in net.names for s in ("0", "1")]
        for ev in evidences:
            want = netgen.brute_force_posteriors(doc, ev)
            if want is None:
                continue
            got = inference.posterior(net, ev)
            for name, p in want.items():
                worst = max(worst, abs(got.discrete[name]["1"] - p))
            queries += 1
    c.check(">= 50 discrete nets", len(nets) >= 50, str(len(nets)))
    c.check("discrete max error <= 1e-12", worst <= 1e-12, f"{worst:.2g} over {queries} queries")

    lg = netgen.linear_gaussian_networks(seed=11, count=10)
    bad = []
    checked = 0
    for i, net in enumerate(lg):
        post = inference.posterior(net)
        est = oracle.estimate_conditional(net, 100_000, i)
        for name, gm in post.continuous.items():
            m, v = mogfit.mixture_moments(gm)
            o = est.continuous[name]
            checked += 2
            if abs(m - o["mean"]) > 4 * o["meanSE"]:
                bad.append(f"net{i}:{name} mean")
            if abs(v - o["variance"]) > 4 * o["varianceSE"]:
                bad.append(f"net{i}:{name} variance")
    c.check("10 linear-Gaussian nets", len(lg) == 10 and max(len(n.nodes) for n in lg) <= 5, str(len(lg)))
    c.check("moments within 4 SE of Monte Carlo", not bad, f"{checked - len(bad)}/{checked}" + (f" {bad}" if bad else ""))
    c.finish()


def test_criterion_7_determinism():
    c = Criterion(7, "determinism")
    again = {1: run_u01()[2]}
    again[2] = run_compiled("logistic", {"A": 1.0}, ["A", "B"])[5]
    again[3] = run_compiled("square", None, ["B"])[5]
    again[4] = run_compiled("hetero", None, ["B"])[5]
    first = dict(REPORTS)
    if len(first) < 4:
        # criteria run in isolation: produce the first copy here
        first = {1: run_u01()[2], 2: run_compiled("logistic", {"A": 1.0}, ["A", "B"])[5],
                 3: run_compiled("square", None, ["B"])[5], 4: run_compiled("hetero", None, ["B"])[5]}
    for k in (1, 2, 3, 4):
        c.check(f"criterion {k} byte-identical", first[k] == again[k], f"{len(again[k])} bytes")
    c.finish()
