import math

import numpy as np
import pytest
from scipy import stats

import netgen
import oracles
from mogbn import inference as inf
from mogbn import mogfit
from mogbn.errors import EvidenceError, InputError, ResourceError
from mogbn.netmodel import network_from_dict, network_to_dict

GM = mogfit.GaussianMixture1D


def clg(name, parents=(), intercept=0.0, coeffs=None, variance=1.0, config=()):
    return {"name": name, "parents": list(parents), "kind": "clg",
            "clg": [{"config": list(config), "intercept": intercept, "coeffs": coeffs or {}, "variance": variance}]}


def test_single_gaussian():
    mix = inf.build_mixture(network_from_dict({"nodes": [clg("A")]}))
    assert len(mix) == 1
    gm = inf.marginal_continuous(mix, "A")
    assert gm == GM((1,), (0,), (1,))


def test_linear_gaussian_closure():
    net = network_from_dict({"nodes": [clg("A", intercept=3), clg("B", ["A"], 1, {"A": 2}, 4)]})
    mix = inf.build_mixture(net)
    assert mix.means[0].tolist() == [3, 7]
    assert mix.covs[0].tolist() == [[1, 2], [2, 8]]


def test_bivariate_conditioning():
    net = network_from_dict({"nodes": [clg("A"), clg("B", ["A"], 0, {"A": 1}, 1)]})
    post = inf.posterior(net, {"A": 2.0}, ["B"])
    assert mogfit.mixture_moments(post.continuous["B"]) == pytest.approx((2, 1), abs=1e-12)


def test_conditioning_reweights_components():
    net = network_from_dict({"nodes": [
        {"name": "S", "kind": "discrete", "states": ["l", "r"], "table": [0.5, 0.5]},
        {"name": "X", "parents": ["S"], "kind": "clg",
         "clg": [{"config": ["l"], "intercept": -1, "variance": 1}, {"config": ["r"], "intercept": 1, "variance": 1}]},
    ]})
    post = inf.posterior(net, {"X": 1.0}, ["S"]).discrete["S"]
    ratio = stats.norm.pdf(2) / stats.norm.pdf(0)
    assert post["l"] == pytest.approx(ratio / (1 + ratio), abs=1e-14)
    assert post["l"] / post["r"] == pytest.approx(math.exp(-2), rel=1e-12)


def test_uniform_fragment_moments(uniform_compiled):
    assert len(uniform_compiled.mix) == 5
    m, v = mogfit.mixture_moments(inf.marginal_continuous(uniform_compiled.mix, "A"))
    assert m == pytest.approx(0.5, abs=1e-3)
    assert v == pytest.approx(0.073, abs=0.003)


def test_logistic_marginals(logistic_compiled):
    post = inf.posterior(logistic_compiled.mog, {}, ["A", "B"])
    m, v = mogfit.mixture_moments(post.continuous["A"])
    assert abs(m) <= 0.02 and 0.93 <= v <= 1.00
    assert post.discrete["B"]["b"] == pytest.approx(0.5, abs=1e-3)


def test_logistic_evidence(logistic_compiled):
    p = inf.posterior(logistic_compiled.mog, {"A": 1.0}, ["B"]).discrete["B"]["b"]
    assert 0.86 <= p <= 0.89


def test_discrete_evidence_is_certain(logistic_compiled):
    assert inf.posterior(logistic_compiled.mog, {"B": "nb"}, ["B"]).discrete["B"] == {"b": 0.0, "nb": 1.0}


def test_one_state_node():
    net = network_from_dict({"nodes": [{"name": "D", "kind": "discrete", "states": ["only"], "table": [1.0]}]})
    assert inf.posterior(net).discrete["D"] == {"only": 1.0}


def test_mode_single():
    assert inf.mixture_mode(GM((1,), (3,), (1,))) == pytest.approx(3, abs=1e-5)


def test_mode_bimodal_tie_goes_left():
    # the maximiser of 0.5 N(-2,1) + 0.5 N(2,1) sits at -1.99865, not at -2:
    # each peak is pulled inwards by the other component's tail
    got = inf.mixture_mode(GM((0.5, 0.5), (-2, 2), (1, 1)))
    assert got < 0
    assert got == pytest.approx(oracles.FROZEN["bimodal_mode"], abs=1e-6)


def test_mode_point_masses():
    assert inf.mixture_mode(GM((0.3, 0.7), (1, 5), (0, 0), allow_zero_sd=True)) == 5


def test_hetero_mode(hetero_compiled):
    gm = inf.marginal_continuous(hetero_compiled.mix, "B")
    assert 1.7 <= inf.mixture_mode(gm) <= 2.1


def test_impossible_evidence():
    net = network_from_dict({"nodes": [
        {"name": "D", "kind": "discrete", "states": ["a", "b"], "table": [1.0, 0.0]}]})
    with pytest.raises(EvidenceError):
        inf.posterior(net, {"D": "b"})


def test_evidence_through_a_deterministic_child():
    net = network_from_dict({"nodes": [clg("A"), clg("B", ["A"], 0, {"A": 1}, 0)]})
    post = inf.posterior(net, {"B": 1.0}, ["A"]).continuous["A"]
    assert post.means == (1.0,) and post.stddevs == (0.0,)


def test_evidence_on_zero_variance_coordinate():
    net = network_from_dict({"nodes": [clg("A", variance=0)]})
    with pytest.raises(EvidenceError, match="zero-variance"):
        inf.posterior(net, {"A": 0.0})


def test_unknown_query():
    with pytest.raises(InputError):
        inf.posterior(network_from_dict({"nodes": [clg("A")]}), {}, ["Q"])


def test_component_cap():
    nodes = [{"name": f"D{i}", "kind": "discrete", "states": ["0", "1"], "table": [0.5, 0.5]} for i in range(8)]
    with pytest.raises(ResourceError):
        inf.build_mixture(network_from_dict({"nodes": nodes}), cap=100)


def test_chained_conditioning_composes():
    net = network_from_dict({"nodes": [clg("A"), clg("B", ["A"], 0, {"A": 1}, 1), clg("C", ["B"], 0, {"B": 1}, 1)]})
    mix = inf.build_mixture(net)
    once = inf.condition(mix, {"A": 0.5, "C": 2.0})
    twice = inf.condition(inf.condition(mix, {"A": 0.5}), {"C": 2.0})
    assert np.allclose(once.means, twice.means) and np.allclose(once.covs, twice.covs)


def test_discrete_networks_against_brute_force():
    rng = np.random.default_rng(3)
    for net in netgen.discrete_networks(seed=3, count=20):
        doc = network_to_dict(net)
        ev_node = net.names[rng.integers(len(net.names))]
        ev = {ev_node: str(rng.integers(2))}
        want = netgen.brute_force_posteriors(doc, ev)
        if want is None:
            with pytest.raises(EvidenceError):
                inf.posterior(net, ev)
            continue
        got = inf.posterior(net, ev)
        for name, p in want.items():
            assert got.discrete[name]["1"] == pytest.approx(p, abs=1e-12)


def test_report_shape(logistic_compiled):
    d = inf.posterior(logistic_compiled.mog, {}, ["A", "B"]).to_dict()
    assert set(d) == {"discrete", "continuous"}
    assert set(d["continuous"]["A"]) == {"mixture", "mean", "variance", "mode"}
