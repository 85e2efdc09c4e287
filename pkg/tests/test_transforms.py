import math

import numpy as np
import pytest

import oracles
from mogbn import inference, mogfit, oracle
from mogbn import transforms as tf
from mogbn.errors import CompileError, InputError, UnsupportedError
from mogbn.netmodel import CLG, DiscreteCPT, is_mog, network_from_dict, serialize_network, soft_masses

A_STD = {"name": "A", "kind": "clg", "clg": [{"intercept": 0, "variance": 1}]}


def net(*nodes):
    return network_from_dict({"name": "t", "nodes": list(nodes)})


# ------------------------------------------------------- linearisation


def test_square_segments_exact():
    pl = tf.piecewise_linearize(lambda a: a * a, (-2, -1, 0, 1, 2))
    assert pl.segments == oracles.SQUARE_SEGMENTS


def test_square_segments_from_expression():
    from mogbn.expr import parse_expression

    pl = tf.piecewise_linearize(parse_expression("A^2"), (-2, -1, 0, 1, 2))
    assert pl.segments == oracles.SQUARE_SEGMENTS


def test_line_is_its_own_linearisation():
    pl = tf.piecewise_linearize(lambda a: 2 * a + 1, (-3.5, 0.2, 7))
    assert all(seg == pytest.approx((2, 1)) for seg in pl.segments)


def test_cube_chords():
    f = lambda a: a**3
    pl = tf.piecewise_linearize(f, (-1, 0, 1))
    for (t1, t2), (m, c) in zip([(-1, 0), (0, 1)], pl.segments[1:3]):
        slope = (f(t2) - f(t1)) / (t2 - t1)
        assert m == pytest.approx(slope) and c == pytest.approx(f(t1) - slope * t1)


def test_piecewise_linear_is_continuous():
    pl = tf.piecewise_linearize(np.exp, (-1, 0.5, 2))
    for t in pl.breakpoints:
        assert pl(t - 1e-12) == pytest.approx(pl(t + 1e-12), abs=1e-9)


def test_discontinuous_segments_rejected():
    with pytest.raises(InputError, match="discontinuous"):
        tf.PiecewiseLinear((0.0,), ((1.0, 0.0), (1.0, 1.0)))


def test_identity_expansion():
    b = {"name": "B", "parents": ["A"], "kind": "deterministic", "fn": "A"}
    out = tf.expand_deterministic(net(A_STD, b), "B", tf.PiecewiseLinear((), ((1.0, 0.0),)))
    post = inference.posterior(out, {}, ["B"])
    assert mogfit.mixture_moments(post.continuous["B"])[0] == pytest.approx(0, abs=0.01)


def test_indicator_region_membership():
    b = {"name": "B", "parents": ["A"], "kind": "deterministic", "fn": "A^2"}
    pl = tf.piecewise_linearize(lambda a: a * a, (-2, -1, 0, 1, 2))
    out = tf.expand_deterministic(net(A_STD, b), "B", pl)
    assert out.names == ["A", "B_S", "B"]
    m = soft_masses(out, "B_S", {"A": -1.5})
    assert m.tolist() == [0, 1, 0, 0, 0, 0]


def test_linear_form_detects_affine():
    c = {"name": "C", "kind": "clg", "clg": [{"intercept": 1, "variance": 2}]}
    b = {"name": "B", "parents": ["A", "C"], "kind": "deterministic", "fn": "3*A - C/2 + 4"}
    n = net(A_STD, c, b)
    form = tf.linear_form(n, "B", n["B"].fn)
    b0, coeffs = form[()]
    assert b0 == pytest.approx(4) and coeffs == pytest.approx({"A": 3, "C": -0.5})
    assert tf.linear_form(n, "B", network_from_dict(
        {"nodes": [A_STD, {"name": "B", "parents": ["A"], "kind": "deterministic", "fn": "A^2"}]})["B"].fn) is None


# ------------------------------------------------------ variance segments


def test_default_sigmas_reproduce_table():
    assert tf.default_variance_sigmas(lambda a: a * a, (1, 2, 3, 4, 5)) == pytest.approx(oracles.HETERO_SIGMAS)


def test_default_sigmas_constant():
    assert tf.default_variance_sigmas(lambda a: np.full(np.shape(a), 4.0), (1, 2, 3)) == (2, 2, 2, 2)


def test_default_sigmas_exp():
    got = tf.default_variance_sigmas(np.exp, (0, 1))
    assert got == pytest.approx([math.exp(-0.25), math.exp(0.25), math.exp(0.75)])


def test_segmented_variance_total(hetero_compiled):
    # the compiled model's variance against the law-of-total-variance oracle
    post = inference.posterior(hetero_compiled.mog, {}, ["B"])
    _, v = mogfit.mixture_moments(post.continuous["B"])
    assert v == pytest.approx(oracles.FROZEN["segmented_var"], abs=0.1)


def test_constant_variance_becomes_plain_clg():
    b = {"name": "B", "parents": ["A"], "kind": "heteroscedastic", "mean": "2*A + 1", "varianceFn": "3"}
    mog, rep = tf.compile_network(net(A_STD, b))
    assert isinstance(mog["B"], CLG) and mog.names == ["A", "B"]
    row = mog["B"].rows[()]
    assert (row.intercept, row.coeffs["A"], row.variance) == pytest.approx((1, 2, 3))


def test_single_region_segmentation():
    b = {"name": "B", "parents": ["A"], "kind": "heteroscedastic", "mean": "A", "varianceFn": "1 + A^2"}
    out = tf.segment_variance(net(A_STD, b), "B", tf.SegmentationSpec((), (1.5,)))
    assert out.names == ["A", "B"] and out["B"].rows[()].variance == pytest.approx(2.25)


def test_segmentation_spec_validation():
    with pytest.raises(InputError):
        tf.SegmentationSpec((1, 2), (1.0,))
    with pytest.raises(InputError):
        tf.SegmentationSpec((2, 1), (1, 1, 1))


# -------------------------------------------------------------- roots


def test_uniform_root_compiles_to_selector(uniform_compiled):
    mog, rep = uniform_compiled.mog, uniform_compiled.report
    assert rep.passes == ["replace_roots"]
    assert mog.names == ["A_sel", "A"]
    assert len(mog["A_sel"].states) == 5
    assert rep.fits[0]["sse"] <= oracles.FROZEN["paper_u01_sse"]


def test_gaussian_root_single_component():
    root = {"name": "A", "kind": "nonGaussian", "pdf": "phi((x - 1)/2)/2", "support": [-15, 17]}
    mog, _ = tf.compile_network(net(root), tf.CompileOptions(root_k=1))
    assert mog["A_sel"].states == ("s1",)
    m, v = mogfit.mixture_moments(inference.posterior(mog, {}, ["A"]).continuous["A"])
    assert m == pytest.approx(1, abs=1e-3) and v == pytest.approx(4, abs=1e-3)


def test_shifted_uniform_root():
    root = {"name": "A", "kind": "nonGaussian", "pdf": "0.5", "support": [2, 4]}
    src = net(root)
    mog, _ = tf.compile_network(src)
    m, _ = mogfit.mixture_moments(inference.posterior(mog, {}, ["A"]).continuous["A"])
    assert m == pytest.approx(3, abs=0.01)
    est = oracle.estimate_conditional(src, 100_000, 0).continuous["A"]
    assert abs(m - est["mean"]) <= 4 * est["meanSE"] + 1e-3


# ------------------------------------------------------------- driver


def test_already_mog_is_identity():
    coin = {"name": "C", "kind": "discrete", "states": ["h", "t"], "table": [0.4, 0.6]}
    x = {"name": "X", "parents": ["C"], "kind": "clg",
         "clg": [{"config": ["h"], "intercept": 0, "variance": 1}, {"config": ["t"], "intercept": 3, "variance": 2}]}
    src = net(coin, x)
    mog, rep = tf.compile_network(src)
    assert rep.passes == [] and rep.reversals == []
    assert serialize_network(mog) == serialize_network(src)


def test_logistic_shape(logistic_compiled):
    mog, rep = logistic_compiled.mog, logistic_compiled.report
    assert rep.passes == ["reverse_arcs"]
    assert rep.reversals == [("A", "B")]
    assert isinstance(mog["B"], DiscreteCPT) and mog["B"].parents == ()
    assert mog["A_sel"].parents == ("B",)
    assert mog["A"].parents == ("B", "A_sel")
    assert is_mog(mog)


def test_square_shape(square_compiled):
    mog, rep = square_compiled.mog, square_compiled.report
    assert rep.passes == ["linearize", "reverse_arcs"]
    assert isinstance(mog["B_S"], DiscreteCPT) and mog["B_S"].parents == ()
    assert set(mog["B"].parents) == {"A", "B_S"}
    assert any("automatic breakpoints" in w for w in rep.warnings)


def test_square_automatic_breakpoints_are_the_textbook_ones(square_compiled):
    w = next(w for w in square_compiled.report.warnings if "automatic breakpoints" in w)
    assert "[-2.0, -1.0, 0.0, 1.0, 2.0]" in w


def test_hetero_automatic_cutpoints(hetero_compiled):
    w = next(w for w in hetero_compiled.report.warnings if "cutpoints" in w)
    assert "[1.0, 2.0, 3.0, 4.0, 5.0]" in w


def test_reversal_cap():
    b = {"name": "B", "parents": ["A"], "kind": "softDiscrete", "states": ["b", "nb"],
         "mass": {"b": "logistic(A)", "nb": "1 - logistic(A)"}}
    c = {"name": "C", "parents": ["A"], "kind": "softDiscrete", "states": ["c", "nc"],
         "mass": {"c": "Phi(A)", "nc": "1 - Phi(A)"}}
    with pytest.raises(CompileError, match="iteration cap"):
        tf.compile_network(net(A_STD, b, c), tf.CompileOptions(max_reversal_iterations=1, fit_bins=100,
                                                                restarts=2))


def test_two_dimensional_reversal_unsupported():
    c = {"name": "C", "kind": "clg", "clg": [{"intercept": 0, "variance": 1}]}
    b = {"name": "B", "parents": ["A", "C"], "kind": "softDiscrete", "states": ["b", "nb"],
         "mass": {"b": "logistic(A - C)", "nb": "1 - logistic(A - C)"}}
    with pytest.raises(UnsupportedError, match="multidimensional reversal unsupported"):
        tf.compile_network(net(A_STD, c, b))


def test_compile_is_deterministic():
    src = net(A_STD, {"name": "B", "parents": ["A"], "kind": "softDiscrete", "states": ["b", "nb"],
                      "mass": {"b": "Phi(A)", "nb": "1 - Phi(A)"}})
    opts = tf.CompileOptions(fit_bins=100, restarts=2)
    a, ra = tf.compile_network(src, opts)
    b, rb = tf.compile_network(src, opts)
    assert serialize_network(a) == serialize_network(b)
    assert ra.to_dict() == rb.to_dict()
