import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steklov_lab.cross_section import parse_cross_section
from steklov_lab.profiles import (EpsilonRangeError, MetricFamily, Profile, admissible_bound, identity_profile,
                                  make_profile, smoothstep, volume)

TORUS = parse_cross_section("torus:2pi,2pi")


def test_conf1_examples():
    h = make_profile("conf1", 0.1, 1.0)
    assert h(0.25) == 0.1**-2 == pytest.approx(100.0, rel=1e-15)
    assert h(0.05) == 1.0
    assert h(0.5) == 1.0
    # log-space transition: midpoint is the geometric mean of 1 and 100
    assert h(0.15) == pytest.approx(10.0, rel=1e-12)


def test_conf2_examples():
    h = make_profile("conf2", 0.1, 1.0)
    assert h(0.8) == 0.1**-2 == pytest.approx(100.0, rel=1e-15)
    assert h(0.05) == 1.0
    assert h(1.0) == 0.1**-2


def test_warped_examples():
    h = make_profile("warped", 0.05, 0.4)
    assert h(-0.4) == 1.0 and h(0.4) == 1.0
    assert h(0.0) == pytest.approx(400.0)
    assert h.domain == (-0.4, 0.4)


def test_identity():
    h = identity_profile(2.0)
    assert h.domain == (-2.0, 2.0)
    assert np.all(h.evaluate(np.linspace(-2, 2, 11)) == 1.0)


def test_smoothstep_is_flat_step():
    x = np.linspace(-0.5, 1.5, 401)
    s = smoothstep(x)
    assert np.all(s[x <= 0] == 0.0) and np.all(s[x >= 1] == 1.0)
    assert np.all(np.diff(s) >= 0)
    assert smoothstep(0.5) == pytest.approx(0.5)


@pytest.mark.parametrize("label,L,eps", [("conf1", 1.0, 0.1), ("conf1", 1.0, 0.0125), ("conf2", 1.0, 0.05),
                                         ("warped", 0.4, 0.05), ("warped", 1.0, 0.01), ("conf1", 4.0, 0.3)])
def test_profile_invariants(label, L, eps):
    h = make_profile(label, eps, L, cylinder=True)
    t = np.linspace(*h.domain, 20001)
    v = h.evaluate(t)
    assert v.min() >= 1.0
    assert v.max() == pytest.approx(eps**-2)
    # transitions are monotone
    for p in h.pieces:
        if p.kind == "transition":
            w = p(np.linspace(p.start, p.end, 2001))
            d = np.diff(w)
            assert np.all(d >= 0) if p.to_value > p.from_value else np.all(d <= 0)
    # C^1 across junctions: one-sided difference quotients of h both tend to zero slope
    delta = 1e-7
    for b in h.breakpoints[1:-1]:
        left = (h(b) - h(b - delta)) / delta
        right = (h(b + delta) - h(b)) / delta
        assert abs(left - right) <= 1e-6 * max(1.0, h(b))


def test_collar_regions_are_exactly_one():
    h = make_profile("conf1", 0.05, 1.0)
    s = np.concatenate([np.linspace(0, 0.05, 50), np.linspace(0.2, 1.0, 50)])
    assert np.all(h.evaluate(s) == 1.0)


def test_cylinder_mirror():
    h = make_profile("conf1", 0.1, 1.0, cylinder=True)
    t = np.linspace(0, 1, 1001)
    assert np.allclose(h.evaluate(t), h.evaluate(-t), rtol=1e-14, atol=0)
    assert h(-0.75) == h(0.75) == 0.1**-2


@pytest.mark.parametrize("label,L,eps", [("conf1", 1.0, 0.25), ("conf1", 4.0, 0.6), ("conf2", 1.0, 0.3),
                                         ("warped", 1.0, 0.26), ("warped", 0.4, 0.1), ("conf1", 1.0, -0.1)])
def test_epsilon_out_of_range(label, L, eps):
    with pytest.raises(EpsilonRangeError) as exc:
        make_profile(label, eps, L)
    assert label in str(exc.value)


def test_error_names_the_constraint():
    bound, text = admissible_bound("conf1", 4.0)
    assert bound == pytest.approx(0.5)
    with pytest.raises(EpsilonRangeError, match=r"min\(L/4, 2/L\)"):
        make_profile("conf1", 0.6, 4.0)


def test_non_strict_allows_beyond_hypothesis():
    # 2/L = 0.5 < L/4 = 1: eps = 0.7 breaks the hypothesis but still fits
    h = make_profile("conf1", 0.7, 4.0, strict=False)
    assert h(2.5 * 0.7) == pytest.approx(0.7**-2)
    with pytest.raises(EpsilonRangeError):
        make_profile("conf1", 1.2, 4.0, strict=False)


def test_exponents():
    h = identity_profile(1.0)
    assert MetricFamily("conformal", 2, h).exponents == (1, 1, 3)
    assert MetricFamily("warped", 2, h).exponents == (2, 0, 2)
    assert MetricFamily("conformal", 1, h).exponents == (0, 0, 2)
    assert MetricFamily("warped", 3, h).exponents == (3, 1, 3)


def test_identity_volume():
    mf = MetricFamily("conformal", 2, identity_profile(1.0))
    assert volume(mf, TORUS, 1.0) == pytest.approx(8 * math.pi**2, rel=1e-12)


def test_warped_volume_lower_bound():
    eps, L = 0.05, 0.4
    mf = MetricFamily("warped", 2, make_profile("warped", eps, L))
    assert volume(mf, TORUS) >= 4 * math.pi**2 * (2 * L - 4 * eps) * eps**-4


def test_conf1_volume_lower_bound():
    eps = 0.05
    mf = MetricFamily("conformal", 2, make_profile("conf1", eps, 1.0, cylinder=True))
    # two plateaus of length eps, density h^3 = eps^-6
    assert volume(mf, TORUS) >= 4 * math.pi**2 * 2 * eps * eps**-6


@pytest.mark.parametrize("label,L,eps", [("conf1", 1.0, 0.05), ("warped", 0.4, 0.025), ("conf2", 1.0, 0.1)])
def test_volume_quadrature_against_dense_simpson(label, L, eps):
    from scipy.integrate import simpson

    h = make_profile(label, eps, L, cylinder=True)
    for power in (2, 3):
        total = 0.0
        for a, b in zip(h.breakpoints[:-1], h.breakpoints[1:]):
            t = np.linspace(a, b, 20001)
            total += simpson(h.evaluate(t) ** power, x=t)
        assert h.integral_of_power(power) == pytest.approx(total, rel=1e-8)


def test_volume_grows_as_eps_halves():
    vols = [volume(MetricFamily("conformal", 2, make_profile("conf1", e, 1.0, cylinder=True)), TORUS)
            for e in (0.1, 0.05, 0.025)]
    assert vols[0] < vols[1] < vols[2]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.005, 0.24))
def test_conf1_hypothesis_range(eps):
    h = make_profile("conf1", eps, 1.0, cylinder=True)
    assert h(0.0) == 1.0 and h(-1.0) == 1.0 and h(1.0) == 1.0
    assert h(1.0 - 2.5 * eps) == eps**-2


def test_metric_ratio():
    h1 = make_profile("warped", 0.05, 0.4)
    h2 = h1.with_plateau_scale(1.05)
    a = MetricFamily("warped", 2, h1).metric_ratio(MetricFamily("warped", 2, h2))
    assert a == pytest.approx(1.05**2)


def test_custom_profile_roundtrip():
    h = make_profile("conf2", 0.1, 1.0)
    back = Profile.from_pieces(h.to_dict()["pieces"], eps=0.1)
    t = np.linspace(0, 1, 501)
    assert np.array_equal(back.evaluate(t), h.evaluate(t))


@pytest.mark.parametrize("rows", [[[0, 1, "constant", 1.0], [1.5, 2, "constant", 1.0]],
                                  [[0, 1, "constant", 1.0], [1, 2, "constant", 2.0]],
                                  [[0, 1, "constant", -1.0]]])
def test_bad_custom_pieces(rows):
    with pytest.raises(ValueError):
        Profile.from_pieces(rows)


def test_linear_transition_shape():
    h = make_profile("conf1", 0.1, 1.0).with_transition("linear-transition")
    assert h.label == "custom"
    assert h(0.15) == pytest.approx(0.5 * (1 + 0.1**-2), rel=1e-12)
    assert h(0.25) == 0.1**-2 and h(0.05) == 1.0
    t = np.linspace(0.1, 0.2, 2001)
    assert np.all(np.diff(h.evaluate(t)) >= 0)
    mid = np.linspace(0.101, 0.199, 7)
    fd = (h.evaluate(mid + 1e-7) - h.evaluate(mid - 1e-7)) / 2e-7 / h.evaluate(mid)
    assert h.evaluate_log_derivative(mid) == pytest.approx(fd, rel=1e-5)
    with pytest.raises(ValueError):
        h.with_transition("cubic")
    with pytest.raises(ValueError, match="piece kind"):
        Profile.from_pieces([[0, 1, "cubic", 1.0, 2.0]])
