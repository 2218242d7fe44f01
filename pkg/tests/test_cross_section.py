import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steklov_lab.cross_section import (CrossSection, CrossSectionComponent, EnumerationLimitError,
                                       eigenvalues_below, lambda_first_positive, parse_cross_section,
                                       parse_length)

TWO_PI = 2 * math.pi


def pairs(eigs):
    return [(round(e.value, 12), e.multiplicity) for e in eigs]


def brute_torus(periods, cutoff):
    """Independent oracle: all lattice norms |2 pi k / l|^2 from a full box."""
    ranges = [range(-int(p * math.sqrt(cutoff) / TWO_PI) - 1, int(p * math.sqrt(cutoff) / TWO_PI) + 2)
              for p in periods]
    vals = []
    for k in product(*ranges):
        v = sum((TWO_PI * ki / p) ** 2 for ki, p in zip(k, periods))
        if v <= cutoff * (1 + 1e-12):
            vals.append(v)
    vals.sort()
    out = []
    for v in vals:
        if out and abs(out[-1][0] - v) <= 1e-12 * max(1, v):
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return [(round(v, 12), m) for v, m in out]


def test_circle_examples():
    cs = CrossSection([CrossSectionComponent.circle(1.0)])
    assert pairs(eigenvalues_below(cs, 4.5)) == [(0, 1), (1, 2), (4, 2)]


def test_square_torus_examples():
    cs = parse_cross_section("torus:2pi,2pi")
    assert pairs(eigenvalues_below(cs, 1.5)) == [(0, 1), (1, 4)]
    assert lambda_first_positive(cs) == pytest.approx(1.0, rel=1e-14)


def test_zero_cutoff_counts_components():
    cs = parse_cross_section("torus:2pi,2pi+torus:2pi,2pi+torus:1,3")
    assert pairs(cs.eigenvalues_below(0.0)) == [(0, 3)]


def test_sphere_first_positive_and_multiplicities():
    cs = parse_cross_section("sphere:2")
    assert lambda_first_positive(cs) == pytest.approx(2.0)
    # l(l + d - 1) with multiplicity (2l + d - 1)(l + d - 2)! / (l! (d - 1)!)
    for d in (1, 2, 3, 4):
        comp = CrossSectionComponent.round_sphere(d)
        got = comp.eigenvalues_below(60.0)
        for l, (v, m) in enumerate(got):
            assert v == pytest.approx(l * (l + d - 1))
            want = 1 if l == 0 else (2 * l + d - 1) * math.factorial(l + d - 2) // (math.factorial(l) * math.factorial(d - 1))
            assert m == want


def test_union_first_positive():
    assert lambda_first_positive(parse_cross_section("torus:2pi,2pi+torus:2pi,2pi")) == pytest.approx(1.0)


@pytest.mark.parametrize("periods", [(TWO_PI, TWO_PI), (1.0, 2.5), (TWO_PI, TWO_PI, TWO_PI), (3.0,), (1.3, 0.7, 2.1)])
def test_torus_strategies_agree_with_brute_force(periods):
    comp = CrossSectionComponent.flat_torus(periods)
    cutoff = 100.0 if len(periods) < 3 else 30.0
    lat = [(round(v, 12), m) for v, m in comp.eigenvalues_below(cutoff, strategy="lattice")]
    heap = [(round(v, 12), m) for v, m in comp.eigenvalues_below(cutoff, strategy="heap")]
    assert lat == heap == brute_torus(periods, cutoff)


def test_circle_matches_one_torus_up_to_100():
    for r in (0.5, 1.0, 2.0):
        circ = CrossSectionComponent.circle(r).eigenvalues_below(100.0)
        tor = CrossSectionComponent.flat_torus([TWO_PI * r]).eigenvalues_below(100.0, strategy="heap")
        assert [(round(v, 10), m) for v, m in circ] == [(round(v, 10), m) for v, m in tor]


@pytest.mark.parametrize("spec", ["circle:1", "torus:2pi,2pi", "torus:1,2,3", "sphere:2", "sphere:3,0.5"])
def test_counting_function_nondecreasing(spec):
    cs = parse_cross_section(spec)
    counts = [sum(e.multiplicity for e in cs.eigenvalues_below(c)) for c in np.linspace(0, 100, 41)]
    assert all(b >= a for a, b in zip(counts, counts[1:]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.5, 8.0), min_size=1, max_size=3), st.floats(0.0, 40.0))
def test_heap_equals_lattice(periods, cutoff):
    comp = CrossSectionComponent.flat_torus(periods)
    lat = comp.eigenvalues_below(cutoff, strategy="lattice")
    heap = comp.eigenvalues_below(cutoff, strategy="heap")
    assert [m for _, m in lat] == [m for _, m in heap]
    assert np.allclose([v for v, _ in lat], [v for v, _ in heap], rtol=1e-12, atol=0)


def test_disjoint_union_is_multiset_union():
    parts = ["torus:2pi,2pi", "torus:1,2", "torus:2pi,3"]
    cs = parse_cross_section("+".join(parts))
    union = []
    for p in parts:
        for e in parse_cross_section(p).eigenvalues_below(80.0):
            union += [e.value] * e.multiplicity
    merged = []
    for e in cs.eigenvalues_below(80.0):
        merged += [e.value] * e.multiplicity
    assert np.allclose(sorted(union), merged, rtol=1e-12)


def test_merged_zero_multiplicity_equals_component_count():
    cs = parse_cross_section("circle:1+circle:2")
    first = next(cs.iter_eigenvalues())
    assert first.value == 0 and first.multiplicity == 2 and first.components == (0, 1)


def test_iter_eigenvalues_strictly_increasing():
    vals = []
    for e in parse_cross_section("torus:1,2.5").iter_eigenvalues():
        vals.append(e.value)
        if len(vals) == 200:
            break
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_cap_guard():
    comp = CrossSectionComponent.flat_torus([TWO_PI, TWO_PI])
    with pytest.raises(EnumerationLimitError):
        comp.eigenvalues_below(1e4, cap=100)


def test_custom_list_and_file(tmp_path):
    path = tmp_path / "spec.txt"
    path.write_text("# eigenvalue multiplicity\n0 1\n2 3\n6 5\n")
    comp = CrossSectionComponent.from_file(path, volume=4 * math.pi, dimension=2)
    assert comp.eigenvalues_below(5.0) == [(0.0, 1), (2.0, 3)]
    with pytest.raises(EnumerationLimitError):
        comp.eigenvalues_below(100.0)


@pytest.mark.parametrize("eigs", [[(1, 1)], [(0, 2), (1, 1)], [(0, 1), (3, 1), (2, 1)], [(0, 1), (0, 1)],
                                  [(0, 1), (1, 0)]])
def test_custom_list_invariants(eigs):
    with pytest.raises(ValueError):
        CrossSectionComponent.custom(eigs, 1.0, 1)


def test_volumes():
    with pytest.raises(ValueError, match="same dimension"):
        parse_cross_section("torus:2pi,2pi+circle:2")
    cs = parse_cross_section("torus:2pi,2pi+torus:1,1")
    assert cs.volumes == pytest.approx((4 * math.pi**2, 1.0))
    assert CrossSectionComponent.round_sphere(2, 2.0).volume == pytest.approx(16 * math.pi)


def test_parse_helpers():
    assert parse_length("2pi") == pytest.approx(TWO_PI)
    assert parse_length("pi") == pytest.approx(math.pi)
    assert parse_length("0.5*pi") == pytest.approx(math.pi / 2)
    assert parse_length(3) == 3.0
    cs = parse_cross_section([{"kind": "flat-torus", "periods": ["2pi", "2pi"]}, {"kind": "custom-list",
                              "eigenvalues": [[0, 1], [1, 4]], "volume": 1.0, "dimension": 2}])
    assert cs.n_components == 2
    with pytest.raises(ValueError):
        parse_cross_section("klein:1")
