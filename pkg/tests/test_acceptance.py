"""Exit-gate criteria.  Each test prints one ``PASS``/``FAIL`` line, then asserts."""
import math
import time

import numpy as np
import pytest

from steklov_lab.checks import (CHECK_FUNCTIONS, Sweep, check_collar_domination, check_conf1, check_kokarev,
                                check_lemneu, check_n2_bound, check_necesbsmall, check_quasiiso,
                                check_small_eigenvalues, check_volume_growth, check_warped)
from steklov_lab.config import load_scenario
from steklov_lab.cross_section import parse_cross_section
from steklov_lab.mode_solver import Resolution
from steklov_lab.profiles import MetricFamily, identity_profile
from steklov_lab.spectrum import SpectrumRequest, steklov_spectrum

from conftest import SCENARIOS


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def circle_request(resolution=Resolution(), richardson=True, k=6):
    cs = parse_cross_section("circle:1")
    return SpectrumRequest(cs, MetricFamily("conformal", 1, identity_profile(1.0)), k=k,
                           resolution=resolution, richardson=richardson)


def test_01_analytic_oracle(verdict):
    t0 = time.perf_counter()
    res = steklov_spectrum(circle_request())
    elapsed = time.perf_counter() - t0
    th, ct = math.tanh(1.0), 1 / math.tanh(1.0)
    exact = np.array([0.0, th, th, 1.0, ct, ct])
    got = res.values(6)
    rel = np.abs(got - exact) / np.maximum(exact, 1.0)
    ok = got[0] == 0.0 and rel.max() <= 1e-6 and elapsed < 1.0
    verdict(1, ok, f"max relative error {rel.max():.2e} (<= 1e-6), runtime {elapsed:.3f} s (< 1 s)")


def test_02_fem_order(verdict):
    exact = math.tanh(1.0)
    vals = []
    for lev in range(4):
        res = Resolution(16 * 2**lev, 8 * 2**lev, 128 * 2**lev)
        vals.append(steklov_spectrum(circle_request(res, richardson=False, k=2)).sigma(2))
    err = np.abs(np.array(vals) - exact)
    orders = np.log2(err[:-1] / err[1:])
    ok = bool(np.all((orders >= 1.8) & (orders <= 2.2)))
    verdict(2, ok, "observed orders " + ", ".join(f"{o:.4f}" for o in orders) + " in [1.8, 2.2]")


def test_03_conf1_growth(verdict):
    sc = load_scenario(SCENARIOS / "conf1-torus.toml")
    t0 = time.perf_counter()
    rep = check_conf1(Sweep(sc, threads=1))
    elapsed = time.perf_counter() - t0
    A = rep.constants["A"].value
    prods = [r["sigma_times_eps"] for r in rep.rows]
    sig = [r["sigma"] for r in rep.rows]
    ratios = [b / a for a, b in zip(sig, sig[1:])]
    ok = (A == 1 / 16 and all(p >= A for p in prods) and all(r >= 2 * 0.9 for r in ratios) and elapsed < 120
          and len(rep.rows) == 4)
    verdict(3, ok, f"sigma_3*eps = {', '.join(f'{p:.4f}' for p in prods)} (>= 1/16); "
                   f"halving ratios {', '.join(f'{r:.3f}' for r in ratios)} (>= 1.8); {elapsed:.1f} s (< 120 s)")


def test_04_necesbsmall_conf2(verdict, scenario_sweep):
    rep = check_necesbsmall(scenario_sweep("conf2-torus"))
    sig = [r["sigma"] for r in rep.rows]
    psi = [r["psi_bound"] for r in rep.rows]
    ok_sigma = all(s <= 2 + 1e-6 for s in sig)
    ok_psi = all(abs(p - 2.0) <= 1e-8 for p in psi)
    detail = (f"conf2 sigma_b = {', '.join(f'{s:.4g}' for s in sig)} vs 2 + 1e-6; "
              f"psi bound = {', '.join(f'{p:.6g}' for p in psi)} vs 2/L = 2")
    if not (ok_sigma and ok_psi):
        detail += ("; conf2 has h = eps^-2 on the whole middle of the cylinder, so the "
                   "'metric unchanged away from the collar' hypothesis of the 2/L bound does not hold")
    verdict(4, ok_sigma and ok_psi and len(rep.rows) == 4, detail)


def test_05_warped_lower_bound(verdict, scenario_sweep):
    sw = scenario_sweep("warped-torus3")
    rep = check_warped(sw)
    prods = [r["sigma_times_eps"] for r in rep.rows]
    dists = [r["boundary_distance"] for r in rep.rows]
    C = rep.constants["C"].value
    ok = (math.isclose(C, 1 / 24) and all(p >= 1 / 24 for p in prods) and max(dists) == min(dists) == 2 * 0.4
          and [r["eps"] for r in rep.rows] == [0.05, 0.025, 0.0125])
    verdict(5, ok, f"sigma_2*eps = {', '.join(f'{p:.4f}' for p in prods)} (>= 1/24); "
                   f"boundary distance {dists[0]:g} at every eps (2L = 0.8)")


def test_06_quasi_isometry(verdict, scenario_sweep):
    details, ok = [], True
    for name in ("warped-torus3", "warped-torus2"):
        sw = scenario_sweep(name)
        rep = check_quasiiso(sw)
        expo = 2 * (sw.scenario.n + 1) + 1
        lo, hi = 1.2 ** -expo, 1.2**expo
        for r in rep.rows:
            ok &= r["pass"] and r["metric_ratio"] <= 1.2 + 1e-12 and r["k"] == 10
            ok &= lo <= r["min_sigma_ratio"] and r["max_sigma_ratio"] <= hi
        details.append(f"{name}: sigma ratios in [{min(r['min_sigma_ratio'] for r in rep.rows):.4f}, "
                       f"{max(r['max_sigma_ratio'] for r in rep.rows):.4f}] within 1.2^+-{expo}")
    verdict(6, ok, "; ".join(details))


def test_07_kokarev(verdict, scenario_sweep):
    names = [p.stem for p in sorted(SCENARIOS.glob("*.toml")) if load_scenario(p).n == 1]
    worst, ok = math.inf, bool(names)
    for name in names:
        rep = check_kokarev(scenario_sweep(name))
        worst = min(worst, min(r["slack"] for r in rep.rows))
        ok &= rep.passed
    verdict(7, ok and worst >= 0, f"{len(names)} surface scenarios ({', '.join(names)}), minimum slack {worst:.4g}")


def test_08_dimension_threshold(verdict, scenario_sweep):
    two = check_n2_bound(scenario_sweep("warped-torus2"))
    three = check_n2_bound(scenario_sweep("warped-torus3"))
    never = not any(r["exceeds"] for r in two.rows)
    exceeds = three.rows[-1]["exceeds"]
    bound = two.constants["2 L lambda_2"].value
    verdict(8, never and exceeds,
            f"n=2 max sigma_2 {max(r['sigma'] for r in two.rows):.4f} <= {bound:g}; "
            f"n=3 sigma_2 at eps={three.rows[-1]['eps']} is {three.rows[-1]['sigma']:.4f} > {bound:g}")


def test_09_small_eigenvalues(verdict, scenario_sweep):
    rep = check_small_eigenvalues(scenario_sweep("small-eigenvalues"))
    per_k = {}
    for r in rep.rows:
        per_k.setdefault(r["k"], []).append(r["bound"])
    ms = [r["m"] for r in rep.rows if r["k"] == 2]
    ok = ms == [10, 100, 1000] and set(per_k) == {2, 3}
    for vals in per_k.values():
        ok &= all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-2
    verdict(9, ok, "; ".join(f"sigma_{k} <= " + ", ".join(f"{v:.4g}" for v in vals) + " for m = 10, 100, 1000"
                             for k, vals in per_k.items()))


def test_10_lemneu(verdict, scenario_sweep):
    rep = check_lemneu(scenario_sweep("conf2-torus"))
    ok = all(r["trials"] == 100 and r["failures"] == 0 and r["worst_relative_slack"] >= -1e-8 for r in rep.rows)
    verdict(10, ok and rep.passed,
            f"{sum(r['trials'] for r in rep.rows)} trials over {len(rep.rows)} eps values, worst relative slack "
            f"{min(r['worst_relative_slack'] for r in rep.rows):.3g}, mu(Omega) "
            + ", ".join(f"{r['mu']:.4g}" for r in rep.rows))


def test_11_collar_domination(verdict, scenario_sweep):
    rep = check_collar_domination(scenario_sweep("conf2-torus"))
    slack = min(r["min_slack"] for r in rep.rows)
    ok = rep.passed and slack >= -1e-8 and all(len(r["sigma"]) == 10 for r in rep.rows)
    verdict(11, ok, f"sigma_k <= lambda_k^D(collar of depth eps), k <= 10, over {len(rep.rows)} conf2 sweeps; "
                    f"minimum slack {slack:.4g}")


def test_12_volume_necessity(verdict, scenario_sweep):
    details, ok = [], True
    for name in ("conf1-torus", "conf2-torus", "warped-torus3", "warped-torus2", "warped-circle"):
        rep = check_volume_growth(scenario_sweep(name))
        ok &= rep.passed
        details.append(f"{name} x{rep.rows[-1]['ratio_to_product']:.3g}")
    verdict(12, ok, "volumes strictly increase; smallest-eps ratio to product: " + ", ".join(details))


def test_all_checks_are_exercised():
    assert set(CHECK_FUNCTIONS) == {"conf1", "conf2", "warped", "necesbsmall", "quasiiso", "kokarev", "n2-bound",
                                    "volume-growth", "lemneu", "collar-domination", "small-eigenvalues"}
