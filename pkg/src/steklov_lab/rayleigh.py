"""Min-max upper bounds from explicit test functions.

Any ``k`` functions that stay independent on the boundary give
``sigma_k <= max`` Rayleigh quotient over their span, i.e. the largest
eigenvalue of ``E c = s B c`` with ``E`` the energy Gram and ``B`` the
boundary Gram.  Two representations are supported:

* mode form ``a(t) phi(x)``, where only the cross-section eigenvalue of
  ``phi`` matters and functions with different tags are orthogonal;
* grid form on a rectangular flat 2-torus, for conformal factors that
  depend on ``x`` (which the mode solver cannot treat).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Sequence

import numpy as np
from scipy import linalg

from .cross_section import CrossSection
from .mode_solver import GAUSS_NODES, GAUSS_WEIGHTS
from .profiles import MetricFamily, smoothstep

GRAM_TOL = 1e-10


class DegenerateFamilyError(ValueError):
    """Test functions are dependent on the boundary."""


@dataclass(frozen=True)
class Bound:
    value: float
    error: float
    family: str

    def __float__(self) -> float:
        return self.value


def _max_generalized(E: np.ndarray, B: np.ndarray) -> float:
    scale = np.sqrt(np.diag(B))
    if np.any(scale <= 0):
        raise DegenerateFamilyError("a test function vanishes on the boundary")
    Bn = B / np.outer(scale, scale)
    En = E / np.outer(scale, scale)
    if np.linalg.eigvalsh(Bn).min() <= GRAM_TOL:
        raise DegenerateFamilyError("boundary Gram matrix is (numerically) singular")
    return float(linalg.eigh(En, Bn, eigvals_only=True)[-1])


# ---------------------------------------------------------------- mode form

@dataclass(frozen=True)
class ModeTestFunction:
    """``a(t) phi(x)`` with ``phi`` an L2-normalised eigenfunction of eigenvalue ``lam``.

    ``tag`` identifies ``phi``; functions with different tags are orthogonal
    both in energy and on the boundary.  ``breaks`` lists the kinks of ``a``.
    """

    lam: float
    a: Callable[[np.ndarray], np.ndarray]
    da: Callable[[np.ndarray], np.ndarray]
    tag: Hashable
    breaks: tuple[float, ...] = ()


@dataclass(frozen=True)
class TestFunctionFamily:
    __test__ = False  # not a pytest class

    members: tuple[ModeTestFunction, ...]
    construction: str = "custom"

    def __len__(self) -> int:
        return len(self.members)


def _segments(metric: MetricFamily, fam: TestFunctionFamily) -> np.ndarray:
    t0, t1 = metric.domain
    pts = list(metric.profile.breakpoints)
    for f in fam.members:
        pts += [b for b in f.breaks if t0 < b < t1]
    return np.unique(np.clip(pts, t0, t1))


def _mode_grams(fam: TestFunctionFamily, metric: MetricFamily, pieces: int) -> tuple[np.ndarray, np.ndarray]:
    segs = _segments(metric, fam)
    sub = np.concatenate([np.linspace(a, b, pieces + 1)[:-1] for a, b in zip(segs[:-1], segs[1:])] + [segs[-1:]])
    widths = np.diff(sub)
    tq = (sub[:-1, None] + widths[:, None] * GAUSS_NODES).ravel()
    wq = (widths[:, None] * GAUSS_WEIGHTS).ravel()
    h = metric.profile.evaluate(tq)
    ap, aq, _ = metric.exponents
    k = len(fam)
    A = np.array([f.a(tq) for f in fam.members])
    dA = np.array([f.da(tq) for f in fam.members])
    E = np.zeros((k, k))
    B = np.zeros((k, k))
    ends = np.array(metric.domain)
    wb = np.array([metric.boundary_weight(e) for e in ends])
    aend = np.array([f.a(ends) for f in fam.members])
    for i, fi in enumerate(fam.members):
        for j, fj in enumerate(fam.members[: i + 1]):
            if fi.tag != fj.tag:
                continue
            e = np.sum(wq * (h**ap * dA[i] * dA[j] + fi.lam * h**aq * A[i] * A[j]))
            E[i, j] = E[j, i] = e
            B[i, j] = B[j, i] = np.sum(wb * aend[i] * aend[j])
    return E, B


def minmax_upper_bound(fam: TestFunctionFamily, metric: MetricFamily, *, rtol: float = 1e-6,
                       max_refinements: int = 12) -> Bound:
    """Upper bound on ``sigma_k`` (``k = len(fam)``) from a mode-form family.

    Composite 5-point Gauss on every smooth segment, doubled until the bound
    moves less than ``rtol``; one extra refinement provides the error bar.
    """
    if metric.family not in ("conformal", "warped"):
        raise ValueError(metric.family)
    pieces, prev = 4, None
    for _ in range(max_refinements):
        val = _max_generalized(*_mode_grams(fam, metric, pieces))
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            extra = _max_generalized(*_mode_grams(fam, metric, 2 * pieces))
            return Bound(val, abs(extra - val), fam.construction)
        prev, pieces = val, 2 * pieces
    raise RuntimeError(f"quadrature did not settle to {rtol} within {max_refinements} refinements")


def constant_family(cs: CrossSection) -> TestFunctionFamily:
    one = ModeTestFunction(0.0, lambda t: np.ones_like(t), lambda t: np.zeros_like(t), ("zero", 0))
    return TestFunctionFamily((one,), "constant")


def psi_family(cs: CrossSection, L: float, *, domain: tuple[float, float] | None = None) -> TestFunctionFamily:
    """One function per boundary component of ``Sigma x [-L, L]``.

    ``psi`` equals ``|Sigma_j|**-1/2`` up to distance ``L/2`` from its
    boundary component, decays linearly to 0 at distance ``L`` and vanishes
    beyond.  In mode form the ``|Sigma_j|**-1/2`` is the normalised zero
    mode of component ``j``, so ``a`` itself runs from 1 to 0.
    """
    t0, t1 = domain if domain is not None else (-L, L)
    if not math.isclose(t1 - t0, 2 * L):
        raise ValueError("psi family is built on a two-sided cylinder of half-length L")
    members = []

    def make(end: float, sign: float):
        def dist(t):
            return sign * (np.asarray(t, dtype=float) - end)

        def a(t):
            s = dist(t)
            return np.clip(2.0 * (1.0 - s / L), 0.0, 1.0)

        def da(t):
            s = dist(t)
            return np.where((s > L / 2) & (s < L), -2.0 * sign / L, 0.0)

        return a, da, (end + sign * L / 2, end + sign * L)

    for comp in range(cs.n_components):
        for end, sign in ((t0, 1.0), (t1, -1.0)):
            a, da, br = make(end, sign)
            members.append(ModeTestFunction(0.0, a, da, ("zero", comp), tuple(sorted(br))))
    return TestFunctionFamily(tuple(members), "psi-necesbsmall")


# ---------------------------------------------------------------- grid form

@dataclass(frozen=True)
class TorusGrid:
    """Tensor grid: ``N1 x N2`` periodic points on the torus and P1 nodes in ``t``."""

    periods: tuple[float, float]
    shape: tuple[int, int]
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("t nodes must be strictly increasing")
        object.__setattr__(self, "t", t)

    @property
    def x(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.arange(N) * (P / N) for N, P in zip(self.shape, self.periods))

    @property
    def cell_area(self) -> float:
        return self.periods[0] * self.periods[1] / (self.shape[0] * self.shape[1])

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays of shape ``(Nt, N1, N2)``."""
        x1, x2 = self.x
        return np.meshgrid(self.t, x1, x2, indexing="ij")

    def sample(self, fn: Callable) -> np.ndarray:
        T, X1, X2 = self.mesh()
        return np.asarray(fn(X1, X2, T), dtype=float)

    def refined_t(self) -> "TorusGrid":
        mid = 0.5 * (self.t[1:] + self.t[:-1])
        return TorusGrid(self.periods, self.shape, np.sort(np.concatenate([self.t, mid])))

    def refined_x(self) -> "TorusGrid":
        return TorusGrid(self.periods, (2 * self.shape[0], 2 * self.shape[1]), self.t)


def _gradient_x(values: np.ndarray, periods: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    """Spectral derivatives along the two periodic axes of ``(Nt, N1, N2)`` data."""
    out = []
    for axis, P in ((1, periods[0]), (2, periods[1])):
        N = values.shape[axis]
        k = 2j * np.pi * np.fft.fftfreq(N, d=P / N)
        if N % 2 == 0:
            k[N // 2] = 0.0  # Nyquist mode has no real derivative
        shape = [1, 1, 1]
        shape[axis] = N
        out.append(np.real(np.fft.ifft(np.fft.fft(values, axis=axis) * k.reshape(shape), axis=axis)))
    return out[0], out[1]


@dataclass(frozen=True)
class GridMetric:
    """Conformal factor ``h(x, t)`` on a torus grid; callable or node values (linear in ``t``)."""

    h: Callable | np.ndarray
    n: int = 2
    family: str = "conformal"

    def __post_init__(self):
        if self.family != "conformal":
            raise ValueError("grid metrics are conformal factors")
        if self.n != 2:
            raise ValueError("grid evaluator supports 2-torus cross-sections only")

    def on_elements(self, grid: TorusGrid, elems: np.ndarray, s: np.ndarray) -> np.ndarray:
        """``h`` at ``t = t_e + s * dt_e`` for every element in ``elems`` and offset in ``s``.

        Returns shape ``(len(elems), len(s), N1, N2)``.
        """
        t = grid.t
        if callable(self.h):
            x1, x2 = grid.x
            X1, X2 = np.meshgrid(x1, x2, indexing="ij")
            tt = t[elems, None] + s[None, :] * (t[elems + 1] - t[elems])[:, None]
            out = self.h(X1[None, None], X2[None, None], tt[:, :, None, None])
            return np.broadcast_to(np.asarray(out, dtype=float), tt.shape + X1.shape)
        H = np.asarray(self.h, dtype=float)
        return (1 - s)[None, :, None, None] * H[elems, None] + s[None, :, None, None] * H[elems + 1, None]

    def at_node(self, grid: TorusGrid, node: int) -> np.ndarray:
        if callable(self.h):
            x1, x2 = grid.x
            X1, X2 = np.meshgrid(x1, x2, indexing="ij")
            return np.broadcast_to(np.asarray(self.h(X1, X2, grid.t[node]), dtype=float), X1.shape)
        return np.asarray(self.h, dtype=float)[node]


def grid_grams(values: Sequence[np.ndarray], grid: TorusGrid, metric: GridMetric,
               chunk: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Energy and boundary Grams of grid functions under ``h^2 (g_torus + dt^2)``."""
    F = np.array([np.asarray(v, dtype=float) for v in values])
    expected = (grid.t.size,) + tuple(grid.shape)
    if F.shape[1:] != expected:
        raise ValueError(f"grid function has shape {F.shape[1:]}, expected {expected}")
    k, n = F.shape[0], metric.n
    G1, G2 = _gradient_x(F.reshape((-1,) + F.shape[2:]), grid.periods)
    G1, G2 = G1.reshape(F.shape), G2.reshape(F.shape)
    dt = np.diff(grid.t)
    s = GAUSS_NODES
    E = np.zeros((k, k))
    for lo in range(0, dt.size, chunk):
        el = np.arange(lo, min(lo + chunk, dt.size))
        w = metric.on_elements(grid, el, s) ** (n - 1)
        w = w * (GAUSS_WEIGHTS[None, :, None, None] * dt[el, None, None, None] * grid.cell_area)
        # (k, elems, gauss, N1, N2) components of the gradient
        slope = ((F[:, el + 1] - F[:, el]) / dt[None, el, None, None])[:, :, None]
        comps = [slope]
        for G in (G1, G2):
            comps.append((1 - s)[None, None, :, None, None] * G[:, el, None]
                         + s[None, None, :, None, None] * G[:, el + 1, None])
        for c in comps:
            cw = np.broadcast_to(c, (k,) + w.shape).reshape(k, -1)
            E += (cw * w.reshape(1, -1)) @ cw.T
    B = np.zeros((k, k))
    for node in (0, grid.t.size - 1):
        hb = (metric.at_node(grid, node) ** n * grid.cell_area).ravel()
        Fb = F[:, node].reshape(k, -1)
        B += (Fb * hb) @ Fb.T
    return 0.5 * (E + E.T), 0.5 * (B + B.T)


def grid_upper_bound(fns: Sequence[Callable], grid: TorusGrid, metric: GridMetric, *, rtol: float = 1e-6,
                     max_refinements: int = 8, construction: str = "custom") -> Bound:
    """Upper bound on ``sigma_k`` from ``k`` functions ``f(x1, x2, t)`` sampled on ``grid``.

    Every level's value is itself a valid bound (the P1-in-``t`` interpolant
    is an admissible test function).  The ``t`` grid is halved until the
    Richardson-extrapolated limit moves less than ``rtol``; the finest raw
    value is returned with its distance to that limit as the error bar.
    """
    raw: list[float] = []
    limits: list[float] = []
    for _ in range(max_refinements):
        raw.append(_max_generalized(*grid_grams([grid.sample(f) for f in fns], grid, metric)))
        if len(raw) >= 2:
            limits.append(raw[-1] + (raw[-1] - raw[-2]) / 3.0)
        if len(limits) >= 2 and abs(limits[-1] - limits[-2]) <= rtol * abs(limits[-1]):
            break
        grid = grid.refined_t()
    else:
        raise RuntimeError(f"grid bound did not settle to {rtol} within {max_refinements} levels")
    return Bound(raw[-1], abs(raw[-1] - limits[-1]), construction)


def save_grid(path: str | Path, grid: TorusGrid, h: np.ndarray) -> None:
    """Write ``h`` as ``x1, x2, t, h`` rows (x1 fastest, then x2, then t) or as ``.npz``."""
    path = Path(path)
    h = np.asarray(h, dtype=float)
    if path.suffix == ".npz":
        np.savez(path, periods=np.array(grid.periods), shape=np.array(grid.shape), t=grid.t, h=h)
        return
    T, X1, X2 = grid.mesh()
    # (Nt, N1, N2) -> order with x1 varying fastest
    cols = [a.transpose(0, 2, 1).ravel() for a in (X1, X2, T, h)]
    header = f"periods={grid.periods[0]!r},{grid.periods[1]!r} shape={grid.shape[0]},{grid.shape[1]}\nx1,x2,t,h"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, fmt="%.17g")


def load_grid(path: str | Path) -> tuple[TorusGrid, np.ndarray]:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            grid = TorusGrid(tuple(map(float, z["periods"])), tuple(map(int, z["shape"])), z["t"])
            return grid, np.asarray(z["h"], dtype=float)
    with open(path) as fh:
        first = fh.readline().lstrip("# ").strip()
    meta = dict(kv.split("=") for kv in first.split())
    periods = tuple(float(v) for v in meta["periods"].split(","))
    N1, N2 = (int(v) for v in meta["shape"].split(","))
    data = np.loadtxt(path, delimiter=",", comments="#")
    Nt = data.shape[0] // (N1 * N2)
    if Nt * N1 * N2 != data.shape[0]:
        raise ValueError(f"{path}: {data.shape[0]} rows do not fill a {N1}x{N2} grid")
    t = data[:: N1 * N2, 2]
    h = data[:, 3].reshape(Nt, N2, N1).transpose(0, 2, 1)
    return TorusGrid(periods, (N1, N2), t), h


# ---------------------------------------------------------------- bump families

def _cos2(r, radius):
    r = np.asarray(r, dtype=float)
    return np.where(r < radius, np.cos(0.5 * np.pi * np.minimum(r / radius, 1.0)) ** 2, 0.0)


def _torus_distance(X1, X2, center, periods):
    d = []
    for X, c, P in zip((X1, X2), center, periods):
        u = np.abs(X - c) % P
        d.append(np.minimum(u, P - u))
    return np.hypot(*d)


@dataclass(frozen=True)
class BumpFamily:
    """``k`` disjoint half-ball bumps at the boundary ``t = -L`` inside ``B(p, ball)``.

    Bump ``i`` is ``cos^2`` of the distance to its centre ``(c_i, -L)``
    with support radius ``ball / (2k)``.  The factor is
    ``h_m = 1 - (1 - 1/m) chi(x, t) ell_m(t)``: ``chi`` equals 1 on the
    bump supports and 0 outside the ball, ``ell_m`` is a smooth boundary
    layer of width ``layer/m`` so that ``h_m = 1`` on the boundary.
    """

    periods: tuple[float, float]
    L: float
    k: int
    ball: float
    layer: float = 0.05
    center: tuple[float, float] = (math.pi, math.pi)

    @property
    def radius(self) -> float:
        return self.ball / (2 * self.k)

    def centers(self) -> list[tuple[float, float]]:
        offs = (np.arange(self.k) - 0.5 * (self.k - 1)) * 2.1 * self.radius
        return [(self.center[0] + o, self.center[1]) for o in offs]

    def validate(self) -> None:
        reach = abs(self.centers()[0][0] - self.center[0]) + self.radius
        if reach >= 0.8 * self.ball:
            raise ValueError(f"bumps reach distance {reach:.4g} from p, outside the cutoff of B(p, {self.ball})")
        if self.radius >= 2 * self.L or 2.1 * self.radius * self.k > min(self.periods):
            raise ValueError("bumps do not fit on the cylinder")

    def functions(self) -> list[Callable]:
        self.validate()
        L, rad = self.L, self.radius

        def make(c):
            return lambda X1, X2, T: _cos2(np.hypot(_torus_distance(X1, X2, c, self.periods),
                                                    np.asarray(T) + L), rad)
        return [make(c) for c in self.centers()]

    def factor(self, m: float) -> Callable:
        if m < 1:
            raise ValueError("m must be >= 1")
        L, inner, outer = self.L, 0.8 * self.ball, 0.95 * self.ball
        width = self.layer / m

        def h(X1, X2, T):
            s = np.asarray(T, dtype=float) + L
            d = np.hypot(_torus_distance(X1, X2, self.center, self.periods), s)
            chi = 1.0 - smoothstep((d - inner) / (outer - inner))
            ell = smoothstep(s / width)
            return 1.0 - (1.0 - 1.0 / m) * chi * ell
        return h

    def grid(self, shape: tuple[int, int] = (64, 64), m: float = 1.0, per_layer: int = 8,
             elements: int = 16) -> TorusGrid:
        """Graded ``t`` nodes: fine inside the layer, uniform over the bumps, coarse beyond."""
        L = self.L
        width = min(self.layer / m, self.radius)
        layer = np.linspace(0.0, width, per_layer + 1)
        body = np.linspace(width, self.radius, elements + 1)
        tail = np.linspace(self.radius, 2 * L, 9)
        return TorusGrid(self.periods, shape, np.unique(np.concatenate([layer, body, tail])) - L)


def bump_bounds(fam: BumpFamily, ms: Sequence[float], *, shape: tuple[int, int] = (64, 64),
                rtol: float = 1e-6) -> list[Bound]:
    """Upper bounds on ``sigma_k`` for the factors ``h_m``, one per ``m``."""
    fns = fam.functions()
    out = []
    for m in ms:
        metric = GridMetric(fam.factor(m))
        out.append(grid_upper_bound(fns, fam.grid(shape, m), metric, rtol=rtol,
                                    construction="disjoint-bumps-smalleigenvalues"))
    return out


# ---------------------------------------------------------------- inequality checks

@dataclass(frozen=True)
class LemNeuResult:
    lhs: float
    rhs: float
    volumes: tuple[float, float]
    means: tuple[float, float]

    @property
    def passed(self) -> bool:
        return self.lhs >= self.rhs * (1 - 1e-8)

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def lemneu_check(values: np.ndarray, grid: TorusGrid, h: Callable[[np.ndarray], np.ndarray], n: int,
                 V1: tuple[float, float], V2: tuple[float, float], mu: float) -> LemNeuResult:
    """Energy of ``f`` vs the mean-difference bound on slabs ``Sigma x V1``, ``Sigma x V2``.

    ``h`` is an x-independent conformal factor ``h(t)``; energies use
    ``h^(n-1)`` and volumes ``h^(n+1)``.  Slab ends must be grid nodes.
    """
    for a, b in (V1, V2):
        if not b > a:
            raise ValueError("zero-volume part")
        if not (np.isclose(grid.t, a).any() and np.isclose(grid.t, b).any()):
            raise ValueError("slab ends must be t nodes")
    if max(V1[0], V2[0]) < min(V1[1], V2[1]):
        raise ValueError("V1 and V2 overlap")
    f = np.asarray(values, dtype=float)
    g1, g2 = _gradient_x(f, grid.periods)
    dA = grid.cell_area
    energy = 0.0
    vol = np.zeros(2)
    mass = np.zeros(2)
    slabs = (V1, V2)
    for e in range(grid.t.size - 1):
        t0, dt = grid.t[e], grid.t[e + 1] - grid.t[e]
        slope = (f[e + 1] - f[e]) / dt
        mid = t0 + 0.5 * dt
        inside = [a <= mid <= b for a, b in slabs]
        for s, w in zip(GAUSS_NODES, GAUSS_WEIGHTS):
            hv = float(h(t0 + s * dt))
            wq = w * dt * dA
            gx1 = (1 - s) * g1[e] + s * g1[e + 1]
            gx2 = (1 - s) * g2[e] + s * g2[e + 1]
            energy += hv ** (n - 1) * wq * np.sum(gx1**2 + gx2**2 + slope**2)
            fv = (1 - s) * f[e] + s * f[e + 1]
            for i, ok in enumerate(inside):
                if ok:
                    vol[i] += hv ** (n + 1) * wq * fv.size
                    mass[i] += hv ** (n + 1) * wq * np.sum(fv)
    means = mass / vol
    rhs = 0.5 * mu * vol.min() * (means[0] - means[1]) ** 2
    return LemNeuResult(float(energy), float(rhs), (float(vol[0]), float(vol[1])), (float(means[0]), float(means[1])))


def random_grid_function(rng: np.random.Generator, grid: TorusGrid, modes: int = 3, degree: int = 4) -> np.ndarray:
    """Smooth random function: low trigonometric modes in x times polynomials in t."""
    T, X1, X2 = grid.mesh()
    t0, t1 = grid.t[0], grid.t[-1]
    s = (T - t0) / (t1 - t0)
    f = np.zeros_like(T)
    for j1 in range(-modes, modes + 1):
        for j2 in range(-modes, modes + 1):
            phase = 2 * np.pi * (j1 * X1 / grid.periods[0] + j2 * X2 / grid.periods[1])
            coef = rng.normal(size=degree + 1) / (1 + j1 * j1 + j2 * j2)
            poly = np.polynomial.polynomial.polyval(s, coef)
            f += poly * np.cos(phase + rng.uniform(0, 2 * np.pi))
    return f


@dataclass(frozen=True)
class KokarevResult:
    sigma2: float
    bound: float
    boundary_length: float

    @property
    def slack(self) -> float:
        return self.bound - self.sigma2

    @property
    def passed(self) -> bool:
        return self.sigma2 <= self.bound * (1 + 1e-8)


def boundary_length(cs: CrossSection, metric: MetricFamily) -> float:
    if cs.dimension != 1:
        raise ValueError("boundary length is defined for surfaces (n = 1)")
    t0, t1 = metric.domain
    return cs.volume * (metric.boundary_weight(t0) + metric.boundary_weight(t1))


def kokarev_check(sigma2: float, length: float, genus: int = 0) -> KokarevResult:
    """``sigma_2 <= 8 pi (1 + genus) / length`` for a surface with boundary."""
    if length <= 0:
        raise ValueError("boundary length must be positive")
    return KokarevResult(float(sigma2), 8 * math.pi * (1 + genus) / length, float(length))
