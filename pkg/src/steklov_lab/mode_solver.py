"""P1 finite elements for the one-dimensional problems each Fourier mode reduces to.

For a cross-section eigenvalue ``lam`` the energy of ``a(t) phi(x)`` is

    E(a, a) = int p a'^2 + lam * q a^2 dt,

with ``p = h**alpha_p`` and ``q = h**alpha_q`` from the metric family.
Steklov endpoints enter through the boundary form ``sum_e w_e a(e)^2``.
The Dirichlet-to-Neumann matrix is the Schur complement of the stiffness
matrix onto the Steklov endpoints.  Profiles with ``eps**-2`` plateaus make
the coefficients span ten or more orders of magnitude, so the Schur
complement is evaluated through the equivalent RC ladder (positive series
resistances, nonnegative shunts) where every operation is cancellation free.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .profiles import MetricFamily, Profile

BOUNDARY_KINDS = ("steklov", "dirichlet", "neumann")

_GX, _GW = np.polynomial.legendre.leggauss(5)
GAUSS_NODES = 0.5 * (_GX + 1.0)
GAUSS_WEIGHTS = 0.5 * _GW

RESIDUAL_TOL = 1e-12


class SingularModeError(ValueError):
    """The constrained problem has no unique solution."""


@dataclass(frozen=True)
class Resolution:
    """Mesh controls: every piece gets ``max(min_elements, len/eps*per_eps, len*per_unit)`` elements."""

    min_elements: int = 16
    per_eps: int = 8
    per_unit: int = 128

    def elements_for(self, length: float, eps: float | None) -> int:
        n = max(self.min_elements, math.ceil(length * self.per_unit - 1e-9))
        if eps:
            n = max(n, math.ceil(length / eps * self.per_eps - 1e-9))
        return int(n)

    def scaled(self, factor: float) -> "Resolution":
        return Resolution(max(1, int(round(self.min_elements * factor))), self.per_eps * factor,
                          self.per_unit * factor)


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing with at least two entries")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def max_width(self) -> float:
        return float(self.widths.max())

    def refined(self, times: int = 1) -> "Mesh1D":
        nodes = self.nodes
        for _ in range(times):
            mids = 0.5 * (nodes[:-1] + nodes[1:])
            nodes = np.insert(nodes, np.arange(1, nodes.size), mids)
        return Mesh1D(nodes)

    def restrict(self, a: float, b: float) -> "Mesh1D":
        keep = (self.nodes >= a - 1e-13) & (self.nodes <= b + 1e-13)
        sub = self.nodes[keep]
        if not (math.isclose(sub[0], a, abs_tol=1e-12) and math.isclose(sub[-1], b, abs_tol=1e-12)):
            raise ValueError(f"[{a}, {b}] endpoints are not mesh nodes")
        return Mesh1D(sub)

    def quadrature_points(self) -> np.ndarray:
        """Gauss points, shape ``(elements, 5)``."""
        return self.nodes[:-1, None] + self.widths[:, None] * GAUSS_NODES[None, :]


def mesh_from_breakpoints(breaks: Sequence[float], eps: float | None = None,
                          resolution: Resolution = Resolution()) -> Mesh1D:
    """Uniform subdivision of each gap between breakpoints."""
    breaks = np.unique(np.asarray(breaks, dtype=float))
    parts = [np.array([breaks[0]])]
    for a, b in zip(breaks[:-1], breaks[1:]):
        m = resolution.elements_for(b - a, eps)
        parts.append(np.linspace(a, b, m + 1)[1:])
    return Mesh1D(np.concatenate(parts))


def build_mesh(profile: Profile, interval: tuple[float, float] | None = None,
               resolution: Resolution = Resolution(), extra_breaks: Sequence[float] = ()) -> Mesh1D:
    """Graded mesh with every profile junction (inside ``interval``) as a node."""
    t0, t1 = interval if interval is not None else profile.domain
    bps = [b for b in profile.breakpoints if t0 < b < t1]
    bps += [b for b in extra_breaks if t0 < b < t1]
    return mesh_from_breakpoints([t0, *bps, t1], profile.eps, resolution)


@dataclass(frozen=True)
class ModeProblem:
    """One cross-section eigenvalue on an interval, with a condition at each end."""

    lam: float
    metric: MetricFamily
    interval: tuple[float, float] | None = None
    left: str = "steklov"
    right: str = "steklov"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("cross-section eigenvalue must be >= 0")
        for kind in (self.left, self.right):
            if kind not in BOUNDARY_KINDS:
                raise ValueError(f"unknown boundary condition {kind!r}")
        if self.interval is None:
            object.__setattr__(self, "interval", self.metric.domain)
        t0, t1 = self.interval
        d0, d1 = self.metric.domain
        if not (t1 > t0 and t0 >= d0 - 1e-12 and t1 <= d1 + 1e-12):
            raise ValueError(f"interval {self.interval} outside metric domain {self.metric.domain}")

    @property
    def steklov_ends(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate((self.left, self.right)) if k == "steklov")

    def boundary_weights(self) -> np.ndarray:
        return np.array([self.metric.boundary_weight(self.interval[i]) for i in self.steklov_ends])

    def default_mesh(self, resolution: Resolution = Resolution()) -> Mesh1D:
        return build_mesh(self.metric.profile, self.interval, resolution)


class Assembly:
    """Element integrals of ``p``, ``q/lam`` and ``r`` on one mesh (mode independent)."""

    def __init__(self, metric: MetricFamily, mesh: Mesh1D):
        self.metric = metric
        self.mesh = mesh
        dt = mesh.widths
        tq = mesh.quadrature_points()
        h = metric.profile.evaluate(tq.ravel()).reshape(tq.shape)
        ap, aq, ar = metric.exponents
        wdt = GAUSS_WEIGHTS[None, :] * dt[:, None]
        self.stiff = (h**ap * wdt).sum(axis=1) / dt**2
        self.qmass = self._local_mass(h**aq * wdt)
        self.rmass = self._local_mass(h**ar * wdt)

    @staticmethod
    def _local_mass(w: np.ndarray) -> np.ndarray:
        x = GAUSS_NODES[None, :]
        return np.stack([(w * (1 - x) ** 2).sum(1), (w * x * (1 - x)).sum(1), (w * x**2).sum(1)], axis=1)

    def stiffness(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of ``K = int p u'v' + lam q u v``."""
        n = self.mesh.size
        m = lam * self.qmass
        diag = np.zeros(n)
        diag[:-1] += self.stiff + m[:, 0]
        diag[1:] += self.stiff + m[:, 2]
        off = -self.stiff + m[:, 1]
        return diag, off

    def ladder(self, lam: float) -> tuple[np.ndarray, np.ndarray] | None:
        """Series resistances and node shunts of the equivalent RC ladder.

        Element matrix ``c [[1,-1],[-1,1]] + lam [[m00,m01],[m01,m11]]`` equals a
        conductance ``c - lam*m01`` between the nodes plus shunts
        ``lam*(m00+m01)`` and ``lam*(m11+m01)``.  Returns ``None`` when some
        series conductance is not positive (mesh too coarse for ``lam``).
        """
        m = lam * self.qmass
        cond = self.stiff - m[:, 1]
        if np.any(cond <= 0):
            return None
        g = np.zeros(self.mesh.size)
        g[:-1] += m[:, 0] + m[:, 1]
        g[1:] += m[:, 2] + m[:, 1]
        return 1.0 / cond, g

    def mass(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.mesh.size
        diag = np.zeros(n)
        diag[:-1] += self.rmass[:, 0]
        diag[1:] += self.rmass[:, 2]
        return diag, self.rmass[:, 1].copy()

    def energy(self, lam: float, u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
        """Energy Gram ``E(u_i, v_j)`` for column stacks (element-wise sum of nonnegative terms)."""
        v = u if v is None else v
        u2, v2 = np.atleast_2d(u.T).T, np.atleast_2d(v.T).T
        du, dv = np.diff(u2, axis=0), np.diff(v2, axis=0)
        out = (self.stiff[:, None] * du).T @ dv
        if lam:
            m = lam * self.qmass
            u0, u1, v0, v1 = u2[:-1], u2[1:], v2[:-1], v2[1:]
            out += (m[:, 0, None] * u0).T @ v0 + (m[:, 2, None] * u1).T @ v1
            out += (m[:, 1, None] * u0).T @ v1 + (m[:, 1, None] * u1).T @ v0
        return out


def _solve_tridiagonal(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    x = linalg.solve_banded((1, 1), ab, rhs)
    # normwise backward error of the banded LU solve
    resid = diag[:, None] * np.atleast_2d(x.T).T
    resid[:-1] += off[:, None] * np.atleast_2d(x.T).T[1:]
    resid[1:] += off[:, None] * np.atleast_2d(x.T).T[:-1]
    resid -= np.atleast_2d(rhs.T).T
    scale = (np.abs(diag).max() + 2 * np.abs(off).max(initial=0.0)) * np.abs(x).max() + np.abs(rhs).max()
    if scale > 0 and np.abs(resid).max() > RESIDUAL_TOL * scale:
        raise SingularModeError(f"tridiagonal solve residual {np.abs(resid).max() / scale:.2e} too large")
    return x


def _transmission(r: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, float]:
    """Chain matrix ``[[A, B], [C, D]]`` (normalised) and its log scale.

    Every factor is entrywise nonnegative, so the product is formed without
    subtractive cancellation; a tree reduction keeps it vectorised.
    """
    mats = np.empty((g.size, 2, 2))
    mats[:-1, 0, 0] = 1.0
    mats[:-1, 0, 1] = r
    mats[:-1, 1, 0] = g[:-1]
    mats[:-1, 1, 1] = 1.0 + g[:-1] * r
    mats[-1] = [[1.0, 0.0], [g[-1], 1.0]]
    logs = np.zeros(g.size)
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, np.eye(2)[None]])
            logs = np.append(logs, 0.0)
        prod = mats[0::2] @ mats[1::2]
        scale = prod.reshape(-1, 4).max(axis=1)
        mats = prod / scale[:, None, None]
        logs = logs[0::2] + logs[1::2] + np.log(scale)
    return mats[0], float(logs[0])


def _admittances(r: np.ndarray, g: np.ndarray, far: str) -> np.ndarray:
    """Total admittance to ground at each node looking towards the last node.

    ``far`` is ``"ground"`` (Dirichlet) or ``"open"`` (Neumann) at the last node.
    """
    r_, g_ = r.tolist(), g.tolist()
    n = len(g_)
    Y = [0.0] * n
    y = math.inf if far == "ground" else g_[-1]
    Y[-1] = y
    for k in range(n - 2, -1, -1):
        branch = 1.0 / r_[k] if y == math.inf else y / (1.0 + r_[k] * y)
        y = g_[k] + branch
        Y[k] = y
    return np.array(Y)


def _ladder_voltages(r: np.ndarray, g: np.ndarray, far: str) -> np.ndarray:
    """Node values for unit data at node 0 with the last node grounded or open."""
    Y = _admittances(r, g, far)
    ratio = np.zeros(r.size)
    finite = np.isfinite(Y[1:])
    ratio[finite] = -np.log1p(r[finite] * Y[1:][finite])
    v = np.exp(np.concatenate([[0.0], np.cumsum(ratio)]))
    v[1:][~finite] = 0.0
    if far == "ground":
        v[-1] = 0.0
    return v


def harmonic_extension(mp: ModeProblem, mesh: Mesh1D, data: Sequence[float] | np.ndarray,
                       assembly: Assembly | None = None) -> np.ndarray:
    """Discrete minimiser of ``E(a, a)`` with prescribed values at the data endpoints.

    ``data`` holds one value per Steklov or Dirichlet endpoint, left first;
    a 2-d array extends several data vectors at once (one per column).
    Neumann endpoints are free.
    """
    asm = assembly or Assembly(mp.metric, mesh)
    kinds = (mp.left, mp.right)
    fixed = [i for i, k in enumerate(kinds) if k != "neumann"]
    if not fixed:
        if mp.lam == 0:
            raise SingularModeError("zero mode has no unique extension")
        raise SingularModeError("harmonic extension needs at least one data endpoint")
    data = np.asarray(data, dtype=float)
    cols = data.reshape(len(fixed), -1)
    n = mesh.size
    nodes = [0 if i == 0 else n - 1 for i in fixed]
    diag, off = asm.stiffness(mp.lam)
    lad = asm.ladder(mp.lam) if n > 2 else None
    if lad is not None:
        r, g = lad
        far = "ground" if len(fixed) == 2 else "open"
        basis = []
        for i in fixed:
            if i == 0:
                basis.append(_ladder_voltages(r, g, far))
            else:
                basis.append(_ladder_voltages(r[::-1], g[::-1], far)[::-1])
        basis = np.stack(basis, axis=1)
        # check the positive basis voltages: combinations may cancel far below their own roundoff
        _check_residual(diag, off, basis, nodes)
        out = basis @ cols
        return out[:, 0] if data.ndim == 1 else out
    free = np.ones(n, dtype=bool)
    free[nodes] = False
    out = np.zeros((n, cols.shape[1]))
    out[nodes] = cols
    idx = np.flatnonzero(free)
    if idx.size:
        rhs = np.zeros((n, cols.shape[1]))
        for node, row in zip(nodes, cols):
            if node == 0:
                rhs[1] -= off[0] * row
            else:
                rhs[n - 2] -= off[-1] * row
        lo, hi = idx[0], idx[-1] + 1
        out[lo:hi] = _solve_tridiagonal(diag[lo:hi], off[lo:hi - 1], rhs[lo:hi])
    return out[:, 0] if data.ndim == 1 else out


def _check_residual(diag, off, u, fixed_nodes):
    """Normwise relative residual of ``K u = 0`` on the free rows."""
    Ku = diag[:, None] * u
    Ku[:-1] += off[:, None] * u[1:]
    Ku[1:] += off[:, None] * u[:-1]
    free = np.ones(u.shape[0], dtype=bool)
    free[fixed_nodes] = False
    if not free.any():
        return
    scale = (np.abs(diag) * np.abs(u).max(axis=1)).max() + 1e-300
    # per-row scale: sum of |K_ij u_j| avoids penalising the huge-coefficient rows
    row = np.abs(diag)[:, None] * np.abs(u)
    row[:-1] += np.abs(off)[:, None] * np.abs(u[1:])
    row[1:] += np.abs(off)[:, None] * np.abs(u[:-1])
    rel = np.abs(Ku[free]) / np.maximum(row[free], scale * 1e-300 + 1e-300)
    if rel.max() > 1e-10:
        raise SingularModeError(f"harmonic extension residual {rel.max():.2e} too large")


@dataclass(frozen=True)
class DtNMatrix:
    matrix: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    ends: tuple[int, ...]
    method: str = "ladder"

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def parity(self) -> list[str]:
        """``even``/``odd`` for two-sided eigenvectors with equal/opposite end values."""
        if self.size != 2:
            return ["single"]
        out = []
        for v in self.eigenvectors.T:
            if abs(v[0] - v[1]) <= 1e-6 * np.abs(v).max():
                out.append("even")
            elif abs(v[0] + v[1]) <= 1e-6 * np.abs(v).max():
                out.append("odd")
            else:
                out.append("mixed")
        return out


def _ladder_dtn(r: np.ndarray, g: np.ndarray, kinds: tuple[str, str]) -> np.ndarray:
    (A, B), (C, D) = (T := _transmission(r, g))[0]
    logscale = T[1]
    if kinds == ("steklov", "steklov"):
        off = -math.exp(-logscale) / B
        return np.array([[D / B, off], [off, A / B]])
    table = {("steklov", "dirichlet"): D / B, ("steklov", "neumann"): C / A,
             ("dirichlet", "steklov"): A / B, ("neumann", "steklov"): C / D}
    return np.array([[table[kinds]]])


def dtn_matrix(mp: ModeProblem, mesh: Mesh1D | None = None, assembly: Assembly | None = None,
               method: str = "auto") -> DtNMatrix:
    """Per-mode Dirichlet-to-Neumann matrix on the Steklov endpoints.

    ``method="ladder"`` chains nonnegative transmission matrices;
    ``"schur"`` takes the energy Gram matrix of the harmonic extensions;
    ``"auto"`` prefers the ladder and falls back when it is unavailable.
    """
    mesh = mesh or mp.default_mesh()
    asm = assembly or Assembly(mp.metric, mesh)
    ends = mp.steklov_ends
    if not ends:
        raise ValueError("dtn_matrix needs at least one steklov endpoint")
    kinds = (mp.left, mp.right)
    if kinds == ("neumann", "neumann") or "steklov" not in kinds:
        raise ValueError("dtn_matrix needs at least one steklov endpoint")
    lad = asm.ladder(mp.lam) if method in ("auto", "ladder") else None
    if method == "ladder" and lad is None:
        raise SingularModeError("ladder form unavailable: refine the mesh for this eigenvalue")
    if lad is not None:
        S = _ladder_dtn(*lad, kinds)
        used = "ladder"
    else:
        fixed = [i for i, k in enumerate(kinds) if k != "neumann"]
        data = np.zeros((len(fixed), len(ends)))
        for col, e in enumerate(ends):
            data[fixed.index(e), col] = 1.0
        ext = harmonic_extension(mp, mesh, data, asm)
        S = asm.energy(mp.lam, ext)
        S = 0.5 * (S + S.T)
        used = "schur"
    w = mp.boundary_weights()
    vals, vecs = linalg.eigh(S, np.diag(w))
    vals = np.maximum(vals, 0.0) if mp.lam == 0 else vals
    return DtNMatrix(S, w, vals, vecs, ends, used)


def extension_of(mp: ModeProblem, mesh: Mesh1D, trace: np.ndarray,
                 assembly: Assembly | None = None) -> np.ndarray:
    """Harmonic extension of a vector of Steklov-endpoint values (Dirichlet ends zero)."""
    kinds = (mp.left, mp.right)
    fixed = [i for i, k in enumerate(kinds) if k != "neumann"]
    data = np.zeros(len(fixed))
    for value, e in zip(np.atleast_1d(trace), mp.steklov_ends):
        data[fixed.index(e)] = value
    return harmonic_extension(mp, mesh, data, assembly)


def steklov_dirichlet_eigenvalue(mp: ModeProblem, mesh: Mesh1D | None = None,
                                 assembly: Assembly | None = None) -> float:
    """The single eigenvalue of a one-Steklov-one-Dirichlet mode problem."""
    if sorted((mp.left, mp.right)) != ["dirichlet", "steklov"]:
        raise ValueError("steklov_dirichlet_eigenvalue needs one steklov and one dirichlet endpoint")
    return float(dtn_matrix(mp, mesh, assembly).eigenvalues[0])


def neumann_eigenvalues(mp: ModeProblem, mesh: Mesh1D | None = None, count: int = 1,
                        assembly: Assembly | None = None) -> np.ndarray:
    """Smallest ``count`` eigenvalues of ``E(a, b) = nu int r a b`` (Dirichlet ends removed)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if "steklov" in (mp.left, mp.right):
        raise ValueError("neumann_eigenvalues takes neumann/dirichlet endpoints only")
    mesh = mesh or mp.default_mesh()
    asm = assembly or Assembly(mp.metric, mesh)
    diag, off = asm.stiffness(mp.lam)
    mdiag, moff = asm.mass()
    lo = 1 if mp.left == "dirichlet" else 0
    hi = mesh.size - 1 if mp.right == "dirichlet" else mesh.size
    dim = hi - lo
    if count > dim:
        raise ValueError(f"count {count} exceeds discrete dimension {dim}")
    K = np.diag(diag[lo:hi]) + np.diag(off[lo:hi - 1], 1) + np.diag(off[lo:hi - 1], -1)
    M = np.diag(mdiag[lo:hi]) + np.diag(moff[lo:hi - 1], 1) + np.diag(moff[lo:hi - 1], -1)
    vals = linalg.eigh(K, M, subset_by_index=[0, count - 1], eigvals_only=True)
    return np.sort(vals)


def mode_eigenvalues(mp: ModeProblem, mesh: Mesh1D) -> DtNMatrix:
    return dtn_matrix(mp, mesh)


def richardson(coarse, fine, order: int = 2):
    """Extrapolate two mesh levels (width ratio 2) under an ``O(h**order)`` error model."""
    c, f = np.asarray(coarse, dtype=float), np.asarray(fine, dtype=float)
    return f + (f - c) / (2**order - 1)


def observed_orders(values: Sequence[float], exact: float) -> np.ndarray:
    """``log2`` of successive error ratios along a sequence of mesh halvings."""
    err = np.abs(np.asarray(values, dtype=float) - exact)
    return np.log2(err[:-1] / err[1:])


def dump_extension_csv(path: str | Path, mesh: Mesh1D, metric: MetricFamily, a: np.ndarray) -> None:
    """Write ``t, h, a`` triples for diagnostics."""
    h = metric.profile.evaluate(mesh.nodes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "h", "a"])
        for row in zip(mesh.nodes, h, np.asarray(a)):
            w.writerow([repr(float(x)) for x in row])
