"""Global Steklov spectra of cylinders, merged from per-mode 1D problems.

Separation of variables ``f = sum_j a_j(t) phi_j(x)`` splits the cylinder
problem into one 1D problem per cross-section eigenvalue; each contributes
one eigenvalue per Steklov end (two for the two-sided cylinder, one for a
Steklov-Dirichlet collar), repeated with the cross-section multiplicity.

Truncation: the smallest per-mode eigenvalue is nondecreasing in ``lam``
(the potential ``lam*q`` grows pointwise), so once a mode's smallest value
exceeds the current ``sigma_k`` no later mode can contribute below it.  The
monotonicity is asserted on every included mode and a safety margin of
extra modes is always solved.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cross_section import CrossSection, EnumerationLimitError
from .mode_solver import (Assembly, Mesh1D, ModeProblem, Resolution, build_mesh, dtn_matrix,
                          neumann_eigenvalues, richardson)
from .profiles import MetricFamily

PROBLEMS = ("steklov", "steklov-dirichlet")
GROUP_RTOL = 1e-8
ZERO_ATOL = 1e-12


class TruncationError(RuntimeError):
    """The mode cutoff could not be certified."""


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("STEKLOV_LAB_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"STEKLOV_LAB_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class SpectrumRequest:
    cross_section: CrossSection
    metric: MetricFamily
    k: int = 10
    problem: str = "steklov"
    depth: float | None = None
    resolution: Resolution = Resolution()
    richardson: bool = True
    max_modes: int = 20000
    safety_modes: int = 2

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.metric.n != self.cross_section.dimension:
            raise ValueError(f"metric dimension n={self.metric.n} differs from cross-section "
                             f"dimension {self.cross_section.dimension}")
        t0, t1 = self.metric.domain
        if self.problem == "steklov-dirichlet":
            if self.depth is None or not 0 < self.depth < t1 - t0:
                raise ValueError(f"collar depth must lie in (0, {t1 - t0})")

    @property
    def L(self) -> float:
        t0, t1 = self.metric.domain
        return 0.5 * (t1 - t0)

    @property
    def interval(self) -> tuple[float, float]:
        t0, t1 = self.metric.domain
        return (t0, t0 + self.depth) if self.problem == "steklov-dirichlet" else (t0, t1)

    @property
    def kinds(self) -> tuple[str, str]:
        return ("steklov", "dirichlet") if self.problem == "steklov-dirichlet" else ("steklov", "steklov")

    def mesh(self) -> Mesh1D:
        return build_mesh(self.metric.profile, self.interval, self.resolution)


@dataclass(frozen=True)
class Branch:
    lam: float
    index: int
    parity: str
    multiplicity: int
    value: float
    raw: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"lam": self.lam, "branch": self.index, "parity": self.parity,
                "multiplicity": self.multiplicity, "value": self.value, "raw": list(self.raw)}


@dataclass(frozen=True)
class SpectrumEntry:
    value: float
    multiplicity: int
    provenance: tuple[Branch, ...]


@dataclass(frozen=True)
class Certificate:
    modes_solved: int
    mode_cutoff: float
    omitted_lower_bound: float

    def to_dict(self) -> dict:
        return {"modes_solved": self.modes_solved, "mode_cutoff": self.mode_cutoff,
                "omitted_lower_bound": self.omitted_lower_bound}


@dataclass(frozen=True)
class SpectrumResult:
    entries: tuple[SpectrumEntry, ...]
    certificate: Certificate
    request: SpectrumRequest = field(repr=False)
    mesh_sizes: tuple[int, ...] = ()

    @property
    def count(self) -> int:
        return sum(e.multiplicity for e in self.entries)

    def values(self, k: int | None = None) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        out = np.repeat([e.value for e in self.entries], [e.multiplicity for e in self.entries])
        return out if k is None else out[:k]

    def sigma(self, j: int) -> float:
        """``sigma_j`` (1-based, counted with multiplicity)."""
        if j < 1:
            raise IndexError("eigenvalue indices start at 1")
        seen = 0
        for e in self.entries:
            seen += e.multiplicity
            if j <= seen:
                return e.value
        raise IndexError(f"sigma_{j} not available; only {seen} certified eigenvalues")

    def entry(self, j: int) -> SpectrumEntry:
        seen = 0
        for e in self.entries:
            seen += e.multiplicity
            if j <= seen:
                return e
        raise IndexError(f"sigma_{j} not available")

    def to_dict(self) -> dict:
        req = self.request
        return {
            "problem": req.problem,
            "family": req.metric.family,
            "n": req.metric.n,
            "profile": req.metric.profile.to_dict(),
            "cross_section": req.cross_section.describe(),
            "interval": list(req.interval),
            "richardson": req.richardson,
            "mesh_sizes": list(self.mesh_sizes),
            "certificate": self.certificate.to_dict(),
            "entries": [{"value": e.value, "multiplicity": e.multiplicity,
                         "provenance": [b.to_dict() for b in e.provenance]} for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "multiplicity"])
        idx = 1
        for e in self.entries:
            w.writerow([idx, repr(e.value), e.multiplicity])
            idx += e.multiplicity
        return buf.getvalue()


class _ModeSolver:
    """Per-request cache of meshes and assemblies; each call is a pure function of ``lam``."""

    def __init__(self, req: SpectrumRequest):
        base = req.mesh()
        self.meshes = [base, base.refined()] if req.richardson else [base]
        self.assemblies = [Assembly(req.metric, m) for m in self.meshes]
        self.req = req

    def __call__(self, lam: float) -> tuple[np.ndarray, tuple[np.ndarray, ...], list[str]]:
        req = self.req
        mp = ModeProblem(lam, req.metric, req.interval, *req.kinds)
        raws, parity = [], []
        for mesh, asm in zip(self.meshes, self.assemblies):
            d = dtn_matrix(mp, mesh, asm)
            raws.append(d.eigenvalues)
            parity = d.parity()
        values = richardson(raws[0], raws[1]) if len(raws) == 2 else raws[0]
        if lam == 0:
            values = np.where(np.abs(raws[-1]) <= ZERO_ATOL * max(1.0, np.abs(raws[-1]).max()), 0.0, values)
        return values, tuple(raws), parity


def _group(branches: Sequence[Branch]) -> tuple[SpectrumEntry, ...]:
    ordered = sorted(branches, key=lambda b: (b.value, b.lam, b.index))
    groups: list[list[Branch]] = []
    for b in ordered:
        if groups:
            ref = groups[-1][0].value
            if abs(b.value - ref) <= GROUP_RTOL * max(abs(ref), abs(b.value)) or (ref == b.value == 0):
                groups[-1].append(b)
                continue
        groups.append([b])
    return tuple(SpectrumEntry(g[0].value, sum(b.multiplicity for b in g), tuple(g)) for g in groups)


def _kth(values_mult: Iterable[tuple[float, int]], k: int) -> float | None:
    seen = 0
    for v, m in sorted(values_mult):
        seen += m
        if seen >= k:
            return v
    return None


def steklov_spectrum(req: SpectrumRequest, *, threads: int | None = None) -> SpectrumResult:
    """First ``req.k`` (and every other certified) eigenvalues of the cylinder."""
    solve = _ModeSolver(req)
    threads = worker_count() if threads is None else threads
    modes: list[tuple[float, int, np.ndarray, tuple[np.ndarray, ...], list[str]]] = []
    eig_iter = req.cross_section.iter_eigenvalues()
    stop_at: int | None = None
    batch = max(4, req.safety_modes + 1)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while stop_at is None or len(modes) < stop_at:
            want = batch if stop_at is None else stop_at - len(modes)
            if len(modes) + want > req.max_modes:
                raise TruncationError(
                    f"no certificate within {req.max_modes} modes (k={req.k}); "
                    f"largest solved lam={modes[-1][0] if modes else None}")
            try:
                lams = [next(eig_iter) for _ in range(want)]
            except EnumerationLimitError as exc:
                raise TruncationError(f"cross-section enumeration exhausted: {exc}") from exc
            results = list(pool.map(solve, [e.value for e in lams])) if pool else [solve(e.value) for e in lams]
            for e, (vals, raws, parity) in zip(lams, results):
                if modes:
                    prev_min, cur_min = float(modes[-1][2].min()), float(vals.min())
                    if cur_min < prev_min - 1e-9 * max(1.0, prev_min):
                        raise TruncationError(
                            f"per-mode minimum not monotone: lam={modes[-1][0]} gives {prev_min}, "
                            f"lam={e.value} gives {cur_min}")
                modes.append((e.value, e.multiplicity, vals, raws, parity))
            if stop_at is None:
                sk = _kth(((float(v), m) for lam, m, vals, _, _ in modes for v in vals), req.k)
                if sk is not None:
                    for j, (lam, _, vals, _, _) in enumerate(modes):
                        if vals.min() > sk:
                            stop_at = j + 1 + req.safety_modes
                            break
                batch = min(2 * batch, 256)
    finally:
        if pool:
            pool.shutdown()
    modes = modes[:stop_at]
    bound = float(modes[-1][2].min())
    branches = []
    for lam, mult, vals, raws, parity in modes:
        for i, v in enumerate(vals):
            if v < bound:
                branches.append(Branch(float(lam), i, parity[i], int(mult), float(v),
                                       tuple(float(r[i]) for r in raws)))
    cert = Certificate(len(modes), float(modes[-1][0]), bound)
    return SpectrumResult(_group(branches), cert, req, tuple(m.size for m in solve.meshes))


def steklov_dirichlet_spectrum(req: SpectrumRequest, **kw) -> SpectrumResult:
    if req.problem != "steklov-dirichlet":
        raise ValueError("request is not a Steklov-Dirichlet collar problem")
    return steklov_spectrum(req, **kw)


def sigma_index(result: SpectrumResult, j: int) -> float:
    return result.sigma(j)


def recompute_branch(req: SpectrumRequest, branch: Branch) -> tuple[float, ...]:
    """Fresh per-mode solve for a provenance record (raw values per mesh level)."""
    _, raws, _ = _ModeSolver(req)(branch.lam)
    return tuple(float(r[branch.index]) for r in raws)


def first_positive_neumann(cs: CrossSection, metric: MetricFamily, interval: tuple[float, float],
                           resolution: Resolution = Resolution(per_unit=512),
                           extrapolate: bool = True) -> float:
    """First positive Neumann eigenvalue of ``Sigma x interval`` under ``metric``.

    Per-mode Neumann eigenvalues increase with ``lam``, so the candidates are
    the second value of the zero mode and the first value of the first
    positive mode.
    """
    mesh = build_mesh(metric.profile, interval, resolution)
    meshes = [mesh, mesh.refined()] if extrapolate else [mesh]

    def solve(lam, count):
        mp = ModeProblem(lam, metric, interval, "neumann", "neumann")
        vals = [neumann_eigenvalues(mp, m, count) for m in meshes]
        return richardson(vals[0], vals[1]) if extrapolate else vals[0]

    zero_mult = next(cs.iter_eigenvalues()).multiplicity
    axial = float(solve(0.0, 2)[1])
    lateral = float(solve(cs.lambda_first_positive(), 1)[0])
    if zero_mult > 1:
        # disconnected Sigma: further zero eigenvalues, the Poincare constant degenerates
        return 0.0
    return min(axial, lateral)

