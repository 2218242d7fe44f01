"""Closed cross-sections with exactly known Laplace spectra.

A cylinder ``Sigma x [-L, L]`` only needs two facts about ``Sigma``: the
Laplace eigenvalues (with multiplicity) and the volume of each connected
component.  Supported kinds are circles, rectangular flat tori of any
dimension, round spheres and explicit finite eigenvalue lists.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

KINDS = ("circle", "flat-torus", "round-sphere", "custom-list")

#: default guard against runaway enumerations
DEFAULT_CAP = 2_000_000


class EnumerationLimitError(RuntimeError):
    """Raised when an eigenvalue enumeration would exceed its cap."""


class Eigenvalue(NamedTuple):
    value: float
    multiplicity: int
    components: tuple[int, ...]


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def _aggregate(pairs: Sequence[tuple[float, int, int]]) -> list[Eigenvalue]:
    """Merge sorted ``(value, mult, component)`` triples within the dedup tolerance."""
    out: list[Eigenvalue] = []
    for value, mult, comp in sorted(pairs, key=lambda p: (p[0], p[2])):
        if out and _same(out[-1].value, value):
            last = out[-1]
            comps = last.components if comp in last.components else last.components + (comp,)
            out[-1] = Eigenvalue(last.value, last.multiplicity + mult, comps)
        else:
            out.append(Eigenvalue(value, mult, (comp,)))
    return out


@dataclass(frozen=True)
class CrossSectionComponent:
    """One connected closed manifold.

    Use the constructors :meth:`circle`, :meth:`flat_torus`,
    :meth:`round_sphere` and :meth:`custom` rather than the raw fields.
    """

    kind: str
    params: tuple[float, ...]
    dimension: int
    volume: float
    spectrum: tuple[tuple[float, int], ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cross-section kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if not self.volume > 0:
            raise ValueError("volume must be positive")
        if self.kind == "custom-list":
            vals = [v for v, _ in self.spectrum]
            if not vals or vals[0] != 0.0 or self.spectrum[0][1] != 1:
                raise ValueError("custom spectrum must start with eigenvalue 0 of multiplicity 1")
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise ValueError("custom spectrum must be nondecreasing")
            if any(m < 1 for _, m in self.spectrum):
                raise ValueError("multiplicities must be >= 1")
            if any(v <= 0 for v in vals[1:]):
                raise ValueError("a connected component has a single zero eigenvalue")

    # -- constructors -------------------------------------------------------
    @classmethod
    def circle(cls, radius: float = 1.0) -> "CrossSectionComponent":
        if radius <= 0:
            raise ValueError("radius must be positive")
        return cls("circle", (float(radius),), 1, 2.0 * math.pi * radius)

    @classmethod
    def flat_torus(cls, periods: Sequence[float]) -> "CrossSectionComponent":
        periods = tuple(float(p) for p in periods)
        if not periods or any(p <= 0 for p in periods):
            raise ValueError("torus periods must be positive")
        return cls("flat-torus", periods, len(periods), float(np.prod(periods)))

    @classmethod
    def round_sphere(cls, dim: int, radius: float = 1.0) -> "CrossSectionComponent":
        if dim < 1 or radius <= 0:
            raise ValueError("sphere needs dim >= 1 and radius > 0")
        vol = 2.0 * math.pi ** ((dim + 1) / 2) / math.gamma((dim + 1) / 2) * radius**dim
        return cls("round-sphere", (float(dim), float(radius)), int(dim), vol)

    @classmethod
    def custom(cls, eigenvalues: Sequence[tuple[float, int]], volume: float,
               dimension: int) -> "CrossSectionComponent":
        spec = tuple((float(v), int(m)) for v, m in eigenvalues)
        return cls("custom-list", (), int(dimension), float(volume), spec)

    @classmethod
    def from_file(cls, path: str | Path, volume: float, dimension: int) -> "CrossSectionComponent":
        """Read a two-column text file ``eigenvalue multiplicity`` (``#`` comments)."""
        data = np.loadtxt(path, ndmin=2, comments="#")
        if data.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (eigenvalue, multiplicity)")
        return cls.custom([(v, int(round(m))) for v, m in data], volume, dimension)

    # -- spectra ------------------------------------------------------------
    def eigenvalues_below(self, cutoff: float, *, cap: int = DEFAULT_CAP,
                          strategy: str = "lattice") -> list[tuple[float, int]]:
        """Sorted ``(value, multiplicity)`` pairs with value <= cutoff."""
        if cutoff < 0:
            raise ValueError("cutoff must be nonnegative")
        if self.kind == "circle":
            r = self.params[0]
            kmax = int(math.floor(r * math.sqrt(cutoff) * (1 + 1e-14)))
            if kmax + 1 > cap:
                raise EnumerationLimitError(f"circle enumeration exceeds cap {cap}")
            out = [(0.0, 1)]
            out += [((k / r) ** 2, 2) for k in range(1, kmax + 1) if (k / r) ** 2 <= cutoff]
            return out
        if self.kind == "round-sphere":
            d, radius = int(self.params[0]), self.params[1]
            out = []
            for l in itertools.count():
                value = l * (l + d - 1) / radius**2
                if value > cutoff * (1 + 1e-14):
                    break
                if len(out) >= cap:
                    raise EnumerationLimitError(f"sphere enumeration exceeds cap {cap}")
                mult = math.comb(l + d, d) - (math.comb(l + d - 2, d) if l >= 2 else 0)
                out.append((value, mult))
            return out
        if self.kind == "custom-list":
            out = [(v, m) for v, m in self.spectrum if v <= cutoff]
            if len(out) == len(self.spectrum) and self.spectrum[-1][0] < cutoff:
                raise EnumerationLimitError(
                    f"custom spectrum only known up to {self.spectrum[-1][0]}, cutoff {cutoff}")
            return out
        if strategy == "lattice":
            vals = _torus_lattice(self.params, cutoff, cap)
        elif strategy == "heap":
            vals = _torus_heap(self.params, cutoff, cap)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        return [(e.value, e.multiplicity) for e in _aggregate([(v, 1, 0) for v in vals])]


def _torus_lattice(periods: tuple[float, ...], cutoff: float, cap: int) -> list[float]:
    """Walk the full integer box ``|k_i| <= kmax_i`` and keep points under the cutoff."""
    freq = [2.0 * math.pi / p for p in periods]
    bounds = [int(math.floor(math.sqrt(cutoff) / w * (1 + 1e-12))) for w in freq]
    if math.prod(2 * b + 1 for b in bounds) > 8 * cap:
        raise EnumerationLimitError(f"torus lattice box exceeds cap {cap}")
    grids = np.meshgrid(*[np.arange(-b, b + 1) for b in bounds], indexing="ij")
    vals = sum((w * g.ravel()) ** 2 for w, g in zip(freq, grids))
    vals = np.sort(vals[vals <= cutoff * (1 + 1e-12)])
    if vals.size > cap:
        raise EnumerationLimitError(f"torus enumeration exceeds cap {cap}")
    return vals.tolist()


def _torus_heap(periods: tuple[float, ...], cutoff: float, cap: int) -> list[float]:
    """Best-first search over the nonnegative orthant, unfolding signs on output."""
    freq = [2.0 * math.pi / p for p in periods]
    dim = len(freq)
    start = (0,) * dim
    heap = [(0.0, start)]
    seen = {start}
    out: list[float] = []
    while heap:
        value, k = heapq.heappop(heap)
        if value > cutoff * (1 + 1e-12):
            break
        out.extend([value] * (2 ** sum(1 for ki in k if ki)))
        if len(out) > cap:
            raise EnumerationLimitError(f"torus enumeration exceeds cap {cap}")
        for i in range(dim):
            nxt = k[:i] + (k[i] + 1,) + k[i + 1:]
            if nxt not in seen:
                seen.add(nxt)
                heapq.heappush(heap, (sum((w * ki) ** 2 for w, ki in zip(freq, nxt)), nxt))
    return out


@dataclass(frozen=True)
class CrossSection:
    """Disjoint union of connected components of a common dimension."""

    components: tuple[CrossSectionComponent, ...]

    def __init__(self, components: Sequence[CrossSectionComponent]):
        comps = tuple(components)
        if not comps:
            raise ValueError("a cross-section needs at least one component")
        if len({c.dimension for c in comps}) != 1:
            raise ValueError("all components must have the same dimension")
        object.__setattr__(self, "components", comps)

    @property
    def dimension(self) -> int:
        return self.components[0].dimension

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def volumes(self) -> tuple[float, ...]:
        return tuple(c.volume for c in self.components)

    @property
    def volume(self) -> float:
        return float(sum(self.volumes))

    def eigenvalues_below(self, cutoff: float, *, cap: int = DEFAULT_CAP,
                          strategy: str = "lattice") -> list[Eigenvalue]:
        """Merged spectrum below ``cutoff``, multiplicities aggregated across components."""
        triples = []
        for idx, comp in enumerate(self.components):
            triples += [(v, m, idx) for v, m in comp.eigenvalues_below(cutoff, cap=cap, strategy=strategy)]
        merged = _aggregate(triples)
        if sum(e.multiplicity for e in merged) > cap:
            raise EnumerationLimitError(f"merged enumeration exceeds cap {cap}")
        return merged

    def iter_eigenvalues(self, *, start_cutoff: float = 4.0, cap: int = DEFAULT_CAP) -> Iterator[Eigenvalue]:
        """Yield distinct merged eigenvalues in increasing order, without end."""
        cutoff, emitted = max(start_cutoff, 1e-12), 0
        while True:
            batch = self.eigenvalues_below(cutoff, cap=cap)
            for e in batch[emitted:]:
                yield e
            emitted = len(batch)
            cutoff *= 4.0

    def lambda_first_positive(self) -> float:
        """Smallest positive eigenvalue of the merged spectrum."""
        for e in self.iter_eigenvalues():
            if e.value > 0:
                return e.value
        raise AssertionError("unreachable")  # pragma: no cover

    def describe(self) -> list[dict]:
        return [{"kind": c.kind, "params": list(c.params), "dimension": c.dimension,
                 "volume": c.volume} for c in self.components]


def eigenvalues_below(cs: CrossSection, cutoff: float, **kw) -> list[Eigenvalue]:
    return cs.eigenvalues_below(cutoff, **kw)


def lambda_first_positive(cs: CrossSection) -> float:
    return cs.lambda_first_positive()


_PI_RE = ("pi", "π")


def parse_length(token: str | float) -> float:
    """Parse ``1.5``, ``"2pi"``, ``"0.5*pi"`` or ``"pi"``."""
    if isinstance(token, (int, float)):
        return float(token)
    s = token.strip().lower().replace("π", "pi").replace("*", "")
    if s.endswith("pi"):
        head = s[:-2]
        return (float(head) if head else 1.0) * math.pi
    return float(s)


def parse_component(spec: str | dict) -> CrossSectionComponent:
    """Build a component from a CLI string (``torus:2pi,2pi``) or a config table."""
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "circle":
            return CrossSectionComponent.circle(parse_length(spec.get("radius", 1.0)))
        if kind in ("flat-torus", "torus"):
            if "periods" not in spec:
                raise ValueError("cross_section: flat-torus needs 'periods'")
            return CrossSectionComponent.flat_torus([parse_length(p) for p in spec["periods"]])
        if kind in ("round-sphere", "sphere"):
            return CrossSectionComponent.round_sphere(int(spec.get("dim", 2)),
                                                      parse_length(spec.get("radius", 1.0)))
        if kind in ("custom-list", "custom"):
            for key in ("volume", "dimension"):
                if key not in spec:
                    raise ValueError(f"cross_section: custom-list needs {key!r}")
            if "file" in spec:
                return CrossSectionComponent.from_file(spec["file"], float(spec["volume"]), int(spec["dimension"]))
            return CrossSectionComponent.custom(spec["eigenvalues"], float(spec["volume"]), int(spec["dimension"]))
        raise ValueError(f"cross_section: unknown kind {kind!r}")
    kind, _, rest = spec.partition(":")
    args = [a for a in rest.split(",") if a]
    if kind == "circle":
        return CrossSectionComponent.circle(parse_length(args[0]) if args else 1.0)
    if kind in ("torus", "flat-torus"):
        return CrossSectionComponent.flat_torus([parse_length(a) for a in args])
    if kind in ("sphere", "round-sphere"):
        dim = int(args[0]) if args else 2
        return CrossSectionComponent.round_sphere(dim, parse_length(args[1]) if len(args) > 1 else 1.0)
    raise ValueError(f"unknown cross-section spec {spec!r}")


def parse_cross_section(spec: str | Sequence[dict]) -> CrossSection:
    """``"torus:2pi,2pi+circle:1"`` or a list of component tables."""
    if isinstance(spec, str):
        return CrossSection([parse_component(part) for part in spec.split("+")])
    return CrossSection([parse_component(part) for part in spec])
