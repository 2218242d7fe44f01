"""Piecewise factor profiles ``h(t)`` and the metric families built on them.

A profile is a list of pieces, each either a constant plateau or a
log-space ``C^infinity`` transition between two plateau values.  Plateaus
are stored exactly, so ``h`` equals ``1`` or ``eps**-2`` bit-for-bit there.

Two coordinates appear below.  Collar profiles (``conf1``, ``conf2``) are
written in the distance ``s`` to the boundary, ``s`` in ``[0, L]``;
:meth:`Profile.on_cylinder` mirrors them onto ``t`` in ``[-L, L]`` so that
``s = L - |t|`` and both boundary components see the same collar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import integrate

LABELS = ("conf1", "conf2", "warped", "identity", "custom")
FAMILIES = ("conformal", "warped")
PIECE_KINDS = ("constant", "transition", "linear-transition")

_DOMAIN_TOL = 1e-12


class EpsilonRangeError(ValueError):
    """``eps`` lies outside the admissible range of the chosen construction."""


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smoothstep(tau):
    """``C^infinity`` monotone step, 0 for ``tau <= 0`` and 1 for ``tau >= 1``."""
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    a, b = _bump(tau), _bump(1.0 - tau)
    return a / (a + b)


def smoothstep_derivative(tau):
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    inside = (tau > 0) & (tau < 1)
    x = tau[inside]
    a, b = np.exp(-1.0 / x), np.exp(-1.0 / (1.0 - x))
    da, db = a / x**2, -b / (1.0 - x) ** 2
    out[inside] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    kind: str  # "constant" | "transition" (smoothstep in log h) | "linear-transition" (smoothstep in h)
    from_value: float
    to_value: float

    @property
    def length(self) -> float:
        return self.end - self.start

    def __call__(self, t):
        if self.kind == "constant":
            return np.full(np.shape(t), self.from_value)
        tau = (np.asarray(t, dtype=float) - self.start) / self.length
        if self.kind == "linear-transition":
            return self.from_value + smoothstep(tau) * (self.to_value - self.from_value)
        lo, hi = math.log(self.from_value), math.log(self.to_value)
        return np.exp(lo + smoothstep(tau) * (hi - lo))

    def log_derivative(self, t):
        if self.kind == "constant":
            return np.zeros(np.shape(t))
        tau = (np.asarray(t, dtype=float) - self.start) / self.length
        if self.kind == "linear-transition":
            return smoothstep_derivative(tau) * (self.to_value - self.from_value) / self.length / self(t)
        return smoothstep_derivative(tau) * math.log(self.to_value / self.from_value) / self.length

    def mirrored(self, center: float) -> "Piece":
        return Piece(2 * center - self.end, 2 * center - self.start, self.kind,
                     self.to_value, self.from_value)

    def shifted(self, offset: float) -> "Piece":
        return replace(self, start=self.start + offset, end=self.end + offset)


@dataclass(frozen=True)
class Profile:
    """Positive piecewise factor on ``[pieces[0].start, pieces[-1].end]``."""

    pieces: tuple[Piece, ...]
    eps: float | None
    label: str = "custom"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown profile label {self.label!r}")
        if not self.pieces:
            raise ValueError("a profile needs at least one piece")
        for a, b in zip(self.pieces, self.pieces[1:]):
            if not math.isclose(a.end, b.start, rel_tol=0, abs_tol=1e-13):
                raise ValueError("profile pieces must be contiguous")
            if a.to_value != b.from_value:
                raise ValueError("profile must be continuous across piece junctions")
        for p in self.pieces:
            if p.kind not in PIECE_KINDS:
                raise ValueError(f"unknown piece kind {p.kind!r}")
            if p.length <= 0:
                raise ValueError("profile pieces must have positive length")
            if min(p.from_value, p.to_value) <= 0:
                raise ValueError("profile values must be positive")

    @property
    def domain(self) -> tuple[float, float]:
        return self.pieces[0].start, self.pieces[-1].end

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([p.start for p in self.pieces] + [self.pieces[-1].end])

    @property
    def max_value(self) -> float:
        return max(max(p.from_value, p.to_value) for p in self.pieces)

    def _locate(self, t: np.ndarray) -> np.ndarray:
        t0, t1 = self.domain
        span = max(1.0, abs(t0), abs(t1)) * _DOMAIN_TOL
        if np.any(t < t0 - span) or np.any(t > t1 + span):
            raise ValueError(f"t outside profile domain [{t0}, {t1}]")
        idx = np.searchsorted(self.breakpoints[1:-1], t, side="right")
        return idx

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        scalar = np.isscalar(t)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        out = np.empty_like(t)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if mask.any():
                out[mask] = piece(t[mask])
        return float(out[0]) if scalar else out

    def evaluate_log_derivative(self, t):
        """``d/dt log h``; zero on plateaus."""
        scalar = np.isscalar(t)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        out = np.zeros_like(t)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if mask.any():
                out[mask] = piece.log_derivative(t[mask])
        return float(out[0]) if scalar else out

    def integral_of_power(self, power: float, a: float | None = None, b: float | None = None) -> float:
        """``int_a^b h(t)**power dt``; plateaus in closed form, transitions by adaptive quadrature."""
        t0, t1 = self.domain
        a = t0 if a is None else a
        b = t1 if b is None else b
        total = 0.0
        for p in self.pieces:
            lo, hi = max(a, p.start), min(b, p.end)
            if hi <= lo:
                continue
            if p.kind == "constant":
                total += p.from_value**power * (hi - lo)
            else:
                val, _ = integrate.quad(lambda s: float(p(s)) ** power, lo, hi,
                                        epsabs=0.0, epsrel=1e-12, limit=200)
                total += val
        return total

    def restrict(self, a: float, b: float) -> "Profile":
        pieces = []
        for p in self.pieces:
            lo, hi = max(a, p.start), min(b, p.end)
            if hi - lo <= 1e-15:
                continue
            if p.kind == "constant":
                pieces.append(Piece(lo, hi, "constant", p.from_value, p.from_value))
            elif lo == p.start and hi == p.end:
                pieces.append(p)
            else:
                raise ValueError("restriction must not cut through a transition")
        return Profile(tuple(pieces), self.eps, self.label)

    def on_cylinder(self) -> "Profile":
        """Mirror a collar profile on ``[0, L]`` (``s = 0`` the boundary) to ``[-L, L]``."""
        s0, L = self.domain
        if s0 != 0.0:
            raise ValueError("on_cylinder expects a collar profile starting at s = 0")
        left = [p.shifted(-L) for p in self.pieces]
        right = [p.mirrored(0.0) for p in reversed(left)]
        pieces = left + right
        merged = [pieces[0]]
        for p in pieces[1:]:
            q = merged[-1]
            if q.kind == p.kind == "constant" and q.from_value == p.from_value:
                merged[-1] = Piece(q.start, p.end, "constant", q.from_value, q.from_value)
            else:
                merged.append(p)
        return Profile(tuple(merged), self.eps, self.label)

    def with_plateau_scale(self, factor: float) -> "Profile":
        """Multiply every value other than 1 by ``factor`` (transitions stay log-linear)."""
        if factor <= 0:
            raise ValueError("factor must be positive")

        def f(v):
            return v if v == 1.0 else v * factor

        pieces = tuple(Piece(p.start, p.end, p.kind, f(p.from_value), f(p.to_value)) for p in self.pieces)
        return Profile(pieces, self.eps, "custom")

    def with_transition(self, kind: str) -> "Profile":
        """Same plateaus, every transition redrawn with the given shape."""
        if kind not in PIECE_KINDS[1:]:
            raise ValueError(f"unknown transition kind {kind!r}")
        pieces = tuple(p if p.kind == "constant" else replace(p, kind=kind) for p in self.pieces)
        return Profile(pieces, self.eps, "custom")

    def to_dict(self) -> dict:
        return {"label": self.label, "eps": self.eps,
                "pieces": [[p.start, p.end, p.kind, p.from_value, p.to_value] for p in self.pieces]}

    @classmethod
    def from_pieces(cls, pieces: Sequence[Sequence], eps: float | None = None) -> "Profile":
        """Custom profile from ``[start, end, kind, from, to]`` rows (``to`` optional for constants)."""
        out = []
        for row in pieces:
            start, end, kind, v0 = float(row[0]), float(row[1]), str(row[2]), float(row[3])
            v1 = float(row[4]) if len(row) > 4 else v0
            if kind == "constant" and v1 != v0:
                raise ValueError("constant piece with two different values")
            out.append(Piece(start, end, kind, v0, v1))
        return cls(tuple(out), eps, "custom")


def identity_profile(L: float, *, collar: bool = False) -> Profile:
    a = 0.0 if collar else -L
    return Profile((Piece(a, L, "constant", 1.0, 1.0),), None, "identity")


def _plan(label: str, eps: float, L: float) -> list[tuple[float, float, float, float]]:
    """``(start, end, from, to)`` rows for each named construction."""
    top = eps**-2.0
    if label == "conf1":
        return [(0, eps, 1, 1), (eps, 2 * eps, 1, top), (2 * eps, 3 * eps, top, top),
                (3 * eps, 4 * eps, top, 1), (4 * eps, L, 1, 1)]
    if label == "conf2":
        # the lower-bound argument needs h = eps**-2 from 2*eps on, not only past L/2
        return [(0, eps, 1, 1), (eps, 2 * eps, 1, top), (2 * eps, L, top, top)]
    if label == "warped":
        return [(-L, -L + eps, 1, 1), (-L + eps, -L + 2 * eps, 1, top),
                (-L + 2 * eps, L - 2 * eps, top, top), (L - 2 * eps, L - eps, top, 1),
                (L - eps, L, 1, 1)]
    raise ValueError(f"no construction for label {label!r}")


def admissible_bound(label: str, L: float) -> tuple[float, str]:
    """Upper bound on ``eps`` and its human-readable constraint."""
    if label in ("conf1", "conf2"):
        return min(L / 4, 2 / L), "eps < min(L/4, 2/L)"
    if label == "warped":
        return min(L, 1 / L) / 4, "eps < min(L, 1/L)/4"
    return math.inf, "none"


def _geometric_bound(label: str, L: float) -> float:
    return {"conf1": L / 4, "conf2": L / 2, "warped": L / 4}.get(label, math.inf)


def make_profile(label: str, eps: float | None, L: float, n: int | None = None, *,
                 strict: bool = True, cylinder: bool | None = None) -> Profile:
    """Build one of the named factor profiles.

    ``conf1``/``conf2`` come back in the collar coordinate on ``[0, L]``
    unless ``cylinder=True``; ``warped`` and ``identity`` live on
    ``[-L, L]``.  With ``strict`` the admissible-``eps`` hypothesis is
    enforced; otherwise only geometric feasibility is.  ``n`` is accepted
    for call-site symmetry with :class:`MetricFamily` and is unused.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if label == "identity":
        return identity_profile(L, collar=bool(cylinder is False))
    if label not in ("conf1", "conf2", "warped"):
        raise ValueError(f"unknown profile label {label!r}")
    if eps is None or not eps > 0:
        raise EpsilonRangeError(f"{label}: eps must be positive")
    bound, text = admissible_bound(label, L)
    if strict and not eps < bound:
        raise EpsilonRangeError(f"{label}: eps={eps} violates {text} (bound {bound:.6g} for L={L})")
    if not eps < _geometric_bound(label, L):
        raise EpsilonRangeError(f"{label}: eps={eps} does not fit the construction for L={L}")
    rows = _plan(label, eps, L)
    pieces = tuple(Piece(float(a), float(b), "constant" if v0 == v1 else "transition", float(v0), float(v1))
                   for a, b, v0, v1 in rows)
    prof = Profile(pieces, float(eps), label)
    if label in ("conf1", "conf2") and cylinder:
        prof = prof.on_cylinder()
    return prof


@dataclass(frozen=True)
class MetricFamily:
    """Conformal ``h^2 (g0 + dt^2)`` or warped ``h^2 g0 + dt^2`` metric on ``Sigma x I``.

    ``n`` is the cross-section dimension.  The exponents give the weights of
    the per-mode energy ``int p a'^2 + lam q a^2`` and volume ``int r``.
    """

    family: str
    n: int
    profile: Profile

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown metric family {self.family!r}")
        if self.n < 1:
            raise ValueError("cross-section dimension must be >= 1")

    @property
    def exponents(self) -> tuple[int, int, int]:
        n = self.n
        if self.family == "conformal":
            return n - 1, n - 1, n + 1
        return n, n - 2, n

    @property
    def domain(self) -> tuple[float, float]:
        return self.profile.domain

    def weights(self, t, lam: float = 0.0):
        """``(p, q, r)`` at ``t`` for the mode with cross-section eigenvalue ``lam``."""
        h = self.profile.evaluate(t)
        ap, aq, ar = self.exponents
        return h**ap, lam * h**aq, h**ar

    def boundary_weight(self, t: float) -> float:
        return float(self.profile.evaluate(t)) ** self.n

    def metric_ratio(self, other: "MetricFamily", samples: int = 20001) -> float:
        """Quasi-isometry ratio ``A`` between two metrics on the same domain and family."""
        if other.family != self.family or other.domain != self.domain:
            raise ValueError("ratio needs metrics of the same family on the same domain")
        ts = np.unique(np.concatenate([np.linspace(*self.domain, samples),
                                       self.profile.breakpoints, other.profile.breakpoints]))
        r2 = (self.profile.evaluate(ts) / other.profile.evaluate(ts)) ** 2
        if self.family == "conformal":
            return float(max(r2.max(), 1.0 / r2.min()))
        return float(max(r2.max(), 1.0 / r2.min(), 1.0))

    def with_profile(self, profile: Profile) -> "MetricFamily":
        return MetricFamily(self.family, self.n, profile)


def volume(mf: MetricFamily, cs, L: float | None = None) -> float:
    """Riemannian volume ``|Sigma| int h**alpha_r dt`` over the profile domain."""
    if L is not None:
        t0, t1 = mf.domain
        if not (math.isclose(t1, L) and (math.isclose(t0, -L) or t0 == 0.0)):
            raise ValueError(f"profile domain {mf.domain} does not match L={L}")
    return cs.volume * mf.profile.integral_of_power(mf.exponents[2])
