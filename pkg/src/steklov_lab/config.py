"""Scenario files (TOML) and their validation.

Example::

    [scenario]
    name = "conf1-torus"
    cross_section = "torus:2pi,2pi"
    family = "conformal"
    profile = "conf1"
    L = 1.0
    eps = [0.1, 0.05, 0.025, 0.0125]
    k = 10
    checks = ["conf1", "volume-growth"]

    [resolution]
    per_unit = 128

    [checks.quasiiso]
    ratio = 1.2

    [output]
    dir = "out/conf1"

The full schema lives in ``docs/scenario-schema.md``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .cross_section import CrossSection, parse_cross_section, parse_length
from .mode_solver import Resolution
from .profiles import FAMILIES, LABELS, Profile

CHECKS = ("conf1", "conf2", "warped", "necesbsmall", "quasiiso", "kokarev", "n2-bound",
          "volume-growth", "lemneu", "collar-domination", "small-eigenvalues")

CHECK_DEFAULTS: dict[str, dict[str, Any]] = {
    "conf1": {"growth_slack": 0.1},
    "conf2": {"growth_slack": 0.1},
    "warped": {"growth_slack": 0.1},
    "necesbsmall": {"tolerance": 1e-6, "psi_tolerance": 1e-8},
    "quasiiso": {"ratio": 1.2, "k": 10},
    "kokarev": {"genus": 0},
    "n2-bound": {"tolerance": 1e-6},
    "volume-growth": {"factor": 10.0},
    "lemneu": {"trials": 100, "seed": 0, "shape": [16, 16], "nodes": 33},
    "collar-domination": {"depth": "eps", "k": 10, "tolerance": 1e-8},
    "small-eigenvalues": {"m": [10, 100, 1000], "ks": [2, 3], "ball": math.pi, "threshold": 1e-2,
                          "shape": [64, 64]},
}


class ConfigError(ValueError):
    """Schema violation; the message names the field."""

    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name


@dataclass(frozen=True)
class Scenario:
    name: str
    cross_section: CrossSection
    family: str
    profile: str
    L: float
    eps: tuple[float, ...]
    k: int = 10
    problems: tuple[str, ...] = ("steklov",)
    depth: float | None = None
    checks: tuple[str, ...] = ()
    check_params: dict[str, dict[str, Any]] = field(default_factory=dict)
    resolution: Resolution = Resolution()
    richardson: bool = True
    strict_epsilon: bool = True
    custom_pieces: tuple | None = None
    output_dir: Path | None = None
    outputs: dict[str, str] = field(default_factory=dict)
    seed: int = 0

    @property
    def n(self) -> int:
        return self.cross_section.dimension

    def params(self, check: str) -> dict[str, Any]:
        out = dict(CHECK_DEFAULTS.get(check, {}))
        out.update(self.check_params.get(check, {}))
        return out

    def custom_profile(self) -> Profile | None:
        if self.custom_pieces is None:
            return None
        return Profile.from_pieces(self.custom_pieces)


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"{where}.{key}", "missing")
    return table[key]


def _number(value, name: str) -> float:
    try:
        return parse_length(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"expected a number, got {value!r}") from exc


def scenario_from_dict(doc: dict, *, base_dir: Path | None = None) -> Scenario:
    sc = doc.get("scenario")
    if not isinstance(sc, dict):
        raise ConfigError("scenario", "missing [scenario] table")
    try:
        cs = parse_cross_section(_require(sc, "cross_section", "scenario"))
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("scenario.cross_section", str(exc)) from exc
    family = str(sc.get("family", "conformal"))
    if family not in FAMILIES:
        raise ConfigError("scenario.family", f"must be one of {FAMILIES}")
    label = str(sc.get("profile", "identity"))
    if label not in LABELS:
        raise ConfigError("scenario.profile", f"must be one of {LABELS}")
    L = _number(_require(sc, "L", "scenario"), "scenario.L")
    if not L > 0:
        raise ConfigError("scenario.L", "must be positive")
    raw_eps = sc.get("eps", [])
    if not isinstance(raw_eps, list):
        raw_eps = [raw_eps]
    eps = tuple(_number(e, "scenario.eps") for e in raw_eps)
    if label not in ("identity", "custom") and not eps:
        raise ConfigError("scenario.eps", "profile needs at least one eps value")
    if any(e <= 0 for e in eps):
        raise ConfigError("scenario.eps", "values must be positive")
    k = int(sc.get("k", 10))
    if k < 1:
        raise ConfigError("scenario.k", "must be >= 1")
    problems = tuple(sc.get("problems", ["steklov"]))
    for p in problems:
        if p not in ("steklov", "steklov-dirichlet"):
            raise ConfigError("scenario.problems", f"unknown problem {p!r}")
    depth = sc.get("depth")
    depth = None if depth is None else _number(depth, "scenario.depth")
    if "steklov-dirichlet" in problems and (depth is None or not 0 < depth < 2 * L):
        raise ConfigError("scenario.depth", "steklov-dirichlet needs 0 < depth < 2L")
    checks = tuple(sc.get("checks", []))
    for c in checks:
        if c not in CHECKS:
            raise ConfigError("scenario.checks", f"unknown check {c!r}; known: {', '.join(CHECKS)}")
    params = doc.get("checks", {})
    if not isinstance(params, dict):
        raise ConfigError("checks", "must be a table of per-check tables")
    for name in params:
        if name not in CHECKS:
            raise ConfigError(f"checks.{name}", "unknown check")
    res = doc.get("resolution", {})
    try:
        resolution = Resolution(**res)
    except TypeError as exc:
        raise ConfigError("resolution", str(exc)) from exc
    custom = sc.get("pieces")
    if label == "custom" and not custom:
        raise ConfigError("scenario.pieces", "custom profile needs a piece list")
    out = doc.get("output", {})
    out_dir = out.get("dir")
    if out_dir is not None:
        out_dir = Path(out_dir)
        if base_dir is not None and not out_dir.is_absolute():
            out_dir = base_dir / out_dir
    scenario = Scenario(
        name=str(sc.get("name", "scenario")), cross_section=cs, family=family, profile=label, L=L,
        eps=eps, k=k, problems=problems, depth=depth, checks=checks,
        check_params={k_: dict(v) for k_, v in params.items()}, resolution=resolution,
        richardson=bool(sc.get("richardson", True)), strict_epsilon=bool(sc.get("strict_epsilon", True)),
        custom_pieces=tuple(tuple(p) for p in custom) if custom else None, output_dir=out_dir,
        outputs={k_: str(v) for k_, v in out.items() if k_ != "dir"}, seed=int(sc.get("seed", 0)))
    _validate_checks(scenario)
    return scenario


def _validate_checks(sc: Scenario) -> None:
    """Refuse checks whose hypotheses the scenario cannot meet."""
    for c in sc.checks:
        where = f"scenario.checks[{c}]"
        if c == "conf1" and (sc.n < 2 or sc.family != "conformal"):
            raise ConfigError(where, "needs a conformal family with cross-section dimension n >= 2")
        if c == "conf2" and (sc.n < 2 or sc.family != "conformal"):
            raise ConfigError(where, "needs a conformal family with cross-section dimension n >= 2")
        if c == "warped" and sc.family != "warped":
            raise ConfigError(where, "needs the warped family")
        if c == "kokarev" and sc.n != 1:
            raise ConfigError(where, "applies to surfaces only (n = 1)")
        if c == "n2-bound" and (sc.family != "warped" or sc.n < 2):
            raise ConfigError(where, "needs a warped family with n >= 2")
        if c in ("lemneu", "small-eigenvalues"):
            comps = sc.cross_section.components
            if len(comps) != 1 or comps[0].kind != "flat-torus" or comps[0].dimension != 2:
                raise ConfigError(where, "grid checks need a single flat 2-torus cross-section")
        if c == "quasiiso" and sc.params(c)["ratio"] < 1:
            raise ConfigError(f"checks.{c}.ratio", "must be >= 1")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    return scenario_from_dict(doc, base_dir=path.parent)
