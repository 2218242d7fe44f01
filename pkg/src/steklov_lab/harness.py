"""Scenario runs: checks, sweep tables, JSON reports and plots, written atomically."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .checks import CheckReport, Sweep, run_checks
from .config import Scenario
from .spectrum import SpectrumResult


@dataclass
class ScenarioRun:
    scenario: Scenario
    sweep: Sweep
    reports: list[CheckReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def spectra(self) -> list[tuple[float | None, SpectrumResult]]:
        return [(e, self.sweep.at(e)) for e in self.sweep.eps_values]

    def to_dict(self) -> dict:
        sc = self.scenario
        return {
            "scenario": {"name": sc.name, "family": sc.family, "profile": sc.profile, "L": sc.L,
                         "eps": list(sc.eps), "k": sc.k, "n": sc.n,
                         "cross_section": sc.cross_section.describe(), "checks": list(sc.checks),
                         "strict_epsilon": sc.strict_epsilon, "richardson": sc.richardson},
            "passed": self.passed,
            "checks": [r.to_dict() for r in self.reports],
            "spectra": [{"eps": e, **res.to_dict()} for e, res in self.spectra()],
        }


def run_scenario(sc: Scenario, threads: int | None = None) -> ScenarioRun:
    sweep = Sweep(sc, threads)
    reports = run_checks(sc, sweep)
    sweep.warm()
    return ScenarioRun(sc, sweep, reports)


def sweep_csv(items: list[tuple[float | None, SpectrumResult]], k: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "k", "sigma"])
    for eps, res in items:
        for j, v in enumerate(res.values(k), start=1):
            w.writerow(["" if eps is None else repr(eps), j, repr(float(v))])
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plot_svg(items: list[tuple[float | None, SpectrumResult]], indices: list[int], title: str) -> str:
    """Log-log plot of selected ``sigma_j`` against eps, as SVG text."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "steklov-lab"
    fig, ax = plt.subplots(figsize=(5, 4))
    pts = [(e, r) for e, r in items if e is not None]
    for j in indices:
        xs = [e for e, r in pts if r.count >= j]
        ys = [r.sigma(j) for e, r in pts if r.count >= j]
        if xs and all(y > 0 for y in ys):
            ax.loglog(xs, ys, "o-", label=f"sigma_{j}")
    ax.set_xlabel("eps")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title)
    ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def write_artifacts(run: ScenarioRun, out_dir: str | Path, *, plot: bool = True) -> list[Path]:
    sc = run.scenario
    out_dir = Path(out_dir)
    names = {"csv": "sweep.csv", "json": "report.json", "plot": "sigma.svg"}
    names.update(sc.outputs)
    written = []
    items = run.spectra()
    write_atomic(out_dir / names["csv"], sweep_csv(items, sc.k))
    written.append(out_dir / names["csv"])
    write_atomic(out_dir / names["json"], to_json(run.to_dict()))
    written.append(out_dir / names["json"])
    if plot and any(e is not None for e, _ in items):
        b = run.sweep.b
        write_atomic(out_dir / names["plot"], plot_svg(items, sorted({2, b, b + 1}), sc.name))
        written.append(out_dir / names["plot"])
    return written


def summary_lines(run: ScenarioRun) -> list[str]:
    lines = []
    for rep in run.reports:
        lines.append(f"{'PASS' if rep.passed else 'FAIL'}  {rep.name}")
        for f in rep.failures():
            lines.append(f"      {f}")
    return lines
