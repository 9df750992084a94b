"""Sweeps over routing policies and compromise fractions, plus their outputs."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .config import ALL_POLICIES, ConfigError, RoutingPolicy, ScenarioConfig
from .engine import MetricsReport, run_simulation

DEFAULT_FRACTIONS: tuple[float, ...] = (0.0, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50)

CSV_HEADER = [
    "policy", "fraction", "pdr", "drop_rate", "throughput", "avg_delay",
    "messages_compromised", "runs", "seed",
]

PLOT_FILES = {
    "pdr": "pdr",
    "drop": "drop_rate",
    "throughput": "throughput",
    "delay": "avg_delay",
}


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    policies: tuple[RoutingPolicy, ...] = ALL_POLICIES

    def __post_init__(self) -> None:
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "policies", tuple(RoutingPolicy.parse(p) for p in self.policies))
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ConfigError(f"fractions must lie in [0, 1]: {self.fractions}")
        if list(self.fractions) != sorted(self.fractions):
            raise ConfigError(f"fractions must be sorted ascending: {self.fractions}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("duplicate policy in sweep")

    def cells(self) -> list[ScenarioConfig]:
        return [
            self.base.with_(policy=p, compromise_fraction=f)
            for p in self.policies
            for f in self.fractions
        ]


@dataclass
class SweepRow:
    policy: str
    fraction: float
    report: MetricsReport
    seed: int

    @property
    def runs(self) -> int:
        return self.report.runs


def _run_cell(config: ScenarioConfig) -> MetricsReport:
    return run_simulation(config)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[SweepRow]:
    """One pooled report per (policy, fraction) cell, in declaration order."""
    cells = spec.cells()
    reports: list[MetricsReport | None] = [None] * len(cells)
    if jobs <= 1:
        for i, cfg in enumerate(cells):
            reports[i] = _guarded(cfg)
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
            futures = {pool.submit(_run_cell, cfg): i for i, cfg in enumerate(cells)}
            for fut, i in futures.items():
                try:
                    reports[i] = fut.result()
                except ConfigError as exc:
                    raise SweepError(_diagnostic(cells[i], exc)) from exc
    return [
        SweepRow(cfg.policy.value, cfg.compromise_fraction, rep, cfg.seed)
        for cfg, rep in zip(cells, reports)
    ]


def _guarded(cfg: ScenarioConfig) -> MetricsReport:
    try:
        return run_simulation(cfg)
    except ConfigError as exc:
        raise SweepError(_diagnostic(cfg, exc)) from exc


def _diagnostic(cfg: ScenarioConfig, exc: Exception) -> str:
    return f"cell policy={cfg.policy.value} fraction={cfg.compromise_fraction:g}: {exc}"


def _fmt(value: float | None) -> str:
    return "null" if value is None else f"{value:.6f}"


def format_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        rep = row.report
        writer.writerow([
            row.policy, _fmt(row.fraction), _fmt(rep.pdr), _fmt(rep.drop_rate),
            _fmt(rep.throughput), _fmt(rep.avg_delay), rep.messages_compromised,
            rep.runs, row.seed,
        ])
    return buf.getvalue()


def emit_csv(rows: Sequence[SweepRow], path: str | os.PathLike) -> Path:
    path = Path(path)
    try:
        path.write_text(format_csv(rows))
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc.strerror or exc}") from exc
    return path


def parse_csv(text: str) -> list[dict]:
    """Read a sweep CSV back into typed dictionaries."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        parsed: dict = {"policy": rec["policy"]}
        for key in ("fraction", "pdr", "drop_rate", "throughput", "avg_delay"):
            parsed[key] = None if rec[key] == "null" else float(rec[key])
        for key in ("messages_compromised", "runs", "seed"):
            parsed[key] = int(rec[key])
        out.append(parsed)
    return out


def plot_table(rows: Sequence[SweepRow], metric: str) -> tuple[list[str], list[float], list[list[float | None]]]:
    """(policies, fractions, values[fraction][policy]) for one metric."""
    policies: list[str] = []
    fractions: list[float] = []
    for row in rows:
        if row.policy not in policies:
            policies.append(row.policy)
        if row.fraction not in fractions:
            fractions.append(row.fraction)
    lookup = {(r.policy, r.fraction): getattr(r.report, metric) for r in rows}
    values = [[lookup.get((p, f)) for p in policies] for f in fractions]
    return policies, fractions, values


def emit_plotdata(rows: Sequence[SweepRow], path_prefix: str | os.PathLike) -> list[Path]:
    """Write ``<prefix>pdr.dat``, ``drop.dat``, ``throughput.dat`` and ``delay.dat``.

    Each file is whitespace-delimited with a ``#``-prefixed header line; the
    first column is the compromise fraction and the rest follow the policy
    order of the sweep.  Missing values are written as ``nan``.
    """
    prefix = str(path_prefix)
    written = []
    for name, metric in PLOT_FILES.items():
        policies, fractions, values = plot_table(rows, metric)
        lines = ["# fraction " + " ".join(policies)]
        for f, vals in zip(fractions, values):
            cols = [f"{f:.6f}"] + ["nan" if v is None else f"{v:.6f}" for v in vals]
            lines.append(" ".join(cols))
        path = Path(f"{prefix}{name}.dat")
        try:
            path.write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write plot data to {path}: {exc.strerror or exc}") from exc
        written.append(path)
    return written
