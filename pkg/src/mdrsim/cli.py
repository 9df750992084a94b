"""Command-line entry point: ``mdrsim [flags]`` runs a policy x fraction sweep.

With no flags the reference setup is simulated (250 nodes, 100x100 m, 50 m
range, four domains, 50 runs of 1500 rounds) for all four policies across the
default compromise fractions.  Values from ``--config FILE`` (a flat JSON
object keyed by scenario field names) are applied first, then explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from .adversary import compromised_count
from .config import ALL_POLICIES, CodingParams, ConfigError, ScenarioConfig, parse_area
from .engine import simulate_run
from .sweep import DEFAULT_FRACTIONS, SweepError, SweepSpec, emit_csv, emit_plotdata, run_sweep

log = logging.getLogger("mdrsim")

SEED_ENV = "MDRSIM_SEED"


def _fractions(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    d = ScenarioConfig()
    p = argparse.ArgumentParser(prog="mdrsim", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="flat JSON file of scenario fields")
    p.add_argument("--nodes", type=int, help=f"number of sensors (default {d.num_nodes})")
    p.add_argument("--area", type=str, help="field size WxH in metres (default 100x100)")
    p.add_argument("--range", type=float, dest="range_", help=f"radio range in metres (default {d.range:g})")
    p.add_argument("--domains", type=int, help=f"domain count, 2 or a square (default {d.num_domains})")
    p.add_argument("--policy", action="append", help="policy to sweep; repeatable (default: all four)")
    p.add_argument("--fractions", type=_fractions, help="comma-separated compromise fractions")
    p.add_argument("--shares", type=str, help=f"n:k share split (default {d.coding})")
    p.add_argument("--counter", type=int, help=f"random-phase hop budget C (default {d.counter})")
    p.add_argument("--runs", type=int, help=f"runs per cell (default {d.runs})")
    p.add_argument("--rounds", type=int, help=f"rounds per run (default {d.sim_rounds})")
    p.add_argument("--messages", type=int, help=f"messages per run (default {d.messages_per_run})")
    p.add_argument("--election-period", type=int, help=f"rounds between elections (default {d.election_period})")
    p.add_argument("--reshuffle-period", type=int, help=f"rounds between reshuffles, 0 disables (default {d.reshuffle_period})")
    p.add_argument("--seed", type=int, help=f"master seed (default {d.seed}); {SEED_ENV} overrides")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default 1)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default ./results)")
    p.add_argument("--strict-special-links", action="store_true", default=None,
                   help="special-node handoff only between physically adjacent specials")
    p.add_argument("--trace", action="store_true", help="write hop and election logs for run 0 of each cell")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace, environ: dict | None = None) -> tuple[ScenarioConfig, SweepSpec]:
    environ = os.environ if environ is None else environ
    base = ScenarioConfig()
    extra: dict = {}
    if args.config is not None:
        try:
            values = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError(f"config {args.config} must be a JSON object")
        for key in ("fractions", "policies"):
            if key in values:
                extra[key] = values.pop(key)
        base = ScenarioConfig.from_flat(values, base)

    changes: dict = {}
    flag_map = {
        "nodes": "num_nodes", "range_": "range", "domains": "num_domains", "counter": "counter",
        "runs": "runs", "rounds": "sim_rounds", "messages": "messages_per_run",
        "election_period": "election_period", "reshuffle_period": "reshuffle_period",
        "seed": "seed", "strict_special_links": "strict_special_links",
    }
    for flag, name in flag_map.items():
        value = getattr(args, flag)
        if value is not None:
            changes[name] = value
    if args.area is not None:
        changes["area"] = parse_area(args.area)
    if args.shares is not None:
        changes["coding"] = CodingParams.parse(args.shares)
    if environ.get(SEED_ENV):
        try:
            changes["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    base = base.with_(**changes)

    fractions = args.fractions if args.fractions is not None else extra.get("fractions", DEFAULT_FRACTIONS)
    policies = args.policy if args.policy else extra.get("policies", ALL_POLICIES)
    return base, SweepSpec(base=base, fractions=tuple(fractions), policies=tuple(policies))


def _write_traces(spec: SweepSpec, out: Path) -> None:
    trace_dir = out / "trace"
    trace_dir.mkdir(parents=True, exist_ok=True)
    for cfg in spec.cells():
        run_log = simulate_run(cfg, 0, trace_hops=True)
        stem = f"{cfg.policy.value}_{cfg.compromise_fraction:.6f}"
        with open(trace_dir / f"{stem}.hops", "w") as fh:
            fh.write("message share from to counter phase\n")
            for rec in run_log.hop_log:
                fh.write(" ".join(str(x) for x in rec) + "\n")
        (trace_dir / f"{stem}.elections.csv").write_text(run_log.elections.to_csv())


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        base, spec = config_from_args(args)
        args.out.mkdir(parents=True, exist_ok=True)
        started = time.perf_counter()
        rows = run_sweep(spec, jobs=args.jobs)
        csv_path = emit_csv(rows, args.out / "sweep.csv")
        emit_plotdata(rows, f"{args.out}{os.sep}")
        if args.trace:
            _write_traces(spec, args.out)
    except (ConfigError, SweepError) as exc:
        log.error("error: %s", exc)
        return 2
    except OSError as exc:
        log.error("error: %s", exc)
        return 1

    log.info("%-7s %8s %6s %8s %8s %10s %9s", "policy", "fraction", "count", "pdr", "drop", "throughput", "delay")
    for row in rows:
        rep = row.report
        log.info(
            "%-7s %8.3f %6d %8s %8s %10.4f %9s",
            row.policy, row.fraction, compromised_count(row.fraction, base.num_nodes),
            _short(rep.pdr), _short(rep.drop_rate), rep.throughput, _short(rep.avg_delay),
        )
    log.info("wrote %s (%d cells, %.1fs)", csv_path, len(rows), time.perf_counter() - started)
    return 0


def _short(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


if __name__ == "__main__":
    sys.exit(main())
