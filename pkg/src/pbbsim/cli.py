"""``pbbsim`` command line: run scenarios, compare report sets, list bundled configs.

Exit codes: 0 success, 1 configuration or input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as config_mod
from . import metrics
from .config import ConfigError, ScenarioConfig
from .sim import World

log = logging.getLogger("pbbsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def load_config(ref: str) -> ScenarioConfig:
    """A settings file path, or the name of a bundled scenario."""
    path = Path(ref)
    if not path.exists():
        stem = path.name.removesuffix(".ini")
        if stem in config_mod.BUNDLED:
            return config_mod.bundled(stem)
    return config_mod.parse_config(path)


def run(cfg: ScenarioConfig, out_dir, seed: int | None = None, trace: bool = False) -> metrics.Report:
    """Run one world to completion and write its report files under ``out_dir``."""
    if seed is not None:
        cfg = cfg.with_seed(seed)
    world = World(cfg, trace=trace)
    report = world.run()
    if world.desyncs:
        raise RuntimeError(f"protocol desync: {world.desyncs[0]}")
    metrics.write_report(report, out_dir)
    if trace:
        world.write_trace(Path(out_dir) / "trace.csv")
    return report


def _run_one(args):
    cfg, out_dir, seed, trace = args
    return run(cfg, out_dir, seed, trace)


def run_batch(cfg: ScenarioConfig, seeds, out_dir, jobs: int = 1, trace: bool = False):
    """One report set per seed under ``out_dir/seed_<n>``, plus ``aggregate.csv``."""
    out = Path(out_dir)
    tasks = [(cfg, out / f"seed_{s}", s, trace) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_one, tasks))
    else:
        reports = [_run_one(t) for t in tasks]
    tables = [metrics.read_report_csv(out / f"seed_{s}" / "report.csv") for s in seeds]
    (out / "aggregate.csv").write_text(
        metrics.aggregate_rows(tables, cfg.scenario.name), encoding="utf-8")
    return reports


def parse_seeds(spec: str) -> list[int]:
    if ".." in spec:
        a, b = spec.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty seed range {spec}")
        return list(range(lo, hi + 1))
    return [int(s) for s in spec.split(",") if s.strip()]


def report_dir_table(path) -> list[dict[str, str]]:
    p = Path(path)
    if p.is_file():
        return metrics.read_report_csv(p)
    for name in ("aggregate.csv", "report.csv"):
        if (p / name).exists():
            return metrics.read_report_csv(p / name)
    raise FileNotFoundError(f"no report.csv or aggregate.csv in {p}")


def compare(dir_a, dir_b) -> str:
    return metrics.compare_tables(report_dir_table(dir_a), report_dir_table(dir_b))


def _cmd_run(ns) -> int:
    try:
        cfg = load_config(ns.config)
        if ns.duration is not None:
            cfg.world.duration = ns.duration
            problems = config_mod.validate(cfg)
            if problems:
                raise ConfigError(f"{problems[0][0]}: {problems[0][1]}", source="--duration")
        seeds = parse_seeds(ns.seeds) if ns.seeds else None
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if seeds:
            run_batch(cfg, seeds, ns.out, ns.jobs, ns.trace)
            print((Path(ns.out) / "aggregate.csv").read_text(), end="")
        else:
            report = run(cfg, ns.out, ns.seed, ns.trace)
            print(metrics.report_csv(report), end="")
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_compare(ns) -> int:
    try:
        table = compare(ns.a, ns.b)
    except (OSError, metrics.MetricsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if ns.out:
        Path(ns.out).write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def _cmd_scenarios(ns) -> int:
    names = [ns.name] if ns.name else list(config_mod.BUNDLED)
    for name in names:
        if name not in config_mod.BUNDLED:
            print(f"error: no bundled scenario {name!r}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"# --- {name} ---")
        print(config_mod.bundled_path(name).read_text(encoding="utf-8"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pbbsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write report files")
    r.add_argument("--config", required=True,
                   help="settings file, or a bundled name (scenario1, scenario2)")
    r.add_argument("--seed", type=int, help="override World.seed")
    r.add_argument("--seeds", help="batch of seeds, e.g. 1..5 or 3,7,9")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--trace", action="store_true", help="also write trace.csv")
    r.add_argument("--duration", type=float, help="override World.duration (seconds)")
    r.add_argument("--jobs", type=int, default=1, help="worlds to run concurrently")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="compare two report sets (B against A)")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--out", help="also write the comparison CSV here")
    c.set_defaults(func=_cmd_compare)

    s = sub.add_parser("scenarios", help="print the bundled scenario settings")
    s.add_argument("name", nargs="?")
    s.set_defaults(func=_cmd_scenarios)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
