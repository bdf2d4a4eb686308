"""Command-line entry point: ``watergenius {synth,run,inspect}``.

Run configuration lives in a flat ``key = value`` text file (``#`` starts a
comment). Command-line flags override file values, and every run writes its
fully resolved configuration to ``config.txt`` in the output directory, which
can be fed back through ``--config`` to replay the run.

Output directories default to ``$WATERGENIUS_OUT/<sweep>-seed<seed>``
(``$WATERGENIUS_OUT`` falls back to ``./runs``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from datetime import date
from pathlib import Path

from . import reports as rep
from .dataio import (DEFAULT_FRACTIONS, DEFAULT_START, DataError, build_patterns, load_csv,
                     split_chronological, synthesize_series, write_csv)
from .experiments import (conclude_tournament, pick_genius, run_ann_experiment,
                          run_svr_experiment, select_input_count, tournament_seeds)
from .metrics import DEFAULT_TOLERANCE_FRACTION, REFERENCE_TAU_ML, Tolerance, derive_tolerance
from .numerics import make_rng
from .serialize import FormatError, load_model, save_model, summary
from .svr import default_kernel_sweep

log = logging.getLogger("watergenius")

ENV_OUT = "WATERGENIUS_OUT"
DEFAULT_SEED = 20060709
SWEEPS = ("svr", "ann", "tournament", "input-select")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    source: str = "synthetic"
    demand_csv: str = ""
    population_csv: str = ""
    days: int = 3473
    start: str = DEFAULT_START.isoformat()
    base_demand: float = 2300.0
    growth: float = 0.03
    weekly_amp: float = 0.04
    annual_amp: float = 0.10
    noise_sd: float = 50.0
    pop_start: int = 8_324_886
    pop_growth_rate: float = 0.0313
    splits: str = ",".join(repr(f) for f in DEFAULT_FRACTIONS)
    tau: str = ""
    sweep: str = "tournament"
    seed: int = DEFAULT_SEED
    inputs: int = 5
    candidates: str = "2,3,4,5,6"
    mlp_max_iters: int = 500
    em_iters: int = 10
    svr_c: float = 10.0
    svr_epsilon: float = 0.01
    svr_kkt_tol: float = 1e-3
    svr_max_passes: int = 10_000

    def fractions(self) -> tuple[float, float, float]:
        try:
            parts = tuple(float(p) for p in self.splits.split(","))
        except ValueError:
            raise ConfigError(f"splits must be three comma-separated numbers: {self.splits!r}") from None
        if len(parts) != 3:
            raise ConfigError(f"splits must have three entries: {self.splits!r}")
        return parts

    def candidate_counts(self) -> list[int]:
        return [int(c) for c in self.candidates.split(",") if c.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _coerce(key: str, value: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        return _CASTS[_FIELD_TYPES[key]](value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {_FIELD_TYPES[key]}") from None


def read_config_file(path) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def resolve_config(file_values: dict[str, str], overrides: dict[str, str]) -> RunConfig:
    """Merge file values and flag overrides into a validated, fully explicit config."""
    merged = {**file_values, **overrides}
    kwargs = {k: _coerce(k, v) for k, v in merged.items()}
    if "source" not in merged:
        kwargs["source"] = "csv" if kwargs.get("demand_csv") else "synthetic"
    cfg = RunConfig(**kwargs)
    if cfg.source == "csv":
        if not (cfg.demand_csv and cfg.population_csv):
            raise ConfigError("csv source needs both demand_csv and population_csv")
    elif cfg.source == "synthetic":
        if cfg.demand_csv or cfg.population_csv:
            raise ConfigError("specify either csv files or synthetic data, not both")
    else:
        raise ConfigError(f"unknown data source {cfg.source!r}")
    if cfg.sweep not in SWEEPS:
        raise ConfigError(f"sweep must be one of {', '.join(SWEEPS)}")
    if not cfg.tau:
        default = (f"fraction:{DEFAULT_TOLERANCE_FRACTION!r}" if cfg.source == "synthetic"
                   else f"fixed:{REFERENCE_TAU_ML!r}")
        cfg = replace(cfg, tau=default)
    parse_tau(cfg.tau)
    cfg.fractions()
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.inputs < 2:
        raise ConfigError("inputs must be at least 2 (one lag plus population)")
    return cfg


def config_text(cfg: RunConfig) -> str:
    lines = ["# resolved watergenius run configuration"]
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def parse_tau(text: str):
    rule, _, value = text.partition(":")
    try:
        number = float(value)
    except ValueError:
        raise ConfigError(f"tau must look like fixed:<ml> or fraction:<f>, got {text!r}") from None
    if rule == "fixed":
        if not number > 0:
            raise ConfigError("fixed tau must be positive")
    elif rule == "fraction":
        if not 0 < number < 1:
            raise ConfigError("tau fraction must lie in (0, 1)")
    else:
        raise ConfigError(f"unknown tau rule {rule!r}")
    return rule, number


def make_series(cfg: RunConfig):
    if cfg.source == "csv":
        return load_csv(cfg.demand_csv, cfg.population_csv)
    return synthesize_series(make_rng(cfg.seed), cfg.days, cfg.base_demand, cfg.growth,
                             cfg.weekly_amp, cfg.annual_amp, cfg.noise_sd, cfg.pop_start,
                             cfg.pop_growth_rate, date.fromisoformat(cfg.start))


def resolve_tolerance(cfg: RunConfig, series) -> Tolerance:
    rule, number = parse_tau(cfg.tau)
    if rule == "fixed":
        return Tolerance(number, "fixed")
    return derive_tolerance(series, number)


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def cmd_synth(args) -> int:
    overrides = dict(_pairs(args.set))
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.days is not None:
        overrides["days"] = str(args.days)
    try:
        cfg = resolve_config({}, overrides)
        series = make_series(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(series, out / "demand.csv", out / "population.csv")
        keys = ["seed", "days", "start", "base_demand", "growth", "weekly_amp", "annual_amp",
                "noise_sd", "pop_start", "pop_growth_rate"]
        lines = ["# synthetic series provenance"]
        for k in keys:
            v = getattr(cfg, k)
            lines.append(f"{k} = {repr(v) if isinstance(v, float) else v}")
        _write(out, "synth.txt", "\n".join(lines) + "\n")
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot write to {args.out}: {exc.strerror}", file=sys.stderr)
        return 1
    print(f"wrote {len(series)} days to {out}")
    return 0


def _pairs(items):
    for item in items or []:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        yield k.strip(), v.strip()


def run_overrides(args) -> dict[str, str]:
    overrides = dict(_pairs(args.set))
    flag_map = {"seed": args.seed, "demand_csv": args.demand_csv,
                "population_csv": args.population_csv, "sweep": args.sweep,
                "tau": args.tau, "splits": args.splits}
    overrides.update({k: str(v) for k, v in flag_map.items() if v is not None})
    return overrides


def execute_run(cfg: RunConfig, out: Path) -> None:
    """Run the configured pipeline, writing artifacts into ``out`` as stages finish.

    Raises ``StageError`` naming the stage that failed.
    """
    stage = StageTracker(out)
    with stage("data manipulation"):
        series = make_series(cfg)
        tol = resolve_tolerance(cfg, series)
        facts = (f"observations = {len(series)}\ndiscarded = {series.discarded}\n"
                 f"tau_ml = {tol.tau!r}\ntau_rule = {tol.rule}\n")
        if cfg.sweep != "input-select":
            patterns = build_patterns(series, cfg.inputs - 1, True)
            split = split_chronological(patterns, cfg.fractions())
            counts = [len(split.train), len(split.validation), len(split.test)]
            facts += (f"patterns = {len(patterns)}\nsplit = {counts[0]},{counts[1]},{counts[2]}\n"
                      "scaler = fitted on training split\n")
        _write(out, "data.txt", facts)

    if cfg.sweep == "input-select":
        with stage("model initialization"):
            selection = select_input_count(cfg.candidate_counts(), series,
                                           fractions=cfg.fractions(), seed=cfg.seed,
                                           max_iters=cfg.mlp_max_iters)
            _write(out, "input_table.txt", rep.input_table(selection))
            _write(out, "input_selection.csv",
                   "inputs,training_error\n"
                   + "".join(f"{c},{e!r}\n" for c, e in selection.table))
        stage.finish()
        return

    with stage("model initialization"):
        svr_seed, ann_seed = tournament_seeds(cfg.seed)
        svr_configs = default_kernel_sweep(cfg.svr_c, cfg.svr_epsilon, cfg.svr_kkt_tol,
                                           cfg.svr_max_passes)
    timed = []
    svr_reports = ann_reports = None
    if cfg.sweep in ("svr", "tournament"):
        with stage("svr experiment"):
            svr_reports = run_svr_experiment(split, tol, svr_configs, seed=svr_seed)
            timed += svr_reports
            _write(out, "svr_reports.csv", rep.reports_csv(svr_reports))
            _write(out, "svr_table.txt", rep.svr_table(svr_reports, svr_configs))
    if cfg.sweep in ("ann", "tournament"):
        with stage("ann experiment"):
            ann_reports = run_ann_experiment(split, tol, ann_seed, mlp_max_iters=cfg.mlp_max_iters,
                                             em_iters=cfg.em_iters)
            timed += ann_reports
            _write(out, "ann_reports.csv", rep.reports_csv(ann_reports))
            _write(out, "mlp_table.txt", rep.ann_table([r for r in ann_reports if r.family == "mlp"]))
            _write(out, "rbf_table.txt", rep.ann_table([r for r in ann_reports if r.family == "rbf"]))
    _write(out, "timings.csv", rep.timings_csv(timed))

    scaler = split.train.scaler
    with stage("performance analysis"):
        if svr_reports is not None:
            svg = pick_genius(svr_reports, use_elapsed=False)
            save_model(out / "svg.model", svg.model, scaler, svg.model_label)
            _write(out, "svr_ranking.txt", rep.ranking_table(svr_reports))
        if ann_reports is not None:
            ang = pick_genius(ann_reports, use_elapsed=False)
            save_model(out / "ang.model", ang.model, scaler, ang.model_label)
            _write(out, "ann_ranking.txt", rep.ranking_table(ann_reports))

    if cfg.sweep == "tournament":
        with stage("overall genius"):
            result = conclude_tournament(split, tol, svr_reports, ann_reports)
            fraction_tau = derive_tolerance(series).tau
            _write(out, "tournament.txt", rep.tournament_text(result, fraction_tau))
            _write(out, "tournament.csv", rep.reports_csv([result.svg_test, result.ang_test]))
            _write(out, "plot_data.csv",
                   rep.plot_csv(split.test.dates, split.test.targets_ml(),
                                result.ang_test.predictions, result.svg_test.predictions))
            log.info("OG: %s (%s)", result.og, result.og_report.model_label)
    stage.finish()


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


class StageTracker:
    """Names the running stage and records completion in ``status.txt``."""

    def __init__(self, out: Path):
        self.out = out
        self.current = None
        (out / "status.txt").write_text("incomplete: starting\n")

    def __call__(self, name: str):
        self.current = name
        (self.out / "status.txt").write_text(f"incomplete: {name}\n")
        return self

    def __enter__(self):
        log.info("stage: %s", self.current)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, KeyboardInterrupt):
            return False
        raise StageError(self.current, exc) from exc

    def finish(self):
        (self.out / "status.txt").write_text("complete\n")


def default_out(cfg: RunConfig) -> Path:
    return Path(os.environ.get(ENV_OUT, "runs")) / f"{cfg.sweep}-seed{cfg.seed}"


def cmd_run(args) -> int:
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(file_values, run_overrides(args))
    except ConfigError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else default_out(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write(out, "config.txt", config_text(cfg))
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc.strerror}", file=sys.stderr)
        return 1
    try:
        execute_run(cfg, out)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted; partial results left flagged incomplete in status.txt", file=sys.stderr)
        return 130
    print(f"run complete: {out}")
    return 0


def cmd_inspect(args) -> int:
    try:
        saved = load_model(args.model)
    except FormatError as exc:
        print(f"error: {args.model}: format error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {args.model}: {exc.strerror}", file=sys.stderr)
        return 1
    print(summary(saved))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="watergenius",
                                     description="Water demand forecasting tournament.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic demand/population series")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a synthetic parameter (repeatable)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run a sweep or the full tournament")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--demand-csv")
    p.add_argument("--population-csv")
    p.add_argument("--sweep", choices=SWEEPS)
    p.add_argument("--tau", help="fixed:<ml> or fraction:<f>")
    p.add_argument("--splits", help="three comma-separated fractions")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("inspect", help="summarize a serialized model")
    p.add_argument("model")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
