"""
Experiment orchestration: config files, batches of paired-seed runs, and the
CSV files and text tables that summarise them.

A config file is a list of `key = value` lines; `#` starts a comment line.
Only `map` is required, everything else falls back to the defaults of the
dataclasses it configures (the learning rate, discount, Q-table seed value
and UCH base coefficient default to the values the experiments were run with).
"""

import csv
import logging
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import repeat
from pathlib import Path

import numpy as np
from tqdm import tqdm

from gridiql.errors import ConfigError, GridDomainError, NoPathFound
from gridiql.eval_metrics import ConvergenceConfig, MetricsReport, evaluate, j_components, rolling_std
from gridiql.geometry import Metric, parse_metric
from gridiql.grid_env import is_reachable, read_map
from gridiql.paco_init import PacoParams
from gridiql.qlearn_core import DEFAULT_V_INIT, LearnParams, Variant, train
from gridiql.reward_uch import RewardConfig

log = logging.getLogger(__name__)

PACKAGE_DIR = Path(__file__).parent
MAP_ASSETS = {
    "S10": PACKAGE_DIR / "maps" / "s10.map",
    "S20": PACKAGE_DIR / "maps" / "s20.map",
    "S30": PACKAGE_DIR / "maps" / "s30.map",
}
REFERENCE_TABLE = PACKAGE_DIR / "data" / "paper_reference.csv"

RESULT_COLUMNS = [
    "map", "variant", "metric", "seed", "eta", "d", "e", "steps_total", "eta_std", "d_std", "e_std", "agg",
]
CURVE_COLUMNS = ["variant", "metric", "seed", "episode", "return", "rolling_std"]
COMPARISON_COLUMNS = ["map", "variant", "metric", "pairs", "eta_pct", "d_pct", "e_pct", "j"]
PACO_COLUMNS = ["variant", "metric", "seed", "iteration", "best_length", "mean_length", "reached", "volatility"]
NOT_CONVERGED = "NC"
UCH_SCALE_NOTE = (
    "note: e of UCH variants (c, d) is a return in mu-scaled reward units, so their e and J"
    " are not comparable with variant a on the raw step-cost scale"
)


# --- Config ---


@dataclass(frozen=True)
class ExperimentConfig:
    map_path: Path
    variants: tuple[Variant, ...] = (Variant.A_BASELINE, Variant.D_IQL)
    # metrics tried by the UCH variants c and d; a and b always use Euclidean
    metrics: tuple[Metric, ...] = (Metric.CHEBYSHEV,)
    reward: RewardConfig = field(default_factory=RewardConfig)
    learn: LearnParams = field(default_factory=LearnParams)
    paco: PacoParams = field(default_factory=PacoParams)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    seeds: tuple[int, ...] = tuple(range(30))
    output_dir: Path = Path("results")
    v_init: float = DEFAULT_V_INIT

    def __post_init__(self):
        for name in ("variants", "metrics", "seeds"):
            items = getattr(self, name)
            if not items:
                raise ConfigError("must not be empty", key=name)
            if len(set(items)) != len(items):
                raise ConfigError(f"entries must be distinct, got {list(items)}", key=name)
        negative = [seed for seed in self.seeds if seed < 0]
        if negative:
            raise ConfigError(f"seeds must be >= 0, got {negative}", key="seeds")

    def runs(self):
        """Every (variant, metric, seed) run of the batch in output order."""
        specs = []
        for variant in sorted(self.variants, key=lambda v: v.index):
            metrics = self.metrics if variant.uses_uch else (Metric.EUCLIDEAN,)
            for metric in sorted(metrics, key=lambda m: m.index):
                specs.extend(RunSpec(variant, metric, seed) for seed in self.seeds)
        return specs


def _boolean(text):
    value = text.strip().lower()
    if value in ("on", "true", "yes", "1"):
        return True
    if value in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on or off, got {text!r}")


def _variants(text):
    items = [item.strip().lower() for item in text.split(",") if item.strip()]
    try:
        return tuple(Variant(item) for item in items)
    except ValueError:
        raise ValueError(f"unknown variant in {text!r} (expected a, b, c or d)") from None


def _metrics(text):
    return tuple(parse_metric(item) for item in text.split(",") if item.strip())


def _seeds(text):
    text = text.strip()
    if ".." in text:
        low, high = (int(part) for part in text.split("..", 1))
        if high < low:
            raise ValueError(f"empty seed range {text!r}")
        seeds = tuple(range(low, high + 1))
    else:
        seeds = tuple(int(item) for item in text.split(",") if item.strip())
    if any(seed < 0 for seed in seeds):
        raise ValueError(f"seeds must be >= 0, got {text!r}")
    return seeds


def _optional_int(text):
    return None if text.strip().lower() in ("auto", "none") else int(text)


_PARSERS = {
    "map": str.strip,
    "variant": _variants,
    "variants": _variants,
    "metric": lambda text: (parse_metric(text),),
    "metrics": _metrics,
    "uch": _boolean,
    "mu0": float,
    "goal_reward": float,
    "alpha": float,
    "gamma": float,
    "epsilon": float,
    "episodes": int,
    "max_steps": _optional_int,
    "epsilon_decay": float,
    "epsilon_min": float,
    "seed": lambda text: (int(text),),
    "seeds": _seeds,
    "v_init": float,
    "output_dir": str.strip,
    "paco.m": int,
    "paco.alpha": float,
    "paco.beta": float,
    "paco.lambda1": float,
    "paco.lambda": float,
    "paco.q": float,
    "paco.tau0": float,
    "paco.max_iters": int,
    "conv.window": int,
    "conv.target": float,
    "conv.std_tolerance": float,
    "conv.signal": lambda text: text.strip().lower(),
}

# config key -> dataclass field, per section
_REWARD_KEYS = {"metric": "metric", "mu0": "mu0", "goal_reward": "goal_reward", "uch": "uch_enabled"}
_LEARN_KEYS = {
    "alpha": "alpha",
    "gamma": "gamma",
    "epsilon": "epsilon",
    "episodes": "episodes",
    "max_steps": "max_steps",
    "epsilon_decay": "epsilon_decay",
    "epsilon_min": "epsilon_min",
}
_PACO_KEYS = {
    "paco.m": "m",
    "paco.alpha": "alpha",
    "paco.beta": "beta",
    "paco.lambda1": "lambda1",
    "paco.lambda": "lam",
    "paco.q": "q_deposit",
    "paco.tau0": "tau0",
    "paco.max_iters": "max_iters",
}
_CONV_KEYS = {
    "conv.window": "window",
    "conv.target": "target",
    "conv.std_tolerance": "std_tolerance",
    "conv.signal": "signal",
}

_ALIASES = (("variant", "variants"), ("metric", "metrics"), ("seed", "seeds"))


def _section(cls, keys, values):
    kwargs = {name: values[key] for key, name in keys.items() if key in values}
    try:
        return cls(**kwargs)
    except GridDomainError as exc:
        key = next((k for k, name in keys.items() if name == exc.name), None)
        raise ConfigError(str(exc), key=key) from exc


def resolve_map(name, base_dir=None):
    """A shipped asset for S10/S20/S30, otherwise a path relative to `base_dir`."""
    asset = MAP_ASSETS.get(name.upper())
    if asset is not None:
        return asset
    path = Path(name)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


def parse_config(text, base_dir=None):
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected `key = value`, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError("unknown key", key=key)
        if key in values:
            raise ConfigError(f"line {n}: key given twice", key=key)
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, GridDomainError) as exc:
            raise ConfigError(f"invalid value {value!r}: {exc}", key=key) from None

    if "map" not in values:
        raise ConfigError("missing required key", key="map")
    for single, plural in _ALIASES:
        if single in values and plural in values:
            raise ConfigError(f"give either {single} or {plural}, not both", key=plural)
        if single in values:
            values[plural] = values.pop(single)

    variants = values.get("variants", ExperimentConfig.variants)
    metrics = values.get("metrics", ExperimentConfig.metrics)
    if "uch" in values:
        for variant in variants:
            if variant.uses_uch != values["uch"]:
                state = "on" if values["uch"] else "off"
                raise ConfigError(f"uch = {state} contradicts variant {variant}", key="uch")
    if not metrics:
        raise ConfigError("must not be empty", key="metrics")
    values["metric"] = metrics[0]

    reward = _section(RewardConfig, _REWARD_KEYS, values)
    learn = _section(LearnParams, _LEARN_KEYS, values)
    paco = _section(PacoParams, _PACO_KEYS, values)
    convergence = _section(ConvergenceConfig, _CONV_KEYS, values)

    optional = {}
    if "seeds" in values:
        optional["seeds"] = values["seeds"]
    if "output_dir" in values:
        optional["output_dir"] = Path(values["output_dir"])
    if "v_init" in values:
        if not math.isfinite(values["v_init"]):
            raise ConfigError(f"must be finite, got {values['v_init']}", key="v_init")
        optional["v_init"] = values["v_init"]
    return ExperimentConfig(
        map_path=resolve_map(values["map"], base_dir),
        variants=variants,
        metrics=metrics,
        reward=reward,
        learn=learn,
        paco=paco,
        convergence=convergence,
        **optional,
    )


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


# --- Runs ---


@dataclass(frozen=True)
class RunSpec:
    variant: Variant
    metric: Metric
    seed: int


@dataclass(frozen=True)
class RunRow:
    map: str
    variant: Variant
    metric: Metric
    seed: int
    eta: int | None
    d: int | None
    e: float | None
    steps_total: int

    @property
    def report(self):
        return MetricsReport(self.eta, self.d, self.e)


@dataclass(frozen=True)
class AggregateRow:
    map: str
    variant: Variant
    metric: Metric
    seeds: tuple[int, ...]
    converged: int
    # means over the converged seeds; None when no seed converged
    report: MetricsReport
    eta_std: float | None
    d_std: float | None
    e_std: float | None
    steps_total: float


@dataclass(frozen=True)
class JRow:
    map: str
    variant: Variant
    metric: Metric
    # seeds on which both this variant and variant a converged
    pairs: int
    eta_pct: float
    d_pct: float
    e_pct: float

    @property
    def j(self):
        return (self.eta_pct + self.d_pct + self.e_pct) / 3.0


@dataclass(frozen=True)
class ComparisonReport:
    map_name: str
    rows: tuple[RunRow, ...]
    aggregates: tuple[AggregateRow, ...]
    j_rows: tuple[JRow, ...]
    # (RunSpec, TrainingTrace) pairs; empty when rebuilt from CSV files
    traces: tuple = ()

    def aggregate(self, variant, metric):
        for agg in self.aggregates:
            if agg.variant == variant and agg.metric == metric:
                return agg
        return None


def execute_run(grid, cfg, spec, map_name=""):
    reward = replace(cfg.reward, metric=spec.metric)
    try:
        trace, _ = train(grid, spec.variant, reward, cfg.learn, cfg.paco, seed=spec.seed, v_init=cfg.v_init)
    except NoPathFound as exc:
        exc.seed = spec.seed
        raise
    report = evaluate(trace, cfg.convergence)
    row = RunRow(map_name, spec.variant, spec.metric, spec.seed, report.eta, report.d, report.e, trace.steps_total)
    return row, trace


def run_batch(cfg, jobs=1, progress=True):
    """Run every (variant, metric, seed) of `cfg` on its map and aggregate the results.

    Runs are independent; with jobs > 1 they go through a process pool and
    come back in submission order, so the report does not depend on `jobs`.
    """
    grid = read_map(cfg.map_path)
    if not is_reachable(grid):
        raise NoPathFound(f"goal of {cfg.map_path} is unreachable from its start", unreachable=True)
    map_name = Path(cfg.map_path).stem
    specs = cfg.runs()
    log.info("running %d runs on %s (%dx%d)", len(specs), map_name, grid.h, grid.v)

    bar = dict(total=len(specs), desc=f"Training on {map_name}", unit=" run", disable=not progress)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(tqdm(pool.map(execute_run, repeat(grid), repeat(cfg), specs, repeat(map_name)), **bar))
    else:
        results = [execute_run(grid, cfg, spec, map_name) for spec in tqdm(specs, **bar)]

    rows = [row for row, _ in results]
    traces = tuple(zip(specs, (trace for _, trace in results)))
    return build_report(map_name, rows, traces)


def _mean_std(values):
    if not values:
        return None, None
    array = np.asarray(values, dtype=float)
    return float(array.mean()), float(array.std(ddof=1)) if len(array) > 1 else 0.0


def aggregate_rows(map_name, rows):
    groups = {}
    for row in rows:
        groups.setdefault((row.variant, row.metric), []).append(row)
    aggregates = []
    for (variant, metric), group in sorted(groups.items(), key=lambda item: (item[0][0].index, item[0][1].index)):
        converged = [row for row in group if row.report.converged]
        eta, eta_std = _mean_std([row.eta for row in converged])
        d, d_std = _mean_std([row.d for row in converged])
        e, e_std = _mean_std([row.e for row in converged])
        aggregates.append(
            AggregateRow(
                map=map_name,
                variant=variant,
                metric=metric,
                seeds=tuple(sorted(row.seed for row in group)),
                converged=len(converged),
                report=MetricsReport(eta, d, e),
                eta_std=eta_std,
                d_std=d_std,
                e_std=e_std,
                steps_total=float(np.mean([row.steps_total for row in group])),
            )
        )
    return aggregates


def _mean_report(rows):
    return MetricsReport(*(float(np.mean([getattr(row, name) for row in rows])) for name in ("eta", "d", "e")))


def comparison_rows(map_name, rows):
    """Relative improvement of every other (variant, metric) over variant a.

    Both sides are averaged over the same seeds: those on which variant a and
    the compared variant converged.
    """
    if not any(row.variant is Variant.A_BASELINE for row in rows):
        return []
    baseline = {row.seed: row for row in rows if row.variant is Variant.A_BASELINE and row.report.converged}
    groups = {}
    for row in rows:
        if row.variant is not Variant.A_BASELINE:
            groups.setdefault((row.variant, row.metric), []).append(row)

    j_rows = []
    for (variant, metric), group in sorted(groups.items(), key=lambda item: (item[0][0].index, item[0][1].index)):
        paired = [row for row in group if row.report.converged and row.seed in baseline]
        if not paired:
            log.warning("variant %s (%s) converged on no seed variant a converged on, skipped", variant, metric)
            continue
        if len(paired) < len(group):
            log.info("variant %s (%s) compared over %d of %d seeds", variant, metric, len(paired), len(group))
        try:
            components = j_components(_mean_report([baseline[row.seed] for row in paired]), _mean_report(paired))
        except GridDomainError as exc:
            log.warning("no comparison for variant %s (%s): %s", variant, metric, exc)
            continue
        j_rows.append(JRow(map_name, variant, metric, len(paired), *components))
    return j_rows


def build_report(map_name, rows, traces=()):
    rows = sorted(rows, key=lambda r: (r.variant.index, r.metric.index, r.seed))
    aggregates = aggregate_rows(map_name, rows)
    j_rows = comparison_rows(map_name, rows)
    return ComparisonReport(map_name, tuple(rows), tuple(aggregates), tuple(j_rows), tuple(traces))


def paired_eta_wins(report, variant, metric):
    """(wins, pairs): seeds on which `variant` reached eta strictly before variant a.

    A run that never converged counts as infinitely late.
    """
    baseline = {row.seed: row for row in report.rows if row.variant is Variant.A_BASELINE}
    wins = pairs = 0
    for row in report.rows:
        if row.variant != variant or row.metric != metric or row.seed not in baseline:
            continue
        pairs += 1
        mine = math.inf if row.eta is None else row.eta
        theirs = math.inf if baseline[row.seed].eta is None else baseline[row.seed].eta
        wins += mine < theirs
    return wins, pairs


# --- Output ---


def _fmt(value):
    if value is None:
        return NOT_CONVERGED
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(value)
    return format(float(value), ".10g")


def emit_csv(report, path):
    """results.csv: one row per run, followed by an agg=1 row per (variant, metric).

    Aggregate rows hold means and sample standard deviations over the
    converged seeds; the std columns stay blank on per-run rows.
    """
    with open(path, "w", encoding="utf-8", newline="") as outfile:
        writer = csv.writer(outfile)
        writer.writerow(RESULT_COLUMNS)
        for agg in report.aggregates:
            for row in report.rows:
                if row.variant == agg.variant and row.metric == agg.metric:
                    metrics = [_fmt(row.eta), _fmt(row.d), _fmt(row.e), row.steps_total]
                    writer.writerow([row.map, row.variant, row.metric, row.seed, *metrics, "", "", "", 0])
            metrics = [_fmt(agg.report.eta), _fmt(agg.report.d), _fmt(agg.report.e)]
            stds = [_fmt(agg.eta_std), _fmt(agg.d_std), _fmt(agg.e_std)]
            writer.writerow([agg.map, agg.variant, agg.metric, "", *metrics, _fmt(agg.steps_total), *stds, 1])


def emit_learning_curves(traces, path, window=10, signal="greedy"):
    """curves.csv in long format; rolling_std is blank until a full window exists."""
    if not traces:
        raise GridDomainError("no traces to write", name="traces")
    with open(path, "w", encoding="utf-8", newline="") as outfile:
        writer = csv.writer(outfile)
        writer.writerow(CURVE_COLUMNS)
        for spec, trace in traces:
            values = trace.returns(signal)
            stds = rolling_std(values, window) if len(values) >= window else []
            for episode, value in enumerate(values):
                std = _fmt(stds[episode - window + 1]) if episode >= window - 1 else ""
                writer.writerow([spec.variant, spec.metric, spec.seed, episode, _fmt(value), std])


def emit_comparison(report, path):
    with open(path, "w", encoding="utf-8", newline="") as outfile:
        writer = csv.writer(outfile)
        writer.writerow(COMPARISON_COLUMNS)
        for row in report.j_rows:
            values = (row.eta_pct, row.d_pct, row.e_pct, row.j)
            writer.writerow([row.map, row.variant, row.metric, row.pairs, *map(_fmt, values)])


def emit_paco_history(traces, path):
    with open(path, "w", encoding="utf-8", newline="") as outfile:
        writer = csv.writer(outfile)
        writer.writerow(PACO_COLUMNS)
        for spec, trace in traces:
            if trace.paco is None:
                continue
            for it in trace.paco.history:
                writer.writerow(
                    [spec.variant, spec.metric, spec.seed, it.iteration, _fmt(it.best_length),
                     _fmt(it.mean_length), it.reached, _fmt(it.volatility)]
                )


def write_outputs(report, out_dir, cfg):
    """Write every artifact of a batch into `out_dir` and return the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "results.csv", out_dir / "comparison.csv"]
    emit_csv(report, written[0])
    emit_comparison(report, written[1])
    if report.traces:
        written.append(out_dir / "curves.csv")
        emit_learning_curves(report.traces, written[-1], cfg.convergence.window, cfg.convergence.signal)
        if any(trace.paco is not None for _, trace in report.traces):
            written.append(out_dir / "paco_history.csv")
            emit_paco_history(report.traces, written[-1])
    written.append(out_dir / "paper_reference.csv")
    shutil.copyfile(REFERENCE_TABLE, written[-1])
    return written


# --- Re-aggregation ---


def _parse_cell(text, kind):
    return None if text == NOT_CONVERGED else kind(text)


def load_results_csv(path):
    """Per-run rows of a results.csv (aggregate rows are recomputed, not read)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as infile:
        reader = csv.DictReader(infile)
        if reader.fieldnames != RESULT_COLUMNS:
            raise GridDomainError(f"unexpected header in {path}: {reader.fieldnames}", name="header")
        for line in reader:
            if line["agg"] != "0":
                continue
            rows.append(
                RunRow(
                    map=line["map"],
                    variant=Variant(line["variant"]),
                    metric=Metric(line["metric"]),
                    seed=int(line["seed"]),
                    eta=_parse_cell(line["eta"], int),
                    d=_parse_cell(line["d"], int),
                    e=_parse_cell(line["e"], float),
                    steps_total=int(line["steps_total"]),
                )
            )
    return rows


def report_from_dir(in_dir):
    rows = load_results_csv(Path(in_dir) / "results.csv")
    map_name = rows[0].map if rows else ""
    return build_report(map_name, rows)


def read_reference_table(path=REFERENCE_TABLE):
    """Lines of the reference table exactly as stored."""
    return Path(path).read_text(encoding="utf-8").splitlines()


def _cell(value, digits=2):
    return NOT_CONVERGED if value is None else f"{value:.{digits}f}"


def format_report(report):
    """Aggregate table (means and sample sd over converged seeds) and the J table."""
    lines = [f"Map {report.map_name}", ""]
    lines.append(
        f"{'variant':<8}{'metric':<11}{'seeds':>6}{'conv':>6}"
        f"{'eta':>10}{'sd':>9}{'d':>10}{'sd':>9}{'e':>14}{'sd':>10}"
    )
    for agg in report.aggregates:
        lines.append(
            f"{agg.variant.value:<8}{agg.metric.value:<11}{len(agg.seeds):>6}{agg.converged:>6}"
            f"{_cell(agg.report.eta):>10}{_cell(agg.eta_std):>9}{_cell(agg.report.d):>10}{_cell(agg.d_std):>9}"
            f"{_cell(agg.report.e, 4):>14}{_cell(agg.e_std, 4):>10}"
        )
    if report.j_rows:
        lines += ["", "Improvement over variant a (%), over seeds both converged on"]
        lines.append(f"{'variant':<8}{'metric':<11}{'pairs':>6}{'eta':>9}{'d':>9}{'e':>9}{'J':>9}")
        for row in report.j_rows:
            cells = "".join(f"{value:>9.2f}" for value in (row.eta_pct, row.d_pct, row.e_pct, row.j))
            lines.append(f"{row.variant.value:<8}{row.metric.value:<11}{row.pairs:>6}{cells}")
        if any(row.variant.uses_uch for row in report.j_rows):
            lines += ["", UCH_SCALE_NOTE]
    return "\n".join(lines)
