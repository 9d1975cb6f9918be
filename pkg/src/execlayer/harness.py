"""Scenario specs, replication runner, sweeps, config loading and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .domain import DISTURBED_OUTCOMES, Architecture
from .layer import simulate
from .metrics import METRICS, AggregateSummary, RunResult, run_metrics
from .plant import LAG_PRESETS, SimConfig
from .policies import get_policy

log = logging.getLogger(__name__)

LAG_ORDER = ("low", "medium", "high")
ARCHS = ("direct", "layer")
POLICIES = ("edd", "spt")
COMPOSITION_COLUMNS = tuple(f"n_{o.value}" for o in DISTURBED_OUTCOMES)
PER_RUN_COLUMNS = ("seed", "rep", "lag", "arch", "policy") + METRICS + COMPOSITION_COLUMNS
SUMMARY_COLUMNS = (
    "lag", "policy", "metric",
    "direct_mean", "direct_hw95", "direct_n",
    "layer_mean", "layer_hw95", "layer_n",
)
SIM_FIELDS = {f.name for f in dataclasses.fields(SimConfig)} - {"lag_dist", "seed"}


class ConfigError(ValueError):
    pass


def resolve_lag(lag) -> tuple[str, tuple[float, float]]:
    """Return ``(label, (low, high))`` for a preset name or explicit bounds."""
    if isinstance(lag, str):
        if lag in LAG_PRESETS:
            return lag, LAG_PRESETS[lag]
        parts = lag.split(",")
        if len(parts) != 2:
            raise ValueError(f"lag must be one of {LAG_ORDER} or 'low,high', got {lag!r}")
        lag = parts
    lo, hi = (float(x) for x in lag)
    if lo > hi or lo < 0:
        raise ValueError(f"invalid lag bounds ({lo}, {hi})")
    for name, bounds in LAG_PRESETS.items():
        if bounds == (lo, hi):
            return name, bounds
    return f"{lo:g}-{hi:g}", (lo, hi)


@dataclass(frozen=True)
class ScenarioSpec:
    lag: str = "medium"
    lag_bounds: tuple[float, float] = LAG_PRESETS["medium"]
    architecture: str = "layer"
    policy: str = "edd"
    replications: int = 50
    base_seed: int = 0
    overrides: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.architecture not in ARCHS:
            raise ValueError(f"architecture must be one of {ARCHS}")
        get_policy(self.policy)
        unknown = {k for k, _ in self.overrides} - SIM_FIELDS
        if unknown:
            raise ValueError(f"unknown simulation settings: {sorted(unknown)}")
        self.sim_config(0)

    @classmethod
    def make(cls, lag="medium", architecture="layer", policy="edd", replications=50,
             base_seed=0, **overrides) -> ScenarioSpec:
        label, bounds = resolve_lag(lag)
        norm = tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in overrides.items()))
        return cls(label, bounds, architecture, policy, replications, base_seed, norm)

    def seed_for(self, rep: int) -> int:
        return self.base_seed ^ rep

    def sim_config(self, rep: int) -> SimConfig:
        return SimConfig(lag_dist=self.lag_bounds, seed=self.seed_for(rep), **dict(self.overrides))

    @property
    def arch(self) -> Architecture:
        return Architecture(self.architecture)


def default_grid(replications: int = 50, base_seed: int = 0, **overrides) -> list[ScenarioSpec]:
    return [
        ScenarioSpec.make(lag, arch, policy, replications, base_seed, **overrides)
        for lag in LAG_ORDER
        for arch in ARCHS
        for policy in POLICIES
    ]


def run_replication(spec: ScenarioSpec, rep_index: int, keep_trace: bool = False) -> tuple[RunResult, list | None]:
    config = spec.sim_config(rep_index)
    out = simulate(config, get_policy(spec.policy), spec.arch, keep_trace=keep_trace)
    result = RunResult(
        records=tuple(out.records),
        completed_jobs=tuple(out.completed_jobs),
        seed=config.seed,
        lag=spec.lag,
        policy=spec.policy,
        architecture=spec.arch,
        horizon=config.horizon,
        warmup_cutoff=config.warmup_cutoff,
        rep=rep_index,
        max_processing=config.processing_dist[1],
    )
    return result, out.trace


def _lag_rank(label: str):
    return (LAG_ORDER.index(label), "") if label in LAG_ORDER else (len(LAG_ORDER), label)


def sort_key(spec: ScenarioSpec, rep: int):
    return (_lag_rank(spec.lag), ARCHS.index(spec.architecture), POLICIES.index(spec.policy), rep)


def _format(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def per_run_row(result: RunResult) -> dict:
    row = {
        "seed": result.seed,
        "rep": result.rep,
        "lag": result.lag,
        "arch": result.architecture.value,
        "policy": result.policy,
    }
    row.update(run_metrics(result))
    return row


def log_name(result: RunResult) -> str:
    return f"{result.seed}_{result.architecture.value}_{result.policy}_{result.lag}"


def _task(args):
    spec, rep, keep_trace = args
    try:
        return run_replication(spec, rep, keep_trace)
    except Exception as exc:
        raise RuntimeError(
            f"replication failed: lag={spec.lag} arch={spec.architecture} "
            f"policy={spec.policy} rep={rep} seed={spec.seed_for(rep)}: {exc}"
        ) from exc


def iter_results(grid: list[ScenarioSpec], workers: int = 1, keep_trace: bool = False):
    tasks = sorted(
        ((spec, rep, keep_trace) for spec in grid for rep in range(spec.replications)),
        key=lambda t: sort_key(t[0], t[1]),
    )
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            # map preserves task order, so output order is independent of scheduling
            yield from pool.map(_task, tasks, chunksize=4)
    else:
        yield from map(_task, tasks)


def summarize(rows: list[dict]) -> list[dict]:
    """One row per (lag, policy, metric) with both architectures side by side, pooled too."""
    groups: dict[tuple[str, str, str], list[dict]] = {}
    for row in rows:
        for policy in (row["policy"], "pooled"):
            groups.setdefault((row["lag"], policy, row["arch"]), []).append(row)
    lags = sorted({r["lag"] for r in rows}, key=_lag_rank)
    policies = [p for p in POLICIES + ("pooled",) if any(k[1] == p for k in groups)]
    out = []
    for lag in lags:
        for policy in policies:
            cells = {a: groups.get((lag, policy, a), []) for a in ARCHS}
            if not any(cells.values()):
                continue
            summaries = {
                a: AggregateSummary.from_rows(rs, METRICS + COMPOSITION_COLUMNS) if len(rs) >= 2 else None
                for a, rs in cells.items()
            }
            for metric in METRICS + COMPOSITION_COLUMNS:
                line = {"lag": lag, "policy": policy, "metric": metric}
                for a in ARCHS:
                    s = summaries[a]
                    line[f"{a}_mean"] = s.metrics[metric].mean if s else ""
                    line[f"{a}_hw95"] = s.metrics[metric].half_width_95 if s else ""
                    line[f"{a}_n"] = len(cells[a])
                out.append(line)
    return out


def _write_csv(path: Path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_format(row[c]) for c in columns])
    path.write_text(buf.getvalue())


def read_per_run(path: Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(PER_RUN_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            for c in METRICS + COMPOSITION_COLUMNS:
                row[c] = float(row[c])
            rows.append(row)
    return rows


def write_summary(rows: list[dict], path: Path) -> list[dict]:
    summary = summarize(rows)
    _write_csv(path, SUMMARY_COLUMNS, summary)
    return summary


@dataclass
class SweepOutput:
    out_dir: Path
    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    results: list[RunResult] = field(default_factory=list)


def run_sweep(
    grid: list[ScenarioSpec],
    out_dir: Path | str,
    workers: int = 1,
    emit_divergence_log: bool = False,
    emit_trace: bool = False,
    keep_results: bool = False,
) -> SweepOutput:
    """Run every replication of every spec and write per-run and summary CSVs.

    Files are staged in a temporary directory and moved into place only when
    the whole sweep succeeded.
    """
    if not grid:
        raise ValueError("empty scenario grid")
    seen = {}
    for spec in grid:
        for rep in range(spec.replications):
            key = (spec.lag, spec.architecture, spec.policy, spec.seed_for(rep))
            if key in seen and seen[key] != spec:
                # rows and log files are keyed by these fields only
                raise ValueError(f"scenarios collide on lag/arch/policy/seed {key}")
            seen[key] = spec
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".sweep-", dir=out_dir))
    output = SweepOutput(out_dir)
    try:
        logs = staging / "logs"
        if emit_divergence_log or emit_trace:
            logs.mkdir()
        for result, trace in iter_results(grid, workers, keep_trace=emit_trace):
            output.rows.append(per_run_row(result))
            if keep_results:
                output.results.append(result)
            name = log_name(result)
            if emit_divergence_log:
                lines = [r.to_log_line(result.policy, result.seed) for r in result.records]
                (logs / f"{name}.jsonl").write_text("".join(line + "\n" for line in lines))
            if emit_trace:
                (logs / f"{name}.trace.jsonl").write_text("".join(e.trace_line() + "\n" for e in trace))
        _write_csv(staging / "per_run.csv", PER_RUN_COLUMNS, output.rows)
        output.summary = write_summary(output.rows, staging / "summary.csv")
        for item in staging.iterdir():
            target = out_dir / item.name
            if target.is_dir():
                shutil.rmtree(target)
            elif target.exists():
                target.unlink()
            item.rename(target)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return output


# config files

SPEC_KEYS = {"lag", "arch", "policy", "replications", "base_seed"}
TOP_KEYS = {"defaults", "scenarios"}


def _key_lines(node) -> dict[str, int]:
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _spec_from_mapping(entry: dict, lines: dict[str, int], where: str) -> ScenarioSpec:
    for key in entry:
        if key not in SPEC_KEYS and key not in SIM_FIELDS:
            raise ConfigError(f"{where}, line {lines.get(key, '?')}: unknown key {key!r}")
    kw = dict(entry)
    try:
        return ScenarioSpec.make(
            lag=kw.pop("lag", "medium"),
            architecture=kw.pop("arch", "layer"),
            policy=kw.pop("policy", "edd"),
            replications=kw.pop("replications", 50),
            base_seed=kw.pop("base_seed", 0),
            **kw,
        )
    except (TypeError, ValueError) as exc:
        line = min(lines.values()) if lines else "?"
        raise ConfigError(f"{where}, line {line}: {exc}") from exc


def load_config(path: Path | str) -> list[ScenarioSpec]:
    """Parse a YAML scenario file.

    Top level may hold ``defaults`` (applied to every scenario) and
    ``scenarios`` (a list of mappings). An empty file yields one default
    scenario.
    """
    path = Path(path)
    text = path.read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from exc
    if data is None:
        return [ScenarioSpec.make()]
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    top_lines = _key_lines(node)
    for key in data:
        if key not in TOP_KEYS:
            raise ConfigError(f"{path}, line {top_lines.get(key, '?')}: unknown key {key!r}")
    nodes = {k.value: v for k, v in node.value}
    defaults = data.get("defaults") or {}
    if not isinstance(defaults, dict):
        raise ConfigError(f"{path}, line {top_lines['defaults']}: 'defaults' must be a mapping")
    default_lines = _key_lines(nodes.get("defaults"))
    scenarios = data.get("scenarios")
    if scenarios is None:
        return [_spec_from_mapping(defaults, default_lines, f"{path}: defaults")]
    if not isinstance(scenarios, list) or not scenarios:
        raise ConfigError(f"{path}, line {top_lines['scenarios']}: 'scenarios' must be a non-empty list")
    specs = []
    for i, (entry, entry_node) in enumerate(zip(scenarios, nodes["scenarios"].value)):
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}, line {entry_node.start_mark.line + 1}: scenario {i} must be a mapping")
        lines = {**default_lines, **_key_lines(entry_node)}
        specs.append(_spec_from_mapping({**defaults, **entry}, lines, f"{path}: scenario {i}"))
    return specs
