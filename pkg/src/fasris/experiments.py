"""Experiment configuration, deterministic orchestration and CSV/plot emission.

Every trial draws one channel realization from ``SeedSequence([seed, trial, 0])``
and every scheme gets its own stream ``SeedSequence([seed, trial, 1, j])`` where
``j`` is the scheme's position in :data:`fasris.baselines.SCHEMES`.  Streams do
not depend on the sweep value, the scheme selection or the worker count, so
schemes and sweep points are compared on common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import multiprocessing
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import conic_solver as cs
from .baselines import SCHEMES, SchemeResult, fpa_ports
from .geometry_channel import ConfigError, DomainError, ScenarioConfig, sample_scenario
from .sca_core import InfeasibleError, SCAError, SCAParams, run_sca

log = logging.getLogger(__name__)

CSV_HEADER = ("sweep", "scheme", "rate_mean", "rate_std", "outage", "iters", "seconds", "failures")
KINDS = ("sweep", "convergence")
FIXED_ARRAY_SCHEMES = ("fpa", "traditional-as")
SOLVER_FAILURES = (SCAError, InfeasibleError, cs.SolverError, DomainError, np.linalg.LinAlgError,
                   FloatingPointError)


@dataclass(frozen=True)
class SweepSpec:
    variable: str | None = None
    values: tuple = ()

    def points(self) -> tuple:
        return self.values if self.variable else (None,)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    kind: str = "sweep"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    optimizer: SCAParams = field(default_factory=SCAParams)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    schemes: tuple[str, ...] = ("proposed", "random", "traditional-as", "fpa")
    trials: int = 200
    seed: int = 0
    outage_threshold_bps_hz: float = 4.0
    random_draws: int = 100
    record_timing: bool = False
    max_failure_fraction: float = 0.1

    def point(self, value) -> tuple[ScenarioConfig, SCAParams]:
        """Scenario and optimizer settings at one sweep value."""
        var = self.sweep.variable
        if var is None:
            return self.scenario, self.optimizer
        if var in _field_types(ScenarioConfig):
            return replace(self.scenario, **{var: value}), self.optimizer
        return self.scenario, replace(self.optimizer, **{var: value})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"] = {"variable": self.sweep.variable, "values": list(self.sweep.values)}
        d["schemes"] = list(self.schemes)
        return d


@dataclass(frozen=True)
class ResultRow:
    sweep: Any
    scheme: str
    rate_mean: float
    rate_std: float
    outage: float
    iters: float
    seconds: float
    failures: int

    def cells(self) -> list[str]:
        return [_fmt(self.sweep), self.scheme, *(_fmt(x) for x in
                (self.rate_mean, self.rate_std, self.outage, self.iters, self.seconds, self.failures))]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return f"{float(x):.6g}"


# ---------------------------------------------------------------------------
# loading and validation


def _field_types(cls) -> dict[str, str]:
    return {f.name: str(f.type) for f in fields(cls)}


def _coerce(name: str, value, typ: str, problems: list[str]):
    """Check a JSON value against a dataclass field annotation."""
    optional = typ.endswith("| None")
    base = typ.split("|")[0].strip()
    if value is None and optional:
        return None
    if base == "bool":
        if isinstance(value, bool):
            return value
    elif base == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    elif base == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if math.isfinite(value):
                return float(value)
    elif base == "str":
        if isinstance(value, str):
            return value
    else:
        return value
    problems.append(f"{name}: expected {typ}, got {value!r}")
    return None


def _block(cls, data, prefix: str, problems: list[str], base=None):
    base = base if base is not None else cls()
    if data is None:
        return base
    if not isinstance(data, dict):
        problems.append(f"{prefix}: expected a JSON object")
        return base
    types = _field_types(cls)
    kw = {}
    for key, value in data.items():
        if key not in types:
            problems.append(f"{prefix}.{key}: unknown field")
            continue
        n = len(problems)
        v = _coerce(f"{prefix}.{key}", value, types[key], problems)
        if len(problems) == n:
            kw[key] = v
    return replace(base, **kw)


def _top_level(data: dict, problems: list[str], base: ExperimentConfig) -> ExperimentConfig:
    types = _field_types(ExperimentConfig)
    kw: dict[str, Any] = {}
    for key, value in data.items():
        if key not in types:
            problems.append(f"{key}: unknown field")
        elif key == "scenario":
            kw[key] = _block(ScenarioConfig, value, "scenario", problems, base.scenario)
        elif key == "optimizer":
            kw[key] = _block(SCAParams, value, "optimizer", problems, base.optimizer)
        elif key == "sweep":
            kw[key] = _sweep(value, problems, base.sweep)
        elif key == "schemes":
            if isinstance(value, list) and all(isinstance(s, str) for s in value):
                kw[key] = tuple(value)
            else:
                problems.append("schemes: expected a list of scheme names")
        else:
            n = len(problems)
            v = _coerce(key, value, types[key], problems)
            if len(problems) == n:
                kw[key] = v
    return replace(base, **kw)


def _sweep(value, problems: list[str], base: SweepSpec) -> SweepSpec:
    if value is None:
        return SweepSpec()
    if not isinstance(value, dict):
        problems.append("sweep: expected a JSON object")
        return base
    extra = set(value) - {"variable", "values"}
    for key in sorted(extra):
        problems.append(f"sweep.{key}: unknown field")
    var = value.get("variable", base.variable)
    vals = value.get("values", list(base.values))
    if var is not None and not isinstance(var, str):
        problems.append("sweep.variable: expected a field name")
        var = None
    if not isinstance(vals, list):
        problems.append("sweep.values: expected a list")
        vals = []
    return SweepSpec(var, tuple(vals))


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Every problem with ``cfg``; empty when it can be run."""
    problems = [f"scenario: {e}" for e in cfg.scenario.validate()]
    problems += [f"optimizer: {e}" for e in cfg.optimizer.validate()]
    if cfg.kind not in KINDS:
        problems.append(f"kind: must be one of {', '.join(KINDS)}")
    if cfg.trials < 1:
        problems.append("trials: must be >= 1")
    if cfg.seed < 0:
        problems.append("seed: must be >= 0")
    if cfg.random_draws < 1:
        problems.append("random_draws: must be >= 1")
    if not 0.0 <= cfg.max_failure_fraction <= 1.0:
        problems.append("max_failure_fraction: must lie in [0, 1]")
    if cfg.outage_threshold_bps_hz < 0:
        problems.append("outage_threshold_bps_hz: must be >= 0")
    if not cfg.schemes:
        problems.append("schemes: at least one scheme is required")
    for s in cfg.schemes:
        if s not in SCHEMES:
            problems.append(f"schemes: unknown scheme {s!r} (known: {', '.join(SCHEMES)})")
    if len(set(cfg.schemes)) != len(cfg.schemes):
        problems.append("schemes: duplicate entries")
    if cfg.kind == "convergence" and tuple(cfg.schemes) != ("proposed",):
        problems.append("schemes: the convergence experiment traces the proposed scheme only")

    var = cfg.sweep.variable
    scen_t, opt_t = _field_types(ScenarioConfig), _field_types(SCAParams)
    if var is not None:
        if var not in scen_t and var not in opt_t:
            problems.append(f"sweep.variable: {var!r} is not a scenario or optimizer field")
            return problems
        if not cfg.sweep.values:
            problems.append("sweep.values: at least one value is required")
        typ = scen_t.get(var) or opt_t[var]
        points = []
        for v in cfg.sweep.values:
            sub: list[str] = []
            cv = _coerce(f"sweep value {v!r} for {var}", v, typ, sub)
            if sub:
                problems += sub
                continue
            points.append(cv)
            scen, opt = cfg.point(cv)
            problems += [f"sweep {var}={v}: scenario: {e}" for e in scen.validate()]
            problems += [f"sweep {var}={v}: optimizer: {e}" for e in opt.validate()]
    else:
        points = [None]
    for v in points:
        scen, _ = cfg.point(v)
        if scen.validate() or not any(s in FIXED_ARRAY_SCHEMES for s in cfg.schemes):
            continue
        try:
            fpa_ports(scen.layout)
        except ConfigError as exc:
            where = f"sweep {var}={v}: " if var else ""
            problems.append(f"{where}schemes fpa/traditional-as: {exc.problems[0]}")
    return problems


def parse_config(data, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build and validate a config from a decoded JSON object, applied over ``base``."""
    base = base or ExperimentConfig()
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    problems: list[str] = []
    cfg = _top_level(data, problems, base)
    if cfg.sweep.variable is not None:
        typ = {**_field_types(SCAParams), **_field_types(ScenarioConfig)}.get(cfg.sweep.variable)
        if typ is not None:
            sub: list[str] = []
            vals = tuple(_coerce("sweep", v, typ, sub) for v in cfg.sweep.values)
            if not sub:
                cfg = replace(cfg, sweep=SweepSpec(cfg.sweep.variable, vals))
    problems += validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return parse_config(data, base)


def dump_config(cfg: ExperimentConfig, path: str | Path | None = None) -> str:
    text = json.dumps(cfg.to_dict(), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# built-in experiments

_POWERS = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
# power sweeps vary the serving BS only; co-channel BSs stay at the default budget
_FIXED_INTERFERERS = ScenarioConfig(interferer_power_dbm=10.0)

BUILTIN: dict[str, ExperimentConfig] = {
    "outage-vs-power": ExperimentConfig(
        name="outage-vs-power", scenario=replace(_FIXED_INTERFERERS, active_ports=6),
        sweep=SweepSpec("p_max_dbm", _POWERS),
        schemes=("proposed", "fas-no-ris", "traditional-as", "random")),
    "convergence": ExperimentConfig(
        name="convergence", kind="convergence", scenario=_FIXED_INTERFERERS,
        sweep=SweepSpec("p_max_dbm", (10.0, 20.0)), schemes=("proposed",)),
    "rate-vs-ports": ExperimentConfig(
        name="rate-vs-ports", sweep=SweepSpec("active_ports", (2, 4, 6, 8))),
    "rate-vs-meta-atoms": ExperimentConfig(
        name="rate-vs-meta-atoms", sweep=SweepSpec("ris_elements", (25, 50, 100, 200))),
    "rate-vs-width": ExperimentConfig(
        name="rate-vs-width", sweep=SweepSpec("fas_width", (1.0, 2.0, 3.0, 4.0, 5.0)),
        schemes=("proposed", "random", "fas-no-ris")),
    "rate-vs-power": ExperimentConfig(
        name="rate-vs-power", scenario=_FIXED_INTERFERERS, sweep=SweepSpec("p_max_dbm", _POWERS),
        schemes=("proposed", "fas-no-ris", "traditional-as", "random", "fpa")),
}


def builtin(name: str) -> ExperimentConfig:
    try:
        return BUILTIN[name]
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r} (known: {', '.join(BUILTIN)})") from None


# ---------------------------------------------------------------------------
# running

_SCHEME_INDEX = {name: j for j, name in enumerate(SCHEMES)}


def channel_seed(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, trial, 0])


def scheme_seed(seed: int, trial: int, scheme: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, trial, 1, _SCHEME_INDEX[scheme]])


@dataclass(frozen=True)
class TrialOutcome:
    point: int
    trial: int
    scheme: str
    rate: float
    iterations: int
    seconds: float
    failed: bool
    trace: tuple[float, ...] = ()


def _run_scheme(name: str, channels, params: SCAParams, rng, draws: int) -> SchemeResult:
    fn = SCHEMES[name]
    if name in ("random", "fpa"):
        return fn(channels, params, rng, draws=draws)
    return fn(channels, params, rng)


def run_trial(cfg: ExperimentConfig, point: int, trial: int) -> list[TrialOutcome]:
    """All schemes of ``cfg`` on one channel realization."""
    scen, params = cfg.point(cfg.sweep.points()[point])
    channels = sample_scenario(scen, np.random.default_rng(channel_seed(cfg.seed, trial)))
    out = []
    for name in cfg.schemes:
        rng = np.random.default_rng(scheme_seed(cfg.seed, trial, name))
        try:
            if cfg.kind == "convergence":
                res = run_sca(channels, params, rng=rng)
                out.append(TrialOutcome(point, trial, name, res.rate, res.iterations, 0.0, False,
                                        tuple(res.rate_history)))
                continue
            r = _run_scheme(name, channels, params, rng, cfg.random_draws)
            out.append(TrialOutcome(point, trial, name, r.rate, r.iterations,
                                    r.seconds if cfg.record_timing else 0.0, False))
        except SOLVER_FAILURES as exc:
            log.warning("trial %d, %s: %s: %s", trial, name, type(exc).__name__, exc)
            out.append(TrialOutcome(point, trial, name, math.nan, 0, 0.0, True))
    return out


def _task(args) -> list[TrialOutcome]:
    cfg, point, trial = args
    return run_trial(cfg, point, trial)


def collect_outcomes(cfg: ExperimentConfig, workers: int = 1) -> list[TrialOutcome]:
    """Run every (sweep point, trial) pair and return outcomes in canonical order."""
    tasks = [(cfg, p, t) for p in range(len(cfg.sweep.points())) for t in range(cfg.trials)]
    outcomes: list[TrialOutcome] = []
    total = len(tasks)
    step = max(1, total // 20)

    def progress(done: int):
        if done % step == 0 or done == total:
            log.info("%s: %d/%d trials", cfg.name, done, total)

    if workers <= 1:
        for i, t in enumerate(tasks, 1):
            outcomes += _task(t)
            progress(i)
    else:
        with multiprocessing.get_context().Pool(workers) as pool:
            for i, res in enumerate(pool.imap_unordered(_task, tasks), 1):
                outcomes += res
                progress(i)
    order = {s: j for j, s in enumerate(cfg.schemes)}
    outcomes.sort(key=lambda o: (o.point, order[o.scheme], o.trial))
    return outcomes


def _summary(sweep, scheme: str, rates: np.ndarray, iters: np.ndarray, secs: np.ndarray,
             failures: int, threshold: float) -> ResultRow:
    if rates.size == 0:
        return ResultRow(sweep, scheme, math.nan, math.nan, math.nan, math.nan, 0.0, failures)
    return ResultRow(sweep, scheme, float(rates.mean()), float(rates.std()),
                     float(np.mean(rates < threshold)), float(iters.mean()), float(secs.mean()),
                     failures)


def summarize(cfg: ExperimentConfig, outcomes: Iterable[TrialOutcome]) -> list[ResultRow]:
    points = cfg.sweep.points()
    groups: dict[tuple[int, str], list[TrialOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.point, o.scheme), []).append(o)
    rows = []
    for p, value in enumerate(points):
        for scheme in cfg.schemes:
            group = groups.get((p, scheme), [])
            ok = [o for o in group if not o.failed]
            fails = len(group) - len(ok)
            if cfg.kind == "convergence":
                rows += _convergence_rows(cfg, value, scheme, ok, fails)
                continue
            rows.append(_summary(value, scheme, np.array([o.rate for o in ok]),
                                 np.array([o.iterations for o in ok]),
                                 np.array([o.seconds for o in ok]), fails,
                                 cfg.outage_threshold_bps_hz))
    return rows


def _convergence_rows(cfg, value, scheme, ok, fails) -> list[ResultRow]:
    """One row per iteration index; traces that stopped early are held at their last value."""
    label = scheme if cfg.sweep.variable is None else f"{scheme}@{cfg.sweep.variable}={_fmt(value)}"
    if not ok:
        return [ResultRow(0, label, math.nan, math.nan, math.nan, 0, 0.0, fails)]
    length = max(len(o.trace) for o in ok)
    traces = np.array([list(o.trace) + [o.trace[-1]] * (length - len(o.trace)) for o in ok])
    return [ResultRow(n, label, float(traces[:, n].mean()), float(traces[:, n].std()),
                      float(np.mean(traces[:, n] < cfg.outage_threshold_bps_hz)), n, 0.0, fails)
            for n in range(length)]


def failure_budget_exceeded(cfg: ExperimentConfig, rows: Iterable[ResultRow]) -> bool:
    return any(r.failures > cfg.max_failure_fraction * cfg.trials for r in rows)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[ResultRow]:
    return summarize(cfg, collect_outcomes(cfg, workers))


# ---------------------------------------------------------------------------
# emission


def format_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def emit_csv(rows: Iterable[ResultRow], path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(format_csv(rows))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc


_PLOT_TEMPLATE = """\
# gnuplot script; run with: gnuplot {script}
# reads {csv} (columns: {header})
set datafile separator ","
set key autotitle columnhead
set key outside right
set grid
set terminal pngcairo size 900,600
schemes = "{schemes}"

set output "{stem}_rate.png"
set xlabel "{xlabel}"
set ylabel "achievable rate (bps/Hz)"
plot for [s in schemes] "{csv}" using 1:(strcol(2) eq s ? $3 : NaN) \\
    with linespoints title s

set output "{stem}_outage.png"
set ylabel "outage probability"
set logscale y
plot for [s in schemes] "{csv}" using 1:(strcol(2) eq s ? $5 : NaN) \\
    with linespoints title s
"""


def emit_plot_script(rows: Iterable[ResultRow], path: str | Path, csv_path: str | Path,
                     xlabel: str = "sweep") -> None:
    """Write a standalone gnuplot script that plots ``csv_path``.

    Scheme labels must not contain spaces (gnuplot word lists split on them).
    """
    path = Path(path)
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    text = _PLOT_TEMPLATE.format(script=path.name, csv=Path(csv_path).name,
                                 header=",".join(CSV_HEADER), schemes=" ".join(schemes),
                                 stem=Path(csv_path).stem, xlabel=xlabel)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write plot script to {path}: {exc.strerror or exc}") from exc
