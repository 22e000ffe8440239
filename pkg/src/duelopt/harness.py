"""Experiment harness: config files, multi-seed sweeps, CSV output.

A config file (YAML) names one benchmark, a list of policies with their
settings, a budget sweep, and a cost model. ``run_experiment`` executes
every (policy, budget, seed) cell once, writes one per-step CSV plus one
aggregate CSV, and is byte-deterministic given the master seed: per-run
generators come from ``SeedSequence(master_seed, spawn_key=(policy_idx,
budget_idx, seed_idx))``, so no stream depends on execution order and a
worker pool changes nothing in the output.

CSV files start with a ``#schema=`` comment line naming the column
layout version, then a plain header row.
"""

from __future__ import annotations

import csv
import math
import pathlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .accounting import CostModel
from .benchmarks import benchmark_box
from .info_gain import BetaSchedule
from .kernels import Kernel
from .oracles import borda_truth, gap_ratio_bounds, make_oracle, max_gap_deviation
from .policies import POLICIES, PolicyConfig, run

STEPS_SCHEMA = "duelopt-steps-v1"
AGGREGATE_SCHEMA = "duelopt-aggregate-v1"

_DEFAULT_BUDGETS = (10.0, 25.0, 50.0, 75.0, 100.0)
_BENCHMARKS = {
    "currin": "currin",
    "currinexp": "currin",
    "borehole": "borehole",
    "synthetic1d": "synthetic1d",
    "synthetic_1d": "synthetic1d",
}
_LINKS = ("logistic", "probit", "linear")
_MISSING = object()


class ConfigError(ValueError):
    """A config failed validation; the message starts with the key path."""


def _join(path: str, key) -> str:
    key = f"[{key}]" if isinstance(key, int) else f".{key}" if path else str(key)
    return path + key


class _Section:
    """One mapping in the config tree. Keys are consumed with ``take``;
    ``close`` rejects whatever is left, so typos surface with their path."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a mapping")
        self.data = dict(data)
        self.path = path

    def take(self, key: str, default=_MISSING):
        if key in self.data:
            return self.data.pop(key)
        if default is _MISSING:
            raise ConfigError(f"{_join(self.path, key)}: required key is missing")
        return default

    def close(self):
        for stray in sorted(self.data):
            raise ConfigError(f"{_join(self.path, stray)}: unknown key")


def _number(v, path, minimum=None, positive=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    v = float(v)
    if positive and v <= 0.0:
        raise ConfigError(f"{path}: must be positive, got {v}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {v}")
    return v


def _integer(v, path, minimum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {v}")
    return v


def _string(v, path, choices=None) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(f"{path}: {v!r} is not one of {tuple(choices)}")
    return v


def _boolean(v, path) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected true/false, got {v!r}")
    return v


def _parse_kernel(v, path) -> Kernel | None:
    if v is None:
        return None
    sec = _Section(v, path)
    family = _string(sec.take("family"), _join(path, "family"),
                     choices=("linear", "se", "matern"))
    kwargs = {}
    for key in ("lengthscale", "scale", "nu"):
        raw = sec.take(key, None)
        if raw is not None:
            kwargs[key] = _number(raw, _join(path, key), positive=True)
    sec.close()
    return Kernel(family, **kwargs)


def _parse_beta(v, path) -> BetaSchedule:
    if isinstance(v, str):
        if v not in ("heuristic", "theoretical"):
            raise ConfigError(f"{path}: {v!r} is not one of ('heuristic', 'theoretical')")
        return BetaSchedule(v)
    sec = _Section(v, path)
    mode = _string(sec.take("mode"), _join(path, "mode"),
                   choices=("heuristic", "theoretical"))
    kwargs = {}
    for key in ("B", "delta", "epsilon"):
        raw = sec.take(key, None)
        if raw is not None:
            kwargs[key] = _number(raw, _join(path, key), positive=True)
    sec.close()
    return BetaSchedule(mode, **kwargs)


@dataclass
class PolicySpec:
    """A policy plus the label naming it in output rows."""

    label: str
    config: PolicyConfig


def _parse_policy(entry, path: str) -> PolicySpec:
    sec = _Section(entry, path)
    name = _string(sec.take("name"), _join(path, "name"), choices=POLICIES)
    label = _string(sec.take("label", name), _join(path, "label"))
    if not label:
        raise ConfigError(f"{_join(path, 'label')}: must be nonempty")
    kwargs: dict = {}
    kernel_both = sec.take("kernel", None)
    for key in ("kernel_comp", "kernel_label"):
        raw = sec.take(key, kernel_both)
        kwargs[key] = _parse_kernel(raw, _join(path, key))
    beta_both = sec.take("beta", None)
    for key in ("beta_comp", "beta_label"):
        raw = sec.take(key, beta_both)
        if raw is not None:
            kwargs[key] = _parse_beta(raw, _join(path, key))
    for key in ("gamma", "zeta"):
        raw = sec.take(key, None)
        if raw is not None:
            kwargs[key] = _number(raw, _join(path, key), minimum=0.0)
    for key in ("l2", "zeta0", "zeta_max", "noise_comp", "warm_budget"):
        raw = sec.take(key, None)
        if raw is not None:
            kwargs[key] = _number(raw, _join(path, key), positive=True)
    raw = sec.take("noise_label", None)
    if raw is not None:
        kwargs["noise_label"] = _number(raw, _join(path, "noise_label"), positive=True)
    raw = sec.take("warm_comp_fraction", None)
    if raw is not None:
        kwargs["warm_comp_fraction"] = _number(raw, _join(path, "warm_comp_fraction"),
                                               minimum=0.0)
    for key, lo in (("acq_evals", 1), ("refit_every_comp", 1),
                    ("refit_every_label", 1), ("fit_budget", 1),
                    ("fit_subsample", 2), ("info_grid_size", 2)):
        raw = sec.take(key, None)
        if raw is not None:
            kwargs[key] = _integer(raw, _join(path, key), minimum=lo)
    raw = sec.take("refresh_reference", None)
    if raw is not None:
        kwargs["refresh_reference"] = _boolean(raw, _join(path, "refresh_reference"))
    raw = sec.take("probe_point", None)
    if raw is not None:
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{_join(path, 'probe_point')}: expected a list of numbers")
        kwargs["probe_point"] = [
            _number(v, _join(_join(path, "probe_point"), i)) for i, v in enumerate(raw)
        ]
    sec.close()
    try:
        config = PolicyConfig(policy=name, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return PolicySpec(label=label, config=config)


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; see load_config for the file schema."""

    benchmark: str
    policies: list[PolicySpec]
    link: str = "logistic"
    temperature: float | None = None
    eta: float | None = None
    seeds: int = 20
    master_seed: int = 0
    budgets: tuple[float, ...] = _DEFAULT_BUDGETS
    label_cost: float = 1.0
    comparison_cost: float = 0.1
    allow_equal_costs: bool = False
    ratios: tuple[float, ...] | None = None
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.benchmark not in set(_BENCHMARKS.values()):
            raise ConfigError(f"benchmark: unknown benchmark {self.benchmark!r}")
        if not self.policies:
            raise ConfigError("policies: at least one policy is required")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigError("policies: labels must be unique across entries")
        if self.seeds < 1:
            raise ConfigError("seeds: must be >= 1")
        self.budgets = tuple(float(b) for b in self.budgets)
        if not self.budgets:
            raise ConfigError("budgets: must be nonempty")
        if self.comparison_cost > self.label_cost:
            raise ConfigError(
                "cost.comparison_cost: comparisons must not cost more than labels")
        if self.comparison_cost == self.label_cost and not self.allow_equal_costs:
            raise ConfigError(
                "cost.comparison_cost: equal costs require allow_equal_costs: true")
        for i, b in enumerate(self.budgets):
            if b <= 0.0:
                raise ConfigError(f"budgets[{i}]: must be positive, got {b}")
        if self.ratios is not None:
            self.ratios = tuple(float(r) for r in self.ratios)
            for i, r in enumerate(self.ratios):
                if r < 1.0:
                    raise ConfigError(f"ratios[{i}]: must be >= 1, got {r}")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")

    def cost_model(self, budget: float) -> CostModel:
        return CostModel(self.label_cost, self.comparison_cost, budget)

    def to_dict(self) -> dict:
        def kernel_dict(k):
            if k is None:
                return None
            return {"family": k.family, "lengthscale": float(k.lengthscale),
                    "scale": float(k.scale), "nu": float(k.nu)}

        def beta_dict(b):
            return {"mode": b.mode, "B": float(b.B), "delta": float(b.delta),
                    "epsilon": float(b.epsilon)}

        policies = []
        for spec in self.policies:
            c = spec.config
            probe = None if c.probe_point is None else [float(v) for v in c.probe_point]
            policies.append({
                "name": c.policy,
                "label": spec.label,
                "kernel_comp": kernel_dict(c.kernel_comp),
                "kernel_label": kernel_dict(c.kernel_label),
                "beta_comp": beta_dict(c.beta_comp),
                "beta_label": beta_dict(c.beta_label),
                "gamma": float(c.gamma),
                "zeta": float(c.zeta),
                "l2": float(c.l2),
                "zeta0": float(c.zeta0),
                "zeta_max": float(c.zeta_max),
                "noise_comp": float(c.noise_comp),
                "noise_label": None if c.noise_label is None else float(c.noise_label),
                "acq_evals": c.acq_evals,
                "warm_budget": float(c.warm_budget),
                "warm_comp_fraction": None if c.warm_comp_fraction is None
                                      else float(c.warm_comp_fraction),
                "refit_every_comp": c.refit_every_comp,
                "refit_every_label": c.refit_every_label,
                "fit_budget": c.fit_budget,
                "fit_subsample": c.fit_subsample,
                "info_grid_size": c.info_grid_size,
                "refresh_reference": c.refresh_reference,
                "probe_point": probe,
            })
        return {
            "benchmark": self.benchmark,
            "link": self.link,
            "temperature": self.temperature,
            "eta": self.eta,
            "seeds": self.seeds,
            "master_seed": self.master_seed,
            "budgets": list(self.budgets),
            "cost": {"label_cost": self.label_cost,
                     "comparison_cost": self.comparison_cost},
            "allow_equal_costs": self.allow_equal_costs,
            "ratios": None if self.ratios is None else list(self.ratios),
            "out": self.out,
            "workers": self.workers,
            "policies": policies,
        }


def parse_config(data) -> ExperimentConfig:
    sec = _Section(data, "")
    bench_raw = _string(sec.take("benchmark"), "benchmark")
    bench = _BENCHMARKS.get(bench_raw.lower())
    if bench is None:
        raise ConfigError(
            f"benchmark: {bench_raw!r} is not one of {tuple(sorted(set(_BENCHMARKS.values())))}")
    entries = sec.take("policies")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("policies: expected a nonempty list")
    policies = [_parse_policy(e, _join("policies", i)) for i, e in enumerate(entries)]
    kwargs: dict = {}
    raw = sec.take("link", None)
    if raw is not None:
        kwargs["link"] = _string(raw, "link", choices=_LINKS)
    raw = sec.take("temperature", None)
    if raw is not None:
        kwargs["temperature"] = _number(raw, "temperature", positive=True)
    raw = sec.take("eta", None)
    if raw is not None:
        kwargs["eta"] = _number(raw, "eta", minimum=0.0)
    raw = sec.take("seeds", None)
    if raw is not None:
        kwargs["seeds"] = _integer(raw, "seeds", minimum=1)
    raw = sec.take("master_seed", None)
    if raw is not None:
        kwargs["master_seed"] = _integer(raw, "master_seed", minimum=0)
    raw = sec.take("budgets", None)
    if raw is not None:
        if not isinstance(raw, list) or not raw:
            raise ConfigError("budgets: expected a nonempty list")
        kwargs["budgets"] = tuple(
            _number(b, _join("budgets", i), positive=True) for i, b in enumerate(raw))
    raw = sec.take("cost", None)
    if raw is not None:
        cost = _Section(raw, "cost")
        kwargs["label_cost"] = _number(cost.take("label_cost"),
                                       "cost.label_cost", positive=True)
        kwargs["comparison_cost"] = _number(cost.take("comparison_cost"),
                                            "cost.comparison_cost", positive=True)
        cost.close()
    raw = sec.take("allow_equal_costs", None)
    if raw is not None:
        kwargs["allow_equal_costs"] = _boolean(raw, "allow_equal_costs")
    raw = sec.take("ratios", None)
    if raw is not None:
        if not isinstance(raw, list) or not raw:
            raise ConfigError("ratios: expected a nonempty list")
        kwargs["ratios"] = tuple(
            _number(r, _join("ratios", i), positive=True) for i, r in enumerate(raw))
    raw = sec.take("out", None)
    if raw is not None:
        kwargs["out"] = _string(raw, "out")
    raw = sec.take("workers", None)
    if raw is not None:
        kwargs["workers"] = _integer(raw, "workers", minimum=1)
    sec.close()
    return ExperimentConfig(benchmark=bench, policies=policies, **kwargs)


def load_config(path) -> ExperimentConfig:
    p = pathlib.Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    return parse_config(data)


def save_config(config: ExperimentConfig, path) -> None:
    text = yaml.safe_dump(config.to_dict(), sort_keys=False)
    pathlib.Path(path).write_text(text)


def run_seed(master_seed: int, policy_idx: int, budget_idx: int,
             seed_idx: int) -> np.random.SeedSequence:
    """The documented per-run stream splitting rule."""
    return np.random.SeedSequence(master_seed,
                                  spawn_key=(policy_idx, budget_idx, seed_idx))


@dataclass(frozen=True)
class AggregateRow:
    benchmark: str
    policy: str
    budget: float
    cost_ratio: float
    mean_regret: float
    stderr_regret: float
    n_seeds: int


@dataclass(frozen=True)
class _RunJob:
    benchmark: str
    link: str
    temperature: float | None
    eta: float | None
    policy_label: str
    policy_config: PolicyConfig
    label_cost: float
    comparison_cost: float
    budget: float
    master_seed: int
    policy_idx: int
    budget_idx: int
    seed_idx: int


def _execute_run(job: _RunJob):
    """One run; built standalone so a worker process can execute it."""
    oracle = make_oracle(job.benchmark, job.link, job.temperature, job.eta)
    model = CostModel(job.label_cost, job.comparison_cost, job.budget)
    seed = run_seed(job.master_seed, job.policy_idx, job.budget_idx, job.seed_idx)
    result = run(job.policy_config, oracle, model, seed)
    rows = []
    cum = 0.0
    for e in result.trace:
        cum += e.cost
        rows.append((e.t, e.kind, cum, tuple(float(v) for v in e.x),
                     e.regret, e.best_regret))
    return rows, float(result.trace.best_regret)


def _execute_jobs(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_execute_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves job order, so output stays deterministic
        return list(pool.map(_execute_run, jobs))


def _build_jobs(config: ExperimentConfig, master_seed: int):
    jobs = []
    for pi, spec in enumerate(config.policies):
        for bi, budget in enumerate(config.budgets):
            for si in range(config.seeds):
                jobs.append(_RunJob(
                    benchmark=config.benchmark, link=config.link,
                    temperature=config.temperature, eta=config.eta,
                    policy_label=spec.label, policy_config=spec.config,
                    label_cost=config.label_cost,
                    comparison_cost=config.comparison_cost,
                    budget=budget, master_seed=master_seed,
                    policy_idx=pi, budget_idx=bi, seed_idx=si))
    return jobs


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _check_budgets(config: ExperimentConfig) -> None:
    """Every (budget, policy) cell must leave room beyond the warm start.
    Checked here, not at parse time, so the default budget grid stays
    loadable alongside the default warm budget."""
    for i, b in enumerate(config.budgets):
        for spec in config.policies:
            if b <= spec.config.warm_budget:
                raise ConfigError(
                    f"budgets[{i}]: budget {b} must exceed the warm-start "
                    f"budget {spec.config.warm_budget} of policy {spec.label!r}")


def _aggregate(config: ExperimentConfig, jobs, results) -> list[AggregateRow]:
    finals: dict[tuple[int, int], list[float]] = {}
    for job, (_, final) in zip(jobs, results):
        finals.setdefault((job.policy_idx, job.budget_idx), []).append(final)
    ratio = config.label_cost / config.comparison_cost
    rows = []
    for pi, spec in enumerate(config.policies):
        for bi, budget in enumerate(config.budgets):
            vals = np.asarray(finals[(pi, bi)], dtype=float)
            mean = float(np.mean(vals))
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            rows.append(AggregateRow(
                benchmark=config.benchmark, policy=spec.label, budget=budget,
                cost_ratio=ratio, mean_regret=mean,
                stderr_regret=std / math.sqrt(len(vals)), n_seeds=len(vals)))
    return rows


def _write_aggregate(fh, rows) -> None:
    fh.write(f"#schema={AGGREGATE_SCHEMA}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["benchmark", "policy", "budget", "cost_ratio",
                     "mean_regret", "stderr_regret", "n_seeds"])
    for r in rows:
        writer.writerow([r.benchmark, r.policy, _fmt(r.budget), _fmt(r.cost_ratio),
                         _fmt(r.mean_regret), _fmt(r.stderr_regret), str(r.n_seeds)])


def _run_cells(config: ExperimentConfig, outp: pathlib.Path, workers: int,
               master: int):
    _check_budgets(config)
    outp.mkdir(parents=True, exist_ok=True)
    d = benchmark_box(config.benchmark).d
    steps_path = outp / "steps.csv"
    agg_path = outp / "aggregate.csv"
    jobs = _build_jobs(config, master)
    # open both outputs up front so an unwritable path fails before any run
    with open(steps_path, "w", newline="") as fs, open(agg_path, "w", newline="") as fa:
        fs.write(f"#schema={STEPS_SCHEMA}\n")
        writer = csv.writer(fs, lineterminator="\n")
        writer.writerow(["benchmark", "policy", "budget", "seed", "t", "kind",
                         "cum_cost"] + [f"x{j}" for j in range(d)]
                        + ["regret", "best_regret"])
        results = _execute_jobs(jobs, workers)
        for job, (rows, _) in zip(jobs, results):
            head = [job.benchmark, job.policy_label, _fmt(job.budget),
                    str(job.seed_idx)]
            for t, kind, cum, x, regret, best in rows:
                writer.writerow(head + [str(t), kind, _fmt(cum)]
                                + [_fmt(v) for v in x]
                                + [_fmt(regret), _fmt(best)])
        agg_rows = _aggregate(config, jobs, results)
        _write_aggregate(fa, agg_rows)
    return steps_path, agg_path, agg_rows


def run_experiment(config: ExperimentConfig, out_dir=None, workers=None,
                   master_seed=None):
    """Run the full (policy x budget x seed) grid; returns the two CSV paths."""
    out = out_dir if out_dir is not None else config.out
    if out is None:
        raise ConfigError("out: no output directory (pass --out or set 'out')")
    workers = config.workers if workers is None else int(workers)
    master = config.master_seed if master_seed is None else int(master_seed)
    steps_path, agg_path, _ = _run_cells(config, pathlib.Path(out), workers, master)
    return steps_path, agg_path


def sweep_cost_ratio(config: ExperimentConfig, ratios=None, out_dir=None,
                     workers=None, master_seed=None):
    """Run the experiment once per label/comparison cost ratio (full per-step
    and aggregate CSVs land in ratio_<r> subdirectories) and emit a combined
    aggregate CSV with one row per (policy, ratio). Seed streams are shared
    across ratios, so ratio curves are paired over the same randomness."""
    if ratios is None:
        ratios = config.ratios
    if not ratios:
        raise ConfigError("ratios: no ratio list (pass --ratios or set 'ratios')")
    ratios = tuple(float(r) for r in ratios)
    for i, r in enumerate(ratios):
        if r < 1.0:
            raise ConfigError(f"ratios[{i}]: must be >= 1, got {r}")
    if config.label_cost != 1.0:
        raise ConfigError("cost.label_cost: the ratio sweep fixes label_cost at 1")
    if len(config.budgets) != 1:
        raise ConfigError("budgets: the ratio sweep needs exactly one budget")
    _check_budgets(config)
    out = out_dir if out_dir is not None else config.out
    if out is None:
        raise ConfigError("out: no output directory (pass --out or set 'out')")
    outp = pathlib.Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    workers = config.workers if workers is None else int(workers)
    master = config.master_seed if master_seed is None else int(master_seed)
    agg_path = outp / "ratio_aggregate.csv"
    with open(agg_path, "w", newline="") as fa:
        all_rows = []
        for ratio in ratios:
            cfg = replace(config, comparison_cost=1.0 / ratio,
                          allow_equal_costs=True, ratios=None)
            _, _, rows = _run_cells(cfg, outp / f"ratio_{_fmt(ratio)}",
                                    workers, master)
            all_rows.extend(rows)
        _write_aggregate(fa, all_rows)
    return agg_path


@dataclass(frozen=True)
class OracleReport:
    """Empirical surface constants plus the duel-frequency check."""

    benchmark: str
    link: str
    zeta_hat: float
    l1_hat: float
    l2_hat: float
    n_points: int
    n_draws: int
    max_se_multiples: float
    points_within: int

    @property
    def ok(self) -> bool:
        return self.points_within == self.n_points


def verify_oracle(benchmark: str, link: str = "logistic", n_points: int = 20,
                  n_draws: int = 100_000, seed: int = 0) -> OracleReport:
    """Measure the surface-mismatch and gap-ratio constants on random probe
    points and check that Monte-Carlo duel frequencies against uniform
    opponents match the quadrature win probability within 3 binomial
    standard errors at every probe point."""
    oracle = make_oracle(benchmark, link)
    rng = np.random.default_rng(seed)
    X = oracle.box.sample(rng, n_points)
    borda = borda_truth(oracle)
    zeta_hat = max_gap_deviation(oracle, X)
    l1_hat, l2_hat = gap_ratio_bounds(oracle, borda, X)
    fr = borda.value(X)
    worst = 0.0
    within = 0
    for i in range(n_points):
        opponents = oracle.box.sample(rng, n_draws)
        freq = float(np.mean(oracle.compare_batch(X[i], opponents, rng)))
        se = math.sqrt(max(fr[i] * (1.0 - fr[i]), 1e-12) / n_draws)
        dev = abs(freq - fr[i]) / se
        worst = max(worst, dev)
        within += dev <= 3.0
    return OracleReport(benchmark=oracle.name, link=link, zeta_hat=zeta_hat,
                        l1_hat=l1_hat, l2_hat=l2_hat, n_points=n_points,
                        n_draws=n_draws, max_se_multiples=worst,
                        points_within=within)
