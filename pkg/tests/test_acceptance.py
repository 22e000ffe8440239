"""End-to-end acceptance checks, numbered 01-12.

Each test prints a single PASS/FAIL line with the measured quantities so a
full run doubles as a results table. Everything is seeded and deterministic:
experiment runs derive their per-run streams from master seed 0 through the
harness splitting rule, and surface constants (zeta_hat, L2_hat) are measured
on a fixed 64-point probe set. The heavyweight pipelines (budget-100 study,
cost-ratio sweep, adaptivity study) are shared module-scoped fixtures.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they land;
the whole file takes roughly half an hour on one core.
"""

import csv
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from duelopt.accounting import COMPARISON, LABEL, CostModel
from duelopt.direct import Box, maximize, maximize_constrained
from duelopt.gp import GPPosterior
from duelopt.harness import (ExperimentConfig, PolicySpec, run_experiment,
                             sweep_cost_ratio, verify_oracle)
from duelopt.info_gain import BetaSchedule, InfoGainCurve
from duelopt.kernels import Kernel
from duelopt.oracles import (borda_truth, gap_ratio_bounds, make_oracle,
                             max_gap_deviation)
from duelopt.policies import PolicyConfig, run

from _reference import ref_best_subset_info_gain, ref_posterior

# Shared experiment constants. ETA is 1% of the currin output range (the
# label-noise half-width the studies run at); the gamma values are the
# comparison-exploration thresholds used by the three studies that involve
# the two-phase policy. All were fixed ahead of time by calibration runs and
# are ordinary tunables of the method, not quantities under test.
ETA = 0.126
STUDY_GAMMA = 0.1          # budget-100 ordering study and adaptivity study
SWEEP_GAMMA = 0.3          # cost-ratio sweep (threshold sized for the
                           # smallest affordable comparison count, ratio 2)
CLAIM_GAMMA = 0.35         # optimizer-retention / localization runs
ACQ = 64
N_SEEDS = 20


def _report(num: int, name: str, ok: bool, detail: str):
    line = f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {name}: {detail}"
    print("\n" + line, flush=True)
    assert ok, line


def _read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        assert first.startswith("#schema="), first
        return list(csv.DictReader(fh))


def _agg_mean(rows, policy, ratio=None):
    picked = [r for r in rows if r["policy"] == policy
              and (ratio is None
                   or math.isclose(float(r["cost_ratio"]), ratio, rel_tol=1e-9))]
    assert len(picked) == 1, (policy, ratio, picked)
    return float(picked[0]["mean_regret"])


def _per_run(steps_rows):
    """Group per-step rows into {(policy, budget, seed): (count, spent)}."""
    stats = {}
    for row in steps_rows:
        key = (row["policy"], float(row["budget"]), int(row["seed"]))
        count, _ = stats.get(key, (0, 0.0))
        stats[key] = (count + 1, float(row["cum_cost"]))
    return stats


# ---------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="module")
def currin():
    return make_oracle("currin", eta=ETA)


@pytest.fixture(scope="module")
def borda(currin):
    return borda_truth(currin)


@pytest.fixture(scope="module")
def constants(currin, borda):
    X = currin.box.sample(np.random.default_rng(0), 64)
    zeta_hat = max_gap_deviation(currin, X)
    l1_hat, l2_hat = gap_ratio_bounds(currin, borda, X)
    return {"zeta": zeta_hat, "l1": l1_hat, "l2": l2_hat}


def _study_config(constants):
    return ExperimentConfig(
        benchmark="currin",
        eta=ETA,
        seeds=N_SEEDS,
        master_seed=0,
        budgets=(100.0,),
        label_cost=1.0,
        comparison_cost=0.1,
        policies=(
            PolicySpec("gp_ucb", PolicyConfig(policy="gp_ucb", acq_evals=ACQ)),
            PolicySpec("comp_gp_ucb", PolicyConfig(
                policy="comp_gp_ucb", gamma=STUDY_GAMMA,
                zeta=constants["zeta"], l2=constants["l2"], acq_evals=ACQ)),
            PolicySpec("comparison_only", PolicyConfig(
                policy="comparison_only", warm_comp_fraction=1.0,
                acq_evals=ACQ)),
        ))


@pytest.fixture(scope="module")
def budget_study(constants, tmp_path_factory):
    out = tmp_path_factory.mktemp("budget_study")
    t0 = time.perf_counter()
    steps_path, agg_path = run_experiment(_study_config(constants), out_dir=out)
    elapsed = time.perf_counter() - t0
    return {"config": _study_config(constants), "steps": steps_path,
            "agg": agg_path, "elapsed": elapsed}


@pytest.fixture(scope="module")
def claim_runs(currin, constants):
    """Twenty seeded two-phase runs with theoretical confidence schedules,
    recording per-step feasibility of the true optimizer."""
    cfg = PolicyConfig(
        policy="comp_gp_ucb", gamma=CLAIM_GAMMA,
        zeta=constants["zeta"], l2=constants["l2"],
        beta_comp=BetaSchedule("theoretical", B=1.0, delta=0.05),
        beta_label=BetaSchedule("theoretical", B=1.0, delta=0.05),
        acq_evals=ACQ, info_grid_size=128,
        probe_point=currin.truth.x)
    model = CostModel(1.0, 0.1, 100.0)
    results = []
    for si in range(N_SEEDS):
        seed = np.random.SeedSequence(0, spawn_key=(0, 0, si))
        results.append(run(cfg, currin, model, seed=seed))
    return results


@pytest.fixture(scope="module")
def convergence_study(tmp_path_factory):
    """Comparison-only regime on the bias-free 1-d benchmark: 500
    comparisons per run at budget 50, comparison cost 0.1."""
    config = ExperimentConfig(
        benchmark="synthetic1d",
        seeds=N_SEEDS,
        master_seed=0,
        budgets=(50.0,),
        label_cost=1.0,
        comparison_cost=0.1,
        policies=(PolicySpec("comparison_only", PolicyConfig(
            policy="comparison_only", gamma=0.0, zeta=0.0,
            warm_budget=2.0, warm_comp_fraction=1.0, acq_evals=32)),))
    out = tmp_path_factory.mktemp("convergence")
    t0 = time.perf_counter()
    steps_path, _ = run_experiment(config, out_dir=out)
    elapsed = time.perf_counter() - t0
    return {"steps": steps_path, "elapsed": elapsed}


@pytest.fixture(scope="module")
def ratio_study(constants, tmp_path_factory):
    config = ExperimentConfig(
        benchmark="currin",
        eta=ETA,
        seeds=N_SEEDS,
        master_seed=0,
        budgets=(100.0,),
        label_cost=1.0,
        comparison_cost=0.1,
        policies=(
            PolicySpec("gp_ucb", PolicyConfig(policy="gp_ucb", acq_evals=ACQ)),
            PolicySpec("comp_gp_ucb", PolicyConfig(
                policy="comp_gp_ucb", gamma=SWEEP_GAMMA,
                zeta=constants["zeta"], l2=constants["l2"], acq_evals=ACQ)),
        ))
    out = tmp_path_factory.mktemp("ratio_study")
    agg_path = sweep_cost_ratio(config, ratios=(1.0, 2.0, 5.0, 10.0),
                                out_dir=out)
    return {"agg": agg_path, "out": out}


@pytest.fixture(scope="module")
def adaptive_study(constants, tmp_path_factory):
    config = ExperimentConfig(
        benchmark="currin",
        eta=ETA,
        seeds=N_SEEDS,
        master_seed=0,
        budgets=(100.0,),
        label_cost=1.0,
        comparison_cost=0.1,
        policies=(PolicySpec("comp_gp_ucb_adaptive", PolicyConfig(
            policy="comp_gp_ucb_adaptive", gamma=STUDY_GAMMA,
            zeta0=constants["zeta"] / 8, zeta_max=8 * constants["zeta"],
            l2=constants["l2"], acq_evals=ACQ)),))
    out = tmp_path_factory.mktemp("adaptive")
    steps_path, agg_path = run_experiment(config, out_dir=out)
    return {"steps": steps_path, "agg": agg_path}


# ---------------------------------------------------------------------------
# criteria


def test_01_incremental_gp_matches_dense_solve():
    rng = np.random.default_rng(20240601)
    families = ("linear", "se", "matern")
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        d = int(rng.choice([1, 2, 8]))
        n = int(rng.integers(1, 31))
        family = families[i % 3]
        params = {"lengthscale": float(rng.uniform(0.3, 2.0)),
                  "scale": float(rng.uniform(0.5, 2.0))}
        if family == "matern":
            params["nu"] = float(rng.choice([0.5, 1.5, 2.5]))
        noise = float(rng.uniform(0.05, 0.5))
        X = rng.uniform(0.0, 1.0, size=(n, d))
        y = rng.normal(size=n)
        Xq = rng.uniform(0.0, 1.0, size=(5, d))

        gp = GPPosterior.empty(Kernel(family, **params), noise)
        for j in range(n):
            gp = gp.append(X[j], float(y[j]))
        mu, var = gp.query_many(Xq)
        mu_ref, var_ref = ref_posterior(family, X, y, noise, Xq, **params)
        rel_mu = np.max(np.abs(mu - mu_ref) / np.maximum(1.0, np.abs(mu_ref)))
        rel_var = np.max(np.abs(var - var_ref) / np.maximum(1.0, np.abs(var_ref)))
        worst = max(worst, float(rel_mu), float(rel_var))
    elapsed = time.perf_counter() - t0
    _report(1, "incremental posterior vs dense solve",
            worst <= 1e-8 and elapsed < 10.0,
            f"max rel err {worst:.3e} over 50 configs in {elapsed:.1f}s")


def test_02_greedy_info_gain_guarantee_and_monotonicity():
    rng = np.random.default_rng(20240602)
    ratio_floor = 1.0 - 1.0 / math.e
    worst_ratio = math.inf
    for _ in range(100):
        kernel = Kernel("se", lengthscale=float(rng.uniform(0.2, 1.0)))
        noise = float(rng.uniform(0.3, 1.0))
        cand = rng.uniform(0.0, 1.0, size=(4, 2))
        greedy = InfoGainCurve(kernel, cand, noise).value(2)
        best = ref_best_subset_info_gain("se", cand, 2, noise,
                                         lengthscale=kernel.lengthscale)
        worst_ratio = min(worst_ratio, greedy / best)

    axis = np.linspace(0.0, 1.0, 8)
    grid = np.array([[a, b] for a in axis for b in axis])
    curve = InfoGainCurve(Kernel("se", lengthscale=0.3), grid, 0.5)
    values = np.array([curve.value(n) for n in range(2, 65)])
    nondecreasing = bool(np.all(np.diff(values) >= -1e-12))
    per_step = values / np.arange(2, 65)
    averaged_down = bool(np.all(np.diff(per_step) <= 1e-12))

    _report(2, "greedy info gain near-optimality",
            worst_ratio >= ratio_floor - 1e-12 and nondecreasing and averaged_down,
            f"min greedy/exhaustive {worst_ratio:.4f} (floor {ratio_floor:.4f}); "
            f"curve monotone {nondecreasing}, per-step average non-increasing "
            f"{averaged_down}")


def test_03_duel_frequency_matches_quadrature():
    t0 = time.perf_counter()
    report = verify_oracle("currin", link="logistic", n_points=20,
                           n_draws=100_000, seed=0)
    elapsed = time.perf_counter() - t0
    _report(3, "duel frequency vs quadrature win probability",
            report.ok and elapsed < 60.0,
            f"{report.points_within}/{report.n_points} points within 3 SE "
            f"(max {report.max_se_multiples:.2f} SE) in {elapsed:.1f}s; "
            f"zeta_hat={report.zeta_hat:.4f} L2_hat={report.l2_hat:.4f}")


def test_04_true_optimizer_stays_feasible(claim_runs):
    feasible = 0
    total = 0
    for res in claim_runs:
        d = res.diagnostics
        for phase, probe in zip(d["phase"], d["phi_probe"]):
            if phase == 2:
                total += 1
                if probe >= 0.0:
                    feasible += 1
    frac = feasible / total if total else 0.0
    _report(4, "optimizer retention under theoretical schedules",
            total > 0 and frac >= 0.95,
            f"phi(x*) >= 0 in {feasible}/{total} phase-2 steps ({frac:.1%})")


def test_05_label_queries_stay_near_optimal(claim_runs, borda, constants):
    bound = borda.optimum.value - 4 * CLAIM_GAMMA - constants["l2"] * constants["zeta"]
    qualifying = 0
    violations = 0
    labels = 0
    worst_margin = math.inf
    for res in claim_runs:
        d = res.diagnostics
        entries = list(res.trace)
        fr = borda.value(np.array([e.x for e in entries]))
        held = True
        for i, (phase, mu, sd, beta) in enumerate(zip(d["phase"], d["mu_comp"],
                                                      d["sd_comp"],
                                                      d["beta_comp"])):
            if phase == 0 or math.isnan(mu):
                continue
            if abs(fr[i] - mu) > beta * sd:
                held = False
                break
        if not held:
            continue
        qualifying += 1
        for i, (entry, phase) in enumerate(zip(entries, d["phase"])):
            if phase == 2 and entry.kind == LABEL:
                labels += 1
                margin = float(fr[i]) - bound
                worst_margin = min(worst_margin, margin)
                if margin < 0.0:
                    violations += 1
    _report(5, "label-query localization where confidence held",
            qualifying > 0 and labels > 0 and violations == 0,
            f"{qualifying}/{len(claim_runs)} runs qualified; "
            f"{labels} labels all above f_r* - 4*gamma - L2*zeta = {bound:.3f} "
            f"(tightest margin {worst_margin:.3f})")


def test_06_comparison_only_converges_on_bias_free_benchmark(convergence_study):
    rows = _read_csv(convergence_study["steps"])
    finals = {}
    warm_end = {}
    nonincreasing = True
    last_best = {}
    for row in rows:
        seed = int(row["seed"])
        t = int(row["t"])
        best = float(row["best_regret"])
        if seed in last_best and best > last_best[seed] + 1e-15:
            nonincreasing = False
        last_best[seed] = best
        if t == 20:
            warm_end[seed] = best
        finals[seed] = best
    med_warm = float(np.median(list(warm_end.values())))
    med_final = float(np.median(list(finals.values())))
    ratio = med_final / med_warm
    elapsed = convergence_study["elapsed"]
    _report(6, "comparison-only convergence after 500 duels",
            len(finals) == N_SEEDS and ratio < 0.10 and nonincreasing
            and elapsed < 120.0,
            f"median regret {med_warm:.5f} (warm end) -> {med_final:.6f} "
            f"(final), ratio {ratio:.4f}; traces non-increasing; "
            f"{elapsed:.0f}s")


def test_07_budget_100_policy_ordering(budget_study):
    rows = _read_csv(budget_study["agg"])
    comp = _agg_mean(rows, "comp_gp_ucb")
    gp = _agg_mean(rows, "gp_ucb")
    comp_only = _agg_mean(rows, "comparison_only")
    elapsed = budget_study["elapsed"]
    _report(7, "mean simple regret ordering at budget 100",
            comp < gp and comp < comp_only and elapsed < 600.0,
            f"comp_gp_ucb {comp:.5f} < gp_ucb {gp:.5f} and "
            f"< comparison_only {comp_only:.5f}; {elapsed:.0f}s")


def test_08_cost_ratio_trend(ratio_study):
    rows = _read_csv(ratio_study["agg"])
    asserted = []
    for ratio in (2.0, 5.0, 10.0):
        comp = _agg_mean(rows, "comp_gp_ucb", ratio=ratio)
        gp = _agg_mean(rows, "gp_ucb", ratio=ratio)
        asserted.append((ratio, comp, gp))
    comp1 = _agg_mean(rows, "comp_gp_ucb", ratio=1.0)
    gp1 = _agg_mean(rows, "gp_ucb", ratio=1.0)
    ok = all(comp <= gp for _, comp, gp in asserted)
    detail = ", ".join(f"r={r:g}: {comp:.5f} vs {gp:.5f}"
                       for r, comp, gp in asserted)
    _report(8, "comp_gp_ucb <= gp_ucb at cost ratios 2/5/10",
            ok,
            f"{detail}; ratio 1 (descriptive only): comp {comp1:.5f} "
            f"vs gp {gp1:.5f}")


def test_09_bias_adaptivity_within_factor_two(adaptive_study, budget_study):
    adaptive = _agg_mean(_read_csv(adaptive_study["agg"]), "comp_gp_ucb_adaptive")
    known = _agg_mean(_read_csv(budget_study["agg"]), "comp_gp_ucb")
    _report(9, "adaptive bias schedule vs known bias",
            adaptive <= 2.0 * known,
            f"adaptive mean {adaptive:.5f} <= 2 x known-bias mean {known:.5f}")


def test_10_budget_conservation_across_studies(convergence_study, budget_study,
                                               ratio_study, adaptive_study):
    sources = [
        (convergence_study["steps"], CostModel(1.0, 0.1, 50.0)),
        (budget_study["steps"], CostModel(1.0, 0.1, 100.0)),
        (adaptive_study["steps"], CostModel(1.0, 0.1, 100.0)),
    ]
    for ratio in (1.0, 2.0, 5.0, 10.0):
        path = ratio_study["out"] / f"ratio_{ratio}" / "steps.csv"
        sources.append((path, CostModel(1.0, 1.0 / ratio, 100.0)))
    runs = 0
    worst_spend = -math.inf
    for path, model in sources:
        lo, hi = model.n_bounds()
        stats = _per_run(_read_csv(path))
        for (policy, budget, seed), (count, spent) in stats.items():
            assert math.isclose(budget, model.budget, rel_tol=1e-12), (path, budget)
            assert spent <= model.budget + 1e-9, (path, policy, seed, spent)
            assert lo - 1 <= count <= hi, (path, policy, seed, count, lo, hi)
            worst_spend = max(worst_spend, spent - model.budget)
            runs += 1
    _report(10, "budget conservation and query-count bounds",
            runs > 0,
            f"{runs} runs checked; max overspend {worst_spend:.2e}; "
            f"counts within [floor(B/l)-1, ceil(B/c)] everywhere")


def test_11_global_optimizer_recovers_analytic_optima():
    box2 = Box(np.zeros(2), np.ones(2))
    box1 = Box(np.zeros(1), np.ones(1))

    res_const = maximize(lambda x: 3.0, box2, 50)
    ok_const = math.isclose(res_const.value, 3.0, rel_tol=0, abs_tol=1e-12)

    c = np.array([0.3, 0.7])
    res_quad = maximize(lambda x: -float(np.sum((x - c) ** 2)), box2, 500)
    err_quad = float(np.max(np.abs(res_quad.x - c)))

    def wavy(x):
        xv = float(np.ravel(x)[0])
        return math.sin(10 * xv) + xv
    res_wavy = maximize(wavy, box1, 300)
    grid = np.linspace(0.0, 1.0, 100_000)
    fine = float(np.max(np.sin(10 * grid) + grid))
    err_wavy = fine - res_wavy.value

    res_con = maximize_constrained(lambda x: float(x[0] + x[1]),
                                   lambda x: 0.5 - float(x[0]), box2, 800)
    err_con = float(np.max(np.abs(res_con.x - np.array([0.5, 1.0]))))

    _report(11, "rectangle-division search recovers analytic optima",
            ok_const and err_quad <= 1e-2 and err_wavy <= 1e-3
            and res_con.feasible and err_con <= 2e-2,
            f"constant exact; quadratic argmax err {err_quad:.4f} <= 1e-2; "
            f"1-d value gap {err_wavy:.2e} <= 1e-3; constrained boundary "
            f"err {err_con:.4f} <= 2e-2")


def test_12_repeat_pipeline_is_byte_identical(budget_study, constants,
                                              tmp_path_factory):
    out = tmp_path_factory.mktemp("budget_study_repeat")
    steps_path, agg_path = run_experiment(_study_config(constants), out_dir=out)
    same_steps = steps_path.read_bytes() == budget_study["steps"].read_bytes()
    same_agg = agg_path.read_bytes() == budget_study["agg"].read_bytes()
    _report(12, "repeated pipeline determinism",
            same_steps and same_agg,
            f"steps.csv identical: {same_steps}; aggregate.csv identical: "
            f"{same_agg}")
