"""Optimization policies mixing cheap pairwise comparisons with labels.

Four policies share one machinery:

- ``gp_ucb``: classic upper-confidence-bound search, labels only.
- ``comp_gp_ucb``: a comparison phase shrinks the comparison-GP width below
  ``gamma`` everywhere it matters, freezes a lower confidence bound on the
  best attainable win probability, then a label phase maximizes the label
  UCB restricted to points whose comparison UCB still clears that bound
  (minus slack ``l2 * zeta`` for the known surface mismatch). Points the
  comparison GP is still unsure about keep being dueled instead of labeled.
- ``comp_gp_ucb_adaptive``: same, but the mismatch bound is unknown and is
  doubled on a label-count schedule until it exceeds ``zeta_max``.
- ``comparison_only``: the comparison phase run forever (``gamma = 0``
  never lets it exit), so the run spends everything on duels.

Runs are deterministic given a seed, and policies that take no total
budget (everything except the adaptive one) have the anytime property: a
larger budget extends the trace of a smaller one without changing its
prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.stats import qmc

from . import direct
from .accounting import COMPARISON, LABEL, CostModel, Ledger, Trace, instantaneous_regret
from .direct import Box
from .gp import GPPosterior, fit_kernel
from .info_gain import BetaSchedule, InfoGainCurve
from .kernels import Kernel

POLICIES = ("gp_ucb", "comp_gp_ucb", "comp_gp_ucb_adaptive", "comparison_only")


@dataclass
class PolicyConfig:
    """Everything a policy run needs besides the oracle and cost model."""

    policy: str
    gamma: float = 0.0
    zeta: float = 0.0
    l2: float = 1.0
    zeta0: float = 0.1
    zeta_max: float = 1.6
    kernel_comp: Kernel | None = None
    kernel_label: Kernel | None = None
    beta_comp: BetaSchedule = field(default_factory=lambda: BetaSchedule("heuristic"))
    beta_label: BetaSchedule = field(default_factory=lambda: BetaSchedule("heuristic"))
    noise_comp: float = 0.5
    noise_label: float | None = None
    acq_evals: int | None = None
    warm_budget: float = 10.0
    warm_comp_fraction: float | None = None
    refit_every_comp: int = 20
    refit_every_label: int = 5
    fit_budget: int = 100
    fit_subsample: int = 128
    info_grid_size: int = 512
    refresh_reference: bool = False
    probe_point: np.ndarray | None = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(
                f"unknown policy {self.policy!r}; expected one of {POLICIES}"
            )
        if self.gamma < 0.0 or self.zeta < 0.0:
            raise ValueError("gamma and zeta must be nonnegative")
        if self.l2 <= 0.0:
            raise ValueError("l2 must be positive")
        if self.policy == "comparison_only" and self.gamma != 0.0:
            raise ValueError("comparison_only requires gamma = 0")
        if self.policy == "comp_gp_ucb_adaptive" and not (
            0.0 < self.zeta0 <= self.zeta_max
        ):
            raise ValueError("need 0 < zeta0 <= zeta_max")
        if self.warm_comp_fraction is not None and not (
            0.0 <= self.warm_comp_fraction <= 1.0
        ):
            raise ValueError("warm_comp_fraction must lie in [0, 1]")
        if self.warm_budget <= 0.0:
            raise ValueError("warm_budget must be positive")
        if self.noise_comp <= 0.0:
            raise ValueError("noise_comp must be positive")
        for name in ("refit_every_comp", "refit_every_label", "fit_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fit_subsample < 2:
            raise ValueError("fit_subsample must be >= 2")
        if self.acq_evals is not None and self.acq_evals < 1:
            raise ValueError("acq_evals must be >= 1")
        if self.probe_point is not None:
            self.probe_point = np.asarray(self.probe_point, dtype=float).copy()


@dataclass(frozen=True)
class QueryDecision:
    """One resolved acquisition: what to ask and where."""

    kind: str
    x: np.ndarray
    x2: np.ndarray | None
    phase: int

    def __post_init__(self):
        if (self.x2 is not None) != (self.kind == COMPARISON):
            raise ValueError("comparisons carry an opponent point; labels do not")


@dataclass
class RunState:
    phase: int
    gp_comp: GPPosterior
    gp_label: GPPosterior
    beta_comp: BetaSchedule
    beta_label: BetaSchedule
    ledger: Ledger
    trace: Trace
    acq_evals: int
    fr_hat: float | None = None
    exit_x: np.ndarray | None = None
    exit_step: int | None = None
    zeta_k: float = 0.0
    k: int = 0
    n_l: int = 0
    label_quota: int = 0
    t: int = 0
    fallbacks: int = 0
    done: bool = False


@dataclass
class RunResult:
    trace: Trace
    diagnostics: dict
    ledger: Ledger


def _ucb(gp: GPPosterior, beta: float):
    def objective(X):
        mu, var = gp.query_many(X)
        return mu + beta * np.sqrt(var)

    return objective


def gp_ucb_step(gp: GPPosterior, beta: float, box: Box, acq_evals: int) -> QueryDecision:
    """Label query at the maximizer of the posterior upper confidence bound."""
    res = direct.maximize(_ucb(gp, beta), box, acq_evals)
    return QueryDecision(kind=LABEL, x=res.x, x2=None, phase=0)


def phase1_step(state: RunState, config: PolicyConfig, box: Box, rng) -> tuple:
    """Comparison-UCB acquisition plus the phase-exit test.

    Returns (decision, exit, info); the exit flag is computed from the
    pre-update posterior at the chosen point, so a True flag means this
    decision should be discarded and the run should freeze its reference
    bound and move on.
    """
    gp = state.gp_comp
    beta = float(state.beta_comp.value(gp.n + 1))
    res = direct.maximize(_ucb(gp, beta), box, state.acq_evals)
    x = res.x
    mu, var = gp.query(x)
    sd = math.sqrt(var)
    exit_flag = beta * sd <= config.gamma
    decision = QueryDecision(kind=COMPARISON, x=x, x2=box.sample(rng), phase=1)
    return decision, exit_flag, {"mu": mu, "sd": sd, "beta": beta}


def compute_fr_lcb(state: RunState, x: np.ndarray, beta: float) -> float:
    """Lower confidence bound on the win probability at the exit point,
    from the posterior as it stood when the exit test fired."""
    if state.phase != 1:
        raise RuntimeError("the reference bound freezes at the phase-1 exit")
    mu, var = state.gp_comp.query(x)
    return float(mu - beta * math.sqrt(var))


def phase2_step(state: RunState, config: PolicyConfig, box: Box, rng) -> tuple:
    """Label-UCB acquisition restricted to comparison-promising points.

    The feasible set keeps x whenever the comparison UCB clears the frozen
    reference bound minus slack for the surface mismatch. An empty
    feasible set falls back to the unconstrained label-UCB argmax and
    bumps a diagnostic counter. The chosen point is dueled instead of
    labeled while the comparison GP is still wide there.
    """
    if state.phase != 2 or state.fr_hat is None:
        raise RuntimeError("phase-2 step requires a frozen reference bound")
    gp_r = state.gp_comp
    gp_l = state.gp_label
    beta_r = float(state.beta_comp.value(gp_r.n + 1))
    beta_l = float(state.beta_label.value(gp_l.n + 1))
    if config.policy == "comp_gp_ucb_adaptive":
        slack = 2.0 * config.l2 * state.zeta_k
    else:
        slack = config.l2 * config.zeta
    offset = state.fr_hat - slack

    def constraint(X):
        mu, var = gp_r.query_many(X)
        return mu + beta_r * np.sqrt(var) - offset

    objective = _ucb(gp_l, beta_l)
    res = direct.maximize_constrained(objective, constraint, box, state.acq_evals)
    fallback = not res.feasible
    if fallback:
        state.fallbacks += 1
        res = direct.maximize(objective, box, state.acq_evals)
    x = res.x
    mu_r, var_r = gp_r.query(x)
    sd_r = math.sqrt(var_r)
    if beta_r * sd_r >= config.gamma:
        decision = QueryDecision(kind=COMPARISON, x=x, x2=box.sample(rng), phase=2)
    else:
        decision = QueryDecision(kind=LABEL, x=x, x2=None, phase=2)
    info = {
        "mu": mu_r,
        "sd": sd_r,
        "beta": beta_r,
        "phi": mu_r + beta_r * sd_r - offset,
        "fallback": fallback,
    }
    if config.probe_point is not None:
        mu_p, var_p = gp_r.query(config.probe_point)
        info["phi_probe"] = mu_p + beta_r * math.sqrt(var_p) - offset
    return decision, info


def query_dispatch(decision: QueryDecision, oracle, state: RunState, rng) -> bool:
    """Charge, query, update the matching GP, and record the trace entry.

    A rejected charge issues no oracle query, marks the run done, and
    returns False.
    """
    cost = state.ledger.model.cost_of(decision.kind)
    if not state.ledger.charge(decision.kind):
        state.done = True
        return False
    if decision.kind == COMPARISON:
        z = oracle.compare(decision.x, decision.x2, rng)
        state.gp_comp = state.gp_comp.append(decision.x, float(z))
    else:
        y = oracle.label(decision.x, rng)
        state.gp_label = state.gp_label.append(decision.x, y)
    regret = instantaneous_regret(
        oracle.f, oracle.truth, decision.kind, decision.x, decision.x2
    )
    state.trace.append(decision.kind, decision.x, decision.x2, cost, regret)
    state.t += 1
    return True


def label_level_quota(model: CostModel, zeta0: float, zeta_max: float) -> int:
    """Labels allowed per mismatch level: the all-label query floor split
    evenly over twice the number of doublings from zeta0 to zeta_max."""
    if not 0.0 < zeta0 <= zeta_max:
        raise ValueError("need 0 < zeta0 <= zeta_max")
    n_lower, _ = model.n_bounds()
    ratio = zeta_max / zeta0
    m = math.ceil(math.log2(ratio)) if ratio > 1.0 else 0
    # snap ratios that are floating-point hairs above a power of two
    if m >= 1 and 2.0 ** (m - 1) >= ratio * (1.0 - 1e-12):
        m -= 1
    levels = max(1, m)
    return max(1, math.ceil(n_lower / (2 * levels)))


def zeta_schedule_step(state: RunState, config: PolicyConfig):
    """Advance the label counter; on hitting the quota, double the
    mismatch bound and terminate once it overshoots zeta_max."""
    state.n_l += 1
    if state.label_quota > 0 and state.n_l >= state.label_quota:
        state.n_l = 0
        state.zeta_k *= 2.0
        state.k += 1
        if state.zeta_k > config.zeta_max * (1.0 + 1e-9):
            state.done = True


def _refit(gp: GPPosterior, rng, config: PolicyConfig) -> tuple[GPPosterior, bool]:
    if gp.n < 2:
        return gp, False
    X, y = gp.X, gp.y
    if gp.n > config.fit_subsample:
        idx = np.sort(rng.choice(gp.n, size=config.fit_subsample, replace=False))
        X, y = X[idx], y[idx]
    kern = fit_kernel(X, y, gp.noise, family=gp.kernel.family,
                      budget=config.fit_budget, nu=gp.kernel.nu)
    if kern == gp.kernel:
        return gp, False
    return GPPosterior.from_data(kern, gp.noise, gp.X, gp.y), True


def _instantiate_schedule(template: BetaSchedule, kernel: Kernel, noise: float,
                          box: Box, grid_size: int) -> BetaSchedule:
    if template.mode != "theoretical":
        return template
    m = max(1, math.ceil(math.log2(max(2, grid_size))))
    sob = qmc.Sobol(box.d, scramble=False).random_base2(m)
    candidates = box.lower + sob * box.widths
    return replace(template, curve=InfoGainCurve(kernel, candidates, noise))


def run(config: PolicyConfig, oracle, model: CostModel, seed) -> RunResult:
    """Execute one policy run to budget exhaustion (or adaptive stop).

    Warm start first: uniform random queries worth ``warm_budget``, split
    between comparisons and labels by ``warm_comp_fraction`` for dueling
    policies (all labels for gp_ucb), charged to the same ledger and
    recorded in the same trace. Kernels are refit on the warm data and
    periodically thereafter (every ``refit_every_comp`` new comparisons /
    ``refit_every_label`` new labels).
    """
    box = oracle.box
    if model.budget <= config.warm_budget:
        raise ValueError("total budget must exceed the warm-start budget")
    rng = np.random.default_rng(seed)
    acq = config.acq_evals if config.acq_evals is not None else 500 * box.d
    noise_l = config.noise_label
    if noise_l is None:
        noise_l = max(oracle.eta / math.sqrt(3.0), 1e-3)
    kern_c = config.kernel_comp or Kernel("se", lengthscale=0.25, scale=1.0)
    kern_l = config.kernel_label or Kernel("se", lengthscale=0.25, scale=1.0)
    state = RunState(
        phase=1,
        gp_comp=GPPosterior.empty(kern_c, config.noise_comp),
        gp_label=GPPosterior.empty(kern_l, noise_l),
        beta_comp=_instantiate_schedule(config.beta_comp, kern_c, config.noise_comp,
                                        box, config.info_grid_size),
        beta_label=_instantiate_schedule(config.beta_label, kern_l, noise_l,
                                         box, config.info_grid_size),
        ledger=Ledger(model),
        trace=Trace(),
        acq_evals=acq,
    )
    if config.policy == "comp_gp_ucb_adaptive":
        state.zeta_k = config.zeta0
        state.label_quota = label_level_quota(model, config.zeta0, config.zeta_max)

    diag = {
        "phase": [],
        "mu_comp": [],
        "sd_comp": [],
        "beta_comp": [],
        "phi": [],
        "phi_probe": [],
        "fallback": [],
    }

    def record(phase_tag: int, info: dict | None = None):
        info = info or {}
        diag["phase"].append(phase_tag)
        diag["mu_comp"].append(info.get("mu", math.nan))
        diag["sd_comp"].append(info.get("sd", math.nan))
        diag["beta_comp"].append(info.get("beta", math.nan))
        diag["phi"].append(info.get("phi", math.nan))
        diag["phi_probe"].append(info.get("phi_probe", math.nan))
        diag["fallback"].append(bool(info.get("fallback", False)))

    # warm start: counts from exact arithmetic so equal-cost setups are exact
    wb = Fraction(str(float(config.warm_budget)))
    lam_l = Fraction(str(float(model.label_cost)))
    lam_c = Fraction(str(float(model.comparison_cost)))
    if config.policy == "gp_ucb":
        n_warm_comp = 0
        n_warm_label = math.floor(wb / lam_l)
    else:
        frac = config.warm_comp_fraction
        if frac is None:
            frac = 1.0 if config.policy == "comparison_only" else 0.5
        comp_share = wb * Fraction(str(float(frac)))
        n_warm_comp = math.floor(comp_share / lam_c)
        n_warm_label = math.floor((wb - comp_share) / lam_l)
    for _ in range(n_warm_comp):
        decision = QueryDecision(kind=COMPARISON, x=box.sample(rng),
                                 x2=box.sample(rng), phase=0)
        if query_dispatch(decision, oracle, state, rng):
            record(0)
    for _ in range(n_warm_label):
        decision = QueryDecision(kind=LABEL, x=box.sample(rng), x2=None, phase=0)
        if query_dispatch(decision, oracle, state, rng):
            record(0)

    state.gp_comp, changed = _refit(state.gp_comp, rng, config)
    if changed:
        state.beta_comp = _instantiate_schedule(
            config.beta_comp, state.gp_comp.kernel, config.noise_comp,
            box, config.info_grid_size)
    state.gp_label, changed = _refit(state.gp_label, rng, config)
    if changed:
        state.beta_label = _instantiate_schedule(
            config.beta_label, state.gp_label.kernel, noise_l,
            box, config.info_grid_size)
    last_refit_comp = state.gp_comp.n
    last_refit_label = state.gp_label.n

    while not state.done and not state.ledger.terminal:
        if config.policy == "gp_ucb":
            beta = float(state.beta_label.value(state.gp_label.n + 1))
            decision = gp_ucb_step(state.gp_label, beta, box, acq)
            info: dict = {}
            phase_tag = 0
        elif state.phase == 1:
            decision, exit_flag, info = phase1_step(state, config, box, rng)
            phase_tag = 1
            if exit_flag:
                state.fr_hat = compute_fr_lcb(state, decision.x, info["beta"])
                state.exit_x = decision.x.copy()
                state.exit_step = state.t
                state.phase = 2
                decision, info = phase2_step(state, config, box, rng)
                phase_tag = 2
        else:
            decision, info = phase2_step(state, config, box, rng)
            phase_tag = 2
        if not query_dispatch(decision, oracle, state, rng):
            break
        record(phase_tag, info)
        if config.policy == "comp_gp_ucb_adaptive" and decision.kind == LABEL:
            zeta_schedule_step(state, config)
        if state.gp_comp.n - last_refit_comp >= config.refit_every_comp:
            state.gp_comp, changed = _refit(state.gp_comp, rng, config)
            last_refit_comp = state.gp_comp.n
            if changed:
                state.beta_comp = _instantiate_schedule(
                    config.beta_comp, state.gp_comp.kernel, config.noise_comp,
                    box, config.info_grid_size)
                if config.refresh_reference and state.phase == 2:
                    beta = float(state.beta_comp.value(state.gp_comp.n + 1))
                    mu, var = state.gp_comp.query(state.exit_x)
                    state.fr_hat = float(mu - beta * math.sqrt(var))
        if state.gp_label.n - last_refit_label >= config.refit_every_label:
            state.gp_label, changed = _refit(state.gp_label, rng, config)
            last_refit_label = state.gp_label.n
            if changed:
                state.beta_label = _instantiate_schedule(
                    config.beta_label, state.gp_label.kernel, noise_l,
                    box, config.info_grid_size)

    diag["exit_step"] = state.exit_step
    diag["fr_hat"] = state.fr_hat
    diag["zeta_final"] = state.zeta_k
    diag["k_final"] = state.k
    diag["fallbacks"] = state.fallbacks
    return RunResult(trace=state.trace, diagnostics=diag, ledger=state.ledger)
