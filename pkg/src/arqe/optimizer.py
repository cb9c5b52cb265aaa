"""Knot-set optimization: cost functions, reparametrization and Nelder-Mead.

Candidates live in an unconstrained space of ``2n`` reals.  The first ``n``
entries are additive log-ratio logits of the ``n+1`` gaps that split (-1, 0)
at the interior x-knots, the last ``n`` do the same for the increments that
split (0, 0.5) at the y-knots.  The zero vector decodes to equally spaced,
collinear knots.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError
from .engine import RunConfig, run_ensemble
from .pcf import MIN_GAP, KnotSet, check_knots

log = logging.getLogger(__name__)

CRITERIA = ("speed", "accuracy-fidelity", "accuracy-final-w")
DEFAULT_BUDGET = 400
DEFAULT_BUDGET_PER_KNOT = 20
RESTARTS = 3
# x-gaps never shrink below this, so every decoded set passes validation
GAP_FLOOR = 2.0 * MIN_GAP
BOUNDARY_NUDGE = 1e-9
NM_REFLECT, NM_EXPAND, NM_CONTRACT, NM_SHRINK = 1.0, 2.0, 0.5, 0.5
INITIAL_STEP = 1.0


@dataclass(frozen=True, eq=False)
class CostSpec:
    criterion: str
    config: RunConfig
    repetitions: int = 1000
    master_seed: int = 0
    fixed_budget: int = 80

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ConfigError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.criterion != "speed" and self.fixed_budget < 1:
            raise ConfigError("fixed iteration budget must be >= 1")

    def run_config(self, knots: KnotSet) -> RunConfig:
        fixed = None if self.criterion == "speed" else self.fixed_budget
        return replace(self.config, knots=knots, fixed_iterations=fixed)


def evaluate(knots: KnotSet, spec: CostSpec):
    """Ensemble summary for ``knots`` under the streams of ``spec``."""
    check_knots(knots)
    return run_ensemble(spec.run_config(knots), spec.repetitions, spec.master_seed)


def cost_from_summary(summary, criterion: str) -> float:
    if criterion == "speed":
        return summary.mean_iterations
    if criterion == "accuracy-fidelity":
        return -summary.mean_fidelity
    return summary.mean_final_w


def cost_eval(knots: KnotSet, spec: CostSpec) -> float:
    """Cost to minimize; every call under one ``spec`` reuses the same streams."""
    return cost_from_summary(evaluate(knots, spec), spec.criterion)


# ---------------------------------------------------------------------------
# reparametrization


def _logits(parts: np.ndarray) -> np.ndarray:
    parts = np.maximum(parts, BOUNDARY_NUDGE)
    return np.log(parts[:-1]) - np.log(parts[-1])


def _softmax_tail(v: np.ndarray) -> np.ndarray:
    z = np.append(v, 0.0)
    z = np.exp(z - z.max())
    return z / z.sum()


def reparam_forward(knots: KnotSet) -> np.ndarray:
    check_knots(knots)
    n = knots.n
    xs = np.concatenate([[-1.0], knots.xs, [0.0]])
    ys = np.concatenate([[0.0], knots.ys, [0.5]])
    gaps = (np.diff(xs) - GAP_FLOOR) / (1.0 - (n + 1) * GAP_FLOOR)
    incs = np.diff(ys) / 0.5
    return np.concatenate([_logits(gaps), _logits(incs)])


def reparam_backward(v, start_slope: str = "auto") -> KnotSet:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or len(v) % 2 or len(v) == 0:
        raise DomainError(f"expected an even-length nonempty vector, got shape {v.shape}")
    n = len(v) // 2
    gaps = GAP_FLOOR + (1.0 - (n + 1) * GAP_FLOOR) * _softmax_tail(v[:n])
    xs = -1.0 + np.cumsum(gaps[:n])
    ys = np.minimum(0.5 * np.cumsum(_softmax_tail(v[n:])[:n]), 0.5)
    return KnotSet(tuple(xs), tuple(ys), start_slope)


# ---------------------------------------------------------------------------
# Nelder-Mead


class BudgetExhausted(Exception):
    pass


class _Counter:
    """Budgeted objective that keeps the best point seen so far."""

    def __init__(self, fn, budget):
        self.fn, self.budget = fn, budget
        self.history: list[float] = []
        self.best_x, self.best_f = None, np.inf

    def __call__(self, x):
        if len(self.history) >= self.budget:
            raise BudgetExhausted
        f = float(self.fn(x))
        self.history.append(f)
        if f < self.best_f:
            self.best_x, self.best_f = np.array(x, dtype=float), f
        return f


def nelder_mead(fn, x0, max_evals: int, step: float = INITIAL_STEP, tol: float = 1e-10):
    """Minimize ``fn`` from ``x0``; returns ``(x_best, f_best, evaluations)``.

    Stops after ``max_evals`` calls, or once the simplex has collapsed in both
    spread of values and size.
    """
    counter = _Counter(fn, max_evals)
    try:
        _nm_loop(counter, np.asarray(x0, dtype=float), step, tol)
    except BudgetExhausted:
        pass
    return counter.best_x, counter.best_f, len(counter.history)


def _nm_loop(f, x0, step, tol):
    dim = len(x0)
    simplex = [x0] + [x0 + step * np.eye(dim)[k] for k in range(dim)]
    values = [f(x) for x in simplex]
    while True:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[k] for k in order]
        values = [values[k] for k in order]
        size = max(np.max(np.abs(x - simplex[0])) for x in simplex[1:])
        if values[-1] - values[0] <= tol and size <= tol:
            return
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = centroid + NM_REFLECT * (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + NM_EXPAND * (xr - centroid)
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + NM_CONTRACT * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + NM_CONTRACT * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        best = simplex[0]
        simplex = [best] + [best + NM_SHRINK * (x - best) for x in simplex[1:]]
        values = [values[0]] + [f(x) for x in simplex[1:]]


@dataclass
class OptimizationResult:
    knots: KnotSet
    cost: float
    evaluations: int
    history: list[float] = field(default_factory=list)
    seed: int = 0
    baseline_cost: float = float("nan")

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["evaluation", "cost"])
        for k, c in enumerate(self.history):
            writer.writerow([k + 1, repr(c)])
        return buf.getvalue()


def minimize_vector(fn, dim: int, budget: int, seed: int, restarts: int = RESTARTS):
    """Nelder-Mead from the origin, then from ``restarts`` random perturbations
    of the incumbent; the budget is split evenly over the starts.

    Returns ``(x_best, f_best, history)``.
    """
    rng = np.random.default_rng(seed)
    counter = _Counter(fn, budget)
    starts = restarts + 1
    x0 = np.zeros(dim)
    for k in range(starts):
        share = (budget - len(counter.history)) // (starts - k)
        if share < dim + 1:
            break
        if k > 0:
            x0 = counter.best_x + rng.normal(0.0, INITIAL_STEP, dim)
        sub = _Counter(counter, share)
        try:
            _nm_loop(sub, x0, INITIAL_STEP, 1e-10)
        except BudgetExhausted:
            pass
    return counter.best_x, counter.best_f, counter.history


def optimize(spec: CostSpec, n_knots: int = 2, budget: int = DEFAULT_BUDGET,
             seed: int = 0, cost=None) -> OptimizationResult:
    """Best-ever knot set under ``spec``.

    The uniform baseline is always evaluated first, so the result is never
    worse than it.  ``cost`` overrides :func:`cost_eval` (used for testing).
    """
    if budget < DEFAULT_BUDGET_PER_KNOT * n_knots:
        raise ConfigError(
            f"budget {budget} below the minimum {DEFAULT_BUDGET_PER_KNOT * n_knots} "
            f"for {n_knots} knots"
        )
    cost = cost or (lambda k: cost_eval(k, spec))
    baseline = KnotSet.uniform(n_knots)
    base_cost = float(cost(baseline))
    x, f, history = minimize_vector(
        lambda v: cost(reparam_backward(v)), 2 * n_knots, budget - 1, seed
    )
    history = [base_cost] + history
    if x is None or not f < base_cost:
        best, best_cost = baseline, base_cost
    else:
        best, best_cost = reparam_backward(x), f
    log.info("optimize: baseline %.6g -> best %.6g in %d evaluations", base_cost, best_cost, len(history))
    return OptimizationResult(best, best_cost, len(history), history, seed, base_cost)


# ---------------------------------------------------------------------------
# campaigns

TABLE_COLUMNS = ["theta", "phi", "lam", "X_in", "Y_in", "N", "N_opt", "F", "F_opt"]


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


@dataclass
class CampaignRow:
    genes: tuple
    result: OptimizationResult
    n_uniform: float
    n_opt: float
    f_uniform: float
    f_opt: float

    def as_list(self) -> list:
        k = self.result.knots
        return [
            *(repr(float(g)) for g in self.genes),
            " ".join(repr(x) for x in k.xs),
            " ".join(repr(y) for y in k.ys),
            repr(self.n_uniform), repr(self.n_opt), repr(self.f_uniform), repr(self.f_opt),
        ]


@dataclass
class Campaign:
    criterion: str
    rows: list[CampaignRow]

    def means(self) -> dict:
        col = lambda name: float(np.mean([getattr(r, name) for r in self.rows]))  # noqa: E731
        return {name: col(name) for name in ("n_uniform", "n_opt", "f_uniform", "f_opt")}

    def table_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for r in self.rows:
            writer.writerow(r.as_list())
        return buf.getvalue()


def campaign(instances, template: CostSpec, seed: int, n_knots: int = 2,
             budget: int = DEFAULT_BUDGET, eval_repetitions: int | None = None) -> Campaign:
    """Optimize each ``(genes, RunConfig)`` instance, then score both arms.

    Scores come from a fresh evaluation stream, independent of the streams the
    optimizer saw, with ``eval_repetitions`` runs (default: the template's).
    For speed, ``N`` columns are mean iteration counts; for accuracy they hold
    the fixed iteration budget.  ``F`` columns are mean best-match fidelities.
    """
    if not instances:
        raise ConfigError("campaign needs at least one instance")
    reps = eval_repetitions or template.repetitions
    rows = []
    for i, (genes, config) in enumerate(instances):
        spec = replace(template, config=config, master_seed=_derived_seed(seed, i, 0))
        result = optimize(spec, n_knots, budget, _derived_seed(seed, i, 1))
        held_out = replace(spec, master_seed=_derived_seed(seed, i, 2), repetitions=reps)
        uni = evaluate(KnotSet.uniform(n_knots), held_out)
        opt = evaluate(result.knots, held_out)
        if template.criterion == "speed":
            n_u, n_o = uni.mean_iterations, opt.mean_iterations
        else:
            n_u = n_o = float(template.fixed_budget)
        rows.append(CampaignRow(tuple(genes), result, n_u, n_o, uni.mean_fidelity, opt.mean_fidelity))
        log.info("instance %d: N %.2f -> %.2f, F %.4f -> %.4f", i, n_u, n_o,
                 uni.mean_fidelity, opt.mean_fidelity)
    return Campaign(template.criterion, rows)
