"""Synthetic-data studies: sample-complexity sweeps and convergence traces.

The phase sweep measures the success probability of recovery as the sample
count crosses multiples of n * r * ln(n) (natural log), with a fixed sample
count per cell so the success curve carries no binomial noise.  The
convergence study traces relative error against effective passes for
several solvers at several Bernoulli sample rates, with instance and
initial point shared across solvers within a trial.

Every trial derives its generator seeds from
(base_seed, dataset index, cell index, trial index), so whole tables are
reproducible from one integer.
"""

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .initialization import RankDeficiencyError, initialize_with_spectrum
from .linalg import ConvergenceError
from .metrics import distance_to_truth, relative_error
from .problem import (
    ProblemInstance,
    bernoulli_sample,
    derived_seeds,
    fixed_sample,
    generate_instance,
    partition_observations,
    sample_count_for,
)
from .solvers import SOLVERS, DivergenceError, ProjectionError, SvrgConfig, lrsvrg_solve

__all__ = [
    "DatasetSpec",
    "DEFAULT_DATASETS",
    "PhaseConfig",
    "ConvergenceConfig",
    "TrialOutcome",
    "relative_error",
    "distance_to_truth",
    "build_instance",
    "run_phase_cell",
    "run_phase_transition",
    "run_convergence_trial",
    "run_convergence_study",
]


class DatasetSpec(NamedTuple):
    """A square synthetic dataset: ambient d, feature n, rank r."""

    d: int
    n: int
    r: int

    @property
    def label(self):
        return f"d{self.d}n{self.n}r{self.r}"


DEFAULT_DATASETS = (
    DatasetSpec(200, 20, 5),
    DatasetSpec(200, 40, 3),
    DatasetSpec(500, 50, 3),
    DatasetSpec(500, 25, 4),
)


@dataclass(frozen=True)
class PhaseConfig:
    """Sweep configuration: datasets x sample-count multiples x trials."""

    datasets: tuple = DEFAULT_DATASETS
    multiples: tuple = (1, 2, 3, 4, 5, 7, 10)
    trials: int = 10
    success_threshold: float = 1e-3
    epoch_cap: int = 2000
    base_seed: int = 0
    condition_target: float = 1.5
    init_full_omega: bool = False
    solver: SvrgConfig = field(default_factory=SvrgConfig)

    def __post_init__(self):
        if any(mult <= 0 for mult in self.multiples):
            raise ValueError("multiples must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.success_threshold <= 0:
            raise ValueError("success_threshold must be positive")


@dataclass(frozen=True)
class ConvergenceConfig:
    """Trace-study configuration for one dataset over several sample rates."""

    dataset: DatasetSpec = DatasetSpec(200, 20, 5)
    rates: tuple = (0.2, 0.3, 0.4)
    algorithms: tuple = ("lrsvrg", "gd", "am")
    pass_budget: float = 500.0
    trials: int = 10
    base_seed: int = 0
    condition_target: float = 1.5
    stop_tol: float = 1e-9
    epoch_cap: int = 2000
    grid_step: int = 1
    init_full_omega: bool = False
    solver: SvrgConfig = field(default_factory=SvrgConfig)

    def __post_init__(self):
        if any(not 0 < p <= 1 for p in self.rates):
            raise ValueError("sample rates must lie in (0, 1]")
        if self.pass_budget <= 0:
            raise ValueError("pass_budget must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        unknown = set(self.algorithms) - set(SOLVERS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}; expected {sorted(SOLVERS)}")


@dataclass(frozen=True)
class TrialOutcome:
    """One phase-sweep trial: did the solver recover the instance."""

    success: bool
    best_rel_err: float
    passes: float
    epochs: int
    projection_activations: int
    failure: Optional[str] = None


def build_instance(dataset, sampler, seeds, condition_target, subsets):
    """Assemble truth + observations + partition from a seed bundle.

    ``sampler(truth, seed)`` draws the observation set; ``seeds`` supplies
    (instance, sample, partition) seeds in order.
    """
    d, n, r = dataset
    truth = generate_instance(d, d, n, n, r, condition_target, seeds[0])
    omega = sampler(truth, seeds[1])
    b = min(subsets if subsets is not None else n, omega.size)
    part = partition_observations(omega, b, seeds[2])
    return ProblemInstance(truth=truth, observations=omega, partition=part)


def run_phase_cell(cfg, dataset_index, cell_index):
    """All trials of one (dataset, multiple) cell of the phase sweep."""
    dataset = cfg.datasets[dataset_index]
    multiple = cfg.multiples[cell_index]
    d, n, r = dataset
    count = sample_count_for(n, r, multiple)
    if count > d * d:
        raise ValueError(
            f"requested sample count {count} exceeds the {d}x{d} entry total"
        )
    outcomes = []
    for trial in range(cfg.trials):
        seeds = derived_seeds(cfg.base_seed, dataset_index, cell_index, trial, count=5)
        instance = build_instance(
            dataset,
            lambda truth, seed: fixed_sample(truth, count, seed),
            seeds,
            cfg.condition_target,
            cfg.solver.subsets,
        )
        try:
            init, sigma0 = initialize_with_spectrum(
                instance.observations, instance.partition,
                instance.truth.features, r, seeds[3],
                use_full_omega=cfg.init_full_omega,
            )
            solver_cfg = replace(
                cfg.solver,
                seed=seeds[4],
                stop_tol=cfg.success_threshold,
                outer_epochs=cfg.epoch_cap,
                sigma1_estimate=float(sigma0[0]),
                sigma_r_estimate=float(sigma0[-1]),
            )
            report = lrsvrg_solve(instance, init, solver_cfg)
        except (ConvergenceError, RankDeficiencyError, DivergenceError, ProjectionError) as exc:
            outcomes.append(TrialOutcome(
                success=False, best_rel_err=math.inf, passes=0.0, epochs=0,
                projection_activations=0, failure=str(exc),
            ))
            continue
        best = float(report.column("rel_err").min())
        outcomes.append(TrialOutcome(
            success=best < cfg.success_threshold,
            best_rel_err=best,
            passes=report.records[-1].passes,
            epochs=report.records[-1].epoch,
            projection_activations=report.total_activations,
        ))
    return outcomes


def run_phase_transition(cfg):
    """Success-rate table over the (dataset, multiple) grid.

    One row per cell: dataset label and shape, the multiple, the fixed
    sample count, and the fraction of trials whose relative error dropped
    below the threshold within the epoch cap.
    """
    rows = []
    for di, dataset in enumerate(cfg.datasets):
        for ci, multiple in enumerate(cfg.multiples):
            outcomes = run_phase_cell(cfg, di, ci)
            successes = sum(o.success for o in outcomes)
            rows.append({
                "dataset": dataset.label,
                "d": dataset.d,
                "n": dataset.n,
                "r": dataset.r,
                "multiple": multiple,
                "samples": sample_count_for(dataset.n, dataset.r, multiple),
                "trials": cfg.trials,
                "successes": successes,
                "success_rate": successes / cfg.trials,
            })
    return rows


def run_convergence_trial(cfg, rate_index, trial_index):
    """One shared-instance trial: a SolverReport per requested algorithm."""
    rate = cfg.rates[rate_index]
    seeds = derived_seeds(cfg.base_seed, 0, rate_index, trial_index, count=5)
    instance = build_instance(
        cfg.dataset,
        lambda truth, seed: bernoulli_sample(truth, rate, seed),
        seeds,
        cfg.condition_target,
        cfg.solver.subsets,
    )
    init, sigma0 = initialize_with_spectrum(
        instance.observations, instance.partition,
        instance.truth.features, cfg.dataset.r, seeds[3],
        use_full_omega=cfg.init_full_omega,
    )
    solver_cfg = replace(
        cfg.solver,
        seed=seeds[4],
        stop_tol=cfg.stop_tol,
        outer_epochs=cfg.epoch_cap,
        max_effective_passes=cfg.pass_budget,
        sigma1_estimate=float(sigma0[0]),
        sigma_r_estimate=float(sigma0[-1]),
    )
    return {algo: SOLVERS[algo](instance, init, solver_cfg) for algo in cfg.algorithms}


def resample_trace(report, budget, step=1):
    """Piecewise-constant resample of a trace onto an integer pass grid.

    Grid point g carries the most recent record with passes <= g; the grid
    stops at the trace's final pass (or the budget, whichever is smaller).
    """
    passes = report.column("passes")
    last = min(float(budget), float(passes[-1]))
    grid = np.arange(0, math.floor(last) + 1, step)
    idx = np.searchsorted(passes, grid, side="right") - 1
    return [(int(g), report.records[i]) for g, i in zip(grid, idx)]


def run_convergence_study(cfg):
    """Long-format trace table over (rate, algorithm, trial).

    Each row: dataset, nominal rate, algorithm, trial, effective pass, and
    the relative error at that pass (raw, log2, and factor distance).
    """
    rows = []
    for ri, rate in enumerate(cfg.rates):
        for trial in range(cfg.trials):
            reports = run_convergence_trial(cfg, ri, trial)
            for algo in cfg.algorithms:
                for g, rec in resample_trace(reports[algo], cfg.pass_budget, cfg.grid_step):
                    rel = max(rec.rel_err, 1e-300)
                    rows.append({
                        "dataset": cfg.dataset.label,
                        "p": rate,
                        "algo": algo,
                        "trial": trial,
                        "pass": g,
                        "log2_rel_err": math.log2(rel),
                        "rel_err": rec.rel_err,
                        "dist": rec.dist,
                    })
    return rows
