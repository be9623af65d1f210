"""EM and threshold EM for CPT learning from incomplete data.

One threshold-EM iteration is expectation, maximization, clipping of the
M-step output into the bound intervals, then row renormalization; the
renormalized parameters feed the next expectation.  Plain EM skips the
two last steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple

import numpy as np

from .bounds import ParameterBounds, compute_bounds, count_violations
from .errors import ConfigurationError, CorruptBoundsError, DegenerateRowError
from .estimators import (
    SufficientStatistics,
    family_codes,
    ml_estimate,
    posterior_mean_estimate,
)
from .inference import batch_family_posteriors
from .model import MISSING, NetworkStructure, ParameterSet, PriorSpec, check_parameters
from .rng import DOMAIN_INIT, SplitMix64

Algorithm = Literal["em", "threshold-em"]
InitMode = Literal["random-simplex", "uniform", "provided"]
MStep = Literal["ml", "posterior-mean"]


@dataclass(frozen=True)
class LearnConfig:
    algorithm: Algorithm = "em"
    max_iterations: int = 200
    param_tolerance: float = 1e-6
    init: InitMode = "random-simplex"
    seed: int = 0
    m_step: MStep = "ml"
    prior: PriorSpec | None = None  # alpha = 1 everywhere when omitted
    initial_params: ParameterSet | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.algorithm not in ("em", "threshold-em"):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.init not in ("random-simplex", "uniform", "provided"):
            raise ConfigurationError(f"unknown init mode {self.init!r}")
        if self.m_step not in ("ml", "posterior-mean"):
            raise ConfigurationError(f"unknown m-step {self.m_step!r}")
        if not self.max_iterations >= 1:
            raise ConfigurationError("max_iterations must be at least 1")
        if not self.param_tolerance > 0:
            raise ConfigurationError("param_tolerance must be positive")

    def prior_for(self, structure: NetworkStructure) -> PriorSpec:
        return self.prior if self.prior is not None else PriorSpec.uniform(structure, 1.0)


class TraceRow(NamedTuple):
    """One iteration, described through the parameters it produced.

    ``expected_loglik`` scores them on the expected counts they were fitted
    to.  Records of probability zero under them are left out of
    ``observed_loglik`` and counted in ``skipped_records``.
    """

    iteration: int
    observed_loglik: float
    expected_loglik: float
    max_param_delta: float
    clip_count: int
    post_norm_violations: int
    skipped_records: int


@dataclass(frozen=True, eq=False)
class LearnResult:
    params: ParameterSet
    trace: tuple[TraceRow, ...]
    converged: bool
    iterations_used: int
    initial_loglik: float
    final_loglik: float


@dataclass(frozen=True, eq=False)
class IterationState:
    """Handed to the ``callback`` of :func:`run` after every iteration."""

    iteration: int
    m_step_params: ParameterSet
    clipped_params: ParameterSet | None  # threshold-em only, before renormalization
    params: ParameterSet


class EStepResult(NamedTuple):
    stats: SufficientStatistics
    skipped: int
    observed_loglik: float  # over the records that were not skipped


def init_params(structure: NetworkStructure, config: LearnConfig) -> ParameterSet:
    if config.init == "uniform":
        return ParameterSet.uniform(structure)
    if config.init == "provided":
        if config.initial_params is None:
            raise ConfigurationError("init='provided' needs initial_params")
        check_parameters(structure, config.initial_params)
        return config.initial_params
    # Uniform on the simplex: normalized unit exponentials, one stream for the whole set.
    rng = SplitMix64.stream(config.seed, DOMAIN_INIT)
    tables = []
    for q, r in structure.table_shapes():
        t = np.array([[rng.exponential() for _ in range(r)] for _ in range(q)])
        tables.append(t / t.sum(axis=1, keepdims=True))
    return ParameterSet(tuple(tables))


def _complete_rows(structure, params, values):
    """Log-probability and family cells of fully observed records."""
    logp = np.zeros(values.shape[0])
    cells = []
    with np.errstate(divide="ignore"):
        for i, (q, r) in enumerate(structure.table_shapes()):
            j, k = family_codes(structure, values, i)
            logp += np.log(params.tables[i][j, k])
            cells.append(j * r + k)
    return logp, cells


def e_step(structure: NetworkStructure, params: ParameterSet, dataset) -> EStepResult:
    """Expected counts ``E[N_ijk]`` under ``params``.

    Records are grouped by missing pattern and each group goes through the
    batched elimination engine; fully observed records contribute their
    cell directly.  Per-record contributions are summed in record order.
    Records with zero probability are skipped and counted.
    """
    values = np.asarray(dataset.values)
    n_rec = values.shape[0]
    shapes = structure.table_shapes()
    contrib = [np.zeros((n_rec, q, r)) for q, r in shapes]
    logp = np.zeros(n_rec)

    missing = values == MISSING
    complete = ~missing.any(axis=1)
    if complete.any():
        rows = np.flatnonzero(complete)
        lp, cells = _complete_rows(structure, params, values[rows])
        logp[rows] = lp
        for i, (q, r) in enumerate(shapes):
            flat = contrib[i].reshape(n_rec, q * r)
            flat[rows, cells[i]] = 1.0

    if (~complete).any():
        patterns, inverse = np.unique(missing[~complete], axis=0, return_inverse=True)
        inc_rows = np.flatnonzero(~complete)
        inverse = inverse.reshape(-1)
        for g in range(patterns.shape[0]):
            rows = inc_rows[inverse == g]
            tables, p = batch_family_posteriors(structure, params, values[rows])
            with np.errstate(divide="ignore"):
                logp[rows] = np.log(p)
            for i in range(len(shapes)):
                contrib[i][rows] = tables[i]

    dead = ~np.isfinite(logp)
    for c in contrib:
        c[dead] = 0.0
    counts = tuple(c.sum(axis=0) for c in contrib)
    return EStepResult(SufficientStatistics(counts), int(dead.sum()), float(logp[~dead].sum()))


def m_step(stats: SufficientStatistics, config: LearnConfig, structure: NetworkStructure | None = None) -> ParameterSet:
    if config.m_step == "ml":
        return ml_estimate(stats).params
    if config.prior is None and structure is None:
        raise ConfigurationError("posterior-mean m-step needs a prior or a structure")
    prior = config.prior if config.prior is not None else PriorSpec.uniform(structure, 1.0)
    return posterior_mean_estimate(stats, prior)


def regularize(params: ParameterSet, bounds: ParameterBounds) -> tuple[ParameterSet, int]:
    """Clip every entry into ``[min, max]``; returns the clipped set and the number of changed entries."""
    if len(bounds) != len(params):
        raise CorruptBoundsError("bounds and parameters cover different node counts")
    tables, clips = [], 0
    for t, lo, hi in zip(params.tables, bounds.lower, bounds.upper):
        if lo.shape != t.shape or hi.shape != t.shape:
            raise CorruptBoundsError(f"bounds shape {lo.shape} does not match table shape {t.shape}")
        if np.any(lo > hi):
            raise CorruptBoundsError("a lower bound exceeds its upper bound")
        c = np.minimum(np.maximum(t, lo), hi)
        clips += int(np.count_nonzero(c != t))
        tables.append(c)
    return ParameterSet(tuple(tables)), clips


def normalize_rows(params: ParameterSet) -> ParameterSet:
    tables = []
    for t in params.tables:
        s = t.sum(axis=1, keepdims=True)
        if np.any(s <= 0.0) or not np.all(np.isfinite(s)):
            raise DegenerateRowError("cannot renormalize a row with non-positive sum")
        tables.append(t / s)
    return ParameterSet(tuple(tables))


def expected_complete_loglik(stats: SufficientStatistics, params: ParameterSet) -> float:
    """``sum N_ijk log theta_ijk`` over cells with ``N_ijk > 0``; ``-inf`` if such a cell has ``theta = 0``."""
    total = 0.0
    for n, t in zip(stats.counts, params.tables):
        pos = n > 0
        if np.any(t[pos] <= 0.0):
            return -math.inf
        total += float(np.sum(n[pos] * np.log(t[pos])))
    return total


def run(
    structure: NetworkStructure,
    dataset,
    config: LearnConfig,
    bounds: ParameterBounds | None = None,
    callback: Callable[[IterationState], None] | None = None,
) -> LearnResult:
    """Iterate until the largest parameter change drops below ``param_tolerance``.

    Trace row ``t`` describes the parameters produced by iteration ``t``:
    their observed-data log-likelihood, the expected complete-data
    log-likelihood of the counts they were fitted to, and the change from
    the previous iterate. The first iterate is only compared against the
    arbitrary starting point, so convergence is declared no earlier than
    iteration 2, once two fitted estimates agree.
    """
    threshold = config.algorithm == "threshold-em"
    if threshold and bounds is None:
        raise ConfigurationError("threshold-em needs bounds; see compute_bounds")
    theta = init_params(structure, config)
    est = e_step(structure, theta, dataset)
    initial_ll = est.observed_loglik

    trace = []
    converged = False
    for t in range(1, config.max_iterations + 1):
        fitted = m_step(est.stats, config, structure)
        clipped = None
        clips = violations = 0
        new = fitted
        if threshold:
            clipped, clips = regularize(fitted, bounds)
            if count_violations(clipped, bounds):
                raise CorruptBoundsError(f"iteration {t}: clipped parameters left their bounds")
            new = normalize_rows(clipped)
            violations = count_violations(new, bounds)
        delta = new.max_abs_diff(theta)
        q_value = expected_complete_loglik(est.stats, new)
        est = e_step(structure, new, dataset)
        trace.append(TraceRow(t, est.observed_loglik, q_value, delta, clips, violations, est.skipped))
        if callback is not None:
            callback(IterationState(t, fitted, clipped, new))
        theta = new
        if t > 1 and delta < config.param_tolerance:
            converged = True
            break

    return LearnResult(
        params=theta,
        trace=tuple(trace),
        converged=converged,
        iterations_used=len(trace),
        initial_loglik=initial_ll,
        final_loglik=est.observed_loglik,
    )


def learn(
    structure: NetworkStructure,
    dataset,
    config: LearnConfig,
    callback: Callable[[IterationState], None] | None = None,
) -> LearnResult:
    """:func:`run`, computing the bounds from ``dataset`` and the config prior when needed."""
    bounds = None
    if config.algorithm == "threshold-em":
        bounds = compute_bounds(structure, dataset, config.prior_for(structure))
    return run(structure, dataset, config, bounds, callback)
