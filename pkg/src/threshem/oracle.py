"""Brute-force oracles and the paired EM / threshold-EM experiment.

The oracles deliberately avoid the factor machinery: marginals come from
summing :func:`joint_probability` over every full assignment, and bound
extrema from estimating on every completion of the missing cells.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .bounds import ParameterBounds, compute_bounds, count_violations
from .dataio import Dataset, forward_sample, mask_mcar
from .em import LearnConfig, LearnResult, run
from .errors import CapacityError, ConfigurationError, ZeroProbabilityEvidenceError
from .inference import Posterior, as_evidence
from .model import MISSING, NetworkStructure, Node, ParameterSet, PriorSpec, joint_probability
from .rng import DOMAIN_TRIAL, derive_seed

BRUTE_LIMIT = 2**20
COMPLETION_CAP = 2**16


def brute_marginal(
    structure: NetworkStructure,
    params: ParameterSet,
    evidence: Sequence[int | None],
    targets: Sequence[int | str],
    limit: int = BRUTE_LIMIT,
) -> Posterior:
    cards = structure.cardinalities
    size = math.prod(cards)
    if size > limit:
        raise CapacityError(f"joint state space has {size} assignments, limit {limit}", size)
    ev = as_evidence(structure, evidence)
    tgt = [structure.node_index(t) for t in targets]
    table = np.zeros([cards[t] for t in tgt])
    total = 0.0
    for assignment in itertools.product(*[range(c) for c in cards]):
        if any(e != MISSING and e != a for e, a in zip(ev, assignment)):
            continue
        p = joint_probability(structure, params, assignment)
        total += p
        table[tuple(assignment[t] for t in tgt)] += p
    if not total > 0.0:
        raise ZeroProbabilityEvidenceError("evidence has probability zero")
    return Posterior(table / total, total)


def brute_family_posterior(structure, params, evidence, node) -> np.ndarray:
    i = structure.node_index(node)
    table, _ = brute_marginal(structure, params, evidence, structure.family(i))
    return table.reshape(structure.n_configs[i], structure.cardinalities[i])


def completion_count(dataset: Dataset, structure: NetworkStructure) -> int:
    cards = structure.cardinalities
    holes = np.argwhere(dataset.values == MISSING)
    return math.prod(cards[c] for _, c in holes)


def enumerate_completions(
    dataset: Dataset, structure: NetworkStructure, cap: int = COMPLETION_CAP
) -> Iterator[Dataset]:
    """Every completion of the missing cells, the last missing cell (row-major) varying fastest."""
    count = completion_count(dataset, structure)
    if count > cap:
        raise CapacityError(f"{count} completions exceed the cap of {cap}", count)
    holes = [tuple(h) for h in np.argwhere(dataset.values == MISSING)]
    cards = structure.cardinalities

    def generate():
        base = np.array(dataset.values)
        for fill in itertools.product(*[range(cards[c]) for _, c in holes]):
            for (r, c), v in zip(holes, fill):
                base[r, c] = v
            yield Dataset(dataset.columns, base.copy())

    return generate()


@dataclass(frozen=True, eq=False)
class SandwichReport:
    """Per node, ``q_i x r_i`` arrays comparing the bounds with completion extrema."""

    bound_min: tuple[np.ndarray, ...]
    bound_max: tuple[np.ndarray, ...]
    completion_min: tuple[np.ndarray, ...]
    completion_max: tuple[np.ndarray, ...]
    conforms: tuple[np.ndarray, ...]
    tight: tuple[np.ndarray, ...]

    @property
    def all_conform(self) -> bool:
        return all(bool(c.all()) for c in self.conforms)

    @property
    def all_tight(self) -> bool:
        return all(bool(t.all()) for t in self.tight)


def _completion_fills(dataset: Dataset, structure: NetworkStructure, cap: int, chunk: int):
    """Blocks of completed value arrays, shape ``(block, records, nodes)``, in enumeration order."""
    count = completion_count(dataset, structure)
    if count > cap:
        raise CapacityError(f"{count} completions exceed the cap of {cap}", count)
    holes = np.argwhere(dataset.values == MISSING)
    cards = structure.cardinalities
    fills = itertools.product(*[range(cards[c]) for _, c in holes])
    while True:
        block = list(itertools.islice(fills, chunk))
        if not block:
            return
        values = np.repeat(np.asarray(dataset.values)[None], len(block), axis=0)
        if len(holes):
            values[:, holes[:, 0], holes[:, 1]] = np.array(block, dtype=np.int64)
        yield values


def sandwich_report(
    structure: NetworkStructure,
    dataset: Dataset,
    prior: PriorSpec,
    tol: float = 1e-12,
    cap: int = COMPLETION_CAP,
) -> SandwichReport:
    """Compare the bounds with the posterior-mean estimates of every completion.

    Completions are counted in blocks; the estimate uses the same arithmetic
    as :func:`posterior_mean_estimate`, one completion per leading index.
    """
    bounds = compute_bounds(structure, dataset, prior)
    shapes = structure.table_shapes()
    lo = [np.full(shape, np.inf) for shape in shapes]
    hi = [np.full(shape, -np.inf) for shape in shapes]
    inside = [np.ones(shape, dtype=bool) for shape in shapes]
    cards = structure.cardinalities
    for values in _completion_fills(dataset, structure, cap, chunk=1024):
        n_comp, n_rec = values.shape[:2]
        for i, (q, r) in enumerate(shapes):
            j = np.zeros((n_comp, n_rec), dtype=np.int64)
            for p in structure.parent_indices[i]:
                j = j * cards[p] + values[:, :, p]
            cell = np.arange(n_comp)[:, None] * (q * r) + j * r + values[:, :, i]
            counts = np.bincount(cell.reshape(-1), minlength=n_comp * q * r).reshape(n_comp, q, r).astype(float)
            est = (prior.alpha[i][None] + counts) / (prior.alpha_row[i][None, :] + counts.sum(axis=2))[:, :, None]
            np.minimum(lo[i], est.min(axis=0), out=lo[i])
            np.maximum(hi[i], est.max(axis=0), out=hi[i])
            ok = (est >= bounds.lower[i] - tol) & (est <= bounds.upper[i] + tol)
            inside[i] &= ok.all(axis=0)
    tight = tuple(
        (np.abs(lo[i] - bounds.lower[i]) <= tol) & (np.abs(hi[i] - bounds.upper[i]) <= tol)
        for i in range(len(structure))
    )
    return SandwichReport(bounds.lower, bounds.upper, tuple(lo), tuple(hi), tuple(inside), tight)


# -- random instances ------------------------------------------------------------


def random_network(
    rng: np.random.Generator, n_nodes: int, max_states: int = 2, max_parents: int = 2, min_states: int = 2
) -> NetworkStructure:
    """Random DAG; node ``m`` draws up to ``max_parents`` parents among nodes declared before it."""
    nodes = []
    for m in range(n_nodes):
        r = int(rng.integers(min_states, max_states + 1))
        k = int(rng.integers(0, min(max_parents, m) + 1))
        parents = sorted(rng.choice(m, size=k, replace=False).tolist()) if k else []
        nodes.append(Node(f"X{m}", tuple(f"s{s}" for s in range(r)), tuple(f"X{p}" for p in parents)))
    return NetworkStructure(tuple(nodes))


def random_params(rng: np.random.Generator, structure: NetworkStructure) -> ParameterSet:
    return ParameterSet(tuple(rng.dirichlet(np.ones(r), size=q) for q, r in structure.table_shapes()))


def random_evidence(rng: np.random.Generator, structure: NetworkStructure, p_observed: float = 0.5) -> list[int | None]:
    return [int(rng.integers(c)) if rng.random() < p_observed else None for c in structure.cardinalities]


# -- paired experiment ---------------------------------------------------------------


@dataclass(frozen=True)
class CompareConfig:
    records: int = 200
    rate: float = 0.3716
    trials: int = 20
    seed: int = 0
    max_iterations: int = 200
    param_tolerance: float = 1e-6
    alpha: float = 1.0


@dataclass(frozen=True)
class TrialSummary:
    trial: int
    em_iters: int
    them_iters: int
    em_final_ll: float
    them_final_ll: float
    em_zero_params: int
    them_zero_params: int
    them_violations: int

    def row(self) -> tuple:
        return (
            self.trial,
            self.em_iters,
            self.them_iters,
            self.em_final_ll,
            self.them_final_ll,
            self.em_zero_params,
            self.them_zero_params,
            self.them_violations,
        )


@dataclass(frozen=True)
class CompareSummary:
    trials: tuple[TrialSummary, ...]

    @property
    def them_faster_fraction(self) -> float | None:
        """Share of trials where threshold EM stopped in fewer iterations; reported, not judged."""
        if not self.trials:
            return None
        return sum(t.them_iters < t.em_iters for t in self.trials) / len(self.trials)


def zero_param_count(params: ParameterSet) -> int:
    return int(sum(np.count_nonzero(t == 0.0) for t in params.tables))


def run_trial(
    structure: NetworkStructure, true_params: ParameterSet, config: CompareConfig, trial: int
) -> tuple[TrialSummary, LearnResult, LearnResult, ParameterBounds]:
    seed = derive_seed(config.seed, DOMAIN_TRIAL, trial)
    data = mask_mcar(forward_sample(structure, true_params, config.records, seed), config.rate, seed)
    prior = PriorSpec.uniform(structure, config.alpha)
    bounds = compute_bounds(structure, data, prior)
    common = dict(
        max_iterations=config.max_iterations,
        param_tolerance=config.param_tolerance,
        init="random-simplex",
        seed=seed,
        m_step="ml",
        prior=prior,
    )
    em = run(structure, data, LearnConfig(algorithm="em", **common))
    them = run(structure, data, LearnConfig(algorithm="threshold-em", **common), bounds)
    summary = TrialSummary(
        trial=trial,
        em_iters=em.iterations_used,
        them_iters=them.iterations_used,
        em_final_ll=em.final_loglik,
        them_final_ll=them.final_loglik,
        em_zero_params=zero_param_count(em.params),
        them_zero_params=zero_param_count(them.params),
        them_violations=count_violations(them.params, bounds),
    )
    return summary, em, them, bounds


def compare_runs(structure: NetworkStructure, true_params: ParameterSet, config: CompareConfig) -> CompareSummary:
    """Sample, mask, bound and learn with both algorithms from one shared init, per trial."""
    if config.trials < 0 or config.records < 0:
        raise ConfigurationError("trial and record counts must be nonnegative")
    return CompareSummary(tuple(run_trial(structure, true_params, config, t)[0] for t in range(config.trials)))
