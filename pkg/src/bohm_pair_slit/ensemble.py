"""
Ensemble runs: equilibrium sampling plus trajectory integration, chunk by chunk.

Chunks are the sampler's fixed index chunks. They may run on several threads, but
each chunk's result depends only on its index, and results are joined in chunk
order, so the thread count never changes the output.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from bohm_pair_slit.exceptions import ConfigError, RejectionBudgetExceeded
from bohm_pair_slit.integrate import (
    BatchResult,
    IntegratorConfig,
    Trajectory,
    TrajectoryStatus,
    integrate_batch,
)
from bohm_pair_slit.sampling import InitialSampler, SamplerConfig
from bohm_pair_slit.wavefunction import BoolArray, FloatArray, PhysicalParams

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "BOHM_PAIR_SLIT_THREADS"
# Largest tolerated fraction of trajectories lost at a node or to the step budget.
REJECTION_BUDGET = 1e-3
LOST_STATUSES = (TrajectoryStatus.REJECTED_NODE, TrajectoryStatus.STEP_BUDGET)


def configured_threads() -> int:
    value = os.environ.get(THREADS_ENV_VAR)
    if value is None or value.strip() == "":
        return 1
    try:
        threads = int(value)
    except ValueError as e:
        raise ConfigError(THREADS_ENV_VAR, f"must be an integer, got {value!r}") from e
    if threads < 1:
        raise ConfigError(THREADS_ENV_VAR, f"must be at least 1, got {threads}")
    return threads


@dataclass(frozen=True)
class EnsembleResult:
    batch: BatchResult
    screen_time: float
    conditioning_probability: float
    acceptance_rate: float

    @property
    def n_pairs(self) -> int:
        return len(self.batch)

    def count(self, status: TrajectoryStatus) -> int:
        return int(np.count_nonzero(self.batch.status == status))

    @property
    def counts(self) -> dict[str, int]:
        return {status.label: self.count(status) for status in TrajectoryStatus}

    @property
    def n_completed(self) -> int:
        return self.count(TrajectoryStatus.COMPLETED)

    @property
    def completed(self) -> BoolArray:
        return self.batch.status == TrajectoryStatus.COMPLETED

    @property
    def terminal_y1(self) -> FloatArray:
        """Screen positions of particle 1 over completed trajectories."""
        return self.batch.y1[self.completed]

    @property
    def terminal_y2(self) -> FloatArray:
        return self.batch.y2[self.completed]

    @property
    def n_lost(self) -> int:
        """Trajectories that never reached the screen; conditioning is not a loss."""
        return sum(self.count(status) for status in LOST_STATUSES)

    @property
    def rejection_fraction(self) -> float:
        return self.n_lost / self.n_pairs

    def trajectories(self) -> list[Trajectory]:
        return [self.batch.trajectory(i) for i in range(self.n_pairs)]

    def check_rejection_budget(self, budget: float = REJECTION_BUDGET) -> None:
        if self.rejection_fraction > budget:
            raise RejectionBudgetExceeded(
                f"{self.n_lost} of {self.n_pairs} trajectories never reached the screen"
                f" ({self.count(TrajectoryStatus.REJECTED_NODE)} at a node of the wave"
                f" function, {self.count(TrajectoryStatus.STEP_BUDGET)} out of steps;"
                f" fraction {self.rejection_fraction:.3g}, budget {budget:g})"
            )


def _concatenate(batches: list[BatchResult]) -> BatchResult:
    samples = None
    if all(batch.samples is not None for batch in batches):
        samples = tuple(s for batch in batches for s in (batch.samples or ()))
    return BatchResult(
        np.concatenate([b.y1_initial for b in batches]),
        np.concatenate([b.y2_initial for b in batches]),
        np.concatenate([b.y1 for b in batches]),
        np.concatenate([b.y2 for b in batches]),
        np.concatenate([b.t_final for b in batches]),
        np.concatenate([b.status for b in batches]),
        np.concatenate([b.steps for b in batches]),
        samples,
    )


def run_ensemble(
    params: PhysicalParams,
    sampler: SamplerConfig,
    integ: IntegratorConfig,
    screen_time: float,
    threads: int | None = None,
    record_samples: bool = False,
) -> EnsembleResult:
    """
    Sample `sampler.n_pairs` initial pairs and integrate them to `screen_time`.
    ConditioningStarved from the sampler propagates.
    """
    if threads is None:
        threads = configured_threads()
    initial = InitialSampler(params, sampler)
    draws = [initial.draw_chunk(index) for index in range(sampler.n_chunks)]
    pairs = initial.combine(draws)
    logger.info(
        "Sampled %d initial pairs (conditioning %s, acceptance %.4g)",
        sampler.n_pairs,
        sampler.conditioning.kind,
        pairs.acceptance_rate,
    )

    def integrate_chunk(index: int) -> BatchResult:
        draw = draws[index]
        result = integrate_batch(
            params, draw.y1, draw.y2, screen_time, integ, record_samples
        )
        logger.debug("Chunk %d: integrated %d trajectories", index, len(result))
        return result

    with ThreadPoolExecutor(max_workers=threads) as pool:
        batches = list(pool.map(integrate_chunk, range(sampler.n_chunks)))

    result = EnsembleResult(
        _concatenate(batches),
        screen_time,
        pairs.conditioning_probability,
        pairs.acceptance_rate,
    )
    logger.info(
        "Integrated %d trajectories to t=%g on %d thread(s): %s",
        result.n_pairs,
        screen_time,
        threads,
        ", ".join(f"{name} {count}" for name, count in result.counts.items()),
    )
    return result
