"""
Initial pair positions drawn from the quantum-equilibrium density |psi(t=0)|^2.

The pair density factorizes into two copies of the one-particle marginal, so each
coordinate is an inverse-CDF draw from the tabulated marginal. Draws are grouped in
fixed chunks of pair indices; chunk j always uses the same random stream, so the
sample is a function of the seed and the pair count only.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
from scipy.integrate import cumulative_trapezoid

from bohm_pair_slit.exceptions import ConditioningStarved, ConfigError, DegenerateGeometry
from bohm_pair_slit.guidance import PairState
from bohm_pair_slit.sqm import LevelInverse, MarginalTable, default_half_extent
from bohm_pair_slit.wavefunction import BoolArray, FloatArray, PhysicalParams

logger = logging.getLogger(__name__)

CHUNK_SIZE = 4096
# Conditioned draw-and-filter sampling gives up below this acceptance rate.
MIN_ACCEPTANCE = 1e-4
# Candidates drawn before the acceptance rate is first judged.
ACCEPTANCE_MIN_CANDIDATES = 100_000
REJECTION_ROUND = 16_384
MAX_SEED = 2**64 - 1


class ConditioningKind(StrEnum):
    NONE = "none"
    OPPOSITE_SLITS = "opposite_slits"
    COM_OFFSET = "com_offset"


@dataclass(frozen=True, kw_only=True)
class Conditioning:
    """
    Restriction of the initial ensemble. For `com_offset`, (y1 + y2) / 2 must lie in a
    window of full width `window_width` centered on `target_mean`; `opposite_sides`
    additionally requires y1 y2 < 0.
    """

    kind: ConditioningKind = ConditioningKind.NONE
    target_mean: float = 0.0
    window_width: float = 0.0
    opposite_sides: bool = True
    rejection: bool = False

    def __post_init__(self) -> None:
        if self.kind != ConditioningKind.COM_OFFSET:
            return
        if not math.isfinite(self.target_mean):
            raise ConfigError(
                "conditioning.target_mean", f"must be finite, got {self.target_mean}"
            )
        if not math.isfinite(self.window_width) or self.window_width <= 0:
            raise ConfigError(
                "conditioning.window_width",
                f"must be positive for com_offset, got {self.window_width}",
            )

    def accepts(self, y1: FloatArray, y2: FloatArray) -> BoolArray:
        """Mask of pairs inside the conditioning event."""
        match self.kind:
            case ConditioningKind.NONE:
                return np.ones(np.shape(y1), dtype=np.bool_)
            case ConditioningKind.OPPOSITE_SLITS:
                return y1 * y2 < 0
            case ConditioningKind.COM_OFFSET:
                inside = np.abs(0.5 * (y1 + y2) - self.target_mean) <= 0.5 * self.window_width
                if self.opposite_sides:
                    inside &= y1 * y2 < 0
                return inside


@dataclass(frozen=True, kw_only=True)
class SamplerConfig:
    n_pairs: int
    seed: int
    conditioning: Conditioning = field(default_factory=Conditioning)

    def __post_init__(self) -> None:
        if self.n_pairs < 1:
            raise ConfigError("n_pairs", f"must be at least 1, got {self.n_pairs}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def n_chunks(self) -> int:
        return math.ceil(self.n_pairs / CHUNK_SIZE)

    def chunk_bounds(self, index: int) -> tuple[int, int]:
        start = index * CHUNK_SIZE
        return start, min(start + CHUNK_SIZE, self.n_pairs)


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


@dataclass(frozen=True)
class ChunkDraw:
    y1: FloatArray
    y2: FloatArray
    candidates: int


@dataclass(frozen=True)
class InitialPairs:
    y1: FloatArray
    y2: FloatArray
    # Probability of the conditioning event under the unconditioned equilibrium density.
    conditioning_probability: float
    # Fraction of candidates kept; 1 when the draws are direct.
    acceptance_rate: float

    def states(self) -> list[PairState]:
        return [PairState(float(a), float(b), 0.0) for a, b in zip(self.y1, self.y2)]


class _ComWindowDensity:
    """
    Tabulated density of the first coordinate q of a pair conditioned on the COM window,
    g(q) = rho(q) * P(partner in [lo(q), hi(q)]). For the opposite-side variant q is the
    coordinate on the far side of the axis and the partner is kept on the near side.
    """

    def __init__(self, table: MarginalTable, conditioning: Conditioning) -> None:
        self.table: MarginalTable = table
        self.center_sum: float = 2.0 * abs(conditioning.target_mean)
        self.sum_half_width: float = conditioning.window_width
        self.opposite_sides: bool = conditioning.opposite_sides

        grid = table.grid
        density = table.density
        if self.opposite_sides:
            far_side = grid <= 0.0
            grid = grid[far_side]
            density = density[far_side]
        lower, upper = self.partner_bounds(grid)
        weight = density * table.interval_mass(lower, upper)
        cumulative = cumulative_trapezoid(weight, grid, initial=0.0)
        total = float(cumulative[-1])
        self.probability: float = 2.0 * total if self.opposite_sides else total
        if not math.isfinite(total) or total <= 0.0:
            raise ConditioningStarved(
                "The center-of-mass window has no representable probability mass:"
                f" sum window {self.center_sum} +/- {self.sum_half_width}"
            )
        self._inverse: LevelInverse = LevelInverse(cumulative / total, grid)

    def partner_bounds(self, q: FloatArray) -> tuple[FloatArray, FloatArray]:
        lower = self.center_sum - self.sum_half_width - q
        upper = self.center_sum + self.sum_half_width - q
        if self.opposite_sides:
            lower = np.maximum(lower, 0.0)
        return lower, upper

    def draw(self, uniforms: FloatArray) -> tuple[FloatArray, FloatArray]:
        q = self._inverse(uniforms[:, 0])
        lower, upper = self.partner_bounds(q)
        partner = self.table.truncated_quantile(uniforms[:, 1], lower, upper)
        return q, partner


class InitialSampler:
    """
    Equilibrium sampler for one configuration. Immutable after construction, so chunks
    may be drawn from several threads at once.
    """

    def __init__(self, params: PhysicalParams, config: SamplerConfig) -> None:
        self.config: SamplerConfig = config
        conditioning = config.conditioning
        half_extent = default_half_extent(params, 0.0)
        if conditioning.kind == ConditioningKind.COM_OFFSET:
            # partners of a far-side coordinate reach past the window's sum
            half_extent += 2.0 * abs(conditioning.target_mean) + conditioning.window_width
        # capped by the table at the range where the density is representable
        self.table: MarginalTable = MarginalTable(params, 0.0, half_extent=half_extent)
        self._window: _ComWindowDensity | None = None

        match conditioning.kind:
            case ConditioningKind.NONE:
                self.conditioning_probability: float = 1.0
            case ConditioningKind.OPPOSITE_SLITS:
                below = float(self.table.cdf_at(0.0))
                self.conditioning_probability = 2.0 * below * (1.0 - below)
            case ConditioningKind.COM_OFFSET:
                try:
                    self._window = _ComWindowDensity(self.table, conditioning)
                except DegenerateGeometry as e:
                    raise ConditioningStarved(
                        "The center-of-mass window is not resolved by the equilibrium"
                        f" table: {e}"
                    ) from e
                self.conditioning_probability = self._window.probability
        logger.debug(
            "Initial sampler: conditioning %s, event probability %.6g",
            conditioning.kind,
            self.conditioning_probability,
        )

    @property
    def uses_rejection(self) -> bool:
        conditioning = self.config.conditioning
        return conditioning.kind == ConditioningKind.OPPOSITE_SLITS or (
            conditioning.kind == ConditioningKind.COM_OFFSET and conditioning.rejection
        )

    def draw_chunk(self, index: int) -> ChunkDraw:
        start, stop = self.config.chunk_bounds(index)
        size = stop - start
        rng = chunk_rng(self.config.seed, index)
        if self.uses_rejection:
            return self._draw_filtered(rng, size)
        if self._window is not None:
            return self._draw_window(rng, size)
        positions = self.table.quantile(rng.random((size, 2)))
        return ChunkDraw(positions[:, 0], positions[:, 1], size)

    def _draw_window(self, rng: np.random.Generator, size: int) -> ChunkDraw:
        assert self._window is not None, "Window density must exist for com_offset"
        uniforms = rng.random((size, 3))
        q, partner = self._window.draw(uniforms)
        if self._window.opposite_sides:
            swap = uniforms[:, 2] < 0.5
            y1 = np.where(swap, partner, q)
            y2 = np.where(swap, q, partner)
        else:
            y1, y2 = q, partner
        if self.config.conditioning.target_mean < 0:
            y1, y2 = -y1, -y2
        return ChunkDraw(y1, y2, size)

    def _draw_filtered(self, rng: np.random.Generator, size: int) -> ChunkDraw:
        conditioning = self.config.conditioning
        kept_y1: list[FloatArray] = []
        kept_y2: list[FloatArray] = []
        kept = 0
        candidates = 0
        budget = math.ceil(size / MIN_ACCEPTANCE)
        while kept < size:
            positions = self.table.quantile(rng.random((REJECTION_ROUND, 2)))
            mask = conditioning.accepts(positions[:, 0], positions[:, 1])
            accepted = np.flatnonzero(mask)
            if kept + len(accepted) >= size:
                # the round's candidates after the one completing the chunk go unused
                accepted = accepted[: size - kept]
                candidates += int(accepted[-1]) + 1
            else:
                candidates += REJECTION_ROUND
            kept_y1.append(positions[accepted, 0])
            kept_y2.append(positions[accepted, 1])
            kept += len(accepted)
            acceptance = kept / candidates
            if (candidates >= ACCEPTANCE_MIN_CANDIDATES and acceptance < MIN_ACCEPTANCE) or (
                kept < size and candidates >= budget
            ):
                raise ConditioningStarved(
                    f"Conditioned sampling ({conditioning.kind}) accepted {kept} of"
                    f" {candidates} candidates, below the minimum acceptance rate"
                    f" {MIN_ACCEPTANCE}"
                )
        return ChunkDraw(np.concatenate(kept_y1), np.concatenate(kept_y2), candidates)

    def draw_all(self) -> InitialPairs:
        draws = [self.draw_chunk(index) for index in range(self.config.n_chunks)]
        return self.combine(draws)

    def combine(self, draws: list[ChunkDraw]) -> InitialPairs:
        y1 = np.concatenate([draw.y1 for draw in draws])
        y2 = np.concatenate([draw.y2 for draw in draws])
        candidates = sum(draw.candidates for draw in draws)
        return InitialPairs(
            y1, y2, self.conditioning_probability, len(y1) / candidates
        )


def draw_initial_pairs(params: PhysicalParams, sampler: SamplerConfig) -> InitialPairs:
    return InitialSampler(params, sampler).draw_all()


def sample_initial_positions(
    params: PhysicalParams, sampler: SamplerConfig
) -> list[PairState]:
    """Initial pair states at t = 0, with the configured conditioning applied."""
    return draw_initial_pairs(params, sampler).states()
