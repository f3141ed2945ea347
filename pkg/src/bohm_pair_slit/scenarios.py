"""
The two discriminating two-particle experiments.

The symmetric case starts from the full equilibrium ensemble at s T ~ 1 and measures
how symmetrically the pairs reach the screen. The selective case conditions the
ensemble on a center-of-mass offset, keeps only pairs detected on opposite sides of the
axis at s T >> 1, and measures the detection-free band that opens beside the axis.
Both compare against standard quantum mechanics detection probabilities on the same
screen.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np
from scipy import stats

from bohm_pair_slit.ensemble import EnsembleResult, run_ensemble
from bohm_pair_slit.exceptions import ConfigError, ConstraintViolated
from bohm_pair_slit.integrate import IntArray, IntegratorConfig, TrajectoryStatus
from bohm_pair_slit.jsonish import JObject
from bohm_pair_slit.sampling import ConditioningKind, SamplerConfig
from bohm_pair_slit.sqm import (
    ScreenConfig,
    bin_mass,
    fringe_spacing,
    marginal_density,
    mirror_pair_probability,
    offband_probability,
)
from bohm_pair_slit.wavefunction import BoolArray, FloatArray, PhysicalParams

logger = logging.getLogger(__name__)

# "Much less than" is read as a left/right ratio of at most this.
MUCH_LESS_RATIO = 0.1
SYMMETRIC_MAX_OFFSET_RATIO = 0.1
SYMMETRIC_ST_RANGE = (0.5, 2.0)
SELECTIVE_MIN_ST = 10.0
SELECTIVE_MIN_OFFSET_WIDTHS = 3.0
ST_AGREEMENT = 1e-9
# Bins with fewer expected counts are pooled out of the chi-square test.
MIN_EXPECTED_COUNT = 5.0


class Case(StrEnum):
    SYMMETRIC = "symmetric_3_1"
    SELECTIVE = "selective_3_2"


@dataclass(frozen=True, kw_only=True)
class ScenarioConfig:
    case: Case
    params: PhysicalParams
    screen: ScreenConfig
    sampler: SamplerConfig
    integ: IntegratorConfig
    target_st: float

    def __post_init__(self) -> None:
        actual = self.st
        if not math.isclose(actual, self.target_st, rel_tol=ST_AGREEMENT):
            raise ConfigError(
                "st",
                f"{self.target_st} does not match s T = {actual} of the configured"
                " screen distance",
            )

    @property
    def screen_time(self) -> float:
        return self.screen.screen_time(self.params)

    @property
    def st(self) -> float:
        return self.params.spreading_rate * self.screen_time


def validate_case(cfg: ScenarioConfig) -> None:
    """Raise ConstraintViolated unless cfg meets the requirements of its case."""
    sigma0 = cfg.params.sigma0
    y = cfg.params.slit_offset
    if y <= 0:
        raise ConstraintViolated(
            "slit_offset_positive", "Y", f"both cases need separated slits, got Y = {y}"
        )
    match cfg.case:
        case Case.SYMMETRIC:
            if y > SYMMETRIC_MAX_OFFSET_RATIO * sigma0:
                raise ConstraintViolated(
                    "narrow_slit_offset",
                    "Y",
                    f"symmetric case requires Y <= {SYMMETRIC_MAX_OFFSET_RATIO} sigma0"
                    f" = {SYMMETRIC_MAX_OFFSET_RATIO * sigma0}, got Y = {y}",
                )
            low, high = SYMMETRIC_ST_RANGE
            if not low <= cfg.target_st <= high:
                raise ConstraintViolated(
                    "moderate_spreading",
                    "st",
                    f"symmetric case requires s T in [{low}, {high}], got {cfg.target_st}",
                )
        case Case.SELECTIVE:
            if cfg.target_st < SELECTIVE_MIN_ST:
                raise ConstraintViolated(
                    "strong_spreading",
                    "st",
                    f"selective case requires s T >= {SELECTIVE_MIN_ST}, got {cfg.target_st}",
                )
            conditioning = cfg.sampler.conditioning
            if conditioning.kind != ConditioningKind.COM_OFFSET:
                raise ConstraintViolated(
                    "com_offset_conditioning",
                    "conditioning.kind",
                    f"selective case requires com_offset conditioning, got {conditioning.kind}",
                )
            minimum = SELECTIVE_MIN_OFFSET_WIDTHS * sigma0
            if abs(conditioning.target_mean) < minimum:
                raise ConstraintViolated(
                    "large_com_offset",
                    "conditioning.target_mean",
                    f"selective case requires |target_mean| >= {minimum}"
                    f" ({SELECTIVE_MIN_OFFSET_WIDTHS} sigma0), got {conditioning.target_mean}",
                )


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    satisfied: bool
    # Ratio of the left side to the right side of the "much less than" relation.
    margin: float

    def to_json(self) -> JObject:
        return {"name": self.name, "satisfied": self.satisfied, "margin": self.margin}


def _much_less(name: str, left: float, right: float) -> ConstraintCheck:
    ratio = left / right
    return ConstraintCheck(name, ratio <= MUCH_LESS_RATIO, ratio)


def check_constraints(cfg: ScenarioConfig) -> list[ConstraintCheck]:
    """
    Evaluate the geometric requirements of the experiments. The center-of-mass
    deviation on the screen, sigma0 sqrt(1 + s^2 T^2) for an initial spread of sigma0,
    must stay well below the fringe spacing for symmetric detection, and so must the
    detector size. The slit offset must stay well below 2 pi sigma0 and, for a
    center-of-mass offset, sigma0 well below the offset.
    """
    params = cfg.params
    checks: list[ConstraintCheck] = []
    if params.slit_offset > 0 and params.kx > 0:
        spacing = fringe_spacing(params, cfg.screen).from_time
        deviation = params.sigma0 * math.sqrt(1.0 + cfg.st**2)
        checks.append(_much_less("com_deviation_below_fringe_spacing", deviation, spacing))
        checks.append(_much_less("detector_below_fringe_spacing", cfg.screen.bin_delta, spacing))
    checks.append(
        _much_less(
            "slit_offset_below_2pi_sigma0", params.slit_offset, 2.0 * math.pi * params.sigma0
        )
    )
    conditioning = cfg.sampler.conditioning
    if conditioning.kind == ConditioningKind.COM_OFFSET and conditioning.target_mean != 0:
        checks.append(
            _much_less(
                "sigma0_below_com_offset", params.sigma0, abs(conditioning.target_mean)
            )
        )
    return checks


@dataclass(frozen=True)
class Histogram:
    edges: FloatArray
    counts: IntArray
    underflow: int
    overflow: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow

    def to_json(self) -> JObject:
        return {
            "edges": self.edges.tolist(),
            "counts": [int(c) for c in self.counts],
            "underflow": self.underflow,
            "overflow": self.overflow,
        }


def histogram(values: FloatArray, edges: FloatArray) -> Histogram:
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(
        edges,
        counts.astype(np.int64),
        int(np.count_nonzero(values < edges[0])),
        int(np.count_nonzero(values > edges[-1])),
    )


@dataclass(frozen=True)
class EmptyBand:
    lower: float
    upper: float
    l_predicted: float
    # Band length from the exact center-of-mass law 2 <y0> sqrt(1 + s^2 T^2).
    l_com_law: float

    @property
    def length_measured(self) -> float:
        return self.upper - self.lower

    @property
    def half_width_measured(self) -> float:
        return 0.5 * self.length_measured

    @property
    def ratio_to_predicted(self) -> float | None:
        if self.l_predicted == 0:
            return None
        return self.length_measured / self.l_predicted

    def to_json(self) -> JObject:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "length_measured": self.length_measured,
            "half_width_measured": self.half_width_measured,
            "L_predicted": self.l_predicted,
            "L_com_law": self.l_com_law,
            "ratio_to_predicted": self.ratio_to_predicted,
        }


def measure_empty_band(
    positions: FloatArray, l_predicted: float, screen: ScreenConfig, negative: bool = False
) -> EmptyBand:
    """
    Widest gap between neighbouring detections that overlaps [0, L] (or [-L, 0]). When
    no detection lies on the axis side, the axis is the inner edge; when none lies
    beyond, the screen edge is the outer one.
    """
    if negative:
        band = measure_empty_band(-positions, l_predicted, _mirrored(screen))
        return EmptyBand(-band.upper, -band.lower, band.l_predicted, band.l_com_law)
    points = np.sort(positions)
    if len(points) == 0 or points[0] > 0:
        points = np.concatenate(([0.0], points))
    if points[-1] < screen.y_max:
        points = np.concatenate((points, [screen.y_max]))
    lows = points[:-1]
    highs = points[1:]
    overlapping = (lows <= l_predicted) & (highs >= 0.0)
    widths = np.where(overlapping, highs - lows, -1.0)
    best = int(np.argmax(widths))
    return EmptyBand(float(lows[best]), float(highs[best]), l_predicted, 0.0)


def _mirrored(screen: ScreenConfig) -> ScreenConfig:
    return ScreenConfig(
        distance_d=screen.distance_d,
        bin_delta=screen.bin_delta,
        y_min=-screen.y_max,
        y_max=-screen.y_min,
        n_bins=screen.n_bins,
    )


@dataclass(frozen=True)
class SqmSelective:
    """
    The two standard quantum mechanics readings of the selective experiment: the pair
    detection probability renormalized to opposite-side outcomes, which gives detections
    inside the band, or no prediction for a post-selected trajectory subensemble.
    """

    band_probability: float
    expected_band_detections: float
    silent: bool = True
    note: str = (
        "Standard quantum mechanics assigns no trajectories, so it may also be read as"
        " making no prediction for the selected subensemble."
    )

    def to_json(self) -> JObject:
        return {
            "renormalized_band_probability": self.band_probability,
            "expected_band_detections": self.expected_band_detections,
            "sqm_silent": self.silent,
            "note": self.note,
        }


def sqm_band_probability(
    params: PhysicalParams, screen_time: float, lower: float, upper: float
) -> float:
    """
    Probability, under the pair detection density conditioned on opposite-side outcomes,
    that at least one particle lands inside [lower, upper].
    """
    positive = bin_mass(params, 0.0, math.inf, screen_time)
    negative = bin_mass(params, -math.inf, 0.0, screen_time)
    band_positive = bin_mass(params, max(lower, 0.0), upper, screen_time) if upper > 0 else 0.0
    band_negative = bin_mass(params, lower, min(upper, 0.0), screen_time) if lower < 0 else 0.0
    outside = (positive - band_positive) * (negative - band_negative)
    return float(np.clip(1.0 - outside / (positive * negative), 0.0, 1.0))


@dataclass(frozen=True, kw_only=True)
class EnsembleReport:
    case: Case
    n_pairs: int
    n_completed: int
    status_counts: dict[str, int]
    rejection_fraction: float
    conditioning_probability: float
    acceptance_rate: float
    screen_time: float
    st: float
    fringe_spacing: float
    marginal_histograms: tuple[Histogram, Histogram]
    com_histogram: Histogram
    # None when no pair reached the screen
    symmetry_metric: float | None
    mean_terminal_com: float | None
    bqm_mirror_fraction: float | None
    sqm_mirror_probability: float
    sqm_asymmetric_probability: float
    sqm_offband_probability: float
    constraint_checks: list[ConstraintCheck]
    equivariance_pvalue: float | None = None
    empty_band: EmptyBand | None = None
    sqm_selective: SqmSelective | None = None
    contested: bool = False
    # Trajectory data behind the report; not part of its JSON form.
    ensemble: EnsembleResult | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> JObject:
        report: JObject = {
            "case": str(self.case),
            "n_pairs": self.n_pairs,
            "n_completed": self.n_completed,
            "status_counts": {k: v for k, v in self.status_counts.items()},
            "rejection_fraction": self.rejection_fraction,
            "conditioning_probability": self.conditioning_probability,
            "acceptance_rate": self.acceptance_rate,
            "screen_time": self.screen_time,
            "st": self.st,
            "fringe_spacing": self.fringe_spacing,
            "marginal_histograms": [h.to_json() for h in self.marginal_histograms],
            "com_histogram": self.com_histogram.to_json(),
            "symmetry_metric": self.symmetry_metric,
            "mean_terminal_com": self.mean_terminal_com,
            "bqm_mirror_fraction": self.bqm_mirror_fraction,
            "sqm_mirror_probability": self.sqm_mirror_probability,
            "sqm_asymmetric_probability": self.sqm_asymmetric_probability,
            "sqm_offband_probability": self.sqm_offband_probability,
            "constraint_checks": [c.to_json() for c in self.constraint_checks],
            "equivariance_pvalue": self.equivariance_pvalue,
            "contested": self.contested,
        }
        if self.empty_band is not None:
            report["empty_band"] = self.empty_band.to_json()
        if self.sqm_selective is not None:
            report["sqm_selective"] = self.sqm_selective.to_json()
        return report


def mirror_fraction(y1: FloatArray, y2: FloatArray, bin_delta: float) -> float:
    """Fraction of pairs detected in mirror-image detectors of width bin_delta."""
    if len(y1) == 0:
        return 0.0
    mirrored = np.floor(y1 / bin_delta) == -np.floor(y2 / bin_delta) - 1
    return float(np.count_nonzero(mirrored)) / len(y1)


def equivariance_pvalue(
    params: PhysicalParams, positions: FloatArray, screen_time: float, edges: FloatArray
) -> float | None:
    """
    Chi-square p-value of a terminal position histogram against the standard quantum
    mechanics marginal over the same bins. Bins with too few expected counts are pooled.
    """
    inside = positions[(positions >= edges[0]) & (positions <= edges[-1])]
    if len(inside) == 0:
        return None
    observed, _ = np.histogram(inside, bins=edges)
    mass = marginal_density(params, screen_time, edges).mass
    expected = mass / mass.sum() * len(inside)
    keep = expected >= MIN_EXPECTED_COUNT
    if np.count_nonzero(keep) < 2:
        return None
    observed_kept = np.append(observed[keep], observed[~keep].sum())
    expected_kept = np.append(expected[keep], expected[~keep].sum())
    if expected_kept[-1] == 0:
        observed_kept = observed_kept[:-1]
        expected_kept = expected_kept[:-1]
    expected_kept *= observed_kept.sum() / expected_kept.sum()
    return float(stats.chisquare(observed_kept, expected_kept).pvalue)


def _base_report(
    cfg: ScenarioConfig, result: EnsembleResult, selected: BoolArray
) -> EnsembleReport:
    params = cfg.params
    screen = cfg.screen
    t = result.screen_time
    y1 = result.batch.y1[selected]
    y2 = result.batch.y2[selected]
    spacing = fringe_spacing(params, screen).from_time
    sqm_mirror = mirror_pair_probability(params, screen, t)
    counts = result.counts
    counts[TrajectoryStatus.REJECTED_CONDITION.label] = int(
        np.count_nonzero(result.completed & ~selected)
    )
    counts[TrajectoryStatus.COMPLETED.label] = int(np.count_nonzero(selected))
    com = 0.5 * (y1 + y2)
    reached = len(y1) > 0
    return EnsembleReport(
        case=cfg.case,
        n_pairs=result.n_pairs,
        n_completed=len(y1),
        status_counts=counts,
        rejection_fraction=result.rejection_fraction,
        conditioning_probability=result.conditioning_probability,
        acceptance_rate=result.acceptance_rate,
        screen_time=t,
        st=cfg.st,
        fringe_spacing=spacing,
        marginal_histograms=(histogram(y1, screen.edges), histogram(y2, screen.edges)),
        com_histogram=histogram(com, screen.edges),
        symmetry_metric=float(np.mean(np.abs(y1 + y2))) / spacing if reached else None,
        mean_terminal_com=float(np.mean(com)) if reached else None,
        bqm_mirror_fraction=mirror_fraction(y1, y2, screen.bin_delta) if reached else None,
        sqm_mirror_probability=sqm_mirror,
        sqm_asymmetric_probability=1.0 - sqm_mirror,
        sqm_offband_probability=offband_probability(params, t, 0.5 * spacing),
        constraint_checks=check_constraints(cfg),
        ensemble=result,
    )


def _log_report(report: EnsembleReport) -> None:
    logger.info(
        "%s: %d of %d pairs reported, symmetry metric %s, SQM asymmetric probability %.4g",
        report.case,
        report.n_completed,
        report.n_pairs,
        "none" if report.symmetry_metric is None else f"{report.symmetry_metric:.4g}",
        report.sqm_asymmetric_probability,
    )
    for check in report.constraint_checks:
        if not check.satisfied:
            logger.warning(
                "Constraint %s not satisfied (margin %.4g)", check.name, check.margin
            )


def run_symmetric_case(cfg: ScenarioConfig, record_samples: bool = False) -> EnsembleReport:
    """
    Run the full equilibrium ensemble and report how symmetrically pairs reach the
    screen, next to the standard quantum mechanics probability of asymmetric detection.
    """
    if cfg.case != Case.SYMMETRIC:
        raise ConfigError("case", f"expected {Case.SYMMETRIC}, got {cfg.case}")
    validate_case(cfg)
    result = run_ensemble(
        cfg.params,
        cfg.sampler,
        cfg.integ,
        cfg.screen_time,
        record_samples=record_samples,
    )
    report = _base_report(cfg, result, result.completed)
    pvalue = None
    if cfg.sampler.conditioning.kind == ConditioningKind.NONE:
        pvalue = equivariance_pvalue(
            cfg.params, result.terminal_y1, result.screen_time, cfg.screen.edges
        )
    report = replace(report, equivariance_pvalue=pvalue)
    _log_report(report)
    return report


def run_selective_case(
    cfg: ScenarioConfig,
    zero_offset_control: bool = False,
    record_samples: bool = False,
) -> EnsembleReport:
    """
    Run the center-of-mass conditioned ensemble, keep pairs detected on opposite sides
    of the axis and measure the detection-free band beside it. With
    `zero_offset_control` the offset requirement is waived so that a window centered on
    the axis can serve as the control run.
    """
    if cfg.case != Case.SELECTIVE:
        raise ConfigError("case", f"expected {Case.SELECTIVE}, got {cfg.case}")
    conditioning = cfg.sampler.conditioning
    if not zero_offset_control:
        validate_case(cfg)
    elif conditioning.kind != ConditioningKind.COM_OFFSET:
        raise ConstraintViolated(
            "com_offset_conditioning",
            "conditioning.kind",
            f"selective case requires com_offset conditioning, got {conditioning.kind}",
        )
    result = run_ensemble(
        cfg.params,
        cfg.sampler,
        cfg.integ,
        cfg.screen_time,
        record_samples=record_samples,
    )
    selected = result.completed & (result.batch.y1 * result.batch.y2 < 0)
    report = _base_report(cfg, result, selected)

    params = cfg.params
    t = result.screen_time
    offset = abs(conditioning.target_mean)
    l_predicted = params.hbar * t * offset / (params.mass * params.sigma0**2)
    l_com_law = 2.0 * offset * math.sqrt(1.0 + (params.spreading_rate * t) ** 2)
    pooled = np.concatenate((result.batch.y1[selected], result.batch.y2[selected]))
    band = measure_empty_band(
        pooled, l_predicted, cfg.screen, negative=conditioning.target_mean < 0
    )
    band = EmptyBand(band.lower, band.upper, l_predicted, l_com_law)
    probability = sqm_band_probability(params, t, band.lower, band.upper)
    sqm = SqmSelective(probability, probability * report.n_completed)
    logger.info(
        "Empty band [%.6g, %.6g], length %.6g against predicted %.6g",
        band.lower,
        band.upper,
        band.length_measured,
        l_predicted,
    )
    if sqm.expected_band_detections >= 1.0:
        logger.warning(
            "Renormalized pair detection probability expects %.4g detections inside"
            " the measured empty band",
            sqm.expected_band_detections,
        )
    report = replace(report, empty_band=band, sqm_selective=sqm, contested=True)
    _log_report(report)
    return report


def run_scenario(cfg: ScenarioConfig, record_samples: bool = False) -> EnsembleReport:
    match cfg.case:
        case Case.SYMMETRIC:
            return run_symmetric_case(cfg, record_samples=record_samples)
        case Case.SELECTIVE:
            return run_selective_case(cfg, record_samples=record_samples)
