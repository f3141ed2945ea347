"""
Standard quantum mechanics observables on the detection screen: joint density, joint
detection probabilities over detector bins, marginals and fringe spacing.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, dblquad, quad
from scipy.interpolate import PchipInterpolator

from bohm_pair_slit.exceptions import ConfigError, DegenerateGeometry
from bohm_pair_slit.wavefunction import (
    Coordinate,
    FloatArray,
    PhysicalParams,
    one_particle_density,
    psi_total_factorized,
    sigma_t,
)

# Per-bin absolute tolerance of the detector quadratures.
QUADRATURE_EPSABS = 1e-8
QUADRATURE_EPSREL = 1e-10
# Default half-extent of a screen or table, in units of |sigma_t|.
EXTENT_WIDTHS = 8.0
# Beyond this many |sigma_t| from a slit the density underflows float64.
REPRESENTABLE_WIDTHS = 36.0
TABLE_POINTS = 10_001
# Tabulated levels below the floor, or rising by less than the resolution in log space,
# are left out of inverse interpolation.
LEVEL_FLOOR = 1e-300
LEVEL_RESOLUTION = 64 * float(np.finfo(np.float64).eps)


@dataclass(frozen=True, kw_only=True)
class ScreenConfig:
    """Detector geometry: screen at x = D, detector size bin_delta, histogram grid."""

    distance_d: float
    bin_delta: float
    y_min: float
    y_max: float
    n_bins: int = 50

    def __post_init__(self) -> None:
        if not math.isfinite(self.distance_d) or self.distance_d <= 0:
            raise ConfigError("D", f"must be positive, got {self.distance_d}")
        if not math.isfinite(self.bin_delta) or self.bin_delta <= 0:
            raise ConfigError("bin_delta", f"must be positive, got {self.bin_delta}")
        if not (math.isfinite(self.y_min) and math.isfinite(self.y_max)):
            raise ConfigError("y_min", "screen extent must be finite")
        if self.y_min >= self.y_max:
            raise ConfigError(
                "y_max", f"must exceed y_min ({self.y_min}), got {self.y_max}"
            )
        if self.n_bins < 1:
            raise ConfigError("n_bins", f"must be at least 1, got {self.n_bins}")

    def screen_time(self, params: PhysicalParams) -> float:
        """Arrival time T = D / u_x of both particles."""
        if params.u_x <= 0:
            raise ConfigError("kx", f"must be positive to reach the screen, got {params.kx}")
        return self.distance_d / params.u_x

    @property
    def edges(self) -> FloatArray:
        return np.linspace(self.y_min, self.y_max, self.n_bins + 1)

    def detector_origins(self) -> FloatArray:
        """
        Origins Q of bin_delta wide detectors tiling the screen symmetrically about the
        axis, so that the detector at Q has its mirror image at -Q - bin_delta.
        """
        reach = max(abs(self.y_min), abs(self.y_max))
        count = math.ceil(reach / self.bin_delta)
        return self.bin_delta * np.arange(-count, count, dtype=np.float64)


def default_half_extent(params: PhysicalParams, t: float) -> float:
    return (
        params.slit_offset
        + abs(params.u_y) * t
        + EXTENT_WIDTHS * float(np.abs(sigma_t(params, t)))
    )


def representable_half_extent(params: PhysicalParams, t: float) -> float:
    """Half-extent past which the one-particle density is zero in float64."""
    return (
        params.slit_offset
        + abs(params.u_y) * t
        + REPRESENTABLE_WIDTHS * float(np.abs(sigma_t(params, t)))
    )


def joint_density(
    params: PhysicalParams, y1: Coordinate, y2: Coordinate, t: Coordinate
) -> FloatArray:
    """|psi|^2 on the screen; the common x phase cancels."""
    return np.abs(psi_total_factorized(params, 0.0, y1, 0.0, y2, t)) ** 2


def bin_mass(params: PhysicalParams, lower: float, upper: float, t: float) -> float:
    """Marginal probability of detecting a given particle in [lower, upper]."""
    value, _error = quad(
        lambda y: float(one_particle_density(params, y, t)),
        lower,
        upper,
        epsabs=QUADRATURE_EPSABS,
        epsrel=QUADRATURE_EPSREL,
        limit=200,
    )
    return max(0.0, value)


def joint_detection_probability(
    params: PhysicalParams, screen: ScreenConfig, q1: float, q2: float
) -> float:
    """
    Probability that particle 1 lands in [q1, q1 + delta] and particle 2 in
    [q2, q2 + delta] at the screen time, by nested adaptive quadrature.
    """
    t = screen.screen_time(params)
    delta = screen.bin_delta
    value, _error = dblquad(
        lambda y2, y1: float(joint_density(params, y1, y2, t)),
        q1,
        q1 + delta,
        q2,
        q2 + delta,
        epsabs=QUADRATURE_EPSABS,
        epsrel=QUADRATURE_EPSREL,
    )
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class MarginalCurve:
    edges: FloatArray
    mass: FloatArray
    density: FloatArray

    @property
    def centers(self) -> FloatArray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def marginal_density(
    params: PhysicalParams, t: float, edges: FloatArray
) -> MarginalCurve:
    """Per-bin marginal probability of one particle and the density at bin centers."""
    mass = np.array(
        [bin_mass(params, lower, upper, t) for lower, upper in zip(edges[:-1], edges[1:])]
    )
    centers = 0.5 * (edges[:-1] + edges[1:])
    return MarginalCurve(edges, mass, one_particle_density(params, centers, t))


@dataclass(frozen=True)
class JointDensityGrid:
    """Joint detection probability per (y1 bin, y2 bin) cell at a fixed time."""

    edges: FloatArray
    values: FloatArray

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())


def joint_density_grid(
    params: PhysicalParams, t: float, edges: FloatArray
) -> JointDensityGrid:
    """Cell masses of |psi|^2; the pair density factorizes into two marginals."""
    curve = marginal_density(params, t, edges)
    return JointDensityGrid(edges, np.outer(curve.mass, curve.mass))


@dataclass(frozen=True)
class FringeSpacing:
    """Neighbouring-maximum distance as lambda D / 2Y and as pi hbar T / (Y m)."""

    from_wavelength: float
    from_time: float


def fringe_spacing(params: PhysicalParams, screen: ScreenConfig) -> FringeSpacing:
    if params.slit_offset == 0:
        raise DegenerateGeometry("Fringe spacing is undefined for coincident slits (Y = 0)")
    if params.kx <= 0:
        raise DegenerateGeometry(f"Fringe spacing needs kx > 0, got {params.kx}")
    t = screen.screen_time(params)
    return FringeSpacing(
        from_wavelength=params.wavelength * screen.distance_d / (2.0 * params.slit_offset),
        from_time=math.pi * params.hbar * t / (params.slit_offset * params.mass),
    )


def exact_fringe_period(params: PhysicalParams, t: float) -> float:
    """
    Period of the two-packet cross term along y at time t; tends to the far-field
    fringe spacing for s t >> 1.
    """
    if params.slit_offset == 0 or t <= 0:
        raise DegenerateGeometry(
            f"Fringe period needs Y > 0 and t > 0, got Y={params.slit_offset}, t={t}"
        )
    st = params.spreading_rate * t
    return 2.0 * math.pi * params.sigma0**2 * (1.0 + st**2) / (params.slit_offset * st)


class LevelInverse:
    """
    Inverse of a nondecreasing tabulated level, such as a CDF, or a survival function
    read toward its tail, interpolated in log(level). Points whose level is below
    LEVEL_FLOOR or not resolved from its predecessor are left out, so saturated and
    underflowed tails never produce infinite slopes.
    """

    def __init__(self, levels: FloatArray, grid: FloatArray) -> None:
        usable = levels > LEVEL_FLOOR
        log_levels = np.log(levels[usable])
        points = grid[usable]
        rising = np.diff(log_levels, prepend=-np.inf) > LEVEL_RESOLUTION
        if np.count_nonzero(rising) < 2:
            raise DegenerateGeometry(
                "Tabulated levels do not rise over the grid"
                f" [{float(grid[0])}, {float(grid[-1])}]"
            )
        log_levels = log_levels[rising]
        points = points[rising]
        self.floor: float = float(np.exp(log_levels[0]))
        self.ceiling: float = float(np.exp(log_levels[-1]))
        self._lowest: float = float(np.min(points))
        self._highest: float = float(np.max(points))
        self._of = PchipInterpolator(log_levels, points)

    def __call__(self, level: Coordinate) -> FloatArray:
        level = np.clip(np.asarray(level, dtype=np.float64), self.floor, self.ceiling)
        return np.clip(self._of(np.log(level)), self._lowest, self._highest)


class MarginalTable:
    """
    The one-particle marginal density at time t tabulated on a uniform grid, with a
    forward CDF and a backward survival function. Interval masses and truncated
    inverse-CDF draws use whichever of the two keeps relative precision in the tail
    involved. The grid is capped at the representable half-extent. Immutable after
    construction.
    """

    def __init__(
        self,
        params: PhysicalParams,
        t: float,
        half_extent: float | None = None,
        n_points: int = TABLE_POINTS,
    ) -> None:
        if half_extent is None:
            half_extent = default_half_extent(params, t)
        half_extent = min(half_extent, representable_half_extent(params, t))
        self.t: float = t
        self.grid: FloatArray = np.linspace(-half_extent, half_extent, n_points)
        density = one_particle_density(params, self.grid, t)
        cdf = cumulative_trapezoid(density, self.grid, initial=0.0)
        survival = cumulative_trapezoid(
            density[::-1], -self.grid[::-1], initial=0.0
        )[::-1]
        total = float(cdf[-1])
        self.density: FloatArray = density / total
        self.cdf: FloatArray = cdf / total
        self.survival: FloatArray = survival / total
        self.median: float = float(self.grid[np.argmin(np.abs(self.cdf - 0.5))])

        self._cdf_of = PchipInterpolator(self.grid, self.cdf)
        self._survival_of = PchipInterpolator(self.grid, self.survival)
        self._inverse_cdf = LevelInverse(self.cdf, self.grid)
        self._inverse_survival = LevelInverse(self.survival[::-1], self.grid[::-1])

    @property
    def lower(self) -> float:
        return float(self.grid[0])

    @property
    def upper(self) -> float:
        return float(self.grid[-1])

    def _clip(self, y: Coordinate) -> FloatArray:
        return np.clip(np.asarray(y, dtype=np.float64), self.lower, self.upper)

    def cdf_at(self, y: Coordinate) -> FloatArray:
        return np.clip(self._cdf_of(self._clip(y)), 0.0, 1.0)

    def survival_at(self, y: Coordinate) -> FloatArray:
        return np.clip(self._survival_of(self._clip(y)), 0.0, 1.0)

    def interval_mass(self, lower: Coordinate, upper: Coordinate) -> FloatArray:
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        in_upper_tail = lower >= self.median
        mass = np.where(
            in_upper_tail,
            self.survival_at(lower) - self.survival_at(upper),
            self.cdf_at(upper) - self.cdf_at(lower),
        )
        return np.where(upper > lower, np.maximum(mass, 0.0), 0.0)

    def quantile(self, u: Coordinate) -> FloatArray:
        u = np.asarray(u, dtype=np.float64)
        return np.where(u <= 0.5, self._inverse_cdf(u), self._inverse_survival(1.0 - u))

    def truncated_quantile(
        self, u: Coordinate, lower: Coordinate, upper: Coordinate
    ) -> FloatArray:
        """Inverse CDF of the density restricted to [lower, upper] at levels u."""
        u = np.asarray(u, dtype=np.float64)
        lower = self._clip(lower)
        upper = self._clip(upper)
        in_upper_tail = lower >= self.median
        s_lower = self.survival_at(lower)
        s_upper = self.survival_at(upper)
        f_lower = self.cdf_at(lower)
        f_upper = self.cdf_at(upper)
        from_survival = self._inverse_survival(s_lower - u * (s_lower - s_upper))
        from_cdf = self._inverse_cdf(f_lower + u * (f_upper - f_lower))
        return np.clip(np.where(in_upper_tail, from_survival, from_cdf), lower, upper)


def mirror_pair_probability(
    params: PhysicalParams, screen: ScreenConfig, t: float | None = None
) -> float:
    """
    Probability that the two particles land in mirror-image detectors, i.e. particle 1
    in [Q, Q + delta] and particle 2 in [-Q - delta, -Q], summed over the detector
    tiling of the screen. The pair density factorizes, so each joint detection
    probability is the product of the two one-particle bin masses.
    """
    if t is None:
        t = screen.screen_time(params)
    origins = screen.detector_origins()
    masses = np.array([bin_mass(params, q, q + screen.bin_delta, t) for q in origins])
    # origins are symmetric: the mirror of detector k is detector (count - 1 - k)
    return float(np.sum(masses * masses[::-1]))


def offband_probability(
    params: PhysicalParams, t: float, half_width: float, table: MarginalTable | None = None
) -> float:
    """
    Joint probability mass farther than `half_width` from the line y1 = -y2, i.e.
    P(|y1 + y2| > sqrt(2) half_width).
    """
    if table is None:
        table = MarginalTable(params, t)
    reach = math.sqrt(2.0) * half_width
    upper_tail = table.survival_at(reach - table.grid)
    lower_tail = table.cdf_at(-reach - table.grid)
    integrand = table.density * (upper_tail + lower_tail)
    return float(np.clip(np.trapezoid(integrand, table.grid), 0.0, 1.0))
