"""
Gaussian slit packets and the symmetric two-particle wave function.

All evaluation functions are pure and accept scalars or numpy arrays (broadcast
together). Packets are evaluated in log space first so that far-tail positions do not
underflow before they are combined.
"""

import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import numpy.typing as npt

from bohm_pair_slit.exceptions import ConfigError, PairSlitException

type FloatArray = npt.NDArray[np.float64]
type ComplexArray = npt.NDArray[np.complex128]
type BoolArray = npt.NDArray[np.bool_]
# Positions and times accepted by the evaluation functions.
type Coordinate = float | FloatArray


class SlitLabel(StrEnum):
    A = "A"
    B = "B"


@dataclass(frozen=True, kw_only=True)
class PhysicalParams:
    """
    Physical constants and source/slit parameters. Natural units (hbar = mass = 1) by
    default; every quantity stays an explicit field so dimensional runs work too.
    """

    sigma0: float
    slit_offset: float
    kx: float
    ky: float = 0.0
    hbar: float = 1.0
    mass: float = 1.0
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self) -> None:
        # Field paths use the configuration document's key names.
        for path, value in (
            ("sigma0", self.sigma0),
            ("Y", self.slit_offset),
            ("kx", self.kx),
            ("ky", self.ky),
            ("hbar", self.hbar),
            ("mass", self.mass),
        ):
            if not math.isfinite(value):
                raise ConfigError(path, f"must be a finite number, got {value}")
        if self.sigma0 <= 0:
            raise ConfigError("sigma0", f"must be positive, got {self.sigma0}")
        if self.mass <= 0:
            raise ConfigError("mass", f"must be positive, got {self.mass}")
        if self.hbar <= 0:
            raise ConfigError("hbar", f"must be positive, got {self.hbar}")
        if self.slit_offset < 0:
            raise ConfigError("Y", f"must not be negative, got {self.slit_offset}")
        if not (math.isfinite(self.amplitude.real) and math.isfinite(self.amplitude.imag)):
            raise ConfigError("a", f"must be finite, got {self.amplitude}")
        if self.amplitude == 0:
            raise ConfigError("a", "must not be zero")

    @property
    def u_x(self) -> float:
        """Group velocity along x."""
        return self.hbar * self.kx / self.mass

    @property
    def u_y(self) -> float:
        """Group velocity along y."""
        return self.hbar * self.ky / self.mass

    @property
    def energy_x(self) -> float:
        return 0.5 * self.mass * self.u_x**2

    @property
    def wavelength(self) -> float:
        """de Broglie wavelength along x; infinite when kx is zero."""
        if self.kx == 0:
            return math.inf
        return 2.0 * math.pi / abs(self.kx)

    @property
    def spreading_rate(self) -> float:
        """s = hbar / (2 m sigma0^2); a packet's width grows as sqrt(1 + s^2 t^2)."""
        return self.hbar / (2.0 * self.mass * self.sigma0**2)


def _check_time(t: Coordinate) -> None:
    if np.any(np.asarray(t) < 0):
        raise PairSlitException(f"Time must not be negative, got {t}")


def sigma_t(params: PhysicalParams, t: Coordinate) -> complex | ComplexArray:
    """Complex width parameter sigma0 * (1 + i s t)."""
    _check_time(t)
    return params.sigma0 * (1.0 + 1j * params.spreading_rate * np.asarray(t))


def normalization_n(params: PhysicalParams) -> float:
    """Constant that makes the four-term pair wave function unit-normalized (a = 1)."""
    ratio = params.slit_offset / params.sigma0
    return 1.0 / (2.0 * (1.0 + math.exp(-(ratio**2) / 2.0)))


def amplitude_scale(params: PhysicalParams, t: Coordinate) -> FloatArray:
    """Peak magnitude of a product of two packets: |a|^2 (2 pi |sigma_t|^2)^(-1/2)."""
    width_sq = np.abs(sigma_t(params, t)) ** 2
    return abs(params.amplitude) ** 2 / np.sqrt(2.0 * math.pi * width_sq)


def log_psi_slit(
    params: PhysicalParams, which: SlitLabel, x: Coordinate, y: Coordinate, t: Coordinate
) -> ComplexArray:
    """Natural log of the time-evolved packet emerging from slit `which`."""
    _check_time(t)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    sign = 1.0 if which == SlitLabel.A else -1.0
    width = params.sigma0 * (1.0 + 1j * params.spreading_rate * t)
    offset = y - sign * (params.slit_offset + params.u_y * t)
    # Principal branch; continuous in t from the real positive value at t = 0.
    log_prefactor = np.log(params.amplitude) - 0.25 * np.log(
        2.0 * math.pi * width**2
    )
    envelope = -(offset**2) / (4.0 * params.sigma0 * width)
    phase = (
        params.kx * x
        + sign * params.ky * (y - sign * (params.slit_offset + params.u_y * t / 2.0))
        - params.energy_x * t / params.hbar
    )
    return log_prefactor + envelope + 1j * phase


def psi_slit(
    params: PhysicalParams, which: SlitLabel, x: Coordinate, y: Coordinate, t: Coordinate
) -> complex | ComplexArray:
    return np.exp(log_psi_slit(params, which, x, y, t))


@dataclass(frozen=True)
class ScaledPackets:
    """
    Both slit packets at the same positions with a common real scale removed:
    psi_A = exp(log_scale) * alpha, psi_B = exp(log_scale) * beta, and
    max(|alpha|, |beta|) == 1.
    """

    log_scale: FloatArray
    alpha: ComplexArray
    beta: ComplexArray

    def log_abs_sum(self) -> FloatArray:
        """log |psi_A + psi_B|; -inf at an exact node."""
        with np.errstate(divide="ignore"):
            return self.log_scale + np.log(np.abs(self.alpha + self.beta))


def scaled_packets(
    params: PhysicalParams, x: Coordinate, y: Coordinate, t: Coordinate
) -> ScaledPackets:
    log_a = log_psi_slit(params, SlitLabel.A, x, y, t)
    log_b = log_psi_slit(params, SlitLabel.B, x, y, t)
    log_scale = np.maximum(log_a.real, log_b.real)
    return ScaledPackets(
        log_scale, np.exp(log_a - log_scale), np.exp(log_b - log_scale)
    )


def psi_factor(
    params: PhysicalParams, x: Coordinate, y: Coordinate, t: Coordinate
) -> complex | ComplexArray:
    """One-particle factor psi_A + psi_B of the pair wave function."""
    packets = scaled_packets(params, x, y, t)
    return np.exp(packets.log_scale) * (packets.alpha + packets.beta)


def psi_total(
    params: PhysicalParams,
    x1: Coordinate,
    y1: Coordinate,
    x2: Coordinate,
    y2: Coordinate,
    t: Coordinate,
) -> complex | ComplexArray:
    """Pair wave function as the symmetric sum of the four packet products."""
    a1 = psi_slit(params, SlitLabel.A, x1, y1, t)
    b1 = psi_slit(params, SlitLabel.B, x1, y1, t)
    a2 = psi_slit(params, SlitLabel.A, x2, y2, t)
    b2 = psi_slit(params, SlitLabel.B, x2, y2, t)
    return normalization_n(params) * (a1 * b2 + a2 * b1 + a1 * a2 + b1 * b2)


def psi_total_factorized(
    params: PhysicalParams,
    x1: Coordinate,
    y1: Coordinate,
    x2: Coordinate,
    y2: Coordinate,
    t: Coordinate,
) -> complex | ComplexArray:
    """Pair wave function as N (psi_A(1) + psi_B(1)) (psi_A(2) + psi_B(2))."""
    return (
        normalization_n(params)
        * psi_factor(params, x1, y1, t)
        * psi_factor(params, x2, y2, t)
    )


def log_abs_psi_total(
    params: PhysicalParams, first: ScaledPackets, second: ScaledPackets
) -> FloatArray:
    """
    log |psi| of the pair wave function from the scaled packets of each particle; the x
    phase does not change the modulus. -inf at an exact node.
    """
    return (
        math.log(normalization_n(params))
        + first.log_abs_sum()
        + second.log_abs_sum()
    )


def one_particle_density(
    params: PhysicalParams, y: Coordinate, t: Coordinate
) -> FloatArray:
    """
    Marginal detection density of either particle, N |psi_A + psi_B|^2. Integrates to
    one whenever the pair wave function is unit-normalized.
    """
    packets = scaled_packets(params, 0.0, y, t)
    return (
        normalization_n(params)
        * np.exp(2.0 * packets.log_scale)
        * np.abs(packets.alpha + packets.beta) ** 2
    )
