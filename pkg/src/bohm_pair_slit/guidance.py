"""
Bohmian guidance velocities of the two particles and the center-of-mass forms.

Velocities use the analytic derivative of each packet, d(log psi_A)/dy and
d(log psi_B)/dy, combined term by term with the four packet products of the pair wave
function. Numerical differentiation is only used by the tests as an oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

from bohm_pair_slit.exceptions import NodeProximity, PairSlitException
from bohm_pair_slit.wavefunction import (
    BoolArray,
    ComplexArray,
    Coordinate,
    FloatArray,
    PhysicalParams,
    amplitude_scale,
    log_abs_psi_total,
    scaled_packets,
)

# |psi| below this fraction of the pair amplitude scale counts as a node.
NODE_EPSILON = 1e-12


@dataclass(frozen=True)
class PairState:
    """Configuration-space point of the pair; x-motion is uniform and implicit."""

    y1: float
    y2: float
    t: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.y1) and math.isfinite(self.y2)):
            raise PairSlitException(
                f"Pair coordinates must be finite, got ({self.y1}, {self.y2})"
            )
        if not math.isfinite(self.t) or self.t < 0:
            raise PairSlitException(
                f"Pair state time must be finite and not negative, got {self.t}"
            )


@dataclass(frozen=True)
class VelocityPair:
    v1: float
    v2: float


@dataclass(frozen=True)
class VelocityField:
    """Vectorized velocities; `at_node` marks positions where they are undefined."""

    v1: FloatArray
    v2: FloatArray
    at_node: BoolArray


@dataclass(frozen=True)
class ComVelocityTerms:
    """
    Center-of-mass velocity split into the free-spreading term and the residual that
    comes from the same-slit packet products.
    """

    leading: float
    residual: float

    @property
    def total(self) -> float:
        return self.leading + self.residual


def _log_derivatives(
    params: PhysicalParams, y: FloatArray, t: FloatArray
) -> tuple[ComplexArray, ComplexArray]:
    """d(log psi_A)/dy and d(log psi_B)/dy."""
    width = params.sigma0 * (1.0 + 1j * params.spreading_rate * t)
    shift = params.slit_offset + params.u_y * t
    denominator = 2.0 * params.sigma0 * width
    d_a = -(y - shift) / denominator + 1j * params.ky
    d_b = -(y + shift) / denominator - 1j * params.ky
    return d_a, d_b


def _node_log_threshold(params: PhysicalParams, t: Coordinate) -> FloatArray:
    return np.log(NODE_EPSILON * amplitude_scale(params, t))


def velocity_field(
    params: PhysicalParams, y1: Coordinate, y2: Coordinate, t: Coordinate
) -> VelocityField:
    """
    Guidance velocities (hbar/m) Im(d_i psi / psi) for arrays of pair positions.
    Positions at a node come back with `at_node` set and unspecified velocities.
    """
    y1, y2, t = np.broadcast_arrays(
        np.asarray(y1, dtype=np.float64),
        np.asarray(y2, dtype=np.float64),
        np.asarray(t, dtype=np.float64),
    )
    first = scaled_packets(params, 0.0, y1, t)
    second = scaled_packets(params, 0.0, y2, t)
    d_a1, d_b1 = _log_derivatives(params, y1, t)
    d_a2, d_b2 = _log_derivatives(params, y2, t)

    # Products psi_A1 psi_B2 + psi_A2 psi_B1 + psi_A1 psi_A2 + psi_B1 psi_B2 with the
    # common scale divided out, grouped by the packet of the differentiated particle.
    sum1 = first.alpha + first.beta
    sum2 = second.alpha + second.beta
    psi_scaled = sum1 * sum2
    numerator1 = (d_a1 * first.alpha) * sum2 + (d_b1 * first.beta) * sum2
    numerator2 = (d_a2 * second.alpha) * sum1 + (d_b2 * second.beta) * sum1

    at_node = ~(log_abs_psi_total(params, first, second) > _node_log_threshold(params, t))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = params.hbar / params.mass
        v1 = factor * np.imag(numerator1 / psi_scaled)
        v2 = factor * np.imag(numerator2 / psi_scaled)
    return VelocityField(v1, v2, at_node)


def velocity(params: PhysicalParams, state: PairState) -> VelocityPair:
    field = velocity_field(params, state.y1, state.y2, state.t)
    if bool(field.at_node):
        raise NodeProximity(
            f"Guidance velocity is undefined near a node of the wave function at"
            f" y1={state.y1}, y2={state.y2}, t={state.t}"
        )
    return VelocityPair(float(field.v1), float(field.v2))


def velocity_com(params: PhysicalParams, state: PairState) -> float:
    """Velocity of the vertical center-of-mass coordinate (y1 + y2) / 2."""
    pair = velocity(params, state)
    return 0.5 * (pair.v1 + pair.v2)


def com_velocity_terms(params: PhysicalParams, state: PairState) -> ComVelocityTerms:
    """
    Decompose the center-of-mass velocity into s^2 t y / (1 + s^2 t^2), which is
    exact when the same-slit products cancel, and the remaining residual term.
    """
    _ = velocity(params, state)  # node check
    s = params.spreading_rate
    t = state.t
    leading = s**2 * t * 0.5 * (state.y1 + state.y2) / (1.0 + (s * t) ** 2)

    first = scaled_packets(params, 0.0, state.y1, t)
    second = scaled_packets(params, 0.0, state.y2, t)
    width = params.sigma0 * (1.0 + 1j * s * t)
    coefficient = (params.slit_offset + params.u_y * t) / (
        params.sigma0 * width
    ) + 2j * params.ky
    same_slit = first.alpha * second.alpha - first.beta * second.beta
    psi_scaled = (first.alpha + first.beta) * (second.alpha + second.beta)
    residual = (
        params.hbar
        / (2.0 * params.mass)
        * float(np.imag(coefficient * same_slit / psi_scaled))
    )
    return ComVelocityTerms(float(leading), residual)


def com_closed_form(params: PhysicalParams, y0: float, t: float) -> float:
    """Center-of-mass path y0 sqrt(1 + s^2 t^2) of the narrow-slit approximation."""
    if t < 0:
        raise PairSlitException(f"Time must not be negative, got {t}")
    return y0 * math.sqrt(1.0 + (params.spreading_rate * t) ** 2)
