"""
Integration of Bohmian pair trajectories from t = 0 to the screen time.

Both integrators advance a whole batch of trajectories with numpy arrays, but every
trajectory keeps its own time, step size and status, so a trajectory's arithmetic does
not depend on which other trajectories share its batch.
"""

import logging
import math
from dataclasses import dataclass
from enum import IntEnum, StrEnum

import numpy as np
import numpy.typing as npt

from bohm_pair_slit.exceptions import ConfigError, NodeProximity
from bohm_pair_slit.guidance import PairState, velocity_field
from bohm_pair_slit.wavefunction import BoolArray, FloatArray, PhysicalParams

logger = logging.getLogger(__name__)

type IntArray = npt.NDArray[np.int64]

# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# Fifth-order minus embedded fourth-order weights.
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class IntegratorMethod(StrEnum):
    RK4_FIXED = "rk4_fixed"
    RK45_ADAPTIVE = "rk45_adaptive"


class TrajectoryStatus(IntEnum):
    COMPLETED = 0
    REJECTED_NODE = 1
    REJECTED_CONDITION = 2
    STEP_BUDGET = 3

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, kw_only=True)
class IntegratorConfig:
    method: IntegratorMethod = IntegratorMethod.RK45_ADAPTIVE
    dt_initial: float
    tol: float = 1e-8
    max_steps: int = 100_000
    max_node_halvings: int = 20

    def __post_init__(self) -> None:
        if not math.isfinite(self.dt_initial) or self.dt_initial <= 0:
            raise ConfigError(
                "integrator.dt_initial", f"must be positive, got {self.dt_initial}"
            )
        if not math.isfinite(self.tol) or self.tol <= 0:
            raise ConfigError("integrator.tol", f"must be positive, got {self.tol}")
        if self.max_steps < 1:
            raise ConfigError(
                "integrator.max_steps", f"must be at least 1, got {self.max_steps}"
            )


@dataclass(frozen=True)
class Trajectory:
    initial: PairState
    samples: tuple[PairState, ...]
    terminal: PairState
    status: TrajectoryStatus


@dataclass(frozen=True)
class BatchResult:
    """
    Final state of each trajectory of a batch. `t_final` is the screen time for
    completed trajectories and the time the trajectory stopped otherwise. `samples`
    holds the accepted-step history when it was recorded.
    """

    y1_initial: FloatArray
    y2_initial: FloatArray
    y1: FloatArray
    y2: FloatArray
    t_final: FloatArray
    status: IntArray
    steps: IntArray
    samples: tuple[FloatArray, ...] | None = None

    def __len__(self) -> int:
        return len(self.y1)

    def trajectory(self, index: int) -> Trajectory:
        samples: tuple[PairState, ...] = ()
        if self.samples is not None:
            history = self.samples[index]
            samples = tuple(PairState(y1, y2, t) for t, y1, y2 in history.tolist())
        return Trajectory(
            initial=PairState(float(self.y1_initial[index]), float(self.y2_initial[index]), 0.0),
            samples=samples,
            terminal=PairState(
                float(self.y1[index]), float(self.y2[index]), float(self.t_final[index])
            ),
            status=TrajectoryStatus(int(self.status[index])),
        )


class _History:
    """Accepted states per step, split per trajectory at the end."""

    def __init__(self, size: int) -> None:
        self.size: int = size
        self._index: list[IntArray] = []
        self._rows: list[FloatArray] = []

    def record(self, index: IntArray, t: FloatArray, y1: FloatArray, y2: FloatArray) -> None:
        self._index.append(index)
        self._rows.append(np.column_stack((t, y1, y2)))

    def split(self) -> tuple[FloatArray, ...]:
        if not self._index:
            return tuple(np.empty((0, 3)) for _ in range(self.size))
        index = np.concatenate(self._index)
        rows = np.concatenate(self._rows)
        order = np.argsort(index, kind="stable")
        counts = np.bincount(index, minlength=self.size)
        return tuple(np.split(rows[order], np.cumsum(counts)[:-1]))


def _stages(
    params: PhysicalParams,
    y1: FloatArray,
    y2: FloatArray,
    t: FloatArray,
    h: FloatArray,
) -> tuple[list[FloatArray], list[FloatArray], BoolArray]:
    k1: list[FloatArray] = []
    k2: list[FloatArray] = []
    hit_node = np.zeros(len(y1), dtype=np.bool_)
    for c, row in zip(_C, _A):
        stage_y1 = y1 + h * sum((a * k for a, k in zip(row, k1)), np.zeros_like(y1))
        stage_y2 = y2 + h * sum((a * k for a, k in zip(row, k2)), np.zeros_like(y2))
        field = velocity_field(params, stage_y1, stage_y2, t + c * h)
        hit_node |= field.at_node
        k1.append(np.where(field.at_node, 0.0, field.v1))
        k2.append(np.where(field.at_node, 0.0, field.v2))
    return k1, k2, hit_node


def _combine(weights: tuple[float, ...], stages: list[FloatArray]) -> FloatArray:
    return sum((w * k for w, k in zip(weights, stages) if w != 0.0), np.zeros_like(stages[0]))


def integrate_batch(
    params: PhysicalParams,
    y1_initial: FloatArray,
    y2_initial: FloatArray,
    screen_time: float,
    integ: IntegratorConfig,
    record_samples: bool = False,
) -> BatchResult:
    """Integrate every pair (y1_initial[i], y2_initial[i]) from t = 0 to `screen_time`."""
    y1_initial = np.asarray(y1_initial, dtype=np.float64)
    y2_initial = np.asarray(y2_initial, dtype=np.float64)
    if screen_time <= 0 or not math.isfinite(screen_time):
        raise ConfigError("D", f"screen time must be positive, got {screen_time}")
    match integ.method:
        case IntegratorMethod.RK45_ADAPTIVE:
            return _dormand_prince(
                params, y1_initial, y2_initial, screen_time, integ, record_samples
            )
        case IntegratorMethod.RK4_FIXED:
            return _fixed_rk4(
                params, y1_initial, y2_initial, screen_time, integ, record_samples
            )


def _initial_status(
    params: PhysicalParams, y1: FloatArray, y2: FloatArray
) -> IntArray:
    at_node = velocity_field(params, y1, y2, 0.0).at_node
    return np.where(
        at_node, TrajectoryStatus.REJECTED_NODE, TrajectoryStatus.COMPLETED
    ).astype(np.int64)


def _dormand_prince(
    params: PhysicalParams,
    y1_initial: FloatArray,
    y2_initial: FloatArray,
    screen_time: float,
    integ: IntegratorConfig,
    record_samples: bool,
) -> BatchResult:
    size = len(y1_initial)
    y1 = y1_initial.copy()
    y2 = y2_initial.copy()
    t = np.zeros(size)
    h = np.full(size, min(integ.dt_initial, screen_time))
    status = _initial_status(params, y1, y2)
    steps = np.zeros(size, dtype=np.int64)
    halvings = np.zeros(size, dtype=np.int64)
    running = (status == TrajectoryStatus.COMPLETED) & (t < screen_time)
    history = _History(size) if record_samples else None
    atol = integ.tol * params.sigma0
    rtol = integ.tol

    while np.any(running):
        index = np.flatnonzero(running)
        ty1, ty2, tt = y1[index], y2[index], t[index]
        remaining = screen_time - tt
        th = np.minimum(h[index], remaining)
        # Land exactly on the screen instead of leaving a sliver of a step.
        finishing = remaining - th <= 1e-12 * screen_time
        th = np.where(finishing, remaining, th)

        k1, k2, hit_node = _stages(params, ty1, ty2, tt, th)
        new_y1 = ty1 + th * _combine(_B, k1)
        new_y2 = ty2 + th * _combine(_B, k2)
        error1 = th * _combine(_E, k1)
        error2 = th * _combine(_E, k2)
        scale1 = atol + rtol * np.maximum(np.abs(ty1), np.abs(new_y1))
        scale2 = atol + rtol * np.maximum(np.abs(ty2), np.abs(new_y2))
        error = np.maximum(np.abs(error1) / scale1, np.abs(error2) / scale2)
        steps[index] += 1

        accepted = ~hit_node & (error <= 1.0)
        with np.errstate(divide="ignore"):
            factor = np.where(
                error == 0.0,
                _MAX_FACTOR,
                np.clip(_SAFETY * error ** (-0.2), _MIN_FACTOR, _MAX_FACTOR),
            )
        factor = np.where(accepted, factor, np.minimum(factor, 1.0))
        factor = np.where(hit_node, 0.5, factor)

        done = index[accepted]
        y1[done] = new_y1[accepted]
        y2[done] = new_y2[accepted]
        t[done] = np.where(finishing[accepted], screen_time, tt[accepted] + th[accepted])
        halvings[done] = 0
        halvings[index[hit_node]] += 1
        h[index] = th * factor
        if history is not None and np.any(accepted):
            history.record(done, t[done], y1[done], y2[done])

        node_rejected = index[halvings[index] > integ.max_node_halvings]
        status[node_rejected] = TrajectoryStatus.REJECTED_NODE
        over_budget = index[(steps[index] >= integ.max_steps) & (t[index] < screen_time)]
        status[over_budget] = np.where(
            status[over_budget] == TrajectoryStatus.COMPLETED,
            TrajectoryStatus.STEP_BUDGET,
            status[over_budget],
        )
        running = (status == TrajectoryStatus.COMPLETED) & (t < screen_time)

    logger.debug(
        "Dormand-Prince batch of %d: %d steps in total, %d stopped early",
        size,
        int(steps.sum()),
        int(np.count_nonzero(status != TrajectoryStatus.COMPLETED)),
    )
    return BatchResult(
        y1_initial,
        y2_initial,
        y1,
        y2,
        t,
        status,
        steps,
        history.split() if history is not None else None,
    )


def _fixed_rk4(
    params: PhysicalParams,
    y1_initial: FloatArray,
    y2_initial: FloatArray,
    screen_time: float,
    integ: IntegratorConfig,
    record_samples: bool,
) -> BatchResult:
    size = len(y1_initial)
    y1 = y1_initial.copy()
    y2 = y2_initial.copy()
    t = np.zeros(size)
    status = _initial_status(params, y1, y2)
    n_steps = math.ceil(screen_time / integ.dt_initial)
    if n_steps > integ.max_steps:
        raise ConfigError(
            "integrator.dt_initial",
            f"needs {n_steps} fixed steps to reach the screen, above max_steps"
            f" {integ.max_steps}",
        )
    dt = screen_time / n_steps
    history = _History(size) if record_samples else None

    for step in range(n_steps):
        index = np.flatnonzero(status == TrajectoryStatus.COMPLETED)
        if len(index) == 0:
            break
        ty1, ty2 = y1[index], y2[index]
        t0 = step * dt
        hit_node = np.zeros(len(index), dtype=np.bool_)
        slopes1: list[FloatArray] = []
        slopes2: list[FloatArray] = []
        for offset, weight in ((0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)):
            stage_y1 = ty1 + weight * dt * (slopes1[-1] if slopes1 else 0.0)
            stage_y2 = ty2 + weight * dt * (slopes2[-1] if slopes2 else 0.0)
            field = velocity_field(params, stage_y1, stage_y2, t0 + offset * dt)
            hit_node |= field.at_node
            slopes1.append(np.where(field.at_node, 0.0, field.v1))
            slopes2.append(np.where(field.at_node, 0.0, field.v2))
        new_y1 = ty1 + dt / 6.0 * (slopes1[0] + 2 * slopes1[1] + 2 * slopes1[2] + slopes1[3])
        new_y2 = ty2 + dt / 6.0 * (slopes2[0] + 2 * slopes2[1] + 2 * slopes2[2] + slopes2[3])

        status[index[hit_node]] = TrajectoryStatus.REJECTED_NODE
        moved = index[~hit_node]
        y1[moved] = new_y1[~hit_node]
        y2[moved] = new_y2[~hit_node]
        t[moved] = screen_time if step == n_steps - 1 else (step + 1) * dt
        if history is not None:
            history.record(moved, t[moved], y1[moved], y2[moved])

    steps = np.where(status == TrajectoryStatus.COMPLETED, n_steps, 0).astype(np.int64)
    return BatchResult(
        y1_initial,
        y2_initial,
        y1,
        y2,
        t,
        status,
        steps,
        history.split() if history is not None else None,
    )


def integrate_trajectory(
    params: PhysicalParams,
    initial: PairState,
    screen_time: float,
    integ: IntegratorConfig,
) -> Trajectory:
    """
    Integrate one pair to the screen. A start at a node of the wave function raises
    NodeProximity; a node met on the way gives a `rejected_node` trajectory.
    """
    if initial.t != 0:
        raise ConfigError("initial.t", f"trajectories start at t = 0, got {initial.t}")
    if velocity_field(params, initial.y1, initial.y2, 0.0).at_node:
        raise NodeProximity(
            f"Initial pair ({initial.y1}, {initial.y2}) is at a node of the wave function"
        )
    batch = integrate_batch(
        params,
        np.array([initial.y1]),
        np.array([initial.y2]),
        screen_time,
        integ,
        record_samples=True,
    )
    return batch.trajectory(0)
