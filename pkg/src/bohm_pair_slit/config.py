"""
Run configuration: one JSON document, validated field by field with defaults applied.

Every error names the dotted path of the offending key. Keys not listed here are
rejected so that misspelled settings never fall back to defaults silently.
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any

from bohm_pair_slit.exceptions import ConfigError
from bohm_pair_slit.integrate import IntegratorConfig, IntegratorMethod
from bohm_pair_slit.jsonish import JObject, JValue, json_type_from_value
from bohm_pair_slit.sampling import Conditioning, ConditioningKind, SamplerConfig
from bohm_pair_slit.scenarios import Case, ScenarioConfig, validate_case
from bohm_pair_slit.sqm import ScreenConfig, default_half_extent
from bohm_pair_slit.wavefunction import PhysicalParams

logger = logging.getLogger(__name__)

DEFAULT_N_PAIRS = 100_000
DEFAULT_SEED = 0
DEFAULT_OUTPUT_DIR = "run-output"
# Initial step as a fraction of the screen time.
DEFAULT_DT_FRACTION = 1e-2
DEFAULT_TARGET_MEAN_WIDTHS = 3.0
DEFAULT_WINDOW_WIDTHS = 0.2
ST_AGREEMENT = 1e-9


@dataclass(frozen=True, kw_only=True)
class ConfigOverrides:
    """Command line values that replace the document's before validation."""

    seed: int | None = None
    n_pairs: int | None = None
    case: str | None = None
    output_dir: str | None = None


@dataclass(frozen=True, kw_only=True)
class RunConfig:
    scenario: ScenarioConfig
    output_dir: Path
    emit_trajectories: bool = False
    trajectory_sample_stride: int = 1

    def __post_init__(self) -> None:
        if self.trajectory_sample_stride < 1:
            raise ConfigError(
                "output.trajectory_sample_stride",
                f"must be at least 1, got {self.trajectory_sample_stride}",
            )

    def to_json(self) -> JObject:
        """Fully resolved configuration, in the document's own layout."""
        s = self.scenario
        p = s.params
        c = s.sampler.conditioning
        amplitude: JValue = (
            p.amplitude.real
            if p.amplitude.imag == 0
            else [p.amplitude.real, p.amplitude.imag]
        )
        conditioning: JObject = {"kind": str(c.kind)}
        if c.kind == ConditioningKind.COM_OFFSET:
            conditioning |= {
                "target_mean": c.target_mean,
                "window_width": c.window_width,
                "opposite_sides": c.opposite_sides,
                "rejection": c.rejection,
            }
        return {
            "case": str(s.case),
            "seed": s.sampler.seed,
            "n_pairs": s.sampler.n_pairs,
            "hbar": p.hbar,
            "mass": p.mass,
            "sigma0": p.sigma0,
            "Y": p.slit_offset,
            "kx": p.kx,
            "ky": p.ky,
            "a": amplitude,
            "D": s.screen.distance_d,
            "st": s.target_st,
            "bin_delta": s.screen.bin_delta,
            "y_min": s.screen.y_min,
            "y_max": s.screen.y_max,
            "n_bins": s.screen.n_bins,
            "conditioning": conditioning,
            "integrator": {
                "method": str(s.integ.method),
                "dt_initial": s.integ.dt_initial,
                "tol": s.integ.tol,
                "max_steps": s.integ.max_steps,
            },
            "output": {
                "dir": str(self.output_dir),
                "emit_trajectories": self.emit_trajectories,
                "trajectory_sample_stride": self.trajectory_sample_stride,
            },
        }


class _Section:
    """Typed, path-aware access to one JSON object of the configuration document."""

    def __init__(self, obj: JObject, prefix: str = "") -> None:
        self.obj: JObject = obj
        self.prefix: str = prefix
        self.used: set[str] = set()

    def path(self, key: str) -> str:
        return f"{self.prefix}{key}"

    def _get(self, key: str) -> JValue:
        self.used.add(key)
        return self.obj.get(key)

    def has(self, key: str) -> bool:
        return self.obj.get(key) is not None

    def _mismatch(self, key: str, expected: str, value: JValue) -> ConfigError:
        return ConfigError(
            self.path(key), f"expected {expected} but got {json_type_from_value(value)}"
        )

    def number(self, key: str, default: float | None = None) -> float:
        value = self._get(key)
        if value is None:
            if default is None:
                raise ConfigError(self.path(key), "is required")
            return default
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._mismatch(key, "number", value)
        if not math.isfinite(value):
            raise ConfigError(self.path(key), f"must be finite, got {value}")
        return float(value)

    def optional_number(self, key: str) -> float | None:
        if not self.has(key):
            self.used.add(key)
            return None
        return self.number(key)

    def integer(self, key: str, default: int | None = None) -> int:
        value = self._get(key)
        if value is None:
            if default is None:
                raise ConfigError(self.path(key), "is required")
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            raise self._mismatch(key, "integer", value)
        return value

    def boolean(self, key: str, default: bool) -> bool:
        value = self._get(key)
        if value is None:
            return default
        if not isinstance(value, bool):
            raise self._mismatch(key, "true or false", value)
        return value

    def string(self, key: str, default: str | None = None) -> str:
        value = self._get(key)
        if value is None:
            if default is None:
                raise ConfigError(self.path(key), "is required")
            return default
        if not isinstance(value, str):
            raise self._mismatch(key, "string", value)
        return value

    def complex_number(self, key: str, default: complex) -> complex:
        value = self._get(key)
        if value is None:
            return default
        if isinstance(value, list):
            parts = [v for v in value if isinstance(v, (int, float)) and not isinstance(v, bool)]
            if len(value) != 2 or len(parts) != 2:
                raise ConfigError(self.path(key), "expected [real, imaginary] numbers")
            return complex(float(parts[0]), float(parts[1]))
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._mismatch(key, "number or [real, imaginary] array", value)
        return complex(float(value), 0.0)

    def section(self, key: str) -> "_Section":
        value = self._get(key)
        if value is None:
            value = {}
        if not isinstance(value, dict):
            raise self._mismatch(key, "object", value)
        return _Section(value, f"{self.path(key)}.")

    def reject_unknown(self) -> None:
        unknown = sorted(set(self.obj) - self.used)
        if unknown:
            raise ConfigError(self.path(unknown[0]), "unknown key")


def _enum_value[E: StrEnum](section: _Section, key: str, kind: type[E], default: E) -> E:
    text = section.string(key, str(default))
    try:
        return kind(text)
    except ValueError as e:
        choices = ", ".join(str(v) for v in kind)
        raise ConfigError(
            section.path(key), f'"{text}" is not one of: {choices}'
        ) from e


def _screen_distance(
    doc: _Section, params: PhysicalParams
) -> tuple[float, float]:
    """Screen distance D and the spreading s T, from either or both keys."""
    if params.kx <= 0:
        raise ConfigError("kx", f"must be positive to reach the screen, got {params.kx}")
    s = params.spreading_rate
    distance = doc.optional_number("D")
    st = doc.optional_number("st")
    if distance is None and st is None:
        raise ConfigError("D", "is required unless st is given")
    if distance is None:
        assert st is not None
        if st <= 0:
            raise ConfigError("st", f"must be positive, got {st}")
        return st * params.u_x / s, st
    derived = s * distance / params.u_x
    if st is not None and not math.isclose(st, derived, rel_tol=ST_AGREEMENT):
        raise ConfigError(
            "st", f"{st} disagrees with s T = {derived} from D = {distance}"
        )
    return distance, derived


def _conditioning(doc: _Section, case: Case, sigma0: float) -> Conditioning:
    section = doc.section("conditioning")
    default_kind = (
        ConditioningKind.COM_OFFSET if case == Case.SELECTIVE else ConditioningKind.NONE
    )
    kind = _enum_value(section, "kind", ConditioningKind, default_kind)
    if kind != ConditioningKind.COM_OFFSET:
        section.reject_unknown()
        return Conditioning(kind=kind)
    conditioning = Conditioning(
        kind=kind,
        target_mean=section.number("target_mean", DEFAULT_TARGET_MEAN_WIDTHS * sigma0),
        window_width=section.number("window_width", DEFAULT_WINDOW_WIDTHS * sigma0),
        opposite_sides=section.boolean("opposite_sides", True),
        rejection=section.boolean("rejection", False),
    )
    section.reject_unknown()
    return conditioning


def _apply_overrides(doc: JObject, overrides: ConfigOverrides) -> JObject:
    doc = dict(doc)
    if overrides.seed is not None:
        doc["seed"] = overrides.seed
    if overrides.n_pairs is not None:
        doc["n_pairs"] = overrides.n_pairs
    if overrides.case is not None:
        doc["case"] = overrides.case
    if overrides.output_dir is not None:
        output = doc.get("output")
        output = dict(output) if isinstance(output, dict) else {}
        output["dir"] = overrides.output_dir
        doc["output"] = output
    return doc


def config_from_object(doc_obj: JObject, overrides: ConfigOverrides | None = None) -> RunConfig:
    if overrides is not None:
        doc_obj = _apply_overrides(doc_obj, overrides)
    doc = _Section(doc_obj)

    case = _enum_value(doc, "case", Case, Case.SYMMETRIC)
    params = PhysicalParams(
        sigma0=doc.number("sigma0"),
        slit_offset=doc.number("Y"),
        kx=doc.number("kx"),
        ky=doc.number("ky", 0.0),
        hbar=doc.number("hbar", 1.0),
        mass=doc.number("mass", 1.0),
        amplitude=doc.complex_number("a", 1.0 + 0.0j),
    )
    distance, st = _screen_distance(doc, params)
    screen_time = distance / params.u_x

    conditioning = _conditioning(doc, case, params.sigma0)
    half_extent = default_half_extent(params, screen_time)
    if conditioning.kind == ConditioningKind.COM_OFFSET:
        half_extent += 2.0 * abs(conditioning.target_mean) * math.sqrt(1.0 + st**2)
    screen = ScreenConfig(
        distance_d=distance,
        bin_delta=doc.number("bin_delta", 0.5 * params.sigma0),
        y_min=doc.number("y_min", -half_extent),
        y_max=doc.number("y_max", half_extent),
        n_bins=doc.integer("n_bins", 50),
    )
    sampler = SamplerConfig(
        n_pairs=doc.integer("n_pairs", DEFAULT_N_PAIRS),
        seed=doc.integer("seed", DEFAULT_SEED),
        conditioning=conditioning,
    )

    integrator = doc.section("integrator")
    integ = IntegratorConfig(
        method=_enum_value(
            integrator, "method", IntegratorMethod, IntegratorMethod.RK45_ADAPTIVE
        ),
        dt_initial=integrator.number("dt_initial", DEFAULT_DT_FRACTION * screen_time),
        tol=integrator.number("tol", 1e-8),
        max_steps=integrator.integer("max_steps", 100_000),
    )
    integrator.reject_unknown()

    output = doc.section("output")
    run = RunConfig(
        scenario=ScenarioConfig(
            case=case,
            params=params,
            screen=screen,
            sampler=sampler,
            integ=integ,
            target_st=st,
        ),
        output_dir=Path(output.string("dir", DEFAULT_OUTPUT_DIR)),
        emit_trajectories=output.boolean("emit_trajectories", False),
        trajectory_sample_stride=output.integer("trajectory_sample_stride", 1),
    )
    output.reject_unknown()
    doc.reject_unknown()
    validate_case(run.scenario)
    return run


def _load_json_object(text: str, origin: str) -> JObject:
    try:
        v: Any = json.loads(text)  # pyright: ignore[reportAny, reportExplicitAny]
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"{origin} is not valid JSON: {e}") from e
    if not isinstance(v, dict):
        t = json_type_from_value(v)  # pyright: ignore[reportAny]
        raise ConfigError("$", f"{origin} contains a JSON {t} value, but should contain an object")
    return v  # pyright: ignore[reportUnknownVariableType]


def parse_config(text: str, overrides: ConfigOverrides | None = None) -> RunConfig:
    """Parse and validate a configuration document, filling in defaults."""
    return config_from_object(_load_json_object(text, "configuration"), overrides)


def read_config_file(path: Path, overrides: ConfigOverrides | None = None) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("$", f"cannot read configuration file {path}: {e}") from e
    logger.info("Configuration file: %s", path)
    return config_from_object(_load_json_object(text, str(path)), overrides)
