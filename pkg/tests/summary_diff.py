import json
import math
from dataclasses import dataclass
from typing import Callable

from bohm_pair_slit.jsonish import JObject, JValue


class Missing:
    def __repr__(self) -> str:
        return "missing"


MISSING = Missing()

# Decides whether a difference at the given path is allowed between two runs.
type AllowCallback = Callable[[list[str]], bool]


@dataclass
class Difference:
    allowed: bool
    path: list[str]
    left: JValue | Missing
    right: JValue | Missing

    def formatted_string(self) -> str:
        kind = "allowed" if self.allowed else "unexpected"
        return (
            f'{kind} difference at "{_path_string(self.path)}":'
            f"\n    left  : {_value_string(self.left)}"
            f"\n    right : {_value_string(self.right)}"
        )


def timestamp_only(path: list[str]) -> bool:
    """Two summaries of the same configuration may differ only in created_at."""
    return path == ["created_at"]


def formatted_diffs(diffs: list[Difference]) -> str:
    ordered = sorted(diffs, key=lambda diff: diff.allowed)
    return "\n".join(diff.formatted_string() for diff in ordered)


def diff_objects(
    left: JObject, right: JObject, allow: AllowCallback | None = None
) -> tuple[bool, list[Difference]]:
    """
    Compare two summary documents value by value, descending into objects and arrays.
    Floats must match exactly. Returns whether every difference is allowed.
    """
    diffs: list[Difference] = []
    _diff_values(left, right, [], allow, diffs)
    return all(diff.allowed for diff in diffs), diffs


def _diff_values(
    left: JValue | Missing,
    right: JValue | Missing,
    path: list[str],
    allow: AllowCallback | None,
    diffs: list[Difference],
) -> None:
    if isinstance(left, dict) and isinstance(right, dict):
        for key in sorted(left.keys() | right.keys()):
            lv, rv = left.get(key, MISSING), right.get(key, MISSING)
            _diff_values(lv, rv, [*path, key], allow, diffs)
    elif isinstance(left, list) and isinstance(right, list) and len(left) == len(right):
        for i, (lv, rv) in enumerate(zip(left, right, strict=True)):
            _diff_values(lv, rv, [*path, f"[{i}]"], allow, diffs)
    elif _both_nan(left, right):
        return
    elif type(left) is not type(right) or left != right:
        allowed = allow is not None and allow(path)
        diffs.append(Difference(allowed, path, left, right))


def _both_nan(left: JValue | Missing, right: JValue | Missing) -> bool:
    if isinstance(left, float) and isinstance(right, float):
        return math.isnan(left) and math.isnan(right)
    return False


def _path_string(path: list[str]) -> str:
    return "".join(p if p.startswith("[") or i == 0 else f".{p}" for i, p in enumerate(path))


def _value_string(value: JValue | Missing) -> str:
    if isinstance(value, Missing):
        return repr(value)
    text = json.dumps(value, sort_keys=True)
    if len(text) > 200:
        return text[:200] + "..."
    return text
