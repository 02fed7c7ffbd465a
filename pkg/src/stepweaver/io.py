"""Schedule files and run configuration.

Schedules serialize to JSON with all floats printed as 17-significant-digit
decimals, which round-trip binary64 exactly.  The schema is flat:

    {
      "schema_version": 1,
      "class": "f" | "g" | "s",
      "n": <int>,
      "steps": [<decimal>, ...],
      "rate": <decimal>,
      "construction": <composition expression, optional>,
      "provenance": <free text, optional>
    }

On load the closed-form identities are revalidated; if a construction is
present it is re-evaluated and must reproduce the stored steps, and the
schedule then carries the construction tree.
"""

import json
from dataclasses import dataclass, fields

import numpy as np

from .schedule import (
    CompClass,
    IdentityError,
    ScheduleError,
    StepSchedule,
    validate_schedule,
)

SCHEMA_VERSION = 1

_REQUIRED_KEYS = ("schema_version", "class", "n", "steps", "rate")
_ALLOWED_KEYS = _REQUIRED_KEYS + ("construction", "provenance")


class ScheduleFileError(ScheduleError):
    """A schedule file violates the schema or fails revalidation."""


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def dumps_schedule(schedule: StepSchedule, construction: "str | None" = None, provenance: str = "") -> str:
    """Serialize to the schedule-file JSON text (17-digit decimals)."""
    parts = [
        f'"schema_version": {SCHEMA_VERSION}',
        f'"class": {json.dumps(schedule.comp_class.value)}',
        f'"n": {schedule.n}',
        '"steps": [' + ", ".join(_fmt17(s) for s in schedule.steps) + "]",
        f'"rate": {_fmt17(schedule.rate)}',
    ]
    if construction:
        parts.append(f'"construction": {json.dumps(construction)}')
    if provenance:
        parts.append(f'"provenance": {json.dumps(provenance)}')
    return "{\n  " + ",\n  ".join(parts) + "\n}\n"


def save_schedule(path, schedule: StepSchedule, construction: "str | None" = None, provenance: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_schedule(schedule, construction, provenance))


def loads_schedule(text: str, identity_tol: float = 1e-9) -> StepSchedule:
    """Parse and revalidate schedule-file JSON; see :func:`load_schedule`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScheduleFileError(f"not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ScheduleFileError("top level must be a JSON object")
    unknown = sorted(set(doc) - set(_ALLOWED_KEYS))
    if unknown:
        raise ScheduleFileError(f"unknown keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise ScheduleFileError(f"missing keys: {', '.join(missing)}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ScheduleFileError(
            f"schema_version: expected {SCHEMA_VERSION}, got {doc['schema_version']!r}"
        )
    try:
        comp_class = CompClass(doc["class"])
    except ValueError:
        raise ScheduleFileError(f"class: expected one of f/g/s, got {doc['class']!r}") from None
    if not isinstance(doc["n"], int) or doc["n"] < 0:
        raise ScheduleFileError(f"n: expected a nonnegative integer, got {doc['n']!r}")
    steps = doc["steps"]
    if not isinstance(steps, list) or not all(isinstance(s, (int, float)) for s in steps):
        raise ScheduleFileError("steps: expected an array of numbers")
    if len(steps) != doc["n"]:
        raise ScheduleFileError(f"steps: length {len(steps)} does not match n={doc['n']}")
    if not isinstance(doc["rate"], (int, float)):
        raise ScheduleFileError(f"rate: expected a number, got {doc['rate']!r}")

    schedule = StepSchedule(np.array(steps, dtype=np.float64), comp_class, float(doc["rate"]))
    try:
        validate_schedule(schedule, identity_tol)
    except IdentityError as err:
        raise ScheduleFileError(f"rate fails revalidation: {err}") from err

    construction = doc.get("construction")
    if construction:
        from .dsl import compile_expression  # deferred: io loads without the dsl otherwise

        built, _ = compile_expression(construction, comp_class)
        if built.n != schedule.n or (
            schedule.n
            and np.max(np.abs(built.steps - schedule.steps) / np.maximum(1.0, schedule.steps))
            > identity_tol
        ):
            raise ScheduleFileError(
                "construction: expression does not reproduce the stored steps"
            )
        # adopt the construction's tree (and conjectured flag) with stored steps
        schedule = StepSchedule(
            schedule.steps, comp_class, schedule.rate, built.tree, built.conjectured
        )
    return schedule


def load_schedule(path, identity_tol: float = 1e-9) -> StepSchedule:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_schedule(fh.read(), identity_tol)


@dataclass
class RunConfig:
    """Verification-run knobs; all numeric fields must be positive.

    Defaults are fixed so runs are reproducible: 200-instance battery under
    numpy's PCG64 generator with seed 0xC0FFEE.
    """

    battery: int = 200
    seed: int = 0xC0FFEE
    identity_tol: float = 1e-9
    slack_tol: float = 1e-8
    tight_tol: float = 1e-9
    q_tol: float = 1e-9
    cache_dir: "str | None" = None
    output_format: str = "text"

    def __post_init__(self):
        for name in ("battery", "seed", "identity_tol", "slack_tol", "tight_tol", "q_tol"):
            if not getattr(self, name) > 0:
                raise ScheduleFileError(f"config field {name} must be positive")
        if self.output_format not in ("text", "json"):
            raise ScheduleFileError(
                f"config field output_format must be 'text' or 'json', got {self.output_format!r}"
            )

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        allowed = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ScheduleFileError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise ScheduleFileError(f"config is not valid JSON: {err}") from err
        if not isinstance(doc, dict):
            raise ScheduleFileError("config top level must be a JSON object")
        return cls.from_dict(doc)
