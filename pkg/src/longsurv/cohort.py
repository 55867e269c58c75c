"""Cohort data model.

A cohort couples a feature schema with patient records whose followup times
are integer days measured from a per-patient baseline date. Longitudinal
measurements live in a fixed-depth matrix with one row per day: for each of
the W declared features a row holds a value rescaled into [0, 1] and a 0/1
indicator marking whether the feature was measured that day. Unmeasured
entries are exactly zero, so zero-padding and "no measurement" coincide.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCohortError, ParseError, SchemaError, StratificationError

BASELINE_RULES = ("first_record", "admit_date", "icu_admit_date", "explicit_column")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature declarations for one cohort.

    Parameters
    ----------
    longitudinal_features:
        (name, min_value, max_value) per time-dependent feature. The min/max
        pair is the rescale range mapping raw measurements onto [0, 1]; raw
        values outside the range are clamped.
    time_fixed_features:
        (name, levels) per categorical feature. Records store an index into
        the level vocabulary. Include a "missing" level if absent values are
        expected at ingest time.
    """

    longitudinal_features: tuple[tuple[str, float, float], ...]
    time_fixed_features: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        longs = tuple(
            (str(n), float(lo), float(hi)) for n, lo, hi in self.longitudinal_features
        )
        fixed = tuple(
            (str(n), tuple(str(v) for v in levels))
            for n, levels in self.time_fixed_features
        )
        object.__setattr__(self, "longitudinal_features", longs)
        object.__setattr__(self, "time_fixed_features", fixed)
        if not longs:
            raise SchemaError("schema declares no longitudinal features")
        names = [n for n, _, _ in longs] + [n for n, _ in fixed]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names in schema")
        for name, lo, hi in longs:
            if not np.isfinite(lo) or not np.isfinite(hi) or not lo < hi:
                raise SchemaError(f"feature {name!r}: need finite min < max, got [{lo}, {hi}]")
        for name, levels in fixed:
            if not levels:
                raise SchemaError(f"time-fixed feature {name!r} has an empty vocabulary")
            if len(set(levels)) != len(levels):
                raise SchemaError(f"time-fixed feature {name!r} has duplicate levels")

    @property
    def n_longitudinal(self) -> int:
        return len(self.longitudinal_features)

    @property
    def longitudinal_names(self) -> tuple[str, ...]:
        return tuple(n for n, _, _ in self.longitudinal_features)

    @property
    def time_fixed_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.time_fixed_features)

    @property
    def vocab_sizes(self) -> tuple[int, ...]:
        return tuple(len(levels) for _, levels in self.time_fixed_features)

    def longitudinal_index(self, name: str) -> int:
        for i, (n, _, _) in enumerate(self.longitudinal_features):
            if n == name:
                return i
        raise SchemaError(f"unknown longitudinal feature {name!r}")

    def time_fixed_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.time_fixed_features):
            if n == name:
                return i
        raise SchemaError(f"unknown time-fixed feature {name!r}")

    def level_index(self, feature: str, level: str) -> int:
        _, levels = self.time_fixed_features[self.time_fixed_index(feature)]
        try:
            return levels.index(level)
        except ValueError:
            raise SchemaError(f"unknown level {level!r} for time-fixed feature {feature!r}") from None


@dataclass(frozen=True)
class EventSpec:
    """Defines one event pipeline: baseline anchoring and the observation window.

    The observation window is [baseline + start_offset_days, baseline + cutoff_days].
    Measurements taken before the baseline but inside the window are folded onto
    day 0; measurements on or after day ``cutoff_days`` never enter the matrix
    (it has rows for days 0 .. cutoff_days - 1), although an observation exactly
    on the cutoff day still anchors a censored patient's followup time.

    ``baseline_column`` names the key inside each record's event map that the
    ``explicit_column`` rule reads.
    """

    event_name: str
    baseline_rule: str = "first_record"
    start_offset_days: int = 0
    cutoff_days: int = 30
    filter_require_observation: bool = False
    baseline_column: str = "baseline"

    def __post_init__(self):
        if self.baseline_rule not in BASELINE_RULES:
            raise SchemaError(
                f"baseline_rule must be one of {BASELINE_RULES}, got {self.baseline_rule!r}"
            )
        if int(self.cutoff_days) < 1:
            raise SchemaError("cutoff_days must be >= 1")
        if int(self.start_offset_days) > 0:
            raise SchemaError("start_offset_days must be <= 0")
        object.__setattr__(self, "cutoff_days", int(self.cutoff_days))
        object.__setattr__(self, "start_offset_days", int(self.start_offset_days))


@dataclass(frozen=True, eq=False)
class LongitudinalMatrix:
    """Day-by-feature measurement matrix: values in [0, 1] plus 0/1 indicators."""

    values: np.ndarray
    indicators: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        m = np.array(self.indicators, dtype=float)
        if v.ndim != 2 or v.shape != m.shape:
            raise SchemaError("values and indicators must be equal-shape 2-D arrays")
        if not np.isin(m, (0.0, 1.0)).all():
            raise SchemaError("indicators must be 0 or 1")
        if not np.isfinite(v).all() or (v < 0.0).any() or (v > 1.0).any():
            raise SchemaError("values must lie in [0, 1]")
        if (v[m == 0.0] != 0.0).any():
            raise SchemaError("entries with indicator 0 must hold value 0")
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "indicators", m)

    @property
    def days(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def observed_days(self) -> np.ndarray:
        """Row indices holding at least one measurement."""
        return np.flatnonzero(self.indicators.any(axis=1))

    def row_concat(self) -> np.ndarray:
        """Per-day vectors [values | indicators], shape (days, 2 * width)."""
        return np.hstack([self.values, self.indicators])

    def flattened(self) -> np.ndarray:
        """Day-major flattening of ``row_concat``."""
        return self.row_concat().reshape(-1)

    @staticmethod
    def empty(days: int, width: int) -> "LongitudinalMatrix":
        z = np.zeros((days, width))
        return LongitudinalMatrix(z, z.copy())


@dataclass(frozen=True, eq=False)
class PatientRecord:
    """One encoded patient: outcome plus features."""

    id: str
    followup_time: int
    event: bool
    time_fixed: tuple[int, ...]
    longitudinal: LongitudinalMatrix

    def __post_init__(self):
        object.__setattr__(self, "followup_time", int(self.followup_time))
        object.__setattr__(self, "event", bool(self.event))
        object.__setattr__(self, "time_fixed", tuple(int(i) for i in self.time_fixed))
        if self.followup_time < 0:
            raise SchemaError(f"patient {self.id!r}: followup_time must be >= 0")


@dataclass(frozen=True, eq=False)
class Cohort:
    """Immutable bundle of schema, event pipeline and conforming patients."""

    schema: FeatureSchema
    event_spec: EventSpec
    patients: tuple[PatientRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "patients", tuple(self.patients))
        if not self.patients:
            raise EmptyCohortError("cohort has no patients")
        if not any(p.event for p in self.patients):
            raise EmptyCohortError("cohort has no observed events")
        days = self.event_spec.cutoff_days
        width = self.schema.n_longitudinal
        vocabs = self.schema.vocab_sizes
        for p in self.patients:
            if p.followup_time > days:
                raise SchemaError(
                    f"patient {p.id!r}: followup_time {p.followup_time} exceeds cutoff {days}"
                )
            if p.longitudinal.days != days or p.longitudinal.width != width:
                raise SchemaError(
                    f"patient {p.id!r}: matrix shape {p.longitudinal.values.shape} "
                    f"does not match (cutoff_days={days}, features={width})"
                )
            if len(p.time_fixed) != len(vocabs):
                raise SchemaError(f"patient {p.id!r}: wrong number of time-fixed values")
            for idx, size in zip(p.time_fixed, vocabs):
                if not 0 <= idx < size:
                    raise SchemaError(f"patient {p.id!r}: time-fixed index {idx} out of range")

    @property
    def n(self) -> int:
        return len(self.patients)

    @property
    def n_events(self) -> int:
        return sum(1 for p in self.patients if p.event)

    @property
    def n_censored(self) -> int:
        return self.n - self.n_events

    def times(self) -> np.ndarray:
        return np.array([p.followup_time for p in self.patients], dtype=float)

    def events(self) -> np.ndarray:
        return np.array([p.event for p in self.patients], dtype=bool)

    def with_patients(self, patients: Sequence[PatientRecord]) -> "Cohort":
        return Cohort(self.schema, self.event_spec, tuple(patients))


def encode_longitudinal(
    observations: Iterable[tuple[int, str, float]],
    schema: FeatureSchema,
    days: int,
) -> LongitudinalMatrix:
    """Turn raw per-day measurements into a matrix of rescaled values + indicators.

    Parameters
    ----------
    observations:
        Iterable of (day, feature_name, raw_value) with day in [0, days).
        Multiple measurements of a feature on one day are averaged before
        rescaling.
    schema:
        Supplies feature order and per-feature rescale ranges.
    days:
        Matrix depth D; one row per day.
    """
    width = schema.n_longitudinal
    sums = np.zeros((days, width))
    counts = np.zeros((days, width))
    for day, name, value in observations:
        day = int(day)
        if not 0 <= day < days:
            raise ValueError(f"observation day {day} outside [0, {days})")
        j = schema.longitudinal_index(name)
        sums[day, j] += float(value)
        counts[day, j] += 1.0
    measured = counts > 0
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=measured)
    lows = np.array([lo for _, lo, _ in schema.longitudinal_features])
    highs = np.array([hi for _, _, hi in schema.longitudinal_features])
    scaled = np.clip((means - lows[None, :]) / (highs - lows)[None, :], 0.0, 1.0)
    values = np.where(measured, scaled, 0.0)
    indicators = measured.astype(float)
    return LongitudinalMatrix(values, indicators)


def truncate_observations(
    matrix: LongitudinalMatrix,
    k: int,
    seed: "int | np.random.Generator",
) -> LongitudinalMatrix:
    """Keep at most ``k`` observed days, chosen uniformly at random.

    Rows not kept are zeroed entirely (values and indicators), so the result
    is indistinguishable from a patient who was simply measured on fewer days.
    A matrix with at most ``k`` observed days is returned unchanged.
    """
    if int(k) < 1:
        raise ValueError("k must be >= 1")
    observed = matrix.observed_days()
    if observed.size <= int(k):
        return matrix
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = rng.choice(observed, size=int(k), replace=False)
    keep_mask = np.zeros(matrix.days, dtype=bool)
    keep_mask[keep] = True
    values = np.where(keep_mask[:, None], matrix.values, 0.0)
    indicators = np.where(keep_mask[:, None], matrix.indicators, 0.0)
    return LongitudinalMatrix(values, indicators)


def largest_remainder_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Integer partition of n proportional to ratios, by largest remainder."""
    quotas = [n * float(r) for r in ratios]
    sizes = [int(np.floor(q)) for q in quotas]
    short = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def stratified_split(
    cohort: Cohort,
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> tuple[Cohort, Cohort, Cohort]:
    """Split into (train, val, test) preserving the event/censored mix.

    Each stratum (event patients, censored patients) is shuffled with the
    seeded generator and partitioned by largest-remainder rounding, so the
    per-stratum counts are exact for divisible sizes. Raises
    StratificationError if any part of any stratum would come out empty.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValueError("ratios must have exactly three entries (train, val, test)")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[], [], []]
    strata = (
        [i for i, p in enumerate(cohort.patients) if p.event],
        [i for i, p in enumerate(cohort.patients) if not p.event],
    )
    for label, stratum in zip(("event", "censored"), strata):
        arr = np.array(stratum, dtype=int)
        rng.shuffle(arr)
        sizes = largest_remainder_sizes(len(arr), ratios)
        if any(s == 0 for s in sizes):
            raise StratificationError(
                f"{label} stratum of size {len(arr)} cannot cover splits {ratios}"
            )
        start = 0
        for part, size in zip(parts, sizes):
            part.extend(arr[start : start + size].tolist())
            start += size
    return tuple(
        cohort.with_patients([cohort.patients[i] for i in part]) for part in parts
    )  # type: ignore[return-value]


# --- JSON (de)serialization -------------------------------------------------

def schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "longitudinal": [
            {"name": n, "min": lo, "max": hi} for n, lo, hi in schema.longitudinal_features
        ],
        "time_fixed": [
            {"name": n, "levels": list(levels)} for n, levels in schema.time_fixed_features
        ],
    }


def schema_from_dict(d: dict) -> FeatureSchema:
    try:
        longs = tuple((f["name"], f["min"], f["max"]) for f in d.get("longitudinal", []))
        fixed = tuple((f["name"], tuple(f["levels"])) for f in d.get("time_fixed", []))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed schema object: {exc}") from exc
    return FeatureSchema(longs, fixed)


def event_spec_to_dict(spec: EventSpec) -> dict:
    return {
        "event_name": spec.event_name,
        "baseline_rule": spec.baseline_rule,
        "start_offset_days": spec.start_offset_days,
        "cutoff_days": spec.cutoff_days,
        "filter_require_observation": spec.filter_require_observation,
        "baseline_column": spec.baseline_column,
    }


def event_spec_from_dict(d: dict) -> EventSpec:
    known = {
        "event_name", "baseline_rule", "start_offset_days", "cutoff_days",
        "filter_require_observation", "baseline_column",
    }
    extra = set(d) - known
    if extra:
        raise SchemaError(f"unknown event spec fields: {sorted(extra)}")
    if "event_name" not in d:
        raise SchemaError("event spec needs an event_name")
    return EventSpec(**d)


def _default_meta_path(jsonl_path: Path) -> Path:
    return jsonl_path.with_name(jsonl_path.stem + "_meta.json")


def save_cohort(
    cohort: Cohort,
    jsonl_path: "str | Path",
    meta_path: "str | Path | None" = None,
    provenance: "dict | None" = None,
) -> None:
    """Write one JSON line per patient plus a sidecar meta file.

    The meta file carries the schema, the event spec, and optional provenance;
    the JSONL file holds exactly one line per patient. Observed matrix entries
    are stored sparsely as [day, feature_index, value] triples with values
    already rescaled to [0, 1].
    """
    jsonl_path = Path(jsonl_path)
    meta_path = Path(meta_path) if meta_path is not None else _default_meta_path(jsonl_path)
    lines = []
    for p in cohort.patients:
        obs = [
            [int(d), int(f), float(p.longitudinal.values[d, f])]
            for d, f in zip(*np.nonzero(p.longitudinal.indicators))
        ]
        lines.append(json.dumps({
            "id": p.id,
            "followup_time": p.followup_time,
            "event": p.event,
            "time_fixed": list(p.time_fixed),
            "observations": obs,
        }, sort_keys=True, separators=(",", ":")))
    jsonl_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = {
        "schema": schema_to_dict(cohort.schema),
        "event_spec": event_spec_to_dict(cohort.event_spec),
    }
    if provenance is not None:
        meta["provenance"] = provenance
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_cohort(jsonl_path: "str | Path", meta_path: "str | Path | None" = None) -> Cohort:
    """Inverse of ``save_cohort``."""
    jsonl_path = Path(jsonl_path)
    meta_path = Path(meta_path) if meta_path is not None else _default_meta_path(jsonl_path)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    schema = schema_from_dict(meta["schema"])
    event_spec = event_spec_from_dict(meta["event_spec"])
    days = event_spec.cutoff_days
    width = schema.n_longitudinal
    patients = []
    for lineno, line in enumerate(jsonl_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{jsonl_path}: line {lineno}: {exc.msg}") from exc
        try:
            values = np.zeros((days, width))
            indicators = np.zeros((days, width))
            for d, f, v in rec["observations"]:
                values[int(d), int(f)] = float(v)
                indicators[int(d), int(f)] = 1.0
            patients.append(PatientRecord(
                id=str(rec["id"]),
                followup_time=rec["followup_time"],
                event=rec["event"],
                time_fixed=tuple(rec["time_fixed"]),
                longitudinal=LongitudinalMatrix(values, indicators),
            ))
        except (KeyError, TypeError, IndexError) as exc:
            raise ParseError(f"{jsonl_path}: line {lineno}: malformed patient record ({exc})") from exc
    return Cohort(schema, event_spec, tuple(patients))
