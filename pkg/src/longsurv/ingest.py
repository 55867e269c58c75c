"""Ingestion of raw, dated patient records into an encoded cohort.

Records file: JSON lines, one object per patient:

    {"id": "p1",
     "events": {"admit": "2020-03-01", "death": "2020-03-09"},
     "time_fixed": {"sex": "f", "age_band": "70+"},
     "observations": [{"date": "2020-03-02", "feature": "crp", "value": 41.0}, ...]}

Schema file: a single JSON object with "longitudinal" and "time_fixed" feature
declarations (see ``cohort.schema_from_dict``).

Pipeline per patient, driven by an EventSpec:

1. Resolve the baseline date from the configured rule. Patients without a
   baseline are dropped.
2. Keep observations inside [baseline + start_offset_days, baseline + cutoff_days].
   Pre-baseline days fold onto day 0 of the matrix; a day exactly equal to the
   cutoff anchors followup but has no matrix row.
3. If the event is recorded: followup = event day, event = true, unless the
   event falls past the cutoff, in which case the patient is censored at the
   cutoff. Patients whose event precedes the baseline are dropped.
4. Otherwise the patient is censored at the most recent in-window observation
   day (0 when only pre-baseline observations exist, or none at all).
5. With filter_require_observation set, patients without any in-window
   observation are dropped regardless of outcome.
"""

from __future__ import annotations

import json
from datetime import date
from pathlib import Path

from .cohort import (
    Cohort,
    EventSpec,
    FeatureSchema,
    PatientRecord,
    encode_longitudinal,
    schema_from_dict,
)
from .errors import EmptyCohortError, ParseError, SchemaError

MISSING_LEVEL = "missing"


def load_schema(path: "str | Path") -> FeatureSchema:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return schema_from_dict(raw)


def _parse_date(raw, where: str) -> date:
    try:
        return date.fromisoformat(raw)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad date {raw!r}") from exc


def _resolve_baseline(events: dict, obs_dates: list[date], spec: EventSpec, where: str):
    rule = spec.baseline_rule
    if rule == "first_record":
        return min(obs_dates) if obs_dates else None
    if rule == "admit_date":
        key = "admit"
    elif rule == "icu_admit_date":
        key = "icu_admit"
    else:  # explicit_column
        key = spec.baseline_column
    raw = events.get(key)
    return _parse_date(raw, where) if raw is not None else None


def _time_fixed_indices(raw_map: dict, schema: FeatureSchema, patient_id: str) -> tuple[int, ...]:
    out = []
    for name, levels in schema.time_fixed_features:
        value = raw_map.get(name)
        if value is None:
            if MISSING_LEVEL in levels:
                out.append(levels.index(MISSING_LEVEL))
                continue
            raise SchemaError(
                f"patient {patient_id!r}: no value for {name!r} and the schema "
                f"declares no {MISSING_LEVEL!r} level"
            )
        out.append(schema.level_index(name, str(value)))
    return tuple(out)


def ingest_cohort(
    records_path: "str | Path",
    schema_path: "str | Path",
    event_spec: EventSpec,
) -> Cohort:
    """Read raw records and build an encoded cohort for one event pipeline."""
    records_path = Path(records_path)
    schema = load_schema(schema_path)
    days = event_spec.cutoff_days
    offset = event_spec.start_offset_days
    patients = []
    for lineno, line in enumerate(records_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{records_path}: line {lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{where}: {exc.msg}") from exc
        if not isinstance(rec, dict) or "id" not in rec:
            raise ParseError(f"{where}: record must be an object with an 'id'")
        pid = str(rec["id"])
        events = rec.get("events") or {}
        raw_obs = rec.get("observations") or []
        if not isinstance(events, dict) or not isinstance(raw_obs, list):
            raise ParseError(f"{where}: 'events' must be an object and 'observations' a list")

        obs = []
        for o in raw_obs:
            try:
                obs.append((_parse_date(o["date"], where), str(o["feature"]), float(o["value"])))
            except (KeyError, TypeError) as exc:
                raise ParseError(f"{where}: malformed observation ({exc})") from exc

        baseline = _resolve_baseline(events, [d for d, _, _ in obs], event_spec, where)
        if baseline is None:
            continue

        # Window the observations. rel == days anchors followup only.
        window: list[tuple[int, str, float]] = []
        last_in_window = None
        for d, feat, value in obs:
            rel = (d - baseline).days
            if rel < offset or rel > days:
                continue
            last_in_window = rel if last_in_window is None else max(last_in_window, rel)
            if rel < days:
                window.append((max(rel, 0), feat, value))

        if event_spec.filter_require_observation and last_in_window is None:
            continue

        event_raw = events.get(event_spec.event_name)
        if event_raw is not None:
            rel_event = (_parse_date(event_raw, where) - baseline).days
            if rel_event < 0:
                continue
            if rel_event <= days:
                followup, event = rel_event, True
            else:
                followup, event = days, False
        else:
            followup = max(0, min(last_in_window, days)) if last_in_window is not None else 0
            event = False

        patients.append(PatientRecord(
            id=pid,
            followup_time=followup,
            event=event,
            time_fixed=_time_fixed_indices(rec.get("time_fixed") or {}, schema, pid),
            longitudinal=encode_longitudinal(window, schema, days),
        ))

    if not patients:
        raise EmptyCohortError(f"{records_path}: no usable patients after ingestion")
    if not any(p.event for p in patients):
        raise EmptyCohortError(f"{records_path}: no observed events after ingestion")
    return Cohort(schema, event_spec, tuple(patients))
