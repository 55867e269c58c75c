"""Shared builders for the test suite: tiny schemas, hand-rolled patients,
and random cohorts with controllable tie structure."""

import numpy as np

from longsurv.cohort import (
    Cohort,
    EventSpec,
    FeatureSchema,
    LongitudinalMatrix,
    PatientRecord,
)


def two_feature_schema():
    return FeatureSchema(
        longitudinal_features=(("f0", 0.0, 1.0), ("f1", 0.0, 1.0)),
    )


def rich_schema():
    """Two longitudinal features plus two categorical ones."""
    return FeatureSchema(
        longitudinal_features=(("hr", 0.0, 1.0), ("sbp", 0.0, 1.0)),
        time_fixed_features=(("sex", ("f", "m")), ("unit", ("a", "b", "c"))),
    )


def random_matrix(rng, days, width, density=0.5):
    ind = (rng.uniform(size=(days, width)) < density).astype(float)
    values = rng.uniform(size=(days, width)) * ind
    return LongitudinalMatrix(values=values, indicators=ind)


def make_patient(pid, followup, event, days, schema, rng=None, tf=None):
    width = schema.n_longitudinal
    if rng is None:
        matrix = LongitudinalMatrix.empty(days, width)
    else:
        matrix = random_matrix(rng, days, width)
    if tf is None:
        tf = tuple(0 for _ in schema.time_fixed_features)
    return PatientRecord(id=str(pid), followup_time=int(followup), event=bool(event),
                         time_fixed=tuple(tf), longitudinal=matrix)


def cohort_from_arrays(times, events, days=None, schema=None, seed=None,
                       event_name="e"):
    """Cohort whose followup/event vectors are given; matrices random or empty."""
    times = np.asarray(times)
    events = np.asarray(events, dtype=bool)
    if schema is None:
        schema = two_feature_schema()
    if days is None:
        days = int(max(times.max(), 1))
    rng = None if seed is None else np.random.default_rng(seed)
    spec = EventSpec(event_name=event_name, cutoff_days=days)
    patients = tuple(
        make_patient(f"p{i}", t, e, days, schema, rng=rng)
        for i, (t, e) in enumerate(zip(times, events))
    )
    return Cohort(schema=schema, event_spec=spec, patients=patients)


def random_survival_cohort(rng, n, granularity=1, mean_time=8.0, event_rate=0.7,
                           days=None, schema=None, seed_matrices=True):
    """Random cohort with exponential-ish integer times; granularity > 1 forces ties."""
    g = int(granularity)
    times = np.ceil(rng.exponential(mean_time, n) / g).astype(int) * g
    times = np.clip(times, g, None)
    events = rng.uniform(size=n) < event_rate
    if not events.any():
        events[int(rng.integers(n))] = True
    if days is None:
        days = int(times.max())
    else:
        times = np.clip(times, None, days)
    if schema is None:
        schema = two_feature_schema()
    spec = EventSpec(event_name="e", cutoff_days=days)
    mat_rng = rng if seed_matrices else None
    patients = tuple(
        make_patient(f"p{i}", t, e, days, schema, rng=mat_rng)
        for i, (t, e) in enumerate(zip(times, events))
    )
    return Cohort(schema=schema, event_spec=spec, patients=patients)
