"""Evaluation metrics for right-censored time-to-event predictions.

Concordance error counts pair orderings the risk scores get wrong: a pair
(i, j) is comparable when T_i < T_j and patient i had the event, and the pair
is concordant when the earlier patient carries the strictly higher risk.
Patients with equal followup times are never comparable. The error is
(discordant + 0.5 * risk_ties) / comparable, so 0 is perfect, 0.5 is chance.

The Brier score at horizon t weights squared survival-probability residuals
by inverse probability of censoring: G, the Kaplan-Meier estimate of the
censoring distribution, is evaluated at the event time's left limit for
patients who failed by t and at t for patients still at risk, with a floor
keeping the weights finite.

Permutation importance re-scores the cohort with one feature's column
shuffled across patients and reports the mean and standard deviation of the
concordance-error increase over repeats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cohort import Cohort, LongitudinalMatrix, PatientRecord
from .errors import MetricError, NumericError, ShapeError

_CHUNK = 256
DEFAULT_G_FLOOR = 1e-4


@dataclass(frozen=True)
class ConcordanceResult:
    """Pair counts and the resulting error. With ``ipcw`` weighting the counts
    are weighted sums rather than integers, but always satisfy
    concordant + discordant + risk_ties == comparable_pairs."""

    error: float
    comparable_pairs: float
    concordant: float
    discordant: float
    risk_ties: float


def _validate_triplet(times, events, risks):
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    r = np.asarray(risks, dtype=float)
    if not (t.ndim == 1 and t.shape == e.shape == r.shape):
        raise ShapeError("times, events and risks must be equal-length 1-D arrays")
    if not np.isfinite(t).all() or (t < 0).any():
        raise NumericError("followup times must be finite and >= 0")
    if not np.isfinite(r).all():
        raise NumericError("risk scores must be finite")
    return t, e, r


def kaplan_meier(times, events) -> tuple[np.ndarray, np.ndarray]:
    """Product-limit survival estimate.

    Returns (jump_times, survival_after_jump); the curve is right-continuous
    and equals 1 before the first jump. ``events`` marks which followup times
    count as failures; pass the censoring indicator to estimate the censoring
    distribution instead.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    order = np.argsort(t, kind="stable")
    t_sorted = t[order]
    e_sorted = e[order]
    jump_times = []
    surv = []
    s = 1.0
    n = t.size
    i = 0
    while i < n:
        j = i
        deaths = 0
        while j < n and t_sorted[j] == t_sorted[i]:
            deaths += int(e_sorted[j])
            j += 1
        if deaths:
            at_risk = n - i
            s *= 1.0 - deaths / at_risk
            jump_times.append(t_sorted[i])
            surv.append(s)
        i = j
    return np.array(jump_times), np.array(surv)


def step_survival_at(jump_times: np.ndarray, surv: np.ndarray, t: float,
                     left: bool = False) -> float:
    """Evaluate a right-continuous survival step curve at t (or its left limit)."""
    side = "left" if left else "right"
    pos = int(np.searchsorted(jump_times, t, side=side))
    return 1.0 if pos == 0 else float(surv[pos - 1])


def concordance_error(times, events, risks, ipcw: bool = False,
                      g_floor: float = DEFAULT_G_FLOOR) -> ConcordanceResult:
    """Fraction of comparable pairs ordered wrongly by the risk scores.

    With ``ipcw=True`` each comparable pair is weighted by 1 / G(T_i-)^2
    where T_i is the earlier (event) time and G the Kaplan-Meier censoring
    survival, trading Harrell-style pair counting for the censoring-robust
    variant. Raises MetricError when no pair is comparable.
    """
    t, e, r = _validate_triplet(times, events, risks)
    ev_idx = np.flatnonzero(e)
    if ipcw:
        g_times, g_surv = kaplan_meier(t, ~e)
        w_event = np.array([
            1.0 / max(step_survival_at(g_times, g_surv, ti, left=True), g_floor) ** 2
            for ti in t[ev_idx]
        ])
    else:
        w_event = np.ones(ev_idx.size)

    concordant = discordant = ties = comparable = 0.0
    for start in range(0, ev_idx.size, _CHUNK):
        chunk = ev_idx[start : start + _CHUNK]
        w = w_event[start : start + _CHUNK][:, None]
        later = t[None, :] > t[chunk][:, None]
        higher = r[chunk][:, None] > r[None, :]
        lower = r[chunk][:, None] < r[None, :]
        concordant += float((later * higher * w).sum())
        discordant += float((later * lower * w).sum())
        ties += float((later * ~(higher | lower) * w).sum())
        comparable += float((later * w).sum())
    if comparable == 0:
        raise MetricError("no comparable pairs: concordance error is undefined")
    error = (discordant + 0.5 * ties) / comparable
    return ConcordanceResult(
        error=float(error), comparable_pairs=comparable,
        concordant=concordant, discordant=discordant, risk_ties=ties,
    )


@dataclass(frozen=True, eq=False)
class BrierCurve:
    times: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.scores, dtype=float)
        if t.ndim != 1 or t.shape != s.shape:
            raise ShapeError("times and scores must be equal-length 1-D arrays")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "scores", s)


def brier_score(survival_fn: Callable[[PatientRecord, float], float],
                cohort: Cohort, t: float,
                g_floor: float = DEFAULT_G_FLOOR) -> float:
    """Censoring-weighted squared error of predicted survival at horizon t.

    ``survival_fn(patient, t)`` must return the predicted P(T > t | x).
    Patients censored by t contribute nothing; patients who failed by t
    contribute S(t|x)^2 / G(T-) and patients still under observation
    contribute (1 - S(t|x))^2 / G(t).
    """
    if not np.isfinite(t) or t < 0:
        raise NumericError("t must be finite and >= 0")
    times = cohort.times()
    events = cohort.events()
    g_times, g_surv = kaplan_meier(times, ~events)
    g_at_t = max(step_survival_at(g_times, g_surv, t), g_floor)
    total = 0.0
    for patient, ti, ei in zip(cohort.patients, times, events):
        s = float(survival_fn(patient, t))
        if ei and ti <= t:
            g_left = max(step_survival_at(g_times, g_surv, ti, left=True), g_floor)
            total += s * s / g_left
        elif ti > t:
            total += (1.0 - s) ** 2 / g_at_t
    return total / cohort.n


def brier_curve(survival_fn: Callable[[PatientRecord, float], float],
                cohort: Cohort, grid: Sequence[float],
                g_floor: float = DEFAULT_G_FLOOR) -> BrierCurve:
    """Brier score at every point of an ascending time grid."""
    g = np.asarray(list(grid), dtype=float)
    if g.size == 0:
        raise MetricError("grid must not be empty")
    if (np.diff(g) < 0).any():
        raise MetricError("grid must be ascending")
    scores = np.array([brier_score(survival_fn, cohort, ti, g_floor) for ti in g])
    return BrierCurve(g, scores)


@dataclass(frozen=True)
class FeatureImportance:
    feature: str
    mean_increase: float
    std_increase: float


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    baseline_error: float
    repeats: int
    entries: tuple[FeatureImportance, ...]


def _permuted_record(patient: PatientRecord, donor: PatientRecord,
                     feature_kind: str, feature_pos: int) -> PatientRecord:
    if feature_kind == "longitudinal":
        values = patient.longitudinal.values.copy()
        indicators = patient.longitudinal.indicators.copy()
        values[:, feature_pos] = donor.longitudinal.values[:, feature_pos]
        indicators[:, feature_pos] = donor.longitudinal.indicators[:, feature_pos]
        return PatientRecord(patient.id, patient.followup_time, patient.event,
                             patient.time_fixed, LongitudinalMatrix(values, indicators))
    tf = list(patient.time_fixed)
    tf[feature_pos] = donor.time_fixed[feature_pos]
    return PatientRecord(patient.id, patient.followup_time, patient.event,
                         tuple(tf), patient.longitudinal)


def permutation_importance(
    risk_fn: Callable[[PatientRecord], float],
    cohort: Cohort,
    features: "Sequence[str] | None" = None,
    repeats: int = 10,
    seed: int = 0,
    _permute_fn: "Callable[[int, np.random.Generator], np.ndarray] | None" = None,
) -> ImportanceReport:
    """Concordance-error increase when one feature is shuffled across patients.

    A longitudinal feature moves as a whole column (its values and indicators
    across all days); a time-fixed feature moves as its category index. The
    report carries the mean and standard deviation of the increase over
    ``repeats`` shuffles per feature. ``_permute_fn`` is a test hook replacing
    the seeded shuffle (e.g. with the identity permutation).
    """
    if repeats < 1:
        raise MetricError("repeats must be >= 1")
    schema = cohort.schema
    if features is None:
        features = list(schema.longitudinal_names) + list(schema.time_fixed_names)
    plan = []
    for name in features:
        if name in schema.longitudinal_names:
            plan.append((name, "longitudinal", schema.longitudinal_index(name)))
        else:
            plan.append((name, "time_fixed", schema.time_fixed_index(name)))

    times = cohort.times()
    events = cohort.events()
    base_risks = np.array([risk_fn(p) for p in cohort.patients])
    base_error = concordance_error(times, events, base_risks).error

    rng = np.random.default_rng(seed)
    n = cohort.n
    entries = []
    for name, kind, pos in plan:
        increases = np.empty(repeats)
        for rep in range(repeats):
            perm = _permute_fn(n, rng) if _permute_fn is not None else rng.permutation(n)
            risks = np.array([
                risk_fn(_permuted_record(p, cohort.patients[perm[i]], kind, pos))
                for i, p in enumerate(cohort.patients)
            ])
            increases[rep] = concordance_error(times, events, risks).error - base_error
        entries.append(FeatureImportance(
            feature=name,
            mean_increase=float(increases.mean()),
            std_increase=float(increases.std()),
        ))
    return ImportanceReport(baseline_error=float(base_error), repeats=int(repeats),
                            entries=tuple(entries))
