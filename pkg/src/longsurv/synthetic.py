"""Synthetic cohort generation with known ground-truth risks.

Each synthetic patient gets one measured day (day 0) with W feature values
drawn uniformly on [0, 1]. The true risk is either the linear predictor
beta' x or one of two fixed nonlinearities. Event times are exponential with
rate h0 * exp(r*), where h0 is calibrated so the median raw event time sits
near half the cutoff. Times are rounded up to multiples of tie_granularity to
manufacture ties, and an independent uniform-style censoring time is
calibrated so the realized censored fraction lands within 5 percentage points
of the requested rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, EventSpec, FeatureSchema, LongitudinalMatrix, PatientRecord
from .errors import ConfigError

NONLINEAR_RISKS = ("none", "product_of_first_two", "sine_of_first")

# Scales chosen so the nonlinear true risks have roughly unit variance.
_PRODUCT_SCALE = 12.0
_SINE_SCALE = 1.4

_CENSOR_TOLERANCE = 0.05


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for one generated cohort.

    ``true_linear_coefficients`` fixes the number of longitudinal features W;
    with a nonlinear risk the coefficients only determine W. ``cutoff_days``
    sets the matrix depth and the administrative censoring horizon.
    ``time_fixed_noise_levels`` > 0 adds one categorical feature, independent
    of the outcome, with that many levels.
    """

    n_patients: int
    seed: int
    true_linear_coefficients: tuple[float, ...]
    nonlinear_risk: str = "none"
    censoring_rate: float = 0.3
    tie_granularity: int = 1
    cutoff_days: int = 30
    time_fixed_noise_levels: int = 0

    def __post_init__(self):
        object.__setattr__(self, "true_linear_coefficients",
                           tuple(float(b) for b in self.true_linear_coefficients))
        if self.n_patients < 2:
            raise ConfigError("n_patients must be >= 2")
        if not self.true_linear_coefficients:
            raise ConfigError("need at least one coefficient")
        if self.nonlinear_risk not in NONLINEAR_RISKS:
            raise ConfigError(f"nonlinear_risk must be one of {NONLINEAR_RISKS}")
        if self.nonlinear_risk == "product_of_first_two" and len(self.true_linear_coefficients) < 2:
            raise ConfigError("product_of_first_two needs at least two features")
        if not 0.0 < self.censoring_rate < 1.0:
            raise ConfigError("censoring_rate must lie strictly between 0 and 1")
        if self.tie_granularity < 1:
            raise ConfigError("tie_granularity must be >= 1")
        if self.cutoff_days < self.tie_granularity:
            raise ConfigError("cutoff_days must be >= tie_granularity")
        if self.time_fixed_noise_levels < 0:
            raise ConfigError("time_fixed_noise_levels must be >= 0")


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Ground truth emitted next to a generated cohort."""

    coefficients: np.ndarray
    risks: np.ndarray
    baseline_rate: float


def _true_risks(x: np.ndarray, config: SyntheticConfig) -> np.ndarray:
    beta = np.array(config.true_linear_coefficients)
    if config.nonlinear_risk == "none":
        return x @ beta
    if config.nonlinear_risk == "product_of_first_two":
        return _PRODUCT_SCALE * (x[:, 0] - 0.5) * (x[:, 1] - 0.5)
    return _SINE_SCALE * np.sin(2.0 * np.pi * x[:, 0])


def _ceil_to(times: np.ndarray, g: int) -> np.ndarray:
    return (np.ceil(times / g) * g).astype(int)


def _calibrate_censoring(
    event_days: np.ndarray,
    u: np.ndarray,
    t_max: int,
    g: int,
    target: float,
) -> np.ndarray:
    """Pick censoring times C = ceil(t_max * u**alpha) (on the granularity grid)
    with alpha bisected so the realized censored fraction hits the target."""

    def censor_times(alpha: float) -> np.ndarray:
        c = _ceil_to(t_max * np.power(u, alpha), g)
        return np.clip(c, g, t_max)

    def censored_fraction(alpha: float) -> float:
        return float(np.mean(event_days > censor_times(alpha)))

    lo, hi = 0.0, 64.0
    if censored_fraction(lo) > target:
        best = lo
    elif censored_fraction(hi) < target:
        best = hi
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if censored_fraction(mid) < target:
                lo = mid
            else:
                hi = mid
        best = hi if abs(censored_fraction(hi) - target) <= abs(censored_fraction(lo) - target) else lo
    achieved = censored_fraction(best)
    if abs(achieved - target) > _CENSOR_TOLERANCE:
        raise ConfigError(
            f"cannot calibrate censoring to {target:.2f} +/- {_CENSOR_TOLERANCE}: "
            f"closest achievable fraction is {achieved:.3f}"
        )
    return censor_times(best)


def generate_synthetic_cohort_with_truth(config: SyntheticConfig) -> tuple[Cohort, SyntheticTruth]:
    """Generate a cohort plus its ground-truth sidecar. Deterministic by seed."""
    rng = np.random.default_rng(config.seed)
    n = config.n_patients
    width = len(config.true_linear_coefficients)
    g = config.tie_granularity
    cutoff = config.cutoff_days
    t_max = (cutoff // g) * g  # admin horizon on the granularity grid

    x = rng.uniform(size=(n, width))
    risks = _true_risks(x, config)

    raw = rng.standard_exponential(n) / np.exp(risks)
    scale = (cutoff / 2.0) / float(np.median(raw))
    event_days = _ceil_to(raw * scale, g)

    u = rng.uniform(size=n)
    censor_days = _calibrate_censoring(event_days, u, t_max, g, config.censoring_rate)

    observed_event = event_days <= censor_days
    followup = np.where(observed_event, event_days, censor_days)

    noise_levels = config.time_fixed_noise_levels
    time_fixed = (
        rng.integers(0, noise_levels, size=n) if noise_levels > 0 else np.zeros(n, dtype=int)
    )

    schema = FeatureSchema(
        longitudinal_features=tuple((f"f{j}", 0.0, 1.0) for j in range(width)),
        time_fixed_features=(
            (("noise_group", tuple(f"g{l}" for l in range(noise_levels))),)
            if noise_levels > 0 else ()
        ),
    )
    event_spec = EventSpec(
        event_name="synthetic_event",
        baseline_rule="first_record",
        start_offset_days=0,
        cutoff_days=cutoff,
        filter_require_observation=False,
    )

    pad = len(str(n - 1))
    patients = []
    for i in range(n):
        values = np.zeros((cutoff, width))
        indicators = np.zeros((cutoff, width))
        values[0, :] = x[i]
        indicators[0, :] = 1.0
        patients.append(PatientRecord(
            id=f"p{i:0{pad}d}",
            followup_time=int(followup[i]),
            event=bool(observed_event[i]),
            time_fixed=(int(time_fixed[i]),) if noise_levels > 0 else (),
            longitudinal=LongitudinalMatrix(values, indicators),
        ))

    cohort = Cohort(schema, event_spec, tuple(patients))
    truth = SyntheticTruth(
        coefficients=np.array(config.true_linear_coefficients),
        risks=risks,
        baseline_rate=1.0 / scale,
    )
    return cohort, truth


def generate_synthetic_cohort(config: SyntheticConfig) -> Cohort:
    """Generate a cohort; see ``generate_synthetic_cohort_with_truth``."""
    return generate_synthetic_cohort_with_truth(config)[0]
