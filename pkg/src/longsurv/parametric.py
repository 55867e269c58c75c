"""Fully parametric proportional-hazards baselines.

Both families model h(t | x) = h0(t) * exp(beta' x) with a closed-form
baseline:

- Weibull: h0(t) = (k / lam) * (t / lam)**(k - 1), H0(t) = (t / lam)**k,
  with shape k > 0 and scale lam > 0 (stored in the ``rate`` field).
- Gompertz: h0(t) = a * exp(gamma * t), H0(t) = a * (exp(gamma * t) - 1) / gamma,
  with rate a > 0 and shape gamma of any sign; gamma -> 0 recovers the
  exponential model with rate a.

Fitting maximizes the censored log likelihood
sum_events [log h0(T_j) + beta' x_j] - sum_all H0(T_j) exp(beta' x_j)
by full-batch Adam on (log-transformed positive parameters, beta), and keeps
the best-likelihood iterate, so the returned fit never scores below the
initialization. Zero followup times are shifted to half a day for the Weibull
likelihood only (log t appears there); predictions use times as given.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort
from .errors import ConfigError, DegenerateFitError, NumericError
from .models import EncodedInput, encode_inputs

FAMILIES = ("weibull", "gompertz")

_SMALL_GAMMA = 1e-8


@dataclass(eq=False)
class ParametricModel:
    """Fitted family with shape, rate (Weibull scale / Gompertz rate) and beta."""

    family: str
    shape: float
    rate: float
    coefficients: np.ndarray

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}")
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if not np.isfinite(self.rate) or self.rate <= 0:
            raise NumericError("rate must be positive and finite")
        if not np.isfinite(self.shape):
            raise NumericError("shape must be finite")
        if self.family == "weibull" and self.shape <= 0:
            raise NumericError("weibull shape must be positive")


def _phi(gamma: float, t: np.ndarray) -> np.ndarray:
    """(exp(gamma * t) - 1) / gamma, continuous at gamma == 0."""
    if abs(gamma) < _SMALL_GAMMA:
        gt = gamma * t
        return t * (1.0 + gt / 2.0 + gt * gt / 6.0)
    return np.expm1(gamma * t) / gamma

def _phi_dgamma(gamma: float, t: np.ndarray) -> np.ndarray:
    """d/dgamma of _phi, continuous at gamma == 0."""
    if abs(gamma) < _SMALL_GAMMA:
        gt = gamma * t
        return t * t * (0.5 + gt / 3.0 + gt * gt / 8.0)
    return (np.exp(gamma * t) * (gamma * t - 1.0) + 1.0) / (gamma * gamma)


def baseline_cumulative_hazard(model: ParametricModel, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if model.family == "weibull":
        return np.power(t / model.rate, model.shape)
    return model.rate * _phi(model.shape, t)


def baseline_hazard(model: ParametricModel, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if model.family == "weibull":
        k, lam = model.shape, model.rate
        return (k / lam) * np.power(t / lam, k - 1.0)
    return model.rate * np.exp(model.shape * t)


def parametric_survival(model: ParametricModel, enc: "EncodedInput | np.ndarray",
                        t: float) -> float:
    """S(t | x) = exp(-H0(t) * exp(beta' x))."""
    if not np.isfinite(t) or t < 0:
        raise NumericError("t must be finite and >= 0")
    x = enc.flattened if isinstance(enc, EncodedInput) else np.asarray(enc, dtype=float)
    eta = float(model.coefficients @ x)
    h0 = float(baseline_cumulative_hazard(model, t))
    return float(np.exp(-h0 * np.exp(eta)))


def _weibull_loglik_grad(theta: np.ndarray, t: np.ndarray, e: np.ndarray,
                         x: np.ndarray):
    a, b = theta[0], theta[1]           # a = log k, b = log lam
    beta = theta[2:]
    k = np.exp(a)
    log_t = np.log(t)
    eta = x @ beta
    h0_big = np.exp(k * (log_t - b))    # H0(t)
    risk = np.exp(eta)
    expected = h0_big * risk
    ll = float(np.sum(e * (a - k * b + (k - 1.0) * log_t + eta)) - expected.sum())
    d_a = float(np.sum(e * (1.0 + k * (log_t - b))) - np.sum(expected * k * (log_t - b)))
    d_b = float(-k * e.sum() + k * expected.sum())
    d_beta = x[e].sum(axis=0) - expected @ x
    return ll, np.concatenate([[d_a, d_b], d_beta])


def _gompertz_loglik_grad(theta: np.ndarray, t: np.ndarray, e: np.ndarray,
                          x: np.ndarray):
    gamma, alpha = theta[0], theta[1]   # alpha = log a
    beta = theta[2:]
    a0 = np.exp(alpha)
    eta = x @ beta
    risk = np.exp(eta)
    h0_big = a0 * _phi(gamma, t)
    expected = h0_big * risk
    ll = float(np.sum(e * (alpha + gamma * t + eta)) - expected.sum())
    d_gamma = float(np.sum(e * t) - a0 * np.sum(_phi_dgamma(gamma, t) * risk))
    d_alpha = float(e.sum() - expected.sum())
    d_beta = x[e].sum(axis=0) - expected @ x
    return ll, np.concatenate([[d_gamma, d_alpha], d_beta])


def fit_parametric(cohort: Cohort, family: str, *,
                   learning_rate: float = 0.05, iterations: int = 2000,
                   seed: int = 0, fix_shape: "float | None" = None) -> ParametricModel:
    """Censored maximum likelihood fit of one parametric family.

    Optimization is full-batch Adam (same moment settings as the Cox engine)
    on the unconstrained parameterization; the best-likelihood iterate wins.
    ``fix_shape`` freezes the shape parameter (Weibull k / Gompertz gamma),
    which turns Weibull with k = 1 into the exponential model. The fit is
    deterministic; ``seed`` is accepted for interface parity.
    """
    del seed
    if family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}")
    t = cohort.times()
    e = cohort.events()
    if np.unique(t).size < 2:
        raise DegenerateFitError("all followup times are identical; cannot fit a time model")
    inputs = encode_inputs(cohort)
    x = np.stack([enc.flattened for enc in inputs])
    # Optimize against centered columns so that constant features (always-on
    # indicators, padding) stay at coefficient zero instead of trading off
    # against the rate; the column means are folded back into the rate below.
    mu = x.mean(axis=0)
    xc = x - mu

    if family == "weibull":
        t_fit = np.where(t == 0, 0.5, t)
        loglik = lambda theta: _weibull_loglik_grad(theta, t_fit, e, xc)
        shape0 = 0.0 if fix_shape is None else float(np.log(fix_shape))
        theta = np.concatenate([[shape0, float(np.log(t_fit.mean()))],
                                np.zeros(x.shape[1])])
        frozen = 0 if fix_shape is not None else None
    else:
        loglik = lambda theta: _gompertz_loglik_grad(theta, t, e, xc)
        crude_rate = max(e.sum() / max(t.sum(), 1.0), 1e-8)
        shape0 = 0.0 if fix_shape is None else float(fix_shape)
        theta = np.concatenate([[shape0, float(np.log(crude_rate))],
                                np.zeros(x.shape[1])])
        frozen = 0 if fix_shape is not None else None

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_ll, best_theta = loglik(theta)[0], theta.copy()
    for step in range(1, iterations + 1):
        ll, grad = loglik(theta)
        if not np.isfinite(ll) or not np.isfinite(grad).all():
            break
        if ll > best_ll:
            best_ll, best_theta = ll, theta.copy()
        if frozen is not None:
            grad[frozen] = 0.0
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        theta = theta + learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    ll, _ = loglik(theta)
    if np.isfinite(ll) and ll > best_ll:
        best_ll, best_theta = ll, theta.copy()

    beta = best_theta[2:]
    offset = float(beta @ mu)
    if family == "weibull":
        k = float(np.exp(best_theta[0]))
        lam = float(np.exp(best_theta[1]) * np.exp(offset / k))
        return ParametricModel("weibull", k, lam, beta)
    rate = float(np.exp(best_theta[1]) * np.exp(-offset))
    return ParametricModel("gompertz", float(best_theta[0]), rate, beta)


def parametric_model_to_dict(model: ParametricModel) -> dict:
    return {
        "bundle_type": "parametric",
        "model": {
            "family": model.family,
            "shape": model.shape,
            "rate": model.rate,
            "coefficients": [float(c) for c in model.coefficients],
        },
    }


def parametric_model_from_dict(d: dict) -> ParametricModel:
    if d.get("bundle_type") != "parametric":
        raise ConfigError(f"not a parametric model bundle: {d.get('bundle_type')!r}")
    m = d["model"]
    return ParametricModel(m["family"], float(m["shape"]), float(m["rate"]),
                           np.array(m["coefficients"], dtype=float))
