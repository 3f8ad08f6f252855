"""Gaussian-mixture toy data with a closed-form optimal noise predictor.

A mixture with per-component isotropic variances admits exact posterior
algebra under the forward noising x_t = sqrt(alpha_t) x_0 + sqrt(1-alpha_t) eps,
so the Bayes-optimal noise prediction (the limit of a perfectly trained
denoiser) is available in closed form. Zero variances are allowed and give
point masses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule

__all__ = [
    "GaussianMixtureModel",
    "NoisePrediction",
    "forward_sample",
    "analytic_eps",
    "log_density_t",
    "noised_mixture",
    "score_x",
    "score_xbar",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianMixtureModel:
    weights: np.ndarray     # (K,), non-negative, sums to 1
    means: np.ndarray       # (K, D)
    variances: np.ndarray   # (K,), isotropic per component, >= 0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        var = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if mu.ndim != 2 or mu.shape[0] != w.size or var.shape != w.shape:
            raise ValueError("weights, means and variances must agree on the component count")
        if np.any(w < 0.0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if np.any(var < 0.0):
            raise ValueError("variances must be non-negative")
        for arr, name in ((w, "weights"), (mu, "means"), (var, "variances")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return int(self.weights.size)

    @property
    def D(self) -> int:
        return int(self.means.shape[1])


@dataclass(frozen=True)
class NoisePrediction:
    """Predicted noise and the clean sample it implies."""

    eps_hat: np.ndarray
    x0_hat: np.ndarray


def _check_t(schedule: NoiseSchedule, t: int, lo: int = 1) -> float:
    if not lo <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside [{lo}, {schedule.T}]")
    return schedule.alpha(t)


def forward_sample(gmm: GaussianMixtureModel, x0, t: int, eps,
                   schedule: NoiseSchedule) -> np.ndarray:
    """Diffuse x0 to step t: sqrt(alpha_t) x0 + sqrt(1 - alpha_t) eps."""
    a = _check_t(schedule, t)
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


def _marginal_params(gmm: GaussianMixtureModel, alpha: float):
    """Mixture parameters of x_t: means sqrt(alpha) mu_k, variances alpha var_k + 1 - alpha."""
    sa = np.sqrt(alpha)
    s2 = alpha * gmm.variances + (1.0 - alpha)
    return sa, gmm.means * sa, s2


def _log_responsibilities(gmm, x, sa, s2):
    x = np.asarray(x, dtype=float)
    diff = x[..., None, :] - sa * gmm.means          # (..., K, D)
    sq = np.sum(diff * diff, axis=-1)                # (..., K)
    log_w = np.where(gmm.weights > 0.0, np.log(np.where(gmm.weights > 0.0, gmm.weights, 1.0)), -np.inf)
    log_p = log_w - 0.5 * sq / s2 - 0.5 * gmm.D * (np.log(s2) + _LOG_2PI)
    return log_p, diff


def analytic_eps(gmm: GaussianMixtureModel, x, t: int,
                 schedule: NoiseSchedule) -> NoisePrediction:
    """Bayes-optimal noise prediction for the noised mixture marginal at step t.

    Equals -sqrt(1 - alpha_t) times the score of log p_t, which is the target a
    perfectly trained eps-predictor converges to.
    """
    a = _check_t(schedule, t)
    if a >= 1.0:
        raise ValueError("analytic_eps undefined at alpha_t = 1 (no noise present)")
    x = np.asarray(x, dtype=float)
    sa, _, s2 = _marginal_params(gmm, a)
    log_p, diff = _log_responsibilities(gmm, x, sa, s2)
    # responsibilities in log space with max subtraction, stable at large t
    log_r = log_p - logsumexp(log_p, axis=-1, keepdims=True)
    r = np.exp(log_r)                                 # (..., K)
    gain = sa * gmm.variances / s2                    # (K,)
    post_mean = gmm.means + gain[:, None] * diff      # (..., K, D)
    x0_hat = np.sum(r[..., None] * post_mean, axis=-2)
    eps_hat = (x - sa * x0_hat) / np.sqrt(1.0 - a)
    return NoisePrediction(eps_hat=eps_hat, x0_hat=x0_hat)


def log_density_t(gmm: GaussianMixtureModel, x, t: int,
                  schedule: NoiseSchedule) -> np.ndarray:
    """Exact log density of the noised marginal at step t (t=0 is the clean density)."""
    a = _check_t(schedule, t, lo=0)
    sa, _, s2 = _marginal_params(gmm, a)
    if np.any(s2 <= 0.0):
        raise ValueError("density undefined: zero-variance component with no noise added")
    x = np.asarray(x, dtype=float)
    log_p, _ = _log_responsibilities(gmm, x, sa, s2)
    return logsumexp(log_p, axis=-1)


def noised_mixture(gmm: GaussianMixtureModel, t: int,
                   schedule: NoiseSchedule) -> GaussianMixtureModel:
    """The mixture describing x_t exactly (same weights, scaled means, inflated variances)."""
    a = _check_t(schedule, t, lo=0)
    sa, means, s2 = _marginal_params(gmm, a)
    return GaussianMixtureModel(weights=gmm.weights, means=means, variances=s2)


def score_x(gmm: GaussianMixtureModel, x, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Gradient of log p_t with respect to x (data space)."""
    a = _check_t(schedule, t)
    pred = analytic_eps(gmm, x, t, schedule)
    return -pred.eps_hat / np.sqrt(1.0 - a)


def score_xbar(gmm: GaussianMixtureModel, x_bar, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Gradient of the log density of the rescaled state x_bar = x / sqrt(alpha_t)."""
    a = _check_t(schedule, t)
    x = np.sqrt(a) * np.asarray(x_bar, dtype=float)
    return np.sqrt(a) * score_x(gmm, x, t, schedule)
