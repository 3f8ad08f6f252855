"""Diffusion noise schedules and timestep respacing.

Convention: timesteps are 1-based, t = 1..T. ``alpha(t)`` is the cumulative
signal fraction prod_{i<=t}(1 - beta_i); ``alpha(0)`` is the configurable
boundary value used for the final reverse step (1 by default, so that step
returns the predicted clean sample exactly).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NoiseSchedule",
    "RespacedSchedule",
    "linear_beta_schedule",
    "respace",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise rates and their cumulative signal products."""

    betas: np.ndarray          # shape (T,), betas[t-1] = beta_t
    alphas_cum: np.ndarray     # shape (T,), alphas_cum[t-1] = prod_{i<=t}(1-beta_i)
    alpha_zero: float = 1.0

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        alphas = np.asarray(self.alphas_cum, dtype=float)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas_cum", alphas)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas must be a non-empty 1D sequence")
        if alphas.shape != betas.shape:
            raise ValueError("alphas_cum must match betas in length")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta_t must lie strictly inside (0, 1)")
        if np.any(np.diff(alphas) >= 0.0):
            raise ValueError("alphas_cum must be strictly decreasing")
        expected = np.cumprod(1.0 - betas)
        if not np.allclose(alphas, expected, rtol=1e-12, atol=0.0):
            raise ValueError("alphas_cum is inconsistent with the running product of (1 - beta)")
        if not (alphas[0] < self.alpha_zero <= 1.0):
            raise ValueError("alpha_zero must lie in (alpha_1, 1]")
        betas.flags.writeable = False
        alphas.flags.writeable = False

    @property
    def T(self) -> int:
        return int(self.betas.size)

    @property
    def n_steps(self) -> int:
        return self.T

    def beta(self, t: int) -> float:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        """Cumulative alpha at timestep t; alpha(0) is the boundary value."""
        if t == 0:
            return float(self.alpha_zero)
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alphas_cum[t - 1])

    def prev_t(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")
        return t - 1

    def top_t(self) -> int:
        return self.T

    def transitions(self) -> list[tuple[int, int]]:
        """Reverse-order (t, t_prev) pairs, from (T, T-1) down to (1, 0)."""
        return [(t, t - 1) for t in range(self.T, 0, -1)]

    def steps_from_top(self, t: int) -> int:
        return self.T - t

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "beta", "alpha_cum"])
            for t in range(1, self.T + 1):
                writer.writerow([t, format(self.beta(t), ".17g"), format(self.alpha(t), ".17g")])


@dataclass(frozen=True)
class RespacedSchedule:
    """A strictly increasing subsequence of a parent schedule's timesteps.

    The reverse sampler iterates over adjacent (tau_k, tau_{k-1}) pairs; the
    alpha values are exact reads from the parent, never recomputed.
    """

    parent: NoiseSchedule
    tau: tuple = field(default_factory=tuple)  # 1-based, strictly increasing, ends at T
    alphas_tau: np.ndarray = None

    def __post_init__(self):
        tau = tuple(int(t) for t in self.tau)
        object.__setattr__(self, "tau", tau)
        if len(tau) == 0:
            raise ValueError("tau must be non-empty")
        if any(b <= a for a, b in zip(tau, tau[1:])):
            raise ValueError("tau must be strictly increasing")
        if tau[0] < 1 or tau[-1] != self.parent.T:
            raise ValueError("tau must lie in [1, T] and end at T")
        alphas = np.array([self.parent.alphas_cum[t - 1] for t in tau])
        if self.alphas_tau is not None and not np.array_equal(
            np.asarray(self.alphas_tau), alphas
        ):
            raise ValueError("alphas_tau must be exact reads from the parent")
        alphas.flags.writeable = False
        object.__setattr__(self, "alphas_tau", alphas)
        object.__setattr__(self, "_index", {t: k for k, t in enumerate(tau)})

    @property
    def K(self) -> int:
        return len(self.tau)

    @property
    def T(self) -> int:
        # timesteps keep their parent labels, so the valid range is the parent's
        return self.parent.T

    @property
    def n_steps(self) -> int:
        return self.K

    @property
    def alpha_zero(self) -> float:
        return self.parent.alpha_zero

    def alpha(self, t: int) -> float:
        if t == 0:
            return float(self.parent.alpha_zero)
        k = self._index.get(t)
        if k is None:
            raise ValueError(f"timestep {t} is not part of the respaced subsequence")
        return float(self.alphas_tau[k])

    def prev_t(self, t: int) -> int:
        k = self._index.get(t)
        if k is None:
            raise ValueError(f"timestep {t} is not part of the respaced subsequence")
        return self.tau[k - 1] if k > 0 else 0

    def top_t(self) -> int:
        return self.tau[-1]

    def transitions(self) -> list[tuple[int, int]]:
        pairs = []
        for k in range(self.K - 1, -1, -1):
            pairs.append((self.tau[k], self.tau[k - 1] if k > 0 else 0))
        return pairs

    def steps_from_top(self, t: int) -> int:
        k = self._index.get(t)
        if k is None:
            raise ValueError(f"timestep {t} is not part of the respaced subsequence")
        return self.K - 1 - k


def linear_beta_schedule(T: int, beta_start: float, beta_end: float,
                         alpha_zero: float = 1.0) -> NoiseSchedule:
    """Linearly interpolated betas from beta_start to beta_end inclusive."""
    if T < 1:
        raise ValueError("T must be a positive integer")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T)
    alphas = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alphas_cum=alphas, alpha_zero=alpha_zero)


def respace(schedule: NoiseSchedule, K: int, mode: str = "uniform") -> RespacedSchedule:
    """Select K timesteps out of T, always including T itself."""
    T = schedule.T
    if not 1 <= K <= T:
        raise ValueError(f"K={K} outside [1, T={T}]")
    if mode == "uniform":
        tau = [(k * T) // K for k in range(1, K + 1)]
    elif mode == "quadratic":
        raw = [max(1, round(T * (k / K) ** 2)) for k in range(1, K + 1)]
        raw[-1] = T
        # repair collisions from rounding while keeping the endpoint fixed
        for k in range(K - 2, -1, -1):
            raw[k] = min(raw[k], raw[k + 1] - 1)
        for k in range(K):
            raw[k] = max(raw[k], k + 1)
        tau = raw
    else:
        raise ValueError(f"unknown respacing mode {mode!r}")
    return RespacedSchedule(parent=schedule, tau=tuple(tau))
