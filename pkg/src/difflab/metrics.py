"""Sample-quality and trajectory-smoothness metrics for toy distributions.

Wasserstein-1 plays the role a feature-space metric would play at image
scale: exact in 1D, sliced in higher dimensions. Trajectory total variation
operationalizes "trembling" as the summed step-to-step distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, wasserstein_distance

from .model import GaussianMixtureModel
from .samplers import Trajectory

__all__ = [
    "HeatmapGrid",
    "wasserstein1_1d",
    "mixture_quantile",
    "sliced_w1",
    "trajectory_total_variation",
    "build_heatmap",
    "bin_trajectory_points",
    "mode_statistics",
]


def mixture_quantile(gmm: GaussianMixtureModel, u) -> np.ndarray:
    """Inverse CDF of a 1D mixture; exact for pure point mixtures, bisection otherwise."""
    if gmm.D != 1:
        raise ValueError("mixture quantiles are 1D only")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    mus = gmm.means[:, 0]
    sigs = np.sqrt(gmm.variances)
    if np.all(sigs == 0.0):
        order = np.argsort(mus)
        cum = np.cumsum(gmm.weights[order])
        idx = np.searchsorted(cum, u, side="left")
        return mus[order][np.minimum(idx, mus.size - 1)]

    def cdf(x):
        x = np.asarray(x, dtype=float)
        terms = np.where(
            sigs > 0.0,
            norm.cdf((x[..., None] - mus) / np.where(sigs > 0.0, sigs, 1.0)),
            (x[..., None] >= mus).astype(float),
        )
        return terms @ gmm.weights

    span = np.max(np.abs(mus)) + 12.0 * max(np.max(sigs), 1.0)
    lo = np.full(u.shape, -span)
    hi = np.full(u.shape, span)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def wasserstein1_1d(samples_a, samples_b) -> float:
    """Exact 1D W1: empirical vs empirical, or empirical vs an exact mixture.

    Against a mixture, matches empirical quantiles at levels (i - 0.5) / n.
    """
    a = np.asarray(samples_a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty sample set")
    if isinstance(samples_b, GaussianMixtureModel):
        n = a.size
        u = (np.arange(1, n + 1) - 0.5) / n
        q = mixture_quantile(samples_b, u)
        return float(np.mean(np.abs(np.sort(a) - q)))
    b = np.asarray(samples_b, dtype=float).ravel()
    if b.size == 0:
        raise ValueError("empty sample set")
    return float(wasserstein_distance(a, b))


def sliced_w1(samples_a, samples_b, n_projections: int, rng) -> float:
    """Mean 1D W1 over random unit-direction projections (D >= 2)."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("expected point clouds of matching dimension")
    if a.shape[1] < 2:
        raise ValueError("sliced W1 is for D >= 2; use wasserstein1_1d in 1D")
    dirs = rng.standard_normal((n_projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = [wasserstein_distance(a @ d, b @ d) for d in dirs]
    return float(np.mean(vals))


def trajectory_total_variation(traj: Trajectory, space: str = "x",
                               schedule=None) -> float:
    """Sum of step-to-step distances along a recorded trajectory.

    space "x" measures in data space; "x_bar" rescales each point by
    1/sqrt(alpha_t) first (requires the schedule used for the run).
    """
    xs = np.asarray(traj.xs, dtype=float)
    if xs.size == 0:
        raise ValueError("empty trajectory")
    if space == "x":
        pts = xs
    elif space == "x_bar":
        if schedule is None:
            raise ValueError("x_bar total variation requires the schedule")
        alphas = np.array([schedule.alpha(int(t)) for t in traj.ts])
        pts = xs / np.sqrt(alphas)[:, None]
    else:
        raise ValueError(f"unknown space {space!r}")
    if pts.shape[0] < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=-1)))


@dataclass(frozen=True)
class HeatmapGrid:
    """Occupancy counts of recorded 1D trajectories over (t, x) bins."""

    t_edges: np.ndarray
    x_edges: np.ndarray
    counts: np.ndarray  # (len(t_edges)-1, len(x_edges)-1), int64

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_lo", "t_hi", "x_lo", "x_hi", "count"])
            for i in range(self.counts.shape[0]):
                for j in range(self.counts.shape[1]):
                    writer.writerow([
                        format(self.t_edges[i], ".17g"),
                        format(self.t_edges[i + 1], ".17g"),
                        format(self.x_edges[j], ".17g"),
                        format(self.x_edges[j + 1], ".17g"),
                        int(self.counts[i, j]),
                    ])


def _clipped_bin(values, edges):
    idx = np.digitize(values, edges) - 1
    return np.clip(idx, 0, len(edges) - 2)


def bin_trajectory_points(ts, xs, t_edges, x_edges, counts) -> None:
    """Accumulate (t, x) points into an existing counts matrix in place."""
    ti = _clipped_bin(np.asarray(ts, dtype=float), t_edges)
    xi = _clipped_bin(np.asarray(xs, dtype=float).ravel(), x_edges)
    np.add.at(counts, (ti, xi), 1)


def build_heatmap(trajectories, t_bins: int, x_bins: int,
                  x_range: tuple[float, float] = (-6.0, 6.0),
                  t_range: tuple[float, float] | None = None) -> HeatmapGrid:
    """Histogram recorded 1D trajectories over (t, x); out-of-range x clips into edge bins."""
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories given")
    if trajectories[0].xs.shape[-1] != 1:
        raise ValueError("heatmaps are for 1D trajectories")
    if t_range is None:
        t_max = max(float(np.max(tr.ts)) for tr in trajectories)
        t_range = (0.0, t_max + 1.0)
    t_edges = np.linspace(t_range[0], t_range[1], t_bins + 1)
    x_edges = np.linspace(x_range[0], x_range[1], x_bins + 1)
    counts = np.zeros((t_bins, x_bins), dtype=np.int64)
    for tr in trajectories:
        bin_trajectory_points(np.broadcast_to(tr.ts, tr.xs.shape[:1]), tr.xs,
                              t_edges, x_edges, counts)
    return HeatmapGrid(t_edges=t_edges, x_edges=x_edges, counts=counts)


def mode_statistics(samples, modes) -> list[dict]:
    """Nearest-mode assignment fractions and mean absolute deviations."""
    s = np.asarray(samples, dtype=float).ravel()
    m = np.asarray(modes, dtype=float).ravel()
    if m.size == 0:
        raise ValueError("at least one mode required")
    if s.size == 0:
        raise ValueError("empty sample set")
    nearest = np.argmin(np.abs(s[:, None] - m), axis=1)
    out = []
    for k, mode in enumerate(m):
        mask = nearest == k
        n_k = int(mask.sum())
        dev = float(np.mean(np.abs(s[mask] - mode))) if n_k else float("nan")
        out.append({"mode": float(mode), "fraction": n_k / s.size,
                    "count": n_k, "mean_abs_dev": dev})
    return out
