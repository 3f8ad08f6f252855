"""Executable verification suite behind the ``verify`` CLI command.

Every check returns a dict {name, passed, observed, expected, detail} so
failures can be enumerated with the values that tripped them.
"""

from __future__ import annotations

import math

import numpy as np

from . import model as gm
from .model import GaussianMixtureModel
from .runner import run_chains
from .samplers import SamplerConfig
from .schedule import linear_beta_schedule
from .sde_checks import drift_consistency, midpoint_equivalence

__all__ = [
    "check_score_consistency",
    "check_drift_identity",
    "check_diffusion_scale",
    "check_midpoint_equivalence",
    "check_degeneracy",
    "check_spherical_constraint",
    "run_all_checks",
]


def _result(name, passed, observed, expected, detail=None) -> dict:
    out = {"name": name, "passed": bool(passed), "observed": observed,
           "expected": expected}
    if detail is not None:
        out["detail"] = detail
    return out


def _random_mixture(rng, d: int) -> GaussianMixtureModel:
    k = int(rng.integers(1, 4))
    w = rng.uniform(0.2, 1.0, k)
    w /= w.sum()
    return GaussianMixtureModel(
        weights=w,
        means=rng.uniform(-4.0, 4.0, (k, d)),
        variances=rng.uniform(0.0, 2.0, k),
    )


def fd_score_error(gmm, x, t, schedule, h: float = 1e-5) -> float:
    """Relative error of analytic_eps against -sqrt(1-a) times a central-difference
    gradient of the exact log density."""
    a = schedule.alpha(t)
    eps_hat = gm.analytic_eps(gmm, x, t, schedule).eps_hat
    grad = np.zeros_like(np.asarray(x, dtype=float))
    for d in range(grad.shape[-1]):
        xp = np.array(x, dtype=float)
        xm = np.array(x, dtype=float)
        xp[..., d] += h
        xm[..., d] -= h
        grad[..., d] = (gm.log_density_t(gmm, xp, t, schedule)
                        - gm.log_density_t(gmm, xm, t, schedule)) / (2 * h)
    target = -math.sqrt(1.0 - a) * grad
    return float(np.linalg.norm(eps_hat - target) / max(np.linalg.norm(target), 1e-8))


def check_score_consistency(n_triples: int = 100, seed: int = 7,
                            tol: float = 1e-5) -> dict:
    rng = np.random.default_rng(seed)
    schedule = linear_beta_schedule(100, 1e-3, 0.05)
    worst = 0.0
    for _ in range(n_triples):
        d = int(rng.integers(1, 4))
        gmm = _random_mixture(rng, d)
        t = int(rng.integers(1, schedule.T + 1))
        x = rng.uniform(-6.0, 6.0, d)
        worst = max(worst, fd_score_error(gmm, x, t, schedule))
    return _result("score-consistency", worst < tol, worst, f"< {tol}")


def _toy_two_point() -> GaussianMixtureModel:
    return GaussianMixtureModel(weights=np.array([0.5, 0.5]),
                                means=np.array([[-2.0], [4.0]]),
                                variances=np.array([0.0, 0.0]))


def check_drift_identity(tol: float = 1e-10, seed: int = 11) -> tuple[dict, dict]:
    """Returns (check, per-t report table)."""
    schedule = linear_beta_schedule(1000, 1e-4, 0.02)
    report = drift_consistency(schedule, _toy_two_point(), n_points=8,
                               rng=np.random.default_rng(seed))
    worst = float(np.max(report["drift_rel_mismatch"]))
    return _result("drift-identity", worst < tol, worst, f"< {tol}"), report


def check_diffusion_scale(report: dict | None = None, tol: float = 0.02) -> dict:
    """|diffusion ratio - 1| below tol wherever the per-step beta is below tol."""
    if report is None:
        schedule = linear_beta_schedule(1000, 1e-4, 0.02)
        report = drift_consistency(schedule, _toy_two_point(), n_points=2,
                                   rng=np.random.default_rng(0))
    mask = (report["beta"] < tol) & ~np.isnan(report["diffusion_ratio"])
    worst = float(np.max(np.abs(report["diffusion_ratio"][mask] - 1.0)))
    return _result("diffusion-scale", worst < tol, worst, f"< {tol}")


def check_midpoint_equivalence(tol: float = 1e-12, n_steps: int = 1000,
                               seed: int = 3) -> dict:
    rng = np.random.default_rng(seed)
    noise = 0.05 * rng.standard_normal(n_steps)
    worst = 0.0
    for lam in (0.0, 0.5, 1.0, 2.0):
        dev = midpoint_equivalence(lam, n_steps,
                                   drift=lambda k: 0.1 * math.sin(0.01 * k),
                                   noise_seq=noise)
        worst = max(worst, dev)
    return _result("midpoint-equivalence", worst < tol, worst, f"< {tol}")


def degenerate_config(eta_mode: str) -> SamplerConfig:
    """Adaptive settings that must reproduce the vanilla sampler exactly."""
    return SamplerConfig(method="adaptive", eta_mode=eta_mode, b=1.0,
                         a_rule="spherical", c=0.0, zeta=0.0)


def check_degeneracy(tol: float = 1e-12, T: int = 50, n_chains: int = 16,
                     seed: int = 5) -> dict:
    gmm = _toy_two_point()
    schedule = linear_beta_schedule(T, 1e-3, 0.05)
    worst = 0.0
    for eta in ("deterministic", "ddpm_unit"):
        van = run_chains(gmm, schedule, SamplerConfig.vanilla(eta), n_chains, seed)
        ada = run_chains(gmm, schedule, degenerate_config(eta), n_chains, seed)
        worst = max(worst, float(np.max(np.abs(van.samples - ada.samples))))
    return _result("degeneracy-equivalence", worst <= tol, worst, f"<= {tol}")


def check_spherical_constraint(config: SamplerConfig, tol: float = 1e-12) -> dict:
    """a^2 + b^2 = 1 at every step whenever the spherical rule is selected."""
    worst = 0.0
    n_steps = 100
    for k in range(n_steps):
        a, b = config.coeffs(k, n_steps)
        worst = max(worst, abs(a * a + b * b - 1.0))
    applicable = config.a_rule == "spherical"
    return _result("spherical-constraint", (not applicable) or worst < tol,
                   worst, f"< {tol}",
                   detail=None if applicable else "affine rule: not applicable")


def run_all_checks() -> dict:
    """Full verification report; `passed` is the conjunction of every check."""
    drift_check, report = check_drift_identity()
    checks = [
        check_score_consistency(),
        drift_check,
        check_diffusion_scale(report),
        check_midpoint_equivalence(),
        check_degeneracy(),
        check_spherical_constraint(SamplerConfig()),
    ]
    table = {
        "t": report["t"].tolist(),
        "beta": report["beta"].tolist(),
        "drift_rel_mismatch": report["drift_rel_mismatch"].tolist(),
        "diffusion_ratio": [None if np.isnan(v) else float(v)
                            for v in report["diffusion_ratio"]],
        "sde_scale_ratio": [None if np.isnan(v) else float(v)
                            for v in report["sde_scale_ratio"]],
    }
    return {"passed": all(c["passed"] for c in checks), "checks": checks,
            "drift_diffusion_table": table}
