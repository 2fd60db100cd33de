"""Sufficient sample counts for certificate existence, up to a universal constant.

The returned numbers set every hidden constant to 1; only ratios between
settings (e.g. doubling ``s``) carry meaning.
"""
from __future__ import annotations

import math

from ..features import LipschitzBundle
from ..kernels import AcceptableKernelReport

MODES = ("golfing", "etaV", "etaV_random_signs")


def _log_sd(s: int, d: int) -> float:
    # log(sd) vanishes at s = d = 1 and sits in a denominator
    return math.log(max(s * d, 2))


def sample_count_terms(s: int, d: int, report: AcceptableKernelReport, lipschitz: LipschitzBundle,
                       rho: float = 0.05, mode: str = "golfing", B_X: float | None = None,
                       eps_near: float | None = None) -> dict:
    """Individual bracket terms of the bound; ``total`` is the full count."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    eps, lam, B = report.eps_eta, report.lambda_eta, {0: report.B0, 2: report.B2}
    alpha = {0: eps, 2: lam}
    L01 = lipschitz.L01
    Li = {0: lipschitz.L0, 2: lipschitz.L2}
    B_X = 0.5 if B_X is None else B_X
    eps_near = report.eps_near if eps_near is None else eps_near
    N = {0: 1 + d * L01 * lipschitz.L1 * B_X / eps,
         2: 1 + d * L01 * lipschitz.L3 * eps_near / lam}
    lsN = {i: d * math.log(s * N[i]) for i in (0, 2)}  # log((s N_i)^d)
    lr = math.log(1 / rho)
    lsd = _log_sd(s, d)
    lsdr = math.log(s * d / rho)
    out = {"N0": N[0], "N2": N[2]}
    if mode == "golfing":
        h = min(eps, report.B0 * lam / report.B2, 1.0)
        lead = d ** 2 * (L01 * report.B0 / h) ** 2 * lsd * lsdr
        logf = math.log(lipschitz.L0 / eps + lipschitz.L2 / lam)
        Lbar = {i: (max(d * Li[i] ** 2 / alpha[i] ** 2, math.sqrt(d) * Li[i] * L01 / alpha[i])
                    + max(Li[i] ** 2 / B[i] ** 2, Li[i] * L01 / B[i])) * logf for i in (0, 2)}
        grid = {i: Lbar[i] * (lsN[i] - math.log(rho) + lr * lsN[i] / lsd) for i in (0, 2)}
        out.update(h=h, lead=lead, grid0=grid[0], grid2=grid[2])
        bracket = lead + grid[0] + grid[2]
    else:
        Lc = {i: L01 ** 2 * B[i] ** 2 / alpha[i] ** 2 for i in (0, 2)}
        Lbar = {i: Li[i] / alpha[i] * (Li[i] / alpha[i] + L01) for i in (0, 2)}
        if mode == "etaV":
            lead = s * (Lc[0] + Lc[2]) * lsdr
            grid = {i: Lbar[i] * (lsN[i] - math.log(rho)) for i in (0, 2)}
            bracket = lead + grid[0] + grid[2]
        else:
            lead = 0.0
            grid = {0: lsdr * (Lc[0] + Lbar[0]) * (lsN[0] - math.log(rho)),
                    2: lsdr * (d ** 2 * Lc[2] + Lbar[2]) * (lsN[2] - math.log(rho))}
            bracket = grid[0] + grid[2]
        out.update(lead=lead, grid0=grid[0], grid2=grid[2])
    out["total"] = s * bracket
    return out


def predicted_sample_counts(s: int, d: int, report: AcceptableKernelReport,
                            lipschitz: LipschitzBundle, rho: float = 0.05, mode: str = "golfing",
                            B_X: float | None = None, eps_near: float | None = None) -> float:
    """Sufficient ``m`` (universal constant set to 1) for the chosen construction.

    Parameters
    ----------
    mode : {"golfing", "etaV", "etaV_random_signs"}
        Golfing certificate, vanishing-derivative pre-certificate, or the latter
        with Rademacher signs.
    B_X : float, optional
        Domain half width (default 1/2, the torus).
    eps_near : float, optional
        Near-region radius (default from the report).
    """
    return float(sample_count_terms(s, d, report, lipschitz, rho, mode, B_X, eps_near)["total"])
