"""Grid-based nondegeneracy verification of certificates.

Certified mode evaluates ``|eta|`` on a covering of the far region and the
curvature ``lambda_min(-sign_j hess eta)`` on coverings of the near balls, then
extends the grid margins to the continuum with the Lipschitz constants
``M_r = 4 s L01 L_{r+1}``.  Heuristic mode checks the nondegeneracy condition
on a dense lattice without any extension argument.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..domain import RegionPartition, covering_grid, DEFAULT_GRID_CAP
from ..features import LipschitzBundle
from ..kernels import AcceptableKernelReport
from .interpolation import CertificateFunction

SPIKE_TOL = 1e-9


@dataclass
class NondegeneracyReport:
    verdict: str  # certified | degenerate | inconclusive
    mode: str  # certified | heuristic
    far_margin: float
    near_margin: float
    spacing_far: float | None = None
    spacing_near: float | None = None
    M0: float | None = None
    M2: float | None = None
    n_far: int = 0
    n_near: int = 0
    reason: str = ""
    max_abs_eta: float = float("nan")
    spike_values: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Certified, or heuristic mode without any violation."""
        if self.mode == "certified":
            return self.verdict == "certified"
        return self.verdict != "degenerate"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict, "mode": self.mode, "passed": self.passed,
            "far_margin": self.far_margin, "near_margin": self.near_margin,
            "spacing_far": self.spacing_far, "spacing_near": self.spacing_near,
            "M0": self.M0, "M2": self.M2, "n_far": self.n_far, "n_near": self.n_near,
            "reason": self.reason, "max_abs_eta": self.max_abs_eta,
            "spike_values": list(self.spike_values),
        }


def lipschitz_slopes(s: int, lip: LipschitzBundle) -> tuple[float, float]:
    """``(M0, M2)`` with ``M_r = 4 s L01 L_{r+1}``."""
    return 4 * s * lip.L01 * lip.L1, 4 * s * lip.L01 * lip.L3


def _curvature(cert: CertificateFunction, pts: np.ndarray, sign: float,
               chunk: int = 50000) -> np.ndarray:
    out = []
    for s0 in range(0, pts.shape[0], chunk):
        H = cert.hess(pts[s0:s0 + chunk])
        out.append(np.linalg.eigvalsh(-sign * H)[:, 0])
    return np.concatenate(out) if out else np.zeros(0)


def _spike_signs(cert, part, signs):
    if signs is not None:
        return np.sign(np.asarray(signs, dtype=float))
    if cert.system is not None and cert.system.s == part.s:
        return cert.system.signs
    return np.sign(cert.value(part.centers))


def verify_nondegeneracy(cert: CertificateFunction, part: RegionPartition,
                         lipschitz: LipschitzBundle | None = None,
                         report: AcceptableKernelReport | None = None, *,
                         mode: str = "certified", signs=None,
                         spacing_far: float | None = None, spacing_near: float | None = None,
                         heuristic_points: int | None = None,
                         cap: int = DEFAULT_GRID_CAP) -> NondegeneracyReport:
    """Check that ``|eta| < 1`` off the spikes and the sign-corrected curvature is positive.

    Parameters
    ----------
    cert : CertificateFunction
    part : RegionPartition
        Centers are the spikes, radius is ``eps_near``.
    lipschitz : LipschitzBundle
        Feature bounds used for ``M_r`` (certified mode).
    report : AcceptableKernelReport, optional
        Supplies default spacings ``eps_eta / (4 M0)`` and ``lambda_eta / (4 M2)``.
    mode : {"certified", "heuristic"}
    heuristic_points : int, optional
        Lattice points per dimension in heuristic mode (default 4096 for d=1, 256 otherwise).
    """
    sg = _spike_signs(cert, part, signs)
    spike_vals = cert.value(part.centers) if part.s else np.zeros(0)
    if mode == "heuristic":
        return _heuristic(cert, part, sg, spike_vals, heuristic_points)
    if mode != "certified":
        raise ValueError(f"unknown mode {mode!r}")
    if lipschitz is None:
        raise ValueError("certified mode needs a Lipschitz bundle")
    M0, M2 = lipschitz_slopes(max(part.s, 1), lipschitz)
    if spacing_far is None or spacing_near is None:
        if report is None:
            raise ValueError("give grid spacings or an acceptable-kernel report")
        spacing_far = spacing_far or report.eps_eta / (4 * M0)
        spacing_near = spacing_near or report.lambda_eta / (4 * M2)
    far = covering_grid(part, "far", spacing_far, cap=cap)
    eta_far = np.abs(cert.value(far.points)) if len(far) else np.zeros(0)
    far_margin = float(1.0 - eta_far.max()) if eta_far.size else 1.0
    near_margin = math.inf
    n_near = 0
    for j in range(part.s):
        g = covering_grid(part, j, spacing_near, cap=cap)
        n_near += len(g)
        lam = _curvature(cert, g.points, sg[j])
        near_margin = min(near_margin, float(lam.min()))
    if part.s == 0:
        near_margin = float("nan")
    max_abs = float(max(eta_far.max() if eta_far.size else 0.0,
                        np.abs(spike_vals).max() if spike_vals.size else 0.0))
    rep = NondegeneracyReport("inconclusive", "certified", far_margin, near_margin,
                              spacing_far, spacing_near, M0, M2, len(far), n_near,
                              max_abs_eta=max_abs, spike_values=[float(v) for v in spike_vals])
    if spike_vals.size and np.max(np.abs(spike_vals)) > 1 + SPIKE_TOL:
        rep.verdict, rep.reason = "degenerate", "|eta| > 1 at a spike"
    elif far_margin <= 0:
        rep.verdict, rep.reason = "degenerate", "far grid point with |eta| >= 1"
    elif part.s and near_margin <= 0:
        rep.verdict, rep.reason = "degenerate", "near grid point with non-negative curvature"
    elif far_margin >= M0 * spacing_far and (part.s == 0 or near_margin >= M2 * spacing_near):
        rep.verdict, rep.reason = "certified", "grid margins exceed Lipschitz slack"
    else:
        rep.reason = "margins positive but below Lipschitz slack"
    return rep


def heuristic_lattice(domain, n_per_dim: int) -> np.ndarray:
    lo, hi = domain.lower, domain.upper
    if domain.kind == "torus":
        axis = np.arange(n_per_dim) / n_per_dim
    else:
        axis = np.linspace(lo, hi, n_per_dim)
    if domain.d == 1:
        return axis.reshape(-1, 1)
    mesh = np.meshgrid(*([axis] * domain.d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _heuristic(cert, part, sg, spike_vals, n) -> NondegeneracyReport:
    d = part.domain.d
    if n is None:
        n = 4096 if d == 1 else 256
    pts = heuristic_lattice(part.domain, n)
    eta = np.abs(cert.value(pts))
    # lattice points that coincide with a spike may sit at |eta| = 1 up to rounding
    far_margin = float(1.0 - eta.max())
    curv = np.array([_curvature(cert, part.centers[j:j + 1], sg[j])[0] for j in range(part.s)])
    near_margin = float(curv.min()) if curv.size else float("nan")
    rep = NondegeneracyReport("inconclusive", "heuristic", far_margin, near_margin,
                              n_far=pts.shape[0], n_near=part.s, max_abs_eta=float(eta.max()),
                              spike_values=[float(v) for v in spike_vals])
    if eta.max() > 1 + SPIKE_TOL:
        rep.verdict, rep.reason = "degenerate", "|eta| exceeds 1 on the lattice"
    elif part.s and near_margin <= 0:
        rep.verdict, rep.reason = "degenerate", "non-negative curvature at a spike"
    else:
        rep.reason = "no violation on the lattice"
    return rep
