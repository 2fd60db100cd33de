"""Golfing construction of a dual certificate from random features.

Step I splits the features into blocks.  Starting from ``q_0 = rhs`` it accepts
block ``B_i`` when three events hold for the current residual ``q``::

    (I)   ||(I - Y_i Y^-1) q||_inf <= c_k ||q||_inf
    (II)  |qbar^T f_i(x)| <= t_k ||q||_inf               on the far grid
    (III) ||hess (qbar^T f_i)(x)|| <= b_k ||q||_inf       on the near grids

with ``qbar = Y^-1 q``, ``Y`` the limit matrix and ``Y_i``, ``f_i`` the block
averages; ``k`` counts accepted blocks.  The first accepted block instead needs
``sign_j hess(qbar^T f_1) <= -b_1 I`` near ``x_j``.  On acceptance
``eta += qbar^T f_i`` and ``q <- (I - Y_i Y^-1) q``.  Step II removes the final
residual with the full-sample system, so the result interpolates exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from ..domain import DEFAULT_GRID_CAP, covering_grid, partition
from ..features import FeatureDraw, LipschitzBundle, real_combination
from ..kernels import AcceptableKernelReport, KernelModel
from .interpolation import (CertificateFunction, InterpolationSystem, empirical_matrix,
                            feature_coefficients, gamma_matrix, limit_matrix, psi,
                            solve_symmetric)


@dataclass
class GolfingConfig:
    L: int
    L_prime: int
    block_sizes: list
    c: list
    t: list
    b: list
    delta_golf: float
    C0: float
    C2: float
    spacing_near: float
    spacing_far: float
    eps_eta: float
    lambda_eta: float
    eps_near: float
    rho: float = 0.05

    def param(self, name: str, k: int) -> float:
        """Parameter for the k-th accepted block (k = 1, 2, ...)."""
        seq = getattr(self, name)
        return seq[min(k, len(seq)) - 1]

    def to_json(self) -> dict:
        return asdict(self)


def golfing_config(report: AcceptableKernelReport, lipschitz: LipschitzBundle, s: int, m: int,
                   rho: float = 0.05, block_sizes=None, **overrides) -> GolfingConfig:
    """Default golfing parameters from the kernel report and feature bounds.

    ``overrides`` may replace any :class:`GolfingConfig` field, e.g. ``c``.
    """
    d = report.d
    eps, lam, B0, B2 = report.eps_eta, report.lambda_eta, report.B0, report.B2
    L0, L1, L2, L3, L01 = lipschitz.L0, lipschitz.L1, lipschitz.L2, lipschitz.L3, lipschitz.L01
    C0 = 2 * math.sqrt(d) * B0
    C2 = 2 * math.sqrt(d) * B2
    sd1 = s * (d + 1)
    L = math.ceil(max(2.0,
                      math.log(32 * s * L0 * L01 * math.sqrt(d + 1) / (eps * C0 ** 2)),
                      math.log(32 * s * L2 * L01 * math.sqrt(d + 1) / (lam * C0 ** 2))))
    Lp = math.ceil(3 * L + 0.5 * math.log(4 / rho))
    dg = min(eps / 32, B0 * lam / (32 * B2), math.exp(-1))
    log2 = math.log2(sd1)
    ln = math.log(sd1)
    c12 = dg / (C0 * math.sqrt(log2))
    c = [c12, c12, dg]
    t = [1 - eps / 2, 4 * C0, 4 * C0 * log2]
    b = [lam / 2, 4 * C2 * math.sqrt(ln), 4 * C2 * ln]
    if block_sizes is None:
        base = m // (Lp + 2)
        if base < 1:
            raise ValueError(f"m = {m} is too small for {Lp} golfing blocks")
        block_sizes = [2 * base, 2 * base] + [base] * (Lp - 2)
    block_sizes = [int(v) for v in block_sizes]
    if sum(block_sizes) > m or min(block_sizes) < 1:
        raise ValueError("block sizes must be positive and sum to at most m")
    cfg = GolfingConfig(L=L, L_prime=len(block_sizes), block_sizes=block_sizes, c=c, t=t, b=b,
                        delta_golf=dg, C0=C0, C2=C2,
                        spacing_near=lam / (16 * L3 * L01 * math.sqrt(s * d)),
                        spacing_far=eps / (16 * L1 * L01 * math.sqrt(s * d)),
                        eps_eta=eps, lambda_eta=lam, eps_near=report.eps_near, rho=rho)
    for k, v in overrides.items():
        if not hasattr(cfg, k):
            raise ValueError(f"unknown golfing parameter {k!r}")
        setattr(cfg, k, v)
    if "block_sizes" in overrides:
        cfg.L_prime = len(cfg.block_sizes)
    return cfg


@dataclass
class BlockRecord:
    index: int
    size: int
    k: int  # rank the block would take if accepted
    event_I: bool
    event_II: bool
    event_III: bool
    accepted: bool
    q_before_inf: float
    q_after_inf: float
    event_I_ratio: float
    event_II_value: float
    event_III_value: float


@dataclass
class GolfingTrace:
    blocks: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    q_history: list = field(default_factory=list)
    p_history: list = field(default_factory=list)  # feature coefficients of eta^j
    success: bool = False
    L: int = 0
    error_vector: list = field(default_factory=list)
    error_norm: float = float("nan")
    correction_cond: float = float("nan")
    trace_residual: float = float("nan")
    post_far_max: float = float("nan")
    post_near_max_eig: float = float("nan")
    post_conditions: bool = False

    def to_json(self) -> dict:
        return {
            "success": self.success, "L": self.L, "accepted": list(self.accepted),
            "blocks": [asdict(b) for b in self.blocks],
            "q_inf_history": [float(np.max(np.abs(q))) for q in self.q_history],
            "error_vector": [float(v) for v in self.error_vector],
            "error_norm": self.error_norm, "correction_cond": self.correction_cond,
            "trace_residual": self.trace_residual,
            "post_far_max": self.post_far_max, "post_near_max_eig": self.post_near_max_eig,
            "post_conditions": self.post_conditions,
        }


def _block_function_values(G: np.ndarray, draw: FeatureDraw, coef: np.ndarray,
                           pts: np.ndarray, order: int) -> np.ndarray:
    """``coef^T f_i(x)`` (order 0) or its Hessian (order 2) for the block rows in G."""
    return real_combination(draw, (G @ coef) / draw.m, pts, order)


def golfing_certificate(draw: FeatureDraw, system: InterpolationSystem, config: GolfingConfig,
                        kernel: KernelModel, rng: np.random.Generator | None = None,
                        cap: int = DEFAULT_GRID_CAP) -> tuple[CertificateFunction, GolfingTrace]:
    """Run the golfing scheme and the exact correction step.

    ``rng`` permutes the feature indices before blocking; pass ``None`` to keep
    the draw order.  The corrected certificate is returned even when fewer than
    ``L`` blocks were accepted; ``trace.success`` reports that case.
    """
    m = draw.m
    sizes = list(config.block_sizes)
    if sum(sizes) > m:
        raise ValueError("block sizes exceed the number of features")
    order = rng.permutation(m) if rng is not None else np.arange(m)
    G_all = gamma_matrix(system, draw)
    Y = limit_matrix(system, kernel)
    Yinv = np.linalg.inv(Y)
    rhs = system.rhs
    part = partition(system.positions, config.eps_near, system.domain)
    far_pts = covering_grid(part, "far", config.spacing_far, cap=cap).points
    near_pts = [covering_grid(part, j, config.spacing_near, cap=cap).points
                for j in range(system.s)]
    near_all = np.vstack(near_pts) if near_pts else np.zeros((0, system.d))

    trace = GolfingTrace(L=config.L)
    q = rhs.copy()
    trace.q_history.append(q.copy())
    p_app = np.zeros(m, dtype=complex)
    trace.p_history.append(p_app.copy())
    start = 0
    for i, mi in enumerate(sizes, start=1):
        idx = order[start:start + mi]
        start += mi
        k = len(trace.accepted) + 1
        Gi = G_all[idx]
        sub = draw.subset(idx)
        Yi = np.real(Gi.T @ np.conj(Gi)) / mi
        qbar = Yinv @ q
        qn = float(np.max(np.abs(q)))
        q_new = q - Yi @ qbar
        ratio = float(np.max(np.abs(q_new))) / qn
        ev1 = ratio <= config.param("c", k)
        # block-average functions use 1/m_i; sub.m == m_i
        vals = _block_function_values(Gi, sub, qbar, far_pts, 0) if len(far_pts) else np.zeros(0)
        v2 = float(np.max(np.abs(vals))) / qn if vals.size else 0.0
        ev2 = v2 <= config.param("t", k)
        if k == 1:
            worst = -math.inf
            for j, pts in enumerate(near_pts):
                H = _block_function_values(Gi, sub, qbar, pts, 2)
                worst = max(worst, float(np.max(np.linalg.eigvalsh(system.signs[j] * H)[:, -1])))
            v3 = worst
            ev3 = v3 <= -config.param("b", 1)
        else:
            H = _block_function_values(Gi, sub, qbar, near_all, 2) if len(near_all) else \
                np.zeros((0, system.d, system.d))
            v3 = float(np.max(np.linalg.norm(H, ord=2, axis=(-2, -1)))) / qn if len(H) else 0.0
            ev3 = v3 <= config.param("b", k)
        ok = bool(ev1 and ev2 and ev3)
        rec = BlockRecord(i, mi, k, bool(ev1), bool(ev2), bool(ev3), ok, qn,
                          float(np.max(np.abs(q_new))) if ok else qn, ratio, v2, v3)
        trace.blocks.append(rec)
        if ok:
            trace.accepted.append(i)
            p_app[idx] += feature_coefficients(system, Gi, qbar, weight=m / mi)
            q = q_new
            trace.q_history.append(q.copy())
            trace.p_history.append(p_app.copy())
            if len(trace.accepted) >= config.L:
                break
    trace.success = len(trace.accepted) >= config.L

    eta_app = CertificateFunction("features", system.domain, draw=draw, p=p_app, system=system)
    trace.trace_residual = float(np.max(np.abs(rhs - system.D * psi(eta_app, system.positions) - q)))
    # Step II: remove e = D Psi eta_app - rhs with the full-sample system
    e = system.D * psi(eta_app, system.positions) - rhs
    Yh = empirical_matrix(system, draw, G_all)
    ce, cond = solve_symmetric(Yh, e)
    p = p_app - feature_coefficients(system, G_all, ce)
    trace.error_vector = list(e)
    trace.error_norm = float(np.linalg.norm(e))
    trace.correction_cond = cond
    cert = CertificateFunction("features", system.domain, draw=draw, p=p, system=system,
                               info={"golfing_success": trace.success})
    far_vals = np.abs(cert.value(far_pts)) if len(far_pts) else np.zeros(0)
    trace.post_far_max = float(far_vals.max()) if far_vals.size else 0.0
    worst = -math.inf
    for j, pts in enumerate(near_pts):
        H = cert.hess(pts)
        worst = max(worst, float(np.max(np.linalg.eigvalsh(system.signs[j] * H)[:, -1])))
    trace.post_near_max_eig = worst
    trace.post_conditions = bool(trace.post_far_max <= 1 - config.eps_eta / 4
                                 and worst <= -config.lambda_eta / 4)
    return cert, trace


def trace_soundness(trace: GolfingTrace, draw: FeatureDraw, system: InterpolationSystem) -> float:
    """Max over stored iterates of ``|q_j - (rhs - D Psi(eta^j))|``."""
    err = 0.0
    for q, p in zip(trace.q_history, trace.p_history):
        eta = CertificateFunction("features", system.domain, draw=draw, p=p)
        err = max(err, float(np.max(np.abs(system.rhs - system.D * psi(eta, system.positions) - q))))
    return err
