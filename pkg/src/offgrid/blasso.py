"""Sliding Frank-Wolfe for the Beurling-Lasso over signed discrete measures.

The objective is

    F(mu) = 1/(2m) sum_k |(Phi mu)_k - y_k|^2 + lam |mu|(X)

i.e. ``1/2 ||Phi mu - y||_H^2 + lam |mu|`` in the norm of ``H = C^m``.  The
residual certificate ``eta = Phi* (y - Phi mu) / lam`` is the gradient
direction: a new atom is placed where ``|eta|`` peaks, and ``max |eta| <= 1``
certifies optimality.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .certificates.interpolation import CertificateFunction
from .certificates.nondegeneracy import heuristic_lattice
from .domain import DiscreteMeasure, Domain, RegionPartition, as_points, tv_norm
from .features import FeatureDraw, MeasurementSet, forward, hnorm
from .kernels import fejer_constants, gaussian_constants

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The objective became non-finite."""


@dataclass
class BlassoProblem:
    measurements: MeasurementSet
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def draw(self) -> FeatureDraw:
        return self.measurements.draw

    @property
    def y(self) -> np.ndarray:
        return self.measurements.y

    @property
    def domain(self) -> Domain:
        return self.draw.map.domain


@dataclass
class SolverConfig:
    """Tuning knobs of the solver.

    ``grid`` switches to the grid-constrained mode: atoms may only sit on the
    given points and there is no local ascent or sliding.
    """

    max_spikes: int = 50
    max_iter: int = 100
    grid_per_dim: int = 64
    ascent_iters: int = 200
    amp_tol: float = 1e-10
    amp_max_iter: int = 20000
    joint_iters: int = 200
    tau_gap: float = 1e-5
    prune_tol: float = 1e-9
    merge_distance: float | None = None
    grid: np.ndarray | None = None

    def __post_init__(self):
        for name in ("amp_tol", "tau_gap", "prune_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_spikes < 1 or self.max_iter < 1 or self.grid_per_dim < 2:
            raise ValueError("iteration limits must be positive")


@dataclass
class SolveResult:
    measure: DiscreteMeasure
    objective: float
    certificate_max: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"measure": self.measure.to_json(), "objective": self.objective,
                "certificate_max": self.certificate_max, "iterations": self.iterations,
                "converged": self.converged, "history": list(self.history)}


def objective(problem: BlassoProblem, mu: DiscreteMeasure) -> float:
    r = forward(problem.draw, mu) - problem.y
    return 0.5 * hnorm(r) ** 2 + problem.lam * tv_norm(mu)


def residual_certificate(problem: BlassoProblem, mu: DiscreteMeasure) -> CertificateFunction:
    """``eta = Phi* p`` with ``p = (y - Phi mu) / lam``."""
    p = (problem.y - forward(problem.draw, mu)) / problem.lam
    return CertificateFunction("features", problem.domain, draw=problem.draw, p=p)


# ---------------------------------------------------------------- finite Lasso on fixed atoms

def _stack(Phi: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real least-squares form: ``1/(2m)|Phi a - y|^2 = 1/2 |A a - b|^2``."""
    m = Phi.shape[0]
    A = np.vstack([Phi.real, Phi.imag]) / math.sqrt(m)
    b = np.concatenate([y.real, y.imag]) / math.sqrt(m)
    return A, b


def _lasso_value(A, b, lam, a) -> float:
    r = A @ a - b
    return 0.5 * float(r @ r) + lam * float(np.abs(a).sum())


def _lasso_gap(A, b, lam, a) -> float:
    r = b - A @ a
    c = np.max(np.abs(A.T @ r)) if a.size else 0.0
    theta = r / max(1.0, c / lam)
    dual = 0.5 * float(b @ b) - 0.5 * float((b - theta) @ (b - theta))
    return _lasso_value(A, b, lam, a) - dual


def _polish(A, b, lam, a) -> np.ndarray | None:
    """Solve the KKT system on the support and sign pattern of ``a``; None if inconsistent."""
    S = np.flatnonzero(a)
    if S.size == 0:
        return None
    sg = np.sign(a[S])
    AS = A[:, S]
    try:
        aS = np.linalg.solve(AS.T @ AS, AS.T @ b - lam * sg)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.sign(aS) != sg):
        return None
    out = np.zeros_like(a)
    out[S] = aS
    corr = A.T @ (b - A @ out)
    if np.max(np.abs(corr)) > lam * (1 + 1e-9):
        return None
    return out


def lasso_amplitudes(Phi: np.ndarray, y: np.ndarray, lam: float, a0=None, tol: float = 1e-10,
                     max_iter: int = 20000) -> tuple[np.ndarray, float]:
    """Minimize ``1/(2m)|Phi a - y|^2 + lam |a|_1`` over real ``a``.

    FISTA with step ``1/|A|^2`` until the duality gap is below
    ``tol * max(1, F)``, followed by an exact solve on the detected support.
    Returns ``(a, gap)``.
    """
    A, b = _stack(Phi, y)
    n = A.shape[1]
    if n == 0:
        return np.zeros(0), 0.0
    step = 1.0 / max(np.linalg.norm(A, 2) ** 2, 1e-300)
    a = np.zeros(n) if a0 is None else np.asarray(a0, dtype=float).copy()
    z, t = a.copy(), 1.0
    gap = _lasso_gap(A, b, lam, a)
    for it in range(max_iter):
        g = A.T @ (A @ z - b)
        u = z - step * g
        a_new = np.sign(u) * np.maximum(np.abs(u) - step * lam, 0.0)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = a_new + (t - 1) / t_new * (a_new - a)
        a, t = a_new, t_new
        if it % 20 == 19:
            gap = _lasso_gap(A, b, lam, a)
            if gap <= tol * max(1.0, _lasso_value(A, b, lam, a)):
                break
    pol = _polish(A, b, lam, a)
    if pol is not None and _lasso_value(A, b, lam, pol) <= _lasso_value(A, b, lam, a):
        a = pol
    return a, _lasso_gap(A, b, lam, a)


# ---------------------------------------------------------------- solver

def _default_merge_distance(problem: BlassoProblem, s: int) -> float:
    fmap = problem.draw.map
    kern = fmap.limit_kernel()
    if kern.family == "fejer":
        Delta = fejer_constants(kern.f_c, kern.d, s)[3]
    else:
        Delta = gaussian_constants(kern.sigma, kern.d, s)[3]
    return 1e-3 * Delta


class _State:
    def __init__(self, problem: BlassoProblem, x: np.ndarray, a: np.ndarray):
        self.problem = problem
        self.x = x
        self.a = a
        self.F = self.value()

    def measure(self) -> DiscreteMeasure:
        dom = self.problem.domain
        x = dom.wrap(self.x)
        if dom.kind == "box":
            x = np.clip(x, dom.lower, dom.upper)
        return DiscreteMeasure(x, self.a, dom)

    def value(self) -> float:
        v = objective(self.problem, self.measure())
        if not math.isfinite(v):
            raise SolverError("objective is not finite")
        return v


def _ascend(problem: BlassoProblem, eta: CertificateFunction, x0: np.ndarray, iters: int) -> np.ndarray:
    """Local maximizer of ``|eta|`` started at ``x0``."""
    dom = problem.domain
    sg = float(np.sign(eta.value(x0)[0])) or 1.0

    def fun(z):
        z = z.reshape(1, -1)
        return -sg * float(eta.value(z)[0]), -sg * eta.grad(z)[0]

    bounds = None if dom.kind == "torus" else [(dom.lower, dom.upper)] * dom.d
    res = minimize(fun, x0.reshape(-1), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": iters, "ftol": 1e-15, "gtol": 1e-12})
    x = res.x.reshape(1, -1)
    return x if abs(eta.value(x)[0]) >= abs(eta.value(x0)[0]) else x0.reshape(1, -1)


def _joint(problem: BlassoProblem, st: _State, iters: int) -> _State:
    """Descend on positions and amplitudes with the sign pattern frozen."""
    draw, y, lam = problem.draw, problem.y, problem.lam
    dom = problem.domain
    n, d, m = st.a.size, dom.d, draw.m
    sg = np.sign(st.a)

    def fun(z):
        x = z[:n * d].reshape(n, d)
        a = z[n * d:]
        F0 = draw.features(x, 0)  # (n, m)
        r = a @ F0 - y
        val = 0.5 * float(np.mean(np.abs(r) ** 2)) + lam * float(sg @ a)
        cr = np.conj(r) / m
        ga = np.real(F0 @ cr) + lam * sg
        F1 = draw.features(x, 1)  # (n, m, d)
        gx = a[:, None] * np.real(np.tensordot(F1, cr, axes=([1], [0])))
        return val, np.concatenate([gx.reshape(-1), ga])

    if dom.kind == "torus":
        xb = [(None, None)] * (n * d)
    else:
        xb = [(dom.lower, dom.upper)] * (n * d)
    ab = [(0.0, None) if v > 0 else (None, 0.0) for v in sg]
    z0 = np.concatenate([st.x.reshape(-1), st.a])
    res = minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=xb + ab,
                   options={"maxiter": iters, "ftol": 1e-15, "gtol": 1e-12})
    cand = _State(problem, res.x[:n * d].reshape(n, d), res.x[n * d:])
    return cand


def _prune_merge(problem: BlassoProblem, st: _State, prune_tol: float, merge_dist: float) -> _State:
    keep = np.abs(st.a) > prune_tol
    x, a = st.x[keep], st.a[keep]
    dom = problem.domain
    merged = True
    while merged and a.size > 1:
        merged = False
        D = dom.distance(x[:, None, :], x[None, :, :])
        np.fill_diagonal(D, np.inf)
        i, j = np.unravel_index(np.argmin(D), D.shape)
        if D[i, j] < merge_dist:
            w = np.abs(a[[i, j]])
            w = w / w.sum() if w.sum() > 0 else np.array([0.5, 0.5])
            xi = x[i] + w[1] * dom.displacement(x[j], x[i])
            x = np.vstack([np.delete(x, [i, j], axis=0), xi[None]])
            a = np.append(np.delete(a, [i, j]), a[i] + a[j])
            merged = True
    return _State(problem, x.reshape(-1, dom.d), a)


def _reamp(problem: BlassoProblem, x: np.ndarray, a0, cfg: SolverConfig) -> _State:
    Phi = problem.draw.features(x, 0).T if x.shape[0] else np.zeros((problem.draw.m, 0), complex)
    a, _ = lasso_amplitudes(Phi, problem.y, problem.lam, a0, cfg.amp_tol, cfg.amp_max_iter)
    return _State(problem, x, a)


def _accept(new: _State, old: _State) -> bool:
    return new.F <= old.F + 1e-14 * max(1.0, abs(old.F))


def solve(problem: BlassoProblem, config: SolverConfig | None = None, seed: int = 0) -> SolveResult:
    """Sliding Frank-Wolfe.

    Each outer iteration (a) adds the maximizer of ``|eta_res|`` found by a
    coarse lattice search plus local ascent, (b) re-solves the amplitudes,
    (c) slides positions and amplitudes jointly and (d) prunes and merges.
    Every step is kept only if it does not increase the objective.  ``seed``
    is unused by the deterministic search and kept for interface symmetry.
    """
    cfg = config or SolverConfig()
    dom = problem.domain
    d = dom.d
    grid_mode = cfg.grid is not None
    if grid_mode:
        probe = as_points(cfg.grid, d)
    else:
        probe = heuristic_lattice(dom, cfg.grid_per_dim)
    merge_dist = cfg.merge_distance
    if merge_dist is None and not grid_mode:
        merge_dist = _default_merge_distance(problem, cfg.max_spikes)
    st = _State(problem, np.zeros((0, d)), np.zeros(0))
    history = [st.F]
    cert_max = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        eta = residual_certificate(problem, st.measure())
        vals = np.abs(eta.value(probe))
        k = int(np.argmax(vals))
        if grid_mode:
            x_new = probe[k:k + 1]
        else:
            x_new = _ascend(problem, eta, probe[k], cfg.ascent_iters)
        spike_vals = np.abs(eta.value(st.x)) if st.a.size else np.zeros(0)
        cert_max = float(max(vals.max(), abs(eta.value(x_new)[0]),
                             spike_vals.max() if spike_vals.size else 0.0))
        log.debug("iter %d: F=%.12g  max|eta|=%.8f  atoms=%d", it, st.F, cert_max, st.a.size)
        if cert_max <= 1 + cfg.tau_gap:
            converged = True
            break
        if st.a.size >= cfg.max_spikes:
            break
        x = np.vstack([st.x, x_new])
        cand = _reamp(problem, x, np.append(st.a, 0.0), cfg)
        if not _accept(cand, st):
            break
        st = cand
        if not grid_mode and st.a.size:
            live = _State(problem, st.x[st.a != 0], st.a[st.a != 0])
            cand = _joint(problem, live, cfg.joint_iters) if live.a.size else live
            if _accept(cand, st):
                st = cand
            cand = _prune_merge(problem, st, cfg.prune_tol, merge_dist)
            if cand.a.size != st.a.size:
                cand = _reamp(problem, cand.x, cand.a, cfg)
            if _accept(cand, st):
                st = cand
        else:
            keep = st.a != 0
            cand = _State(problem, st.x[keep], st.a[keep])
            if _accept(cand, st):
                st = cand
        history.append(st.F)
    mu = st.measure()
    return SolveResult(mu, objective(problem, mu), cert_max, it, converged, history)


# ---------------------------------------------------------------- stability

def C_value(lam: float, delta: float, v: float) -> float:
    """``2 delta v + 2 lam v^2 + delta^2 / (2 lam)``."""
    return 2 * delta * v + 2 * lam * v ** 2 + delta ** 2 / (2 * lam)


@dataclass
class StabilityReport:
    C_a: float
    C_b: float
    lam: float
    delta: float
    p_norm: float
    C_val: float
    lhs_far: float
    lhs_near: float
    mass_errors: list
    holds: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def stability_metrics(true_mu: DiscreteMeasure, recovered_mu: DiscreteMeasure,
                      part: RegionPartition, C_a: float, C_b: float, lam: float, delta: float,
                      p_norm: float) -> StabilityReport:
    """Left and right sides of the robustness bound for exactly sparse ``true_mu``."""
    dom = recovered_mu.domain
    lab = part.classify(recovered_mu.positions) if recovered_mu.s else np.zeros(0, int)
    a_hat = recovered_mu.amplitudes
    far_mass = float(np.abs(a_hat[lab < 0]).sum())
    near = 0.0
    mass = []
    for j in range(part.s):
        sel = lab == j
        if np.any(sel):
            t = dom.displacement(recovered_mu.positions[sel], part.centers[j])
            near += float(np.sum(np.sum(t * t, axis=1) * np.abs(a_hat[sel])))
        # true atoms are the partition centers in order
        a_true = true_mu.amplitudes[j] if j < true_mu.s else 0.0
        mass.append(abs(float(a_hat[sel].sum()) - float(a_true)))
    Cv = C_value(lam, delta, p_norm)
    lhs_far, lhs_near = C_b * far_mass, C_a * near
    return StabilityReport(C_a, C_b, lam, delta, p_norm, Cv, lhs_far, lhs_near, mass,
                           bool(lhs_far + lhs_near <= Cv))
