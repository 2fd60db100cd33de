"""Interpolation systems and certificate functions.

For spikes ``x_1..x_s`` with signs ``sgn`` the unknowns are ordered as
``(values at x_1..x_s, grad at x_1, ..., grad at x_s)``, size ``s(d+1)``.
``D`` is diagonal with 1 on the value entries and ``1/sqrt(d1_i d2_i K)`` on the
gradient entries.  The empirical system uses

    gamma_k = D (conj phi_k(x_1..s), conj grad phi_k(x_1..s))
    Y_hat   = (1/m) sum_k Re[gamma_k gamma_k^H]
    f_hat(x) = (1/m) sum_k Re[gamma_k phi_k(x)]

and the limit system replaces the averages by kernel evaluations.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ..domain import DiscreteMeasure, Domain, as_points
from ..features import FeatureDraw, adjoint_eval, hnorm
from ..kernels import KernelModel

MAX_CONDITION = 1e12


class IllConditionedError(np.linalg.LinAlgError):
    """The interpolation matrix is singular or too ill-conditioned to solve."""

    def __init__(self, cond: float):
        self.cond = float(cond)
        super().__init__(
            f"interpolation matrix ill-conditioned (condition number {self.cond:.3g}); "
            "increase m or separate the spikes")


@dataclass(frozen=True)
class InterpolationSystem:
    positions: np.ndarray
    signs: np.ndarray
    D: np.ndarray
    domain: Domain

    @property
    def s(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def size(self) -> int:
        return self.s * (self.d + 1)

    @property
    def rhs(self) -> np.ndarray:
        """``(sign(a); 0_{sd})``."""
        return np.concatenate([self.signs, np.zeros(self.s * self.d)])

    def with_D(self, D) -> "InterpolationSystem":
        return InterpolationSystem(self.positions, self.signs, np.asarray(D, dtype=float),
                                   self.domain)


def make_system(positions, signs, domain: Domain, v_diag) -> InterpolationSystem:
    """System for spikes at ``positions`` with gradient scaling ``1/sqrt(v_diag)``."""
    x = as_points(positions, domain.d)
    sg = np.sign(np.asarray(signs, dtype=float).reshape(-1))
    if sg.size != x.shape[0] or np.any(sg == 0):
        raise ValueError("one nonzero sign per spike is required")
    v = np.broadcast_to(np.asarray(v_diag, dtype=float), (domain.d,))
    D = np.concatenate([np.ones(x.shape[0]), np.tile(1.0 / np.sqrt(v), x.shape[0])])
    return InterpolationSystem(x, sg, D, domain)


def system_from_measure(mu: DiscreteMeasure, kernel: KernelModel) -> InterpolationSystem:
    return make_system(mu.positions, mu.signs(), mu.domain, kernel.v_diag)


# ---------------------------------------------------------------- matrices

def gamma_matrix(system: InterpolationSystem, draw: FeatureDraw) -> np.ndarray:
    """Rows ``gamma_k``, shape ``(m, s(d+1))``."""
    s, d = system.s, system.d
    F0 = draw.features(system.positions, 0)            # (s, m)
    F1 = draw.features(system.positions, 1)            # (s, m, d)
    G = np.concatenate([F0.T, F1.transpose(1, 0, 2).reshape(draw.m, s * d)], axis=1)
    return np.conj(G) * system.D[None, :]


def empirical_matrix(system: InterpolationSystem, draw: FeatureDraw,
                     gamma: np.ndarray | None = None) -> np.ndarray:
    G = gamma_matrix(system, draw) if gamma is None else gamma
    Y = np.real(G.T @ np.conj(G)) / G.shape[0]
    return 0.5 * (Y + Y.T)


def limit_matrix(system: InterpolationSystem, kernel: KernelModel) -> np.ndarray:
    s, d = system.s, system.d
    x = system.positions
    t = kernel.domain.displacement(x[:, None, :], x[None, :, :]).reshape(-1, d)
    k = kernel.k(t).reshape(s, s)
    g = kernel.grad(t).reshape(s, s, d)
    H = kernel.hess(t).reshape(s, s, d, d)
    Y = np.empty((s * (d + 1), s * (d + 1)))
    Y[:s, :s] = k
    # value_i / grad_(j,b): d2_b K(x_i, x_j) = -g_b(x_i - x_j)
    Y[:s, s:] = -g.reshape(s, s * d)
    Y[s:, :s] = g.transpose(0, 2, 1).reshape(s * d, s)
    Y[s:, s:] = -H.transpose(0, 2, 1, 3).reshape(s * d, s * d)
    Y = system.D[:, None] * Y * system.D[None, :]
    return 0.5 * (Y + Y.T)


def limit_feature_vector(system: InterpolationSystem, kernel: KernelModel, x,
                         order: int = 0) -> np.ndarray:
    """Limit ``f(x)`` and its x-derivatives, shape ``(n, s(d+1)) + (d,)*order``."""
    s, d = system.s, system.d
    x = as_points(x, d)
    n = x.shape[0]
    t = kernel.domain.displacement(system.positions[None, :, :], x[:, None, :]).reshape(-1, d)
    if order == 0:
        val = kernel.k(t).reshape(n, s)
        grd = kernel.grad(t).reshape(n, s * d)
    elif order == 1:
        val = -kernel.grad(t).reshape(n, s, d)
        grd = -kernel.hess(t).reshape(n, s * d, d)
    elif order == 2:
        val = kernel.hess(t).reshape(n, s, d, d)
        grd = kernel.third(t).reshape(n, s * d, d, d)
    else:
        raise ValueError("order must be 0, 1 or 2")
    F = np.concatenate([val, grd], axis=1)
    return F * system.D.reshape((1, -1) + (1,) * order)


def solve_symmetric(A: np.ndarray, b: np.ndarray, max_cond: float = MAX_CONDITION,
                    refine: int = 2) -> tuple[np.ndarray, float]:
    """Solve ``A x = b`` (A symmetric) with Bunch-Kaufman and iterative refinement."""
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedError(cond)
    x = sla.solve(A, b, assume_a="sym")
    for _ in range(refine):
        r = b - A @ x
        x = x + sla.solve(A, r, assume_a="sym")
    return x, cond


# ---------------------------------------------------------------- certificate functions

@dataclass
class CertificateFunction:
    """A function ``eta`` on the domain with value, gradient and Hessian oracles.

    Feature representation: ``eta = (1/m) sum_k Re(conj(p_k) phi_k)`` with ``p``
    stored.  Kernel representation: ``eta = c^T f(.)`` for the limit feature
    vector of an interpolation system.
    """

    kind: str  # "features" or "kernel"
    domain: Domain
    draw: FeatureDraw | None = None
    p: np.ndarray | None = None
    kernel: KernelModel | None = None
    system: InterpolationSystem | None = None
    coeffs: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def p_norm(self) -> float | None:
        return hnorm(self.p) if self.kind == "features" else None

    def _eval(self, x, order: int) -> np.ndarray:
        x = as_points(x, self.domain.d)
        if self.kind == "features":
            return adjoint_eval(self.draw, self.p, x, order)
        out = []
        step = 20000
        for s0 in range(0, x.shape[0], step):
            F = limit_feature_vector(self.system, self.kernel, x[s0:s0 + step], order)
            out.append(np.tensordot(F, self.coeffs, axes=([1], [0])))
        return np.concatenate(out, axis=0)

    def value(self, x) -> np.ndarray:
        return self._eval(x, 0)

    def grad(self, x) -> np.ndarray:
        return self._eval(x, 1)

    def hess(self, x) -> np.ndarray:
        return self._eval(x, 2)

    __call__ = value

    def scaled(self, c: float) -> "CertificateFunction":
        if self.kind == "features":
            return CertificateFunction("features", self.domain, self.draw, c * self.p,
                                       info=dict(self.info))
        return CertificateFunction("kernel", self.domain, kernel=self.kernel,
                                   system=self.system, coeffs=c * self.coeffs,
                                   info=dict(self.info))


def psi(cert: CertificateFunction, positions) -> np.ndarray:
    """``(eta(x_i)_i, grad eta(x_1), ..., grad eta(x_s))`` stacked."""
    x = as_points(positions, cert.domain.d)
    return np.concatenate([cert.value(x), cert.grad(x).reshape(-1)])


def feature_coefficients(system: InterpolationSystem, gamma: np.ndarray, c: np.ndarray,
                         weight: float = 1.0) -> np.ndarray:
    """``p`` such that ``Phi* p = weight * c^T f_hat`` for the draw behind ``gamma``."""
    return weight * np.conj(gamma @ c)


def build_pre_certificate(system: InterpolationSystem, source) -> CertificateFunction:
    """Vanishing-derivative pre-certificate ``eta_V = rhs^T Y^-1 f(.)``.

    ``source`` is a :class:`FeatureDraw` (empirical) or a :class:`KernelModel`
    (limit).  The empirical result carries the coefficient vector ``p``.
    """
    if isinstance(source, FeatureDraw):
        G = gamma_matrix(system, source)
        Y = empirical_matrix(system, source, G)
        c, cond = solve_symmetric(Y, system.rhs)
        p = feature_coefficients(system, G, c)
        return CertificateFunction("features", system.domain, draw=source, p=p,
                                   system=system, coeffs=c, info={"cond": cond})
    if isinstance(source, KernelModel):
        Y = limit_matrix(system, source)
        c, cond = solve_symmetric(Y, system.rhs)
        return CertificateFunction("kernel", system.domain, kernel=source, system=system,
                                   coeffs=c, info={"cond": cond})
    raise TypeError("source must be a FeatureDraw or a KernelModel")


def interpolation_errors(cert: CertificateFunction, system: InterpolationSystem) -> tuple[float, float]:
    """``(max |eta(x_i) - sign_i|, max ||grad eta(x_i)||)``."""
    v = cert.value(system.positions)
    g = cert.grad(system.positions)
    return (float(np.max(np.abs(v - system.signs))),
            float(np.max(np.linalg.norm(g, axis=1))))


def certificate_samples_csv(cert: CertificateFunction, points, curvature_signs=None) -> str:
    """CSV rows ``x_1..x_d, eta`` plus ``hess_eig_max`` when signs are given.

    With ``curvature_signs`` (one sign per point) the extra column is the largest
    eigenvalue of ``sign * hess eta``.
    """
    x = as_points(points, cert.domain.d)
    eta = cert.value(x)
    cols = [f"x{i + 1}" for i in range(x.shape[1])] + ["eta"]
    extra = None
    if curvature_signs is not None:
        sg = np.broadcast_to(np.asarray(curvature_signs, dtype=float), (x.shape[0],))
        H = cert.hess(x) * sg[:, None, None]
        extra = np.linalg.eigvalsh(H)[:, -1]
        cols.append("hess_eig_max")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for n in range(x.shape[0]):
        row = [repr(float(v)) for v in x[n]] + [repr(float(eta[n]))]
        if extra is not None:
            row.append(repr(float(extra[n])))
        w.writerow(row)
    return buf.getvalue()
