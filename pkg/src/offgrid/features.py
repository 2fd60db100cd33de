"""Random feature families, frequency sampling and the measurement operator.

Every family has the form ``phi_w(x) = a(w) exp(i c w.x)`` with ``c = 2 pi``
for integer Fourier frequencies on the torus and ``c = 1`` otherwise, so all
derivatives are closed form::

    grad phi_w(x) = i c w phi_w(x),   hess phi_w(x) = -c^2 w w^T phi_w(x)

Conventions: ``H = C^m`` carries ``<u, v> = (1/m) Re sum conj(u_k) v_k`` and the
adjoint is ``(Phi* p)(x) = (1/m) sum_k Re(conj(p_k) phi_k(x))``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .domain import DiscreteMeasure, Domain, as_points
from .kernels import KernelModel, fejer_weights

FAMILIES = ("fejer_fourier", "weighted_gaussian_fourier", "gmm_characteristic")

# keep (n_points * m * d * d) complex blocks around this many entries
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class LipschitzBundle:
    """Uniform bounds ``sup |grad^r phi_w(x)| <= L_r`` and ``L01 = sqrt(L0^2 + L1^2 / v)``."""

    L0: float
    L1: float
    L2: float
    L3: float
    v: float

    @property
    def L01(self) -> float:
        return math.sqrt(self.L0 ** 2 + self.L1 ** 2 / self.v)

    def L(self, r: int) -> float:
        return (self.L0, self.L1, self.L2, self.L3)[r]

    def to_json(self) -> dict:
        return {"L0": self.L0, "L1": self.L1, "L2": self.L2, "L3": self.L3,
                "v": self.v, "L01": self.L01}


def chi_moment(l: int, d: int, sigma: float) -> float:
    """``E |w|^l`` for ``w ~ N(0, sigma^-2 I_d)``."""
    return float(np.exp(l / 2 * math.log(2.0) + gammaln(d / 2 + l / 2) - gammaln(d / 2))
                 / sigma ** l)


@dataclass(frozen=True)
class FeatureMap:
    """A random feature family on a domain.

    Parameters
    ----------
    family : str
        One of ``fejer_fourier`` (param ``f_c``), ``weighted_gaussian_fourier``
        (param ``sigma``) or ``gmm_characteristic`` (param ``sigma_C``).
    domain : Domain
    """

    family: str
    domain: Domain
    f_c: int | None = None
    sigma: float | None = None
    sigma_C: float | None = None

    def __post_init__(self):
        if self.family == "fejer_fourier":
            if self.domain.kind != "torus":
                raise ValueError("Fourier features with integer frequencies need a torus domain")
            if self.f_c is None or int(self.f_c) != self.f_c or self.f_c < 2 or self.f_c % 2:
                raise ValueError("f_c must be an even integer >= 2")
            object.__setattr__(self, "f_c", int(self.f_c))
        elif self.family == "weighted_gaussian_fourier":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("sigma must be positive")
        elif self.family == "gmm_characteristic":
            if self.sigma_C is None or not self.sigma_C > 0:
                raise ValueError("sigma_C must be positive")
        else:
            raise ValueError(f"unknown feature family {self.family!r}")

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def scale(self) -> float:
        return 2.0 * math.pi if self.family == "fejer_fourier" else 1.0

    @property
    def params(self) -> dict:
        if self.family == "fejer_fourier":
            return {"f_c": self.f_c}
        if self.family == "weighted_gaussian_fourier":
            return {"sigma": self.sigma}
        return {"sigma_C": self.sigma_C}

    @cached_property
    def gammas(self) -> np.ndarray:
        """``gamma_{2l}`` for l = 0..3 (weighted Gaussian family)."""
        return np.array([chi_moment(2 * l, self.d, self.sigma) for l in range(4)])

    @property
    def M_C(self) -> float:
        return (1.0 + 2.0 * self.sigma_C ** 2) ** (self.d / 2)

    def weight_f(self, omegas) -> np.ndarray:
        """``f(w) = (1/2) sqrt(sum_l |w|^{2l} / gamma_{2l})``."""
        r2 = np.sum(np.asarray(omegas, dtype=float) ** 2, axis=-1)
        g = self.gammas
        return 0.5 * np.sqrt(sum(r2 ** l / g[l] for l in range(4)))

    def amplitude(self, omegas) -> np.ndarray:
        omegas = np.asarray(omegas, dtype=float)
        if self.family == "fejer_fourier":
            return np.ones(omegas.shape[0])
        if self.family == "weighted_gaussian_fourier":
            return 1.0 / self.weight_f(omegas)
        return self.M_C * np.exp(-0.5 * np.sum(omegas ** 2, axis=-1))

    def limit_kernel(self, domain: Domain | None = None) -> KernelModel:
        """The kernel ``E_w Re[conj(phi_w(x)) phi_w(x')]``."""
        dom = domain or self.domain
        if self.family == "fejer_fourier":
            return KernelModel("fejer", dom, f_c=self.f_c)
        if self.family == "weighted_gaussian_fourier":
            return KernelModel("gaussian", dom, sigma=self.sigma)
        s2 = 2.0 + self.sigma_C ** -2
        amp = self.M_C ** 2 * (1.0 + 2.0 * self.sigma_C ** 2) ** (-self.d / 2)
        return KernelModel("gaussian", dom, sigma=math.sqrt(s2), amplitude=amp)

    @cached_property
    def lipschitz(self) -> LipschitzBundle:
        d = self.d
        if self.family == "fejer_fourier":
            c = 2.0 * math.pi * self.f_c * math.sqrt(d)
            return LipschitzBundle(1.0, c, c ** 2, c ** 3, self.f_c ** 2 * math.pi ** 2 / 3)
        if self.family == "weighted_gaussian_fourier":
            L = 2.0 * np.sqrt(self.gammas)
            return LipschitzBundle(*map(float, L), 1.0 / self.sigma ** 2)
        M = self.M_C
        L = [M, M * math.exp(-0.5), 2 * M * math.exp(-1.0), M * 3 ** 1.5 * math.exp(-1.5)]
        kern = self.limit_kernel()
        return LipschitzBundle(*L, kern.amplitude / kern.sigma ** 2)

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        d = self.d
        if self.family == "fejer_fourier":
            freqs, g = fejer_weights(self.f_c)
            return rng.choice(freqs, size=(m, d), p=g).astype(float)
        if self.family == "weighted_gaussian_fourier":
            pool = rng.normal(0.0, 1.0 / self.sigma, size=(50 * m, d))
            w = self.weight_f(pool) ** 2
            idx = rng.choice(pool.shape[0], size=m, replace=True, p=w / w.sum())
            return pool[idx]
        return rng.normal(0.0, self.sigma_C, size=(m, d))

    def to_json(self) -> dict:
        return {"family": self.family, "params": self.params, "domain": self.domain.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureMap":
        return make_feature_map(obj["family"], obj.get("params", {}), Domain.from_json(obj["domain"]))


def make_feature_map(family: str, params: dict, domain: Domain) -> FeatureMap:
    params = dict(params)
    if family == "fejer_fourier":
        return FeatureMap(family, domain, f_c=params["f_c"])
    if family == "weighted_gaussian_fourier":
        return FeatureMap(family, domain, sigma=float(params["sigma"]))
    if family == "gmm_characteristic":
        sc = params.get("sigma_C")
        sc = 1.0 / math.sqrt(domain.d) if sc is None else float(sc)
        return FeatureMap(family, domain, sigma_C=sc)
    raise ValueError(f"unknown feature family {family!r}")


@dataclass(frozen=True)
class FeatureDraw:
    """``m`` frequencies drawn iid from the family's law with a fixed seed."""

    map: FeatureMap
    omegas: np.ndarray
    seed: int
    amp: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.omegas.shape[0]

    @property
    def d(self) -> int:
        return self.map.d

    def subset(self, idx) -> "FeatureDraw":
        idx = np.asarray(idx)
        om = self.omegas[idx]
        a = self.amp[idx]
        return FeatureDraw(self.map, om, self.seed, a)

    # -- feature evaluation

    def _chunk(self) -> int:
        per = self.m * max(1, self.d) ** 2
        return max(1, _CHUNK_ENTRIES // per)

    def features(self, x, order: int = 0) -> np.ndarray:
        """``phi_k(x)`` and derivatives, shape ``(n, m)``, ``(n, m, d)`` or ``(n, m, d, d)``."""
        x = as_points(x, self.d)
        c = self.map.scale
        ph = np.exp(1j * c * (x @ self.omegas.T)) * self.amp
        if order == 0:
            return ph
        if order == 1:
            return 1j * c * ph[:, :, None] * self.omegas[None]
        if order == 2:
            ww = self.omegas[:, :, None] * self.omegas[:, None, :]
            return -(c ** 2) * ph[:, :, None, None] * ww[None]
        raise ValueError("order must be 0, 1 or 2")

    def to_json(self) -> dict:
        out = self.map.to_json()
        out.update({"seed": int(self.seed), "m": self.m})
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureDraw":
        return draw_features(FeatureMap.from_json(obj), int(obj["m"]), int(obj["seed"]))


def draw_features(fmap: FeatureMap, m: int, seed: int) -> FeatureDraw:
    """Draw ``m`` frequencies; the same ``(fmap, m, seed)`` always gives the same draw."""
    if int(m) != m or m <= 0:
        raise ValueError("m must be a positive integer")
    rng = np.random.default_rng(seed)
    om = np.ascontiguousarray(fmap.sample(int(m), rng), dtype=float)
    om.setflags(write=False)
    amp = fmap.amplitude(om)
    amp.setflags(write=False)
    return FeatureDraw(fmap, om, int(seed), amp)


def eval_feature(fmap: FeatureMap, omega, x, order: int = 0):
    """Single feature ``phi_omega`` (or its gradient/Hessian) at one or more points."""
    om = np.atleast_2d(np.asarray(omega, dtype=float)).reshape(1, fmap.d)
    dr = FeatureDraw(fmap, om, -1, fmap.amplitude(om))
    xa = np.asarray(x, dtype=float)
    single = xa.ndim == 0 or (xa.ndim == 1 and fmap.d > 1 and xa.size == fmap.d)
    out = dr.features(x, order)[:, 0]
    return out[0] if single else out


@dataclass
class MeasurementSet:
    y: np.ndarray
    draw: FeatureDraw
    noise_level: float = 0.0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex).reshape(-1)
        if self.y.size != self.draw.m:
            raise ValueError("length of y must equal m")

    def to_csv(self) -> str:
        return measurements_to_csv(self.y)


def measurements_to_csv(y) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "re", "im"])
    for k, v in enumerate(np.asarray(y, dtype=complex)):
        w.writerow([k, repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()


def measurements_from_csv(text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    y = np.zeros(len(rows), dtype=complex)
    for r in rows:
        y[int(r["k"])] = complex(float(r["re"]), float(r["im"]))
    return y


def hnorm(p) -> float:
    """Norm of ``C^m`` with ``<u, v> = (1/m) Re sum conj(u) v``."""
    p = np.asarray(p)
    return float(np.sqrt(np.mean(np.abs(p) ** 2))) if p.size else 0.0


def forward(draw: FeatureDraw, mu: DiscreteMeasure) -> np.ndarray:
    """``y_k = sum_i a_i phi_k(x_i)``."""
    if mu.s == 0:
        return np.zeros(draw.m, dtype=complex)
    return mu.amplitudes @ draw.features(mu.positions)


def real_combination(draw: FeatureDraw, w, x, order: int = 0) -> np.ndarray:
    """Derivatives of ``Re sum_k w_k phi_k(x)`` at points ``x``.

    Works with ``cos`` and ``sin`` of the phases and real matrix products, which
    is about twice as fast as forming the complex features.  Returns shape
    ``(n,)``, ``(n, d)`` or ``(n, d, d)``.
    """
    w = np.asarray(w, dtype=complex).reshape(-1)
    if w.size != draw.m:
        raise ValueError(f"coefficient vector has length {w.size}, expected m = {draw.m}")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    x = as_points(x, draw.d)
    n, d = x.shape[0], draw.d
    c = draw.map.scale
    om = draw.omegas
    wa = w * draw.amp
    # Re(w e^{i t}) = u cos t + v sin t
    u, v = wa.real, -wa.imag
    if order == 0:
        U, V = u[:, None], v[:, None]
    elif order == 1:
        U, V = c * v[:, None] * om, -c * u[:, None] * om
    else:
        ww = (om[:, :, None] * om[:, None, :]).reshape(draw.m, d * d)
        U, V = -c * c * u[:, None] * ww, -c * c * v[:, None] * ww
    out = np.empty((n, U.shape[1]))
    step = max(1, _CHUNK_ENTRIES // max(draw.m, 1))
    for s0 in range(0, n, step):
        th = c * (x[s0:s0 + step] @ om.T)
        out[s0:s0 + step] = np.cos(th) @ U + np.sin(th) @ V
    if order == 0:
        return out[:, 0]
    return out.reshape((n,) + (d,) * order)


def adjoint_eval(draw: FeatureDraw, p, x, order: int = 0) -> np.ndarray:
    """Derivatives of ``(1/m) sum_k Re(conj(p_k) phi_k(x))``.

    Returns shape ``(n,)``, ``(n, d)`` or ``(n, d, d)``.
    """
    p = np.asarray(p, dtype=complex).reshape(-1)
    if p.size != draw.m:
        raise ValueError(f"p has length {p.size}, expected m = {draw.m}")
    return real_combination(draw, np.conj(p) / draw.m, x, order)


def empirical_kernel(draw: FeatureDraw, x, xp, order: str = "K") -> np.ndarray:
    """``C(x, x') = (1/m) sum_k Re[conj(phi_k(x)) phi_k(x')]`` and its derivatives.

    ``order`` is one of ``"K"``, ``"d1"`` (gradient in x), ``"d1d2"``
    (matrix ``d1_i d2_j``), ``"hess2"`` (Hessian in x') and ``"d1_hess2"``
    (tensor ``d1_i d2_j d2_l``).  Derivatives come from the features
    themselves.  ``x`` and ``x'`` are paired row by row.
    """
    x = as_points(x, draw.d)
    xp = as_points(xp, draw.d)
    m = draw.m
    if order == "K":
        A, B = draw.features(x, 0), draw.features(xp, 0)
        return np.real(np.einsum("nk,nk->n", np.conj(A), B)) / m
    if order == "d1":
        A, B = draw.features(x, 1), draw.features(xp, 0)
        return np.real(np.einsum("nki,nk->ni", np.conj(A), B)) / m
    if order == "d1d2":
        A, B = draw.features(x, 1), draw.features(xp, 1)
        return np.real(np.einsum("nki,nkj->nij", np.conj(A), B)) / m
    if order == "hess2":
        A, B = draw.features(x, 0), draw.features(xp, 2)
        return np.real(np.einsum("nk,nkij->nij", np.conj(A), B)) / m
    if order == "d1_hess2":
        A, B = draw.features(x, 1), draw.features(xp, 2)
        return np.real(np.einsum("nki,nkjl->nijl", np.conj(A), B)) / m
    raise ValueError(f"unknown order {order!r}")
