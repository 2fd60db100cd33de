"""Translation-invariant limit kernels and acceptable-kernel constants.

Kernels are written as ``K(x, x') = k(t)`` with ``t = x - x'`` (wrapped on the
torus).  Derivative oracles follow from the chain rule::

    d1_i K       =  g_i(t)          g = grad k
    d1_i d2_j K  = -H_ij(t)         H = hess k
    hess2 K      =  H(t)
    d1_i hess2 K =  T_i(t)          T = third derivative tensor of k

Two families are provided: the Gaussian ``amplitude * exp(-|t|^2 / 2 sigma^2)``
on a box and the product of squared Fejer kernels ``prod_c kappa(t_c)`` on the
torus, ``kappa(t) = (sin(M pi t) / (M sin(pi t)))^4`` with ``M = f_c/2 + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .domain import Domain, as_points

TABLE2_ROWS = ("a1", "a2", "v", "b2", "lambda1", "b3", "c0", "c1",
               "e0", "e1", "e2", "e3", "h0", "h1", "h2")


class KernelConfigError(ValueError):
    pass


# ---------------------------------------------------------------- Fejer 1-D

def fejer_weights(f_c: int) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies ``-f_c..f_c`` and the mass function g of the squared Fejer kernel.

    g is the self-convolution of the triangle ``(1 - |k|/M)/M`` on ``|k| < M``.
    """
    f_c = int(f_c)
    M = f_c // 2 + 1
    k = np.arange(-(M - 1), M)
    tri = (1.0 - np.abs(k) / M) / M
    g = np.convolve(tri, tri)
    freqs = np.arange(-f_c, f_c + 1)
    return freqs, g


def _sinc_ratio_taylor(M: int, h: np.ndarray) -> np.ndarray:
    # sin(M pi h) / (M sin(pi h)) for |h| tiny, via S(x) = sin(x)/x
    def S(x):
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return S(M * math.pi * h) / S(math.pi * h)


def fejer_kappa(t, f_c: int) -> np.ndarray:
    """Closed-form ``kappa(t)`` with a Taylor branch at integer offsets."""
    t = np.asarray(t, dtype=float)
    M = int(f_c) // 2 + 1
    h = t - np.round(t)
    small = np.abs(h) < 1e-6
    out = np.empty_like(t)
    hs = h[small]
    out[small] = _sinc_ratio_taylor(M, hs) ** 4
    tb = t[~small]
    out[~small] = (np.sin(M * math.pi * tb) / (M * np.sin(math.pi * tb))) ** 4
    return out


class _FejerSeries:
    """Derivatives of kappa from its cosine series ``sum_f g(f) cos(2 pi f t)``."""

    def __init__(self, f_c: int):
        freqs, g = fejer_weights(f_c)
        pos = freqs >= 0
        self.f = freqs[pos].astype(float)
        w = g[pos].copy()
        w[1:] *= 2.0
        self.w = w
        self.f_c = int(f_c)

    def deriv(self, t: np.ndarray, n: int) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if n == 0:
            return fejer_kappa(t, self.f_c)
        om = 2.0 * math.pi * self.f
        ph = np.multiply.outer(t, om)
        c = self.w * om ** n
        if n % 4 == 1:
            return -(np.sin(ph) @ c)
        if n % 4 == 2:
            return -(np.cos(ph) @ c)
        if n % 4 == 3:
            return np.sin(ph) @ c
        return np.cos(ph) @ c


# ---------------------------------------------------------------- kernel model

@dataclass(frozen=True)
class KernelModel:
    """Limit covariance kernel with exact derivative oracles.

    Parameters
    ----------
    family : {"gaussian", "fejer"}
    domain : Domain
    sigma : float, optional
        Gaussian bandwidth.
    f_c : int, optional
        Fejer cutoff frequency (even).
    amplitude : float
        Multiplicative constant of the Gaussian (1 for the standard kernel).
    """

    family: str
    domain: Domain
    sigma: float | None = None
    f_c: int | None = None
    amplitude: float = 1.0

    def __post_init__(self):
        if self.family == "gaussian":
            if self.domain.kind != "box":
                raise KernelConfigError("the Gaussian kernel requires a box domain")
            if self.sigma is None or not self.sigma > 0:
                raise KernelConfigError("gaussian kernel needs sigma > 0")
        elif self.family == "fejer":
            if self.domain.kind != "torus":
                raise KernelConfigError("the Fejer kernel requires a torus domain")
            if self.f_c is None or int(self.f_c) != self.f_c or self.f_c < 2 or self.f_c % 2:
                raise KernelConfigError("fejer kernel needs an even integer f_c >= 2")
            object.__setattr__(self, "f_c", int(self.f_c))
        else:
            raise KernelConfigError(f"unknown kernel family {self.family!r}")
        if not self.amplitude > 0:
            raise KernelConfigError("amplitude must be positive")

    @property
    def d(self) -> int:
        return self.domain.d

    @cached_property
    def _series(self) -> _FejerSeries:
        return _FejerSeries(self.f_c)

    # -- profile derivatives in the offset t, arrays of shape (n, d)

    def k(self, t) -> np.ndarray:
        t = as_points(t, self.d)
        if self.family == "gaussian":
            r2 = np.sum(t * t, axis=1)
            return self.amplitude * np.exp(-r2 / (2.0 * self.sigma ** 2))
        return np.prod(self._series.deriv(t, 0), axis=1)

    def _kappa_table(self, t: np.ndarray, order: int) -> list[np.ndarray]:
        return [self._series.deriv(t, n) for n in range(order + 1)]

    def grad(self, t) -> np.ndarray:
        t = as_points(t, self.d)
        if self.family == "gaussian":
            return -t / self.sigma ** 2 * self.k(t)[:, None]
        kap = self._kappa_table(t, 1)
        return self._product_rule(kap, 1)

    def hess(self, t) -> np.ndarray:
        t = as_points(t, self.d)
        if self.family == "gaussian":
            s2 = self.sigma ** 2
            eye = np.eye(self.d)
            H = -eye[None] / s2 + t[:, :, None] * t[:, None, :] / s2 ** 2
            return H * self.k(t)[:, None, None]
        kap = self._kappa_table(t, 2)
        return self._product_rule(kap, 2)

    def third(self, t) -> np.ndarray:
        t = as_points(t, self.d)
        if self.family == "gaussian":
            s2 = self.sigma ** 2
            eye = np.eye(self.d)
            T = (np.einsum("ni,jl->nijl", t, eye) + np.einsum("nj,il->nijl", t, eye)
                 + np.einsum("nl,ij->nijl", t, eye)) / s2 ** 2
            T = T - np.einsum("ni,nj,nl->nijl", t, t, t) / s2 ** 3
            return T * self.k(t)[:, None, None, None]
        kap = self._kappa_table(t, 3)
        return self._product_rule(kap, 3)

    def _product_rule(self, kap: list[np.ndarray], order: int) -> np.ndarray:
        # derivative of prod_c kappa(t_c): each coordinate differentiated as often as it occurs
        n, d = kap[0].shape
        shape = (n,) + (d,) * order
        out = np.empty(shape)
        for idx in np.ndindex(*((d,) * order)):
            counts = np.bincount(np.array(idx, dtype=int), minlength=d)
            val = np.ones(n)
            for c in range(d):
                val = val * kap[counts[c]][:, c]
            out[(slice(None),) + idx] = val
        return out

    # -- two-argument oracles

    def offset(self, x, xp) -> np.ndarray:
        x = as_points(x, self.d)
        xp = as_points(xp, self.d)
        return self.domain.displacement(x, xp)

    def __call__(self, x, xp) -> np.ndarray:
        return self.k(self.offset(x, xp))

    @property
    def v_diag(self) -> np.ndarray:
        """``d1_i d2_i K(x, x)`` for each coordinate i."""
        return -np.diag(self.hess(np.zeros((1, self.d)))[0]).copy()

    def to_json(self) -> dict:
        out = {"family": self.family, "domain": self.domain.to_json()}
        if self.family == "gaussian":
            out["sigma"] = self.sigma
            if self.amplitude != 1.0:
                out["amplitude"] = self.amplitude
        else:
            out["f_c"] = self.f_c
        return out


def make_kernel(family: str, params: Mapping, domain: Domain) -> KernelModel:
    """Build a kernel from a family name and a parameter mapping."""
    params = dict(params)
    if family == "gaussian":
        return KernelModel("gaussian", domain, sigma=float(params["sigma"]),
                           amplitude=float(params.get("amplitude", 1.0)))
    if family == "fejer":
        return KernelModel("fejer", domain, f_c=params["f_c"])
    raise KernelConfigError(f"unknown kernel family {family!r}")


def eval_derivative(kernel: KernelModel, x, xp, order: str, i: int | None = None,
                    j: int | None = None):
    """Evaluate one derivative of ``K(x, x')``.

    ``order`` is one of ``"K"``, ``"d1_i"``, ``"d1d2_ij"``, ``"hess2"``,
    ``"d1_hess2_i"``.  Index arguments select the entry; when omitted the full
    vector/matrix/tensor is returned.  Single points give unbatched results.
    """
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim <= 1 and np.asarray(xp, dtype=float).ndim <= 1
    t = kernel.offset(x, xp)
    if order == "K":
        out = kernel.k(t)
    elif order == "d1_i":
        out = kernel.grad(t)
        if i is not None:
            out = out[:, i]
    elif order == "d1d2_ij":
        out = -kernel.hess(t)
        if i is not None:
            out = out[:, i] if j is None else out[:, i, j]
    elif order == "hess2":
        out = kernel.hess(t)
    elif order == "d1_hess2_i":
        out = kernel.third(t)
        if i is not None:
            out = out[:, i]
    else:
        raise ValueError(f"unknown derivative order {order!r}")
    return out[0] if single else out


# ---------------------------------------------------------------- acceptable-kernel report

@dataclass
class AcceptableKernelReport:
    family: str
    d: int
    s_max: int
    eps_near: float
    Delta: float
    table2: dict
    u: float
    delta: float
    delta_prime: float
    eps_eta: float
    lambda_eta: float
    B0: float
    B2: float
    conditions_ok: dict
    uniform: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    rigorous: bool = True

    @property
    def ok(self) -> bool:
        return all(self.conditions_ok.values())

    def to_json(self) -> dict:
        return {
            "family": self.family, "d": self.d, "s_max": self.s_max,
            "eps_near": self.eps_near, "Delta": self.Delta,
            "table2": {k: self.table2[k] for k in TABLE2_ROWS if k in self.table2},
            "u": self.u, "delta": self.delta, "delta_prime": self.delta_prime,
            "eps_eta": self.eps_eta, "lambda_eta": self.lambda_eta,
            "B0": self.B0, "B2": self.B2,
            "conditions_ok": {f"NDetaCond{k}": bool(v) for k, v in self.conditions_ok.items()},
            "uniform": dict(self.uniform), "notes": dict(self.notes),
            "rigorous": self.rigorous,
        }


def eta_constants(t2: Mapping, d: int, delta: float, delta_prime: float) -> tuple[float, float, float]:
    """``(u, eps_eta, lambda_eta)`` from the derivative-bound rows and (delta, delta')."""
    v = t2["v"]
    u = (t2["a1"] + t2["h1"]) / math.sqrt(v)
    cross = u * math.sqrt(d) / (math.sqrt(v) * (1.0 - delta) * (1.0 - delta_prime))
    eps_eta = 1.0 - ((t2["c0"] + t2["e0"]) / (1.0 - delta_prime) + cross * (t2["c1"] + t2["e1"]))
    lam_eta = ((1.0 - delta_prime / (1.0 - delta_prime)) * t2["lambda1"]
               - t2["e2"] / (1.0 - delta_prime) - cross * (t2["b3"] + t2["e3"]))
    return u, eps_eta, lam_eta


def conditions(t2: Mapping, d: int, u: float, delta: float, delta_prime: float,
               eps_eta: float, lam_eta: float) -> dict:
    v = t2["v"]
    c1 = (v ** -1 * (d * t2["a2"] + t2["h2"]) <= delta
          and t2["h0"] + d * u * u / (1.0 - delta) <= delta_prime)
    c2 = delta < 1.0 and delta_prime < 1.0
    c5 = max(delta + u, delta_prime + d * u * (1.0 - u / (1.0 - delta))) <= 0.5
    return {1: bool(c1), 2: bool(c2), 3: bool(eps_eta > 0), 4: bool(lam_eta > 0), 5: bool(c5)}


def report_from_table(family: str, d: int, s_max: int, eps_near: float, Delta: float,
                      t2: Mapping, delta: float | None = None,
                      delta_prime: float | None = None, **kw) -> AcceptableKernelReport:
    """Assemble a report; delta and delta' default to the smallest admissible values."""
    t2 = dict(t2)
    v = t2["v"]
    u = (t2["a1"] + t2["h1"]) / math.sqrt(v)
    if delta is None:
        delta = (d * t2["a2"] + t2["h2"]) / v
    if delta_prime is None:
        delta_prime = t2["h0"] + d * u * u / (1.0 - delta)
    u, eps_eta, lam_eta = eta_constants(t2, d, delta, delta_prime)
    B0 = math.sqrt(t2["c0"] ** 2 + t2["c1"] ** 2 + t2["e0"] ** 2 + t2["e1"] ** 2)
    B2 = math.sqrt(t2["b2"] ** 2 + t2["e2"] ** 2 + t2["b3"] ** 2 + t2["e3"] ** 2)
    cond = conditions(t2, d, u, delta, delta_prime, eps_eta, lam_eta)
    return AcceptableKernelReport(family, d, s_max, eps_near, Delta, t2, u, delta, delta_prime,
                                  eps_eta, lam_eta, B0, B2, cond, **kw)


# Gaussian closed forms

def gaussian_constants(sigma: float, d: int, s_max: int, A: float = 5.0, B: float = 2.0,
                       C: float = 12.0) -> tuple[dict, dict, float, float]:
    """Closed-form derivative-bound rows, uniform bounds, eps_near and Delta for the Gaussian."""
    e = math.e
    E = A * math.log(s_max) + B * math.log(d) + C
    s, sg = float(s_max), float(sigma)
    den4 = math.exp(C / 4) * s ** (A / 4 - 1) * d ** (B / 4)
    den1 = math.exp(C) * s ** (A - 1) * d ** B
    t2 = {
        "a1": 0.0, "a2": 0.0, "v": 1.0 / sg ** 2,
        "b2": 1.3895 / sg ** 2, "lambda1": 0.3893 / sg ** 2, "b3": 2.4750 / sg ** 3,
        "c0": 0.7789, "c1": 0.6066 / sg,
        "e0": 1.0 / den4,
        "e1": math.sqrt(E) / (math.sqrt(2) * sg * den4),
        "e2": (4 + E) / (4 * sg ** 2 * den4),
        "e3": math.sqrt(E) * (6 + E) / (2 * math.sqrt(2) * sg ** 3 * math.exp(C / 4)
                                        * s ** (A / 4) * d ** (B / 4)),
        "h0": 1.0 / den1,
        "h1": math.sqrt(2 * E) / (sg * den1),
        "h2": (1 + 4 * math.sqrt(d) * E) / (sg ** 2 * den1),
    }
    delta = math.exp(-C) * (1 + 4 * A / (e * (A - 1)) + 4 * B / (e * (B - 0.5)) + 4 * C)
    kA = A / (2 * e * (A - 1)) + B / (e * (2 * B - 1)) + C
    delta_p = math.exp(-C) + 2 * math.exp(-2 * C) / (1 - delta) * kA
    cross = math.sqrt(2) * math.exp(-C) * math.sqrt(kA) / ((1 - delta) * (1 - delta_p))
    q1 = A / (e * (A / 2 - 2)) + 2 / e + C
    q3 = 3 * A / (e * (A / 2 - 2)) + 6 / e + C
    eps_u = 1 - ((0.7789 + math.exp(-C / 4)) / (1 - delta_p)
                 + cross * (0.6066 + math.exp(-C / 4) / math.sqrt(2) * math.sqrt(q1)))
    lam_u = ((1 - delta_p / (1 - delta_p)) * 0.3893
             - (1 + A / (e * (A - 4)) + 1 / e + C / 4) * math.exp(-C / 4) / (1 - delta_p)
             - cross * (2.4750 + math.exp(-C / 4) / (2 * math.sqrt(2))
                        * (6 * math.sqrt(q1) + q3 ** 1.5))) / sg ** 2
    uniform = {"delta": delta, "delta_prime": delta_p, "eps_eta": eps_u,
               "lambda_eta": lam_u, "A": A, "B": B, "C": C}
    eps_near = sg / math.sqrt(2)
    Delta = math.sqrt(2) * sg * math.sqrt(E)
    return t2, uniform, eps_near, Delta


# Fejer closed forms

_C64 = (1 + 1 / 64) ** 4
_PI = math.pi


def _kl(ell: int, a):
    a = np.asarray(a, dtype=float)
    if ell == 0:
        return 1 - _PI ** 2 * a ** 2 / 6 + _PI ** 4 * _C64 * a ** 4 / 72
    if ell == 1:
        return _PI ** 2 * (1 + 1 / 32) * a / 3
    if ell == 2:
        return _PI ** 2 * (1 + 1 / 32) / 3 + 0 * a
    return _PI ** 4 * _C64 * a / 3


def _kg(ell: int, a, f_c: float):
    a = np.minimum(np.asarray(a, dtype=float), math.sqrt(2) * f_c / _PI)
    alpha = 2 / (_PI * (1 - _PI ** 2 * a ** 2 / (6 * f_c ** 2)))
    beta = alpha / a
    H = [alpha ** 4,
         alpha ** 4 * (2 + 2 * beta),
         alpha ** 4 * (4 + 7 * beta + 6 * beta ** 2),
         alpha ** 4 * (8 + 24 * beta + 30 * beta ** 2 + 15 * beta ** 3)][ell]
    return _PI ** ell * H / ((2 + 1 / 128) ** (4 - ell) * a ** 4)


def fejer_constants(f_c: int, d: int, s_max: int, a: float = 0.1, A_bar: float = 5.0,
                    a_lim: float = 0.5) -> tuple[dict, dict, float, float]:
    """Closed-form derivative-bound rows for the Fejer kernel from the univariate bound functions."""
    sq = math.sqrt(d)
    kmax = {0: 1.0}
    for ell in (1, 2, 3):
        kmax[ell] = float(max(_kl(ell, a_lim), _kg(ell, a_lim, f_c)))
    ad = a / sq
    g = {}
    g[0] = float(_kl(2, ad))
    g[1] = float((_PI ** 2 / 3 - _PI ** 4 * _C64 * a ** 2 / 6)
                 * math.exp(-(_PI ** 2 * a ** 2 / 6 + 1) / (1 - _PI ** 2 * a ** 2 / 6)))
    g[2] = float(_kl(1, ad) ** 2)
    g[3] = float(_kl(3, ad))
    g[4] = float(_kl(2, ad) * _kl(1, ad))
    g[5] = float(_kl(1, ad) ** 3)
    g[7] = _PI ** 2 * a ** 2 / 6 - _PI ** 4 * _C64 * a ** 4 / 72

    def far(Ab):
        A = Ab * sq * s_max ** 0.25
        k0, k1, k2, k3 = (float(_kg(ell, A, f_c)) for ell in range(4))
        return {
            8: k0,
            9: max(k1, kmax[1] * k0),
            10: max(k2, kmax[2] * k0),
            11: kmax[1] * max(k1, k0),
            12: max(k3, kmax[3] * k0),
            13: max(k2 * kmax[1], k1 * kmax[2], kmax[2] * kmax[1] * k0),
            14: max(k1 * kmax[1] ** 2, kmax[1] ** 3 * k0),
        }

    gh, gf = far(A_bar / 2), far(A_bar)
    s, fc = float(s_max), float(f_c)
    t2 = {
        "a1": 0.0, "a2": 0.0, "v": fc ** 2 * _PI ** 2 / 3,
        "b2": fc ** 2 * (g[0] + d * g[2]),
        "lambda1": fc ** 2 * g[1],
        "b3": fc ** 3 * sq * (g[3] + (d + 1) * g[4] + d * g[5]),
        "c0": 1 - g[7] / d,
        "c1": fc * sq * kmax[1],
        "e0": s * gh[8],
        "e1": fc * s * sq * gh[9],
        "e2": fc ** 2 * s * (gh[10] + d * gh[11]),
        "e3": fc ** 3 * s * sq * (gh[12] + (d + 1) * gh[13] + d * gh[14]),
        "h0": s * gf[8],
        "h1": fc * s * gf[9],
        "h2": fc ** 2 * s * (gf[10] + d * gf[11]),
    }
    gam = {f"gamma{k}": v for k, v in g.items()}
    gam.update({f"gamma{k}(A/2)": v for k, v in gh.items()})
    gam.update({f"gamma{k}(A)": v for k, v in gf.items()})
    gam.update({f"kappa{k}_max": v for k, v in kmax.items()})
    eps_near = a / (sq * fc)
    Delta = A_bar * sq * s_max ** 0.25 / fc
    return t2, gam, eps_near, Delta


def fejer_min_cutoff(d: int, s_max: int) -> int:
    """Smallest even f_c with ``f_c >= 128 sqrt(d) s_max^(1/4)``."""
    need = 128 * math.sqrt(d) * s_max ** 0.25
    f = int(math.ceil(need - 1e-9))
    return f + (f % 2)


def acceptable_report(kernel: KernelModel, s_max: int, overrides: Mapping | None = None,
                      **options) -> AcceptableKernelReport:
    """Closed-form acceptable-kernel report.

    Parameters
    ----------
    kernel : KernelModel
    s_max : int
        Maximal number of spikes.
    overrides : mapping, optional
        Replacement derivative-bound rows (or ``delta`` / ``delta_prime``).
    options
        Gaussian: ``A``, ``B``, ``C``.  Fejer: ``a``, ``A_bar``, ``a_lim``.
    """
    overrides = dict(overrides or {})
    d = kernel.d
    s_max = int(s_max)
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    if kernel.family == "gaussian":
        t2, uniform, eps_near, Delta = gaussian_constants(kernel.sigma, d, s_max, **options)
        if kernel.amplitude != 1.0:
            # eta_V is invariant to kernel scaling; rows are those of the unit-amplitude kernel
            notes = {"amplitude_normalized": kernel.amplitude}
        else:
            notes = {}
        delta = overrides.pop("delta", uniform["delta"])
        delta_p = overrides.pop("delta_prime", uniform["delta_prime"])
        t2.update(overrides)
        rep = report_from_table("gaussian", d, s_max, eps_near, Delta, t2, delta, delta_p,
                                uniform=uniform, notes=notes)
        return rep
    need = fejer_min_cutoff(d, s_max)
    if kernel.f_c < 128 * math.sqrt(d) * s_max ** 0.25:
        raise KernelConfigError(
            f"Fejer closed-form constants need f_c >= 128*sqrt(d)*s_max^(1/4); use f_c >= {need}")
    t2, gam, eps_near, Delta = fejer_constants(kernel.f_c, d, s_max, **options)
    delta = overrides.pop("delta", None)
    delta_p = overrides.pop("delta_prime", None)
    t2.update(overrides)
    rep = report_from_table("fejer", d, s_max, eps_near, Delta, t2, delta, delta_p, notes=gam)
    ref_eps, ref_lam = 0.0056 / d, 0.0318 * kernel.f_c ** 2
    rep.uniform = {"eps_eta_reference": ref_eps, "lambda_eta_reference": ref_lam,
                   "eps_eta_rel_diff": (rep.eps_eta - ref_eps) / ref_eps,
                   "lambda_eta_rel_diff": (rep.lambda_eta - ref_lam) / ref_lam}
    rep.notes["reference_mismatch"] = bool(
        abs(rep.uniform["eps_eta_rel_diff"]) > 0.1 or abs(rep.uniform["lambda_eta_rel_diff"]) > 0.1)
    return rep


# ---------------------------------------------------------------- numeric scan

def gershgorin_interval(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper Gershgorin bounds on the spectrum of each symmetric matrix in ``H``."""
    H = np.asarray(H)
    diag = np.diagonal(H, axis1=-2, axis2=-1)
    R = np.sum(np.abs(H), axis=-1) - np.abs(diag)
    return np.min(diag - R, axis=-1), np.max(diag + R, axis=-1)


def _band_offsets(domain: Domain, lo: float, hi: float, n: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Offsets with separation norm in ``[lo, hi]``: half on the inner edge, half uniform in radius."""
    d = domain.d
    if lo > hi:
        return np.zeros((0, d))
    if domain.sep_norm == "inf":
        u = rng.uniform(-1, 1, size=(n, d))
        c = rng.integers(0, d, size=n)
        u[np.arange(n), c] = rng.choice([-1.0, 1.0], size=n)
    else:
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    # deterministic axis and diagonal directions
    extra = [np.eye(d), np.ones((1, d)) / (1.0 if domain.sep_norm == "inf" else math.sqrt(d))]
    u = np.vstack([u] + extra)
    r = np.empty(u.shape[0])
    half = u.shape[0] // 2
    r[:half] = lo
    r[half:] = rng.uniform(lo, hi, size=u.shape[0] - half)
    r[-(d + 1):] = lo
    t = u * r[:, None]
    side = 0.5 if domain.kind == "torus" else 2.0 * domain.half_width
    keep = np.all(np.abs(t) <= side + 1e-12, axis=1)
    return t[keep]


def _tensor_opnorm(T: np.ndarray, rng: np.random.Generator, n_dir: int = 32) -> np.ndarray:
    """Sample lower estimate of ``sup_|u|=1 || sum_i u_i T_i ||_2`` per offset."""
    n, d = T.shape[:2]
    U = np.vstack([np.eye(d), rng.standard_normal((n_dir, d))])
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    M = np.einsum("ui,nijk->unjk", U, T)
    return np.max(np.linalg.norm(M, ord=2, axis=(-2, -1)), axis=0)


@dataclass
class Table2Estimate:
    rows: dict
    n_probe: int
    eig_method: str
    rigorous: bool = False


def empirical_table2_scan(kernel: KernelModel, s_max: int, eps_near: float, Delta: float,
                          n_probe: int = 2000, seed: int = 0,
                          eig_method: str = "exact") -> Table2Estimate:
    """Sample-based estimate of every derivative-bound row.

    Suprema rows are sample maxima (never above the true supremum) and the
    ``lambda1`` infimum row is a sample minimum.  ``eig_method="gershgorin"``
    replaces the eigenvalue rows by their Gershgorin bounds.
    """
    if n_probe < 1000:
        raise ValueError("n_probe must be at least 1000")
    rng = np.random.default_rng(seed)
    dom = kernel.domain
    d = dom.d
    diam = dom.diameter
    rows = {}
    z = np.zeros((1, d))
    H0 = kernel.hess(z)[0]
    rows["a1"] = float(np.max(np.abs(kernel.grad(z)[0])))
    off = H0 - np.diag(np.diag(H0))
    rows["a2"] = float(np.max(np.abs(off))) if d > 1 else 0.0
    rows["v"] = float(np.min(-np.diag(H0)))

    t = _band_offsets(dom, 0.0, min(eps_near, diam), n_probe, rng)
    # the inner edge of the near band is 0; put the boundary on the outer edge instead
    t = np.vstack([t, _band_offsets(dom, min(eps_near, diam), min(eps_near, diam), n_probe // 4, rng)])
    H = kernel.hess(t)
    if eig_method == "gershgorin":
        glo, ghi = gershgorin_interval(H)
        R = np.sum(np.abs(H), axis=-1) - np.abs(np.diagonal(H, axis1=-2, axis2=-1))
        rows["b2"] = float(np.max(np.abs(np.diagonal(H, axis1=-2, axis2=-1)) + R))
        rows["lambda1"] = float(np.min(-ghi))
    else:
        ev = np.linalg.eigvalsh(H)
        rows["b2"] = float(np.max(np.abs(ev)))
        rows["lambda1"] = float(np.min(-ev[:, -1]))
    rows["b3"] = float(np.max(_tensor_opnorm(kernel.third(t), rng)))

    def band(lo):
        return _band_offsets(dom, lo, diam, n_probe, rng)

    t = band(eps_near)
    rows["c0"] = float(np.max(np.abs(kernel.k(t)))) if len(t) else 0.0
    rows["c1"] = float(np.max(np.linalg.norm(kernel.grad(t), axis=1))) if len(t) else 0.0
    t = band(Delta / 2)
    if len(t):
        rows["e0"] = s_max * float(np.max(np.abs(kernel.k(t))))
        rows["e1"] = s_max * float(np.max(np.linalg.norm(kernel.grad(t), axis=1)))
        rows["e2"] = s_max * float(np.max(np.linalg.norm(kernel.hess(t), ord=2, axis=(-2, -1))))
        rows["e3"] = s_max * float(np.max(_tensor_opnorm(kernel.third(t), rng)))
    else:
        rows.update(e0=0.0, e1=0.0, e2=0.0, e3=0.0)
    t = band(Delta)
    if len(t):
        rows["h0"] = s_max * float(np.max(np.abs(kernel.k(t))))
        rows["h1"] = s_max * float(np.max(np.abs(kernel.grad(t))))
        rows["h2"] = s_max * float(np.max(np.sum(np.abs(kernel.hess(t)), axis=-1)))
    else:
        rows.update(h0=0.0, h1=0.0, h2=0.0)
    return Table2Estimate(rows, int(n_probe), eig_method)


def scan_report(kernel: KernelModel, s_max: int, eps_near: float, Delta: float,
                n_probe: int = 2000, seed: int = 0, eig_method: str = "exact") -> AcceptableKernelReport:
    """Acceptable-kernel report assembled from :func:`empirical_table2_scan` (non-rigorous)."""
    est = empirical_table2_scan(kernel, s_max, eps_near, Delta, n_probe, seed, eig_method)
    rep = report_from_table(kernel.family, kernel.d, s_max, eps_near, Delta, est.rows,
                            rigorous=False)
    rep.notes["source"] = "sampled scan"
    return rep
