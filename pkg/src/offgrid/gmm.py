"""Compressive estimation of Gaussian mixture means from a Fourier sketch.

Data ``t_1..t_n`` from ``sum_i a_i N(x_i, I)`` are summarized by

    y_k = (M_C / n) sum_j exp(i w_k . t_j),   w_k ~ N(0, sigma_C^2 I)

which is a noisy version of ``Phi mu_0`` for ``mu_0 = sum_i a_i delta_{x_i}`` and
the features ``M_C exp(i w.x - |w|^2 / 2)``.  The means are recovered with the
BLASSO.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .blasso import BlassoProblem, SolverConfig, SolveResult, solve
from .domain import DiscreteMeasure, Domain, as_points
from .features import FeatureDraw, MeasurementSet, draw_features, make_feature_map

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GmmModel:
    """Mixture ``sum_i a_i N(x_i, I)`` with identity covariance."""

    means: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.asarray(self.means, dtype=float)
        mu = mu.reshape(w.size, -1) if w.size else mu.reshape(0, max(mu.shape[-1:] or (1,)))
        if w.size and (np.any(w <= 0) or abs(w.sum() - 1) > 1e-9):
            raise ValueError("weights must be positive and sum to 1")
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "weights", w)

    @property
    def s(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def to_json(self) -> dict:
        return {"means": self.means.tolist(), "weights": self.weights.tolist()}


def sample_gmm(model: GmmModel, n: int, seed: int) -> np.ndarray:
    """``n`` points: component drawn by weight, then mean plus standard normal noise."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if model.s == 0:
        raise ValueError("mixture has no components")
    rng = np.random.default_rng(seed)
    comp = rng.choice(model.s, size=int(n), p=model.weights)
    return model.means[comp] + rng.standard_normal((int(n), model.d))


def samples_to_csv(t) -> str:
    t = np.atleast_2d(np.asarray(t, dtype=float))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"t{i + 1}" for i in range(t.shape[1])])
    w.writerows([[repr(float(v)) for v in row] for row in t])
    return buf.getvalue()


def samples_from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2:
        raise ValueError("sample CSV has no data rows")
    return np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)


@dataclass(frozen=True)
class SketchConfig:
    sigma_C: float
    m: int
    seed: int
    d: int

    def __post_init__(self):
        if not self.sigma_C > 0:
            raise ValueError("sigma_C must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")

    @property
    def M_C(self) -> float:
        return (1.0 + 2.0 * self.sigma_C ** 2) ** (self.d / 2)

    def draw(self, domain: Domain | None = None) -> FeatureDraw:
        dom = domain or Domain.box(self.d, 1.0)
        fmap = make_feature_map("gmm_characteristic", {"sigma_C": self.sigma_C}, dom)
        return draw_features(fmap, self.m, self.seed)

    def to_json(self) -> dict:
        return {"sigma_C": self.sigma_C, "m": self.m, "seed": self.seed, "d": self.d,
                "M_C": self.M_C}


class SketchAccumulator:
    """Running sum of ``exp(i w_k . t)`` over a stream; memory does not grow with n."""

    def __init__(self, config: SketchConfig, omegas: np.ndarray | None = None):
        self.config = config
        self.omegas = config.draw().omegas if omegas is None else np.asarray(omegas, dtype=float)
        self.total = np.zeros(config.m, dtype=complex)
        self.n = 0

    def update(self, batch) -> "SketchAccumulator":
        t = as_points(batch, self.config.d)
        if t.shape[0]:
            self.total += np.exp(1j * (t @ self.omegas.T)).sum(axis=0)
            self.n += t.shape[0]
        return self

    def merge(self, other: "SketchAccumulator") -> "SketchAccumulator":
        if other.config != self.config:
            raise ValueError("cannot merge sketches with different configurations")
        out = SketchAccumulator(self.config, self.omegas)
        out.total = self.total + other.total
        out.n = self.n + other.n
        return out

    def finalize(self) -> "Sketch":
        if self.n == 0:
            raise ValueError("sketch of zero samples")
        return Sketch(self.config.M_C / self.n * self.total, self.n, self.config)


@dataclass
class Sketch:
    y: np.ndarray
    n: int
    config: SketchConfig

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex).reshape(-1)
        if self.y.size != self.config.m:
            raise ValueError("sketch length must equal m")

    def to_json(self) -> dict:
        return {"config": self.config.to_json(), "n": self.n,
                "y": [[float(v.real), float(v.imag)] for v in self.y]}

    @classmethod
    def from_json(cls, obj: dict) -> "Sketch":
        c = obj["config"]
        cfg = SketchConfig(float(c["sigma_C"]), int(c["m"]), int(c["seed"]), int(c["d"]))
        y = np.array([complex(a, b) for a, b in obj["y"]])
        return cls(y, int(obj["n"]), cfg)


def sketch_stream(batches: Iterable, config: SketchConfig) -> Sketch:
    """Sketch of a stream of sample batches (arrays of shape ``(b, d)``)."""
    acc = SketchAccumulator(config)
    for b in batches:
        acc.update(b)
    return acc.finalize()


def merge(a: Sketch, b: Sketch) -> Sketch:
    """Sketch of the union of the two underlying sample sets."""
    if a.config != b.config:
        raise ValueError("cannot merge sketches with different configurations")
    n = a.n + b.n
    return Sketch((a.n * a.y + b.n * b.y) / n, n, a.config)


def noise_bound(n: int, rho: float, M_C: float) -> float:
    """``(M_C / sqrt n) (1 + sqrt(2 log(2 / rho)))``."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    return M_C / math.sqrt(n) * (1 + math.sqrt(2 * math.log(2 / rho)))


def recovery_domain(samples, margin: float = 3.0) -> Domain:
    """Centered box covering the per-coordinate sample range plus ``margin``."""
    t = np.asarray(samples, dtype=float)
    hw = float(np.max(np.abs([t.min(axis=0), t.max(axis=0)]))) + margin
    return Domain.box(t.shape[1], hw)


def recover(sketch: Sketch, lam: float, solver_config: SolverConfig | None = None,
            domain: Domain | None = None) -> tuple[GmmModel, SolveResult]:
    """Run the BLASSO on the sketch and turn the measure into a mixture.

    Negative amplitudes are zeroed and the rest renormalized; both steps emit a
    warning when they change anything.
    """
    cfg = sketch.config
    dom = domain or Domain.box(cfg.d, 10.0)
    draw = cfg.draw(dom)
    res = solve(BlassoProblem(MeasurementSet(sketch.y, draw), lam), solver_config)
    a = res.measure.amplitudes
    x = res.measure.positions
    if np.any(a < 0):
        warnings.warn(f"{int(np.sum(a < 0))} negative amplitude(s) clipped to zero", RuntimeWarning)
    keep = a > 0
    if not np.any(keep):
        warnings.warn("no positive component recovered; returning an empty model", RuntimeWarning)
        return GmmModel(np.zeros((0, cfg.d)), np.zeros(0)), res
    w = a[keep]
    if abs(w.sum() - 1) > 1e-12:
        log.info("renormalizing recovered weights (sum %.6f)", w.sum())
    return GmmModel(x[keep], w / w.sum()), res


def true_measure(model: GmmModel, domain: Domain) -> DiscreteMeasure:
    return DiscreteMeasure(model.means, model.weights, domain)
