"""Domains, discrete measures, region partitions and covering grids.

A domain is either the flat torus ``[0, 1)^d`` with wrap-around distances or a
centered box ``[-B, B]^d``.  Every point set in the package is stored as a
``(n, d)`` float array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_GRID_CAP = 10_000_000


class GridTooLargeError(ValueError):
    """Raised when a covering grid would exceed the configured size cap."""

    def __init__(self, required: int, cap: int):
        self.required = int(required)
        self.cap = int(cap)
        super().__init__(
            f"grid too large: {self.required} points required, cap is {self.cap}; "
            "use a coarser spacing or a smaller domain"
        )


def as_points(x, d: int) -> np.ndarray:
    """Coerce ``x`` to a float array of shape ``(n, d)``."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1) if a.shape[0] == d else a.reshape(-1, 1)
    if a.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Domain:
    """Compact domain with a separation norm.

    Parameters
    ----------
    kind : {"torus", "box"}
        The torus is ``[0, 1)^d`` with period 1, the box is ``[-B, B]^d``.
    d : int
        Dimension.
    half_width : float, optional
        Box radius per coordinate.  Ignored (forced to 1/2) for the torus.
    sep_norm : {"inf", "l2"}
        Norm used for separation and near-region radii.
    """

    kind: str
    d: int
    half_width: float = 0.5
    sep_norm: str = "inf"

    def __post_init__(self):
        if self.kind not in ("torus", "box"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("dimension d must be a positive integer")
        if self.sep_norm not in ("inf", "l2"):
            raise ValueError(f"unknown separation norm {self.sep_norm!r}")
        if self.kind == "torus":
            object.__setattr__(self, "half_width", 0.5)
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "d", int(self.d))

    @classmethod
    def torus(cls, d: int, sep_norm: str = "inf") -> "Domain":
        return cls("torus", d, 0.5, sep_norm)

    @classmethod
    def box(cls, d: int, half_width: float, sep_norm: str = "l2") -> "Domain":
        return cls("box", d, float(half_width), sep_norm)

    @property
    def lower(self) -> float:
        return 0.0 if self.kind == "torus" else -self.half_width

    @property
    def upper(self) -> float:
        return 1.0 if self.kind == "torus" else self.half_width

    @property
    def diameter(self) -> float:
        """Largest possible separation-norm distance between two points."""
        side = 0.5 if self.kind == "torus" else 2.0 * self.half_width
        return side if self.sep_norm == "inf" else side * math.sqrt(self.d)

    def displacement(self, x, y) -> np.ndarray:
        """``x - y``, reduced to ``[-1/2, 1/2)`` per coordinate on the torus."""
        t = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if self.kind == "torus":
            t = t - np.floor(t + 0.5)
        return t

    def norm(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.sep_norm == "inf":
            return np.max(np.abs(t), axis=-1)
        return np.sqrt(np.sum(t * t, axis=-1))

    def distance(self, x, y) -> np.ndarray:
        return self.norm(self.displacement(x, y))

    def wrap(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "torus":
            return x - np.floor(x)
        return x

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.lower, self.upper
        if self.kind == "torus":
            ok = (x >= lo - tol) & (x < hi + tol)
        else:
            ok = (x >= lo - tol) & (x <= hi + tol)
        return np.all(ok, axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.d))

    def to_json(self) -> dict:
        return {"kind": self.kind, "d": self.d, "half_width": self.half_width,
                "sep_norm": self.sep_norm}

    @classmethod
    def from_json(cls, obj: dict) -> "Domain":
        return cls(obj["kind"], int(obj["d"]), float(obj.get("half_width", 0.5)),
                   obj.get("sep_norm", "inf"))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Signed atomic measure ``sum_i a_i delta_{x_i}`` on a domain."""

    positions: np.ndarray
    amplitudes: np.ndarray
    domain: Domain

    def __post_init__(self):
        d = self.domain.d
        a = np.array(self.amplitudes, dtype=float).reshape(-1)
        if a.size == 0:
            x = np.zeros((0, d))
        else:
            x = as_points(np.array(self.positions, dtype=float), d)
        if x.shape[0] != a.size:
            raise ValueError("positions and amplitudes have different lengths")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitudes must be finite")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        x = self.domain.wrap(x)
        if x.size and not np.all(self.domain.contains(x, tol=1e-9)):
            raise ValueError("atom positions must lie inside the domain")
        x.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def empty(cls, domain: Domain) -> "DiscreteMeasure":
        return cls(np.zeros((0, domain.d)), np.zeros(0), domain)

    @property
    def s(self) -> int:
        return int(self.amplitudes.size)

    def __len__(self):
        return self.s

    def signs(self) -> np.ndarray:
        return np.sign(self.amplitudes)

    def normalized(self, tol: float = 0.0) -> "DiscreteMeasure":
        """Drop atoms with ``|a| <= tol`` (zero atoms are always dropped)."""
        keep = np.abs(self.amplitudes) > tol
        return DiscreteMeasure(self.positions[keep], self.amplitudes[keep], self.domain)

    def to_json(self) -> dict:
        return {"atoms": [{"x": [float(v) for v in x], "a": float(a)}
                          for x, a in zip(self.positions, self.amplitudes)]}

    @classmethod
    def from_json(cls, obj: dict, domain: Domain) -> "DiscreteMeasure":
        atoms = obj["atoms"]
        if not atoms:
            return cls.empty(domain)
        x = [at["x"] for at in atoms]
        a = [at["a"] for at in atoms]
        return cls(np.array(x, dtype=float).reshape(len(atoms), domain.d), a, domain)


def tv_norm(mu: DiscreteMeasure) -> float:
    """Total variation ``sum_i |a_i|``."""
    return float(np.sum(np.abs(mu.amplitudes)))


def pairwise_distances(domain: Domain, x) -> np.ndarray:
    x = as_points(x, domain.d)
    return domain.distance(x[:, None, :], x[None, :, :])


def min_separation(mu: DiscreteMeasure) -> float:
    """Smallest separation-norm distance between two distinct atoms."""
    if mu.s == 0:
        raise ValueError("empty measure")
    if mu.s == 1:
        return math.inf
    D = pairwise_distances(mu.domain, mu.positions)
    iu = np.triu_indices(mu.s, k=1)
    return float(D[iu].min())


@dataclass(frozen=True)
class RegionPartition:
    """Near balls of radius ``eps_near`` (separation norm) around centers, plus the far set."""

    centers: np.ndarray
    eps_near: float
    domain: Domain
    overlap: bool = field(init=False)

    def __post_init__(self):
        if not self.eps_near > 0:
            raise ValueError("eps_near must be positive")
        c = as_points(self.centers, self.domain.d) if np.size(self.centers) else \
            np.zeros((0, self.domain.d))
        c = self.domain.wrap(c)
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        ov = False
        if c.shape[0] > 1:
            D = pairwise_distances(self.domain, c)
            iu = np.triu_indices(c.shape[0], k=1)
            ov = bool(np.any(D[iu] < 2.0 * self.eps_near))
        object.__setattr__(self, "overlap", ov)

    @property
    def s(self) -> int:
        return self.centers.shape[0]

    def classify(self, x) -> np.ndarray:
        """Region label per point: index of the closest center within ``eps_near``, else -1 (far)."""
        x = as_points(x, self.domain.d)
        if self.s == 0:
            return np.full(x.shape[0], -1, dtype=int)
        D = self.domain.distance(x[:, None, :], self.centers[None, :, :])
        j = np.argmin(D, axis=1)
        near = D[np.arange(x.shape[0]), j] <= self.eps_near
        return np.where(near, j, -1)


def partition(centers, eps_near: float, domain: Domain) -> RegionPartition:
    return RegionPartition(np.asarray(centers, dtype=float), float(eps_near), domain)


@dataclass(frozen=True)
class CoveringGrid:
    """Finite point set covering a region to Euclidean radius ``spacing``."""

    points: np.ndarray
    spacing: float
    region: str | int  # "far" or the index j of a near ball

    def __len__(self):
        return self.points.shape[0]


def _lattice_1d(lo: float, hi: float, pitch: float) -> np.ndarray:
    n = max(1, int(math.ceil((hi - lo) / pitch - 1e-12)))
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


def covering_grid(part: RegionPartition, region: str | int, spacing: float,
                  cap: int = DEFAULT_GRID_CAP) -> CoveringGrid:
    """Axis-aligned lattice covering the far region or one near ball.

    The lattice pitch is at most ``spacing / sqrt(d)`` so every point of the
    covered region lies within ``spacing / 2`` (Euclidean) of a grid point.

    Parameters
    ----------
    part : RegionPartition
    region : "far" or int
        ``"far"`` for the complement of the near balls, ``j`` for near ball j.
    spacing : float
        Covering radius requested.
    cap : int
        Maximum number of grid points before raising :class:`GridTooLargeError`.
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    dom = part.domain
    d = dom.d
    pitch = spacing / math.sqrt(d)
    if region == "far":
        axis = _lattice_1d(dom.lower, dom.upper, pitch)
        n = axis.size
        if n ** d > cap:
            raise GridTooLargeError(n ** d, cap)
        h = (dom.upper - dom.lower) / n
        pts = _product(axis, d)
        if part.s:
            slack = h * math.sqrt(d) / 2.0
            keep = np.ones(pts.shape[0], dtype=bool)
            for c in part.centers:
                keep &= dom.distance(pts, c) >= part.eps_near - slack
            pts = pts[keep]
        return CoveringGrid(pts, float(spacing), "far")
    j = int(region)
    if not 0 <= j < part.s:
        raise ValueError(f"no near region {region!r}")
    eps = part.eps_near
    k = max(0, int(math.ceil(eps / pitch - 0.5 - 1e-12)))
    offsets_1d = np.clip(np.arange(-k, k + 1) * pitch, -eps, eps)
    n = offsets_1d.size
    if n ** d > cap:
        raise GridTooLargeError(n ** d, cap)
    off = _product(offsets_1d, d)
    if dom.sep_norm == "l2" and d > 1:
        # keep lattice points that can be nearest to a ball point, projected onto the ball
        r = np.linalg.norm(off, axis=1)
        off = off[r <= eps + pitch * math.sqrt(d) / 2.0]
        r = np.linalg.norm(off, axis=1)
        scale = np.where(r > eps, eps / np.maximum(r, 1e-300), 1.0)
        off = off * scale[:, None]
    pts = dom.wrap(part.centers[j] + off)
    return CoveringGrid(pts, float(spacing), j)


def _product(axis: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return axis.reshape(-1, 1).copy()
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def random_separated_positions(domain: Domain, s: int, separation: float,
                               rng: np.random.Generator, margin: float = 0.0,
                               max_tries: int = 10_000) -> np.ndarray:
    """Draw ``s`` points at pairwise separation-norm distance >= ``separation``.

    ``margin`` keeps box points at least that far from the boundary.
    """
    lo, hi = domain.lower, domain.upper
    if domain.kind == "box":
        lo, hi = lo + margin, hi - margin
        if hi <= lo:
            raise ValueError("margin leaves no room inside the box")
    # sequential placement jams easily when the domain is tight; restart on a jam
    per_point = 200
    for _ in range(max(1, max_tries // per_point)):
        pts: list[np.ndarray] = []
        fails = 0
        while len(pts) < s and fails < per_point:
            p = rng.uniform(lo, hi, size=domain.d)
            if all(domain.distance(p, q) >= separation for q in pts):
                pts.append(p)
                fails = 0
            else:
                fails += 1
        if len(pts) == s:
            return np.array(pts)
    raise ValueError(f"could not place {s} points with separation {separation}")
