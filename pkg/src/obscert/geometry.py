"""Domains, grids, balls, measurable sets, covers, ball chains and ray traces.

Geometry is restricted to boxes, disks and flat tori in dimension 1 or 2.
All three guarantee that a ray segment intersected with a ball and the domain
is a single parameter interval (boxes and disks by convexity, tori because
they are boundaryless), which is what the downstream interpolation step
needs.  Measures are cell-counting on a fixed grid: a set's measure is the
number of true cells times h^d, so pigeonhole statements hold exactly in
integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InfeasibleError, ResolutionError

_KINDS = ("box", "disk", "torus")

# Direction-fan size for ray selection in d=2; ties break on the smallest
# angle index so the selection is reproducible.
N_DIRECTIONS_2D = 64

DEFAULT_CELLS_1D = 1024
DEFAULT_CELLS_2D = 512


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Ambient region: a box [0, L1] x ... , a disk, or a flat torus.

    ``extent`` is the bounding-box side per axis; a disk of radius R has
    extent (2R, 2R) and is centred at (R, R).  Tori use the periodic metric.
    """

    kind: str
    extent: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        if not self.extent or len(self.extent) > 2:
            raise ConfigError("dimension must be 1 or 2")
        if any(e <= 0 for e in self.extent):
            raise ConfigError("extent must be positive on every axis")
        if self.kind == "disk":
            if len(self.extent) != 2 or abs(self.extent[0] - self.extent[1]) > 1e-12:
                raise ConfigError("disk requires two equal extents")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def box(extent: Sequence[float]) -> "Domain":
        return Domain("box", tuple(float(e) for e in extent))

    @staticmethod
    def disk(radius: float) -> "Domain":
        return Domain("disk", (2.0 * radius, 2.0 * radius))

    @staticmethod
    def torus(extent: Sequence[float]) -> "Domain":
        return Domain("torus", tuple(float(e) for e in extent))

    # -- basic queries -----------------------------------------------------

    @property
    def dimension(self) -> int:
        return len(self.extent)

    @property
    def radius(self) -> float:
        if self.kind != "disk":
            raise ConfigError("radius only defined for disks")
        return self.extent[0] / 2.0

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.extent, dtype=float) / 2.0

    @property
    def diameter(self) -> float:
        ext = np.asarray(self.extent, dtype=float)
        if self.kind == "disk":
            return float(ext[0])
        if self.kind == "torus":
            return float(np.linalg.norm(ext / 2.0))
        return float(np.linalg.norm(ext))

    @property
    def volume(self) -> float:
        if self.kind == "disk":
            return math.pi * self.radius ** 2
        return float(np.prod(self.extent))

    @property
    def max_ball_radius(self) -> float:
        """Largest radius at which the single-interval ray property is safe.

        On a torus a ball of radius beyond a quarter of the shortest period
        can wrap onto itself; boxes and disks are convex, so any radius works.
        """
        if self.kind == "torus":
            return min(self.extent) / 4.0
        return float("inf")

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Boolean membership for an array of points shaped (..., d)."""
        p = np.asarray(points, dtype=float)
        if self.kind == "torus":
            return np.ones(p.shape[:-1], dtype=bool)
        if self.kind == "disk":
            return np.linalg.norm(p - self.center, axis=-1) <= self.radius + tol
        ext = np.asarray(self.extent)
        return np.all((p >= -tol) & (p <= ext + tol), axis=-1)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map points to canonical coordinates (identity off the torus)."""
        if self.kind != "torus":
            return np.asarray(points, dtype=float)
        return np.mod(points, np.asarray(self.extent))

    def displacement(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Shortest vector from p to q (wrapped on the torus)."""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        if self.kind == "torus":
            ext = np.asarray(self.extent)
            d = np.mod(d + ext / 2.0, ext) - ext / 2.0
        return d

    def distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Geodesic distance; vectorised over leading axes."""
        if self.kind == "torus":
            ext = np.asarray(self.extent)
            d = np.abs(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))
            d = np.minimum(d, ext - d)
            return np.linalg.norm(d, axis=-1)
        return np.linalg.norm(np.asarray(q, dtype=float) - np.asarray(p, dtype=float), axis=-1)


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform cell discretisation of a domain; sample points are centres."""

    domain: Domain
    cells: tuple[int, ...]

    def __post_init__(self):
        if len(self.cells) != self.domain.dimension:
            raise ConfigError("cells must match the domain dimension")
        if any(c <= 0 for c in self.cells):
            raise ConfigError("cells per axis must be positive")
        hs = [e / c for e, c in zip(self.domain.extent, self.cells)]
        if max(hs) - min(hs) > 1e-9 * max(hs):
            raise ConfigError("cell size must be identical on every axis")

    @staticmethod
    def default(domain: Domain) -> "Grid":
        if domain.dimension == 1:
            return Grid(domain, (DEFAULT_CELLS_1D,))
        base = DEFAULT_CELLS_2D
        ext = domain.extent
        ref = min(ext)
        cells = tuple(max(1, round(base * e / ref)) for e in ext)
        return Grid(domain, cells)

    @property
    def h(self) -> float:
        return self.domain.extent[0] / self.cells[0]

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @cached_property
    def axis_centers(self) -> tuple[np.ndarray, ...]:
        return tuple(
            (np.arange(c) + 0.5) * (e / c)
            for c, e in zip(self.cells, self.domain.extent)
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Cell-centre coordinates, shaped cells + (d,)."""
        axes = np.meshgrid(*self.axis_centers, indexing="ij")
        return np.stack(axes, axis=-1)

    @cached_property
    def interior(self) -> np.ndarray:
        """Cells whose centre lies in the domain; exterior cells are flagged."""
        return self.domain.contains(self.points)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior))

    def point_to_cell(self, points: np.ndarray) -> tuple[np.ndarray, ...]:
        """Cell index per axis for points shaped (..., d); wraps on the torus."""
        p = self.domain.wrap(np.asarray(points, dtype=float))
        idx = []
        for axis in range(self.dimension):
            i = np.floor(p[..., axis] / self.h).astype(int)
            if self.domain.kind == "torus":
                i = np.mod(i, self.cells[axis])
            else:
                i = np.clip(i, 0, self.cells[axis] - 1)
            idx.append(i)
        return tuple(idx)

    def ball_field(self, ball: "Ball") -> np.ndarray:
        """Boolean field: interior cells whose centre lies in the ball."""
        dist = self.domain.distance(self.points, np.asarray(ball.center))
        return (dist <= ball.radius) & self.interior


# ---------------------------------------------------------------------------
# Balls and measurable sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("ball radius must be positive")

    @staticmethod
    def at(center: Sequence[float], radius: float) -> "Ball":
        return Ball(tuple(float(c) for c in center), float(radius))


@dataclass(frozen=True)
class MeasurableSet:
    """Cell-indicator mask over a grid; the measure is count * h^d, exact."""

    grid: Grid
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != tuple(self.grid.cells):
            raise ConfigError("mask shape must equal the grid cell counts")
        if np.any(mask & ~self.grid.interior):
            raise ConfigError("mask is true on an exterior cell")
        object.__setattr__(self, "mask", mask)

    @property
    def cell_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def measure(self) -> float:
        return self.cell_count * self.grid.h ** self.grid.dimension

    @property
    def fraction(self) -> float:
        return self.cell_count / self.grid.n_interior

    # -- constructors ------------------------------------------------------

    @staticmethod
    def full(grid: Grid) -> "MeasurableSet":
        return MeasurableSet(grid, grid.interior.copy())

    @staticmethod
    def empty(grid: Grid) -> "MeasurableSet":
        return MeasurableSet(grid, np.zeros(grid.cells, dtype=bool))

    @staticmethod
    def from_mask(grid: Grid, mask: np.ndarray) -> "MeasurableSet":
        return MeasurableSet(grid, np.asarray(mask, dtype=bool) & grid.interior)

    @staticmethod
    def from_box(grid: Grid, bounds: Sequence[tuple[float, float]]) -> "MeasurableSet":
        """Cells whose centre lies in the axis-aligned box `bounds`."""
        mask = grid.interior.copy()
        pts = grid.points
        for axis, (lo, hi) in enumerate(bounds):
            mask &= (pts[..., axis] >= lo) & (pts[..., axis] <= hi)
        return MeasurableSet(grid, mask)

    @staticmethod
    def from_ball(grid: Grid, ball: Ball) -> "MeasurableSet":
        return MeasurableSet(grid, grid.ball_field(ball))

    @staticmethod
    def random(grid: Grid, fraction: float, rng: np.random.Generator) -> "MeasurableSet":
        """Exactly round(fraction * interior-count) cells, drawn uniformly."""
        if not 0 < fraction <= 1:
            raise ConfigError("fraction must lie in (0, 1]")
        flat_interior = np.flatnonzero(grid.interior.ravel())
        k = max(1, round(fraction * flat_interior.size))
        chosen = rng.choice(flat_interior, size=k, replace=False)
        mask = np.zeros(int(np.prod(grid.cells)), dtype=bool)
        mask[chosen] = True
        return MeasurableSet(grid, mask.reshape(grid.cells))

    @staticmethod
    def nested_random(grid: Grid, fraction: float, rng_or_perm) -> "MeasurableSet":
        """Prefix of a fixed random permutation of the interior cells.

        Masks built from the same permutation nest: a smaller fraction is a
        subset of a larger one, which keeps sweep ratio columns monotone.
        """
        if not 0 < fraction <= 1:
            raise ConfigError("fraction must lie in (0, 1]")
        if isinstance(rng_or_perm, np.random.Generator):
            perm = rng_or_perm.permutation(np.flatnonzero(grid.interior.ravel()))
        else:
            perm = np.asarray(rng_or_perm)
        k = max(1, round(fraction * perm.size))
        mask = np.zeros(int(np.prod(grid.cells)), dtype=bool)
        mask[perm[:k]] = True
        return MeasurableSet(grid, mask.reshape(grid.cells))

    @staticmethod
    def strided(grid: Grid, stride: int) -> "MeasurableSet":
        """Every stride-th interior cell in row-major order (measure ~ 1/stride)."""
        if stride < 1:
            raise ConfigError("stride must be >= 1")
        flat_interior = np.flatnonzero(grid.interior.ravel())
        mask = np.zeros(int(np.prod(grid.cells)), dtype=bool)
        mask[flat_interior[::stride]] = True
        return MeasurableSet(grid, mask.reshape(grid.cells))


def measure(mset: MeasurableSet) -> float:
    """Exact cell-counting measure of the set."""
    return mset.measure


# ---------------------------------------------------------------------------
# Segments and interval sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """Parametrised ray piece origin + t * direction for t in [0, t_max]."""

    origin: tuple[float, ...]
    direction: tuple[float, ...]
    t_max: float

    def __post_init__(self):
        norm = math.sqrt(sum(c * c for c in self.direction))
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError("direction must be a unit vector")
        if self.t_max < 0:
            raise ConfigError("t_max must be nonnegative")

    def point(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        o = np.asarray(self.origin)
        mu = np.asarray(self.direction)
        return o + t[..., None] * mu if t.ndim else o + t * mu

    def points(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        return np.asarray(self.origin) + ts[:, None] * np.asarray(self.direction)


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, pairwise-disjoint closed subintervals of [0, t_max]."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        prev_end = -math.inf
        for a, b in self.intervals:
            if b < a:
                raise ConfigError(f"interval [{a}, {b}] is reversed")
            if a < prev_end:
                raise ConfigError("intervals overlap or are unsorted")
            prev_end = b

    @property
    def total(self) -> float:
        return sum(b - a for a, b in self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals or self.total == 0.0

    @property
    def inf(self) -> float:
        if not self.intervals:
            raise InfeasibleError("empty interval set has no infimum")
        return self.intervals[0][0]

    def first_point_at_or_after(self, tau: float) -> float | None:
        """Discrete infimum of the set intersected with [tau, inf).

        A subinterval qualifies only when it extends strictly beyond tau, so
        a query landing exactly on a right endpoint moves on to the next
        piece's left endpoint; this keeps node choices at representable
        points of the discretised trace.
        """
        for a, b in self.intervals:
            if b > tau:
                return max(a, tau)
        return None

    @staticmethod
    def from_runs(runs: Iterable[tuple[float, float]]) -> "IntervalSet":
        merged: list[list[float]] = []
        for a, b in sorted(runs):
            if merged and a <= merged[-1][1] + 1e-15:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return IntervalSet(tuple((a, b) for a, b in merged))


# ---------------------------------------------------------------------------
# Covering (ball lattice)
# ---------------------------------------------------------------------------

def cover_domain(domain: Domain, r: float) -> list[Ball]:
    """Lattice of radius-r balls covering the domain.

    Lattice spacing is r/sqrt(d) so a whole grid cube of that side fits in
    one ball; every point of the domain is then within r/2 of some centre.
    Centres falling outside a disk are projected back inside (projection onto
    a convex set is 1-Lipschitz, so coverage is preserved), keeping the
    cardinality under the certified per-axis bound.
    """
    if r <= 0:
        raise ConfigError("cover radius must be positive")
    d = domain.dimension
    spacing = r / math.sqrt(d)
    axes = []
    for ext in domain.extent:
        m = max(1, math.ceil(ext / spacing))
        axes.append((np.arange(m) + 0.5) * (ext / m))
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack(mesh, axis=-1).reshape(-1, d)
    half = np.array([ext / max(1, math.ceil(ext / spacing)) / 2.0 for ext in domain.extent])

    balls: list[Ball] = []
    for c in centers:
        if domain.kind == "disk":
            # skip lattice cubes that do not meet the disk at all
            corner = np.abs(c - domain.center)
            nearest = np.maximum(corner - half, 0.0)
            if np.linalg.norm(nearest) > domain.radius:
                continue
            off = c - domain.center
            dist = np.linalg.norm(off)
            if dist > domain.radius:
                c = domain.center + off * (domain.radius * (1 - 1e-12) / dist)
        balls.append(Ball.at(c, r))
    return balls


def cover_count_bound(domain: Domain, r: float) -> int:
    """Certified cover cardinality bound ([c/r] + 1)^d with the constant
    instantiated as sqrt(d) times the diameter.

    On the torus the fundamental-domain extent replaces the (smaller)
    periodic diameter, since the lattice must still span a full period.
    """
    d = domain.dimension
    span = max(domain.extent) if domain.kind == "torus" else domain.diameter
    per_axis = math.floor(span * math.sqrt(d) / r) + 1
    return per_axis ** d


# ---------------------------------------------------------------------------
# Pigeonhole densest ball
# ---------------------------------------------------------------------------

def intersection_cells(mset: MeasurableSet, ball: Ball) -> int:
    """Number of true cells whose centre lies in the ball."""
    grid = mset.grid
    dist = grid.domain.distance(grid.points, np.asarray(ball.center))
    return int(np.count_nonzero(mset.mask & (dist <= ball.radius)))


def densest_ball(mset: MeasurableSet, cover: Sequence[Ball]) -> tuple[Ball, float]:
    """Cover ball maximising |B ∩ E|; ties break on the lowest cover index.

    The returned intersection measure satisfies the pigeonhole floor
    |B ∩ E| >= |E| / len(cover) exactly in cell counts, provided the cover
    covers every true cell.
    """
    if mset.cell_count == 0:
        raise InfeasibleError("densest_ball requires a set of positive measure")
    if not cover:
        raise ConfigError("empty cover")
    grid = mset.grid
    hd = grid.h ** grid.dimension
    best_idx, best_count = -1, -1
    true_points = grid.points[mset.mask]
    for i, ball in enumerate(cover):
        dist = grid.domain.distance(true_points, np.asarray(ball.center))
        count = int(np.count_nonzero(dist <= ball.radius))
        if count > best_count:
            best_idx, best_count = i, count
    return cover[best_idx], best_count * hd


# ---------------------------------------------------------------------------
# Chains of balls
# ---------------------------------------------------------------------------

def chain_of_balls(
    domain: Domain, p_from: np.ndarray, p_to: np.ndarray, r: float
) -> list[np.ndarray]:
    """Centres c_0 = from, ..., c_K = to with consecutive distance <= r/2.

    Boxes and disks are convex and the torus is boundaryless, so the straight
    (periodic) segment between the endpoints stays inside the domain and the
    chain can be placed directly on it with K = ceil(dist / (r/2)) steps.
    """
    if r <= 0:
        raise ConfigError("chain radius must be positive")
    p_from = np.asarray(p_from, dtype=float)
    p_to = np.asarray(p_to, dtype=float)
    for p in (p_from, p_to):
        if not bool(domain.contains(p)):
            raise ConfigError("chain endpoints must lie in the domain")
    disp = domain.displacement(p_from, p_to)
    dist = float(np.linalg.norm(disp))
    if dist == 0.0:
        return [p_from]
    k = math.ceil(dist / (r / 2.0) - 1e-12)
    centers = [domain.wrap(p_from + (i / k) * disp) for i in range(k + 1)]
    inside = domain.contains(np.stack(centers))
    if not bool(np.all(inside)):
        raise ResolutionError("chain left the domain; geometry unsupported")
    return centers


# ---------------------------------------------------------------------------
# Ray extraction and 1D traces
# ---------------------------------------------------------------------------

def _ball_span(domain: Domain, ball: Ball, w: np.ndarray, mu: np.ndarray) -> tuple[float, float]:
    """Parameter window [t_enter, t_exit] with w + t*mu inside the ball
    (ball lifted on the torus); t_enter is 0 for an origin inside."""
    c = np.asarray(ball.center, dtype=float)
    if domain.kind == "torus":
        c = w + domain.displacement(w, c)
    u = w - c
    b = float(np.dot(u, mu))
    disc = b * b + ball.radius ** 2 - float(np.dot(u, u))
    if disc < 0:
        return 0.0, 0.0
    root = math.sqrt(disc)
    return max(0.0, -b - root), max(0.0, -b + root)


def _domain_exit(domain: Domain, w: np.ndarray, mu: np.ndarray) -> float:
    """Largest t >= 0 with w + t*mu inside the (convex) domain."""
    if domain.kind == "torus":
        return math.inf
    if domain.kind == "disk":
        u = w - domain.center
        b = float(np.dot(u, mu))
        disc = b * b + domain.radius ** 2 - float(np.dot(u, u))
        if disc < 0:
            return 0.0
        return -b + math.sqrt(disc)
    t = math.inf
    ext = domain.extent
    for axis in range(domain.dimension):
        m = mu[axis]
        if m > 1e-15:
            t = min(t, (ext[axis] - w[axis]) / m)
        elif m < -1e-15:
            t = min(t, -w[axis] / m)
    return max(t, 0.0)


def _segment_in_ball(domain: Domain, ball: Ball, w: np.ndarray, mu: np.ndarray) -> Segment:
    """Ray piece from w that lies inside ball and domain, within budget 2r.

    An origin outside the ball shifts the segment start to the entry point;
    the parameter budget 2r is still counted from w.
    """
    t_enter, t_exit = _ball_span(domain, ball, w, mu)
    t_dom = _domain_exit(domain, w, mu)  # domain window measured from w
    t_enter = min(t_enter, 2.0 * ball.radius, t_dom)
    origin = w + t_enter * mu
    t_end = min(2.0 * ball.radius, t_exit, t_dom)
    return Segment(tuple(origin), tuple(mu), max(0.0, t_end - t_enter))


def restrict_to_segment(mset: MeasurableSet, seg: Segment) -> IntervalSet:
    """Exact 1D trace of the mask along the segment.

    The segment is cut at every cell-boundary crossing; a sub-interval is
    included iff its midpoint lies in a true cell, so inclusion is
    conservative with respect to the discretised set.
    """
    grid = mset.grid
    h = grid.h
    w = np.asarray(seg.origin, dtype=float)
    mu = np.asarray(seg.direction, dtype=float)
    t_max = seg.t_max
    if t_max <= 0.0:
        return IntervalSet(())

    cuts = [0.0, t_max]
    for axis in range(grid.dimension):
        m = mu[axis]
        if abs(m) < 1e-15:
            continue
        x0 = w[axis]
        x1 = w[axis] + t_max * m
        lo, hi = (x0, x1) if x0 <= x1 else (x1, x0)
        k0 = math.floor(lo / h) + 1
        k1 = math.ceil(hi / h) - 1
        if k1 >= k0:
            ks = np.arange(k0, k1 + 1)
            ts = (ks * h - x0) / m
            cuts.extend(float(t) for t in ts if 0.0 < t < t_max)
    ts = np.unique(np.asarray(cuts, dtype=float))
    mids = (ts[:-1] + ts[1:]) / 2.0
    pts = w[None, :] + mids[:, None] * mu[None, :]
    idx = grid.point_to_cell(pts)
    included = mset.mask[idx]

    runs: list[tuple[float, float]] = []
    start = None
    for i, ok in enumerate(included):
        if ok and start is None:
            start = ts[i]
        elif not ok and start is not None:
            runs.append((start, ts[i]))
            start = None
    if start is not None:
        runs.append((start, ts[-1]))
    return IntervalSet.from_runs(runs)


def ray_directions(dimension: int, n_directions: int = N_DIRECTIONS_2D) -> np.ndarray:
    """The fixed direction fan: both axis directions in d=1, an evenly
    spaced angle fan in d=2."""
    if dimension == 1:
        return np.array([[1.0], [-1.0]])
    angles = 2.0 * math.pi * np.arange(n_directions) / n_directions
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def best_ray_interval(
    ball: Ball,
    mset: MeasurableSet,
    w: np.ndarray,
    n_directions: int = N_DIRECTIONS_2D,
) -> tuple[Segment, IntervalSet]:
    """Direction through w whose trace of B ∩ E has the largest 1D measure.

    Downstream bounds consume the returned measured trace, not the
    spherical-average floor |B ∩ E| / (|S^{d-1}| (2r)^{d-1}).
    """
    grid = mset.grid
    domain = grid.domain
    w = np.asarray(w, dtype=float)
    if not bool(domain.contains(w)):
        raise ConfigError("ray origin must lie in the domain")
    if float(domain.distance(w, np.asarray(ball.center))) > 2.0 * ball.radius + 1e-12:
        raise ConfigError("ray origin too far from the ball")

    best: tuple[Segment, IntervalSet] | None = None
    best_total = 0.0
    for mu in ray_directions(domain.dimension, n_directions):
        seg = _segment_in_ball(domain, ball, w, mu)
        trace = restrict_to_segment(mset, seg)
        if best is None or trace.total > best_total + 1e-15:
            best = (seg, trace)
            best_total = trace.total
    assert best is not None
    if best_total <= 0.0:
        raise ResolutionError(
            "no sampled direction meets the set; refine the grid or the fan"
        )
    return best


# ---------------------------------------------------------------------------
# Mask raster import/export
# ---------------------------------------------------------------------------

MASK_MAGIC = "MASKRASTER"


def write_mask_raster(path, mset: MeasurableSet) -> None:
    """Portable text raster: magic, dimension + cells, cell size, 0/1 rows."""
    grid = mset.grid
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{MASK_MAGIC}\n")
        fh.write(f"{grid.dimension} " + " ".join(str(c) for c in grid.cells) + "\n")
        fh.write(f"{grid.h!r}\n")
        body = mset.mask.astype(np.uint8)
        if grid.dimension == 1:
            fh.write(" ".join(str(v) for v in body) + "\n")
        else:
            for row in body:
                fh.write(" ".join(str(v) for v in row) + "\n")


def read_mask_raster(path) -> tuple[tuple[int, ...], float, np.ndarray]:
    """Read a raster back as (cells, h, mask); attach to a grid separately."""
    with open(path, "r", encoding="ascii") as fh:
        magic = fh.readline().strip()
        if magic != MASK_MAGIC:
            raise ConfigError(f"not a mask raster: bad magic {magic!r}")
        header = fh.readline().split()
        d = int(header[0])
        cells = tuple(int(v) for v in header[1 : 1 + d])
        h = float(fh.readline().strip())
        values = [int(v) for line in fh for v in line.split()]
    mask = np.asarray(values, dtype=bool).reshape(cells)
    return cells, h, mask


def attach_mask(grid: Grid, cells: tuple[int, ...], h: float, mask: np.ndarray) -> MeasurableSet:
    if cells != tuple(grid.cells):
        raise ConfigError(f"raster cells {cells} do not match grid {grid.cells}")
    if abs(h - grid.h) > 1e-9 * grid.h:
        raise ConfigError("raster cell size does not match the grid")
    return MeasurableSet(grid, mask)
