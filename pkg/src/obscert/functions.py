"""Test-function models with exact derivative oracles, plus the hypothesis
certificates: derivative-growth (Gevrey-type), doubling, and
unique-continuation.

Every model evaluates vectorised over arrays of points and exposes an exact
closed-form directional derivative of any order, which is what the
interpolation remainder consumes.  Certificate verification samples grid
points and directions; certificate *derivation* for the built-in kinds uses
closed-form coefficient bounds, so a derived certificate is sound by
construction rather than by sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, HypothesisError, InfeasibleError
from .geometry import Ball, Domain, Grid, MeasurableSet
from .logspace import log_factorial

TWO_PI = 2.0 * math.pi

# Cramer's bound |He_k(x)| e^{-x^2/4} <= c sqrt(k!) transported to the
# physicists' normalisation; 1.09 rounds the constant up.
HERMITE_ENVELOPE = 1.09


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GevreyCertificate:
    """Derivative growth: sup|f^(k)| <= M k!^sigma delta^-k sup|f|."""

    M: float
    delta: float
    sigma: float

    def __post_init__(self):
        if self.M < 1.0:
            raise ConfigError("certificate requires M >= 1")
        if self.delta <= 0.0:
            raise ConfigError("certificate requires delta > 0")
        if self.sigma < 1.0:
            raise ConfigError("certificate requires sigma >= 1")

    def log_derivative_bound(self, k: int, log_sup: float) -> float:
        """ln of the claimed bound on sup|f^(k)|."""
        return (
            math.log(self.M)
            + self.sigma * log_factorial(k)
            - k * math.log(self.delta)
            + log_sup
        )


@dataclass(frozen=True)
class DoublingCertificate:
    """sup over B_2r is controlled by kappa times the sup over B_r, r <= r0."""

    kappa: float
    r0: float

    def __post_init__(self):
        if self.kappa < 2.0:
            raise ConfigError("doubling constant must be >= 2")
        if not 0.0 < self.r0 <= 1.0:
            raise ConfigError("doubling radius bound must lie in (0, 1]")

    @property
    def log2_kappa(self) -> float:
        return math.log2(self.kappa)


@dataclass(frozen=True)
class UcpCertificate:
    """Unique continuation: sup over the domain <= exp(a / r^b) * ball sup."""

    a: float
    b: float
    r0: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.r0 <= 0:
            raise ConfigError("unique-continuation constants must be positive")


# ---------------------------------------------------------------------------
# Function models
# ---------------------------------------------------------------------------

class FunctionModel:
    """Evaluation plus an exact k-th directional-derivative oracle."""

    kind: str = "abstract"
    dimension: int

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def directional_derivative(
        self, points: np.ndarray, direction: np.ndarray, order: int
    ) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate(points)


def _as_points(points: np.ndarray, dimension: int) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != dimension:
        raise ConfigError(f"points have dimension {p.shape[-1]}, expected {dimension}")
    return p


def _unit(direction: np.ndarray) -> np.ndarray:
    mu = np.asarray(direction, dtype=float)
    n = np.linalg.norm(mu)
    if abs(n - 1.0) > 1e-9:
        raise ConfigError("direction must be a unit vector")
    return mu


@dataclass(frozen=True)
class TrigMode:
    freq: tuple[int, ...]
    amplitude: float
    phase: float = 0.0

    @property
    def freq_norm(self) -> float:
        return math.sqrt(sum(k * k for k in self.freq))


@dataclass(frozen=True)
class TrigSum(FunctionModel):
    """f(x) = sum_j a_j sin(2 pi k_j . x + phi_j) with integer frequencies."""

    modes: tuple[TrigMode, ...]
    dimension: int

    kind = "trig"

    def __post_init__(self):
        if not self.modes:
            raise ConfigError("a trigonometric sum needs at least one mode")
        for m in self.modes:
            if len(m.freq) != self.dimension:
                raise ConfigError("mode frequency dimension mismatch")

    @staticmethod
    def sine(freq: Sequence[int], amplitude: float = 1.0, phase: float = 0.0) -> "TrigSum":
        k = tuple(int(v) for v in freq)
        return TrigSum((TrigMode(k, float(amplitude), float(phase)),), len(k))

    @staticmethod
    def of(modes: Sequence[tuple[Sequence[int], float, float]], dimension: int) -> "TrigSum":
        ms = tuple(TrigMode(tuple(int(v) for v in k), float(a), float(p)) for k, a, p in modes)
        return TrigSum(ms, dimension)

    @property
    def max_freq_norm(self) -> float:
        return max(m.freq_norm for m in self.modes)

    @property
    def amplitude_sum(self) -> float:
        return sum(abs(m.amplitude) for m in self.modes)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        p = _as_points(points, self.dimension)
        out = np.zeros(p.shape[:-1])
        for m in self.modes:
            arg = TWO_PI * np.tensordot(p, np.asarray(m.freq, dtype=float), axes=([-1], [0]))
            out += m.amplitude * np.sin(arg + m.phase)
        return out

    def directional_derivative(self, points, direction, order: int) -> np.ndarray:
        if order == 0:
            return self.evaluate(points)
        p = _as_points(points, self.dimension)
        mu = _unit(direction)
        out = np.zeros(p.shape[:-1])
        shift = order * math.pi / 2.0
        for m in self.modes:
            k = np.asarray(m.freq, dtype=float)
            rate = TWO_PI * float(np.dot(k, mu))
            if rate == 0.0 and order > 0:
                continue
            arg = TWO_PI * np.tensordot(p, k, axes=([-1], [0]))
            out += m.amplitude * rate ** order * np.sin(arg + m.phase + shift)
        return out


def _hermite_phys(order: int, z: np.ndarray) -> np.ndarray:
    """Physicists' Hermite polynomial H_order(z) by the three-term recurrence."""
    h_prev = np.ones_like(z)
    if order == 0:
        return h_prev
    h = 2.0 * z
    for k in range(1, order):
        h, h_prev = 2.0 * z * h - 2.0 * k * h_prev, h
    return h


@dataclass(frozen=True)
class Gaussian(FunctionModel):
    """f(x) = A exp(-|x - c|^2 / (2 s^2)), isotropic."""

    center: tuple[float, ...]
    width: float
    amplitude: float = 1.0

    kind = "gaussian"

    def __post_init__(self):
        if self.width <= 0:
            raise ConfigError("gaussian width must be positive")

    @property
    def dimension(self) -> int:
        return len(self.center)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        p = _as_points(points, self.dimension)
        sq = np.sum((p - np.asarray(self.center)) ** 2, axis=-1)
        return self.amplitude * np.exp(-sq / (2.0 * self.width ** 2))

    def directional_derivative(self, points, direction, order: int) -> np.ndarray:
        if order == 0:
            return self.evaluate(points)
        p = _as_points(points, self.dimension)
        mu = _unit(direction)
        v = p - np.asarray(self.center)
        tau = np.tensordot(v, mu, axes=([-1], [0]))
        perp_sq = np.sum(v * v, axis=-1) - tau * tau
        s = self.width
        z = tau / (s * math.sqrt(2.0))
        radial = _hermite_phys(order, z) * np.exp(-z * z)
        scale = (-1.0 / (s * math.sqrt(2.0))) ** order
        return self.amplitude * np.exp(-np.maximum(perp_sq, 0.0) / (2.0 * s * s)) * scale * radial


@dataclass(frozen=True)
class Product(FunctionModel):
    """Pointwise product of two models; derivatives via the Leibniz rule."""

    first: FunctionModel
    second: FunctionModel

    kind = "product"

    def __post_init__(self):
        if self.first.dimension != self.second.dimension:
            raise ConfigError("product factors must share a dimension")

    @property
    def dimension(self) -> int:
        return self.first.dimension

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.first.evaluate(points) * self.second.evaluate(points)

    def directional_derivative(self, points, direction, order: int) -> np.ndarray:
        out = None
        for j in range(order + 1):
            term = (
                math.comb(order, j)
                * self.first.directional_derivative(points, direction, j)
                * self.second.directional_derivative(points, direction, order - j)
            )
            out = term if out is None else out + term
        return out


@dataclass(frozen=True)
class Polynomial1D(FunctionModel):
    """f(x) = sum_i c_i x^i on a one-dimensional domain."""

    coeffs: tuple[float, ...]

    kind = "polynomial"
    dimension = 1

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        p = _as_points(points, 1)[..., 0]
        return np.polynomial.polynomial.polyval(p, np.asarray(self.coeffs))

    def directional_derivative(self, points, direction, order: int) -> np.ndarray:
        mu = _unit(direction)[0]
        c = np.polynomial.polynomial.polyder(np.asarray(self.coeffs, dtype=float), order) \
            if order > 0 else np.asarray(self.coeffs, dtype=float)
        p = _as_points(points, 1)[..., 0]
        return (mu ** order) * np.polynomial.polynomial.polyval(p, c)


# ---------------------------------------------------------------------------
# Sup norms over grid regions
# ---------------------------------------------------------------------------

class SupResult(NamedTuple):
    value: float
    argmax: np.ndarray


def sup_norm(f: FunctionModel, region, grid: Grid) -> SupResult:
    """max |f| over the region's grid sample points, with the argmax point.

    Deterministic under a fixed grid: ties resolve to the first cell in
    row-major order.
    """
    if isinstance(region, Domain):
        sel = grid.interior
    elif isinstance(region, Ball):
        sel = grid.ball_field(region)
    elif isinstance(region, MeasurableSet):
        if region.grid is not grid and region.grid != grid:
            raise ConfigError("measurable set lives on a different grid")
        sel = region.mask
    else:
        raise ConfigError(f"unsupported region type {type(region).__name__}")
    if not np.any(sel):
        raise InfeasibleError("region contains no grid sample points")
    pts = grid.points[sel]
    vals = np.abs(f.evaluate(pts))
    i = int(np.argmax(vals))
    return SupResult(float(vals[i]), pts[i])


# ---------------------------------------------------------------------------
# Certificate derivation (closed form per model kind)
# ---------------------------------------------------------------------------

def derive_gevrey(f: FunctionModel, domain: Domain, grid: Grid) -> GevreyCertificate:
    """Closed-form derivative-growth certificate for a built-in model.

    The bounds are true for the k-th directional derivative along any unit
    direction; dividing by the grid sup (<= the true sup) only enlarges M,
    so the certificate stays sound.
    """
    sup = sup_norm(f, domain, grid).value
    if sup == 0.0:
        raise HypothesisError("the zero function carries no certificate")
    if isinstance(f, TrigSum):
        m = max(1.0, f.amplitude_sum / sup)
        return GevreyCertificate(m, 1.0 / (TWO_PI * f.max_freq_norm), 1.0)
    if isinstance(f, Gaussian):
        m = max(1.0, HERMITE_ENVELOPE * abs(f.amplitude) / sup)
        return GevreyCertificate(m, f.width, 1.0)
    if isinstance(f, Product):
        c1 = derive_gevrey(f.first, domain, grid)
        c2 = derive_gevrey(f.second, domain, grid)
        s1 = sup_norm(f.first, domain, grid).value
        s2 = sup_norm(f.second, domain, grid).value
        # Leibniz: sum_j C(k,j) j!^s (k-j)!^s <= k!^s (k+1) <= k!^s 2^k
        m = max(1.0, c1.M * c2.M * s1 * s2 / sup)
        return GevreyCertificate(m, min(c1.delta, c2.delta) / 2.0, max(c1.sigma, c2.sigma))
    if isinstance(f, Polynomial1D):
        hi = domain.extent[0]
        worst = 1.0
        coeffs = np.asarray(f.coeffs, dtype=float)
        for k in range(1, len(coeffs)):
            dk = np.polynomial.polynomial.polyder(coeffs, k)
            bound = float(np.sum(np.abs(dk) * hi ** np.arange(dk.size)))
            worst = max(worst, bound / (math.factorial(k) * sup))
        return GevreyCertificate(worst, 1.0, 1.0)
    raise ConfigError(f"no certificate derivation for model kind {f.kind!r}")


# ---------------------------------------------------------------------------
# Hypothesis verification and estimation
# ---------------------------------------------------------------------------

@dataclass
class GevreyReport:
    passed: bool
    max_ratio: float
    worst_k: int
    worst_point: np.ndarray = field(repr=False)
    worst_direction: np.ndarray = field(repr=False)
    ratios: dict[int, float] = field(default_factory=dict)


def _sample_points(grid: Grid, max_points: int) -> np.ndarray:
    pts = grid.points[grid.interior]
    if pts.shape[0] <= max_points:
        return pts
    stride = int(math.ceil(pts.shape[0] / max_points))
    return pts[::stride]


def _direction_fan(dimension: int, count: int) -> np.ndarray:
    if dimension == 1:
        return np.array([[1.0], [-1.0]])
    ang = math.pi * np.arange(count) / count
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def verify_gevrey(
    f: FunctionModel,
    cert: GevreyCertificate,
    domain: Domain,
    grid: Grid,
    kmax: int = 12,
    directions: np.ndarray | None = None,
    max_points: int = 2048,
) -> GevreyReport:
    """Check the derivative-growth ratios up to order kmax.

    ratio(k) = sup |f^(k)| * delta^k / (k!^sigma * sup|f|) over sampled points
    and directions; the report passes iff every ratio is <= M.
    """
    if kmax < 1:
        raise ConfigError("kmax must be >= 1")
    sup = sup_norm(f, domain, grid).value
    if sup == 0.0:
        raise HypothesisError("the zero function carries no certificate")
    pts = _sample_points(grid, max_points)
    dirs = directions if directions is not None else _direction_fan(domain.dimension, 16)

    log_delta = math.log(cert.delta)
    worst = (-math.inf, 1, pts[0], dirs[0])
    ratios: dict[int, float] = {}
    for k in range(1, kmax + 1):
        best_k = 0.0
        best_at = (pts[0], dirs[0])
        for mu in dirs:
            vals = np.abs(f.directional_derivative(pts, mu, k))
            i = int(np.argmax(vals))
            if vals[i] > best_k:
                best_k = float(vals[i])
                best_at = (pts[i], mu)
        if best_k == 0.0:
            ratios[k] = 0.0
            continue
        log_ratio = (
            math.log(best_k) + k * log_delta - cert.sigma * log_factorial(k) - math.log(sup)
        )
        ratios[k] = math.exp(log_ratio) if log_ratio < 700 else math.inf
        if ratios[k] > worst[0]:
            worst = (ratios[k], k, best_at[0], best_at[1])
    max_ratio = max(ratios.values()) if ratios else 0.0
    return GevreyReport(
        passed=max_ratio <= cert.M * (1.0 + 1e-9),
        max_ratio=max_ratio,
        worst_k=worst[1],
        worst_point=worst[2],
        worst_direction=worst[3],
        ratios=ratios,
    )


def halton_points(domain: Domain, count: int) -> np.ndarray:
    """Deterministic low-discrepancy sample of the domain (Halton bases 2, 3)."""

    def radical_inverse(base: int, n: int) -> float:
        inv, f = 0.0, 1.0 / base
        while n > 0:
            inv += f * (n % base)
            n //= base
            f /= base
        return inv

    bases = (2, 3)[: domain.dimension]
    pts = []
    n = 1
    while len(pts) < count:
        u = np.array([radical_inverse(b, n) for b in bases])
        p = u * np.asarray(domain.extent)
        if bool(domain.contains(p)):
            pts.append(p)
        n += 1
        if n > 100 * count:
            raise InfeasibleError("could not place low-discrepancy points")
    return np.stack(pts)


def default_radii(domain: Domain, r0: float | None = None) -> list[float]:
    """Dyadic radius ladder {r0/8, r0/4, r0/2, r0} below the domain cap."""
    cap = min(1.0, domain.diameter / 2.0, domain.max_ball_radius)
    top = cap if r0 is None else min(r0, cap)
    return [top / 8.0, top / 4.0, top / 2.0, top]


@dataclass
class DoublingSample:
    center: np.ndarray = field(repr=False)
    radius: float
    ratio: float


@dataclass
class DoublingReport:
    kappa_hat: float
    worst: DoublingSample
    samples: list[DoublingSample] = field(default_factory=list, repr=False)


def estimate_doubling(
    f: FunctionModel,
    domain: Domain,
    grid: Grid,
    radii: Sequence[float] | None = None,
    centers: np.ndarray | None = None,
) -> tuple[DoublingCertificate, DoublingReport]:
    """Empirical doubling constant over sampled centres and radii.

    A zero inner sup is a genuine failure of the doubling hypothesis (the
    function vanishes on a whole sampled ball) and raises rather than being
    clamped away.
    """
    radii = list(radii) if radii is not None else default_radii(domain)
    if centers is None:
        centers = halton_points(domain, 64)
    if any(r <= 0 for r in radii):
        raise ConfigError("radii must be positive")

    field_vals = np.abs(f.evaluate(grid.points))
    field_vals[~grid.interior] = -1.0

    samples: list[DoublingSample] = []
    worst: DoublingSample | None = None
    for x in np.atleast_2d(centers):
        dist = domain.distance(grid.points, x)
        for r in radii:
            inner = float(np.max(np.where(dist <= r, field_vals, -1.0)))
            outer = float(np.max(np.where(dist <= 2.0 * r, field_vals, -1.0)))
            if inner < 0.0 or outer < 0.0:
                continue  # ball too small for this grid
            if inner == 0.0:
                raise HypothesisError(
                    f"doubling fails: |f| vanishes on the ball at {x} radius {r}"
                )
            s = DoublingSample(np.asarray(x), float(r), outer / inner)
            samples.append(s)
            if worst is None or s.ratio > worst.ratio:
                worst = s
    if worst is None:
        raise InfeasibleError("no sampled ball contained a grid point")
    kappa = max(2.0, worst.ratio)
    cert = DoublingCertificate(kappa, min(1.0, max(radii)))
    return cert, DoublingReport(kappa_hat=worst.ratio, worst=worst, samples=samples)


@dataclass
class UcpReport:
    passed: bool
    worst_margin_log: float
    min_sufficient_a: float
    n_samples: int


def verify_ucp(
    f: FunctionModel,
    cert: UcpCertificate,
    domain: Domain,
    grid: Grid,
    radii: Sequence[float] | None = None,
    centers: np.ndarray | None = None,
) -> UcpReport:
    """Check sup over the domain <= exp(a / r^b) * ball sup at all samples."""
    radii = list(radii) if radii is not None else default_radii(domain, cert.r0)
    if centers is None:
        centers = halton_points(domain, 64)

    field_vals = np.abs(f.evaluate(grid.points))
    field_vals[~grid.interior] = -1.0
    log_sup = math.log(float(np.max(field_vals)))

    worst_margin = -math.inf
    min_a = 0.0
    n = 0
    for x in np.atleast_2d(centers):
        dist = domain.distance(grid.points, x)
        for r in radii:
            if r > cert.r0 + 1e-12:
                continue
            inner = float(np.max(np.where(dist <= r, field_vals, -1.0)))
            if inner < 0.0:
                continue
            n += 1
            if inner == 0.0:
                return UcpReport(False, math.inf, math.inf, n)
            margin = log_sup - math.log(inner) - cert.a / r ** cert.b
            worst_margin = max(worst_margin, margin)
            min_a = max(min_a, r ** cert.b * (log_sup - math.log(inner)))
    if n == 0:
        raise InfeasibleError("no sampled ball contained a grid point")
    return UcpReport(worst_margin <= 1e-12, worst_margin, min_a, n)
