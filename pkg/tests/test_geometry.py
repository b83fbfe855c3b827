import math

import numpy as np
import pytest

from obscert.errors import ConfigError, InfeasibleError, ResolutionError
from obscert.geometry import (
    Ball,
    Domain,
    Grid,
    IntervalSet,
    MeasurableSet,
    Segment,
    attach_mask,
    best_ray_interval,
    chain_of_balls,
    cover_count_bound,
    cover_domain,
    densest_ball,
    intersection_cells,
    measure,
    read_mask_raster,
    restrict_to_segment,
    write_mask_raster,
)


def unit_interval(cells=1024):
    return Grid(Domain.box([1.0]), (cells,))


def unit_square(cells=256):
    return Grid(Domain.box([1.0, 1.0]), (cells, cells))


# ---------------------------------------------------------------------------
# Measure
# ---------------------------------------------------------------------------

def test_measure_full_unit_square():
    grid = unit_square(128)
    assert measure(MeasurableSet.full(grid)) == pytest.approx(1.0, abs=0)


def test_measure_empty():
    assert measure(MeasurableSet.empty(unit_interval())) == 0.0


def test_measure_left_half_even_resolution():
    for cells in (64, 256, 1024):
        grid = unit_interval(cells)
        half = MeasurableSet.from_box(grid, [(0.0, 0.5)])
        assert half.measure == pytest.approx(0.5, abs=0)


def test_mask_rejects_exterior_true_cells():
    grid = Grid(Domain.disk(0.5), (64, 64))
    bad = np.ones(grid.cells, dtype=bool)
    with pytest.raises(ConfigError):
        MeasurableSet(grid, bad)
    clipped = MeasurableSet.from_mask(grid, bad)
    assert clipped.measure == pytest.approx(math.pi * 0.25, rel=0.01)


# ---------------------------------------------------------------------------
# Covering
# ---------------------------------------------------------------------------

def coverage_holds(domain, grid, balls):
    pts = grid.points[grid.interior]
    covered = np.zeros(len(pts), dtype=bool)
    for b in balls:
        covered |= domain.distance(pts, np.asarray(b.center)) <= b.radius + 1e-12
    return bool(np.all(covered))


def test_cover_unit_square_r_half():
    domain = Domain.box([1.0, 1.0])
    balls = cover_domain(domain, 0.5)
    assert len(balls) == 9
    spacing = abs(balls[1].center[1] - balls[0].center[1])
    assert spacing == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert coverage_holds(domain, Grid(domain, (256, 256)), balls)


def test_cover_unit_interval_large_radius():
    domain = Domain.box([1.0])
    balls = cover_domain(domain, 1.0)
    assert len(balls) <= 2
    assert coverage_holds(domain, Grid(domain, (1024,)), balls)


def test_cover_unit_square_r_tenth():
    domain = Domain.box([1.0, 1.0])
    balls = cover_domain(domain, 0.1)
    assert len(balls) <= 225
    assert coverage_holds(domain, Grid(domain, (256, 256)), balls)


@pytest.mark.parametrize(
    "domain", [Domain.box([1.0]), Domain.box([1.0, 0.5]), Domain.disk(0.5), Domain.torus([1.0, 1.0])]
)
def test_cover_property_random_radii(domain):
    rng = np.random.default_rng(5)
    grid = Grid.default(domain) if domain.dimension == 1 else Grid(
        domain, tuple(max(1, round(128 * e / min(domain.extent))) for e in domain.extent)
    )
    for _ in range(6):
        r = float(rng.uniform(0.05, 0.8))
        balls = cover_domain(domain, r)
        assert len(balls) <= cover_count_bound(domain, r)
        assert coverage_holds(domain, grid, balls)
        assert bool(np.all(domain.contains(np.array([b.center for b in balls]))))


# ---------------------------------------------------------------------------
# Densest ball (pigeonhole)
# ---------------------------------------------------------------------------

def test_densest_ball_left_half_example():
    grid = unit_interval(1024)
    e = MeasurableSet.from_box(grid, [(0.0, 0.5)])
    cover = [Ball.at([c], 0.25) for c in (0.125, 0.375, 0.625, 0.875)]
    ball, inter = densest_ball(e, cover)

    # oracle: enumerate all four intersections by cell counting
    counts = [intersection_cells(e, b) for b in cover]
    assert counts == [384, 384, 128, 0]
    assert ball.center == (0.125,)
    assert inter == pytest.approx(0.375, abs=0)
    assert inter >= e.measure / len(cover)


def test_densest_ball_full_domain_ties_to_first():
    # on the torus every cover ball holds the same cell count, so the
    # lowest-index tie-break decides
    grid = Grid(Domain.torus([1.0]), (256,))
    e = MeasurableSet.full(grid)
    cover = cover_domain(grid.domain, 0.3)
    counts = [intersection_cells(e, b) for b in cover]
    assert len(set(counts)) == 1
    ball, inter = densest_ball(e, cover)
    assert ball == cover[0]
    assert inter == pytest.approx(counts[0] * grid.h, abs=0)


def test_densest_ball_single_cell():
    grid = unit_interval(256)
    mask = np.zeros(grid.cells, dtype=bool)
    mask[200] = True
    e = MeasurableSet(grid, mask)
    cover = [Ball.at([c], 0.25) for c in (0.125, 0.375, 0.625, 0.875)]
    ball, inter = densest_ball(e, cover)
    target = grid.axis_centers[0][200]
    assert abs(ball.center[0] - target) <= 0.25
    assert inter == pytest.approx(grid.h, abs=0)


def test_densest_ball_rejects_empty():
    grid = unit_interval(64)
    with pytest.raises(InfeasibleError):
        densest_ball(MeasurableSet.empty(grid), [Ball.at([0.5], 0.5)])


@pytest.mark.parametrize("dim", [1, 2])
def test_pigeonhole_exact_random_masks(dim):
    rng = np.random.default_rng(11)
    domain = Domain.box([1.0] * dim)
    grid = Grid(domain, (512,) if dim == 1 else (64, 64))
    for _ in range(25):
        frac = float(rng.uniform(0.02, 0.6))
        e = MeasurableSet.random(grid, frac, rng)
        r = float(rng.uniform(0.08, 0.5))
        cover = cover_domain(domain, r)
        _, inter = densest_ball(e, cover)
        # exact statement in integer cell counts
        best_cells = round(inter / grid.h ** dim)
        assert best_cells * len(cover) >= e.cell_count


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

def test_chain_degenerate():
    domain = Domain.box([1.0])
    chain = chain_of_balls(domain, np.array([0.3]), np.array([0.3]), 0.5)
    assert len(chain) == 1


def test_chain_unit_interval():
    domain = Domain.box([1.0])
    chain = chain_of_balls(domain, np.array([0.0]), np.array([1.0]), 0.5)
    assert len(chain) - 1 == 4
    steps = [abs(chain[i + 1][0] - chain[i][0]) for i in range(4)]
    assert all(s == pytest.approx(0.25, rel=1e-12) for s in steps)


def test_chain_square_diagonal():
    domain = Domain.box([1.0, 1.0])
    chain = chain_of_balls(domain, np.array([0.0, 0.0]), np.array([1.0, 1.0]), 0.5)
    assert len(chain) - 1 <= 6


@pytest.mark.parametrize(
    "domain", [Domain.box([1.0]), Domain.disk(0.5), Domain.torus([1.0, 1.0])]
)
def test_chain_validity_property(domain):
    rng = np.random.default_rng(3)
    for _ in range(20):
        r = float(rng.uniform(0.05, 0.6))
        while True:
            p = rng.uniform(0, 1, size=domain.dimension) * np.asarray(domain.extent)
            q = rng.uniform(0, 1, size=domain.dimension) * np.asarray(domain.extent)
            if bool(domain.contains(p)) and bool(domain.contains(q)):
                break
        chain = chain_of_balls(domain, p, q, r)
        pts = np.stack(chain)
        assert bool(np.all(domain.contains(pts)))
        dist = float(domain.distance(p, q))
        k = len(chain) - 1
        for i in range(k):
            assert float(domain.distance(chain[i], chain[i + 1])) <= r / 2 + 1e-12
        assert k * (r / 2.0) >= dist - 1e-12


# ---------------------------------------------------------------------------
# Ray selection and segment traces
# ---------------------------------------------------------------------------

def test_best_ray_1d_one_sided():
    grid = unit_interval(1024)
    e = MeasurableSet.from_box(grid, [(0.0, 0.25)])
    ball = Ball.at([0.25], 0.25)
    seg, trace = best_ray_interval(ball, e, np.array([0.0]))
    assert seg.direction == (1.0,)
    assert trace.total == pytest.approx(0.25, abs=2 * grid.h)


def test_best_ray_full_ball_symmetric():
    grid = unit_square(512)
    r = 0.2
    ball = Ball.at([0.5, 0.5], r)
    e = MeasurableSet.from_ball(grid, ball)
    seg, trace = best_ray_interval(ball, e, np.array([0.5, 0.5]))
    # rotational symmetry: every direction is optimal up to grid error
    assert trace.total == pytest.approx(r, abs=3 * grid.h)


def test_best_ray_exact_tie_takes_first_direction():
    grid = Grid(Domain.torus([1.0]), (1024,))
    e = MeasurableSet.full(grid)
    ball = Ball.at([0.5], 0.2)
    seg, trace = best_ray_interval(ball, e, np.array([0.5]))
    assert seg.direction == (1.0,)
    assert trace.total == pytest.approx(0.2, abs=2 * grid.h)


def test_best_ray_horizontal_strip():
    grid = unit_square(512)
    r = 0.2
    ball = Ball.at([0.5, 0.5], r)
    e = MeasurableSet.from_box(grid, [(0.0, 1.0), (0.5 - r / 8, 0.5 + r / 8)])
    seg, trace = best_ray_interval(ball, e, np.array([0.5, 0.5]))
    assert abs(seg.direction[0]) == pytest.approx(1.0, abs=1e-12)
    assert trace.total >= r - 3 * grid.h


def test_best_ray_origin_outside_ball():
    # the origin may sit up to 2r from the centre; the trace must then start
    # at the ball entry, not at the origin
    grid = unit_interval(1024)
    e = MeasurableSet.full(grid)
    ball = Ball.at([0.5], 0.1)
    seg, trace = best_ray_interval(ball, e, np.array([0.35]))
    assert seg.direction == (1.0,)
    assert seg.origin[0] == pytest.approx(0.4, abs=1e-12)
    # budget 2r = 0.2 from w reaches 0.55; the ball spans up to 0.6
    assert trace.total == pytest.approx(0.15, abs=2 * grid.h)


def test_best_ray_rejects_all_zero():
    grid = unit_interval(128)
    e = MeasurableSet.from_box(grid, [(0.9, 1.0)])
    ball = Ball.at([0.25], 0.2)
    with pytest.raises(ResolutionError):
        best_ray_interval(ball, e, np.array([0.25]))


def test_restrict_full_and_empty():
    grid = unit_interval(512)
    seg = Segment((0.1,), (1.0,), 0.5)
    full = restrict_to_segment(MeasurableSet.full(grid), seg)
    assert len(full.intervals) == 1
    assert full.total == pytest.approx(0.5, abs=1e-12)
    empty = restrict_to_segment(MeasurableSet.empty(grid), seg)
    assert empty.is_empty


def test_restrict_two_cells_1d():
    grid = unit_interval(1024)
    mask = np.zeros(grid.cells, dtype=bool)
    mask[[100, 300]] = True
    e = MeasurableSet(grid, mask)
    seg = Segment((0.0,), (1.0,), 0.5)
    trace = restrict_to_segment(e, seg)
    h = grid.h
    assert len(trace.intervals) == 2
    a, b = trace.intervals
    assert a == pytest.approx((100 * h, 101 * h), abs=1e-12)
    assert b == pytest.approx((300 * h, 301 * h), abs=1e-12)


def test_restrict_diagonal_chord_matches_clip_oracle():
    # analytic oracle: Liang-Barsky clip of the segment to each true cell box
    grid = unit_square(128)
    h = grid.h
    cells = [(40, 52), (41, 52), (70, 30)]
    mask = np.zeros(grid.cells, dtype=bool)
    for i, j in cells:
        mask[i, j] = True
    e = MeasurableSet(grid, mask)
    w = np.array([0.11, 0.13])
    ang = 0.31
    mu = np.array([math.cos(ang), math.sin(ang)])
    seg = Segment(tuple(w), tuple(mu), 0.9)

    def clip(i, j):
        lo = np.array([i * h, j * h])
        hi = lo + h
        t0, t1 = 0.0, seg.t_max
        for ax in range(2):
            if abs(mu[ax]) < 1e-15:
                if not (lo[ax] <= w[ax] <= hi[ax]):
                    return None
                continue
            ta = (lo[ax] - w[ax]) / mu[ax]
            tb = (hi[ax] - w[ax]) / mu[ax]
            ta, tb = min(ta, tb), max(ta, tb)
            t0, t1 = max(t0, ta), min(t1, tb)
        return (t0, t1) if t1 > t0 else None

    expected = sum(b - a for ab in map(lambda c: clip(*c), cells) if ab for a, b in [ab])
    trace = restrict_to_segment(e, seg)
    assert trace.total == pytest.approx(expected, abs=1e-10)


def test_two_direction_decomposition_1d():
    # the +1 and -1 traces from w partition B ∩ E up to one grid cell
    rng = np.random.default_rng(7)
    grid = unit_interval(1024)
    domain = grid.domain
    for _ in range(10):
        e = MeasurableSet.random(grid, float(rng.uniform(0.05, 0.5)), rng)
        x = float(rng.uniform(0.3, 0.7))
        r = float(rng.uniform(0.05, 0.25))
        ball = Ball.at([x], r)
        w = np.array([x + float(rng.uniform(-r / 10, r / 10))])
        inter = intersection_cells(e, ball) * grid.h
        if inter == 0.0:
            continue
        totals = []
        for mu in ([1.0], [-1.0]):
            t_ball = r + abs(w[0] - x)
            t_dom = (1.0 - w[0]) if mu[0] > 0 else w[0]
            seg = Segment(tuple(w), tuple(mu), max(0.0, min(2 * r, t_ball, t_dom)))
            in_ball = restrict_to_segment(MeasurableSet.from_ball(grid, ball), seg)
            both = restrict_to_segment(e, seg)
            # intersect the two traces by brute parameter sampling
            ts = np.linspace(0, seg.t_max, 4096)
            inb = np.zeros(len(ts), dtype=bool)
            ine = np.zeros(len(ts), dtype=bool)
            for a, b in in_ball.intervals:
                inb |= (ts >= a) & (ts <= b)
            for a, b in both.intervals:
                ine |= (ts >= a) & (ts <= b)
            totals.append(np.count_nonzero(inb & ine) / 4096 * seg.t_max)
        assert sum(totals) == pytest.approx(inter, abs=3 * grid.h)


def test_trace_total_reversal_invariance():
    rng = np.random.default_rng(13)
    grid = unit_interval(1024)
    for _ in range(10):
        e = MeasurableSet.random(grid, 0.3, rng)
        a = float(rng.uniform(0.0, 0.4))
        t_max = float(rng.uniform(0.1, 0.5))
        fwd = Segment((a,), (1.0,), t_max)
        bwd = Segment((a + t_max,), (-1.0,), t_max)
        tf = restrict_to_segment(e, fwd).total
        tb = restrict_to_segment(e, bwd).total
        assert tf == pytest.approx(tb, abs=grid.h)


def test_interval_set_invariants():
    with pytest.raises(ConfigError):
        IntervalSet(((0.5, 0.2),))
    with pytest.raises(ConfigError):
        IntervalSet(((0.0, 0.3), (0.2, 0.4)))
    s = IntervalSet(((0.0, 0.25), (0.75, 1.0)))
    assert s.total == pytest.approx(0.5)
    assert s.inf == 0.0
    assert s.first_point_at_or_after(0.3) == 0.75
    assert s.first_point_at_or_after(0.1) == 0.1
    assert s.first_point_at_or_after(1.1) is None


# ---------------------------------------------------------------------------
# Torus metric
# ---------------------------------------------------------------------------

def test_torus_periodic_distance():
    t = Domain.torus([1.0])
    assert float(t.distance(np.array([0.05]), np.array([0.95]))) == pytest.approx(0.1)
    assert t.diameter == pytest.approx(0.5)


def test_torus_ray_wraps():
    domain = Domain.torus([1.0])
    grid = Grid(domain, (1024,))
    e = MeasurableSet.full(grid)
    ball = Ball.at([0.05], 0.2)
    seg, trace = best_ray_interval(ball, e, np.array([0.05]))
    assert trace.total == pytest.approx(0.2, abs=3 * grid.h)


# ---------------------------------------------------------------------------
# Mask raster round trip
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("dim", [1, 2])
def test_mask_raster_roundtrip(tmp_path, dim):
    rng = np.random.default_rng(2)
    domain = Domain.box([1.0] * dim)
    grid = Grid(domain, (128,) if dim == 1 else (32, 32))
    e = MeasurableSet.random(grid, 0.25, rng)
    path = tmp_path / "mask.txt"
    write_mask_raster(path, e)
    cells, h, mask = read_mask_raster(path)
    back = attach_mask(grid, cells, h, mask)
    assert np.array_equal(back.mask, e.mask)
    assert back.measure == e.measure
