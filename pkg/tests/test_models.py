import numpy as np
import pytest

from crowdflow.averaging import Channel, DomainAverager
from crowdflow.fields import ScalarField
from crowdflow.geometry import Domain, Grid, build_grid
from crowdflow.kernels import build_stencil, make_quartic_kernel_room
from crowdflow.models import (
    ModelSpec,
    PopulationModel,
    SpeedLaw,
    build_desired_field,
    eval_speed,
    eval_velocity_evacuation,
    eval_velocity_two_population,
    grid_distance,
)


def square_with_right_exit(h=0.125, size=4.0):
    dom = Domain.rectangle(
        (0.0, size, 0.0, size), exits=[((size, 0.0), (size, size))]
    )
    grid, mask = build_grid(dom, h)
    return dom, grid, mask


def single_population_setup(h=0.125, beta=0.6, amplitude=2.0, capacity=4.0):
    _, grid, mask = square_with_right_exit(h=h)
    stencil = build_stencil(make_quartic_kernel_room(0.5), grid)
    averager = DomainAverager(grid, mask, stencil)
    desired = build_desired_field(grid, mask)
    pop = PopulationModel(
        speed_law=SpeedLaw(amplitude, capacity), desired=desired, betas=(beta,)
    )
    channels = (Channel("average", (0,), averager), Channel("gradient", (0,), averager))
    return ModelSpec(populations=[pop], channels=channels), grid, mask, averager


# ---------------------------------------------------------------- speed law


def test_speed_law_values():
    law = SpeedLaw(2.0, 4.0)
    assert law(0.0) == 2.0
    assert law(4.0) == 0.0
    assert law(5.0) == 0.0
    assert law(-1.0) == 2.0  # clamped on the left
    assert SpeedLaw(1.5, 4.5)(0.0) == 1.5
    assert np.array_equal(eval_speed(law, np.array([0.0, 4.0])), np.array([2.0, 0.0]))


def test_speed_law_monotone():
    law = SpeedLaw(2.0, 4.0)
    r = np.linspace(0.0, 6.0, 241)
    v = law(r)
    assert np.all(np.diff(v) <= 0.0)
    assert np.all(v >= 0.0)
    assert np.all(v <= 2.0)


def test_speed_law_validation():
    with pytest.raises(ValueError):
        SpeedLaw(-1.0, 4.0)
    with pytest.raises(ValueError):
        SpeedLaw(2.0, 0.0)


# ---------------------------------------------------------------- distances


def test_grid_distance_optimality():
    rng = np.random.default_rng(17)
    grid = Grid(nx=20, ny=20, dx=0.25, dy=0.25, origin=(0.0, 0.0))
    passable = rng.uniform(size=(20, 20)) > 0.25
    passable[0, 0] = True
    dist = grid_distance(grid, passable, [(0, 0, 0.0)])
    assert dist[0, 0] == 0.0
    moves = [
        (di, dj, np.hypot(di * 0.25, dj * 0.25))
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        if (di, dj) != (0, 0)
    ]
    for i in range(20):
        for j in range(20):
            if not passable[i, j] or not np.isfinite(dist[i, j]):
                continue
            if (i, j) == (0, 0):
                continue
            candidates = [
                dist[i + di, j + dj] + cost
                for di, dj, cost in moves
                if 0 <= i + di < 20 and 0 <= j + dj < 20 and passable[i + di, j + dj]
            ]
            finite = [c for c in candidates if np.isfinite(c)]
            assert finite, f"reachable cell ({i},{j}) with no finite neighbor"
            assert dist[i, j] == min(finite)
    assert np.all(np.isinf(dist[~passable]))


def test_empty_square_points_at_exit():
    _, grid, mask = square_with_right_exit(h=0.125)
    desired = build_desired_field(grid, mask)
    xm, ym = grid.center_mesh()
    deep = (xm > 0.5) & (xm < 3.0) & (ym > 1.0) & (ym < 3.0)
    assert np.max(np.abs(desired.direction.x[deep] - 1.0)) <= 0.05
    assert np.max(np.abs(desired.direction.y[deep])) <= 0.05
    mag = desired.direction.magnitude()
    nonzero = mag > 0.0
    assert np.max(np.abs(mag[nonzero] - 1.0)) <= 1e-12
    # distance decreases toward the exit
    assert desired.distance.values[0, 16] > desired.distance.values[-1, 16]


def test_direction_steers_around_obstacle():
    h = 0.0625
    dom = Domain.rectangle(
        (0.0, 4.0, 0.0, 4.0),
        exits=[((4.0, 0.0), (4.0, 4.0))],
        obstacles=[(2.0, 2.25, 1.0, 3.0)],
    )
    grid, mask = build_grid(dom, h)
    desired = build_desired_field(grid, mask)
    i = int(1.5 / h)
    j = int(1.8 / h)
    cx = grid.x_centers()[i]
    cy = grid.y_centers()[j]
    # behind the column the short way around is via its lower corner
    ref = np.array([2.0 - cx, 1.0 - cy])
    ref /= np.hypot(*ref)
    d = np.array([desired.direction.x[i, j], desired.direction.y[i, j]])
    cos_angle = float(d @ ref)
    assert cos_angle >= np.cos(np.radians(15.0))
    assert d[1] < -0.1  # genuinely turning downward


def test_discomfort_at_walls():
    _, grid, mask = square_with_right_exit(h=0.0625)
    desired = build_desired_field(grid, mask)
    mag = desired.discomfort.magnitude()
    i_mid = int(2.0 / 0.0625)
    assert abs(mag[i_mid, 0] - 0.3) <= 1e-12
    assert desired.discomfort.y[i_mid, 0] > 0.0  # pushes away from the bottom wall
    assert desired.discomfort.x[0, i_mid] > 0.0  # and away from the left wall
    # far from every wall the push is gone (range is 10 cells by default)
    assert mag[i_mid, i_mid] == 0.0
    # w combines direction and discomfort
    assert np.allclose(
        desired.w.x, desired.direction.x + desired.discomfort.x, atol=1e-14
    )


def test_unreachable_cells_rejected():
    blocked = Domain(
        bounding_box=(0.0, 4.0, 0.0, 4.0),
        inside=lambda x, y: (x > 0.0)
        & (x < 4.0)
        & (y > 0.0)
        & (y < 4.0)
        & ~((x >= 2.0) & (x <= 2.25)),
        exits=(((4.0, 0.0), (4.0, 4.0)),),
        interior_sphere_radius=0.1,
    )
    grid, mask = build_grid(blocked, 0.0625)
    with pytest.raises(ValueError):
        build_desired_field(grid, mask)


# ---------------------------------------------------------------- velocities


def test_velocity_zero_density_follows_w():
    spec, grid, mask, averager = single_population_setup()
    rho = ScalarField.zeros(grid)
    from crowdflow.averaging import assemble_nonlocal

    out = assemble_nonlocal([rho], spec.channels)
    vel = eval_velocity_evacuation(spec, rho, out)
    w = spec.populations[0].desired.w
    assert np.array_equal(vel.x, 2.0 * w.x)
    assert np.array_equal(vel.y, 2.0 * w.y)


def test_velocity_at_capacity_stalls():
    spec, grid, mask, _ = single_population_setup()
    from crowdflow.averaging import assemble_nonlocal

    vals = np.where(mask.interior, 4.0, 0.0)
    rho = ScalarField(grid, vals)
    out = assemble_nonlocal([rho], spec.channels)
    vel = eval_velocity_evacuation(spec, rho, out)
    assert np.all(vel.x == 0.0)
    assert np.all(vel.y == 0.0)


def test_velocity_respects_declared_bound():
    spec, grid, mask, _ = single_population_setup()
    from crowdflow.averaging import assemble_nonlocal

    w = spec.populations[0].desired.w
    expected_bound = 2.0 * (float(np.max(w.magnitude())) + 0.6)
    assert np.isclose(spec.velocity_bound, expected_bound, rtol=1e-12)
    rng = np.random.default_rng(23)
    for _ in range(5):
        rho = ScalarField(
            grid, np.where(mask.interior, rng.uniform(0, 5, grid.shape), 0.0)
        )
        out = assemble_nonlocal([rho], spec.channels)
        vel = eval_velocity_evacuation(spec, rho, out)
        assert np.max(vel.magnitude()) <= spec.velocity_bound + 1e-12


def two_population_setup(h=0.125, amp1=1.0, amp2=1.5, betas1=(0.2, 0.5), betas2=(0.5, 0.2)):
    dom = Domain.rectangle(
        (0.0, 4.0, 0.0, 4.0),
        exits=[((0.0, 0.0), (0.0, 4.0)), ((4.0, 0.0), (4.0, 4.0))],
    )
    grid, mask = build_grid(dom, h)
    stencil = build_stencil(make_quartic_kernel_room(0.5), grid)
    averager = DomainAverager(grid, mask, stencil)
    right = build_desired_field(grid, mask, exits=[dom.exits[1]])
    left = build_desired_field(grid, mask, exits=[dom.exits[0]])
    pops = [
        PopulationModel(SpeedLaw(amp1, 4.5), right, tuple(betas1)),
        PopulationModel(SpeedLaw(amp2, 4.5), left, tuple(betas2)),
    ]
    channels = (
        Channel("average", (0, 1), averager),
        Channel("average", (0, 1), averager),
        Channel("gradient", (0,), averager),
        Channel("gradient", (1,), averager),
        Channel("gradient", (0,), averager),
        Channel("gradient", (1,), averager),
    )
    return ModelSpec(populations=pops, channels=channels), grid, mask


def test_two_population_zero_density():
    from crowdflow.averaging import assemble_nonlocal

    spec, grid, mask = two_population_setup()
    zero = ScalarField.zeros(grid)
    out = assemble_nonlocal([zero, zero], spec.channels)
    v1, v2 = eval_velocity_two_population(spec, zero, zero, out)
    w1 = spec.populations[0].desired.w
    w2 = spec.populations[1].desired.w
    assert np.allclose(v1.x, 1.0 * w1.x, atol=1e-15)
    assert np.allclose(v2.x, 1.5 * w2.x, atol=1e-15)
    assert np.allclose(v2.y, 1.5 * w2.y, atol=1e-15)


def test_two_population_jam_at_total_capacity():
    from crowdflow.averaging import assemble_nonlocal

    spec, grid, mask = two_population_setup()
    r1 = ScalarField(grid, np.where(mask.interior, 2.25, 0.0))
    r2 = ScalarField(grid, np.where(mask.interior, 2.25, 0.0))
    out = assemble_nonlocal([r1, r2], spec.channels)
    v1, v2 = eval_velocity_two_population(spec, r1, r2, out)
    assert np.max(v1.magnitude()) <= 1e-12
    assert np.max(v2.magnitude()) <= 1e-12


def test_two_population_swap_symmetry():
    # relabeling the populations relabels the avoidance weights as well
    from crowdflow.averaging import assemble_nonlocal

    spec, grid, mask = two_population_setup(betas1=(0.1, 0.7), betas2=(0.4, 0.25))
    old1, old2 = spec.populations
    swapped = ModelSpec(
        populations=[
            PopulationModel(old2.speed_law, old2.desired, tuple(reversed(old2.betas))),
            PopulationModel(old1.speed_law, old1.desired, tuple(reversed(old1.betas))),
        ],
        channels=spec.channels,
    )
    rng = np.random.default_rng(31)
    r1 = ScalarField(grid, np.where(mask.interior, rng.uniform(0, 2, grid.shape), 0.0))
    r2 = ScalarField(grid, np.where(mask.interior, rng.uniform(0, 2, grid.shape), 0.0))
    out = assemble_nonlocal([r1, r2], spec.channels)
    v1, v2 = eval_velocity_two_population(spec, r1, r2, out)
    out_sw = assemble_nonlocal([r2, r1], swapped.channels)
    w1, w2 = eval_velocity_two_population(swapped, r2, r1, out_sw)
    assert np.allclose(v1.x, w2.x, atol=1e-13)
    assert np.allclose(v1.y, w2.y, atol=1e-13)
    assert np.allclose(v2.x, w1.x, atol=1e-13)
    assert np.allclose(v2.y, w1.y, atol=1e-13)


def test_velocity_wrong_population_count():
    from crowdflow.averaging import assemble_nonlocal

    spec, grid, mask, _ = single_population_setup()
    rho = ScalarField.zeros(grid)
    out = assemble_nonlocal([rho], spec.channels)
    with pytest.raises(ValueError):
        eval_velocity_two_population(spec, rho, rho, out)
