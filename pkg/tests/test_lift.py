"""Boundary data and the divergence-free wall lift.

The lift is exactly solenoidal by construction; what needs measuring is
how well its trace matches the wall data, how fast the band smallness
measure beta shrinks with eps, and that the advective smallness it is
built for actually shows up in samples.
"""

import numpy as np
import pytest

from reproflow.fields import Grid, divergence, norm_l2, tangential_trace
from reproflow.lift import (
    BoundaryData,
    InvalidBoundaryData,
    boundary_profile,
    build_lift,
    build_lift_unsteady,
    check_initial_compatibility,
    compute_beta,
    compute_forcing,
    cutoff_profile,
    delta_of,
    load_boundary_table,
    verify_smallness,
)

EPS_SWEEP = (0.4, 0.2, 0.1, 0.05)

# measured on this construction at amplitude 1, eps = 0.4, seed 0; the
# ratio/beta quotient shrinks under grid refinement (1.7e-6 at nx = 64,
# 4.7e-8 at nx = 256), so this bound is a one-sided regression guard
SMALLNESS_REG = 5e-6


def test_cutoff_profile_shape():
    eps = 0.4
    d = delta_of(eps)
    assert d == pytest.approx(np.exp(-2.5))
    r = np.array([d * d * 0.5, d * d, d * 0.999, d, 2 * d])
    th = cutoff_profile(r, eps)
    assert th[0] == 1.0 and th[1] == 1.0
    assert 0.0 < th[2] < 1.0
    assert th[3] == 0.0 and th[4] == 0.0
    # the defining slope property: |d theta / d ln r| = eps in the band
    rb = np.geomspace(d * d * 1.01, d * 0.99, 7)
    th = cutoff_profile(rb, eps)
    slopes = np.diff(th) / np.diff(np.log(rb))
    assert slopes == pytest.approx(-eps, rel=1e-12)


def test_cutoff_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        cutoff_profile(np.array([0.1]), 0.0)
    with pytest.raises(ValueError):
        cutoff_profile(np.array([0.1]), 1.5)


def test_lift_is_divergence_free_and_banded():
    for nx in (64, 128):
        grid = Grid("square", nx)
        g = boundary_profile(grid, "bottom_bump", amplitude=1.0)
        lift = build_lift(g, 0.7, grid)
        dv = np.abs(divergence(lift.G_eps).values).max()
        print(f"nx={nx}: max |div G| = {dv:.3e}")
        assert dv <= 1e-13
        # support: u-faces farther than delta + h from every wall are untouched
        (xu, yu) = grid.uface_coords()
        rho = np.minimum.reduce([xu, 1.0 - xu, yu, 1.0 - yu])
        far = rho > lift.delta + grid.h
        # the eps = 0.7 band is wide (delta ~ 0.24), so "far" is only the
        # central quarter of the domain -- but it must not be empty
        assert far.sum() > 0.8 * (1.0 - 2.0 * (lift.delta + grid.h)) ** 2 * far.size
        assert np.all(lift.G_eps.u[far] == 0.0)


def test_lift_trace_converges_to_wall_data():
    errs = []
    for nx in (64, 128):
        grid = Grid("square", nx)
        g = boundary_profile(grid, "bottom_bump", amplitude=1.0)
        lift = build_lift(g, 0.7, grid)
        tr = tangential_trace(lift.G_eps)
        worst = max(np.abs(tr[k] - g.walls[k]).max() for k in tr)
        errs.append(worst)
        print(f"nx={nx}: worst trace error {worst:.6e}")
    assert errs[0] == pytest.approx(1.842753e-3, rel=1e-3)
    assert errs[1] == pytest.approx(1.872308e-4, rel=1e-3)
    assert errs[1] < errs[0] / 4.0


def test_beta_strictly_decreasing_in_eps():
    grid = Grid("square", 64)
    g = boundary_profile(grid, "bottom_bump", amplitude=1.0)
    betas = [build_lift(g, eps, grid).beta for eps in EPS_SWEEP]
    print("beta:", [f"{b:.9e}" for b in betas])
    assert betas == pytest.approx(
        [1.618795121e-1, 1.131325113e-1, 2.382291260e-2, 8.498584256e-4], rel=1e-6)
    assert all(a > b for a, b in zip(betas, betas[1:]))


def test_beta_two_grid_agreement():
    betas = {}
    for nx in (64, 96):
        grid = Grid("square", nx)
        g = boundary_profile(grid, "bottom_bump", amplitude=1.0)
        betas[nx] = build_lift(g, 0.4, grid).beta
    rel = abs(betas[96] - betas[64]) / betas[64]
    print(f"beta(0.4): nx64 {betas[64]:.6e}, nx96 {betas[96]:.6e}, rel {rel:.4%}")
    assert rel < 0.02


def test_beta_recompute_idempotent(lift48):
    assert compute_beta(lift48) == lift48.beta


def test_smallness_ratio_non_increasing_and_small():
    grid = Grid("square", 64)
    g = boundary_profile(grid, "bottom_bump", amplitude=1.0)
    ratios, betas = [], []
    for eps in EPS_SWEEP:
        lift = build_lift(g, eps, grid)
        ratios.append(verify_smallness(lift, samples=100, seed=0))
        betas.append(lift.beta)
    print("smallness ratios:", [f"{r:.3e}" for r in ratios])
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))
    assert ratios[0] == pytest.approx(2.808089e-7, rel=1e-3)
    # |b(v, G, v)| <= const * beta * ||v||^2 with a tiny constant
    assert ratios[0] <= SMALLNESS_REG * betas[0]


def test_forcing_scales_linearly_at_small_amplitude():
    grid = Grid("square", 64)
    norms = []
    for amp in (0.01, 0.02):
        g = boundary_profile(grid, "bottom_bump", amplitude=amp)
        lift = build_lift(g, 0.4, grid)
        norms.append(norm_l2(compute_forcing(lift, 1.0)))
    ratio = norms[1] / norms[0]
    print(f"|f(2a)| / |f(a)| = {ratio:.6f}")
    assert ratio == pytest.approx(2.0, abs=1e-3)


def test_counter_walls_profile():
    grid = Grid("square", 48)
    g = boundary_profile(grid, "counter_walls", amplitude=0.5)
    assert np.array_equal(g.walls["bottom"], g.walls["top"])
    assert g.walls["left"].max() == 0.0
    lift = build_lift(g, 0.4, grid)
    assert np.abs(divergence(lift.G_eps).values).max() <= 1e-13
    # the eps = 0.4 band is ~2 cells at nx = 48, so the trace is rough
    # (~11% here); accuracy needs band >> h, see the eps = 0.7 test
    tr = tangential_trace(lift.G_eps)
    assert np.abs(tr["top"] - g.walls["top"]).max() < 0.15 * g.max_abs()


def test_unknown_profile_rejected():
    grid = Grid("square", 16)
    with pytest.raises(InvalidBoundaryData):
        boundary_profile(grid, "sideways_gust")


def test_corner_margin_enforced():
    grid = Grid("square", 32)
    bad = np.zeros(33)
    bad[2] = 1.0  # two cells from the corner
    with pytest.raises(InvalidBoundaryData):
        BoundaryData(grid, walls={"bottom": bad})


def test_wall_array_shape_and_finiteness():
    grid = Grid("square", 32)
    with pytest.raises(InvalidBoundaryData):
        BoundaryData(grid, walls={"bottom": np.zeros(12)})
    bad = np.zeros(33)
    bad[16] = np.nan
    with pytest.raises(InvalidBoundaryData):
        BoundaryData(grid, walls={"bottom": bad})
    with pytest.raises(InvalidBoundaryData):
        BoundaryData(grid, walls={"ceiling": np.zeros(33)})


def test_boundary_table_loader(tmp_path):
    grid = Grid("square", 32)
    # a tent profile on the bottom wall, arclength in [0, 1)
    path = tmp_path / "walls.txt"
    path.write_text("# s value\n0.0 0\n0.3 0.0\n0.5 0.2\n0.7 0.0\n3.9 0\n")
    g = load_boundary_table(grid, str(path))
    assert g.walls["bottom"].max() == pytest.approx(0.2, abs=1e-12)
    assert np.all(g.walls["top"] == 0.0)
    lift = build_lift(g, 0.4, grid)
    assert np.abs(divergence(lift.G_eps).values).max() <= 1e-13

    bad = tmp_path / "bad.txt"
    bad.write_text("0.0 1.0 2.0\n")
    with pytest.raises(InvalidBoundaryData):
        load_boundary_table(grid, str(bad))
    oor = tmp_path / "oor.txt"
    oor.write_text("4.5 1.0\n")
    with pytest.raises(InvalidBoundaryData):
        load_boundary_table(grid, str(oor))


def test_unsteady_lift_time_derivative():
    grid = Grid("square", 32)
    base = boundary_profile(grid, "bottom_bump", amplitude=1.0).walls["bottom"]

    def walls_fn(t):
        return {"bottom": base * (1.0 + 0.5 * t)}

    g = BoundaryData(grid, walls_fn=walls_fn)
    assert g.time_dependent and g.walls is None
    times = np.linspace(0.0, 1.0, 11)
    lift = build_lift_unsteady(g, 0.4, grid, times)
    assert not lift.steady
    assert len(lift.G_eps) == len(times)
    # data is linear in t, so G scales linearly and dG/dt is (base lift)/2
    g0 = lift.G_eps[0]
    for k, t in enumerate(times):
        want = 1.0 + 0.5 * t
        got = norm_l2(lift.G_eps[k]) / norm_l2(g0)
        assert got == pytest.approx(want, rel=1e-12)
    half = norm_l2(lift.dGdt[5]) / norm_l2(g0)
    assert half == pytest.approx(0.5, rel=1e-10)


def test_unsteady_needs_enough_samples():
    grid = Grid("square", 16)
    g = BoundaryData(grid, walls_fn=lambda t: {"bottom": np.zeros(17)})
    with pytest.raises(InvalidBoundaryData):
        build_lift_unsteady(g, 0.4, grid, [0.0, 1.0])


def test_initial_compatibility_check():
    grid = Grid("square", 64)
    base = boundary_profile(grid, "bottom_bump", amplitude=1.0).walls["bottom"]
    g = BoundaryData(grid, walls_fn=lambda t: {"bottom": base * (1.0 + t)})
    # a wide-band lift carries the data's trace accurately enough to pass
    lift0 = build_lift(BoundaryData(grid, walls={"bottom": base}), 0.7, grid)
    worst = check_initial_compatibility(g, lift0.G_eps, tol=0.05)
    assert worst < 0.05
    from reproflow.fields import VectorField
    with pytest.raises(InvalidBoundaryData):
        check_initial_compatibility(g, VectorField.zeros(grid), tol=1e-8)
