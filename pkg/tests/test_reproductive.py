"""The solution map L(u0) = u(T), its contraction, and the fixed point."""

import warnings

import numpy as np
import pytest

from reproflow.galerkin import GalerkinState, SolverConfig, Tensors, solve
from reproflow.reproductive import (
    BallExit,
    NonConvergence,
    SmallnessBudget,
    boundary_norm_proxy,
    find_reproductive,
    map_L,
    measure_contraction,
    validate_budget,
)
from reproflow.stokes import compute_eigenbasis
from reproflow.verification import RegimeViolation

from .conftest import BUMP_AMP


def test_boundary_norm_proxy_frozen(bump48):
    g = boundary_norm_proxy(bump48)
    print(f"wall-data norm proxy at amplitude {BUMP_AMP}: {g:.8e}")
    assert g == pytest.approx(3.50480501e-2, rel=1e-6)


def test_budget_measurements_and_satisfaction(bump48, lift48):
    budget = validate_budget(bump48, lift48, nu=1.0)
    for line in budget.lines():
        print(line)
    assert budget.satisfied
    assert budget.g_norm == pytest.approx(3.50480501e-2, rel=1e-6)
    assert budget.f_norm == pytest.approx(9.69904179e-1, rel=1e-6)
    assert budget.beta == pytest.approx(1.61254578e-3, rel=1e-6)


def test_budget_rejects_loud_data(square48):
    from reproflow.lift import boundary_profile, build_lift

    g = boundary_profile(square48, "bottom_bump", amplitude=5.0)
    lift = build_lift(g, 0.4, square48)
    budget = validate_budget(g, lift, nu=1.0)
    assert not budget.satisfied


def test_map_l_matches_linear_decay(basis32):
    # with the quadratic and coupling tensors removed, the period map is
    # mode-wise e^(-nu lam T) exactly; this pins the endpoint wiring.
    # (With the quadratic term on, low-mode products leak ~e^(-2 lam_1 T)
    # into deep modes whose own content is far below that — a relative
    # mode-wise comparison would measure the leak, not the map.)
    cfg = SolverConfig(nu=1.0, T=1.0, dt=1e-3, m=6, epsilon=0.4,
                       grid_kind="square", nx=32)
    basis6 = basis32.truncate(6)
    lam = basis6.eigenvalues
    linear = Tensors(B=np.zeros((6, 6, 6)), D=np.zeros((6, 6)),
                     E=np.zeros((6, 6)), F=np.zeros(6), lam=lam)
    c0 = 1e-6 * np.ones(6)
    out = map_L(GalerkinState(0.0, c0), cfg, None, basis6, tensors=linear)
    want = c0 * np.exp(-lam * 1.0)
    rel = np.abs(out.c / want - 1.0).max()
    print(f"map_L linear-decay relative deviation {rel:.3e}")
    assert rel <= 1e-10


def test_map_l_fixes_zero(config32, basis32):
    out = map_L(GalerkinState(0.0, np.zeros(8)), config32, None, basis32)
    assert np.all(out.c == 0.0)


def test_map_l_warns_on_ball_exit(config32, lift32, basis32, tensors32):
    rng = np.random.default_rng(3)
    c = rng.standard_normal(8)
    c *= 0.01 / np.sqrt((c**2) @ basis32.eigenvalues)
    with pytest.warns(BallExit):
        map_L(GalerkinState(0.0, c), config32, lift32, basis32,
              tensors=tensors32, m_radius=1e-6)


def test_contraction_below_envelope(config32, lift32, basis32, tensors32):
    budget = validate_budget(lift32.boundary, lift32, nu=1.0)
    report = measure_contraction(config32, lift32, basis32, pairs=3, seed=1,
                                 budget=budget, tensors=tensors32)
    print(f"ratios {[f'{r:.3e}' for r in report.ratios]} "
          f"vs envelope {report.envelope:.6f}")
    assert report.envelope == pytest.approx(np.exp(-config32.nu * config32.T))
    assert report.max_ratio <= report.envelope * 1.1
    assert report.passed(0.1)


def test_contraction_regime_gate(config32, lift32, basis32, tensors32):
    bad = SmallnessBudget(alpha=1e-9, k_force=1e-9, m_radius=0.05,
                          g_norm=1.0, f_norm=1.0, beta=0.0)
    with pytest.raises(RegimeViolation):
        measure_contraction(config32, lift32, basis32, pairs=1, seed=0,
                            budget=bad, tensors=tensors32)


def test_find_reproductive_converges(config32, lift32, basis32, tensors32):
    report = find_reproductive(config32, lift32, basis32, tol=1e-10,
                               tensors=tensors32, m_radius=0.05)
    print(f"residuals {[f'{r:.3e}' for r in report.residuals]}, "
          f"converged in {report.n_iterations}")
    assert report.converged
    assert report.l2_closure <= 1e-9
    env = np.exp(-config32.nu * config32.T)
    assert all(r <= env * 1.1 for r in report.ratios)

    # the returned datum really is reproductive: one more period closes
    traj = solve(config32, report.state.copy(), lift32, basis32,
                 tensors=tensors32)
    again = np.linalg.norm(traj.coeffs[-1] - report.state.c)
    print(f"re-verified closure {again:.3e}")
    assert again <= 1e-9
    assert report.v0 is not None


def test_reproductive_start_independence(config32, lift32, basis32, tensors32):
    rng = np.random.default_rng(8)
    c = rng.standard_normal(8)
    c *= 0.02 / np.sqrt((c**2) @ basis32.eigenvalues)
    a = find_reproductive(config32, lift32, basis32, tensors=tensors32,
                          m_radius=0.05)
    b = find_reproductive(config32, lift32, basis32,
                          u0_init=GalerkinState(0.0, c), tensors=tensors32,
                          m_radius=0.05)
    dev = np.abs(a.state.c - b.state.c).max()
    print(f"fixed point from two starts differs by {dev:.3e}")
    assert dev <= 1e-12


def test_zero_data_fixed_point_is_rest(config32, basis32):
    report = find_reproductive(config32, None, basis32)
    assert report.converged
    assert report.residuals == [0.0]
    assert np.all(report.state.c == 0.0)


def test_nonconvergence_reports_partial_residuals(config32, lift32, basis32,
                                                  tensors32):
    with pytest.raises(NonConvergence) as info:
        find_reproductive(config32, lift32, basis32, tol=1e-30, max_iter=1,
                          tensors=tensors32, m_radius=0.05)
    assert len(info.value.residuals) >= 1
    assert info.value.residuals[0] > 1e-30


def test_contraction_skips_degenerate_draws(config32, lift32, basis32,
                                            tensors32):
    # seed chosen arbitrarily; the report must carry usable pairs
    report = measure_contraction(config32, lift32, basis32, pairs=2, seed=7,
                                 tensors=tensors32)
    assert len(report.ratios) == 2
    assert all(np.isfinite(r) for r in report.ratios)
