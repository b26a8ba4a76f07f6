"""Monitors for the a priori estimates: energy, invariant ball, stability.

Each monitor either judges a trajectory against its inequality or
declines with RegimeViolation when the smallness precondition fails —
it must never silently judge out-of-regime data.
"""

import dataclasses

import numpy as np
import pytest

from reproflow.galerkin import GalerkinState, solve
from reproflow.verification import (
    RegimeViolation,
    calibrate_slack,
    check_energy_inequality,
    check_h1_bound,
    poincare_constant,
    rate_identity_residual,
    stability_experiment,
    uniqueness_probe,
)

from .conftest import taylor_green


@pytest.fixture(scope="module")
def bump_traj(config32, lift32, basis32, tensors32):
    return solve(config32, GalerkinState(0.0, np.zeros(8)), lift32, basis32,
                 tensors=tensors32)


def test_poincare_constant(basis48):
    c = poincare_constant(basis48)
    assert c == pytest.approx(0.1383264679, rel=1e-8)
    assert c == pytest.approx(1.0 / np.sqrt(basis48.eigenvalues[0]), abs=0)


def test_energy_inequality_on_decaying_vortices(torus64, basis_t64):
    from reproflow.galerkin import SolverConfig, project_initial

    cfg = SolverConfig(nu=0.1, T=0.1, dt=1e-3, m=8, epsilon=0.4,
                       grid_kind="torus", nx=64)
    u0, _ = project_initial(taylor_green(torus64), None, basis_t64)
    traj = solve(cfg, u0, None, basis_t64)
    report = check_energy_inequality(traj, cfg.nu, poincare_constant(basis_t64))
    for line in report.lines():
        print(line)
    assert report.passed
    # no forcing: the balance should hold with a strict margin
    assert report.records[0].max_violation < -1.0


def test_energy_inequality_on_bump_run(bump_traj, basis32, lift32):
    report = check_energy_inequality(bump_traj, 1.0, poincare_constant(basis32),
                                     beta=lift32.beta, kappa=5.737261e-4)
    for line in report.lines():
        print(line)
    assert report.passed
    assert report.records[0].max_violation < 0.0


def test_zero_data_violations_are_exactly_zero(config32, basis32):
    traj = solve(config32, GalerkinState(0.0, np.zeros(8)), None, basis32)
    report = check_energy_inequality(traj, config32.nu,
                                     poincare_constant(basis32))
    rec = report.records[0]
    assert rec.max_violation == 0.0
    assert np.all(rec.lhs == 0.0) and np.all(rec.rhs == 0.0)


def test_beta_gate_refuses_to_judge(bump_traj, basis32):
    with pytest.raises(RegimeViolation):
        check_energy_inequality(bump_traj, 0.1, poincare_constant(basis32),
                                beta=0.1)


def test_rate_identity_midpoint_exact(bump_traj):
    mid = rate_identity_residual(bump_traj, where="midpoint")
    left = rate_identity_residual(bump_traj, where="left")
    print(f"rate identity residual: midpoint {mid:.3e}, left {left:.3e}")
    assert mid <= 1e-10
    assert left > 100.0 * max(mid, 1e-18)


def test_h1_ball_monitor(bump_traj):
    ok = check_h1_bound(bump_traj, m_radius=0.05)
    assert ok.passed and ok.regime["initial_in_ball"]

    tight = check_h1_bound(bump_traj, m_radius=1e-9)
    assert not tight.passed
    assert tight.regime["initial_in_ball"]  # started at zero, exited later
    assert tight.regime["sup_vnorm"] > 1e-9


def test_calibrate_slack_nonnegative(config32, lift32, basis32):
    kappa = calibrate_slack(config32, GalerkinState(0.0, np.zeros(8)),
                            lift32, basis32)
    print(f"calibrated slack rate kappa = {kappa:.6e}")
    assert 0.0 <= kappa < 1.0


def test_stability_decay(config32, lift32, basis32, tensors32):
    rng = np.random.default_rng(5)
    z = rng.standard_normal(8)
    z *= 1e-4 / np.sqrt((z**2) @ basis32.eigenvalues)
    v0 = GalerkinState(0.0, np.zeros(8))
    w0 = GalerkinState(0.0, z)
    rep = stability_experiment(config32, v0, w0, lift32, basis32,
                               tensors=tensors32, m_radius=0.05)
    print(f"max envelope ratio {rep.max_ratio:.6f}, "
          f"z: {rep.z_norms[0]:.3e} -> {rep.z_norms[-1]:.3e}")
    assert rep.passed(0.05)
    assert rep.monotone
    assert rep.z_norms[-1] < rep.z_norms[0]


def test_stability_identical_states(config32, lift32, basis32, tensors32):
    v0 = GalerkinState(0.0, np.zeros(8))
    rep = stability_experiment(config32, v0, v0.copy(), lift32, basis32,
                               tensors=tensors32, m_radius=0.05)
    assert rep.max_ratio == 0.0
    assert rep.passed()


def test_stability_ball_exit_is_regime_violation(config32, lift32, basis32,
                                                 tensors32):
    rng = np.random.default_rng(6)
    z = rng.standard_normal(8)
    z *= 1e-3 / np.sqrt((z**2) @ basis32.eigenvalues)
    with pytest.raises(RegimeViolation):
        stability_experiment(config32, GalerkinState(0.0, np.zeros(8)),
                             GalerkinState(0.0, z), lift32, basis32,
                             tensors=tensors32, m_radius=1e-6)


def test_uniqueness_probe(config32, lift32, basis32):
    assert uniqueness_probe(config32, GalerkinState(0.0, np.zeros(8)),
                            lift32, basis32)


def test_tiny_perturbation_stays_tiny(config32, lift32, basis32, tensors32):
    c0 = np.zeros(8)
    c1 = c0.copy()
    c1[0] += 1e-12
    ta = solve(config32, GalerkinState(0.0, c0), lift32, basis32,
               tensors=tensors32)
    tb = solve(config32, GalerkinState(0.0, c1), lift32, basis32,
               tensors=tensors32)
    diff = np.abs(ta.coeffs[-1] - tb.coeffs[-1]).max()
    print(f"final separation from a 1e-12 kick: {diff:.3e}")
    assert diff <= 1e-9


def test_energy_monitor_catches_injected_violation(bump_traj, basis32, lift32):
    # corrupt one state hard enough that the jump outruns the |f|^2 term:
    # the bump forcing grants the balance a right-hand side near 17, so a
    # kick on a |c|^2 ~ 5e-7 state must add factors of ~1e6 to break it
    bad = dataclasses.replace(bump_traj, coeffs=bump_traj.coeffs.copy())
    bad.coeffs[100] *= 1000.0
    report = check_energy_inequality(bad, 1.0, poincare_constant(basis32),
                                     beta=lift32.beta)
    assert not report.passed
    assert report.records[0].max_violation > 0.0
    assert int(np.argmax(report.records[0].violations)) == 99
