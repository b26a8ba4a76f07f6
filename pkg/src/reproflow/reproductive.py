"""Period-map machinery: contraction measurement and reproductive data.

The period map L sends an initial coefficient state to the state at
t = T under the configured flow.  For small data the map contracts at
rate exp(-nu T) in the V-norm, so Picard iteration u_{k+1} = L(u_k)
converges geometrically to the unique datum with v(T) = v(0); the
reconstructed flow started there is reproductive.

Smallness is enforced through an explicit budget (bound on the wall
data, on the lift forcing, and a ball radius for the state) that is
*measured* against the run, never assumed.  The budget numbers for the
standard fixture are empirical: the underlying constants are not
computable from first principles, so they are calibrated once per
grid / viscosity and stored here (see tools/calibrate_regime.py).
"""

import dataclasses
import math
import warnings

import numpy as np

from .galerkin import GalerkinState, assemble_tensors, solve
from .lift import compute_beta, compute_forcing
from .fields import inner_l2
from .verification import RegimeViolation


class NonConvergence(RuntimeError):
    """Picard iteration missed the tolerance; carries the residual history."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


class BallExit(UserWarning):
    """The trajectory left the smallness ball B_M (monitored, not fatal)."""


# Calibrated for the standard wall-bump fixture: square, nx = 48, m = 32,
# nu = 1, epsilon = 0.4, data amplitude 1e-2.  Measured there (see
# tools/calibrate_regime.py): wall-data norm 3.5048e-2, forcing norm
# 9.6990e-1, attractor V-norm 1.4041e-2, and radius-0.05 starts never
# leave the ball.  The bounds below carry ~40% headroom on those numbers.
DEFAULT_BUDGET_FIXTURE = {
    "alpha": 0.05,
    "k_force": 1.5,
    "m_radius": 0.05,
}


@dataclasses.dataclass
class SmallnessBudget:
    """Bounds the small-data regime is calibrated to, plus the measurements.

    alpha bounds the wall-data norm proxy, k_force the L2 norm of the
    lift forcing, m_radius the V-norm ball the state must stay in.  The
    measured fields are filled in by validate_budget.
    """

    alpha: float
    k_force: float
    m_radius: float
    g_norm: float = None
    f_norm: float = None
    beta: float = None

    @property
    def satisfied(self):
        if self.g_norm is None or self.f_norm is None:
            return False
        return self.g_norm <= self.alpha and self.f_norm <= self.k_force

    def lines(self):
        yes = {True: "within", False: "EXCEEDS"}
        return [
            f"wall-data norm {self.g_norm:.6e} {yes[self.g_norm <= self.alpha]} "
            f"alpha = {self.alpha:.3e}",
            f"forcing norm {self.f_norm:.6e} {yes[self.f_norm <= self.k_force]} "
            f"K = {self.k_force:.3e}",
            f"ball radius M = {self.m_radius:.3e} (beta = {self.beta:.3e})",
        ]


@dataclasses.dataclass
class FixedPointReport:
    residuals: list
    converged: bool
    state: GalerkinState
    l2_closure: float = None
    v0: object = None

    @property
    def ratios(self):
        r = self.residuals
        return [r[k + 1] / r[k] for k in range(len(r) - 1) if r[k] > 0]

    @property
    def n_iterations(self):
        return len(self.residuals)


def boundary_norm_proxy(boundary):
    """Computable stand-in for the smoothness norm of the wall data.

    Square root of the arclength integral of g^2 plus the square root
    of the arclength integral of (dg/ds)^2, each wall integrated by the
    trapezoid rule and the derivative taken by centered differences.
    Only the role as a smallness dial matters; any fixed equivalent
    norm would do.
    """
    walls = boundary.at(0.0).walls if boundary.walls is None else boundary.walls
    h = boundary.grid.h
    sq = 0.0
    dsq = 0.0
    for arr in walls.values():
        sq += h * np.trapezoid(arr**2)
        dg = np.gradient(arr, h)
        dsq += h * np.trapezoid(dg**2)
    return math.sqrt(sq) + math.sqrt(dsq)


def validate_budget(boundary, lift, nu, budget=None):
    """Measure the run's data against the calibrated smallness budget.

    Report-only: fills the measured norms into the budget and returns
    it; callers that need enforcement check `budget.satisfied` (the
    contraction measurement does).
    """
    if budget is None:
        budget = SmallnessBudget(**DEFAULT_BUDGET_FIXTURE)
    if lift.f_eps is None:
        compute_forcing(lift, nu)
    if lift.beta is None:
        compute_beta(lift)
    budget.g_norm = boundary_norm_proxy(boundary)
    budget.f_norm = math.sqrt(inner_l2(lift.f_eps, lift.f_eps))
    budget.beta = lift.beta
    return budget


def _vnorm(c, lam):
    return float(np.sqrt(np.maximum((c**2) @ lam, 0.0)))


def map_L(u0, config, lift, basis, tensors=None, m_radius=None):
    """The period map: coefficient state at t = T of the solve from u0.

    Warns (BallExit) when the trajectory's sup V-norm leaves the ball
    of radius m_radius; the warning carries the measured supremum.
    """
    if tensors is None:
        tensors = assemble_tensors(basis, lift, nu=config.nu)
    traj = solve(config, u0, lift, basis, tensors=tensors)
    if m_radius is not None:
        sup = float(np.sqrt(traj.h1sq.max()))
        if sup > m_radius:
            warnings.warn(BallExit(
                f"sup_t ||u(t)|| = {sup:.6e} left the ball M = {m_radius:.6e}"))
    return traj.state(traj.n_steps)


@dataclasses.dataclass
class ContractionReport:
    ratios: list
    max_ratio: float
    envelope: float
    pairs: int
    seed: int

    def passed(self, tol_contr=0.1):
        return self.max_ratio <= self.envelope * (1.0 + tol_contr)


def measure_contraction(config, lift, basis, pairs=5, seed=0, budget=None,
                        tensors=None):
    """Worst V-norm contraction ratio of the period map over seeded pairs.

    Draws `pairs` independent pairs of coefficient states in the ball
    B_M (uniform direction, radius up to M), applies the period map to
    both, and reports max ||L u0 - L y0|| / ||u0 - y0||.  The envelope
    the caller compares against is exp(-nu T).  Refuses to run
    (RegimeViolation) when the measured data exceeds the budget, since
    the contraction claim is only made in the small regime.
    """
    if budget is not None and not budget.satisfied:
        raise RegimeViolation(
            "data exceeds the smallness budget; contraction is not claimed: "
            + "; ".join(budget.lines()))
    if tensors is None:
        tensors = assemble_tensors(basis, lift, nu=config.nu)
    m_radius = budget.m_radius if budget is not None else None
    lam = basis.eigenvalues
    m = len(lam)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(pairs):
        pair = []
        for _ in range(2):
            c = rng.standard_normal(m)
            radius = (m_radius if m_radius is not None else 1.0) * rng.uniform(0.2, 1.0)
            c *= radius / _vnorm(c, lam)
            pair.append(GalerkinState(0.0, c))
        u0, y0 = pair
        d0 = _vnorm(u0.c - y0.c, lam)
        if d0 == 0.0:
            continue  # degenerate draw; ratio 0 excluded from the max
        lu = map_L(u0, config, lift, basis, tensors=tensors, m_radius=m_radius)
        ly = map_L(y0, config, lift, basis, tensors=tensors, m_radius=m_radius)
        ratios.append(_vnorm(lu.c - ly.c, lam) / d0)
    return ContractionReport(ratios=ratios, max_ratio=max(ratios) if ratios else 0.0,
                             envelope=math.exp(-config.nu * config.T),
                             pairs=pairs, seed=seed)


def find_reproductive(config, lift, basis, u0_init=None, tol=1e-10,
                      max_iter=None, tensors=None, m_radius=None):
    """Picard iteration on the period map to the reproductive datum.

    Iterates u_{k+1} = L(u_k) from u0_init (default 0, i.e. the flow is
    started at the lift itself) until the V-norm residual
    ||L(u_k) - u_k|| drops below tol.  The default iteration cap is the
    geometric-series prediction ceil(ln(r0/tol)/(nu T)) + 2; a cap
    violation raises NonConvergence with the residual history attached,
    which in-budget indicates a genuine regime problem.

    On success the returned report carries the fixed point, the
    re-verified residual of a fresh solve from it, and the L2 closure
    ||v(T) - v(0)|| of the reconstructed flow.
    """
    if tensors is None:
        tensors = assemble_tensors(basis, lift, nu=config.nu)
    lam = basis.eigenvalues
    m = len(lam)
    u = GalerkinState(0.0, np.zeros(m)) if u0_init is None else \
        GalerkinState(0.0, u0_init.c.copy())

    residuals = []
    cap = max_iter
    for k in range(max_iter if max_iter is not None else 10_000):
        image = map_L(u, config, lift, basis, tensors=tensors, m_radius=m_radius)
        r = _vnorm(image.c - u.c, lam)
        residuals.append(r)
        if r <= tol:
            closure = float(np.linalg.norm(image.c - u.c))
            v0 = basis.combine(u.c)
            if lift is not None:
                v0 = v0 + lift.G_eps
            return FixedPointReport(residuals=residuals, converged=True,
                                    state=u, l2_closure=closure, v0=v0)
        if cap is None and residuals:
            # geometric-series cap from the measured first residual
            cap = math.ceil(math.log(residuals[0] / tol) / (config.nu * config.T)) + 2
        if cap is not None and k + 1 >= cap:
            break
        u = GalerkinState(0.0, image.c.copy())
    raise NonConvergence(
        f"Picard iteration did not reach tol = {tol:.1e} within "
        f"{len(residuals)} iterations (last residual {residuals[-1]:.3e})",
        residuals)
