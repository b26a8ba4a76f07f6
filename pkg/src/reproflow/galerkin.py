"""Coefficient-space solver on the Stokes eigenbasis.

The velocity unknown is expanded in eigenmodes of the Stokes operator;
the stiff diagonal part is integrated by its exact exponential factor
and everything else (quadratic mode coupling, lift coupling, forcing)
by an explicit two-stage second-order rule on the transformed variable.
All norms the monitors need are exact sums in coefficient space.
"""

import dataclasses
import os

import numpy as np

from .fields import (
    SQUARE,
    TORUS,
    ScalarField,
    VectorField,
    advect,
    divergence,
    gradient,
    inner_h1,
    inner_l2,
    laplacian,
    norm_l2,
    tangential_trace,
)
from .lift import compute_forcing
from .stokes import LerayProjector, _torus_wavenumbers

TENSOR_CACHE_VERSION = 1


class ConfigError(ValueError):
    """Invalid solver configuration; message names the offending fields."""


class CompatibilityError(ValueError):
    """Initial velocity incompatible with the boundary data or space."""


class BlowupDetected(RuntimeError):
    def __init__(self, step_index, max_coeff):
        self.step_index = step_index
        self.max_coeff = max_coeff
        super().__init__()

    def __str__(self):
        return (f"coefficients exceeded 1e6 at step {self.step_index} "
                f"(max {self.max_coeff:.3e})")


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    nu: float
    T: float
    dt: float
    m: int
    epsilon: float = 0.4
    grid_kind: str = SQUARE
    nx: int = 48
    tol_linear: float = 1e-10
    tol_fixed_point: float = 1e-10

    def n_steps(self):
        return int(round(self.T / self.dt))


def validate_config(config):
    """Static validation; raises ConfigError naming the offending fields."""
    if config.nu <= 0:
        raise ConfigError(f"nu must be positive, got {config.nu}")
    if config.T <= 0:
        raise ConfigError(f"T must be positive, got {config.T}")
    if config.dt <= 0:
        raise ConfigError(f"dt must be positive, got {config.dt}")
    if config.m < 1:
        raise ConfigError(f"m must be at least 1, got {config.m}")
    if not 0.0 < config.epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {config.epsilon}")
    if config.grid_kind not in (SQUARE, TORUS):
        raise ConfigError(f"grid_kind must be square or torus, got {config.grid_kind}")
    if config.nx < 8:
        raise ConfigError(f"nx must be at least 8, got {config.nx}")
    n = config.T / config.dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError(f"dt = {config.dt} does not divide T = {config.T}")
    return config


def explicit_dt_bound(tensors, c0):
    """Conservative step bound for the explicit part of the update.

    0.5 over (worst coupling row sum + state norm times worst quadratic
    row sum); recorded in run metadata and enforced before stepping.
    """
    de = np.abs(tensors.D + tensors.E)
    # sum over the transported-mode index; worst case over time samples
    row_lin = de.sum(axis=-2).max() if de.size else 0.0
    row_quad = np.abs(tensors.B).sum(axis=(0, 1)).max()
    amp = float(np.linalg.norm(c0))
    denom = row_lin + amp * row_quad
    if denom == 0.0:
        return np.inf
    return 0.5 / denom


def check_dt_bound(config, tensors, c0):
    bound = explicit_dt_bound(tensors, c0)
    if config.dt > bound:
        raise ConfigError(
            f"dt = {config.dt} exceeds the explicit stability bound {bound:.3e} "
            f"for this initial state")
    return bound


# ---------------------------------------------------------------------------
# tensors


@dataclasses.dataclass
class Tensors:
    """Quadrature tensors of the expanded coefficient system.

    B[i, l, j] couples mode pairs through the advection form and is
    antisymmetric in (l, j); D and E couple each mode to the lift field
    (lift as transported / transporting argument respectively); F is
    the forcing projection.  For time-dependent lifts D, E, F gain a
    leading time axis aligned with `times`.
    """

    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    lam: np.ndarray
    times: np.ndarray = None

    @property
    def steady(self):
        return self.times is None

    def row(self, k):
        """(D+E, F) at time sample k (steady tensors ignore k)."""
        if self.steady:
            return self.D + self.E, self.F
        return self.D[k] + self.E[k], self.F[k]


def _mode_stacks(basis):
    m = len(basis.eigenvalues)
    flat = np.stack([np.concatenate([basis.mode(j).u.ravel(),
                                     basis.mode(j).v.ravel()]) for j in range(m)])
    return flat


def _assemble_quadratic(basis, lift_fields, want_t1=True):
    """One sweep over mode pairs: advection couplings and lift dots.

    Returns T1[i, l, j] = (advect(w_i, w_l), w_j) (None when not asked
    for) and, when lift fields are given, R[k, i, l] = (advect(w_i,
    w_l), G_k).
    """
    grid = basis.grid
    m = len(basis.eigenvalues)
    w2 = grid.h**2
    flat = _mode_stacks(basis)
    gmat = None
    if lift_fields:
        gmat = np.stack([np.concatenate([gk.u.ravel(), gk.v.ravel()])
                         for gk in lift_fields])

    t1 = np.empty((m, m, m)) if want_t1 else None
    r = np.empty((len(lift_fields), m, m)) if lift_fields else None
    buf = np.empty((m, flat.shape[1]))
    for i in range(m):
        wi = basis.mode(i)
        for l in range(m):
            adv = advect(wi, basis.mode(l))
            buf[l, :] = np.concatenate([adv.u.ravel(), adv.v.ravel()])
        if want_t1:
            t1[i] = w2 * (buf @ flat.T)
        if gmat is not None:
            r[:, i, :] = w2 * (gmat @ buf.T)
    return t1, r


def _tensor_cache_path(cache_dir, grid, m):
    name = f"tensors_B_{grid.kind}_nx{grid.nx}_m{m}_v{TENSOR_CACHE_VERSION}.npz"
    return os.path.join(cache_dir, name)


def assemble_tensors(basis, lift, nu=None, cache_dir=None, force_rebuild=False):
    """All coefficient-system tensors for a basis and (optional) lift.

    The pure mode-coupling tensor B depends only on (grid, m) and is
    cached on disk when a cache directory is given.  Lift couplings are
    recomputed per lift.  `nu` is needed exactly when the lift's
    forcing has not been attached yet.
    """
    m = len(basis.eigenvalues)
    lam = basis.eigenvalues.copy()
    grid = basis.grid

    fields = []
    if lift is not None:
        fields = [lift.G_eps] if lift.steady else list(lift.G_eps)

    cache_path = None
    b = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = _tensor_cache_path(cache_dir, grid, m)
    if cache_path and not force_rebuild and os.path.exists(cache_path):
        with np.load(cache_path) as blob:
            if np.array_equal(blob["eigenvalues"], lam):
                b = blob["B"]

    t1 = r = None
    if b is None or fields:
        t1, r = _assemble_quadratic(basis, fields, want_t1=b is None)
    if b is None:
        b = 0.5 * (t1 - t1.transpose(0, 2, 1))
        if cache_path:
            tmp = cache_path + ".tmp.npz"
            np.savez(tmp, B=b, eigenvalues=lam)
            os.replace(tmp, cache_path)

    if not fields:
        d = np.zeros((m, m))
        e = np.zeros((m, m))
        f = np.zeros(m)
        return Tensors(B=b, D=d, E=e, F=f, lam=lam)

    if lift.f_eps is None:
        if nu is None:
            raise ValueError("lift has no forcing attached; pass nu")
        compute_forcing(lift, nu)
    forcings = [lift.f_eps] if lift.steady else list(lift.f_eps)

    w2 = grid.h**2
    flat = _mode_stacks(basis)
    d_list, e_list, f_list = [], [], []
    for k, gk in enumerate(fields):
        # (advect(w_i, G), w_j) for all i via one stack of advections
        sg = np.empty((m, flat.shape[1]))
        ag = np.empty((m, flat.shape[1]))
        for i in range(m):
            advig = advect(basis.mode(i), gk)
            sg[i, :] = np.concatenate([advig.u.ravel(), advig.v.ravel()])
            advgi = advect(gk, basis.mode(i))
            ag[i, :] = np.concatenate([advgi.u.ravel(), advgi.v.ravel()])
        s = w2 * (sg @ flat.T)          # (advect(w_i, G), w_j)
        d_list.append(0.5 * (s - r[k]))
        half = w2 * (ag @ flat.T)       # (advect(G, w_i), w_j)
        e_list.append(0.5 * (half - half.T))
        fk = forcings[k]
        fflat = np.concatenate([fk.u.ravel(), fk.v.ravel()])
        f_list.append(w2 * (flat @ fflat))

    if lift.steady:
        return Tensors(B=b, D=d_list[0], E=e_list[0], F=f_list[0], lam=lam)
    return Tensors(B=b, D=np.stack(d_list), E=np.stack(e_list),
                   F=np.stack(f_list), lam=lam, times=np.asarray(lift.times))


# ---------------------------------------------------------------------------
# states and stepping


@dataclasses.dataclass
class GalerkinState:
    t: float
    c: np.ndarray

    def copy(self):
        return GalerkinState(self.t, self.c.copy())


def project_initial(v0, lift, basis, trace_tol=0.05):
    """Project v0 minus the lift onto the basis; returns (state, V-norm error).

    The initial velocity must be discretely divergence-free with zero
    normal trace, and its tangential trace must match the wall data.
    """
    grid = basis.grid
    dv = np.abs(divergence(v0).values).max()
    if dv > 1e-8:
        raise CompatibilityError(f"initial velocity has divergence {dv:.3e}")
    if grid.kind == SQUARE:
        nmax = v0.wall_normal_max()
        if nmax > 1e-12:
            raise CompatibilityError(f"initial velocity has normal trace {nmax:.3e}")
        target = None
        if lift is not None and lift.boundary is not None:
            target = lift.boundary.at(0.0).walls
        tr = tangential_trace(v0)
        worst = 0.0
        for name, arr in tr.items():
            want = target[name] if target is not None else 0.0
            worst = max(worst, np.abs(arr - want).max())
        scale = max(1.0, lift.boundary.max_abs()) if target is not None else 1.0
        if worst > trace_tol * scale:
            raise CompatibilityError(
                f"initial tangential trace differs from wall data by {worst:.3e}")

    u0 = v0 if lift is None else v0 - lift.field_at(0)
    c = basis.project(u0)
    resid = u0 - basis.combine(c)
    err = float(np.sqrt(max(inner_h1(resid, resid), 0.0)))
    return GalerkinState(0.0, c), err


def _nonstiff(c, b, de, f):
    quad = np.einsum("ilj,i,l->j", b, c, c)
    return -quad - c @ de + f


def rhs(state, tensors, nu, k=0):
    """Full coefficient derivative at time sample k."""
    de, f = tensors.row(k)
    return -nu * tensors.lam * state.c + _nonstiff(state.c, tensors.B, de, f)


def step(state, tensors, config, _efactor=None, k=0):
    """One integrating-factor Heun step.

    The diagonal stiff term is handled by its exact exponential; the
    remaining terms enter through a two-stage second-order update of
    the transformed variable.  Linear-only systems are integrated
    exactly.
    """
    dt, nu = config.dt, config.nu
    e1 = _efactor if _efactor is not None else np.exp(-nu * tensors.lam * dt)
    de0, f0 = tensors.row(k)
    de1, f1 = tensors.row(k + 1) if not tensors.steady else (de0, f0)

    c = state.c
    k1 = _nonstiff(c, tensors.B, de0, f0)
    c_pred = e1 * (c + dt * k1)
    k2 = _nonstiff(c_pred, tensors.B, de1, f1)
    c_new = e1 * (c + (0.5 * dt) * k1) + (0.5 * dt) * k2

    if not np.all(np.isfinite(c_new)) or np.abs(c_new).max() > 1e6:
        bad = np.abs(c_new).max() if np.all(np.isfinite(c_new)) else np.inf
        raise BlowupDetected(-1, bad)
    return GalerkinState(state.t + dt, c_new)


@dataclasses.dataclass
class Trajectory:
    """Coefficient history plus per-state energy records."""

    times: np.ndarray
    coeffs: np.ndarray
    lam: np.ndarray
    nu: float
    dt: float
    f_l2sq: np.ndarray

    @property
    def l2sq(self):
        return (self.coeffs**2).sum(axis=1)

    @property
    def h1sq(self):
        return (self.coeffs**2 @ self.lam)

    @property
    def h2sq(self):
        return (self.coeffs**2 @ self.lam**2)

    def state(self, n):
        return GalerkinState(float(self.times[n]), self.coeffs[n].copy())

    @property
    def n_steps(self):
        return len(self.times) - 1


def solve(config, u0, lift, basis, tensors=None):
    """Integrate the coefficient system on [0, T].

    Returns the trajectory with per-state energy records; raises
    BlowupDetected (with the partial history attached) if the state
    leaves the trust region.
    """
    validate_config(config)
    if tensors is None:
        tensors = assemble_tensors(basis, lift, nu=config.nu)
    m = len(tensors.lam)
    if u0.c.shape != (m,):
        raise ConfigError(f"initial state has {u0.c.shape[0]} coefficients, basis has {m}")
    check_dt_bound(config, tensors, u0.c)

    n = config.n_steps()
    if not tensors.steady and len(tensors.times) != n + 1:
        raise ConfigError(
            f"unsteady tensors carry {len(tensors.times)} samples, need {n + 1}")

    if lift is None:
        fsq = np.zeros(n + 1)
    else:
        if lift.f_eps is None:
            compute_forcing(lift, config.nu)
        if lift.steady:
            fsq = np.full(n + 1, inner_l2(lift.f_eps, lift.f_eps))
        else:
            fsq = np.array([inner_l2(fk, fk) for fk in lift.f_eps])

    times = np.arange(n + 1) * config.dt
    coeffs = np.empty((n + 1, m))
    coeffs[0] = u0.c
    e1 = np.exp(-config.nu * tensors.lam * config.dt)
    state = GalerkinState(0.0, u0.c.copy())
    for k in range(n):
        try:
            state = step(state, tensors, config, _efactor=e1, k=k)
        except BlowupDetected as exc:
            exc.step_index = k
            exc.partial = Trajectory(times[:k + 1], coeffs[:k + 1].copy(),
                                     tensors.lam, config.nu, config.dt, fsq[:k + 1])
            raise
        coeffs[k + 1] = state.c
    return Trajectory(times, coeffs, tensors.lam.copy(), config.nu, config.dt, fsq)


# ---------------------------------------------------------------------------
# reconstruction and pressure


class Reconstruction:
    """Lazily reconstructed velocity fields v(t_n) = sum c_j w_j + G."""

    def __init__(self, trajectory, basis, lift=None):
        self.trajectory = trajectory
        self.basis = basis
        self.lift = lift

    def __len__(self):
        return len(self.trajectory.times)

    def __getitem__(self, n):
        if n < 0:
            n += len(self)
        u = self.basis.combine(self.trajectory.coeffs[n])
        if self.lift is None:
            return u
        if self.lift.steady:
            return u + self.lift.G_eps
        return u + self.lift.G_eps[n]


def reconstruct(trajectory, basis, lift=None):
    return Reconstruction(trajectory, basis, lift)


def _pad_coeffs(ch, n):
    """Embed Fourier coefficients of an n-grid into a 2n-grid (zero pad)."""
    big = np.zeros((2 * n, 2 * n), dtype=complex)
    sh = np.fft.fftshift(ch)
    lo = n - n // 2
    big[lo:lo + n, lo:lo + n] = sh
    return np.fft.ifftshift(big)


def _spectral_pressure_torus(grid, vbar):
    """Exact pressure of the band-limited velocity field on the torus.

    The reconstructed field is a finite trig sum whose modes are
    pointwise divergence-free, so its pressure solves
    Lap p = -div((v.grad)v) with no time-derivative or viscous
    contribution.  Derivatives are taken in Fourier space and the
    quadratic products on a doubled (alias-free) grid, so the result is
    the exact continuum pressure of the reconstruction, sampled at the
    cell centers and normalized to zero mean.
    """
    n, h = grid.nx, grid.h
    kx, ky = _torus_wavenumbers(n)
    # true Fourier coefficients of the face-sample interpolants
    uh = np.fft.fft2(vbar.u) * np.exp(-0.5j * ky * h) / n**2
    vh = np.fft.fft2(vbar.v) * np.exp(-0.5j * kx * h) / n**2

    kx2, ky2 = _torus_wavenumbers(2 * n)
    stacks = []
    for ch in (uh, vh):
        big = _pad_coeffs(ch, n)
        four = (2 * n) ** 2
        stacks.append([
            np.fft.ifft2(big).real * four,
            np.fft.ifft2(1j * kx2 * big).real * four,
            np.fft.ifft2(1j * ky2 * big).real * four,
        ])
    (u2, ux2, uy2), (v2, vx2, vy2) = stacks
    wu = u2 * ux2 + v2 * uy2
    wv = u2 * vx2 + v2 * vy2

    div = 1j * kx2 * np.fft.fft2(wu) + 1j * ky2 * np.fft.fft2(wv)
    ksq = kx2**2 + ky2**2
    ksq[0, 0] = 1.0
    phat = div / ksq          # Lap p = -div w  =>  p_hat = div_hat / |k|^2
    phat[0, 0] = 0.0
    p2 = np.fft.ifft2(phat).real
    vals = p2[1::2, 1::2]     # cell centers are the odd points of the 2n grid
    return ScalarField(grid, vals - vals.mean())


def _momentum_residual(state_pair, basis, lift, nu):
    """Face-sampled momentum residual of a consecutive state pair.

    The time derivative is the pair difference; advection and diffusion
    are evaluated at the pair average.  What remains of the momentum
    balance is (up to discretization) the pressure gradient.
    """
    s0, s1 = state_pair
    dt = s1.t - s0.t
    if dt <= 0:
        raise ValueError("state pair must be consecutive in time")
    if lift is not None and not lift.steady:
        raise NotImplementedError("pressure recovery expects a steady lift")
    grid = basis.grid
    v0 = basis.combine(s0.c)
    v1 = basis.combine(s1.c)
    if lift is not None:
        v0 = v0 + lift.G_eps
        v1 = v1 + lift.G_eps
    vbar = (v0 + v1) * 0.5
    dvdt = (v1 - v0) * (1.0 / dt)

    lap = laplacian(vbar, bc="extrapolate") if grid.kind == SQUARE else laplacian(vbar)
    adv = advect(vbar, vbar)
    ru = -(dvdt.u + adv.u - nu * lap.u)
    rv = -(dvdt.v + adv.v - nu * lap.v)
    if lift is not None:
        if lift.f_eps is None:
            compute_forcing(lift, nu)
        ru = ru + lift.f_eps.u
        rv = rv + lift.f_eps.v
    return VectorField(grid, ru, rv)


def recover_pressure(state_pair, basis, lift, nu):
    """Pressure at the midpoint of a consecutive state pair.

    Torus: the exact continuum pressure of the band-limited
    reconstruction (no lift there).  Square: Poisson problem
    div grad p = div r for the momentum residual r, with the wall
    fluxes of r acting as inhomogeneous Neumann data; normalized to
    zero mean, which pins down the free constant.
    """
    grid = basis.grid
    if grid.kind == TORUS:
        if lift is not None:
            raise NotImplementedError("the torus carries no boundary lift")
        s0, s1 = state_pair
        vbar = (basis.combine(s0.c) + basis.combine(s1.c)) * 0.5
        return _spectral_pressure_torus(grid, vbar)
    r = _momentum_residual(state_pair, basis, lift, nu)
    proj = LerayProjector(grid)
    return proj.solve_poisson(divergence(r))


def momentum_residual_drop(state_pair, basis, lift, nu):
    """Ratio of momentum-residual norms before/after removing grad p.

    Uses the discretely consistent pressure (the compact Poisson solve
    of the residual divergence) so the quotient measures how close the
    residual is to a discrete gradient.
    """
    r = _momentum_residual(state_pair, basis, lift, nu)
    proj = LerayProjector(r.grid)
    p = proj.solve_poisson(divergence(r))
    after = r - gradient(p)
    return norm_l2(r) / max(norm_l2(after), 1e-300)
