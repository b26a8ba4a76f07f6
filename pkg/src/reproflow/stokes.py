"""Leray projection and the Stokes eigenbasis.

Square (walls): everything is discrete.  The divergence-free, zero-trace
space V_h is exactly the range of rot over interior nodal stream functions,
so the Stokes eigenproblem A w = -P Lap w = lambda w reduces to the
generalized symmetric problem

    S y = lambda M y,   S = h^2 R^T (-L) R,   M = h^2 R^T R,

with R = rot on interior stream functions and L the no-slip vector
Laplacian.  Because A maps V_h into V_h and the reduction is a genuine
Galerkin identity (not an approximation), the eigenresiduals of the
reconstructed modes are solver rounding, orders below the contracted 1e-8.

Torus: there is no boundary and the domain exists to provide analytic
oracles, so the eigenpairs are the closed-form solenoidal trig modes with
*exact* eigenvalues |k|^2, and the operator application is the exact Fourier
symbol (staggering-aware phase shifts).  Note the MAC divergence of a
sampled trig mode vanishes identically only for axis/diagonal wavevectors
(|k1| = |k2| or k1 k2 = 0, the shells lambda = 1, 2, 4, 8, ...); mixed
shells such as lambda = 5 carry O(h^2) divergence, which is why oracle
fixtures stick to m <= 12.

The Poisson solves behind the projector are exact diagonalizations of the
compact 5-point operators (DCT-II for the wall Neumann problem, FFT for the
periodic one), so projector idempotence and div(Pu) = 0 hold to rounding.
"""

import os

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import (
    SQUARE,
    TORUS,
    Grid,
    ScalarField,
    VectorField,
    inner_l2,
    laplacian,
    rot,
)

CACHE_VERSION = 1


class EigensolverError(Exception):
    """Eigensolver failed to converge; carries residual diagnostics."""


class LerayProjector:
    """Orthogonal projection onto discretely divergence-free fields.

    The pressure potential solves the compact Neumann (square) or periodic
    (torus) 5-point Poisson problem; both solves are exact in the discrete
    sense, so P*P = P and div(P u) = 0 to machine rounding, and P is
    self-adjoint for the all-faces h^2 inner product.
    """

    def __init__(self, grid):
        self.grid = grid
        n = grid.nx
        h = grid.h
        if grid.kind == SQUARE:
            k = np.arange(n)
            lam1d = -(4.0 / h**2) * np.sin(np.pi * k / (2.0 * n)) ** 2
            self._eigs = lam1d[:, None] + lam1d[None, :]
            self._eigs[0, 0] = 1.0  # pinned mean slot, see solve_poisson
        else:
            k = np.fft.fftfreq(n, d=1.0 / n)
            lam1d = -(4.0 / h**2) * np.sin(np.pi * k / n) ** 2
            self._eigs = lam1d[:, None] + lam1d[None, :]
            self._eigs[0, 0] = 1.0

    def solve_poisson(self, rhs):
        """phi with Lap_h phi = rhs (centers), mean(phi) = 0.

        The rhs is projected onto mean zero first (the compatible subspace);
        for divergence data of flux-free fields that projection is a no-op
        up to rounding.
        """
        vals = rhs.values if isinstance(rhs, ScalarField) else np.asarray(rhs)
        if self.grid.kind == SQUARE:
            coef = scipy.fft.dctn(vals, type=2, norm="ortho")
            coef[0, 0] = 0.0
            coef /= self._eigs
            phi = scipy.fft.idctn(coef, type=2, norm="ortho")
        else:
            coef = np.fft.fft2(vals)
            coef[0, 0] = 0.0
            coef /= self._eigs
            phi = np.fft.ifft2(coef).real
        return ScalarField(self.grid, phi, loc="center")

    def project(self, w):
        """u - grad(phi) with the wall-normal faces of the result zeroed."""
        g = self.grid
        h = g.h
        if g.kind == SQUARE:
            u = w.u.copy()
            v = w.v.copy()
            u[0, :] = 0.0
            u[-1, :] = 0.0
            v[:, 0] = 0.0
            v[:, -1] = 0.0
            div = (u[1:, :] - u[:-1, :]) / h + (v[:, 1:] - v[:, :-1]) / h
            phi = self.solve_poisson(div).values
            u[1:-1, :] -= (phi[1:, :] - phi[:-1, :]) / h
            v[:, 1:-1] -= (phi[:, 1:] - phi[:, :-1]) / h
            return VectorField(g, u, v)
        div = (np.roll(w.u, -1, 0) - w.u) / h + (np.roll(w.v, -1, 1) - w.v) / h
        phi = self.solve_poisson(div).values
        u = w.u - (phi - np.roll(phi, 1, 0)) / h
        v = w.v - (phi - np.roll(phi, 1, 1)) / h
        return VectorField(g, u, v)


def leray_project(w, projector=None):
    if projector is None:
        projector = LerayProjector(w.grid)
    return projector.project(w)


def _torus_wavenumbers(n):
    k = np.fft.fftfreq(n, d=1.0 / n)
    return np.meshgrid(k, k, indexing="ij")


def apply_stokes(w, projector=None):
    """A w = -P Lap w.

    Square: the discrete no-slip Laplacian followed by the discrete Leray
    projection.  Torus: the exact Fourier symbol |k|^2 u - k (k . u), with
    the half-cell staggering phases removed before mixing components; exact
    for trigonometric fields (this is the analytic-oracle path).
    """
    g = w.grid
    if g.kind == SQUARE:
        if projector is None:
            projector = LerayProjector(g)
        return -1.0 * projector.project(laplacian(w, bc="noslip"))

    n = g.nx
    kx, ky = _torus_wavenumbers(n)
    ph_u = np.exp(-0.5j * ky * g.h)
    ph_v = np.exp(-0.5j * kx * g.h)
    uh = np.fft.fft2(w.u) * ph_u
    vh = np.fft.fft2(w.v) * ph_v
    k2 = kx**2 + ky**2
    kdotu = kx * uh + ky * vh
    au = (k2 * uh - kx * kdotu) / ph_u
    av = (k2 * vh - ky * kdotu) / ph_v
    return VectorField(g, np.fft.ifft2(au).real, np.fft.ifft2(av).real)


class StokesBasis:
    """First m eigenpairs (w_j, lambda_j), L2-orthonormal, ascending."""

    def __init__(self, grid, eigenvalues, ustack, vstack):
        self.grid = grid
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.ustack = np.asarray(ustack, dtype=float)
        self.vstack = np.asarray(vstack, dtype=float)
        self.m = len(self.eigenvalues)

    def mode(self, j):
        return VectorField(self.grid, self.ustack[j], self.vstack[j])

    @property
    def modes(self):
        return [self.mode(j) for j in range(self.m)]

    def project(self, w):
        """Coefficients c_j = (w, w_j) of the L2 projection onto the span."""
        h2 = self.grid.h**2
        return h2 * (
            np.einsum("mij,ij->m", self.ustack, w.u)
            + np.einsum("mij,ij->m", self.vstack, w.v)
        )

    def combine(self, c):
        """The field sum_j c_j w_j."""
        c = np.asarray(c, dtype=float)
        u = np.einsum("m,mij->ij", c, self.ustack)
        v = np.einsum("m,mij->ij", c, self.vstack)
        return VectorField(self.grid, u, v)

    def truncate(self, m):
        if m > self.m:
            raise ValueError(f"cannot truncate basis of size {self.m} to {m}")
        return StokesBasis(
            self.grid, self.eigenvalues[:m], self.ustack[:m], self.vstack[:m]
        )

    def gram(self):
        h2 = self.grid.h**2
        return h2 * (
            np.einsum("mij,nij->mn", self.ustack, self.ustack)
            + np.einsum("mij,nij->mn", self.vstack, self.vstack)
        )

    def orthonormality_error(self):
        return float(np.abs(self.gram() - np.eye(self.m)).max())

    def eigen_residuals(self, projector=None):
        """||A w_j - lambda_j w_j|| / lambda_j for every mode."""
        if projector is None and self.grid.kind == SQUARE:
            projector = LerayProjector(self.grid)
        out = np.empty(self.m)
        for j in range(self.m):
            w = self.mode(j)
            aw = apply_stokes(w, projector)
            r = aw - self.eigenvalues[j] * w
            out[j] = np.sqrt(max(inner_l2(r, r), 0.0)) / self.eigenvalues[j]
        return out


def _fix_signs(ustack, vstack):
    """Deterministic sign: first non-negligible sample of each mode positive."""
    m = ustack.shape[0]
    for j in range(m):
        flat = np.concatenate([ustack[j].ravel(), vstack[j].ravel()])
        scale = np.abs(flat).max()
        nz = np.nonzero(np.abs(flat) > 1e-8 * scale)[0]
        if len(nz) and flat[nz[0]] < 0:
            ustack[j] = -ustack[j]
            vstack[j] = -vstack[j]
    return ustack, vstack


# ---------------------------------------------------------------------------
# square: sparse generalized eigenproblem
# ---------------------------------------------------------------------------


def _square_pencil(grid):
    """Sparse (S, M) of the stream-function-reduced Stokes eigenproblem."""
    n = grid.nx
    h = grid.h
    einj = sp.eye(n + 1, format="csr")[:, 1:-1]          # (n+1) x (n-1) injection
    d1 = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1)) / h

    # rot: u = D_y psi, v = -D_x psi  (x-major flattening: kron(x-op, y-op))
    ru = sp.kron(einj, d1 @ einj, format="csr")
    rv = -sp.kron(d1 @ einj, einj, format="csr")

    def d2_plain(sz):
        return sp.diags(
            [np.ones(sz - 1), -2.0 * np.ones(sz), np.ones(sz - 1)], [-1, 0, 1]
        ) / h**2

    def d2_mirror(sz):
        d = d2_plain(sz).tolil()
        d[0, 0] = -3.0 / h**2
        d[sz - 1, sz - 1] = -3.0 / h**2
        return d.tocsr()

    lu = sp.kron(d2_plain(n + 1), sp.eye(n)) + sp.kron(sp.eye(n + 1), d2_mirror(n))
    lv = sp.kron(d2_mirror(n), sp.eye(n + 1)) + sp.kron(sp.eye(n), d2_plain(n + 1))

    s = h**2 * (ru.T @ (-lu) @ ru + rv.T @ (-lv) @ rv)
    mm = h**2 * (ru.T @ ru + rv.T @ rv)
    s = 0.5 * (s + s.T)
    mm = 0.5 * (mm + mm.T)
    return s.tocsc(), mm.tocsc()


def _square_eigenbasis(grid, m):
    n = grid.nx
    dim = (n - 1) ** 2
    cap = dim // 4
    if m > cap:
        raise ValueError(
            f"m = {m} exceeds the spectral-accuracy cap {cap} (25% of the "
            f"divergence-free space dimension {dim} at nx = {n})"
        )
    s, mm = _square_pencil(grid)
    v0 = np.full(dim, 1.0 / np.sqrt(dim))
    try:
        vals, vecs = spla.eigsh(s, k=m, M=mm, sigma=0.0, which="LM", v0=v0)
    except spla.ArpackNoConvergence as err:  # pragma: no cover - diagnostics
        raise EigensolverError(
            f"eigensolver stalled at nx={n}, m={m}: "
            f"{len(err.eigenvalues)} of {m} pairs converged"
        ) from err
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]

    ustack = np.empty((m,) + grid.shape_u())
    vstack = np.empty((m,) + grid.shape_v())
    psi_full = np.zeros(grid.shape_node())
    for j in range(m):
        psi_full[1:-1, 1:-1] = vecs[:, j].reshape(n - 1, n - 1)
        w = rot(ScalarField(grid, psi_full, loc="node"))
        ustack[j] = w.u
        vstack[j] = w.v
    # eigsh returns M-orthonormal vectors; rescale exactly to unit L2 anyway
    h2 = grid.h**2
    nrm = np.sqrt(
        h2 * (np.einsum("mij,mij->m", ustack, ustack)
              + np.einsum("mij,mij->m", vstack, vstack))
    )
    ustack /= nrm[:, None, None]
    vstack /= nrm[:, None, None]
    return vals, ustack, vstack


# ---------------------------------------------------------------------------
# torus: closed-form solenoidal trig modes
# ---------------------------------------------------------------------------


def _torus_wavevectors(m, n):
    """First ceil(m/2) canonical wavevectors ordered by (|k|^2, k1, k2)."""
    kmax = 1
    while True:
        cands = []
        for k1 in range(0, kmax + 1):
            for k2 in range(-kmax, kmax + 1):
                if k1 == 0 and k2 <= 0:
                    continue
                cands.append((k1 * k1 + k2 * k2, k1, k2))
        cands.sort()
        cands = [c for c in cands if c[0] <= kmax * kmax]  # full shells only
        if 2 * len(cands) >= m:
            picked = cands[: (m + 1) // 2]
            needed = max(max(abs(c[1]), abs(c[2])) for c in picked)
            if needed >= n // 2:
                raise ValueError(
                    f"m = {m} needs wavenumber {needed}, at or beyond the "
                    f"Nyquist limit of nx = {n}"
                )
            return picked
        kmax += 1


def _torus_eigenbasis(grid, m):
    n = grid.nx
    cap = (2 * n * n) // 4
    if m > cap:
        raise ValueError(f"m = {m} exceeds the 25% cap {cap} on the torus")
    xu, yu = grid.uface_coords()
    xv, yv = grid.vface_coords()
    scale = 1.0 / np.sqrt(2.0 * np.pi**2)
    vals, ustack, vstack = [], [], []
    for lam, k1, k2 in _torus_wavevectors(m, n):
        norm = np.sqrt(float(lam))
        d1, d2 = -k2 / norm, k1 / norm
        for trig in (np.cos, np.sin):
            if len(vals) == m:
                break
            vals.append(float(lam))
            ustack.append(d1 * trig(k1 * xu + k2 * yu) * scale)
            vstack.append(d2 * trig(k1 * xv + k2 * yv) * scale)
    return np.array(vals), np.array(ustack), np.array(vstack)


# ---------------------------------------------------------------------------
# public entry + cache
# ---------------------------------------------------------------------------


def _cache_path(cache_dir, grid, m):
    name = f"basis_{grid.kind}_nx{grid.nx}_m{m}_v{CACHE_VERSION}.npz"
    return os.path.join(cache_dir, name)


def compute_eigenbasis(grid, m, cache_dir=None, force_rebuild=False):
    """The m smallest Stokes eigenpairs on the grid, L2-orthonormal.

    Deterministic: fixed eigensolver start vector, explicit ascending sort,
    sign convention "first non-negligible sample positive".  With cache_dir
    set, results are stored keyed by (kind, nx, m); the loader re-verifies
    orthonormality and silently rebuilds a corrupt file.
    """
    if m < 1:
        raise ValueError("need at least one mode")
    path = _cache_path(cache_dir, grid, m) if cache_dir else None
    if path and not force_rebuild and os.path.exists(path):
        try:
            with np.load(path, allow_pickle=False) as d:
                basis = StokesBasis(grid, d["eigenvalues"], d["ustack"], d["vstack"])
            if basis.orthonormality_error() <= 1e-10:
                return basis
        except Exception:
            pass  # fall through to rebuild

    if grid.kind == SQUARE:
        vals, ustack, vstack = _square_eigenbasis(grid, m)
    else:
        vals, ustack, vstack = _torus_eigenbasis(grid, m)
    ustack, vstack = _fix_signs(ustack, vstack)
    basis = StokesBasis(grid, vals, ustack, vstack)

    err = basis.orthonormality_error()
    if err > 1e-10:
        raise EigensolverError(f"orthonormality off by {err:.3e} after build")
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp.npz"
        np.savez(
            tmp,
            eigenvalues=basis.eigenvalues,
            ustack=basis.ustack,
            vstack=basis.vstack,
            kind=grid.kind,
            nx=grid.nx,
            m=m,
            cache_version=CACHE_VERSION,
        )
        os.replace(tmp, path)
    return basis
