"""Mode-refinement differences on the standard wall-bump fixture.

For m in {8, 16, 32, 64} solve the same problem in the first-m-modes
subspace (sub-slices of one m=64 tensor assembly — eigenmodes nest) and
record |c_{2m}(T) - c_m(T)|_2 with the shorter vector zero-extended.
The sequence of consecutive differences should be non-increasing.
"""

import time

import numpy as np

from reproflow.fields import Grid
from reproflow.galerkin import GalerkinState, SolverConfig, Tensors, assemble_tensors, solve
from reproflow.lift import boundary_profile, build_lift, compute_beta
from reproflow.stokes import compute_eigenbasis

NX, M_FULL = 48, 64
NU, T, DT, EPS, AMP = 1.0, 1.0, 1e-3, 0.4, 1e-2

grid = Grid("square", NX)
t0 = time.time()
basis = compute_eigenbasis(grid, M_FULL)
print(f"basis m={M_FULL}: {time.time()-t0:.1f}s; lam range "
      f"[{basis.eigenvalues[0]:.6f}, {basis.eigenvalues[-1]:.6f}]")

g = boundary_profile(grid, "bottom_bump", amplitude=AMP)
lift = build_lift(g, EPS, grid)
compute_beta(lift)

t0 = time.time()
tensors = assemble_tensors(basis, lift, nu=NU)
print(f"tensors m={M_FULL}: {time.time()-t0:.1f}s")


def sub(t, m):
    return Tensors(B=t.B[:m, :m, :m], D=t.D[:m, :m], E=t.E[:m, :m],
                   F=t.F[:m], lam=t.lam[:m])


finals = {}
for m in (8, 16, 32, 64):
    cfg = SolverConfig(nu=NU, T=T, dt=DT, m=m, epsilon=EPS,
                       grid_kind="square", nx=NX)
    tm = sub(tensors, m)
    t0 = time.time()
    traj = solve(cfg, GalerkinState(0.0, np.zeros(m)), lift, basis, tensors=tm)
    c = np.zeros(M_FULL)
    c[:m] = traj.coeffs[-1]
    finals[m] = c
    print(f"m={m:3d}: solve {time.time()-t0:.2f}s  |c(T)|={np.linalg.norm(c):.8e}")

print()
prev = None
for m in (8, 16, 32):
    d = np.linalg.norm(finals[2 * m] - finals[m])
    mark = ""
    if prev is not None:
        mark = "non-increasing" if d <= prev else "INCREASED <<<<"
    print(f"|u_{2*m:2d}(T) - u_{m:2d}(T)| = {d:.8e}  {mark}")
    prev = d
