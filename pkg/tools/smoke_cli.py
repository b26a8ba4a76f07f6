"""CLI smoke drive: every subcommand, error paths, determinism, manifest."""

import json
import os
import shutil
import subprocess
import sys
import tempfile

BASE = tempfile.mkdtemp(prefix="reproflow_cli_")
PY = sys.executable


def write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return path


def run(args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    proc = subprocess.run([PY, "-m", "reproflow.cli", *args],
                          capture_output=True, text=True, env=env)
    return proc


def check(label, cond, detail=""):
    print(f"{'pass' if cond else 'FAIL'}  {label}  {detail}")
    if not cond:
        sys.exit(1)


def manifest(outdir):
    with open(os.path.join(outdir, "manifest.json")) as fh:
        return json.load(fh)


# --- config validation paths -----------------------------------------------

bad = write(os.path.join(BASE, "bad.yaml"), """
experiment: solve
solver: {nu: 1.0, nx: 24, m: 6}
boundar: {profile: bottom_bump}
verify: {kapa: 1.0}
""")
p = run(["solve", "--config", bad, "--out", os.path.join(BASE, "bad_out")])
check("unknown keys exit 2", p.returncode == 2, f"rc={p.returncode}")
check("unknown keys dotted paths", "boundar" in p.stderr and "verify.kapa" in p.stderr,
      p.stderr.strip().replace("\n", " | ")[:160])

baddt = write(os.path.join(BASE, "baddt.yaml"), """
experiment: solve
solver: {nu: 1.0, T: 1.0, dt: 0.3, nx: 24, m: 6, grid_kind: torus}
""")
p = run(["solve", "--config", baddt, "--out", os.path.join(BASE, "baddt_out")])
check("dt not dividing T exit 2", p.returncode == 2, f"rc={p.returncode}")
check("dt error names both fields", "dt" in p.stderr and "T" in p.stderr,
      p.stderr.strip()[:160])

badnu = write(os.path.join(BASE, "badnu.yaml"), """
experiment: solve
solver: {nu: -1.0, nx: 24, m: 6, grid_kind: torus}
""")
p = run(["solve", "--config", badnu, "--out", os.path.join(BASE, "badnu_out")])
check("negative nu exit 2", p.returncode == 2, p.stderr.strip()[:120])

mismatch = write(os.path.join(BASE, "mm.yaml"), """
experiment: eigs
solver: {nx: 24, m: 6, grid_kind: torus}
""")
p = run(["solve", "--config", mismatch, "--out", os.path.join(BASE, "mm_out")])
check("experiment/subcommand mismatch exit 2", p.returncode == 2, p.stderr.strip()[:120])

p = run(["solve", "--config", os.path.join(BASE, "missing.yaml")])
check("missing config exit 2", p.returncode == 2, p.stderr.strip()[:120])

torusb = write(os.path.join(BASE, "torusb.yaml"), """
experiment: solve
solver: {nx: 24, m: 6, grid_kind: torus}
boundary: {profile: bottom_bump}
""")
p = run(["solve", "--config", torusb, "--out", os.path.join(BASE, "torusb_out")])
check("torus+boundary exit 2", p.returncode == 2, p.stderr.strip()[:120])

# --- eigs -------------------------------------------------------------------

eigs = write(os.path.join(BASE, "eigs.yaml"), """
experiment: eigs
out: %s
solver: {nx: 24, m: 8}
""" % os.path.join(BASE, "eigs_out"))
p = run(["eigs", "--config", eigs])
check("eigs exit 0", p.returncode == 0, p.stderr.strip()[:160])
man = manifest(os.path.join(BASE, "eigs_out"))
check("eigs manifest passed", man["passed"] is True,
      json.dumps(man["summary"]))
check("eigs outputs listed", "eigenvalues.csv" in man["outputs"]
      and "effective_config.json" in man["outputs"] and "manifest.json" in man["outputs"],
      str(man["outputs"]))
with open(os.path.join(BASE, "eigs_out", "eigenvalues.csv")) as fh:
    lines = fh.read().splitlines()
check("eigenvalues.csv rows", lines[0] == "j,eigenvalue" and len(lines) == 9,
      f"{len(lines)} lines")

# --- lift sweep --------------------------------------------------------------

liftc = write(os.path.join(BASE, "lift.yaml"), """
experiment: lift
out: %s
solver: {nx: 48, m: 4, epsilon: 0.4}
boundary: {profile: bottom_bump, amplitude: 1.0}
sweep: {samples: 40}
""" % os.path.join(BASE, "lift_out"))
p = run(["lift", "--config", liftc])
check("lift exit 0", p.returncode == 0, p.stderr.strip()[:200])
man = manifest(os.path.join(BASE, "lift_out"))
check("lift beta decreasing", man["summary"]["beta_strictly_decreasing"],
      str(man["summary"]["betas"]))
check("lift snapshot written",
      os.path.exists(os.path.join(BASE, "lift_out", "lift_G.npz")))

# --- torus solve (decay demo) -------------------------------------------------

tg = write(os.path.join(BASE, "tg.yaml"), """
experiment: solve
out: %s
seed: 3
solver: {nu: 0.1, T: 0.05, dt: 0.001, nx: 32, m: 8, grid_kind: torus}
initial: {kind: ball, radius: 0.2}
""" % os.path.join(BASE, "tg_out"))
p = run(["solve", "--config", tg])
check("torus solve exit 0", p.returncode == 0, (p.stderr or p.stdout).strip()[:200])
man = manifest(os.path.join(BASE, "tg_out"))
# drop is modest for a random multi-shell start (solenoidal advection
# spills outside the span); the big drops belong to single-product starts
check("torus pressure artifacts", "pressure_final.npz" in man["outputs"]
      and man["summary"]["momentum_residual_drop"] > 2.0,
      f"drop={man['summary'].get('momentum_residual_drop')}")

# --- square verify ------------------------------------------------------------

ver = write(os.path.join(BASE, "verify.yaml"), """
experiment: verify
out: %s
solver: {nu: 1.0, T: 0.1, dt: 0.001, nx: 32, m: 8, epsilon: 0.4}
boundary: {profile: bottom_bump, amplitude: 0.01}
""" % os.path.join(BASE, "verify_out"))
p = run(["verify", "--config", ver])
check("verify exit 0", p.returncode == 0, (p.stderr or p.stdout).strip()[:300])
man = manifest(os.path.join(BASE, "verify_out"))
check("verify monitors pass", man["summary"]["energy_passed"]
      and man["summary"]["h1_passed"],
      json.dumps({k: man["summary"][k] for k in
                  ("energy_max_violation", "h1_sup", "rate_identity_residual")}))

# --- stability ---------------------------------------------------------------

stab = write(os.path.join(BASE, "stab.yaml"), """
experiment: stability
out: %s
solver: {nu: 1.0, T: 0.1, dt: 0.001, nx: 32, m: 8, epsilon: 0.4}
boundary: {profile: bottom_bump, amplitude: 0.01}
initial: {kind: ball, radius: 0.02}
stability: {perturbation: 1.0e-4}
""" % os.path.join(BASE, "stab_out"))
p = run(["stability", "--config", stab])
check("stability exit 0", p.returncode == 0, (p.stderr or p.stdout).strip()[:200])
man = manifest(os.path.join(BASE, "stab_out"))
check("stability ratio <= 1.05", man["summary"]["max_ratio"] <= 1.05,
      f"max_ratio={man['summary']['max_ratio']:.6f}")

# --- reproductive + determinism -----------------------------------------------

rep = write(os.path.join(BASE, "rep.yaml"), """
experiment: reproductive
out: %s
solver: {nu: 1.0, T: 0.2, dt: 0.001, nx: 32, m: 8, epsilon: 0.4}
boundary: {profile: bottom_bump, amplitude: 0.01}
reproductive: {pairs: 2}
""" % os.path.join(BASE, "rep_out"))
p = run(["reproductive", "--config", rep])
check("reproductive exit 0", p.returncode == 0, (p.stderr or p.stdout).strip()[:300])
man = manifest(os.path.join(BASE, "rep_out"))
check("reproductive converged", man["summary"]["converged"],
      f"residuals={man['summary']['residuals']}")
check("v0 snapshot", os.path.exists(os.path.join(BASE, "rep_out", "v0_reproductive.npz")))

out2 = os.path.join(BASE, "rep_out2")
p = run(["reproductive", "--config", rep, "--out", out2])
check("reproductive rerun exit 0", p.returncode == 0)
for name in ("residuals.csv", "contraction.csv"):
    a = open(os.path.join(BASE, "rep_out", name), "rb").read()
    b = open(os.path.join(out2, name), "rb").read()
    check(f"byte-identical {name}", a == b, f"{len(a)} bytes")

# over-budget boundary data must refuse with exit 1
hot = write(os.path.join(BASE, "hot.yaml"), """
experiment: reproductive
out: %s
solver: {nu: 1.0, T: 0.2, dt: 0.001, nx: 32, m: 8, epsilon: 0.4}
boundary: {profile: bottom_bump, amplitude: 5.0}
""" % os.path.join(BASE, "hot_out"))
p = run(["reproductive", "--config", hot])
check("over-budget exit 1", p.returncode == 1, f"rc={p.returncode}")
man = manifest(os.path.join(BASE, "hot_out"))
check("over-budget manifest records violation", "regime_violation" in man,
      man.get("regime_violation", "")[:100])

# --- shared cache via env -------------------------------------------------------

cache = os.path.join(BASE, "shared_cache")
out3 = os.path.join(BASE, "eigs_out3")
p = run(["eigs", "--config", eigs, "--out", out3], env_extra={"REPROFLOW_CACHE": cache})
check("env cache exit 0", p.returncode == 0)
check("env cache populated", any(f.endswith(".npz") for f in os.listdir(cache)),
      str(os.listdir(cache)))
check("no cache dir inside outdir when env set",
      not os.path.exists(os.path.join(out3, "cache")))

# every artifact stayed inside BASE
stray = [d for d in ("runs",) if os.path.exists(d)]
check("no writes outside outdir", not stray, str(stray))

print("\nall cli smoke checks passed")
shutil.rmtree(BASE)
