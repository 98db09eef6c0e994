"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and echoed in the pytest terminal
summary. Running this file directly executes the whole suite.
Set ``MAXCLOAK_FULL_EXAMPLE3=1`` to run criterion 12 at the preset's full
resolution instead of the reduced 24^3 / 100-step grid.
"""
import copy
import os
import time

import numpy as np
import pytest

from conftest import small_problem, small_scenario
from maxcloak.adjoint import run_adjoint
from maxcloak.cli import convergence_study
from maxcloak.config import build_problem, from_preset, parse_scenario
from maxcloak.derham import build_operators
from maxcloak.forward import run_forward
from maxcloak.io import export_fields, read_line_csv, read_trajectory, write_trajectory
from maxcloak.mesh import boundary_edges, build_mesh
from maxcloak.optimizer import OptimSettings, grad_check, make_reduced_functional, minimize

RESULTS = {}

FULL_EX3 = os.environ.get("MAXCLOAK_FULL_EXAMPLE3", "") == "1"
EX3_GRID = {} if FULL_EX3 else {"counts": 24, "steps": 100}
EX3_ITER = 100 if FULL_EX3 else 15


def record(n, checks):
    """Record and print criterion ``n`` from ``[(label, ok, detail), ...]``; then assert."""
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{c[0]}={'ok' if c[1] else 'FAIL'} ({c[2]})" for c in checks)
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def random_state(disc, rng):
    e = rng.standard_normal(disc.n_e)
    return e, disc.C0 @ rng.standard_normal(disc.n_e)


def unforced(data):
    d = copy.deepcopy(data)
    d["sources"] = []
    d["materials"]["sigma"] = 0.0
    return d


def gauss_b_scaled(diag):
    return diag.summary()["max_div_b_scaled"]


def duality_defects(disc, n_pairs, rng):
    """Relative defect of the discrete duality identity for random loads and control directions."""
    N, dt = disc.grid.steps, disc.grid.dt
    out = []
    for _ in range(n_pairs):
        qE = rng.standard_normal((N, disc.n_e))
        qB = rng.standard_normal((N, disc.n_b))
        w = rng.standard_normal((N, disc.n_ctrl))
        traj, _ = run_forward(disc, w, diagnostics=False)
        lhs = dt * (np.sum(qE * traj.e_mid) + np.sum(qB * traj.b_mid))
        adj = run_adjoint(disc, qE, qB)
        rhs = dt * np.sum(adj.p_mid * (disc.Bctrl @ w.T).T)
        out.append(abs(lhs - rhs) / abs(lhs))
    return max(out)


# ---------------------------------------------------------------------------


def test_criterion_01_complex_exactness():
    t0 = time.perf_counter()
    worst = 0
    n = 0
    for c in (1, 2, 3, 8, 16, 32):
        for per in ((False,) * 3, (True,) * 3, (True, True, False)):
            m = build_mesh((c, c, c), (1.0 / c,) * 3, periodic=per)
            ops = build_operators(m, boundary_edges(m))
            assert np.issubdtype(ops.C.dtype, np.integer) and np.issubdtype(ops.D.dtype, np.integer)
            worst = max(worst, (ops.C @ ops.G).count_nonzero(), (ops.D @ ops.C).count_nonzero())
            n += 1
    wall = time.perf_counter() - t0
    record(1, [("C.G=0,D.C=0", worst == 0, f"{n} meshes up to 32^3, nonzeros {worst}"),
               ("runtime", wall < 1.0, f"{wall:.2f} s")])


def test_criterion_02_energy_conservation():
    rng = np.random.default_rng(20)
    t0 = time.perf_counter()
    p = small_problem(counts=(16, 16, 16), steps=200, sources=False, method="cg",
                      solver={"method": "cg", "tol": 1e-10})
    d = p.disc
    d.e0, d.b0 = random_state(d, rng)
    _, diag = run_forward(d, stride=200, store_midpoints=False, certificate=False)
    drift = float(np.max(np.abs(diag.energy - diag.energy[0])) / diag.energy[0])
    wall = time.perf_counter() - t0
    pd = small_problem(counts=(4, 4, 4), steps=200, sources=False, method="dense")
    dd = pd.disc
    dd.e0, dd.b0 = random_state(dd, rng)
    _, diag_d = run_forward(dd, stride=200, store_midpoints=False, certificate=False)
    drift_d = float(np.max(np.abs(diag_d.energy - diag_d.energy[0])) / diag_d.energy[0])
    record(2, [("16^3 CG", drift <= 1e-10, f"drift {drift:.2e} E0"),
               ("4^3 dense", drift_d <= 1e-12, f"drift {drift_d:.2e} E0"),
               ("runtime", wall < 30.0, f"{wall:.1f} s")])


@pytest.fixture(scope="module")
def example1_forward():
    p = build_problem(from_preset("example1"))
    t0 = time.perf_counter()
    traj, diag = run_forward(p.disc, stride=4, store_midpoints=False)
    return p, traj, diag, time.perf_counter() - t0


def test_criterion_03_energy_balance(example1_forward):
    _, _, diag, wall = example1_forward
    bal = float(np.max(diag.balance_relative))
    record(3, [("example1 balance", bal <= 1e-10, f"max relative residual {bal:.2e}"),
               ("runtime", wall < 60.0, f"{wall:.1f} s")])


def test_criterion_04_magnetic_gauss(example1_forward):
    checks = [("example1", gauss_b_scaled(example1_forward[2]) <= 1e-12,
               f"{gauss_b_scaled(example1_forward[2]):.1e}")]
    for name in ("tiny", "manufactured"):
        _, diag = run_forward(build_problem(from_preset(name)).disc, stride=1000, store_midpoints=False,
                              certificate=False)
        v = gauss_b_scaled(diag)
        checks.append((name, v <= 1e-12, f"{v:.1e}"))
    p = small_problem(counts=(6, 5, 4), steps=20, sigma=0.3, method="cg", periodic=(True, False, False))
    rng = np.random.default_rng(4)
    p.disc.e0, p.disc.b0 = random_state(p.disc, rng)
    _, diag = run_forward(p.disc, stride=20, store_midpoints=False, certificate=False)
    v = gauss_b_scaled(diag)
    checks.append(("random div-free b0", v <= 1e-12, f"{v:.1e}"))
    record(4, checks)


def test_criterion_05_electric_gauss():
    runs = [("example1", from_preset("example1")),
            ("example3-scaled 16^3", from_preset("example3-scaled", counts=16, steps=40)),
            ("3x4x5 lossy", small_scenario(counts=(3, 4, 5), steps=30, sigma=0.4, method="cg"))]
    checks = []
    for name, cfg in runs:
        p = build_problem(cfg, {"tol": 1e-12})
        _, diag = run_forward(p.disc, stride=10 ** 6, store_midpoints=False, certificate=False)
        g = float(np.max(diag.gauss_e_relative))
        checks.append((name, g <= 1e-10, f"max relative residual {g:.1e}"))
    record(5, checks)


def certificate_check(name, diag):
    pos = diag.certificate_rhs > 0
    ratio = float(np.max(diag.certificate_lhs[pos] / diag.certificate_rhs[pos], initial=0.0))
    return (name, diag.certificate_ok, f"max lhs/rhs {ratio:.3f}")


def test_criterion_06_stability_certificate(example1_forward):
    checks = [certificate_check("example1", example1_forward[2])]
    runs = [("example2", from_preset("example2")), ("tiny", from_preset("tiny")),
            ("manufactured", from_preset("manufactured")),
            ("example3-scaled", from_preset("example3-scaled", **EX3_GRID))]
    for name, cfg in runs:
        _, diag = run_forward(build_problem(cfg).disc, stride=10 ** 6, store_midpoints=False)
        checks.append(certificate_check(name, diag))
    record(6, checks)


def test_criterion_07_duality():
    p = small_problem(counts=(2, 2, 2), steps=8, sigma=0.5, method="dense", sources=False)
    worst = duality_defects(p.disc, 20, np.random.default_rng(7))
    record(7, [("2x2x2, 8 steps, 20 pairs", worst <= 1e-10, f"max relative defect {worst:.1e}")])


def test_criterion_08_gradient_check():
    t0 = time.perf_counter()
    p = build_problem(from_preset("tiny"))
    z = np.random.default_rng(8).standard_normal(p.disc.grid.steps * p.disc.n_ctrl)
    rep = grad_check(make_reduced_functional(p.disc, p.objective), z, n_directions=5, threshold=1e-6)
    wall = time.perf_counter() - t0
    pd = build_problem(from_preset("tiny"), {"method": "dense"})
    rep_d = grad_check(make_reduced_functional(pd.disc, pd.objective), z, n_directions=5, threshold=1e-8)
    record(8, [("tiny CG", rep.passed, f"worst {rep.worst:.1e}"),
               ("tiny dense", rep_d.passed, f"worst {rep_d.worst:.1e}"),
               ("runtime", wall < 60.0, f"{wall:.1f} s")])


def test_criterion_09_optimizer_oracle():
    t0 = time.perf_counter()
    p = build_problem(from_preset("tiny"))
    d, cfg = p.disc, p.objective
    N, nc, ne, dt = d.grid.steps, d.n_ctrl, d.n_e, d.grid.dt

    def midpoints(z):
        tr, _ = run_forward(d, z, diagnostics=False)
        return np.concatenate([tr.e_mid, tr.b_mid], axis=1).ravel()

    # control-to-observation map S (affine: u = u0 + S z) from unit controls
    u0 = midpoints(np.zeros((N, nc)))
    S = np.empty((len(u0), N * nc))
    for j in range(N * nc):
        z = np.zeros(N * nc)
        z[j] = 1.0
        S[:, j] = midpoints(z.reshape(N, nc)) - u0
    blk = np.block([[d.Me_obs.toarray(), np.zeros((ne, d.n_b))], [np.zeros((d.n_b, ne)), d.Mmu_obs.toarray()]])
    Q = np.kron(np.eye(N), dt * cfg.w_track * blk)
    R = np.kron(np.eye(N), dt * d.control_inner_matrix(cfg.alpha1, cfg.alpha2).toarray())
    H = S.T @ Q @ S + R
    z_ref = np.linalg.solve(H, -S.T @ Q @ u0)
    z, rep = minimize(d, cfg, p.optim)
    err = float(np.linalg.norm(z.z.ravel() - z_ref) / np.linalg.norm(z_ref))
    wall = time.perf_counter() - t0
    record(9, [("L-BFGS vs normal equations", err <= 1e-6,
                f"relative error {err:.1e} after {len(rep.history) - 1} iterations, cond {np.linalg.cond(H):.0f}"),
               ("runtime", wall < 300.0, f"{wall:.1f} s")])


@pytest.mark.slow
def test_criterion_10_example1(tmp_path):
    t0 = time.perf_counter()
    p = build_problem(from_preset("example1"))
    d = p.disc
    out = p.config.data["output"]
    n_snap = int(round(out["snapshot_time"] / d.grid.dt))
    line = out["line"]

    def profile(traj, tag):
        path = tmp_path / f"{tag}.mxtrj"
        write_trajectory(path, traj)
        c = read_trajectory(path)
        export_fields(tmp_path / tag, d.mesh, d, c, stride=n_snap, fmt="csv", line=line)
        prof = read_line_csv(tmp_path / tag / f"line_{n_snap:06d}.csv")
        obs = np.abs(prof["s"]) >= 12e-6
        return float(np.max(prof["E_magnitude"][obs]))

    unc, _ = run_forward(d, stride=4, store_midpoints=False, diagnostics=False)
    z, rep = minimize(d, p.objective, p.optim)
    ctl, _ = run_forward(d, z, stride=4, store_midpoints=False, diagnostics=False)
    peak_unc, peak_ctl = profile(unc, "uncontrolled"), profile(ctl, "controlled")
    wall = time.perf_counter() - t0
    J = rep.J
    red = rep.history[0].terms["tracking"] / rep.history[-1].terms["tracking"]
    iters = len(J) - 1
    record(10, [("monotone J", bool(np.all(np.diff(J) < 0)), f"{iters} iterations"),
                ("tracking reduction", red >= 100 and iters <= 200, f"factor {red:.2e}"),
                ("|E| in obs at 178 fs", peak_ctl < 0.01 * peak_unc,
                 f"{peak_ctl:.2e} vs uncontrolled {peak_unc:.2e} ({100 * peak_ctl / peak_unc:.2f}%)"),
                ("runtime", wall < 1800.0, f"{wall:.0f} s")])


def test_criterion_11_temporal_order():
    rows = convergence_study((25, 50, 100, 200), counts=16)
    rates = [r["rate"] for r in rows[1:]]
    record(11, [("rates", all(1.8 <= r <= 2.2 for r in rates), ", ".join(f"{r:.3f}" for r in rates))])


@pytest.mark.slow
def test_criterion_12_example3_scaled():
    checks = []
    grid = "48^3 x 200 steps" if FULL_EX3 else "24^3 x 100 steps"
    cfg = from_preset("example3-scaled", **EX3_GRID)
    # energy conservation on the same geometry, unforced and lossless
    pu = build_problem(parse_scenario(unforced(cfg.data)))
    pu.disc.e0, pu.disc.b0 = random_state(pu.disc, np.random.default_rng(12))
    _, diag = run_forward(pu.disc, stride=10 ** 6, store_midpoints=False, certificate=False)
    drift = float(np.max(np.abs(diag.energy - diag.energy[0])) / diag.energy[0])
    checks.append(("2 conservation", drift <= 1e-10, f"drift {drift:.1e} E0"))
    # forced run: balance, Gauss laws (CG tol 1e-12) and certificate
    p = build_problem(cfg, {"tol": 1e-12})
    _, diag = run_forward(p.disc, stride=10 ** 6, store_midpoints=False)
    bal, ge, gb = float(np.max(diag.balance_relative)), float(np.max(diag.gauss_e_relative)), gauss_b_scaled(diag)
    checks += [("3 balance", bal <= 1e-10, f"{bal:.1e}"), ("4 div b", gb <= 1e-12, f"{gb:.1e}"),
               ("5 electric Gauss", ge <= 1e-10, f"{ge:.1e}"), certificate_check("6 certificate", diag)]
    # adjoint checks on a coarser grid of the same geometry
    small = build_problem(from_preset("example3-scaled", counts=16, steps=20), {"tol": 1e-13})
    dual = duality_defects(small.disc, 5, np.random.default_rng(13))
    checks.append(("7 duality", dual <= 1e-10, f"16^3 x 20 steps, 5 pairs, {dual:.1e}"))
    z = np.random.default_rng(14).standard_normal(20 * small.disc.n_ctrl)
    rep = grad_check(make_reduced_functional(small.disc, small.objective), z, n_directions=3)
    checks.append(("8 grad-check", rep.passed, f"worst {rep.worst:.1e}"))
    # optimization
    p = build_problem(cfg)
    t0 = time.perf_counter()
    st = OptimSettings(**{**cfg.data["optimizer"], "max_iter": EX3_ITER})
    _, orep = minimize(p.disc, p.objective, st)
    red = orep.history[0].terms["tracking"] / orep.history[-1].terms["tracking"]
    checks.append(("tracking reduction", red >= 10 and orep.monotone,
                   f"factor {red:.1f} in {len(orep.history) - 1} iterations, {time.perf_counter() - t0:.0f} s, {grid}"))
    record(12, checks)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
