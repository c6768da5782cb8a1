"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict (with the measured numbers and
runtime) that is printed in the pytest terminal summary, then asserts it.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from rcnewton import (
    Connection,
    Constraint,
    Method,
    RunSettings,
    Status,
    christoffel,
    dlyap,
    dlyap_differential,
    gamma_contract,
    hess_form,
    hewer_solve,
    metric_coefficients,
    metric_inner,
    point_data,
    qmap,
    rc_newton,
    restricted_hessian_matrix,
    spectral_radius,
    stability_certificate,
    tangential_projection,
)
from rcnewton.bench import (
    EnsembleSpec,
    landscape_summary,
    parse_grid,
    random_constraint,
    random_plant,
    run_ensemble,
    run_landscape,
)
from rcnewton.checks import local_start, quadratic_tail, random_instance, random_stable, refine_minimizer
from rcnewton.cli import main as cli_main
from rcnewton.geometry import christoffel_cases
from rcnewton.problems import two_state_diagonal, two_state_output, two_state_plant

from conftest import ACCEPTANCE_LINES
from oracles import (
    central_difference,
    christoffel_from_metric,
    closed_loop_gramian,
    metric_matrix,
    second_difference,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# starts spread over the diagonal-gain stabilizing set, in frame coordinates (l1, l2)
SLQR_STARTS = [(0.3, -1.0), (0.15, -1.4), (-0.15, -1.0), (-0.3, -1.0), (-0.45, -1.0), (0.1, -0.9), (-0.15, -0.6)]
# output-feedback starts in L coordinates
OLQR_STARTS = [(-1.5, -0.9), (-0.9, -1.3), (-0.7, -0.9), (-0.3, -0.5), (-0.1, -1.5), (0.1, -1.1), (-0.5, -0.5)]
LANDSCAPE_GRID = "-1:1:300,-3:1:300"


def record(key, title, passed, detail, started, extra=""):
    elapsed = time.perf_counter() - started
    line = f"{'PASS' if passed else 'FAIL'} criterion {key} ({title}): {detail} [{elapsed:.1f} s]"
    if extra:
        line += f"\n     diagnostics: {extra}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    return elapsed


def test_criterion_01_lyapunov_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_res = worst_trace = worst_fd = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 6))
        A = random_stable(rng, n)
        Z = rng.standard_normal((n, n))
        X = dlyap(A, Z)
        worst_res = max(worst_res, np.max(np.abs(X - A @ X @ A.T - Z)) / max(1.0, np.max(np.abs(Z))))
        M, N = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        Qm, Sm = M @ M.T, N @ N.T
        a, b = np.trace(dlyap(A.T, Qm) @ Sm), np.trace(dlyap(A, Sm) @ Qm)
        worst_trace = max(worst_trace, abs(a - b) / max(abs(a), 1e-300))
        E, F = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        h = 1e-6
        fd = (dlyap(A + h * E, Z + h * F) - dlyap(A - h * E, Z - h * F)) / (2 * h)
        an = dlyap_differential(A, Z, E, F)
        worst_fd = max(worst_fd, np.max(np.abs(fd - an)) / max(np.max(np.abs(an)), 1e-300))
    passed = worst_res <= 1e-10 and worst_trace <= 1e-10 and worst_fd <= 1e-5
    elapsed = record("1", "Lyapunov suite", passed,
                     f"500 instances; residual {worst_res:.1e} (<=1e-10), trace identity {worst_trace:.1e} (<=1e-10), "
                     f"differential {worst_fd:.1e} (<=1e-5)", t0)
    assert passed and elapsed < 30


def test_criterion_02_metric_connection_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    min_eig = math.inf
    worst_sym = worst_oracle = worst_compat = 0.0
    for k in range(50):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        plant, K = random_instance(rng, n, m, sigma2=bool(k % 2))
        pd = point_data(plant, K)
        min_eig = min(min_eig, np.linalg.eigvalsh(metric_coefficients(pd))[0])
        ct = christoffel(plant, pd)
        raw = christoffel_cases(ct.dY, pd.Y_inv)
        worst_sym = max(worst_sym, np.max(np.abs(raw - np.transpose(raw, (0, 1, 4, 5, 2, 3))))
                        / max(1.0, np.max(np.abs(raw))))

        def metric_at(X):
            return metric_matrix(closed_loop_gramian(plant.A, plant.B, plant.Sigma1, plant.Sigma2, X), m)

        ref = christoffel_from_metric(metric_at, K, t=1e-5)
        N = m * n
        worst_oracle = max(worst_oracle, np.max(np.abs(ct.gamma.reshape(N, N, N) - ref)) / max(1.0, np.max(np.abs(ref))))
        U, V, W = (rng.standard_normal((m, n)) for _ in range(3))
        fd = central_difference(lambda X: metric_inner(point_data(plant, X), V, W), K, U, 1e-6)
        an = metric_inner(pd, gamma_contract(ct, U, V), W) + metric_inner(pd, V, gamma_contract(ct, U, W))
        worst_compat = max(worst_compat, abs(fd - an) / max(1.0, abs(an)))
    passed = min_eig > 0 and worst_sym <= 1e-12 and worst_oracle <= 1e-4 and worst_compat <= 1e-4
    elapsed = record("2", "metric/connection suite", passed,
                     f"50 points; min metric eigenvalue {min_eig:.2e} (>0), lower symmetry {worst_sym:.1e}, "
                     f"generic-formula oracle {worst_oracle:.1e} (<=1e-4), compatibility {worst_compat:.1e} (<=1e-4)", t0)
    assert passed and elapsed < 120


def test_criterion_03_gradient_hessian_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst_grad = worst_sym = worst_second = worst_coincide = 0.0
    for _ in range(30):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        plant, K = random_instance(rng, n, m)
        pd = point_data(plant, K)
        ct = christoffel(plant, pd)
        f = lambda X: point_data(plant, X).cost  # noqa: E731
        for _ in range(20):
            E = rng.standard_normal((m, n))
            fd = central_difference(f, K, E, 1e-6)
            an = metric_inner(pd, E, pd.grad)
            worst_grad = max(worst_grad, abs(fd - an) / max(1.0, abs(an)))
        E, F = rng.standard_normal((m, n)), rng.standard_normal((m, n))
        for conn in Connection:
            a, b = hess_form(pd, ct, conn, E, F), hess_form(pd, ct, conn, F, E)
            worst_sym = max(worst_sym, abs(a - b) / max(1.0, abs(a)))
        an2 = hess_form(pd, None, Connection.EUCLIDEAN, E, E)
        worst_second = max(worst_second, abs(second_difference(f, K, E, 1e-4) - an2) / max(1.0, abs(an2)))
        K_opt = hewer_solve(plant, np.zeros((m, n))).K
        pd_opt = point_data(plant, K_opt)
        ct_opt = christoffel(plant, pd_opt)
        riem = hess_form(pd_opt, ct_opt, Connection.RIEMANNIAN, E, F)
        euc = hess_form(pd_opt, ct_opt, Connection.EUCLIDEAN, E, F)
        worst_coincide = max(worst_coincide, abs(riem - euc) / max(1.0, abs(euc)))
    passed = worst_grad <= 1e-5 and worst_sym <= 1e-10 and worst_second <= 1e-4 and worst_coincide <= 1e-8
    record("3", "gradient/Hessian suite", passed,
           f"30 points x 20 directions; gradient {worst_grad:.1e} (<=1e-5), symmetry {worst_sym:.1e} (<=1e-10), "
           f"second difference {worst_second:.1e} (<=1e-4), Riemannian=Euclidean at optimum {worst_coincide:.1e} (<=1e-8)", t0)
    assert passed


def test_criterion_04_certificate_soundness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    violations = bound_failures = 0
    for _ in range(1000):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        plant, K = random_instance(rng, n, m)
        pd = point_data(plant, K)
        G = rng.standard_normal((m, n)) * 10.0 ** rng.uniform(-2, 2)
        s = stability_certificate(plant, pd, G, qmap(plant, K))
        for eta in (s, rng.uniform(0.0, s)):
            if not spectral_radius(plant.closed_loop(K + eta * G)) < 1.0:
                violations += 1
        bound = (np.linalg.eigvalsh(plant.Q)[0] * np.linalg.eigvalsh(plant.Sigma1)[0]
                 / (4 * pd.cost * np.linalg.norm(plant.B @ G, 2)))
        if s < bound * (1 - 1e-12):
            bound_failures += 1
    passed = violations == 0 and bound_failures == 0
    record("4", "certificate soundness", passed,
           f"1000 cases (eta = s_K and eta ~ U(0, s_K)); {violations} stability violations, "
           f"{bound_failures} lower-bound failures", t0)
    assert passed


def test_criterion_05_unconstrained_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    worst_K = worst_grad = 0.0
    failures = []
    from_zero = {Method.RCN_RIEMANNIAN: 0, Method.RCN_EUCLIDEAN: 0}
    for k in range(20):
        n, m = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        plant, _ = random_instance(rng, n, m)
        con = Constraint.unconstrained((m, n))
        ref = hewer_solve(plant, np.zeros((m, n)))
        # Newton is a local method: start from a 5% perturbation of the optimum
        K0 = local_start(rng, plant, ref.K)
        for method in from_zero:
            tr = rc_newton(plant, con, K0, RunSettings(method=method, max_iters=100))
            if not tr.converged:
                failures.append(f"plant {k} {method.value}: {tr.status.value}")
                continue
            worst_K = max(worst_K, np.max(np.abs(tr.K - ref.K)))
            worst_grad = max(worst_grad, tr.final.grad_norm)
            if rc_newton(plant, con, np.zeros((m, n)), RunSettings(method=method, max_iters=100)).converged:
                from_zero[method] += 1
    passed = not failures and worst_K <= 1e-8 and worst_grad <= 1e-8
    record("5", "unconstrained equivalence", passed,
           f"20 plants, both connections from local starts; max |K - K_hewer| {worst_K:.1e} (<=1e-8), "
           f"max grad norm {worst_grad:.1e} (<=1e-8){'; ' + ', '.join(failures) if failures else ''}", t0,
           extra="from K0 = 0: " + ", ".join(f"{m.value} {c}/20 converged" for m, c in from_zero.items()))
    assert passed


def test_criterion_06_two_state_reproduction():
    t0 = time.perf_counter()
    plant = two_state_plant()
    riem = RunSettings(method=Method.RCN_RIEMANNIAN, max_iters=60)
    euc = RunSettings(method=Method.RCN_EUCLIDEAN, max_iters=60)
    counts, iters, witnesses = {}, {}, []
    for name, con, starts in (("SLQR", two_state_diagonal(), SLQR_STARTS), ("OLQR", two_state_output(), OLQR_STARTS)):
        ok = 0
        its = []
        for start in starts:
            K0 = con.embed(start)
            tr = rc_newton(plant, con, K0, riem)
            good = tr.converged and tr.final.grad_norm < 1e-10 and tr.iterations <= 60
            ok += good
            its.append(tr.iterations)
            e = rc_newton(plant, con, K0, euc)
            if good and e.status is Status.HESSIAN_NOT_PD:
                witnesses.append(f"{name} {start}")
        counts[name], iters[name] = ok, its
    passed = counts["SLQR"] >= 5 and counts["OLQR"] >= 5 and bool(witnesses)
    elapsed = record("6", "two-state reproduction", passed,
                     f"SLQR {counts['SLQR']}/{len(SLQR_STARTS)} converged (iterations {iters['SLQR']}), "
                     f"OLQR {counts['OLQR']}/{len(OLQR_STARTS)} (iterations {iters['OLQR']}); "
                     f"Euclidean hessian_not_pd where Riemannian converges at {len(witnesses)} start(s), "
                     f"e.g. {witnesses[0] if witnesses else 'none'}", t0)
    assert passed and elapsed < 60


def test_criterion_07_quadratic_tail():
    t0 = time.perf_counter()
    plant = two_state_plant()
    riem = RunSettings(method=Method.RCN_RIEMANNIAN, max_iters=200)
    cases = [("SLQR", plant, two_state_diagonal(), np.diag([0.1, -0.9])),
             ("OLQR", plant, two_state_output(), two_state_output().embed([-0.5, -0.5]))]
    spec = EnsembleSpec()
    index = 0
    found = 0
    while found < 10 and index < 100:
        p = random_plant(spec, index)
        con = random_constraint(spec, index, p)
        tr = rc_newton(p, con, np.zeros((spec.m, spec.n)), riem.replace(max_iters=spec.budget))
        if tr.converged:
            cases.append((f"ensemble {index}", p, con, None))
            found += 1
        index += 1
    results = []
    for name, p, con, K0 in cases:
        K0 = np.zeros((p.m, p.n)) if K0 is None else K0
        tr = rc_newton(p, con, K0, riem)
        K_star = refine_minimizer(p, con, tr.K)
        q = quadratic_tail(tr, K_star)
        results.append((name, q))
    failed = [n for n, q in results if not q["passed"]]
    last = [q["exponents"][-1] for _, q in results if q["exponents"]]
    passed = not failed and len(results) == 12
    record("7", "quadratic tail", passed,
           f"{len(results) - len(failed)}/{len(results)} runs pass (exponent 2 +- 0.3 over >= 3 unit-step tail points); "
           f"final exponents {min(last):.2f}..{max(last):.2f}{'; failing ' + ', '.join(failed) if failed else ''}", t0)
    assert passed


@pytest.mark.slow
def test_criterion_08_ensembles():
    t0 = time.perf_counter()
    slqr = run_ensemble(EnsembleSpec(constraint="sparsity",
                                     methods=("rcn_riemannian", "rcn_euclidean", "projected_gradient"),
                                     max_iters=30, budget=30))
    olqr = run_ensemble(EnsembleSpec(constraint="output_feedback", methods=("rcn_riemannian", "rcn_euclidean"),
                                     max_iters=50, budget=50))
    s_riem = slqr.success_fraction("rcn_riemannian")
    o_riem, o_euc = olqr.success_fraction("rcn_riemannian"), olqr.success_fraction("rcn_euclidean")
    indefinite = slqr.summary()["methods"]["rcn_riemannian"]["hessian_not_pd"]
    passed = s_riem >= 0.9 and o_riem >= o_euc and o_riem >= 0.8 and o_euc >= 0.8
    # the same ensembles with a less marginal open loop, for context only
    soft = [run_ensemble(EnsembleSpec(constraint=c, methods=("rcn_riemannian", "rcn_euclidean"), max_iters=b,
                                      budget=b, A_target_radius=0.7)) for c, b in (("sparsity", 30), ("output_feedback", 50))]
    solved = {r["index"] for r in slqr.rows
              if r["method"] == "rcn_riemannian" and r["status"] == "converged" and r["iterations"] <= 30}
    pg_err = [r["final_error"] for r in slqr.rows if r["method"] == "projected_gradient" and r["index"] in solved]
    pg_slow = sum(1 for e in pg_err if not e <= 1e-3)
    extra = (f"projected gradient stays above 1e-3 normalized error after 30 iterations on {pg_slow}/{len(pg_err)} "
             f"plants Riemannian Newton solved (median {np.median(pg_err):.1e}); "
             f"SLQR Euclidean {slqr.success_fraction('rcn_euclidean'):.0%}; {indefinite} Riemannian SLQR runs stop "
             f"on an indefinite restricted Hessian; at open-loop radius 0.7: SLQR {soft[0].success_fraction('rcn_riemannian'):.0%}"
             f"/{soft[0].success_fraction('rcn_euclidean'):.0%}, OLQR {soft[1].success_fraction('rcn_riemannian'):.0%}"
             f"/{soft[1].success_fraction('rcn_euclidean'):.0%} (Riemannian/Euclidean)")
    elapsed = record("8", "random ensembles", passed,
                     f"seed 0, open-loop radius 0.9: SLQR Riemannian {s_riem:.0%} within 30 (>=90%); "
                     f"OLQR Riemannian {o_riem:.0%} vs Euclidean {o_euc:.0%} within 50 (R >= E, both >=80%)", t0, extra)
    assert passed and elapsed < 600


@pytest.mark.slow
def test_criterion_09_landscape_containment():
    t0 = time.perf_counter()
    grid = parse_grid(LANDSCAPE_GRID)
    rows = run_landscape(two_state_plant(), two_state_diagonal(), grid)
    s = landscape_summary(rows, grid)
    nx, ny = grid.nx, grid.ny
    stab = np.array([r[2] and math.isfinite(r[3]) for r in rows]).reshape(nx, ny)
    riem = np.array([r[2] and r[4] > 0 for r in rows]).reshape(nx, ny)
    euc = np.array([r[2] and r[5] > 0 for r in rows]).reshape(nx, ny)
    viol = euc & ~riem
    # boundary of the Riemannian region or the stabilizing set, 4-neighbourhood
    pr, ps = np.pad(riem, 1, mode="edge"), np.pad(stab, 1, mode="edge")
    boundary = np.zeros_like(viol)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        boundary |= (pr[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny] != riem) | (ps[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny] != stab)
    interior = int((viol & ~boundary).sum())
    n_stab = int(stab.sum())
    fraction = viol.sum() / n_stab
    proper = (riem & ~euc).sum() / n_stab
    passed = n_stab >= 100 * 100 and interior == 0 and fraction <= 0.01 and proper >= 0.05
    xs, ys = grid.axes()
    vi, vj = np.nonzero(viol)
    columns = int(np.sum(np.abs(xs[vi]) < 0.1))
    rows_near = int(np.sum(np.abs(1 + ys[vj]) < 0.05))
    where = f"{columns} violations at |l1| < 0.1, {rows_near} at |1 + l2| < 0.05"
    if vi.size:
        # confirm the first violating cell independently: curvature of the cost along a
        # second-order curve in the lowest Riemannian eigendirection
        k = int(np.argmax(np.abs(xs[vi])))
        con, plant = two_state_diagonal(), two_state_plant()
        K = con.embed([xs[vi[k]], ys[vj[k]]])
        pd = point_data(plant, K)
        ct = christoffel(plant, pd)
        H = restricted_hessian_matrix(con, pd, ct, Connection.RIEMANNIAN)
        w, U = np.linalg.eigh(0.5 * (H + H.T))
        E = con.embed(U[:, 0])
        corr = tangential_projection(con, pd, gamma_contract(ct, E, E))
        h = 1e-4
        along = [point_data(plant, K + t * E - 0.5 * t * t * corr).cost for t in (-h, 0.0, h)]
        curvature = (along[0] - 2 * along[1] + along[2]) / h**2
        where += (f"; at diag({xs[vi[k]]:.3f}, {ys[vj[k]]:.3f}) the Riemannian min eigenvalue is {w[0]:.3e}"
                  f" and the curve oracle gives {curvature:.3e}")
    record("9", "landscape containment", passed,
           f"grid {LANDSCAPE_GRID}, {n_stab} stabilizing cells (>=10000); Euc-PD but not Riem-PD on {int(viol.sum())} "
           f"cells = {fraction:.2%} (<=1%), {interior} away from a region boundary (0); proper on {proper:.1%} (>=5%)",
           t0, extra=f"{where}; summary {json.dumps({k: s[k] for k in ('violations', 'interior_violations')})}")
    assert passed


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    spec = {**json.loads((CONFIGS / "ensemble_slqr.json").read_text()), "count": 10}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    compared = []
    for label, argv, files in (
        ("solve SLQR", ["solve", str(CONFIGS / "two_state_slqr.json")], ["trace.csv", "summary.json"]),
        ("solve random", ["solve", str(CONFIGS / "random_unconstrained.json"), "--seed", "12"], ["trace.csv", "summary.json"]),
        ("ensemble", ["ensemble", str(spec_path), "--seed", "4"],
         ["ensemble_runs.csv", "ensemble_curves.csv", "ensemble_summary.json"]),
        ("ensemble parallel", ["ensemble", str(spec_path), "--seed", "4", "--workers", "3"],
         ["ensemble_runs.csv", "ensemble_curves.csv", "ensemble_summary.json"]),
    ):
        outs = []
        for rep in range(2):
            out = tmp_path / f"{label.replace(' ', '_')}_{rep}"
            cli_main(argv + ["--out", str(out)])
            outs.append(out)
        same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
        compared.append((label, same))
    # serial and parallel ensembles must agree too
    cross = all((tmp_path / "ensemble_0" / f).read_bytes() == (tmp_path / "ensemble_parallel_0" / f).read_bytes()
                for f in ("ensemble_runs.csv", "ensemble_curves.csv"))
    passed = all(s for _, s in compared) and cross
    record("10", "determinism", passed,
           ", ".join(f"{label} {'identical' if s else 'DIFFERENT'}" for label, s in compared)
           + f", serial vs parallel {'identical' if cross else 'DIFFERENT'}", t0)
    assert passed
