"""Self-checks run by ``rcnewton check``: quick randomized invariant tests.

Each check draws its own instances from a seeded generator and compares the
library against finite differences, truncated series or closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .constraints import Constraint, restricted_hessian_matrix, tangential_projection
from .geometry import christoffel, christoffel_cases, gamma_contract, metric_inner, point_data
from .kernels import Plant, dlyap, dlyap_differential, hewer_solve, is_stabilizing, spectral_radius
from .objective import Connection, hess_form
from .optimizer import Method, RunSettings, newton_direction, qmap, rc_newton, stability_certificate

__all__ = ["CheckResult", "random_stable", "random_instance", "local_start", "quadratic_tail", "refine_minimizer", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_stable(rng: np.random.Generator, n: int, radius: Optional[float] = None) -> np.ndarray:
    A = rng.standard_normal((n, n))
    target = rng.uniform(0.1, 0.95) if radius is None else radius
    return A * (target / max(spectral_radius(A), 1e-12))


def _spd(rng, n, shift=0.1):
    M = rng.standard_normal((n, n))
    return M @ M.T / n + shift * np.eye(n)


def random_instance(rng: np.random.Generator, n: int, m: int, sigma2: bool = False,
                    scale: float = 0.3) -> tuple[Plant, np.ndarray]:
    """Random plant with stable ``A`` and a small stabilizing perturbation ``K``."""
    A = random_stable(rng, n)
    B = rng.standard_normal((n, m))
    S2 = _spd(rng, m, 0.0) if sigma2 else None
    plant = Plant(A=A, B=B, Q=_spd(rng, n), R=_spd(rng, m), Sigma1=_spd(rng, n), Sigma2=S2)
    while True:
        K = scale * rng.standard_normal((m, n))
        if spectral_radius(plant.closed_loop(K)) < 0.97:
            return plant, K
        scale *= 0.5


def local_start(rng: np.random.Generator, plant: Plant, K_star, rel: float = 0.05) -> np.ndarray:
    """Stabilizing perturbation of ``K_star`` with relative Frobenius size ``rel``."""
    K_star = np.asarray(K_star, dtype=float)
    scale = rel * max(float(np.linalg.norm(K_star)), 1.0)
    while True:
        D = rng.standard_normal(K_star.shape)
        K0 = K_star + scale * D / np.linalg.norm(D)
        if is_stabilizing(plant, K0):
            return K0
        scale *= 0.5


def refine_minimizer(plant: Plant, constraint: Constraint, K, steps: int = 2) -> np.ndarray:
    """Polish a converged gain with unit Riemannian Newton steps."""
    K = np.array(K, dtype=float)
    for _ in range(steps):
        pd = point_data(plant, K)
        G, _ = newton_direction(constraint, pd, christoffel(plant, pd), Connection.RIEMANNIAN)
        if not np.any(G):
            break
        K = K + G
    return K


def quadratic_tail(trace, K_star, floor: float = 1e-13, target: float = 2.0, band: float = 0.3,
                   min_points: int = 3) -> dict:
    """Order-of-convergence test on the terminal unit-step segment of a trace.

    The tail is the trailing run of iterates reached through unit steps,
    together with the iterate those steps start from, keeping errors
    ``e_t = ||K_t - K_star||_F`` above ``floor``. The exponent estimates are
    ``log e_{t+1} / log e_t`` over consecutive tail pairs. The test passes
    when the tail has at least ``min_points`` iterates and both the final and
    the median exponent lie within ``target +- band``.
    """
    records = trace.records
    errors = [float(np.linalg.norm(r.K - K_star)) for r in records]
    start = len(records) - 1
    while start > 0 and records[start - 1].stepsize == 1.0:
        start -= 1
    tail = [t for t in range(start, len(records)) if errors[t] > floor]
    exps = [math.log(errors[t + 1]) / math.log(errors[t])
            for t in tail[:-1] if t + 1 in tail and errors[t] < 1.0]
    unit = all(records[t].stepsize == 1.0 for t in tail[:-1])
    ok = (len(tail) >= min_points and unit and bool(exps)
          and abs(exps[-1] - target) <= band and abs(float(np.median(exps)) - target) <= band)
    return {"passed": ok, "tail": tail, "exponents": exps, "errors": errors, "unit_steps": unit}


def _check_lyapunov(rng, count):
    worst_res = worst_trace = worst_fd = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 6))
        A = random_stable(rng, n)
        Z = rng.standard_normal((n, n))
        X = dlyap(A, Z)
        worst_res = max(worst_res, np.max(np.abs(X - A @ X @ A.T - Z)) / max(1.0, np.max(np.abs(Z))))
        Qm, Sm = _spd(rng, n), _spd(rng, n)
        a = np.trace(dlyap(A.T, Qm) @ Sm)
        b = np.trace(dlyap(A, Sm) @ Qm)
        worst_trace = max(worst_trace, abs(a - b) / max(1.0, abs(a)))
        E, F = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        t = 1e-6
        if spectral_radius(A) < 0.9:
            fd = (dlyap(A + t * E, Z + t * F) - dlyap(A - t * E, Z - t * F)) / (2 * t)
            an = dlyap_differential(A, Z, E, F)
            worst_fd = max(worst_fd, np.max(np.abs(fd - an)) / max(1.0, np.max(np.abs(an))))
    ok = worst_res <= 1e-10 and worst_trace <= 1e-10 and worst_fd <= 1e-5
    return ok, f"residual {worst_res:.1e}, trace identity {worst_trace:.1e}, differential {worst_fd:.1e}"


def _check_connection(rng, count):
    worst_sym = worst_compat = 0.0
    min_metric = math.inf
    for k in range(count):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        plant, K = random_instance(rng, n, m, sigma2=bool(k % 2))
        pd = point_data(plant, K)
        ct = christoffel(plant, pd)
        raw = christoffel_cases(ct.dY, pd.Y_inv)
        worst_sym = max(worst_sym, np.max(np.abs(raw - np.transpose(raw, (0, 1, 4, 5, 2, 3)))))
        V, W, U = (rng.standard_normal((m, n)) for _ in range(3))
        min_metric = min(min_metric, metric_inner(pd, V, V))
        t = 1e-6 * max(1.0, np.max(np.abs(K)))
        fd = (metric_inner(point_data(plant, K + t * U), V, W) - metric_inner(point_data(plant, K - t * U), V, W)) / (2 * t)
        an = metric_inner(pd, gamma_contract(ct, U, V), W) + metric_inner(pd, V, gamma_contract(ct, U, W))
        worst_compat = max(worst_compat, abs(fd - an) / max(1.0, abs(an)))
    ok = min_metric > 0 and worst_sym <= 1e-10 and worst_compat <= 1e-4
    return ok, f"min <V,V> {min_metric:.2e}, lower symmetry {worst_sym:.1e}, compatibility {worst_compat:.1e}"


def _check_gradient_hessian(rng, count):
    worst_grad = worst_sym = worst_h = 0.0
    for _ in range(count):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        plant, K = random_instance(rng, n, m)
        pd = point_data(plant, K)
        ct = christoffel(plant, pd)
        E, F = rng.standard_normal((m, n)), rng.standard_normal((m, n))
        t = 1e-6 * max(1.0, np.max(np.abs(K)))
        fd = (point_data(plant, K + t * E).cost - point_data(plant, K - t * E).cost) / (2 * t)
        an = metric_inner(pd, E, pd.grad)
        worst_grad = max(worst_grad, abs(fd - an) / max(1.0, abs(an)))
        for conn in Connection:
            a = hess_form(pd, ct, conn, E, F)
            b = hess_form(pd, ct, conn, F, E)
            worst_sym = max(worst_sym, abs(a - b) / (1.0 + abs(a)))
        h = 1e-4
        fd2 = (point_data(plant, K + h * E).cost - 2 * pd.cost + point_data(plant, K - h * E).cost) / h**2
        an2 = hess_form(pd, None, Connection.EUCLIDEAN, E, E)
        worst_h = max(worst_h, abs(fd2 - an2) / max(1.0, abs(an2)))
    ok = worst_grad <= 1e-5 and worst_sym <= 1e-10 and worst_h <= 1e-4
    return ok, f"gradient {worst_grad:.1e}, symmetry {worst_sym:.1e}, second difference {worst_h:.1e}"


def _check_certificate(rng, count):
    violations = 0
    bound_fail = 0
    for _ in range(count):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        plant, K = random_instance(rng, n, m)
        pd = point_data(plant, K)
        G = rng.standard_normal((m, n)) * 10.0 ** rng.uniform(-2, 1)
        s = stability_certificate(plant, pd, G, qmap(plant, K))
        eta = rng.uniform(0.0, s)
        if not is_stabilizing(plant, K + eta * G):
            violations += 1
        lq = np.linalg.eigvalsh(plant.Q)[0]
        ls = np.linalg.eigvalsh(plant.Sigma1)[0]
        bound = lq * ls / (4 * pd.cost * np.linalg.norm(plant.B @ G, 2))
        if s < bound * (1 - 1e-12):
            bound_fail += 1
    return violations == 0 and bound_fail == 0, f"{violations} stability violations, {bound_fail} bound failures"


def _check_unconstrained(rng, count):
    worst = 0.0
    for _ in range(count):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        plant, _ = random_instance(rng, n, m)
        ref = hewer_solve(plant, np.zeros((m, n)))
        con = Constraint.unconstrained((m, n))
        K0 = local_start(rng, plant, ref.K)
        for method in (Method.RCN_RIEMANNIAN, Method.RCN_EUCLIDEAN):
            tr = rc_newton(plant, con, K0, RunSettings(method=method, max_iters=200))
            if not tr.converged:
                return False, f"{method.value} did not converge ({tr.status.value})"
            worst = max(worst, np.max(np.abs(tr.K - ref.K)))
    return worst <= 1e-8, f"max |K_newton - K_hewer| {worst:.1e}"


def _check_projection(rng, count):
    worst = 0.0
    for _ in range(count):
        n, m = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        plant, _ = random_instance(rng, n, m)
        d = int(rng.integers(1, n + 1))
        con = Constraint.output_feedback(rng.standard_normal((d, n)), m)
        K = con.embed(0.1 * rng.standard_normal(con.frame_dim))
        if not is_stabilizing(plant, K):
            continue
        pd = point_data(plant, K)
        E, F = rng.standard_normal((m, n)), rng.standard_normal((m, n))
        PE, PF = tangential_projection(con, pd, E), tangential_projection(con, pd, F)
        worst = max(worst, abs(metric_inner(pd, PE, F) - metric_inner(pd, E, PF)) / (1 + abs(metric_inner(pd, PE, F))))
        worst = max(worst, np.max(np.abs(tangential_projection(con, pd, PE) - PE)) / (1 + np.max(np.abs(PE))))
        H = restricted_hessian_matrix(con, pd, christoffel(plant, pd), Connection.RIEMANNIAN)
        worst = max(worst, np.max(np.abs(H - H.T)) / (1 + np.max(np.abs(H))))
    return worst <= 1e-9, f"self-adjointness / idempotence / Hessian symmetry {worst:.1e}"


CHECKS: list[tuple[str, Callable, int, int]] = [
    # name, function, quick count, full count
    ("lyapunov", _check_lyapunov, 50, 500),
    ("connection", _check_connection, 10, 50),
    ("gradient_hessian", _check_gradient_hessian, 10, 30),
    ("certificate", _check_certificate, 100, 1000),
    ("unconstrained", _check_unconstrained, 3, 20),
    ("projection", _check_projection, 10, 50),
]


def run_checks(seed: int = 0, full: bool = False) -> list[CheckResult]:
    results = []
    for k, (name, fn, quick, count) in enumerate(CHECKS):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1000 + k])))
        ok, detail = fn(rng, count if full else quick)
        results.append(CheckResult(name, bool(ok), detail))
    return results
