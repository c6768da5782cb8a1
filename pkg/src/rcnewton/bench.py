"""Random plant ensembles, comparative runs and two-parameter landscape grids."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .constraints import Constraint, restricted_gradient, restricted_hessian_matrix
from .errors import ContractError, GenerationError, NumericalError, RCNewtonError
from .geometry import christoffel, point_data
from .kernels import Plant, is_stabilizing, pbh_controllable, spectral_radius
from .objective import Connection
from .optimizer import Method, RunSettings, run

__all__ = [
    "EnsembleSpec",
    "rng_for",
    "random_plant",
    "random_sparsity",
    "random_output_matrix",
    "random_constraint",
    "EnsembleResult",
    "run_ensemble",
    "LandscapeGrid",
    "parse_grid",
    "run_landscape",
    "landscape_summary",
]

MAX_RESAMPLES = 100
# separate counter streams so changing one recipe never perturbs the other
_PLANT_STREAM = 0
_CONSTRAINT_STREAM = 1


@dataclass(frozen=True)
class EnsembleSpec:
    """Recipe for a random ensemble of plants and constraints.

    ``constraint`` is ``"sparsity"`` (random patterns with at least half the
    gain entries zero) or ``"output_feedback"`` (random ``d x n`` output
    matrices); ``budget`` is the iteration count a run must converge within to
    count as a success.
    """

    n: int = 6
    m: int = 3
    d: int = 2
    count: int = 100
    seed: int = 0
    A_target_radius: float = 0.9
    constraint: str = "sparsity"
    methods: tuple = ("rcn_riemannian", "rcn_euclidean", "projected_gradient")
    max_iters: int = 50
    budget: int = 30
    grad_tol: float = 1e-10
    reference_max_iters: int = 1000

    def __post_init__(self):
        for name in ("n", "m", "d", "count", "max_iters", "budget", "reference_max_iters"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ContractError(f"{name} must be a positive integer")
        if self.d > self.n:
            raise ContractError("d must not exceed n")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ContractError("seed must be a nonnegative integer")
        if not 0.0 < float(self.A_target_radius) < 1.0:
            raise ContractError("A_target_radius must lie in (0, 1)")
        if self.constraint not in ("sparsity", "output_feedback"):
            raise ContractError("constraint must be 'sparsity' or 'output_feedback'")
        methods = tuple(Method(m).value for m in self.methods)
        if not methods:
            raise ContractError("methods must be nonempty")
        if "hewer" in methods:
            raise ContractError("Hewer's iteration does not apply to constrained ensembles")
        object.__setattr__(self, "methods", methods)
        if not self.grad_tol > 0:
            raise ContractError("grad_tol must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleSpec":
        if not isinstance(data, dict):
            raise ContractError("ensemble spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known - {"schema_version"}
        if extra:
            raise ContractError(f"unknown ensemble field(s): {', '.join(sorted(extra))}")
        kwargs = {k: v for k, v in data.items() if k in known}
        if "methods" in kwargs:
            if not isinstance(kwargs["methods"], list):
                raise ContractError("methods must be a list of method names")
            kwargs["methods"] = tuple(kwargs["methods"])
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ContractError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out

    def replace(self, **changes) -> "EnsembleSpec":
        return replace(self, **changes)

    def settings(self, method: str, max_iters: Optional[int] = None) -> RunSettings:
        return RunSettings(method=method, grad_tol=self.grad_tol,
                           max_iters=self.max_iters if max_iters is None else max_iters)


def rng_for(seed: int, index: int, stream: int = _PLANT_STREAM) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, index, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index), int(stream)])))


def random_plant(spec: EnsembleSpec, index: int) -> Plant:
    """Plant ``index`` of the ensemble: Gaussian ``(A, B)``, ``A`` rescaled to the target radius.

    ``Q = Sigma1 = I_n`` and ``R = I_m``. Draws are repeated until ``(A, B)``
    is controllable.
    """
    rng = rng_for(spec.seed, index, _PLANT_STREAM)
    n, m = spec.n, spec.m
    for _ in range(MAX_RESAMPLES):
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        rho = spectral_radius(A)
        if rho == 0.0:
            continue
        A *= spec.A_target_radius / rho
        if pbh_controllable(A, B):
            return Plant(A=A, B=B, Q=np.eye(n), R=np.eye(m), Sigma1=np.eye(n))
    raise GenerationError(f"no controllable pair after {MAX_RESAMPLES} draws (index {index})")


def random_sparsity(spec: EnsembleSpec, index: int, plant: Plant) -> Constraint:
    """Random support with at least ``ceil(mn / 2)`` zeros, uniform over such patterns.

    Patterns whose restricted gradient vanishes at ``K = 0`` are redrawn.
    """
    rng = rng_for(spec.seed, index, _CONSTRAINT_STREAM)
    m, n = spec.m, spec.n
    total = m * n
    sizes = np.arange(1, total - math.ceil(total / 2) + 1)
    weights = np.array([math.comb(total, int(k)) for k in sizes], dtype=float)
    weights /= weights.sum()
    pd0 = point_data(plant, np.zeros((m, n)))
    for _ in range(MAX_RESAMPLES):
        k = int(rng.choice(sizes, p=weights))
        flat = np.sort(rng.choice(total, size=k, replace=False))
        con = Constraint.sparsity([divmod(int(f), n) for f in flat], (m, n))
        if restricted_gradient(con, pd0).norm > 1e-12:
            return con
    raise GenerationError(f"no nondegenerate sparsity pattern after {MAX_RESAMPLES} draws (index {index})")


def random_output_matrix(spec: EnsembleSpec, index: int) -> Constraint:
    """Standard normal ``d x n`` output matrix (redrawn if rank deficient)."""
    rng = rng_for(spec.seed, index, _CONSTRAINT_STREAM)
    for _ in range(MAX_RESAMPLES):
        C = rng.standard_normal((spec.d, spec.n))
        try:
            return Constraint.output_feedback(C, spec.m)
        except ContractError:
            continue
    raise GenerationError(f"no full-rank output matrix after {MAX_RESAMPLES} draws (index {index})")


def random_constraint(spec: EnsembleSpec, index: int, plant: Plant) -> Constraint:
    if spec.constraint == "sparsity":
        return random_sparsity(spec, index, plant)
    return random_output_matrix(spec, index)


def _errors(trace, K_ref: Optional[np.ndarray]) -> list:
    if K_ref is None:
        return [math.nan] * len(trace.records)
    scale = max(float(np.linalg.norm(K_ref)), 1e-300)
    return [float(np.linalg.norm(r.K - K_ref)) / scale for r in trace.records]


def _run_case(args) -> dict:
    """One plant, every method. Runs in a worker process."""
    spec, index = args
    out = {"index": index, "error": "", "runs": []}
    try:
        plant = random_plant(spec, index)
        con = random_constraint(spec, index, plant)
    except RCNewtonError as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
        return out
    K0 = np.zeros((spec.m, spec.n))
    # reference minimizer: Riemannian Newton with a generous budget
    K_ref = None
    try:
        ref = run(plant, con, K0, spec.settings("rcn_riemannian", spec.reference_max_iters))
        if ref.converged:
            K_ref = ref.K
    except RCNewtonError:
        pass
    for method in spec.methods:
        row = {"method": method}
        try:
            trace = run(plant, con, K0, spec.settings(method))
        except RCNewtonError as exc:
            row.update(status="error", iterations=-1, final_cost=math.nan, final_grad_norm=math.nan,
                       final_error=math.nan, curve=[], message=f"{type(exc).__name__}: {exc}")
            out["runs"].append(row)
            continue
        curve = _errors(trace, K_ref)
        final = trace.final
        row.update(
            status=trace.status.value,
            iterations=trace.iterations,
            final_cost=final.cost if final else math.nan,
            final_grad_norm=final.grad_norm if final else math.nan,
            final_error=curve[-1] if curve else math.nan,
            curve=curve,
            message=trace.message,
        )
        out["runs"].append(row)
    return out


@dataclass
class EnsembleResult:
    """Per-run rows plus per-method error-curve envelopes.

    ``curves[method]`` is an array of shape ``(max_iters + 1, 3)`` holding
    the min, median and max normalized error at each iteration across plants
    with a reference minimizer; a finished run contributes its final error to
    later iterations.
    """

    spec: EnsembleSpec
    rows: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def success_fraction(self, method: str, budget: Optional[int] = None) -> float:
        budget = self.spec.budget if budget is None else budget
        rows = [r for r in self.rows if r["method"] == method]
        if not rows:
            return math.nan
        ok = sum(1 for r in rows if r["status"] == "converged" and r["iterations"] <= budget)
        return ok / self.spec.count

    def summary(self) -> dict:
        out = {"spec": self.spec.to_dict(), "generation_failures": len(self.failures), "methods": {}}
        for method in self.spec.methods:
            rows = [r for r in self.rows if r["method"] == method]
            iters = [r["iterations"] for r in rows if r["status"] == "converged"]
            out["methods"][method] = {
                "runs": len(rows),
                "converged": len(iters),
                "converged_within_budget": sum(1 for i in iters if i <= self.spec.budget),
                "success_fraction": self.success_fraction(method),
                "median_iterations": float(np.median(iters)) if iters else None,
                "hessian_not_pd": sum(1 for r in rows if r["status"] == "hessian_not_pd"),
            }
        return out


def _envelope(curves: list, length: int) -> np.ndarray:
    env = np.full((length, 3), np.nan)
    padded = []
    for c in curves:
        if not c or not np.isfinite(c[-1]):
            continue
        padded.append(np.concatenate([c, np.full(max(length - len(c), 0), c[-1])])[:length])
    if padded:
        M = np.array(padded)
        env[:, 0] = M.min(axis=0)
        env[:, 1] = np.median(M, axis=0)
        env[:, 2] = M.max(axis=0)
    return env


def run_ensemble(spec: EnsembleSpec, methods: Optional[Sequence[str]] = None,
                 workers: Optional[int] = None) -> EnsembleResult:
    """Run every method on every plant of the ensemble from ``K0 = 0``.

    Plants are independent and may run in a process pool; results are merged
    in index order so the output does not depend on scheduling.
    """
    if methods is not None:
        spec = spec.replace(methods=tuple(methods))
    jobs = [(spec, i) for i in range(spec.count)]
    if workers is None or workers <= 1:
        cases = [_run_case(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cases = list(pool.map(_run_case, jobs, chunksize=max(1, spec.count // (4 * workers))))
    result = EnsembleResult(spec)
    per_method = {m: [] for m in spec.methods}
    for case in sorted(cases, key=lambda c: c["index"]):
        if case["error"]:
            result.failures.append((case["index"], case["error"]))
            for method in spec.methods:
                result.rows.append({"index": case["index"], "method": method, "status": "generation_error",
                                    "iterations": -1, "final_cost": math.nan, "final_grad_norm": math.nan,
                                    "final_error": math.nan, "message": case["error"]})
            continue
        for r in case["runs"]:
            per_method[r["method"]].append(r.pop("curve"))
            result.rows.append({"index": case["index"], **r})
    for method, curves in per_method.items():
        result.curves[method] = _envelope(curves, spec.max_iters + 1)
    return result


@dataclass(frozen=True)
class LandscapeGrid:
    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(self.x_min, self.x_max, self.nx), np.linspace(self.y_min, self.y_max, self.ny)


def parse_grid(text: str) -> LandscapeGrid:
    """Parse ``"xmin:xmax:nx,ymin:ymax:ny"``."""
    try:
        xs, ys = text.split(",")
        x0, x1, nx = xs.split(":")
        y0, y1, ny = ys.split(":")
        grid = LandscapeGrid(float(x0), float(x1), int(nx), float(y0), float(y1), int(ny))
    except ValueError as exc:
        raise ContractError(f"grid must look like 'xmin:xmax:nx,ymin:ymax:ny', got {text!r}") from exc
    if grid.nx < 1 or grid.ny < 1 or not (grid.x_max >= grid.x_min and grid.y_max >= grid.y_min):
        raise ContractError("grid counts must be positive and bounds ordered")
    if not all(map(math.isfinite, (grid.x_min, grid.x_max, grid.y_min, grid.y_max))):
        raise ContractError("grid bounds must be finite")
    return grid


def run_landscape(plant: Plant, constraint: Constraint, grid: LandscapeGrid) -> list:
    """Evaluate cost and restricted-Hessian spectra over a grid of frame coordinates.

    Returns rows ``(x, y, stabilizing, cost, riem_min_eig, euc_min_eig)``;
    non-stabilizing cells, and marginal cells whose Lyapunov systems are
    numerically singular, carry ``nan`` values.
    """
    if constraint.frame_dim != 2:
        raise ContractError(f"landscape needs a two-dimensional constraint, got frame_dim {constraint.frame_dim}")
    xs, ys = grid.axes()
    rows = []
    for x in xs:
        for y in ys:
            K = constraint.embed([x, y])
            if not is_stabilizing(plant, K):
                rows.append((float(x), float(y), False, math.nan, math.nan, math.nan))
                continue
            try:
                pd = point_data(plant, K)
                rgrad = restricted_gradient(constraint, pd)
                ct = christoffel(plant, pd)
                eigs = []
                for conn, tensor in ((Connection.RIEMANNIAN, ct), (Connection.EUCLIDEAN, None)):
                    H = restricted_hessian_matrix(constraint, pd, tensor, conn, rgrad=rgrad)
                    eigs.append(float(np.linalg.eigvalsh(0.5 * (H + H.T))[0]))
            except NumericalError:
                # marginally stable cell whose Lyapunov system is singular in floating point
                rows.append((float(x), float(y), True, math.nan, math.nan, math.nan))
                continue
            rows.append((float(x), float(y), True, pd.cost, eigs[0], eigs[1]))
    return rows


def landscape_summary(rows: list, grid: LandscapeGrid) -> dict:
    """Containment statistics between the two positive-definite regions.

    Only evaluated stabilizing cells count. A violation is a stabilizing cell where the Euclidean Hessian is positive
    definite but the Riemannian one is not; it counts as a boundary violation
    when a 4-neighbour cell differs in Riemannian definiteness or stability.
    """
    nx, ny = grid.nx, grid.ny
    stab = np.array([r[2] and math.isfinite(r[3]) for r in rows]).reshape(nx, ny)
    riem = np.array([r[2] and r[4] > 0 for r in rows]).reshape(nx, ny)
    euc = np.array([r[2] and r[5] > 0 for r in rows]).reshape(nx, ny)
    violations = euc & ~riem
    boundary = np.zeros_like(violations)
    pr = np.pad(riem, 1, mode="edge")
    ps = np.pad(stab, 1, mode="edge")
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted_r = pr[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny]
        shifted_s = ps[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny]
        boundary |= (shifted_r != riem) | (shifted_s != stab)
    n_stab = int(stab.sum())
    costs = [r[3] for r in rows if r[2] and math.isfinite(r[3])]
    best = int(np.argmin([r[3] if r[2] and math.isfinite(r[3]) else np.inf for r in rows])) if n_stab else None
    return {
        "stabilizing_cells": n_stab,
        "riemannian_pd_cells": int(riem.sum()),
        "euclidean_pd_cells": int(euc.sum()),
        "violations": int(violations.sum()),
        "interior_violations": int((violations & ~boundary).sum()),
        "violation_fraction": float(violations.sum() / n_stab) if n_stab else math.nan,
        "proper_fraction": float((riem & ~euc).sum() / n_stab) if n_stab else math.nan,
        "min_cost": float(min(costs)) if costs else math.nan,
        "argmin": [rows[best][0], rows[best][1]] if best is not None else None,
    }
