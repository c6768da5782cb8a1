"""Newton iteration with a stability-certificate stepsize, plus first-order/Hewer baselines.

Every method produces an `IterationTrace`. A record at step ``t`` describes
the iterate ``K_t`` and, when a step was taken from it, the certificate and
stepsize used. The final record of a trace carries ``nan`` certificate and
stepsize because no step is taken from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg as la

from .constraints import Constraint, RestrictedGradient, restricted_gradient, restricted_hessian_matrix
from .errors import ContractError, HessianNotPDError, NotStabilizingError, NumericalError
from .geometry import ChristoffelTensor, PointData, christoffel, point_data
from .kernels import Plant, hewer_step, is_stabilizing, sym_extreme_eigs
from .objective import Connection

__all__ = [
    "Method",
    "Status",
    "RunSettings",
    "IterationRecord",
    "IterationTrace",
    "qmap",
    "stability_certificate",
    "newton_direction",
    "rc_newton",
    "projected_gradient",
    "hewer_trace",
    "run",
]


class Method(str, Enum):
    RCN_RIEMANNIAN = "rcn_riemannian"
    RCN_EUCLIDEAN = "rcn_euclidean"
    PROJECTED_GRADIENT = "projected_gradient"
    HEWER = "hewer"


class Status(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    HESSIAN_NOT_PD = "hessian_not_pd"
    INFEASIBLE_START = "infeasible_start"


@dataclass(frozen=True)
class RunSettings:
    """Stopping rules and method options.

    ``on_indefinite`` selects what a Newton run does when the restricted
    Hessian is not positive definite: ``"stop"`` ends the run with status
    ``hessian_not_pd``; ``"continue"`` solves the indefinite system anyway
    and keeps stepping with the certificate stepsize until ``max_iters``.
    """

    method: Method = Method.RCN_RIEMANNIAN
    grad_tol: float = 1e-10
    iterate_tol: float = 1e-12
    max_iters: int = 500
    qmap_epsilon: float = 1e-8
    pg_stepsize: Optional[float] = None
    on_indefinite: str = "stop"

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not (self.grad_tol > 0 and self.iterate_tol > 0 and self.qmap_epsilon > 0):
            raise ContractError("tolerances must be positive")
        if int(self.max_iters) < 1:
            raise ContractError("max_iters must be at least 1")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        if self.pg_stepsize is not None and not self.pg_stepsize > 0:
            raise ContractError("pg_stepsize must be positive")
        if self.on_indefinite not in ("stop", "continue"):
            raise ContractError("on_indefinite must be 'stop' or 'continue'")

    def replace(self, **changes) -> "RunSettings":
        return replace(self, **changes)


@dataclass(frozen=True)
class IterationRecord:
    t: int
    K: np.ndarray
    cost: float
    grad_norm: float
    certificate: float
    stepsize: float
    hessian_min_eig: float


@dataclass
class IterationTrace:
    method: Method
    status: Status
    records: list = field(default_factory=list)
    message: str = ""

    @property
    def iterations(self) -> int:
        """Number of steps taken."""
        return max(len(self.records) - 1, 0)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def final(self) -> Optional[IterationRecord]:
        return self.records[-1] if self.records else None

    @property
    def K(self) -> Optional[np.ndarray]:
        return None if not self.records else self.records[-1].K

    def gains(self) -> list:
        return [r.K for r in self.records]


def qmap(plant: Plant, K, epsilon: float = 1e-8) -> np.ndarray:
    """Positive definite weight ``Q + K^T R K`` (shifted by ``epsilon I`` when ``Q`` is singular)."""
    K = np.asarray(K, dtype=float)
    Qk = plant.Q + K.T @ plant.R @ K
    if not np.linalg.eigvalsh(plant.Q)[0] > 0.0:
        Qk = Qk + epsilon * np.eye(plant.n)
    return 0.5 * (Qk + Qk.T)


def stability_certificate(plant: Plant, pd: PointData, G, Qmat) -> float:
    """Largest stepsize along ``G`` certified to keep ``A + B(K + eta G)`` Schur stable.

    Computes ``lmin(Q_K) / (2 lmax(dlyap(A_cl^T, Q_K)) ||B G||_2)``; returns
    ``inf`` when ``B G = 0``.
    """
    G = np.asarray(G, dtype=float)
    Qmat = np.asarray(Qmat, dtype=float)
    qmin, _ = sym_extreme_eigs(Qmat)
    if not qmin > 0.0:
        raise ContractError("certificate weight must be positive definite")
    bg = float(np.linalg.norm(plant.B @ G, 2))
    if bg == 0.0:
        return math.inf
    Pq = pd.clT_solver.solve(Qmat)
    _, pmax = sym_extreme_eigs(0.5 * (Pq + Pq.T))
    return qmin / (2.0 * pmax * bg)


@dataclass(frozen=True)
class _NewtonSystem:
    H: np.ndarray
    min_eig: float
    rgrad: RestrictedGradient


def _newton_system(constraint: Constraint, pd: PointData,
                   ct: Optional[ChristoffelTensor], connection,
                   rgrad: Optional[RestrictedGradient] = None) -> _NewtonSystem:
    if rgrad is None:
        rgrad = restricted_gradient(constraint, pd)
    H = restricted_hessian_matrix(constraint, pd, ct, connection, rgrad=rgrad)
    H = 0.5 * (H + H.T)
    min_eig = float(np.linalg.eigvalsh(H)[0])
    return _NewtonSystem(H, min_eig, rgrad)


def _solve_newton(system: _NewtonSystem, constraint: Constraint) -> np.ndarray:
    H, b = system.H, system.rgrad.pairing
    try:
        if system.min_eig > 0.0:
            coords = la.cho_solve(la.cho_factor(H, check_finite=False), -b, check_finite=False)
        else:
            coords = la.solve(H, -b, check_finite=False)
    except (la.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Newton system is singular: {exc}") from exc
    if not np.all(np.isfinite(coords)):
        raise NumericalError("Newton system produced non-finite coordinates")
    return coords


def newton_direction(constraint: Constraint, pd: PointData,
                     ct: Optional[ChristoffelTensor], connection) -> tuple[np.ndarray, float]:
    """Newton direction on the constraint subspace and the restricted Hessian's min eigenvalue.

    Solves ``H g = -b`` where ``H`` is the restricted Hessian in the frame and
    ``b[a] = <grad h, frame[a]>``. Raises HessianNotPDError if ``H`` is not
    positive definite.
    """
    system = _newton_system(constraint, pd, ct, connection)
    if not system.min_eig > 0.0:
        raise HessianNotPDError(system.min_eig)
    coords = _solve_newton(system, constraint)
    return _direction(constraint, coords), system.min_eig


def _direction(constraint: Constraint, coords: np.ndarray) -> np.ndarray:
    return np.einsum("a,aij->ij", coords, constraint.frame())


def _start(plant: Plant, constraint: Constraint, K0) -> Optional[str]:
    K0 = np.asarray(K0, dtype=float)
    if K0.shape != (plant.m, plant.n) or constraint.shape != K0.shape:
        raise ContractError(f"K0 must have shape {(plant.m, plant.n)} matching the constraint")
    if not is_stabilizing(plant, K0):
        return "initial gain is not stabilizing"
    if not constraint.contains(K0):
        return "initial gain does not satisfy the constraint"
    return None


def rc_newton(plant: Plant, constraint: Constraint, K0, settings: RunSettings = RunSettings()) -> IterationTrace:
    """Newton iteration on a linearly constrained set of stabilizing gains.

    At each iterate the Newton direction ``G_t`` is computed with the chosen
    connection (``settings.method``), the stepsize is ``min(s_K, 1)`` with the
    stability certificate ``s_K``, and ``K_{t+1} = K_t + eta_t G_t``. Iterates
    are kept in frame coordinates so constraint membership is exact.
    """
    method = settings.method
    if method is Method.RCN_RIEMANNIAN:
        connection = Connection.RIEMANNIAN
    elif method is Method.RCN_EUCLIDEAN:
        connection = Connection.EUCLIDEAN
    else:
        raise ContractError(f"rc_newton does not run method {method.value!r}")
    trace = IterationTrace(method, Status.MAX_ITERS)
    reason = _start(plant, constraint, K0)
    if reason:
        trace.status, trace.message = Status.INFEASIBLE_START, reason
        return trace

    x = constraint.coordinates(K0)
    K = constraint.embed(x)
    for t in range(settings.max_iters + 1):
        pd = point_data(plant, K)
        rgrad = restricted_gradient(constraint, pd)
        ct = christoffel(plant, pd) if connection is Connection.RIEMANNIAN else None
        system = _newton_system(constraint, pd, ct, connection, rgrad=rgrad)
        record = dict(t=t, K=K, cost=pd.cost, grad_norm=rgrad.norm, hessian_min_eig=system.min_eig)
        if rgrad.norm < settings.grad_tol:
            trace.records.append(IterationRecord(certificate=math.nan, stepsize=math.nan, **record))
            trace.status = Status.CONVERGED
            return trace
        if t == settings.max_iters:
            trace.records.append(IterationRecord(certificate=math.nan, stepsize=math.nan, **record))
            trace.status = Status.MAX_ITERS
            return trace
        if not system.min_eig > 0.0 and settings.on_indefinite == "stop":
            trace.records.append(IterationRecord(certificate=math.nan, stepsize=math.nan, **record))
            trace.status = Status.HESSIAN_NOT_PD
            trace.message = f"restricted Hessian min eigenvalue {system.min_eig:.3e} at t={t}"
            return trace
        coords = _solve_newton(system, constraint)
        G = _direction(constraint, coords)
        cert = stability_certificate(plant, pd, G, qmap(plant, K, settings.qmap_epsilon))
        eta = min(cert, 1.0)
        trace.records.append(IterationRecord(certificate=cert, stepsize=eta, **record))
        x = x + eta * coords
        K_next = constraint.embed(x)
        if not is_stabilizing(plant, K_next):
            # the certificate guarantees this cannot happen in exact arithmetic
            raise NotStabilizingError(f"iterate {t + 1} left the stabilizing set")
        step = float(np.max(np.abs(K_next - K)))
        K = K_next
        if step < settings.iterate_tol:
            pd = point_data(plant, K)
            rgrad = restricted_gradient(constraint, pd)
            ct = christoffel(plant, pd) if connection is Connection.RIEMANNIAN else None
            min_eig = _newton_system(constraint, pd, ct, connection, rgrad=rgrad).min_eig
            trace.records.append(IterationRecord(t + 1, K, pd.cost, rgrad.norm, math.nan, math.nan, min_eig))
            trace.status = Status.CONVERGED
            return trace
    return trace


def projected_gradient(plant: Plant, constraint: Constraint, K0,
                       settings: RunSettings = RunSettings(method=Method.PROJECTED_GRADIENT)) -> IterationTrace:
    """Projected (Riemannian) gradient descent with a constant stabilizing stepsize.

    Unless ``settings.pg_stepsize`` is given, the stepsize is
    ``min(1, s_{K0} / 2)`` where ``s_{K0}`` is the certificate along the
    negative projected gradient at ``K0``. The stepsize is halved, and the
    step retried, whenever a trial iterate is not stabilizing or increases
    the cost.
    """
    trace = IterationTrace(Method.PROJECTED_GRADIENT, Status.MAX_ITERS)
    reason = _start(plant, constraint, K0)
    if reason:
        trace.status, trace.message = Status.INFEASIBLE_START, reason
        return trace
    x = constraint.coordinates(K0)
    K = constraint.embed(x)
    pd = point_data(plant, K)
    eta = settings.pg_stepsize
    for t in range(settings.max_iters + 1):
        rgrad = restricted_gradient(constraint, pd)
        record = dict(t=t, K=K, cost=pd.cost, grad_norm=rgrad.norm, hessian_min_eig=math.nan)
        if rgrad.norm < settings.grad_tol or t == settings.max_iters:
            trace.records.append(IterationRecord(certificate=math.nan, stepsize=math.nan, **record))
            trace.status = Status.CONVERGED if rgrad.norm < settings.grad_tol else Status.MAX_ITERS
            return trace
        direction = -rgrad.matrix
        cert = stability_certificate(plant, pd, direction, qmap(plant, K, settings.qmap_epsilon))
        if eta is None:
            eta = min(1.0, 0.5 * cert)
        while True:
            x_trial = x - eta * rgrad.coords
            K_trial = constraint.embed(x_trial)
            if is_stabilizing(plant, K_trial):
                pd_trial = point_data(plant, K_trial)
                if pd_trial.cost <= pd.cost:
                    break
            eta *= 0.5
            if eta < 1e-300:
                raise NumericalError("projected gradient stepsize underflow")
        trace.records.append(IterationRecord(certificate=cert, stepsize=eta, **record))
        step = float(np.max(np.abs(K_trial - K)))
        x, K, pd = x_trial, K_trial, pd_trial
        if step < settings.iterate_tol:
            rgrad = restricted_gradient(constraint, pd)
            trace.records.append(IterationRecord(t + 1, K, pd.cost, rgrad.norm, math.nan, math.nan, math.nan))
            trace.status = Status.CONVERGED
            return trace
    return trace


def hewer_trace(plant: Plant, constraint: Constraint, K0,
                settings: RunSettings = RunSettings(method=Method.HEWER)) -> IterationTrace:
    """Hewer's iteration recorded as a trace (unconstrained problems only)."""
    if constraint.kind != "unconstrained":
        raise ContractError("Hewer's iteration applies to unconstrained problems only")
    trace = IterationTrace(Method.HEWER, Status.MAX_ITERS)
    reason = _start(plant, constraint, K0)
    if reason:
        trace.status, trace.message = Status.INFEASIBLE_START, reason
        return trace
    K = np.array(K0, dtype=float)
    for t in range(settings.max_iters + 1):
        pd = point_data(plant, K)
        rgrad = restricted_gradient(constraint, pd)
        record = dict(t=t, K=K, cost=pd.cost, grad_norm=rgrad.norm, certificate=math.nan,
                      hessian_min_eig=math.nan)
        if rgrad.norm < settings.grad_tol or t == settings.max_iters:
            trace.records.append(IterationRecord(stepsize=math.nan, **record))
            trace.status = Status.CONVERGED if rgrad.norm < settings.grad_tol else Status.MAX_ITERS
            return trace
        trace.records.append(IterationRecord(stepsize=1.0, **record))
        _, K_next = hewer_step(plant, K)
        step = float(np.max(np.abs(K_next - K)))
        K = K_next
        if step < settings.iterate_tol:
            pd = point_data(plant, K)
            rgrad = restricted_gradient(constraint, pd)
            trace.records.append(IterationRecord(t + 1, K, pd.cost, rgrad.norm, math.nan, math.nan, math.nan))
            trace.status = Status.CONVERGED
            return trace
    return trace


def run(plant: Plant, constraint: Constraint, K0, settings: RunSettings) -> IterationTrace:
    """Dispatch on ``settings.method``."""
    if settings.method is Method.PROJECTED_GRADIENT:
        return projected_gradient(plant, constraint, K0, settings)
    if settings.method is Method.HEWER:
        return hewer_trace(plant, constraint, K0, settings)
    return rc_newton(plant, constraint, K0, settings)
