"""Riemannian metric on the set of stabilizing gains and its Christoffel symbols.

At a stabilizing gain ``K`` the metric pairs two tangent matrices ``V, W`` as
``tr(V^T W Y_K)`` with ``Y_K = dlyap(A + B K, Sigma1 + K^T Sigma2 K)``. In the
global entrywise frame its coefficients are ``g_{(i,j)(k,l)} = [Y_K]_{l,j}``
when ``i == k`` and zero otherwise.

Christoffel symbols are stored densely as an array indexed
``gamma[i, j, k, l, p, q]`` for the symbol with upper index ``(i, j)`` and
lower indices ``(k, l), (p, q)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .config import DEFAULT_TOL, Tolerances
from .errors import DimensionError, NotStabilizingError, NumericalError
from .kernels import LyapunovSolver, Plant, spectral_radius

__all__ = [
    "PointData",
    "point_data",
    "metric_inner",
    "metric_coefficients",
    "inverse_metric_coefficients",
    "dY_table",
    "dY_direction",
    "ChristoffelTensor",
    "christoffel",
    "gamma_contract",
]


@dataclass(frozen=True, eq=False)
class PointData:
    """Cached quantities at a stabilizing gain.

    ``Y`` induces the metric, ``P`` is the cost-to-go matrix, ``grad`` is
    ``R K + B^T P A_cl`` and ``cost`` is ``tr(P Sigma1) / 2``.
    """

    plant: Plant
    K: np.ndarray
    A_cl: np.ndarray
    Sigma_K: np.ndarray
    Y: np.ndarray
    Y_inv: np.ndarray
    P: np.ndarray
    grad: np.ndarray
    cost: float
    warnings: tuple = ()
    cl_solver: LyapunovSolver = field(repr=False, default=None)
    clT_solver: LyapunovSolver = field(repr=False, default=None)

    @property
    def shape(self) -> tuple[int, int]:
        return self.K.shape


def _sym(M):
    return 0.5 * (M + M.T)


def point_data(plant: Plant, K, tol: Tolerances = DEFAULT_TOL) -> PointData:
    K = np.array(K, dtype=float)
    if K.shape != (plant.m, plant.n):
        raise DimensionError(f"K must have shape {(plant.m, plant.n)}, got {K.shape}")
    A_cl = plant.closed_loop(K)
    rho = spectral_radius(A_cl)
    if not rho < 1.0:
        raise NotStabilizingError(f"closed-loop spectral radius {rho:.6g} >= 1")
    cl = LyapunovSolver(A_cl, check_stable=False)
    clT = LyapunovSolver(A_cl.T, check_stable=False)
    Sigma_K = plant.Sigma1 + K.T @ plant.Sigma2 @ K
    Y = _sym(cl.solve(Sigma_K))
    P = _sym(clT.solve(plant.Q + K.T @ plant.R @ K))

    notes = []
    lu = la.lu_factor(Y, check_finite=False)
    Y_inv = _sym(la.lu_solve(lu, np.eye(plant.n), check_finite=False))
    cond = np.linalg.cond(Y)
    if not np.isfinite(cond) or cond > tol.cond_warn:
        msg = f"Y_K is ill-conditioned (cond {cond:.3e})"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if not np.all(np.isfinite(Y_inv)):
        raise NumericalError("Y_K is numerically singular")

    grad = plant.R @ K + plant.B.T @ P @ A_cl
    cost = 0.5 * float(np.trace(P @ plant.Sigma1))
    for M in (K, A_cl, Sigma_K, Y, Y_inv, P, grad):
        M.setflags(write=False)
    return PointData(plant, K, A_cl, Sigma_K, Y, Y_inv, P, grad, cost,
                     tuple(notes), cl, clT)


def metric_inner(pd: PointData, V, W) -> float:
    """``tr(V^T W Y_K)``."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if V.shape != pd.shape or W.shape != pd.shape:
        raise DimensionError(f"tangent matrices must have shape {pd.shape}")
    return float(np.sum(V * (W @ pd.Y)))


def metric_coefficients(pd: PointData) -> np.ndarray:
    """Metric as an ``(mn) x (mn)`` matrix in the row-major entrywise frame."""
    m = pd.shape[0]
    return np.kron(np.eye(m), pd.Y.T)


def inverse_metric_coefficients(pd: PointData) -> np.ndarray:
    m = pd.shape[0]
    return np.kron(np.eye(m), pd.Y_inv.T)


def _dY_rhs(pd: PointData, E: np.ndarray) -> np.ndarray:
    """Lyapunov right-hand side whose solution is the derivative of ``Y`` along ``E``.

    ``E`` may be a single ``m x n`` matrix or a stack ``(r, m, n)``.
    """
    plant = pd.plant
    BE = plant.B @ E
    term = BE @ pd.Y @ pd.A_cl.T
    rhs = term + np.swapaxes(term, -1, -2)
    if plant.has_sigma2:
        s = np.swapaxes(E, -1, -2) @ plant.Sigma2 @ pd.K
        rhs = rhs + s + np.swapaxes(s, -1, -2)
    return rhs


def dY_direction(pd: PointData, E) -> np.ndarray:
    """Derivative of ``K -> Y_K`` along ``E``."""
    E = np.asarray(E, dtype=float)
    return _sym(pd.cl_solver.solve(_dY_rhs(pd, E)))


def dY_table(plant: Plant, pd: PointData) -> np.ndarray:
    """``dY[p, q]`` is the derivative of ``Y_K`` along the elementary matrix at ``(p, q)``.

    Returns an array of shape ``(m, n, n, n)``.
    """
    if plant is not pd.plant:
        raise DimensionError("point data was built for a different plant")
    m, n = pd.shape
    units = np.eye(m * n).reshape(m * n, m, n)
    dY = pd.cl_solver.solve(_dY_rhs(pd, units))
    dY = 0.5 * (dY + np.swapaxes(dY, -1, -2))
    return dY.reshape(m, n, n, n)


def christoffel_cases(dY: np.ndarray, Y_inv: np.ndarray) -> np.ndarray:
    """Evaluate the five-case Christoffel formula entry by index pattern.

    No symmetrization is applied, so this can be used to check the
    lower-index symmetry independently.
    """
    m, n = dY.shape[:2]
    # M[p, q] = dY(p, q) Y^{-1}, indexed [l, j]
    M = dY @ Y_inv
    # N[i, q, l, j] = sum_s dY(i, s)[q, l] Y^{-1}[s, j]
    N = np.einsum("isql,sj->iqlj", dY, Y_inv)
    gamma = np.zeros((m, n, m, n, m, n))
    for i in range(m):
        for k in range(m):
            for p in range(m):
                if k == i and p != i:
                    # [l, j] <- M[p, q][l, j], block [j, l, q]
                    block = 0.5 * np.transpose(M[p], (2, 1, 0))
                elif p == i and k != i:
                    # [l, q, j] <- M[k, l][q, j]
                    block = 0.5 * np.transpose(M[k], (2, 0, 1))
                elif p == k and k != i:
                    block = -0.5 * np.transpose(N[i], (2, 1, 0))
                elif p == k == i:
                    block = 0.5 * (np.transpose(M[i], (2, 0, 1))
                                   + np.transpose(M[i], (2, 1, 0))
                                   - np.transpose(N[i], (2, 1, 0)))
                else:
                    continue
                gamma[i, :, k, :, p, :] = block
    return gamma


@dataclass(frozen=True, eq=False)
class ChristoffelTensor:
    base: PointData
    dY: np.ndarray
    gamma: np.ndarray


def christoffel(plant: Plant, pd: PointData) -> ChristoffelTensor:
    """Christoffel symbols of the metric at ``pd``, symmetric in the lower indices."""
    dY = dY_table(plant, pd)
    gamma = christoffel_cases(dY, pd.Y_inv)
    gamma = 0.5 * (gamma + np.transpose(gamma, (0, 1, 4, 5, 2, 3)))
    dY.setflags(write=False)
    gamma.setflags(write=False)
    return ChristoffelTensor(pd, dY, gamma)


def gamma_contract(ct: ChristoffelTensor, E, F) -> np.ndarray:
    """Matrix with entries ``sum E[k,l] F[p,q] gamma[i,j,k,l,p,q]``."""
    E = np.asarray(E, dtype=float)
    F = np.asarray(F, dtype=float)
    if E.shape != ct.base.shape or F.shape != ct.base.shape:
        raise DimensionError(f"directions must have shape {ct.base.shape}")
    return np.einsum("ijklpq,kl,pq->ij", ct.gamma, E, F)
