"""LQR cost ``f(K) = tr(P_K Sigma1) / 2``, its Riemannian gradient and Hessian forms."""
from __future__ import annotations

from enum import Enum
from typing import Optional

import numpy as np

from .errors import ContractError, DimensionError
from .geometry import ChristoffelTensor, PointData, gamma_contract, metric_inner

__all__ = [
    "Connection",
    "cost",
    "gradient",
    "s_operator",
    "hess_form",
    "euclidean_hessian_matrix",
]


class Connection(str, Enum):
    RIEMANNIAN = "riemannian"
    EUCLIDEAN = "euclidean"


def _require_lqr(pd: PointData) -> None:
    if pd.plant.has_sigma2:
        raise ContractError("the LQR objective is defined for Sigma2 = 0 only")


def cost(pd: PointData) -> float:
    _require_lqr(pd)
    return pd.cost


def gradient(pd: PointData) -> np.ndarray:
    """Riemannian gradient ``R K + B^T P_K A_cl``.

    With respect to the metric ``tr(V^T W Y_K)`` this satisfies
    ``df_K(E) = metric_inner(pd, E, gradient(pd))``.
    """
    _require_lqr(pd)
    return pd.grad


def s_operator(pd: PointData, E) -> np.ndarray:
    """``dlyap(A_cl^T, E^T grad + grad^T E)``; accepts a stack of directions."""
    _require_lqr(pd)
    E = np.asarray(E, dtype=float)
    if E.shape[-2:] != pd.shape:
        raise DimensionError(f"direction must have shape {pd.shape}")
    T = np.swapaxes(E, -1, -2) @ pd.grad
    S = pd.clT_solver.solve(T + np.swapaxes(T, -1, -2))
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def euclidean_hessian_matrix(pd: PointData, frame: np.ndarray) -> np.ndarray:
    """Gram-like matrix of the flat-connection Hessian over a stack of directions.

    Entry ``(a, b)`` is ``<B^T S_b A_cl, E_a> + <(R + B^T P B) E_a + B^T S_a A_cl, E_b>``
    with ``E_a = frame[a]`` and ``S_a = s_operator(pd, E_a)``.
    """
    plant = pd.plant
    frame = np.asarray(frame, dtype=float)
    S = s_operator(pd, frame)
    Y = pd.Y
    H0 = plant.R + plant.B.T @ pd.P @ plant.B
    # W_a = B^T S_a A_cl, stacked
    W = plant.B.T @ S @ pd.A_cl
    FY = frame @ Y
    # <W_b, E_a> + <H0 E_a + W_a, E_b>, inner product <V, U> = sum(V * (U Y))
    first = np.einsum("bij,aij->ab", W, FY)
    second = np.einsum("aij,bij->ab", H0 @ frame + W, FY)
    return first + second


def hess_form(pd: PointData, ct: Optional[ChristoffelTensor], connection, E, F) -> float:
    """Hessian bilinear form of the LQR cost at ``pd`` evaluated on ``(E, F)``.

    The Euclidean form uses the flat connection. The Riemannian form
    additionally subtracts ``<grad f, Gamma(E, F)>`` and needs ``ct``.
    """
    _require_lqr(pd)
    connection = Connection(connection)
    if connection is Connection.RIEMANNIAN and ct is None:
        raise ContractError("the Riemannian Hessian needs Christoffel symbols")
    E = np.asarray(E, dtype=float)
    F = np.asarray(F, dtype=float)
    if E.shape != pd.shape or F.shape != pd.shape:
        raise DimensionError(f"directions must have shape {pd.shape}")
    plant = pd.plant
    S_E, S_F = s_operator(pd, np.stack([E, F]))
    H0 = plant.R + plant.B.T @ pd.P @ plant.B
    value = (metric_inner(pd, plant.B.T @ S_F @ pd.A_cl, E)
             + metric_inner(pd, H0 @ E + plant.B.T @ S_E @ pd.A_cl, F))
    if connection is Connection.RIEMANNIAN:
        value -= metric_inner(pd, pd.grad, gamma_contract(ct, E, F))
    return float(value)
