"""Linear constraint subspaces of gain matrices and restricted first/second-order data.

Three kinds are supported:

* ``unconstrained``: every ``m x n`` gain; frame is the entrywise basis.
* ``sparsity``: gains supported on an index set ``D``; frame is the
  elementary matrices at ``D`` (row-major order).
* ``output_feedback``: gains ``K = L C``; frame is ``e_i e_j^T C`` over
  ``(i, j)`` in ``[m] x [d]`` (row-major order), so frame coordinates are the
  entries of ``L``.

Projections are metric-orthogonal with respect to ``tr(V^T W Y_K)`` and are
computed from the frame Gram system.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la

from .config import DEFAULT_TOL
from .errors import ContractError, DimensionError, NumericalError
from .geometry import ChristoffelTensor, PointData
from .objective import Connection, euclidean_hessian_matrix, gradient

__all__ = [
    "Constraint",
    "RestrictedGradient",
    "frame_gram",
    "tangential_projection",
    "restricted_gradient",
    "restricted_hessian_matrix",
]

KINDS = ("unconstrained", "sparsity", "output_feedback")


@dataclass(frozen=True, eq=False)
class Constraint:
    """Linear constraint descriptor bound to a gain shape ``(m, n)``.

    Use the `unconstrained`, `sparsity` and `output_feedback` constructors.
    """

    kind: str
    shape: tuple
    support: Optional[tuple] = None
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown constraint kind {self.kind!r}")
        m, n = self.shape
        if m < 1 or n < 1:
            raise DimensionError("gain shape must be positive")
        object.__setattr__(self, "shape", (int(m), int(n)))
        if self.kind == "sparsity":
            D = tuple((int(i), int(j)) for i, j in self.support or ())
            if not D:
                raise ContractError("sparsity support must be nonempty")
            if len(set(D)) != len(D):
                raise ContractError("sparsity support has duplicate entries")
            for i, j in D:
                if not (0 <= i < m and 0 <= j < n):
                    raise ContractError(f"support index {(i, j)} out of range for shape {(m, n)}")
            object.__setattr__(self, "support", tuple(sorted(D)))
        elif self.kind == "output_feedback":
            C = np.array(self.C, dtype=float)
            if C.ndim != 2 or C.shape[1] != n or not 1 <= C.shape[0] <= n:
                raise DimensionError(f"C must be d x {n} with 1 <= d <= {n}")
            s = np.linalg.svd(C, compute_uv=False)
            if np.count_nonzero(s > DEFAULT_TOL.rank_rel * s[0]) < C.shape[0]:
                raise ContractError("C must have full row rank")
            C.setflags(write=False)
            object.__setattr__(self, "C", C)
        object.__setattr__(self, "_frame", self._build_frame())

    @classmethod
    def unconstrained(cls, shape) -> "Constraint":
        return cls("unconstrained", tuple(shape))

    @classmethod
    def sparsity(cls, support, shape) -> "Constraint":
        return cls("sparsity", tuple(shape), support=tuple(map(tuple, support)))

    @classmethod
    def output_feedback(cls, C, m: int) -> "Constraint":
        C = np.asarray(C, dtype=float)
        return cls("output_feedback", (m, C.shape[1]), C=C)

    @property
    def d(self) -> Optional[int]:
        return None if self.C is None else self.C.shape[0]

    @property
    def frame_dim(self) -> int:
        m, n = self.shape
        if self.kind == "unconstrained":
            return m * n
        if self.kind == "sparsity":
            return len(self.support)
        return m * self.d

    @property
    def coord_shape(self) -> tuple:
        """Shape of the natural parameter: ``K`` itself, or ``L`` for output feedback."""
        if self.kind == "output_feedback":
            return (self.shape[0], self.d)
        return self.shape

    def _build_frame(self) -> np.ndarray:
        m, n = self.shape
        if self.kind == "unconstrained":
            basis = np.eye(m * n).reshape(m * n, m, n)
        elif self.kind == "sparsity":
            basis = np.zeros((len(self.support), m, n))
            for a, (i, j) in enumerate(self.support):
                basis[a, i, j] = 1.0
        else:
            d = self.d
            basis = np.zeros((m * d, m, n))
            for i in range(m):
                for j in range(d):
                    basis[i * d + j, i, :] = self.C[j]
        basis.setflags(write=False)
        return basis

    def frame(self) -> np.ndarray:
        """Frame basis as an array of shape ``(frame_dim, m, n)``."""
        return self._frame

    def embed(self, coords) -> np.ndarray:
        """Gain matrix with the given frame coordinates.

        For output feedback this is ``L C`` with ``L`` reshaped from the
        coordinates, so membership is exact.
        """
        x = np.asarray(coords, dtype=float).ravel()
        if x.size != self.frame_dim:
            raise DimensionError(f"expected {self.frame_dim} coordinates, got {x.size}")
        m, n = self.shape
        if self.kind == "unconstrained":
            return x.reshape(m, n).copy()
        if self.kind == "sparsity":
            K = np.zeros((m, n))
            for a, (i, j) in enumerate(self.support):
                K[i, j] = x[a]
            return K
        return x.reshape(m, self.d) @ self.C

    def coordinates(self, K) -> np.ndarray:
        """Frame coordinates of a member gain (no membership check)."""
        K = np.asarray(K, dtype=float)
        if K.shape != self.shape:
            raise DimensionError(f"K must have shape {self.shape}, got {K.shape}")
        if self.kind == "unconstrained":
            return K.ravel().copy()
        if self.kind == "sparsity":
            return np.array([K[i, j] for i, j in self.support])
        # L = K C^T (C C^T)^{-1}
        C = self.C
        return np.linalg.solve(C @ C.T, C @ K.T).T.ravel()

    def contains(self, K, tol: float = DEFAULT_TOL.membership) -> bool:
        K = np.asarray(K, dtype=float)
        if K.shape != self.shape:
            return False
        if self.kind == "unconstrained":
            return True
        if self.kind == "sparsity":
            mask = np.ones(self.shape, dtype=bool)
            for i, j in self.support:
                mask[i, j] = False
            return bool(np.all(K[mask] == 0.0))
        C = self.C
        residual = K - K @ np.linalg.pinv(C) @ C
        return float(np.max(np.abs(residual), initial=0.0)) <= tol * max(1.0, np.max(np.abs(K), initial=0.0))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "sparsity":
            out["support"] = [list(ij) for ij in self.support]
        elif self.kind == "output_feedback":
            out["C"] = self.C.tolist()
        return out


def _check(constraint: Constraint, pd: PointData) -> None:
    if constraint.shape != pd.shape:
        raise DimensionError(f"constraint shape {constraint.shape} does not match gain shape {pd.shape}")


def frame_inner(pd: PointData, frame: np.ndarray, E) -> np.ndarray:
    """Vector of metric pairings ``<E, frame[a]>``."""
    return np.einsum("aij,ij->a", frame, np.asarray(E, dtype=float) @ pd.Y)


def frame_gram(constraint: Constraint, pd: PointData) -> np.ndarray:
    _check(constraint, pd)
    F = constraint.frame()
    G = np.einsum("aij,bij->ab", F, F @ pd.Y)
    return 0.5 * (G + G.T)


def _gram_solve(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c, low = la.cho_factor(G, check_finite=False)
    except la.LinAlgError as exc:
        raise NumericalError("frame Gram matrix is numerically singular") from exc
    return la.cho_solve((c, low), rhs, check_finite=False)


def tangential_projection(constraint: Constraint, pd: PointData, E) -> np.ndarray:
    """Metric-orthogonal projection of ``E`` onto the constraint subspace."""
    _check(constraint, pd)
    E = np.asarray(E, dtype=float)
    if E.shape != pd.shape:
        raise DimensionError(f"E must have shape {pd.shape}")
    if constraint.kind == "unconstrained":
        return E.copy()
    coeffs = _gram_solve(frame_gram(constraint, pd), frame_inner(pd, constraint.frame(), E))
    return constraint.embed(coeffs)


@dataclass(frozen=True)
class RestrictedGradient:
    """Projected gradient with its frame data.

    ``coords`` expresses ``matrix`` in the frame; ``pairing[a]`` is
    ``<matrix, frame[a]>`` (equal to the directional derivative of the cost
    along ``frame[a]``); ``norm`` is the Riemannian norm of ``matrix``.
    """

    coords: np.ndarray
    matrix: np.ndarray
    pairing: np.ndarray
    gram: np.ndarray
    norm: float

    def __iter__(self):
        yield self.coords
        yield self.matrix


def restricted_gradient(constraint: Constraint, pd: PointData) -> RestrictedGradient:
    _check(constraint, pd)
    g = gradient(pd)
    G = frame_gram(constraint, pd)
    pairing = frame_inner(pd, constraint.frame(), g)
    coords = _gram_solve(G, pairing)
    matrix = g.copy() if constraint.kind == "unconstrained" else constraint.embed(coords)
    norm = float(np.sqrt(max(float(coords @ pairing), 0.0)))
    return RestrictedGradient(coords, matrix, pairing, G, norm)


def restricted_hessian_matrix(constraint: Constraint, pd: PointData,
                              ct: Optional[ChristoffelTensor], connection,
                              rgrad: Optional[RestrictedGradient] = None) -> np.ndarray:
    """Covariant Hessian of the restricted cost in the constraint frame.

    The Riemannian variant subtracts the Christoffel term paired with the
    projected gradient; the Euclidean one uses the flat connection.
    """
    _check(constraint, pd)
    connection = Connection(connection)
    frame = constraint.frame()
    H = euclidean_hessian_matrix(pd, frame)
    if connection is Connection.RIEMANNIAN:
        if ct is None:
            raise ContractError("the Riemannian Hessian needs Christoffel symbols")
        if rgrad is None:
            rgrad = restricted_gradient(constraint, pd)
        # <grad h, Gamma(E_a, E_b)> = sum_ij (grad_h Y)_ij Gamma(E_a, E_b)_ij
        weights = rgrad.matrix @ pd.Y
        T = np.einsum("ij,ijklpq->klpq", weights, ct.gamma)
        corr = np.einsum("akl,klpq,bpq->ab", frame, T, frame)
        H = H - corr
    return H
