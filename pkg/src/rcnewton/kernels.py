"""Dense small-matrix kernels: spectra, the discrete Lyapunov map and Hewer's iteration.

The Lyapunov map ``dlyap(A, Z)`` returns the unique ``X`` with

    X = A X A^T + Z,

for Schur-stable ``A``. It is solved exactly through the ``n^2 x n^2``
Kronecker system, which is affordable for the state dimensions handled here
(``n`` up to about a dozen) and deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as la

from .config import DEFAULT_TOL, Tolerances
from .errors import (
    ContractError,
    DimensionError,
    InfeasibleStartError,
    NonConvergenceError,
    NumericalError,
    UnstableMatrixError,
)

__all__ = [
    "Plant",
    "LyapunovSolver",
    "spectral_radius",
    "sym_extreme_eigs",
    "dlyap",
    "dlyap_differential",
    "pbh_stabilizable",
    "pbh_controllable",
    "is_stabilizing",
    "hewer_solve",
    "HewerResult",
]


def _as_square(M, name="matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ContractError(f"{name} has non-finite entries")
    return M


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a real square matrix."""
    M = _as_square(M)
    if M.size == 0:
        return 0.0
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(eigs)))


def sym_extreme_eigs(S, tol: Tolerances = DEFAULT_TOL) -> tuple[float, float]:
    """Return ``(lambda_min, lambda_max)`` of the symmetric part of ``S``.

    Raises ContractError if ``S`` is asymmetric beyond ``tol.sym_input``.
    """
    S = _as_square(S)
    if np.max(np.abs(S - S.T), initial=0.0) > tol.sym_input * max(1.0, np.max(np.abs(S), initial=0.0)):
        raise ContractError("matrix is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(w[0]), float(w[-1])


class LyapunovSolver:
    """Factorized ``I - A (x) A`` for repeated solves of ``X = A X A^T + Z``.

    The factorization is computed once; `solve` accepts a single ``n x n``
    right-hand side or a stack of shape ``(k, n, n)``.
    """

    def __init__(self, A, check_stable: bool = True):
        A = _as_square(A, "A")
        if check_stable:
            rho = spectral_radius(A)
            if not rho < 1.0:
                raise UnstableMatrixError(f"spectral radius {rho:.6g} >= 1")
        n = A.shape[0]
        self.A = A
        self.n = n
        M = np.eye(n * n) - np.kron(A, A)
        self._lu = la.lu_factor(M, check_finite=False)
        diag = np.abs(np.diag(self._lu[0]))
        if diag.size and diag.min() <= 1e-14 * max(1.0, diag.max()):
            raise NumericalError("vectorized Lyapunov system is numerically singular")

    def _raw(self, rhs: np.ndarray) -> np.ndarray:
        return la.lu_solve(self._lu, rhs, check_finite=False)

    def solve(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        n = self.n
        single = Z.ndim == 2
        Zs = Z[None] if single else Z
        if Zs.shape[1:] != (n, n):
            raise DimensionError(f"right-hand side must be {n}x{n}, got {Z.shape}")
        rhs = Zs.reshape(-1, n * n).T
        X = self._raw(rhs).T.reshape(-1, n, n)
        # one step of iterative refinement
        A = self.A
        R = Zs - (X - A @ X @ A.T)
        X = X + self._raw(R.reshape(-1, n * n).T).T.reshape(-1, n, n)
        return X[0] if single else X


def dlyap(A, Z) -> np.ndarray:
    """Solve ``X = A X A^T + Z`` for Schur-stable ``A``."""
    return LyapunovSolver(A).solve(Z)


def dlyap_differential(A, Z, E, F) -> np.ndarray:
    """Differential of ``(A, Z) -> dlyap(A, Z)`` applied to the direction ``(E, F)``."""
    solver = LyapunovSolver(A)
    A = solver.A
    X = solver.solve(Z)
    E = np.asarray(E, dtype=float)
    return solver.solve(E @ X @ A.T + A @ X @ E.T + np.asarray(F, dtype=float))


def _pbh(A, B, only_unstable: bool, tol: Tolerances) -> bool:
    A = _as_square(A, "A")
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
    eigs = np.linalg.eigvals(A)
    if only_unstable:
        eigs = eigs[np.abs(eigs) >= 1.0]
    for lam in eigs:
        M = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
        s = np.linalg.svd(M, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            return False
        if np.count_nonzero(s > tol.rank_rel * s[0]) < n:
            return False
    return True


def pbh_stabilizable(A, B, tol: Tolerances = DEFAULT_TOL) -> bool:
    """PBH test restricted to eigenvalues with modulus >= 1."""
    return _pbh(A, B, True, tol)


def pbh_controllable(A, B, tol: Tolerances = DEFAULT_TOL) -> bool:
    """PBH test over the whole spectrum of ``A``."""
    return _pbh(A, B, False, tol)


def _readonly(M) -> np.ndarray:
    M = np.array(M, dtype=float)
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class Plant:
    """System and cost data ``(A, B, C, Q, R, Sigma1, Sigma2)``.

    ``Sigma2`` defaults to zero and ``C`` is optional. Construction validates
    shapes, symmetry, definiteness, stabilizability of ``(A, B)`` and the row
    rank of ``C``; arrays are stored read-only.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma1: np.ndarray
    Sigma2: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        tol = DEFAULT_TOL
        A = _readonly(self.A)
        B = _readonly(self.B)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionError(f"B must be {n} x m, got shape {B.shape}")
        m = B.shape[1]
        sigma2 = np.zeros((m, m)) if self.Sigma2 is None else self.Sigma2
        mats = {
            "A": A,
            "B": B,
            "Q": _readonly(self.Q),
            "R": _readonly(self.R),
            "Sigma1": _readonly(self.Sigma1),
            "Sigma2": _readonly(sigma2),
        }
        expected = {"Q": (n, n), "R": (m, m), "Sigma1": (n, n), "Sigma2": (m, m)}
        for name, shape in expected.items():
            if mats[name].shape != shape:
                raise DimensionError(f"{name} must have shape {shape}, got {mats[name].shape}")
        for name, M in mats.items():
            if not np.all(np.isfinite(M)):
                raise ContractError(f"{name} has non-finite entries")
        for name in expected:
            M = mats[name]
            if np.max(np.abs(M - M.T), initial=0.0) > tol.symmetry:
                raise ContractError(f"{name} is not symmetric")
        for name, strict in (("R", True), ("Sigma1", True), ("Q", False), ("Sigma2", False)):
            lmin = np.linalg.eigvalsh(mats[name])[0]
            scale = max(1.0, np.max(np.abs(mats[name])))
            if strict and not lmin > 0.0:
                raise ContractError(f"{name} must be positive definite (min eigenvalue {lmin:.3e})")
            if not strict and lmin < -tol.psd_rel * scale:
                raise ContractError(f"{name} must be positive semidefinite (min eigenvalue {lmin:.3e})")
        if not pbh_stabilizable(A, B, tol):
            raise ContractError("(A, B) is not stabilizable")
        if self.C is not None:
            C = _readonly(self.C)
            if C.ndim != 2 or C.shape[1] != n or C.shape[0] > n or C.shape[0] < 1:
                raise DimensionError(f"C must be d x {n} with 1 <= d <= {n}, got shape {C.shape}")
            if not np.all(np.isfinite(C)):
                raise ContractError("C has non-finite entries")
            s = np.linalg.svd(C, compute_uv=False)
            if np.count_nonzero(s > tol.rank_rel * s[0]) < C.shape[0]:
                raise ContractError("C must have full row rank")
            object.__setattr__(self, "C", C)
        for name, M in mats.items():
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def d(self) -> Optional[int]:
        return None if self.C is None else self.C.shape[0]

    @property
    def has_sigma2(self) -> bool:
        return bool(np.any(self.Sigma2 != 0.0))

    def closed_loop(self, K) -> np.ndarray:
        return self.A + self.B @ np.asarray(K, dtype=float)

    def replace(self, **changes) -> "Plant":
        fields = dict(A=self.A, B=self.B, Q=self.Q, R=self.R, Sigma1=self.Sigma1,
                      Sigma2=self.Sigma2, C=self.C)
        fields.update(changes)
        return Plant(**fields)


def is_stabilizing(plant: Plant, K) -> bool:
    K = np.asarray(K, dtype=float)
    if K.shape != (plant.m, plant.n):
        raise DimensionError(f"K must have shape {(plant.m, plant.n)}, got {K.shape}")
    if not np.all(np.isfinite(K)):
        return False
    return spectral_radius(plant.closed_loop(K)) < 1.0


class HewerResult(NamedTuple):
    P: np.ndarray
    K: np.ndarray
    iterations: int


def hewer_step(plant: Plant, K) -> tuple[np.ndarray, np.ndarray]:
    """One Hewer update; returns ``(P_K, K_next)``."""
    A, B, R = plant.A, plant.B, plant.R
    K = np.asarray(K, dtype=float)
    Acl = A + B @ K
    P = dlyap(Acl.T, plant.Q + K.T @ R @ K)
    P = 0.5 * (P + P.T)
    K_next = -np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A)
    return P, K_next


def hewer_solve(plant: Plant, K0, tol: Tolerances = DEFAULT_TOL) -> HewerResult:
    """Hewer's policy iteration for the unconstrained discrete-time LQR.

    Iterates ``K <- -(B^T P_K B + R)^{-1} B^T P_K A`` until the update is below
    ``tol.hewer_step`` in max-norm. The returned ``P`` is evaluated at the
    returned gain.
    """
    K = np.asarray(K0, dtype=float)
    if not is_stabilizing(plant, K):
        raise InfeasibleStartError("initial gain is not stabilizing")
    for it in range(1, tol.hewer_max_iters + 1):
        _, K_next = hewer_step(plant, K)
        step = np.max(np.abs(K_next - K))
        K = K_next
        if step < tol.hewer_step:
            P = dlyap(plant.closed_loop(K).T, plant.Q + K.T @ plant.R @ K)
            return HewerResult(0.5 * (P + P.T), K, it)
    raise NonConvergenceError(f"Hewer iteration did not converge in {tol.hewer_max_iters} steps")
