"""Reference problem instances used by tests, the CLI and the benchmark harness."""
from __future__ import annotations

import numpy as np

from .constraints import Constraint
from .kernels import Plant

__all__ = ["two_state_plant", "two_state_diagonal", "two_state_output", "diagonal_stable_region"]


def two_state_plant() -> Plant:
    """Two-state, two-input plant with a coupled, marginally fast open loop."""
    return Plant(
        A=np.array([[0.8, 1.0], [0.0, 0.9]]),
        B=np.array([[0.0, 1.0], [1.0, 0.0]]),
        Q=np.diag([10.0, 0.5]),
        R=np.diag([0.1, 0.1]),
        Sigma1=np.diag([1.0, 5.0]),
    )


def two_state_diagonal() -> Constraint:
    """Diagonal gains ``K = diag(l1, l2)`` for `two_state_plant`."""
    return Constraint.sparsity([(0, 0), (1, 1)], (2, 2))


def two_state_output() -> Constraint:
    """Output feedback through ``C = [1, 1]`` for `two_state_plant`."""
    return Constraint.output_feedback(np.array([[1.0, 1.0]]), 2)


def diagonal_stable_region(l1, l2):
    """Whether ``diag(l1, l2)`` stabilizes `two_state_plant` (vectorized).

    The closed loop ``[[0.8, 1 + l2], [l1, 0.9]]`` has characteristic polynomial
    ``z^2 - 1.7 z + 0.72 - l1 (1 + l2)``, which is Schur iff
    ``-0.28 < l1 (1 + l2) < 0.02``.
    """
    c = np.asarray(l1) * (1.0 + np.asarray(l2))
    return (c > -0.28) & (c < 0.02)
