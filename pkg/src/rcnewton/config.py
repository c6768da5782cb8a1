from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances used across the package.

    Every threshold that decides a branch (symmetry checks, rank decisions,
    conditioning warnings) lives here so that callers can tighten or relax
    them in one place.
    """

    symmetry: float = 1e-12
    sym_input: float = 1e-10
    rank_rel: float = 1e-9
    psd_rel: float = 1e-12
    cond_warn: float = 1e12
    hewer_step: float = 1e-12
    hewer_max_iters: int = 200
    membership: float = 1e-10


DEFAULT_TOL = Tolerances()
