"""Mean first passage times, mean return times, diameter, Kemeny's constant.

Passage times to a recurrent target j solve the (N-1)x(N-1) system

    tau_ij = 1 + sum_{k != j} p_ik tau_kj        (i != j)

one dense LU solve per target column, which handles unichains (with
transient states) uniformly. Columns of transient targets are infinite:
return to a transient state is not almost sure, so the expectation
diverges. Sums of the form sum_j mu_j tau_ij therefore run over
recurrent j only (mu_j = 0 annihilates the infinite terms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConstancyViolation, NotUnichain, SingularSystem
from .model import ChainModel, as_readonly
from .solve import StationaryDistribution

#: Per-state Kemeny deviation beyond this signals an upstream numerical failure.
CONSTANCY_TOL = 1e-6


@dataclass(frozen=True)
class PassageMatrix:
    """Matrix of mean first passage times; the diagonal holds return times."""

    tau: np.ndarray

    @property
    def recurrent_targets(self) -> np.ndarray:
        """Boolean mask of states with finite passage columns."""
        return np.isfinite(np.diag(self.tau))


@dataclass(frozen=True)
class KemenyResult:
    """Kemeny's constant with its per-start-state values.

    `eta` is the mean of eta_i = sum_{j != i} mu_j tau_ij over recurrent
    start states; `max_deviation` is max - min of those values, which is
    zero up to solver noise. Values for transient starts are included in
    `per_state` (they are finite, all targets being recurrent) but are
    excluded from the constancy figure.
    """

    eta: float
    per_state: np.ndarray
    max_deviation: float


def first_passage_matrix(
    chain: ChainModel, mu: StationaryDistribution
) -> PassageMatrix:
    """Mean first passage times between all state pairs of a unichain."""
    if not chain.structure.is_unichain:
        raise NotUnichain("passage times require a unichain")
    P = chain.transition
    n = chain.n
    tau = np.full((n, n), np.inf)
    eye = np.eye(n - 1) if n > 1 else None
    for j in chain.structure.recurrent:
        if n == 1:
            tau[0, 0] = 1.0
            break
        idx = [i for i in range(n) if i != j]
        A = eye - P[np.ix_(idx, idx)]
        try:
            x = scipy.linalg.solve(A, np.ones(n - 1))
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystem(f"passage system for target {j}: {exc}") from exc
        tau[idx, j] = x
        tau[j, j] = 1.0 + P[j, idx] @ x
    return PassageMatrix(as_readonly(tau))


def return_time_check(tau: PassageMatrix, mu: StationaryDistribution) -> float:
    """Max over recurrent i of |tau_ii - 1/mu_i|."""
    rec = tau.recurrent_targets
    diag = np.diag(tau.tau)[rec]
    return float(np.abs(diag - 1.0 / mu.mu[rec]).max())


def diameter(tau: PassageMatrix) -> float:
    """Largest off-diagonal passage time; inf when any target is transient."""
    T = tau.tau
    n = T.shape[0]
    if n == 1:
        return 0.0
    off = T[~np.eye(n, dtype=bool)]
    return float(off.max())


def kemeny(tau: PassageMatrix, mu: StationaryDistribution) -> KemenyResult:
    """Kemeny's constant eta_i = sum_{j != i} mu_j tau_ij of a unichain.

    Raises
    ------
    ConstancyViolation
        If the per-state values spread more than `CONSTANCY_TOL` across
        recurrent starts, which indicates broken upstream numerics.
    """
    rec = tau.recurrent_targets
    T = np.where(np.isfinite(tau.tau), tau.tau, 0.0)
    per_state = T @ mu.mu
    per_state[rec] -= np.diag(T)[rec] * mu.mu[rec]
    dev = float(per_state[rec].max() - per_state[rec].min())
    if dev > CONSTANCY_TOL:
        raise ConstancyViolation(
            f"per-state Kemeny values deviate by {dev!r} (> {CONSTANCY_TOL})"
        )
    return KemenyResult(float(per_state[rec].mean()), as_readonly(per_state), dev)
