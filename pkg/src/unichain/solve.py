"""Stationary distributions, average reward, and limiting distributions.

Everything here is dense linear algebra (LU solves); the target scale is
a few hundred states, where exactness and simplicity beat iterative or
spectral methods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotUnichain, SingularSystem
from .model import ChainModel, MrpModel, as_readonly

#: Stationary vectors must sum to 1 within this tolerance.
SUM_TOL = 1e-10
#: Entries in [-CLAMP_TOL, 0) are treated as floating-point noise.
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class StationaryDistribution:
    """The unique row vector mu with mu P = mu, zero on transient states."""

    mu: np.ndarray


@dataclass(frozen=True)
class LimitingDistribution:
    """Long-run average state distribution, one row per start state.

    Row s is the Cesaro (time-average) occupation distribution of the
    chain started in s. For a unichain all rows coincide with the
    stationary distribution; for a reducible chain row s mixes the
    recurrent classes' stationary distributions with the absorption
    probabilities from s.
    """

    per_start: np.ndarray


def _solve(A, b):
    try:
        x = scipy.linalg.solve(A, b)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("solution contains non-finite entries")
    return x


def _stationary_vector(P: np.ndarray) -> np.ndarray:
    """Solve (P^T - I) mu = 0 with the last row replaced by sum-to-one."""
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return _solve(A, b)


def stationary(chain: ChainModel) -> StationaryDistribution:
    """Stationary distribution of a unichain.

    Raises
    ------
    NotUnichain
        If the chain has more than one recurrent class.
    SingularSystem
        On numerical degeneracy (should not occur for valid input).
    """
    if not chain.structure.is_unichain:
        raise NotUnichain(
            f"chain has {len(chain.structure.recurrent_classes)} recurrent classes"
        )
    mu = _stationary_vector(chain.transition)
    transient = list(chain.structure.transient)
    mu[transient] = 0.0
    if mu.min() < -CLAMP_TOL:
        raise SingularSystem(f"stationary entry {mu.min()!r} below -{CLAMP_TOL}")
    np.clip(mu, 0.0, None, out=mu)
    mu /= mu.sum()
    return StationaryDistribution(as_readonly(mu))


def average_reward(mrp: MrpModel, mu: StationaryDistribution) -> float:
    """Long-run mean per-step reward sum_i mu_i r_i."""
    if mu.mu.shape[0] != mrp.n:
        raise DimensionMismatch(
            f"mu has length {mu.mu.shape[0]}, reward has length {mrp.n}"
        )
    return float(mu.mu @ mrp.reward)


def limiting_distribution(chain: ChainModel) -> LimitingDistribution:
    """Per-start limiting distributions of a possibly reducible chain.

    For each recurrent class the stationary distribution of the closed
    sub-chain is computed; starts inside a class get that vector, and
    transient starts get the absorption-probability mixture obtained
    from the transient linear system (I - Q) X = B, where Q is the
    transient-to-transient block and B holds the one-step probabilities
    of entering each class.
    """
    P = chain.transition
    n = chain.n
    st = chain.structure
    classes = st.recurrent_classes
    class_mu = np.zeros((len(classes), n))
    for c, members in enumerate(classes):
        idx = list(members)
        class_mu[c, idx] = _stationary_vector(P[np.ix_(idx, idx)])

    per_start = np.zeros((n, n))
    for c, members in enumerate(classes):
        per_start[list(members)] = class_mu[c]

    transient = list(st.transient)
    if transient:
        Q = P[np.ix_(transient, transient)]
        B = np.zeros((len(transient), len(classes)))
        for c, members in enumerate(classes):
            B[:, c] = P[np.ix_(transient, list(members))].sum(axis=1)
        absorb = _solve(np.eye(len(transient)) - Q, B)
        per_start[transient] = absorb @ class_mu
    return LimitingDistribution(as_readonly(per_start))
