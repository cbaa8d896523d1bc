"""Bias of a Markov reward process, by two independent routes.

The bias solves the Poisson equation

    rho + lambda_i = r_i + sum_j p_ij lambda_j

and is unique up to adding a constant vector. `poisson_solve` computes it
algebraically by pinning the canonical gauge sum_i mu_i lambda_i = 0
(never by truncating reward series, which converge slowly or oscillate
for periodic chains). `bias_from_passage` instead evaluates

    lambda'_i = -sum_{j != i} mu_j r_j tau_ij

from mean first passage times; the sum runs over recurrent j, whose
mu_j > 0 keep every term finite. That expression satisfies the Poisson
equation at every recurrent state, and at transient states too whenever
the transient states carry zero reward. When they do carry reward, the
passage-time expression cannot see it (mu annihilates those terms), so
the transient entries are completed by solving the transient block of
the Poisson equation given the recurrent values; this coincides with
the plain expression in the zero-transient-reward case and keeps the
residual at solver precision everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, RewardOutOfRange, SingularSystem
from .model import MrpModel, as_readonly
from .passage import PassageMatrix
from .solve import StationaryDistribution

#: Max Poisson-equation residual a bias vector may carry.
RESIDUAL_TOL = 1e-8
#: Tolerance on the canonical gauge sum_i mu_i lambda_i = 0.
GAUGE_TOL = 1e-9
#: Slack in the span <= diameter comparison.
DIAMETER_SLACK = 1e-9

CANONICAL = "canonical"
PASSAGE_FORMULA = "passage_formula"
CENTERED = "centered"


@dataclass(frozen=True)
class BiasVector:
    """Bias values together with the gauge that pins the additive constant.

    gauge is one of "canonical" (sum_i mu_i lambda_i = 0),
    "passage_formula" (raw passage-time values), or "centered"
    (max + min = 0). `rho` is the average reward the values solve the
    Poisson equation with.
    """

    values: np.ndarray
    gauge: str
    rho: float


def poisson_residual(mrp: MrpModel, values: np.ndarray, rho: float) -> float:
    """Max absolute Poisson-equation residual of candidate bias values."""
    P = mrp.chain.transition
    return float(np.abs(mrp.reward + P @ values - values - rho).max())


def poisson_solve(
    mrp: MrpModel, mu: StationaryDistribution, rho: float
) -> BiasVector:
    """Canonical bias via one dense solve of the gauged Poisson system.

    The system (I - P) lambda = r - rho is rank deficient by one; the row
    of a maximal-mu recurrent state is replaced by the gauge constraint
    mu . lambda = 0, which keeps the pivot well scaled. Valid for
    periodic chains as well.
    """
    n = mrp.n
    if mu.mu.shape[0] != n:
        raise DimensionMismatch(f"mu has length {mu.mu.shape[0]}, expected {n}")
    A = np.eye(n) - mrp.chain.transition
    k = int(np.argmax(mu.mu))
    A[k, :] = mu.mu
    b = mrp.reward - rho
    b[k] = 0.0
    try:
        lam = scipy.linalg.solve(A, b)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    return BiasVector(as_readonly(lam), CANONICAL, float(rho))


def bias_from_passage(
    mrp: MrpModel, mu: StationaryDistribution, tau: PassageMatrix
) -> BiasVector:
    """Bias values from mean first passage times (see module docstring)."""
    n = mrp.n
    if mu.mu.shape[0] != n or tau.tau.shape != (n, n):
        raise DimensionMismatch("mu/tau dimensions do not match the process")
    rho = float(mu.mu @ mrp.reward)
    T = np.where(np.isfinite(tau.tau), tau.tau, 0.0)
    w = mu.mu * mrp.reward
    lam = -(T @ w - np.diag(T) * w)
    transient = [i for i in range(n) if not np.isfinite(tau.tau[i, i])]
    if transient and np.any(mrp.reward[transient] != 0.0):
        recurrent = [i for i in range(n) if i not in set(transient)]
        P = mrp.chain.transition
        A = np.eye(len(transient)) - P[np.ix_(transient, transient)]
        b = (
            mrp.reward[transient]
            - rho
            + P[np.ix_(transient, recurrent)] @ lam[recurrent]
        )
        try:
            lam[transient] = scipy.linalg.solve(A, b)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystem(str(exc)) from exc
    return BiasVector(as_readonly(lam), PASSAGE_FORMULA, rho)


def to_canonical(bias: BiasVector, mu: StationaryDistribution) -> BiasVector:
    """Translate any Poisson solution into the canonical gauge."""
    shift = float(mu.mu @ bias.values)
    return BiasVector(as_readonly(bias.values - shift), CANONICAL, bias.rho)


def to_centered(bias: BiasVector) -> BiasVector:
    """Translate so max + min = 0; the sup norm then equals half the span."""
    shift = 0.5 * (float(bias.values.max()) + float(bias.values.min()))
    return BiasVector(as_readonly(bias.values - shift), CENTERED, bias.rho)


def bias_span(bias: BiasVector) -> float:
    """max_i lambda_i - min_i lambda_i; invariant under translation."""
    return float(bias.values.max() - bias.values.min())


def check_diameter_bound(mrp: MrpModel, span: float, diam: float) -> bool:
    """Whether span(lambda) <= diameter, applicable to rewards in [0, 1].

    Raises
    ------
    RewardOutOfRange
        If any reward lies outside [0, 1]; the comparison is only
        meaningful there.
    """
    r = mrp.reward
    if r.min() < 0.0 or r.max() > 1.0:
        raise RewardOutOfRange(
            f"rewards span [{r.min()}, {r.max()}], need [0, 1]"
        )
    if np.isinf(diam):
        return True
    return span <= diam + DIAMETER_SLACK
