"""Stationary-distribution and average-reward perturbation bounds.

Given an original unichain P and an arbitrary perturbed chain Q (which
may be reducible, in which case its stationary behavior depends on the
start state), this module evaluates three families of bounds against
the actually realized deviations:

* per-state:  |mu_i - mu~_i| <= (mu_i / 2) max_{j != i} tau_ji ||P - Q||_inf
* 1-norm:     ||mu - mu~||_1 <= (eta / 2) ||P - Q||_inf
* reward:     |rho - rho~|   <= (1/2) span(lambda) ||P - Q||_inf

plus the subset-maximization refinement

    (1/2) max_{A} { max_i sum_{j in A\\{i}} mu_j tau_ij
                    - min_i sum_{j in A\\{i}} mu_j tau_ij } ||P - Q||_inf.

The subset maximum ranges over subsets of recurrent states (transient j
have mu_j = 0 and cannot change any sum) and is enumerated exactly up
to 20 recurrent states, or estimated from seeded random subsets plus
all singletons and the full set beyond that.

What is provable in this generality, and what the report enforces, is:

* the per-state bound, for recurrent i and every start state;
* the reward bound, for every start state;
* TV(mu, mu~) = (1/2)||mu - mu~||_1 <= corollary value, for every start
  (via the reward bound applied to the 0/1 reward marking where mu
  exceeds mu~);
* corollary value <= (1/2) max_i eta_i ||P - Q||_inf with the max over
  all start states' Kemeny sums eta_i = sum_{j != i} mu_j tau_ij, which
  collapses to the Kemeny bound when the original is irreducible.

Two folklore strengthenings fail outside the irreducible world and are
reported as data instead of being enforced: the full 1-norm deviation
can reach twice the corollary value (realized by pairs of near-reversed
absorbing chains), and when the original chain has transient states the
subset expression can exceed eta because transient starts' eta_i exceed
eta, so the corollary value is not capped by the Kemeny bound there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bias import bias_span, poisson_solve
from .errors import PropertyViolation, TooLarge
from .model import ChainModel, MrpModel, as_readonly
from .passage import PassageMatrix, first_passage_matrix, kemeny
from .solve import (
    StationaryDistribution,
    average_reward,
    limiting_distribution,
    stationary,
)

#: Slack allowed when checking realized deviations against their bounds.
BOUND_SLACK = 1e-9
#: Slack for the corollary-vs-Kemeny comparison, which is an exact theorem.
HUNTER_SLACK = 1e-12
#: Recurrent-state count above which exact subset enumeration is refused.
EXACT_SUBSET_LIMIT = 20
#: Random subsets drawn in sampled mode.
SAMPLED_SUBSETS = 1 << 14

EXACT = "exact"
SAMPLED = "sampled"


def matrix_inf_norm(A) -> float:
    """Maximum absolute row sum."""
    A = np.asarray(A, dtype=float)
    return float(np.abs(A).sum(axis=1).max())


def cho_meyer_bound(
    mu: StationaryDistribution, tau: PassageMatrix, delta_norm: float, i: int
) -> float:
    """Per-state bound (mu_i / 2) max_{j != i} tau_ji delta_norm.

    For a transient i the prefactor mu_i is zero and the bound is
    reported as 0; the per-state comparison is only meaningful for
    recurrent states.
    """
    n = tau.tau.shape[0]
    if not np.isfinite(tau.tau[i, i]):
        return 0.0
    if n == 1:
        return 0.0
    column = np.delete(tau.tau[:, i], i)
    return 0.5 * (mu.mu[i] * float(column.max())) * delta_norm


def hunter_bound(eta: float, delta_norm: float) -> float:
    """1-norm bound (eta / 2) delta_norm from Kemeny's constant."""
    return 0.5 * eta * delta_norm


def bias_span_bound(span: float, delta_norm: float) -> float:
    """Average-reward bound (1/2) span(lambda) delta_norm."""
    return 0.5 * span * delta_norm


def _weighted_tau(mu: StationaryDistribution, tau: PassageMatrix) -> np.ndarray:
    """W[i, j] = mu_j tau_ij with transient columns zeroed (mu_j = 0)."""
    W = np.where(np.isfinite(tau.tau), tau.tau, 0.0) * mu.mu[None, :]
    return W


def _subset_value(W: np.ndarray, cols) -> np.ndarray:
    """f_i(A) = sum_{j in A, j != i} W[i, j], accumulated in ascending j.

    The diagonal of a just-added column is cancelled immediately after
    the addition; the independently coded enumeration used to verify
    exact mode reproduces this operation order so the attained maxima
    compare bit for bit.
    """
    g = np.zeros(W.shape[0])
    for j in cols:
        g += W[:, j]
        g[j] -= W[j, j]
    return g


def _exact_subset_span(W: np.ndarray, rec: list[int]) -> tuple[float, tuple[int, ...]]:
    m = len(rec)
    best = 0.0
    best_mask = 0

    def visit(k, g, mask):
        nonlocal best, best_mask
        if k == m:
            span = float(g.max() - g.min())
            if span > best:
                best = span
                best_mask = mask
            return
        visit(k + 1, g, mask)
        j = rec[k]
        g2 = g + W[:, j]
        g2[j] -= W[j, j]
        visit(k + 1, g2, mask | (1 << k))

    visit(0, np.zeros(W.shape[0]), 0)
    subset = tuple(rec[k] for k in range(m) if best_mask >> k & 1)
    return best, subset


def _sampled_subset_span(
    W: np.ndarray, rec: list[int], seed: int
) -> tuple[float, tuple[int, ...]]:
    m = len(rec)
    rng = np.random.default_rng(seed)
    candidates = list(rng.random((SAMPLED_SUBSETS, m)) < 0.5)
    for k in range(m):
        single = np.zeros(m, dtype=bool)
        single[k] = True
        candidates.append(single)
    candidates.append(np.ones(m, dtype=bool))
    best = 0.0
    best_subset: tuple[int, ...] = ()
    for mask in candidates:
        cols = [rec[k] for k in range(m) if mask[k]]
        g = _subset_value(W, cols)
        span = float(g.max() - g.min())
        if span > best:
            best = span
            best_subset = tuple(cols)
    return best, best_subset


def corollary_subset_bound(
    mu: StationaryDistribution,
    tau: PassageMatrix,
    delta_norm: float,
    mode: str = EXACT,
    seed: int = 0,
) -> float:
    """Subset-maximization refinement of the 1-norm bound.

    Raises
    ------
    TooLarge
        In exact mode when the chain has more than `EXACT_SUBSET_LIMIT`
        recurrent states.
    """
    span, _ = _corollary_span(mu, tau, mode, seed)
    return 0.5 * span * delta_norm


def _corollary_span(mu, tau, mode, seed):
    rec = [int(i) for i in np.flatnonzero(tau.recurrent_targets)]
    W = _weighted_tau(mu, tau)
    if mode == EXACT:
        if len(rec) > EXACT_SUBSET_LIMIT:
            raise TooLarge(
                f"{len(rec)} recurrent states exceed the exact-mode cutoff "
                f"{EXACT_SUBSET_LIMIT}; use sampled mode"
            )
        return _exact_subset_span(W, rec)
    if mode == SAMPLED:
        return _sampled_subset_span(W, rec, seed)
    raise ValueError(f"unknown mode {mode!r}")


def average_reward_deviation(
    mrp_P: MrpModel, P_tilde: ChainModel, start: int
) -> float:
    """Realized |rho - rho~| with rho~ from the start-dependent limit."""
    mu = stationary(mrp_P.chain)
    rho = average_reward(mrp_P, mu)
    lim = limiting_distribution(P_tilde)
    return abs(rho - float(lim.per_start[start] @ mrp_P.reward))


@dataclass(frozen=True)
class PerturbationReport:
    """All bounds and realized deviations for one (P, Q) chain pair.

    Rows of `per_state_actual` are start states of the perturbed chain,
    columns are states; `actual_l1` and `rho_deviation` are per start.
    `bias_span_bounds` maps a reward label ("input", or "tv_start_<s>"
    for the 0/1 reward indicating where mu exceeds the perturbed
    limiting distribution of start s) to the reward-bound right-hand
    side for that reward. `eta_hat` is the largest per-start Kemeny sum
    over all states (equal to `eta` for irreducible originals). Ratios
    in `tightness` are realized/bound, 0/0 reported as 0 and x/0 as inf.
    """

    inf_norm_delta: float
    per_state_bounds: np.ndarray
    per_state_actual: np.ndarray
    hunter_bound: float
    corollary_l1_bound: float
    corollary_mode: str
    attaining_subset: tuple[int, ...]
    bias_span_bounds: dict
    rho_deviation: np.ndarray
    actual_l1: np.ndarray
    tightness: dict
    eta: float
    eta_hat: float
    input_bias_span: float
    worst_start: int

    def to_json_dict(self) -> dict:
        """JSON-ready dict; state indices are 1-based in reports."""
        return {
            "inf_norm_delta": self.inf_norm_delta,
            "per_state_bounds": self.per_state_bounds.tolist(),
            "hunter_bound": self.hunter_bound,
            "corollary_l1_bound": self.corollary_l1_bound,
            "corollary_mode": self.corollary_mode,
            "attaining_subset": [j + 1 for j in self.attaining_subset],
            "bias_span_bounds": dict(self.bias_span_bounds),
            "eta": self.eta,
            "eta_hat": self.eta_hat,
            "input_bias_span": self.input_bias_span,
            "actuals": {
                "per_state": self.per_state_actual.tolist(),
                "l1_per_start": self.actual_l1.tolist(),
                "rho_deviation_per_start": self.rho_deviation.tolist(),
                "worst_start": self.worst_start + 1,
            },
            "tightness": dict(self.tightness),
        }


def _ratio(actual: float, bound: float) -> float:
    if bound > 0.0:
        return actual / bound
    return 0.0 if actual == 0.0 else float("inf")


def build_report(
    mrp: MrpModel,
    P_tilde: ChainModel,
    subset_mode: str | None = None,
    subset_seed: int = 0,
) -> PerturbationReport:
    """Evaluate every bound against the realized deviations.

    The perturbed chain may be reducible; realized deviations are then
    computed per start state from its limiting distribution, and each
    one must still fall under the start-independent bounds. A failure
    of any provable inequality (see the module docstring) indicates
    broken numerics and raises `PropertyViolation`.
    """
    chain = mrp.chain
    n = chain.n
    mu = stationary(chain)
    rho = average_reward(mrp, mu)
    tau = first_passage_matrix(chain, mu)
    kem = kemeny(tau, mu)
    span_input = bias_span(poisson_solve(mrp, mu, rho))
    delta = matrix_inf_norm(chain.transition - P_tilde.transition)

    lim = limiting_distribution(P_tilde)
    per_state_actual = np.abs(mu.mu[None, :] - lim.per_start)
    actual_l1 = per_state_actual.sum(axis=1)
    rho_tilde = lim.per_start @ mrp.reward
    rho_dev = np.abs(rho - rho_tilde)

    per_state_bounds = np.array(
        [cho_meyer_bound(mu, tau, delta, i) for i in range(n)]
    )
    hunter = hunter_bound(kem.eta, delta)
    eta_hat = float(kem.per_state.max())
    if subset_mode is None:
        m = int(tau.recurrent_targets.sum())
        subset_mode = EXACT if m <= EXACT_SUBSET_LIMIT else SAMPLED
    span_max, subset = _corollary_span(mu, tau, subset_mode, subset_seed)
    corollary = 0.5 * span_max * delta

    bounds_by_reward = {"input": bias_span_bound(span_input, delta)}
    tv_reward_actual = {}
    for s in range(n):
        r_tv = (mu.mu >= lim.per_start[s]).astype(float)
        rho_tv = average_reward(MrpModel(chain, r_tv), mu)
        span_tv = bias_span(poisson_solve(MrpModel(chain, r_tv), mu, rho_tv))
        label = f"tv_start_{s + 1}"
        bounds_by_reward[label] = bias_span_bound(span_tv, delta)
        tv_reward_actual[label] = abs(rho_tv - float(lim.per_start[s] @ r_tv))

    rec = tau.recurrent_targets
    _check_validity(
        per_state_actual[:, rec],
        per_state_bounds[rec],
        actual_l1,
        corollary,
        0.5 * eta_hat * delta,
        rho_dev,
        bounds_by_reward,
        tv_reward_actual,
    )

    tightness = {
        "per_state": max(
            (
                _ratio(float(a), float(b))
                for row in per_state_actual[:, rec]
                for a, b in zip(row, per_state_bounds[rec])
            ),
            default=0.0,
        ),
        "tv_vs_corollary": max(
            (_ratio(0.5 * float(a), corollary) for a in actual_l1), default=0.0
        ),
        "l1_vs_hunter": max(
            (_ratio(float(a), hunter) for a in actual_l1), default=0.0
        ),
        "rho_vs_input_span": max(
            (_ratio(float(a), bounds_by_reward["input"]) for a in rho_dev),
            default=0.0,
        ),
    }

    return PerturbationReport(
        inf_norm_delta=delta,
        per_state_bounds=as_readonly(per_state_bounds),
        per_state_actual=as_readonly(per_state_actual),
        hunter_bound=hunter,
        corollary_l1_bound=corollary,
        corollary_mode=subset_mode,
        attaining_subset=subset,
        bias_span_bounds=bounds_by_reward,
        rho_deviation=as_readonly(rho_dev),
        actual_l1=as_readonly(actual_l1),
        tightness=tightness,
        eta=kem.eta,
        eta_hat=eta_hat,
        input_bias_span=span_input,
        worst_start=int(np.argmax(actual_l1)),
    )


def _check_validity(
    per_state_actual_rec,
    per_state_bounds_rec,
    actual_l1,
    corollary,
    eta_hat_bound,
    rho_dev,
    bounds_by_reward,
    tv_reward_actual,
):
    if np.any(per_state_actual_rec > per_state_bounds_rec[None, :] + BOUND_SLACK):
        raise PropertyViolation("per-state deviation exceeds its bound")
    if np.any(0.5 * actual_l1 > corollary + BOUND_SLACK):
        raise PropertyViolation("total-variation deviation exceeds the subset bound")
    # the two sides are accumulated in different orders; allow for ulps
    if corollary > eta_hat_bound + max(HUNTER_SLACK, 8e-16 * eta_hat_bound):
        raise PropertyViolation("subset bound exceeds the worst-start Kemeny bound")
    if np.any(rho_dev > bounds_by_reward["input"] + BOUND_SLACK):
        raise PropertyViolation("average-reward deviation exceeds its bound")
    for label, actual in tv_reward_actual.items():
        if actual > bounds_by_reward[label] + BOUND_SLACK:
            raise PropertyViolation(f"deviation under reward {label} exceeds its bound")
