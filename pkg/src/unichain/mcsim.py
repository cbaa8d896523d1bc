"""Seeded Monte Carlo trajectory engine and concentration-bound checks.

Trajectories use the counter-based Philox generator with explicit 64-bit
seeding; replica k of a batch draws from the stream keyed seed + k, so
batched runs reproduce the corresponding single runs bit for bit and
replicas stay independent. Transitions are sampled by inverse CDF on the
row's cumulative probabilities.

Visit counting: a walk of horizon ell records the states at steps
1..ell, the start state counting as the step-1 visit; the state after
the final transition is not counted. Visit counts always sum to ell.

The finite-horizon concentration check compares the accumulated-reward
shortfall ell * rho - sum_i v_i r_i on a perturbed chain against

    (ell / 2) span(lambda) ||P - Q||_inf
        + span(lambda) (1 + sqrt(2 ell log(1 / delta)))

which holds with probability at least 1 - delta (natural logarithm; the
underlying martingale tail bound is e-based). The bound is one-sided;
the symmetric lower tail follows by negating the reward, and both sides
are exercised in the test suite.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bias import bias_span, poisson_solve
from .errors import PropertyViolation
from .model import ChainModel, MrpModel
from .perturb import matrix_inf_norm
from .solve import average_reward, stationary

_SEED_MASK = (1 << 64) - 1
_CHUNK = 1 << 16


@dataclass(frozen=True)
class TrajectoryStats:
    """Visit counts of one simulated walk; sum(visits) == ell exactly."""

    ell: int
    visits: np.ndarray
    accumulated_reward: float
    start: int
    seed: int


@dataclass(frozen=True)
class Lemma1Outcome:
    """One evaluation of the finite-horizon concentration bound."""

    lhs: float
    rhs: float
    violated: bool
    delta: float
    span: float


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & _SEED_MASK))


def simulate(
    chain: ChainModel, start: int, ell: int, seed: int, reward=None
) -> TrajectoryStats:
    """Walk ell steps and count visits; deterministic given the seed.

    The accumulated reward is summed in visit order, matching the
    batched runner's arithmetic exactly.
    """
    n = chain.n
    if not (0 <= start < n):
        raise ValueError(f"start {start} out of range for {n} states")
    if ell < 1:
        raise ValueError("horizon must be at least 1")
    cum_rows = np.cumsum(chain.transition, axis=1).tolist()
    rew = [0.0] * n if reward is None else [float(x) for x in reward]
    visits = [0] * n
    visits[start] = 1
    acc = rew[start]
    state = start
    last = n - 1
    gen = _generator(seed)
    remaining = ell - 1
    while remaining > 0:
        k = min(remaining, _CHUNK)
        for u in gen.random(k).tolist():
            row = cum_rows[state]
            nxt = 0
            while nxt < last and u >= row[nxt]:
                nxt += 1
            state = nxt
            visits[state] += 1
            acc += rew[state]
        remaining -= k
    stats = TrajectoryStats(
        ell=ell,
        visits=np.array(visits, dtype=np.int64),
        accumulated_reward=acc if reward is not None else 0.0,
        start=start,
        seed=seed,
    )
    stats.visits.setflags(write=False)
    return stats


def simulate_batch(
    chain: ChainModel,
    start: int,
    ell: int,
    seed: int,
    replicas: int,
    reward,
    threads: int = 1,
    block: int = 512,
) -> np.ndarray:
    """Accumulated rewards of `replicas` independent walks.

    Replica k draws from the stream keyed seed + k, so entry k equals
    simulate(chain, start, ell, seed + k, reward).accumulated_reward
    bit for bit. Blocks of replicas advance in lockstep; with
    threads > 1, blocks run on a thread pool (each replica's result
    depends only on its own stream, so scheduling cannot change values).
    """
    n = chain.n
    if not (0 <= start < n):
        raise ValueError(f"start {start} out of range for {n} states")
    cum = np.cumsum(chain.transition, axis=1)
    rew = np.asarray(reward, dtype=float)
    acc = np.empty(replicas)
    last = n - 1

    def run_block(k0: int, k1: int) -> None:
        size = k1 - k0
        uniforms = np.empty((size, ell - 1)) if ell > 1 else None
        for b in range(size):
            if ell > 1:
                uniforms[b] = _generator(seed + k0 + b).random(ell - 1)
        states = np.full(size, start, dtype=np.intp)
        a = np.full(size, rew[start])
        for t in range(ell - 1):
            u = uniforms[:, t]
            counts = (cum[states] <= u[:, None]).sum(axis=1)
            states = np.minimum(counts, last)
            a += rew[states]
        acc[k0:k1] = a

    bounds = [(k, min(k + block, replicas)) for k in range(0, replicas, block)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda kk: run_block(*kk), bounds))
    else:
        for k0, k1 in bounds:
            run_block(k0, k1)
    return acc


def lemma1_rhs(ell: int, delta: float, span: float, delta_norm: float) -> float:
    """Right-hand side of the finite-horizon concentration bound."""
    return 0.5 * ell * span * delta_norm + span * (
        1.0 + math.sqrt(2.0 * ell * math.log(1.0 / delta))
    )


def _bound_inputs(mrp_P: MrpModel, P_tilde: ChainModel):
    mu = stationary(mrp_P.chain)
    rho = average_reward(mrp_P, mu)
    span = bias_span(poisson_solve(mrp_P, mu, rho))
    delta_norm = matrix_inf_norm(mrp_P.chain.transition - P_tilde.transition)
    return rho, span, delta_norm


def lemma1_check(
    mrp_P: MrpModel,
    P_tilde: ChainModel,
    start: int,
    ell: int,
    delta: float,
    seed: int,
    rho: float | None = None,
    span: float | None = None,
    delta_norm: float | None = None,
) -> Lemma1Outcome:
    """Run one walk on the perturbed chain and evaluate the bound.

    The bias span and average reward belong to the original process;
    pass them in when checking many replicas to avoid re-solving.
    """
    if rho is None or span is None or delta_norm is None:
        rho, span, delta_norm = _bound_inputs(mrp_P, P_tilde)
    stats = simulate(P_tilde, start, ell, seed, reward=mrp_P.reward)
    lhs = ell * rho - stats.accumulated_reward
    rhs = lemma1_rhs(ell, delta, span, delta_norm)
    return Lemma1Outcome(
        lhs=lhs, rhs=rhs, violated=lhs > rhs, delta=delta, span=span
    )


def lemma1_violation_rate(
    mrp_P: MrpModel,
    P_tilde: ChainModel,
    start: int,
    ell: int,
    delta: float,
    seed: int,
    replicas: int,
    threads: int = 1,
) -> dict:
    """Empirical violation frequency over seeds seed..seed+replicas-1."""
    rho, span, delta_norm = _bound_inputs(mrp_P, P_tilde)
    acc = simulate_batch(
        P_tilde, start, ell, seed, replicas, mrp_P.reward, threads=threads
    )
    lhs = ell * rho - acc
    rhs = lemma1_rhs(ell, delta, span, delta_norm)
    violations = int((lhs > rhs).sum())
    return {
        "replicas": replicas,
        "violations": violations,
        "rate": violations / replicas,
        "mean_lhs": float(lhs.mean()),
        "rhs": rhs,
        "span": span,
        "rho": rho,
        "inf_norm_delta": delta_norm,
    }


def rho_convergence_check(
    mrp_P: MrpModel,
    P_tilde: ChainModel,
    start: int,
    seed: int,
    ell: int = 10**6,
) -> float:
    """Empirical average-reward error at a long horizon, bound-checked.

    Returns |rho - (1/ell) sum_i v_i r_i| and verifies it lies within
    (1/2) span(lambda) ||P - Q||_inf plus the concentration slack at
    delta = 1/ell, i.e. span(lambda) (1 + sqrt(2 ell log ell)) / ell.

    Raises
    ------
    PropertyViolation
        If the error exceeds the bound.
    """
    rho, span, delta_norm = _bound_inputs(mrp_P, P_tilde)
    stats = simulate(P_tilde, start, ell, seed, reward=mrp_P.reward)
    err = abs(rho - stats.accumulated_reward / ell)
    slack = span * (1.0 + math.sqrt(2.0 * ell * math.log(ell))) / ell
    bound = 0.5 * span * delta_norm + slack
    if err > bound:
        raise PropertyViolation(
            f"average-reward error {err!r} exceeds {bound!r} at ell={ell}"
        )
    return err


def simulate_hitting_time(
    chain: ChainModel,
    start: int,
    target: int,
    n_traj: int,
    seed: int,
    max_steps: int = 10**6,
) -> tuple[float, float]:
    """Mean and standard error of the first-visit time to `target`.

    Counts transitions until the target is first entered (so the
    start == target case measures the return time). All trajectories
    advance in lockstep with one shared stream; deterministic given
    the seed.
    """
    n = chain.n
    cum = np.cumsum(chain.transition, axis=1)
    gen = _generator(seed)
    last = n - 1
    times = np.empty(n_traj, dtype=np.int64)
    alive = np.arange(n_traj)
    states = np.full(n_traj, start, dtype=np.intp)
    t = 0
    while alive.size:
        t += 1
        if t > max_steps:
            raise PropertyViolation(
                f"{alive.size} trajectories missed the target within {max_steps} steps"
            )
        u = gen.random(alive.size)
        counts = (cum[states] <= u[:, None]).sum(axis=1)
        states = np.minimum(counts, last)
        hit = states == target
        times[alive[hit]] = t
        alive = alive[~hit]
        states = states[~hit]
    mean = float(times.mean())
    if n_traj > 1:
        se = float(times.std(ddof=1)) / math.sqrt(n_traj)
    else:
        se = 0.0
    return mean, se
