"""Randomized self-check suites and the brute-force oracles they use.

Each property function draws seeded random instances, checks one
documented invariant against an independent oracle or tolerance, and
raises `PropertyViolation` naming the offending seed on failure. The
`run_properties` driver behind the `verify` subcommand executes all of
them and reports per-property counts.
"""

from __future__ import annotations

import math

import numpy as np

from . import bias, mcsim, model, passage, perturb, solve
from .errors import PropertyViolation

# ---------------------------------------------------------------------------
# seeded instance generators (shared with the test suite)
# ---------------------------------------------------------------------------


def random_mrp(
    seed: int,
    max_n: int = 12,
    max_transient: int = 3,
    reward_low: float = -1.0,
    reward_high: float = 1.0,
) -> model.MrpModel:
    """Random unichain reward process; sizes, sparsity and transient
    counts vary with the seed."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_n + 1))
    t = int(rng.integers(0, min(max_transient, n - 1) + 1))
    density = float(rng.uniform(0.3, 1.0))
    chain = model.generate_random_unichain(
        n, density, t, int(rng.integers(0, 2**62))
    )
    reward = rng.uniform(reward_low, reward_high, n)
    return model.MrpModel(chain, reward)


def random_pair(
    seed: int, max_n: int = 10, max_transient: int = 3
) -> tuple[model.MrpModel, model.ChainModel]:
    """Random (unichain process, arbitrary perturbed chain) pair."""
    rng = np.random.default_rng(seed)
    mrp = random_mrp(int(rng.integers(0, 2**62)), max_n, max_transient)
    magnitude = float(rng.uniform(1e-3, 2.0))
    allow_reducible = bool(rng.random() < 0.6)
    tilde = model.generate_perturbation(
        mrp.chain, magnitude, allow_reducible, int(rng.integers(0, 2**62))
    )
    return mrp, tilde


def random_stochastic(seed: int, max_n: int = 8) -> model.ChainModel:
    """Arbitrary random stochastic matrix, frequently reducible."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_n + 1))
    density = float(rng.uniform(0.2, 1.0))
    sup = rng.random((n, n)) < density
    for i in range(n):
        if not sup[i].any():
            sup[i, int(rng.integers(0, n))] = True
    W = np.where(sup, rng.uniform(0.05, 1.0, (n, n)), 0.0)
    return model.validate_chain(W / W.sum(axis=1, keepdims=True))


def solve_bundle(mrp: model.MrpModel) -> dict:
    """All derived quantities of one process, computed once."""
    mu = solve.stationary(mrp.chain)
    rho = solve.average_reward(mrp, mu)
    tau = passage.first_passage_matrix(mrp.chain, mu)
    kem = passage.kemeny(tau, mu)
    lam_passage = bias.bias_from_passage(mrp, mu, tau)
    lam_direct = bias.poisson_solve(mrp, mu, rho)
    return {
        "mrp": mrp,
        "mu": mu,
        "rho": rho,
        "tau": tau,
        "kemeny": kem,
        "lam_passage": lam_passage,
        "lam_direct": lam_direct,
    }


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def brute_structure(P: np.ndarray):
    """Recurrent classes and transient states via transitive closure."""
    n = P.shape[0]
    reach = (P > 0.0) | np.eye(n, dtype=bool)
    for _ in range(int(math.ceil(math.log2(n))) + 1 if n > 1 else 1):
        reach = reach | (reach.astype(np.int64) @ reach.astype(np.int64) > 0)
    recurrent = [
        i
        for i in range(n)
        if all(reach[j, i] for j in range(n) if reach[i, j])
    ]
    classes = []
    seen: set[int] = set()
    for i in recurrent:
        if i in seen:
            continue
        cls = tuple(
            sorted(j for j in recurrent if reach[i, j] and reach[j, i])
        )
        seen.update(cls)
        classes.append(cls)
    classes.sort(key=lambda c: c[0])
    transient = tuple(sorted(set(range(n)) - set(recurrent)))
    return tuple(classes), transient


def brute_class_period(P: np.ndarray, cls) -> int:
    """gcd of return lengths of the class's first member, by boolean powers."""
    sub = (P[np.ix_(list(cls), list(cls))] > 0).astype(np.int64)
    A = np.eye(len(cls), dtype=np.int64)
    g = 0
    for t in range(1, 2 * P.shape[0] ** 2 + 1):
        A = (A @ sub > 0).astype(np.int64)
        if A[0, 0]:
            g = math.gcd(g, t)
            if g == 1:
                break
    return g if g else 1


def brute_subset_span(W: np.ndarray, rec) -> float:
    """Subset-maximized span by bitmask enumeration with scalar sums.

    Per (state, subset) the additions run over the subset's columns in
    ascending order with the diagonal term cancelled right after it is
    added, replicating the production enumeration's operation order so
    the attained maxima agree bit for bit.
    """
    n = W.shape[0]
    m = len(rec)
    rows = [[float(x) for x in W[i]] for i in range(n)]
    best = 0.0
    for mask in range(1 << m):
        values = []
        for i in range(n):
            s = 0.0
            row = rows[i]
            for k in range(m):
                if mask >> k & 1:
                    j = rec[k]
                    s += row[j]
                    if j == i:
                        s -= row[i]
            values.append(s)
        span = max(values) - min(values)
        if span > best:
            best = span
    return best


def cesaro_matrix(P: np.ndarray, horizon: int) -> np.ndarray:
    """Row s of the result is (1/T) sum_{t=1..T} (delta_s P^t)."""
    V = np.eye(P.shape[0])
    acc = np.zeros_like(V)
    for _ in range(horizon):
        V = V @ P
        acc += V
    return acc / horizon


# ---------------------------------------------------------------------------
# property suites
# ---------------------------------------------------------------------------


def _child_seeds(seed: int, count: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2**62, size=count)]


def check_classification(trials, max_n, seed):
    notes = []
    count = 0
    for s in _child_seeds(seed, trials):
        chain = (
            random_stochastic(s, max_n=min(8, max_n))
            if s % 2
            else random_mrp(s, max_n=min(8, max_n)).chain
        )
        st = chain.structure
        got = (st.recurrent_classes, st.transient)
        want = brute_structure(chain.transition)
        if got != want:
            raise PropertyViolation(
                f"seed {s}: classification {got} != brute force {want}"
            )
        cover = sorted(i for cls in st.recurrent_classes for i in cls)
        cover += list(st.transient)
        if sorted(cover) != list(range(chain.n)):
            raise PropertyViolation(f"seed {s}: classes do not partition states")
        if st.is_unichain != (len(want[0]) == 1):
            raise PropertyViolation(f"seed {s}: unichain flag wrong")
        for cls in st.recurrent_classes:
            p_brute = brute_class_period(chain.transition, cls)
            if st.is_unichain and st.period != p_brute:
                raise PropertyViolation(
                    f"seed {s}: period {st.period} != brute force {p_brute}"
                )
        count += 1
    return count, notes


def check_perturbation_norm(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        rng = np.random.default_rng(s)
        chain = random_mrp(s, max_n=max_n).chain
        magnitude = float(rng.uniform(0.0, 2.0))
        allow = bool(rng.random() < 0.5)
        tilde = model.generate_perturbation(chain, magnitude, allow, s)
        norm = perturb.matrix_inf_norm(chain.transition - tilde.transition)
        if norm > magnitude:
            raise PropertyViolation(
                f"seed {s}: perturbation norm {norm!r} exceeds {magnitude!r}"
            )
        if magnitude == 0.0 and not np.array_equal(
            chain.transition, tilde.transition
        ):
            raise PropertyViolation(f"seed {s}: zero magnitude changed the matrix")
        if not allow and not tilde.structure.is_irreducible:
            raise PropertyViolation(f"seed {s}: expected irreducible perturbation")
        count += 1
    return count, []


def check_generator_determinism(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, max(1, trials // 4)):
        rng = np.random.default_rng(s)
        n = int(rng.integers(2, max_n + 1))
        t = int(rng.integers(0, min(3, n - 1) + 1))
        a = model.generate_random_unichain(n, 0.6, t, s)
        b = model.generate_random_unichain(n, 0.6, t, s)
        if a.transition.tobytes() != b.transition.tobytes():
            raise PropertyViolation(f"seed {s}: unichain generator not deterministic")
        pa = model.generate_perturbation(a, 0.3, True, s)
        pb = model.generate_perturbation(b, 0.3, True, s)
        if pa.transition.tobytes() != pb.transition.tobytes():
            raise PropertyViolation(f"seed {s}: perturbation not deterministic")
        count += 1
    return count, []


def check_stationary(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        chain = random_mrp(s, max_n=max_n).chain
        mu = solve.stationary(chain).mu
        if np.abs(mu @ chain.transition - mu).max() > 1e-10:
            raise PropertyViolation(f"seed {s}: mu P != mu")
        if abs(mu.sum() - 1.0) > 1e-10 or mu.min() < 0.0:
            raise PropertyViolation(f"seed {s}: mu not a distribution")
        if any(mu[i] != 0.0 for i in chain.structure.transient):
            raise PropertyViolation(f"seed {s}: transient state with mass")
        count += 1
    return count, []


def check_limiting(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        chain = random_stochastic(s, max_n=min(8, max_n))
        rows = solve.limiting_distribution(chain).per_start
        P = chain.transition
        if np.abs(rows @ P - rows).max() > 1e-10:
            raise PropertyViolation(f"seed {s}: limiting row not stationary")
        if np.abs(rows.sum(axis=1) - 1.0).max() > 1e-10:
            raise PropertyViolation(f"seed {s}: limiting row not normalized")
        if chain.structure.is_unichain:
            mu = solve.stationary(chain).mu
            if np.abs(rows - mu[None, :]).max() > 1e-10:
                raise PropertyViolation(f"seed {s}: unichain rows differ from mu")
        count += 1
    return count, []


def check_limiting_cesaro(trials, max_n, seed, horizon=10**5):
    count = 0
    for s in _child_seeds(seed, max(1, min(3, trials))):
        chain = random_stochastic(s, max_n=min(6, max_n))
        rows = solve.limiting_distribution(chain).per_start
        avg = cesaro_matrix(chain.transition, horizon)
        err = np.abs(rows - avg).max()
        if err > 1e-3:
            raise PropertyViolation(
                f"seed {s}: limiting vs Cesaro average differ by {err!r}"
            )
        count += 1
    return count, []


def check_passage(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        mrp = random_mrp(s, max_n=max_n)
        mu = solve.stationary(mrp.chain)
        tau = passage.first_passage_matrix(mrp.chain, mu)
        P = mrp.chain.transition
        for j in np.flatnonzero(tau.recurrent_targets):
            col = tau.tau[:, j]
            rhs = 1.0 + P @ np.where(np.isfinite(col), col, 0.0) - P[:, j] * col[j]
            if np.abs(col - rhs).max() > 1e-9:
                raise PropertyViolation(
                    f"seed {s}: passage equation residual at target {j}"
                )
        if passage.return_time_check(tau, mu) > 1e-9:
            raise PropertyViolation(f"seed {s}: return time != 1/mu")
        count += 1
    return count, []


def check_kemeny_constancy(trials, max_n, seed):
    count = 0
    worst_transient = 0.0
    for s in _child_seeds(seed, trials):
        mrp = random_mrp(s, max_n=max_n)
        mu = solve.stationary(mrp.chain)
        tau = passage.first_passage_matrix(mrp.chain, mu)
        kem = passage.kemeny(tau, mu)
        if kem.max_deviation > 1e-9:
            raise PropertyViolation(
                f"seed {s}: Kemeny deviation {kem.max_deviation!r}"
            )
        for t in mrp.chain.structure.transient:
            worst_transient = max(worst_transient, abs(kem.per_state[t] - kem.eta))
        count += 1
    notes = [
        "finding: per-start Kemeny sums at transient states deviate from eta "
        f"by up to {worst_transient:.6g} across these instances (they are not "
        "pinned by the constancy argument and genuinely differ)"
    ]
    return count, notes


def check_hitting_times_mc(trials, max_n, seed, trajectories=None):
    if trajectories is None:
        trajectories = max(2000, min(20000, 20 * trials))
    count = 0
    for s in _child_seeds(seed, max(1, min(4, trials))):
        rng = np.random.default_rng(s)
        mrp = random_mrp(s, max_n=min(5, max_n))
        mu = solve.stationary(mrp.chain)
        tau = passage.first_passage_matrix(mrp.chain, mu)
        rec = np.flatnonzero(tau.recurrent_targets)
        i = int(rng.integers(0, mrp.chain.n))
        j = int(rng.choice(rec))
        mean, se = mcsim.simulate_hitting_time(
            mrp.chain, i, j, trajectories, seed=s
        )
        if abs(mean - tau.tau[i, j]) > 3.0 * se + 1e-9:
            raise PropertyViolation(
                f"seed {s}: simulated passage time {mean} vs {tau.tau[i, j]} "
                f"(se {se})"
            )
        count += 1
    return count, []


def check_passage_bias_poisson(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        b = solve_bundle(random_mrp(s, max_n=max_n))
        resid = bias.poisson_residual(
            b["mrp"], b["lam_passage"].values, b["lam_passage"].rho
        )
        if resid > 1e-8:
            raise PropertyViolation(f"seed {s}: Poisson residual {resid!r} of the "
                                    "passage-formula bias exceeds 1e-8")
        count += 1
    return count, []


def check_bias_method_agreement(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        b = solve_bundle(random_mrp(s, max_n=max_n))
        canon = bias.to_canonical(b["lam_passage"], b["mu"])
        diff = np.abs(canon.values - b["lam_direct"].values).max()
        if diff > 1e-8:
            raise PropertyViolation(f"seed {s}: bias methods disagree by {diff!r}")
        count += 1
    return count, []


def check_bias_gauges(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        rng = np.random.default_rng(s)
        b = solve_bundle(random_mrp(s, max_n=max_n))
        lam = b["lam_direct"]
        scale = abs(lam.rho) + np.abs(lam.values).max() + 1.0
        if abs(float(b["mu"].mu @ lam.values)) > 1e-9:
            raise PropertyViolation(f"seed {s}: canonical gauge violated")
        again = bias.to_canonical(lam, b["mu"])
        if np.abs(again.values - lam.values).max() > 1e-12 * scale:
            raise PropertyViolation(f"seed {s}: canonicalization not idempotent")
        c = float(rng.uniform(-2.0, 2.0))
        shifted = bias.BiasVector(lam.values + c, "raw", lam.rho)
        back = bias.to_canonical(shifted, b["mu"])
        if np.abs(back.values - lam.values).max() > 1e-12 * scale:
            raise PropertyViolation(f"seed {s}: translation changes the canonical form")
        if abs(bias.bias_span(shifted) - bias.bias_span(lam)) > 4e-16 * (
            abs(c) + scale
        ):
            raise PropertyViolation(f"seed {s}: span not translation invariant")
        cent = bias.to_centered(lam)
        if abs(float(cent.values.max() + cent.values.min())) > 1e-12 * scale:
            raise PropertyViolation(f"seed {s}: centering violated")
        half = 0.5 * bias.bias_span(cent)
        if abs(float(np.abs(cent.values).max()) - half) > 1e-12 * scale:
            raise PropertyViolation(f"seed {s}: centered sup norm != half span")
        count += 1
    return count, []


def check_diameter_bound(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        mrp = random_mrp(s, max_n=max_n, reward_low=0.0, reward_high=1.0)
        b = solve_bundle(mrp)
        span = bias.bias_span(b["lam_direct"])
        diam = passage.diameter(b["tau"])
        if not bias.check_diameter_bound(mrp, span, diam):
            raise PropertyViolation(
                f"seed {s}: span {span!r} exceeds diameter {diam!r}"
            )
        count += 1
    return count, []


def check_bound_validity(trials, max_n, seed):
    # build_report raises PropertyViolation itself if any provable
    # inequality fails on the pair
    count = 0
    for s in _child_seeds(seed, trials):
        mrp, tilde = random_pair(s, max_n=max_n)
        try:
            perturb.build_report(mrp, tilde)
        except PropertyViolation as exc:
            raise PropertyViolation(f"seed {s}: {exc}") from exc
        count += 1
    return count, []


def check_reduction_identity(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        rng = np.random.default_rng(s)
        chain = random_mrp(s, max_n=max_n).chain
        mu = solve.stationary(chain)
        tau = passage.first_passage_matrix(chain, mu)
        delta = float(rng.uniform(0.0, 2.0))
        for i in np.flatnonzero(tau.recurrent_targets):
            r = np.zeros(chain.n)
            r[i] = 1.0
            lam = bias.bias_from_passage(model.MrpModel(chain, r), mu, tau)
            lhs = perturb.bias_span_bound(bias.bias_span(lam), delta)
            rhs = perturb.cho_meyer_bound(mu, tau, delta, int(i))
            if abs(lhs - rhs) > 1e-12:
                raise PropertyViolation(
                    f"seed {s}: reduction identity off by {abs(lhs - rhs)!r} "
                    f"at state {i}"
                )
        count += 1
    return count, []


def check_subset_enumeration(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, trials):
        rng = np.random.default_rng(s)
        chain = random_mrp(s, max_n=min(10, max_n)).chain
        mu = solve.stationary(chain)
        tau = passage.first_passage_matrix(chain, mu)
        delta = float(rng.uniform(0.0, 2.0))
        exact = perturb.corollary_subset_bound(mu, tau, delta, mode=perturb.EXACT)
        rec = [int(i) for i in np.flatnonzero(tau.recurrent_targets)]
        W = np.where(np.isfinite(tau.tau), tau.tau, 0.0) * mu.mu[None, :]
        brute = 0.5 * brute_subset_span(W, rec) * delta
        if exact != brute:
            raise PropertyViolation(
                f"seed {s}: exact enumeration {exact!r} != brute force {brute!r}"
            )
        sampled = perturb.corollary_subset_bound(
            mu, tau, delta, mode=perturb.SAMPLED, seed=s
        )
        if sampled > exact:
            raise PropertyViolation(f"seed {s}: sampled {sampled!r} > exact {exact!r}")
        count += 1
    return count, []


def check_simulation_reproducibility(trials, max_n, seed):
    count = 0
    for s in _child_seeds(seed, max(1, trials // 4)):
        mrp = random_mrp(s, max_n=min(6, max_n))
        a = mcsim.simulate(mrp.chain, 0, 500, s, reward=mrp.reward)
        b = mcsim.simulate(mrp.chain, 0, 500, s, reward=mrp.reward)
        if not np.array_equal(a.visits, b.visits):
            raise PropertyViolation(f"seed {s}: simulate not reproducible")
        if int(a.visits.sum()) != 500:
            raise PropertyViolation(f"seed {s}: visits do not sum to the horizon")
        acc = mcsim.simulate_batch(mrp.chain, 0, 500, s, 8, mrp.reward)
        singles = [
            mcsim.simulate(mrp.chain, 0, 500, s + k, reward=mrp.reward).accumulated_reward
            for k in range(8)
        ]
        if not all(x == y for x, y in zip(acc, singles)):
            raise PropertyViolation(f"seed {s}: batch and single runs disagree")
        count += 1
    return count, []


def check_concentration(trials, max_n, seed, replicas=None, ell=2000):
    if replicas is None:
        replicas = max(500, min(10000, 5 * trials))
    count = 0
    for s in _child_seeds(seed, 2):
        mrp, tilde = random_pair(s, max_n=min(6, max_n))
        for delta in (0.5, 0.1, 0.05):
            out = mcsim.lemma1_violation_rate(
                mrp, tilde, start=0, ell=ell, delta=delta, seed=s, replicas=replicas
            )
            allowed = delta + 3.0 * math.sqrt(delta * (1 - delta) / replicas)
            if out["rate"] > allowed:
                raise PropertyViolation(
                    f"seed {s}: violation rate {out['rate']} > {allowed} "
                    f"at delta={delta}"
                )
            count += 1
    return count, []


def check_rho_convergence(trials, max_n, seed, ell=10**5):
    count = 0
    for s in _child_seeds(seed, 2):
        mrp, tilde = random_pair(s, max_n=min(6, max_n))
        mcsim.rho_convergence_check(mrp, tilde, start=0, seed=s, ell=ell)
        count += 1
    return count, []


PROPERTIES = [
    ("model: classification matches reachability brute force", check_classification),
    ("model: perturbation norm cap holds exactly", check_perturbation_norm),
    ("model: generators are deterministic in the seed", check_generator_determinism),
    ("solve: stationary distribution fixed point", check_stationary),
    ("solve: limiting rows are stationary vectors", check_limiting),
    ("solve: limiting matches Cesaro time averages", check_limiting_cesaro),
    ("passage: passage equations and return times", check_passage),
    ("passage: Kemeny per-state constancy", check_kemeny_constancy),
    ("passage: Monte Carlo hitting-time agreement", check_hitting_times_mc),
    ("bias: passage-formula bias solves the Poisson equation", check_passage_bias_poisson),
    ("bias: passage and direct solutions agree", check_bias_method_agreement),
    ("bias: gauge translations behave", check_bias_gauges),
    ("bias: span bounded by the diameter", check_diameter_bound),
    ("perturb: realized deviations within provable bounds", check_bound_validity),
    ("perturb: indicator reward reproduces the per-state bound", check_reduction_identity),
    ("perturb: exact subset enumeration matches brute force", check_subset_enumeration),
    ("mcsim: reproducible and visit-conserving", check_simulation_reproducibility),
    ("mcsim: concentration violation rate within tolerance", check_concentration),
    ("mcsim: long-horizon average-reward convergence", check_rho_convergence),
]


def run_properties(trials: int, max_n: int, seed: int, write=print) -> bool:
    """Run every property suite; returns True iff all passed."""
    if trials <= 0:
        write("warning: --trials 0 requested, all property suites pass vacuously")
        return True
    ok = True
    for index, (name, func) in enumerate(PROPERTIES):
        try:
            count, notes = func(trials, max_n, seed + index * 7919)
        except PropertyViolation as exc:
            write(f"FAIL {name}: {exc}")
            ok = False
            continue
        write(f"ok   {name} ({count} checks)")
        for note in notes:
            write(f"     {note}")
    return ok
