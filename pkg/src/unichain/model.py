"""Domain types for finite Markov chains and Markov reward processes.

Provides validated transition matrices with structural classification
(recurrent classes, transient states, periodicity), seeded random
generators for unichain instances and row-bounded perturbations, and
JSON/CSV file I/O.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    InfeasibleRequest,
    NegativeEntry,
    NotSquare,
    ParseError,
    RowSumViolation,
)

#: Allowed absolute deviation of a row sum from 1 before input is rejected.
ROW_SUM_TOL = 1e-12


def as_readonly(a) -> np.ndarray:
    """Return a float64 copy of `a` with the writeable flag cleared."""
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StateStructure:
    """Structural classification of a chain's state space.

    State indices are 0-based. `recurrent_classes` and `transient`
    partition {0..N-1}; a chain is unichain iff it has exactly one
    recurrent class, and irreducible iff in addition no state is
    transient. `period` is the period of the single recurrent class
    for unichain input (the lcm of class periods otherwise).
    """

    recurrent_classes: tuple[tuple[int, ...], ...]
    transient: tuple[int, ...]
    is_unichain: bool
    is_irreducible: bool
    is_aperiodic: bool
    period: int

    @property
    def recurrent(self) -> tuple[int, ...]:
        """All recurrent state indices, ascending."""
        return tuple(sorted(i for cls in self.recurrent_classes for i in cls))


@dataclass(frozen=True)
class ChainModel:
    """A validated row-stochastic transition matrix with state labels.

    Instances are immutable (the matrix is read-only) and safe to share
    across threads. Construct via :func:`validate_chain` or the
    generators below rather than directly.
    """

    transition: np.ndarray
    labels: tuple[str, ...]
    structure: StateStructure

    @property
    def n(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class MrpModel:
    """A chain equipped with one mean reward per state."""

    chain: ChainModel
    reward: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.reward, dtype=float)
        if r.ndim != 1 or r.shape[0] != self.chain.n:
            raise ValueError(
                f"reward has shape {r.shape}, expected ({self.chain.n},)"
            )
        if not np.all(np.isfinite(r)):
            raise ValueError("reward entries must be finite")
        object.__setattr__(self, "reward", as_readonly(r))

    @property
    def n(self) -> int:
        return self.chain.n


def validate_chain(raw_matrix, labels=None) -> ChainModel:
    """Validate a raw transition matrix and classify its state space.

    Rows whose sums deviate from 1 by at most `ROW_SUM_TOL` are
    renormalized; larger deviations are rejected.

    Parameters
    ----------
    raw_matrix : array_like, shape (n, n)
        Proposed transition probabilities.
    labels : sequence of str, optional
        State names; defaults to "s1".."sN".

    Returns
    -------
    ChainModel

    Raises
    ------
    NotSquare, NegativeEntry, RowSumViolation
    """
    P = np.asarray(raw_matrix, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise NotSquare(f"expected a nonempty square matrix, got shape {P.shape}")
    n = P.shape[0]
    if not np.all(np.isfinite(P)):
        i, j = np.argwhere(~np.isfinite(P))[0]
        raise NegativeEntry(int(i), int(j), float(P[i, j]))
    neg = P < 0.0
    if neg.any():
        i, j = np.argwhere(neg)[0]
        raise NegativeEntry(int(i), int(j), float(P[i, j]))
    sums = P.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if bad.any():
        i = int(np.argmax(bad))
        raise RowSumViolation(i, float(sums[i]))
    P = P / sums[:, None]
    if labels is None:
        labels = tuple(f"s{i + 1}" for i in range(n))
    else:
        labels = tuple(str(x) for x in labels)
        if len(labels) != n:
            raise NotSquare(f"{len(labels)} labels for {n} states")
    return ChainModel(as_readonly(P), labels, _classify(P))


def classify_states(chain: ChainModel) -> StateStructure:
    """Return the chain's structural classification.

    Classification happens once at validation time; this accessor
    exists so callers need not reach into the dataclass.
    """
    return chain.structure


def _classify(P: np.ndarray) -> StateStructure:
    """Strongly-connected-component decomposition of the support graph.

    An edge i->j exists iff p_ij > 0 exactly. A component is a recurrent
    class iff no edge leaves it.
    """
    n = P.shape[0]
    support = P > 0.0
    ncomp, comp = connected_components(
        csr_matrix(support), directed=True, connection="strong"
    )
    has_exit = np.zeros(ncomp, dtype=bool)
    rows, cols = np.nonzero(support)
    leaving = comp[rows] != comp[cols]
    has_exit[comp[rows[leaving]]] = True

    recurrent_classes = []
    transient = []
    for c in range(ncomp):
        members = tuple(int(i) for i in np.flatnonzero(comp == c))
        if has_exit[c]:
            transient.extend(members)
        else:
            recurrent_classes.append(members)
    recurrent_classes.sort(key=lambda cls: cls[0])
    periods = [_class_period(support, cls) for cls in recurrent_classes]

    is_unichain = len(recurrent_classes) == 1
    return StateStructure(
        recurrent_classes=tuple(recurrent_classes),
        transient=tuple(sorted(transient)),
        is_unichain=is_unichain,
        is_irreducible=is_unichain and not transient,
        is_aperiodic=all(p == 1 for p in periods),
        period=math.lcm(*periods) if periods else 1,
    )


def _class_period(support: np.ndarray, cls: tuple[int, ...]) -> int:
    """Period of one strongly connected class.

    BFS from an arbitrary member assigns levels; the period is the gcd
    of level(u) + 1 - level(v) over all intra-class edges u->v.
    """
    members = set(cls)
    root = cls[0]
    level = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(support[u]):
                v = int(v)
                if v in members and v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u in cls:
        for v in np.flatnonzero(support[u]):
            v = int(v)
            if v in members:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g) if g != 0 else 1


def generate_random_unichain(
    n: int, density: float, transient_count: int, seed: int
) -> ChainModel:
    """Generate a random unichain with a prescribed number of transient states.

    The recurrent block is made strongly connected by planting a random
    cycle through it; each transient state gets at least one edge into
    the recurrent block so no subset of transient states can close up.
    State order is shuffled afterwards. Deterministic given `seed`.

    Raises
    ------
    InfeasibleRequest
        If the arguments are out of range or (after bounded retries)
        the classification does not match the request.
    """
    if n < 1 or not (0.0 < density <= 1.0) or not (0 <= transient_count < n):
        raise InfeasibleRequest(
            f"cannot build n={n}, density={density}, transient_count={transient_count}"
        )
    rng = np.random.default_rng(seed)
    if n == 1:
        return validate_chain([[1.0]])
    for _ in range(32):
        chain = validate_chain(_unichain_candidate(rng, n, density, transient_count))
        st = chain.structure
        if st.is_unichain and len(st.transient) == transient_count:
            return chain
    raise InfeasibleRequest(
        f"no unichain with {transient_count} transient states after 32 attempts"
    )


def _unichain_candidate(rng, n, density, transient_count):
    m = n - transient_count
    W = np.zeros((n, n))
    # closed recurrent block on 0..m-1 with a planted cycle
    block = (rng.random((m, m)) < density) & np.ones((m, m), dtype=bool)
    order = rng.permutation(m)
    for k in range(m):
        block[order[k], order[(k + 1) % m]] = True
    weights = rng.uniform(0.2, 1.0, (m, m))
    W[:m, :m] = np.where(block, weights, 0.0)
    # transient rows may point anywhere but always reach the block
    for t in range(m, n):
        sup = rng.random(n) < density
        sup[int(rng.integers(0, m))] = True
        W[t, sup] = rng.uniform(0.2, 1.0, int(sup.sum()))
    W /= W.sum(axis=1, keepdims=True)
    perm = rng.permutation(n)
    return W[np.ix_(perm, perm)]


def generate_perturbation(
    chain: ChainModel, magnitude: float, allow_reducible: bool, seed: int
) -> ChainModel:
    """Perturb a chain subject to a hard cap on the max-row-L1 deviation.

    The returned matrix Q satisfies max_i sum_j |p_ij - q_ij| <= magnitude
    exactly. With `allow_reducible=False` every row is mixed toward a
    strictly positive random distribution, so the result is irreducible;
    with `allow_reducible=True` probability mass is moved between entries,
    which can zero entries out and change the class structure.
    Deterministic given `seed`.
    """
    if not (0.0 <= magnitude <= 2.0):
        raise InfeasibleRequest(f"magnitude {magnitude} outside [0, 2]")
    P = chain.transition
    n = chain.n
    if magnitude == 0.0:
        if not allow_reducible and not chain.structure.is_irreducible:
            raise InfeasibleRequest(
                "zero-magnitude perturbation of a reducible chain cannot be irreducible"
            )
        return chain
    rng = np.random.default_rng(seed)
    if allow_reducible:
        Q = _perturb_mass_moves(rng, P, magnitude)
    else:
        Q = _perturb_mixture(rng, P, magnitude)
    out = validate_chain(Q, labels=chain.labels)
    # row renormalization inside validate_chain can nudge the norm past
    # the cap by an ulp; pull back toward P until it holds exactly
    for _ in range(64):
        norm = float(np.abs(P - out.transition).sum(axis=1).max())
        if norm <= magnitude:
            break
        shrink = (magnitude / norm) * (1.0 - 1e-12)
        out = validate_chain(P + shrink * (out.transition - P), labels=chain.labels)
    else:
        raise InfeasibleRequest("could not enforce the perturbation norm cap")
    if not allow_reducible and not out.structure.is_irreducible:
        raise InfeasibleRequest("perturbed chain is not irreducible")
    return out


def _perturb_mixture(rng, P, magnitude):
    n = P.shape[0]
    q = rng.uniform(0.1, 1.0, (n, n))
    q /= q.sum(axis=1, keepdims=True)
    d = np.abs(P - q).sum(axis=1)
    theta = np.minimum(1.0, magnitude / np.maximum(d, 1e-300))
    return (1.0 - theta)[:, None] * P + theta[:, None] * q


def _perturb_mass_moves(rng, P, magnitude):
    n = P.shape[0]
    Q = P.copy()
    if n == 1:
        return Q
    for i in range(n):
        budget = magnitude
        for _ in range(int(rng.integers(1, 4))):
            donors = np.flatnonzero(Q[i] > 0.0)
            j_from = int(rng.choice(donors))
            j_to = int(rng.integers(0, n - 1))
            if j_to >= j_from:
                j_to += 1
            cap = min(float(Q[i, j_from]), budget / 2.0)
            # taking the full cap half the time lets entries hit exact zero,
            # which is what makes reducible outputs reachable
            delta = cap if rng.random() < 0.5 else cap * float(rng.uniform(0.3, 1.0))
            Q[i, j_from] -= delta
            Q[i, j_to] += delta
            budget -= 2.0 * delta
            if budget <= 1e-15:
                break
    return Q


# ---------------------------------------------------------------------------
# file formats: JSON {"states": [...], "P": [[...]], "r": [...]} and CSV
# (N rows of N probabilities; with a leading "# rewards" line, N+1 columns
# whose last entry is the state's reward)
# ---------------------------------------------------------------------------

CSV_REWARD_FLAG = "# rewards"


def load_model(path):
    """Load a chain or reward process from a JSON or CSV file.

    Returns an :class:`MrpModel` when rewards are present, otherwise a
    :class:`ChainModel`.
    """
    text = _read_text(path)
    name = os.fspath(path)
    if name.lower().endswith(".json") or text.lstrip().startswith("{"):
        return _parse_json(text)
    return _parse_csv(text)


def _read_text(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _parse_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "P" not in doc:
        raise ParseError('expected an object with a "P" matrix')
    try:
        chain = validate_chain(doc["P"], labels=doc.get("states"))
    except (TypeError, ValueError) as exc:
        raise ParseError(f'bad "P" matrix: {exc}') from exc
    if "r" in doc and doc["r"] is not None:
        try:
            return MrpModel(chain, np.asarray(doc["r"], dtype=float))
        except (TypeError, ValueError) as exc:
            raise ParseError(f'bad "r" vector: {exc}') from exc
    return chain


def _parse_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty CSV file")
    with_rewards = lines[0].strip().lower() == CSV_REWARD_FLAG
    if with_rewards:
        lines = lines[1:]
    try:
        rows = [[float(x) for x in row] for row in csv.reader(lines) if row]
    except ValueError as exc:
        raise ParseError(f"non-numeric CSV entry: {exc}") from exc
    n = len(rows)
    width = n + 1 if with_rewards else n
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"CSV row {i + 1} has {len(row)} fields, expected {width}")
    M = np.asarray(rows, dtype=float)
    if with_rewards:
        return MrpModel(validate_chain(M[:, :n]), M[:, n])
    return validate_chain(M)


def save_model(path, model) -> None:
    """Write a chain or reward process to a JSON file."""
    if isinstance(model, MrpModel):
        chain, reward = model.chain, model.reward.tolist()
    else:
        chain, reward = model, None
    doc = {"states": list(chain.labels), "P": chain.transition.tolist()}
    if reward is not None:
        doc["r"] = reward
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
