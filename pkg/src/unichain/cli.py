"""Command-line front-end: analyze, perturb, simulate, verify.

JSON is the canonical output (deterministic for fixed inputs, flags and
seed; infinities are serialized as the strings "inf"/"-inf" since JSON
has no infinity literal); --text renders aligned human tables instead.
State indices are 1-based in all output and in the --start flag.

Exit codes: 0 success, 1 file/parse problem, 2 structural precondition
failure (e.g. not unichain), 3 numerical failure, 4 property violation.
The MRP_SEED environment variable overrides --seed when set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, bias, mcsim, passage, perturb, solve, verify
from .errors import (
    ConstancyViolation,
    DimensionMismatch,
    InfeasibleRequest,
    NegativeEntry,
    NotSquare,
    NotUnichain,
    ParseError,
    PropertyViolation,
    RewardOutOfRange,
    RowSumViolation,
    SingularSystem,
    TooLarge,
)
from .model import ChainModel, MrpModel, load_model

EXIT_PARSE = 1
EXIT_STRUCTURE = 2
EXIT_NUMERICAL = 3
EXIT_PROPERTY = 4

_PARSE_ERRORS = (ParseError, NotSquare, RowSumViolation, NegativeEntry, OSError)
_STRUCTURE_ERRORS = (NotUnichain, InfeasibleRequest)
_NUMERICAL_ERRORS = (
    SingularSystem,
    DimensionMismatch,
    TooLarge,
    ConstancyViolation,
    RewardOutOfRange,
    ValueError,
)

DEFAULT_TOL_SOLVE = 1e-10
DEFAULT_TOL_CHECK = 1e-9


def _jsonable(obj):
    """Convert to JSON-encodable values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    return obj


def emit_json(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _resolve_seed(args) -> int:
    env = os.environ.get("MRP_SEED")
    if env is not None:
        return int(env)
    return args.seed


def _load_mrp(path) -> tuple[MrpModel, str]:
    """Load a file as a reward process; unit rewards when none are given."""
    loaded = load_model(path)
    if isinstance(loaded, MrpModel):
        return loaded, "file"
    return MrpModel(loaded, np.ones(loaded.n)), "default_ones"


def _load_chain(path) -> ChainModel:
    loaded = load_model(path)
    return loaded.chain if isinstance(loaded, MrpModel) else loaded


def _structure_dict(chain: ChainModel) -> dict:
    st = chain.structure
    return {
        "recurrent_classes": [[i + 1 for i in cls] for cls in st.recurrent_classes],
        "transient": [i + 1 for i in st.transient],
        "is_unichain": st.is_unichain,
        "is_irreducible": st.is_irreducible,
        "is_aperiodic": st.is_aperiodic,
        "period": st.period,
    }


def _provenance(seed, tol_solve, tol_check) -> dict:
    return {
        "tool": "unichain",
        "version": __version__,
        "seed": seed,
        "tolerances": {"solve": tol_solve, "check": tol_check},
    }


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _analysis_report(mrp: MrpModel, reward_source, seed, tol_solve, tol_check):
    chain = mrp.chain
    mu = solve.stationary(chain)
    rho = solve.average_reward(mrp, mu)
    tau = passage.first_passage_matrix(chain, mu)
    kem = passage.kemeny(tau, mu)
    lam_passage = bias.bias_from_passage(mrp, mu, tau)
    lam = bias.poisson_solve(mrp, mu, rho)
    span = bias.bias_span(lam)
    diam = passage.diameter(tau)
    checks = {
        "poisson_residual": bias.poisson_residual(mrp, lam.values, rho),
        "passage_poisson_residual": bias.poisson_residual(
            mrp, lam_passage.values, lam_passage.rho
        ),
        "return_time_error": passage.return_time_check(tau, mu),
        "kemeny_deviation": kem.max_deviation,
        "tolerance": tol_check,
    }
    checks["ok"] = all(
        checks[k] <= tol_check
        for k in (
            "poisson_residual",
            "passage_poisson_residual",
            "return_time_error",
            "kemeny_deviation",
        )
    )
    return {
        "provenance": _provenance(seed, tol_solve, tol_check),
        "n": chain.n,
        "states": list(chain.labels),
        "structure": _structure_dict(chain),
        "reward": {"values": mrp.reward.tolist(), "source": reward_source},
        "mu": mu.mu.tolist(),
        "rho": rho,
        "tau": tau.tau.tolist(),
        "diameter": diam,
        "bias": {
            "canonical": lam.values.tolist(),
            "passage_formula": lam_passage.values.tolist(),
        },
        "span": span,
        "kemeny": {
            "eta": kem.eta,
            "per_state": kem.per_state.tolist(),
            "max_deviation": kem.max_deviation,
            "sign_note": "per_state equals the negated passage-formula bias "
            "under unit rewards",
        },
        "checks": checks,
    }


def _render_analysis_text(doc: dict) -> str:
    lines = []
    st = doc["structure"]
    lines.append(f"unichain analyze (v{doc['provenance']['version']})")
    lines.append(f"states: {doc['n']}  ({', '.join(doc['states'])})")
    lines.append(
        "structure: "
        + ("irreducible" if st["is_irreducible"] else "unichain")
        + (f", period {st['period']}" if not st["is_aperiodic"] else ", aperiodic")
        + (f", transient {st['transient']}" if st["transient"] else "")
    )
    lines.append(f"rho = {doc['rho']!r}   span = {doc['span']!r}   "
                 f"diameter = {doc['diameter']!r}")
    lines.append(f"kemeny eta = {doc['kemeny']['eta']!r}   "
                 f"max deviation = {doc['kemeny']['max_deviation']:.3e}")
    lines.append("")
    lines.append(" state        mu        bias     bias'   tau row")
    for i in range(doc["n"]):
        tau_row = "  ".join(
            "inf" if isinstance(x, str) else f"{x:9.4f}" for x in doc["tau"][i]
        )
        lines.append(
            f" {doc['states'][i]:<8}"
            f"{doc['mu'][i]:9.6f} "
            f"{doc['bias']['canonical'][i]:9.5f} "
            f"{doc['bias']['passage_formula'][i]:9.5f}   "
            + tau_row
        )
    lines.append("")
    lines.append(f"checks ok: {doc['checks']['ok']}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    seed = _resolve_seed(args)
    mrp, source = _load_mrp(args.chain_file)
    if not mrp.chain.structure.is_unichain:
        classes = [
            "{" + ", ".join(str(i + 1) for i in cls) + "}"
            for cls in mrp.chain.structure.recurrent_classes
        ]
        print(
            "error: chain is not unichain; recurrent classes: "
            + ", ".join(classes),
            file=sys.stderr,
        )
        return EXIT_STRUCTURE
    doc = _analysis_report(mrp, source, seed, args.tol_solve, args.tol_check)
    sys.stdout.write(
        _render_analysis_text(_jsonable(doc)) if args.text else emit_json(doc)
    )
    return 0 if doc["checks"]["ok"] else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# perturb
# ---------------------------------------------------------------------------


def _render_perturb_text(doc: dict) -> str:
    lines = []
    lines.append("unichain perturb")
    lines.append(f"||P - Q||_inf        = {doc['inf_norm_delta']!r}")
    lines.append(f"hunter bound         = {doc['hunter_bound']!r}   (eta {doc['eta']!r})")
    lines.append(
        f"corollary bound      = {doc['corollary_l1_bound']!r}   "
        f"({doc['corollary_mode']}, subset {doc['attaining_subset']})"
    )
    lines.append(f"reward-span bound    = {doc['bias_span_bounds']['input']!r}")
    lines.append("")
    lines.append(" start    ||mu-mu~||_1    |rho-rho~|")
    acts = doc["actuals"]
    for start, l1, rdev in zip(
        doc["starts"], acts["l1_per_start"], acts["rho_deviation_per_start"]
    ):
        lines.append(f" {start:>5}    {l1:12.6g}    {rdev:10.6g}")
    lines.append("")
    lines.append(f"worst start: {acts['worst_start']}")
    lines.append("tightness: " + ", ".join(
        f"{k}={v if isinstance(v, str) else format(v, '.4g')}"
        for k, v in sorted(doc["tightness"].items())
    ))
    return "\n".join(lines) + "\n"


def cmd_perturb(args) -> int:
    seed = _resolve_seed(args)
    mrp, _ = _load_mrp(args.chain_file)
    tilde = _load_chain(args.perturbed_file)
    if not mrp.chain.structure.is_unichain:
        print("error: original chain is not unichain", file=sys.stderr)
        return EXIT_STRUCTURE
    if tilde.n != mrp.n:
        raise DimensionMismatch(
            f"original has {mrp.n} states, perturbed has {tilde.n}"
        )
    mode = None
    if args.exact_subset:
        mode = perturb.EXACT
    elif args.sampled_subset:
        mode = perturb.SAMPLED
    report = perturb.build_report(mrp, tilde, subset_mode=mode, subset_seed=seed)
    doc = report.to_json_dict()
    if args.start is not None:
        starts = [args.start]
        idx = args.start - 1
        if not (0 <= idx < mrp.n):
            raise ValueError(f"--start {args.start} out of range")
        acts = doc["actuals"]
        acts["per_state"] = [acts["per_state"][idx]]
        acts["l1_per_start"] = [acts["l1_per_start"][idx]]
        acts["rho_deviation_per_start"] = [acts["rho_deviation_per_start"][idx]]
        doc["bias_span_bounds"] = {
            k: v
            for k, v in doc["bias_span_bounds"].items()
            if k == "input" or k == f"tv_start_{args.start}"
        }
    else:
        starts = list(range(1, mrp.n + 1))
    doc["starts"] = starts
    doc["provenance"] = _provenance(seed, args.tol_solve, args.tol_check)
    sys.stdout.write(
        _render_perturb_text(_jsonable(doc)) if args.text else emit_json(doc)
    )
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    mrp, _ = _load_mrp(args.chain_file)
    tilde = _load_chain(args.perturbed_file)
    if not mrp.chain.structure.is_unichain:
        print("error: original chain is not unichain", file=sys.stderr)
        return EXIT_STRUCTURE
    if not (1 <= args.start <= mrp.n):
        raise ValueError(f"--start {args.start} out of range")
    if args.ell < 1 or not (0.0 < args.delta < 1.0):
        raise ValueError("need --ell >= 1 and 0 < --delta < 1")
    out = mcsim.lemma1_violation_rate(
        mrp,
        tilde,
        start=args.start - 1,
        ell=args.ell,
        delta=args.delta,
        seed=seed,
        replicas=args.replicas,
        threads=args.threads,
    )
    threshold = args.delta + 3.0 * math.sqrt(
        args.delta * (1.0 - args.delta) / args.replicas
    )
    doc = {
        "provenance": _provenance(seed, args.tol_solve, args.tol_check),
        "ell": args.ell,
        "delta": args.delta,
        "start": args.start,
        "replicas": args.replicas,
        "violations": out["violations"],
        "violation_rate": out["rate"],
        "mean_lhs": out["mean_lhs"],
        "rhs": out["rhs"],
        "span": out["span"],
        "rho": out["rho"],
        "inf_norm_delta": out["inf_norm_delta"],
        "threshold": threshold,
        "pass": out["rate"] <= threshold,
    }
    if args.text:
        lines = [
            "unichain simulate",
            f"ell = {doc['ell']}   delta = {doc['delta']}   replicas = {doc['replicas']}",
            f"violation rate = {doc['violation_rate']!r} "
            f"(threshold {doc['threshold']!r})",
            f"mean lhs = {doc['mean_lhs']!r}   rhs = {doc['rhs']!r}",
            f"pass: {doc['pass']}",
        ]
        sys.stdout.write("\n".join(lines) + "\n")
    else:
        sys.stdout.write(emit_json(doc))
    return 0 if doc["pass"] else EXIT_PROPERTY


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    seed = _resolve_seed(args)
    ok = verify.run_properties(args.trials, args.max_n, seed, write=print)
    print("verify: PASS" if ok else "verify: FAIL")
    return 0 if ok else EXIT_PROPERTY


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=0, help="random seed "
                     "(the MRP_SEED environment variable overrides this)")
    sub.add_argument("--text", action="store_true", help="human-readable output "
                     "instead of JSON")
    sub.add_argument("--tol-solve", type=float, default=DEFAULT_TOL_SOLVE)
    sub.add_argument("--tol-check", type=float, default=DEFAULT_TOL_CHECK)
    sub.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                     help="max worker threads for batched simulation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unichain",
        description="Analysis of finite unichain Markov reward processes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="structure, stationary distribution, "
                       "passage times, bias, Kemeny's constant")
    p.add_argument("chain_file")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("perturb", help="perturbation bounds vs realized deviations")
    p.add_argument("chain_file")
    p.add_argument("perturbed_file")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--exact-subset", action="store_true",
                       help="force exact subset enumeration")
    group.add_argument("--sampled-subset", action="store_true",
                       help="force sampled subset mode")
    sgroup = p.add_mutually_exclusive_group()
    sgroup.add_argument("--start", type=int, default=None,
                        help="restrict actuals to one 1-based start state")
    sgroup.add_argument("--all-starts", action="store_true",
                        help="report all start states (default)")
    _add_common(p)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("simulate", help="finite-horizon concentration check "
                       "over many seeded replicas")
    p.add_argument("chain_file")
    p.add_argument("perturbed_file")
    p.add_argument("--ell", type=int, default=10000)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--start", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the randomized property suites")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--max-n", type=int, default=12)
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _STRUCTURE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PropertyViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
