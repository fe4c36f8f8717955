"""Command-line front end.

Every command prints a JSON document (or CSV for experiments with
``--format csv``) and exits with 0 when everything converged or held, 1 on a
violation or non-convergence, and 2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import bounds as B
from .certificates import StabilityCertificate
from .errors import ShadowOTError
from .exact import coupling_distance, marginal_tuple_distance, wasserstein
from .experiments import EXPERIMENTS, DEFAULT_TRIALS, ExperimentConfig, run_experiment
from .io import coupling_to_dict, dumps, load_cost, load_coupling, load_measure, parse_order
from .measures import ProductSpace, embed, union_space
from .regularized import f_regularized_solve
from .shadow import build_shadow, verify_shadow

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


def _solver_flags(p):
    p.add_argument("--epsilon", type=float, default=None, help="regularization weight (overrides the cost file)")
    p.add_argument("--divergence", choices=("kl", "quadratic"), default="kl")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=100_000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadowot", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="regularized transport between given marginals")
    s.add_argument("marginals", nargs="+", help="measure JSON files (two or more)")
    s.add_argument("--cost", required=True, help="cost JSON file")
    _solver_flags(s)

    w = sub.add_parser("wasserstein", help="exact W_p between two measures")
    w.add_argument("mu")
    w.add_argument("nu")
    w.add_argument("--p", type=parse_order, default=2.0)

    sh = sub.add_parser("shadow", help="shadow of a coupling onto new marginals")
    sh.add_argument("--coupling", required=True, help="coupling JSON (or a solve report)")
    sh.add_argument("--targets", nargs="+", required=True, help="measure JSON files")
    sh.add_argument("--p", type=parse_order, default=2.0)
    sh.add_argument("--divergence", choices=("kl", "quadratic"), default="kl")

    b = sub.add_parser("bounds", help="certify value and optimizer stability for two marginal tuples")
    b.add_argument("--marginals", nargs="+", required=True)
    b.add_argument("--tilde", nargs="+", required=True)
    b.add_argument("--cost", required=True, help="cost JSON; tensor costs need both tuples on the same spaces")
    b.add_argument("--p", type=parse_order, default=2.0)
    b.add_argument("--q", type=parse_order, default=1.0)
    _solver_flags(b)

    e = sub.add_parser("experiment", help="seeded experiment suites")
    esub = e.add_subparsers(dest="action", required=True)
    esub.add_parser("list", help="list the suites")
    r = esub.add_parser("run", help="run one suite")
    r.add_argument("name")
    r.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--p", type=parse_order, nargs="+")
    r.add_argument("--q", type=parse_order, nargs="+")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--divergence", nargs="+", choices=("kl", "quadratic"))
    r.add_argument("--tol", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--out", help="directory for <name>.json and <name>.csv")
    r.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")
    r.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    return ap


def _emit(obj):
    sys.stdout.write(dumps(obj) + "\n")


def _paired(mus, nus):
    """Put each pair (mu_i, nu_i) on a common space."""
    if len(mus) != len(nus):
        raise ShadowOTError(f"{len(mus)} marginals but {len(nus)} perturbed marginals")
    a, b = [], []
    for m, n in zip(mus, nus):
        space, ma, mb = union_space(m.space, n.space)
        a.append(embed(m, space, ma))
        b.append(embed(n, space, mb))
    return a, b


def cmd_solve(args) -> int:
    mus = [load_measure(f) for f in args.marginals]
    product = ProductSpace(tuple(m.space for m in mus))
    c, eps = load_cost(args.cost, product)
    eps = eps if args.epsilon is None else args.epsilon
    rep = f_regularized_solve(mus, c, args.divergence, tol=args.tol, max_iters=args.max_iters, epsilon=eps)
    out = rep.to_dict()
    out.pop("optimizer")
    out["coupling"] = coupling_to_dict(rep.optimizer)
    out["status"] = "ok" if rep.converged else "not_converged"
    _emit(out)
    return EXIT_OK if rep.converged else EXIT_VIOLATION


def cmd_wasserstein(args) -> int:
    mu, nu = load_measure(args.mu), load_measure(args.nu)
    if not mu.space.same_as(nu.space):
        (mu,), (nu,) = _paired([mu], [nu])
    res = wasserstein(mu, nu, args.p)
    _emit({"p": args.p, "value": res.value, "plan": res.plan.tensor.tolist(), "status": "ok"})
    return EXIT_OK


def cmd_shadow(args) -> int:
    pi = load_coupling(args.coupling)
    targets = [load_measure(f) for f in args.targets]
    res = build_shadow(pi, targets, args.p)
    cert = verify_shadow(pi, res, args.divergence)
    _emit(
        {
            "p": args.p,
            "delta": res.delta,
            "distances": list(res.distances),
            "shadow": coupling_to_dict(res.shadow),
            "certificate": cert.to_dict(),
            "status": "ok" if cert.holds else "violation",
        }
    )
    return EXIT_OK if cert.holds else EXIT_VIOLATION


def cmd_bounds(args) -> int:
    mus, nus = _paired([load_measure(f) for f in args.marginals], [load_measure(f) for f in args.tilde])
    product = ProductSpace(tuple(m.space for m in mus))
    c, eps = load_cost(args.cost, product)
    eps = eps if args.epsilon is None else args.epsilon
    solve = dict(tol=args.tol, max_iters=args.max_iters, epsilon=eps)
    rep = f_regularized_solve(mus, c, args.divergence, **solve)
    rep_t = f_regularized_solve(nus, c, args.divergence, **solve)
    if not (rep.converged and rep_t.converged):
        _emit({"status": "not_converged"})
        return EXIT_VIOLATION
    p, q = args.p, args.q
    delta = marginal_tuple_distance(mus, nus, p)
    L = B.cost_condition_constant("lipschitz", c, mus, nus, p)
    certs = [StabilityCertificate.check("value_stability", B.value_stability_bound(L, delta), abs(rep.value - rep_t.value), {"L": L, "delta": delta})]
    if args.divergence == "kl" and q <= p:
        Cq = max(B.bounded_transport_constant(mus, q), B.bounded_transport_constant(nus, q))
        inp = B.BoundInputs(N=len(mus), p=p, q=q, L=L / eps, C_q=Cq, delta=delta)
        wq = coupling_distance(rep.optimizer, rep_t.optimizer, q)
        certs.append(StabilityCertificate.check("optimizer_stability_Iq", B.optimizer_stability_bound("Iq", inp), wq, inp.to_dict()))
    ok = all(x.holds for x in certs)
    _emit(
        {
            "p": p,
            "q": q,
            "epsilon": eps,
            "delta": delta,
            "values": [rep.value, rep_t.value],
            "certificates": [x.to_dict() for x in certs],
            "status": "ok" if ok else "violation",
        }
    )
    return EXIT_OK if ok else EXIT_VIOLATION


def _experiment_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    base["name"] = args.name
    cfg = ExperimentConfig.from_dict(base)
    over = {}
    for key in ("seed", "trials", "epsilon", "tol", "max_iters", "out"):
        v = getattr(args, key)
        if v is not None:
            over[key] = v
    for key in ("p", "q", "divergence"):
        v = getattr(args, key)
        if v is not None:
            over[key] = tuple(v)
    return replace(cfg, **over).validated()


def cmd_experiment(args) -> int:
    if args.action == "list":
        _emit({"experiments": [{"name": n, "default_trials": DEFAULT_TRIALS[n]} for n in EXPERIMENTS]})
        return EXIT_OK
    cfg = _experiment_config(args)
    report = run_experiment(cfg, workers=args.workers)
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        sys.stdout.write(report.to_json(include_timing=True) + "\n")
    return EXIT_OK if report.status == "ok" else EXIT_VIOLATION


COMMANDS = {
    "solve": cmd_solve,
    "wasserstein": cmd_wasserstein,
    "shadow": cmd_shadow,
    "bounds": cmd_bounds,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ShadowOTError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"shadowot: error: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
