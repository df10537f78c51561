"""Command line entry point.

Subcommands: solve (bilevel mean-variance solve), portfolio (build the
portfolio instance), frontier (risk-aversion sweep or exact frontier), and
check (verification identities plus a Monte-Carlo cross-check on a policy).

Exit codes: 0 success, 2 input error, 3 non-convergence or failed check,
4 internal error. Every run writes a JSON manifest listing the command line,
configuration, input digests, seed, version, timestamps, and output files, so
a run can be re-executed from the manifest alone. All floats are printed with
10 significant digits.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .evaluation import (local_optimality_residual, mean_variance_bundle,
                         mixed_policy_xi, performance_derivative,
                         performance_difference, pseudo_bundle)
from .frontier import (DEFAULT_BETA_GRID, beta_sweep, export_frontier_csv,
                       export_plot_data, oracle_frontier)
from .mdp import Mdp, MdpError, MixedPolicy, Policy, check_policy, load_mdp, save_mdp
from .oracle import monte_carlo_estimate
from .portfolio import (PortfolioError, build_portfolio_mdp,
                        calibrate_default_mode, load_params)
from .solvers import (INNER_VARIANTS, SolverConfig, SolverError, bilevel_solve,
                      export_trace_csv)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_INTERNAL = 4


class InputError(Exception):
    pass


class CheckFailed(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(path, args, config: dict, inputs, outputs, seed=None,
                    started=None) -> None:
    doc = {
        "command_line": [sys.argv[0].rsplit("/", 1)[-1]] + sys.argv[1:],
        "subcommand": args.command,
        "config": config,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _load_mdp(path) -> Mdp:
    try:
        return load_mdp(path)
    except (OSError, ValueError, MdpError) as exc:
        raise InputError(f"cannot load MDP from {path}: {exc}") from exc


def _parse_policy(spec: str, mdp: Mdp) -> Policy:
    """Either a dash-separated action string like 0-1-0 or a JSON file path."""
    try:
        if spec.endswith(".json"):
            with open(spec, "r", encoding="utf-8") as fh:
                actions = json.load(fh)
            if not isinstance(actions, list):
                raise ValueError("policy file must hold a JSON list of actions")
        else:
            actions = [int(tok) for tok in spec.split("-")]
        policy = Policy(np.asarray(actions, dtype=int))
        check_policy(mdp, policy)
        return policy
    except (OSError, ValueError, MdpError) as exc:
        raise InputError(f"bad policy {spec!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    started = _now()
    mdp = _load_mdp(args.mdp_file)
    if args.beta < 0:
        raise InputError("--beta must be nonnegative")
    try:
        config = SolverConfig(theta=args.theta, lambda_init=args.lambda0,
                              inner=args.solver)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = bilevel_solve(mdp, args.beta, config)
    b = result.bundle
    print(f"policy   {result.policy.encode()}")
    print(f"eta      {_fmt(b.eta)}")
    print(f"zeta     {_fmt(b.zeta)}")
    print(f"xi       {_fmt(b.xi)}")
    print(f"residual {_fmt(result.local_residual)}")
    print(f"outer_iterations {len(result.trace)}")
    print(f"inner_iterations {sum(result.inner_iterations)}")
    print(f"converged {result.converged}")
    outputs = []
    if args.trace_out:
        export_trace_csv(result, args.trace_out)
        outputs.append(args.trace_out)
    outputs.append(args.manifest)
    _write_manifest(args.manifest, args,
                    {"beta": args.beta, "solver": args.solver,
                     "lambda0": args.lambda0, "theta": args.theta},
                    [args.mdp_file], outputs, started=started)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# portfolio


def cmd_portfolio(args) -> int:
    started = _now()
    try:
        params = load_params(args.params_file)
    except (OSError, ValueError, PortfolioError) as exc:
        raise InputError(f"cannot load parameters: {exc}") from exc
    calibration = None
    if args.calibrate:
        calibration = calibrate_default_mode(params)
        from dataclasses import replace
        params = replace(params, default_mode=calibration.default_mode,
                         initial_rate=calibration.initial_rate)
    mdp = build_portfolio_mdp(params)
    save_mdp(mdp, args.out)
    print(f"states  {mdp.n_states}")
    print(f"mode    {params.default_mode}")
    print(f"wrote   {args.out}")
    config = {"params": asdict(params)}
    if calibration is not None:
        config["calibration"] = calibration.manifest()
    _write_manifest(args.manifest, args, config, [args.params_file],
                    [args.out, args.manifest], started=started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# frontier


def cmd_frontier(args) -> int:
    started = _now()
    mdp = _load_mdp(args.mdp_file)
    if args.betas is None:
        betas = list(DEFAULT_BETA_GRID)
    else:
        try:
            betas = [float(tok) for tok in args.betas.split(",") if tok]
        except ValueError as exc:
            raise InputError(f"bad --betas list: {exc}") from exc
        if not betas or any(b < 0 for b in betas):
            raise InputError("--betas must be a nonempty list of nonnegative floats")
    if args.oracle:
        points = oracle_frontier(mdp)
    else:
        points = beta_sweep(mdp, betas)
    export_frontier_csv(points, args.out)
    outputs = [args.out]
    if args.plot_data:
        export_plot_data(points, args.plot_data)
        outputs.append(args.plot_data)
    vertices = [p for p in points if p.is_vertex]
    print(f"points   {len(points)}")
    print(f"vertices {len(vertices)}")
    for p in points:
        tag = "vertex" if p.is_vertex else "point"
        print(f"{tag} beta={_fmt(p.beta)} eta={_fmt(p.eta)} "
              f"zeta={_fmt(p.zeta)} xi={_fmt(p.xi)}")
    outputs.append(args.manifest)
    _write_manifest(args.manifest, args,
                    {"betas": betas, "oracle": bool(args.oracle)},
                    [args.mdp_file], outputs, started=started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def _report(name: str, residual: float, tol: float) -> bool:
    ok = residual <= tol
    print(f"{'pass' if ok else 'FAIL'} {name:28s} residual={_fmt(residual)} "
          f"tol={_fmt(tol)}")
    return ok


def _neighbor_policy(mdp: Mdp, policy: Policy) -> Policy:
    """A comparison policy differing wherever a state has another action."""
    actions = np.array(policy.actions)
    for x in range(mdp.n_states):
        n_act = mdp.transitions[x].shape[0]
        if n_act > 1:
            actions[x] = (actions[x] + 1) % n_act
    return Policy(actions)


def cmd_check(args) -> int:
    started = _now()
    mdp = _load_mdp(args.mdp_file)
    if args.beta < 0:
        raise InputError("--beta must be nonnegative")
    policy = _parse_policy(args.policy, mdp)
    beta = args.beta
    bundle = mean_variance_bundle(mdp, policy, beta)
    print(f"policy {policy.encode()} eta={_fmt(bundle.eta)} "
          f"zeta={_fmt(bundle.zeta)} xi={_fmt(bundle.xi)}")
    ok = True

    # pseudo-mean deviation identity at a displaced lambda
    lam = bundle.eta - 0.5
    pb = pseudo_bundle(mdp, policy, lam, beta)
    dev = abs(pb.xi_lambda - (bundle.xi - beta * (bundle.eta - lam) ** 2))
    ok &= _report("pseudo-mean deviation", dev, 1e-9)

    other = _neighbor_policy(mdp, policy)
    if other != policy:
        alt = mean_variance_bundle(mdp, other, beta)
        predicted = performance_difference(mdp, policy, other, lam, beta)
        ok &= _report("performance difference",
                      abs(predicted - (alt.xi - bundle.xi)), 1e-8)
        deriv = performance_derivative(mdp, policy, other, bundle.eta, beta)
        h = 1e-5
        xp = mixed_policy_xi(mdp, MixedPolicy(policy, other, h), beta)[2]
        xm = bundle.xi  # delta = 0 endpoint; one-sided second-order estimate
        x2 = mixed_policy_xi(mdp, MixedPolicy(policy, other, 2 * h), beta)[2]
        fd = (4.0 * xp - 3.0 * xm - x2) / (2.0 * h)
        ok &= _report("derivative vs finite diff", abs(deriv - fd), 1e-4)
    else:
        print("skip performance difference (single-action MDP)")

    residual = local_optimality_residual(mdp, policy, beta)
    print(f"info local-optimality residual {_fmt(residual)}")
    ok &= _report("residual nonnegative", -residual, 1e-10)

    mc = monte_carlo_estimate(mdp, policy, beta, trajectories=args.mc_n,
                              seed=args.mc_seed)
    for name, est, se, exact in (("monte-carlo eta", mc.eta, mc.eta_se, bundle.eta),
                                 ("monte-carlo zeta", mc.zeta, mc.zeta_se, bundle.zeta),
                                 ("monte-carlo xi", mc.xi, mc.xi_se, bundle.xi)):
        ok &= _report(name, abs(est - exact), 3.0 * se + 1e-12)

    _write_manifest(args.manifest, args,
                    {"beta": beta, "policy": policy.encode(),
                     "mc_n": args.mc_n, "mc_seed": args.mc_seed},
                    [args.mdp_file], [args.manifest], seed=args.mc_seed,
                    started=started)
    print("all checks passed" if ok else "CHECKS FAILED")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvmdp",
        description="Risk-averse discounted mean-variance MDP solver.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the bilevel mean-variance solver")
    p.add_argument("mdp_file")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--solver", choices=INNER_VARIANTS, default="dmvvi")
    p.add_argument("--lambda0", type=float, default=None)
    p.add_argument("--theta", type=float, default=1e-5)
    p.add_argument("--trace-out", default=None,
                   help="write the per-outer-iteration trace CSV here")
    p.add_argument("--manifest", default="solve-manifest.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("portfolio", help="build the portfolio-management MDP")
    p.add_argument("params_file")
    p.add_argument("--out", default="portfolio-mdp.json")
    p.add_argument("--calibrate", action="store_true",
                   help="pick default_mode by the risk-neutral anchor")
    p.add_argument("--manifest", default="portfolio-manifest.json")
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("frontier", help="beta sweep or exact efficient frontier")
    p.add_argument("mdp_file")
    p.add_argument("--betas", default=None,
                   help="comma-separated risk-aversion weights")
    p.add_argument("--oracle", action="store_true",
                   help="exact frontier instead of a solver sweep")
    p.add_argument("--out", default="frontier.csv")
    p.add_argument("--plot-data", default=None)
    p.add_argument("--manifest", default="frontier-manifest.json")
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("check", help="verification identities for one policy")
    p.add_argument("mdp_file")
    p.add_argument("--policy", required=True,
                   help="dash-separated actions (0-1-0) or a JSON file path")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--mc-seed", type=int, default=0)
    p.add_argument("--mc-n", type=int, default=10**5)
    p.add_argument("--manifest", default="check-manifest.json")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except Exception as exc:  # anything else is a bug, not a usage problem
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
