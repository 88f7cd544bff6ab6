"""Command-line front end.

Seeding: every command takes a master --seed.  Replica i draws its
environment from the stream SeedSequence([seed, i]), so results do not
depend on --threads (default from the PINNING_THREADS environment variable).
"""
from __future__ import annotations

import argparse
import io
import sys

import numpy as np
from pydantic import ValidationError

from . import annealed as ann
from . import gaussenv as ge
from .config import ExperimentConfig, load_config, merge
from .quenched import (GridError, ModelParams, critical_point_scan, default_threads,
                       free_energy_on_envs, quenched_partition)
from .renewal import SlowVar, build_law, free_energy_from_law, homogeneous_partition_dp
from .report import dumps
from .verify import SUITES, Scenario, run_suite

EPILOG = ("Seeds: replica i uses the stream SeedSequence([seed, i]); outputs are "
          "identical for any thread count.  Threads default to $PINNING_THREADS (else 1). "
          "Exit codes: 0 ok or refused, 1 runtime error or failed check, 2 usage error.")


class UsageError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """"lo:hi:step" (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [float(x) for x in np.round(lo + step * np.arange(n), 12)]
        vals = [float(x) for x in text.split(",") if x.strip()]
        if not vals:
            raise ValueError
        return vals
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed grid {text!r}; use lo:hi:step or a,b,c")


def _fmt(x) -> str:
    return "%.17g" % x


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument plumbing

_FLAG_KEYS = {
    "alpha": "law.alpha", "gamma": "law.gamma", "n_max": "law.n_max",
    "family": "spec.family", "a": "spec.a", "m": "spec.m",
    "beta": "params.beta", "h": "params.h", "h_grid": "params.h_grid",
    "N": "run.N", "burn": "run.burn", "replicas": "run.replicas", "seed": "run.seed",
    "budget": "run.budget", "threads": "run.threads",
}


def _add_common(p):
    p.add_argument("--config", help="YAML experiment file; flags override its keys")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--seed", type=int, help="master seed")


def _add_law(p):
    p.add_argument("--alpha", type=float, help="tail exponent of the gap law")
    p.add_argument("--gamma", type=float, help="exponent of the log(e+n) factor")
    p.add_argument("--n-max", dest="n_max", type=int)


def _add_spec(p):
    p.add_argument("--family", choices=ge.FAMILIES)
    p.add_argument("--a", type=float, help="correlation decay exponent")
    p.add_argument("--m", type=int, help="correlation range / annealed memory")


def _add_params(p):
    p.add_argument("--beta", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--h-grid", dest="h_grid", type=parse_grid, help="lo:hi:step or a,b,c")


def _add_run(p, replicas=True):
    p.add_argument("--N", type=int, help="system size")
    p.add_argument("--burn", type=int)
    if replicas:
        p.add_argument("--replicas", type=int)
    p.add_argument("--budget", type=int, help="importance-sampling budget")


def resolve(args) -> ExperimentConfig:
    base = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    overrides = {key: getattr(args, name) for name, key in _FLAG_KEYS.items()
                 if getattr(args, name, None) is not None}
    return merge(base, overrides)


def _law(cfg: ExperimentConfig):
    return build_law(cfg.law.alpha, SlowVar(cfg.law.gamma), cfg.law.n_max)


def _spec(cfg: ExperimentConfig) -> ge.CorrelationSpec:
    s = cfg.spec
    if s.family == ge.IID:
        return ge.CorrelationSpec.iid()
    if s.family == ge.TRUNCATED_POWER:
        return ge.CorrelationSpec.truncated(s.a, s.m)
    return ge.CorrelationSpec.shifted_power(s.a)


def _threads(cfg: ExperimentConfig) -> int:
    return cfg.run.threads or default_threads()


# ---------------------------------------------------------------------------
# commands


def cmd_homog(args, cfg: ExperimentConfig):
    law = _law(cfg)
    grid = cfg.params.h_grid if cfg.params.h_grid is not None else [cfg.params.h]
    with_dp = args.N is not None
    rows = []
    for h in grid:
        row = [h, free_energy_from_law(law, h)]
        if with_dp:
            row.append(homogeneous_partition_dp(law, h, cfg.run.N).rate())
        rows.append(row)
    header = ["h", "free_energy"] + (["dp_rate"] if with_dp else [])
    return _csv(header, rows), 0


def cmd_quenched(args, cfg: ExperimentConfig):
    law = _law(cfg)
    spec = _spec(cfg)
    N, R, seed = cfg.run.N, cfg.run.replicas, cfg.run.seed
    print(f"sampling {R} environments of length {N}", file=sys.stderr)
    out = {"config": cfg.resolved()}
    if cfg.params.h_grid is not None:
        scan = critical_point_scan(law, cfg.params.beta, spec, N, R, cfg.params.h_grid,
                                   seed=seed, threads=_threads(cfg))
        out["scan"] = scan.to_dict()
    else:
        envs = ge.sample_environments(spec, N, seed, range(R))
        est = free_energy_on_envs(law, ModelParams(cfg.params.beta, cfg.params.h), envs,
                                  _threads(cfg),
                                  {"seed": seed, "spec": spec.describe()})
        out["estimate"] = est.to_dict()
        if args.trace:
            env = ge.sample_environment(spec, N, seed, 0)
            tr = quenched_partition(law, ModelParams(cfg.params.beta, cfg.params.h), env)
            with open(args.trace, "w") as fh:
                fh.write(_csv(["n", "logz"], zip(range(N + 1), tr.logz)))
    return dumps(out) + "\n", 0


def _annealed_config(cfg: ExperimentConfig) -> ann.AnnealedConfig:
    m = cfg.spec.m
    if m is None and cfg.spec.family == ge.IID:
        m = 0
    return ann.AnnealedConfig(_law(cfg), _spec(cfg), ModelParams(cfg.params.beta, cfg.params.h), m)


def cmd_annealed(args, cfg: ExperimentConfig):
    acfg = _annealed_config(cfg)
    out = {"config": cfg.resolved()}
    if args.brute_force:
        out["log_partition"] = ann.annealed_brute_force(acfg.at(m=None), cfg.run.N)
        return dumps(out) + "\n", 0
    if cfg.params.h_grid is not None:
        rows = [[h, ann.annealed_free_energy_limit(acfg.at(h=h))] for h in cfg.params.h_grid]
        return _csv(["h", "annealed_free_energy"], rows), 0
    out["free_energy"] = ann.annealed_free_energy_limit(acfg)
    burn = cfg.run.burn if cfg.run.burn is not None else cfg.run.N // 2
    out["slope_estimate"] = ann.annealed_free_energy(acfg, cfg.run.N, burn).to_dict()
    if args.critical:
        out["critical_point"] = ann.annealed_critical_point(acfg).to_dict()
        out["critical_point_series"] = ann.critical_point_series(acfg)
    return dumps(out) + "\n", 0


def cmd_gauss(args, cfg: ExperimentConfig):
    spec = _spec(cfg)
    l = args.l
    what = args.what
    out = {"config": cfg.resolved(), "l": l, "quantity": what}
    if what == "symbol":
        out["symbol_min"] = ge.szego_symbol_min(spec)
        out["symbol_max"] = ge.szego_symbol_max(spec)
    elif what == "upsilon":
        out["upsilon"] = ge.upsilon_infty(spec)
    elif what == "quadratic":
        q = ge.inverse_quadratic_form(spec, l)
        out["quadratic_form"] = q
        out["per_site"] = q / l
    elif what == "perron":
        pp = ge.perron_eigen(spec, l)
        out["eigenvalue"] = pp.mu
        out["iterations"] = pp.iterations
        out["vector_max"] = float(pp.U.max())
    elif what == "orthant":
        est = ge.prob_all_above(spec, l, args.threshold, cfg.run.budget, cfg.run.seed)
        out["estimate"] = est._asdict()
    elif what == "sample":
        env = ge.sample_environment(spec, l, cfg.run.seed, args.stream)
        if args.env_out:
            env.save(args.env_out)
            out["written"] = args.env_out
        else:
            out["values"] = env.values
        out["stream"] = args.stream
    return dumps(out) + "\n", 0


_VERIFY_INPUTS = {"alpha": "alpha", "gamma": "gamma", "family": "family", "a": "a", "m": "m",
                  "beta": "beta", "h_grid": "h_grid", "N": "N", "replicas": "replicas",
                  "seed": "seed", "budget": "budget"}


def cmd_verify(args, cfg: ExperimentConfig):
    names = args.suite or cfg.check.suites
    if not names:
        raise UsageError("no suite given (use --suite)")
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    inputs = dict(cfg.check.inputs)
    for flag, key in _VERIFY_INPUTS.items():
        if getattr(args, flag, None) is not None:
            inputs[key] = getattr(args, flag)
    scenarios = [Scenario(n, dict(inputs), [inputs.get("seed", 0)], dict(cfg.check.tolerances))
                 for n in names]
    for s in scenarios:
        print(f"running {s.id}", file=sys.stderr)
    suite = run_suite(scenarios, _threads(cfg))
    suite["refused"] = any(r["status"] == "refused" for r in suite["reports"])
    out = {"config": cfg.resolved(), "suite": suite}
    return dumps(out) + "\n", 1 if suite["status"] == "failed" else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinning", description=__doc__.splitlines()[0],
                                     epilog=EPILOG)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("homog", help="pure-model free energy over an h grid (CSV)", epilog=EPILOG)
    _add_common(p), _add_law(p), _add_params(p)
    p.add_argument("--N", type=int, help="also report the finite-N rate of the pinned DP")
    p.set_defaults(func=cmd_homog)

    p = sub.add_parser("quenched", help="Monte-Carlo quenched free energy (JSON)", epilog=EPILOG)
    _add_common(p), _add_law(p), _add_spec(p), _add_params(p), _add_run(p)
    p.add_argument("--trace", help="CSV of n, log Z_n for replica 0")
    p.set_defaults(func=cmd_quenched)

    p = sub.add_parser("annealed", help="annealed free energy and critical point (JSON)",
                       epilog=EPILOG)
    _add_common(p), _add_law(p), _add_spec(p), _add_params(p), _add_run(p, replicas=False)
    p.add_argument("--critical", action="store_true", help="also locate the critical point")
    p.add_argument("--brute-force", action="store_true", help="enumerate all paths (N <= 20)")
    p.set_defaults(func=cmd_annealed)

    p = sub.add_parser("gauss", help="Gaussian environment diagnostics (JSON)", epilog=EPILOG)
    _add_common(p), _add_spec(p)
    p.add_argument("--what", required=True,
                   choices=["symbol", "upsilon", "quadratic", "perron", "orthant", "sample"])
    p.add_argument("--l", type=int, default=256, help="block length / dimension")
    p.add_argument("--threshold", type=float, default=1.0, help="level A for --what orthant")
    p.add_argument("--budget", type=int)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--env-out", help="file for --what sample (.csv or raw little-endian f8)")
    p.set_defaults(func=cmd_gauss)

    p = sub.add_parser("verify", help="run named checks (JSON suite report)", epilog=EPILOG)
    _add_common(p), _add_law(p), _add_spec(p)
    p.add_argument("--beta", type=float)
    p.add_argument("--h-grid", dest="h_grid", type=parse_grid)
    _add_run(p)
    p.add_argument("--suite", action="append", help=f"one of {sorted(SUITES)}; repeatable")
    p.set_defaults(func=cmd_verify)
    return parser


def _glue_negative_values(argv):
    """Let "--h-grid -1:1:0.1" through: argparse would read the value as a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--h-grid", "--h", "--gamma"):
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and len(nxt) > 1 and (nxt[1].isdigit() or nxt[1] == "."):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_negative_values(argv))
    try:
        cfg = resolve(args)
    except ValidationError as exc:
        print(f"pinning: invalid configuration\n{exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"pinning: {exc}", file=sys.stderr)
        return 2
    try:
        text, code = args.func(args, cfg)
    except UsageError as exc:
        print(f"pinning: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ann.Refused, GridError, np.linalg.LinAlgError) as exc:
        print(f"pinning: error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
