"""Named checks that combine the model modules, each producing a CheckReport.

A Scenario is a plain description (id, inputs, seeds, tolerances); running
it twice with the same description reproduces the report exactly.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.stats import norm

from . import annealed as ann
from .gaussenv import (IID, SHIFTED_POWER, CorrelationSpec, inverse_quadratic_form,
                       perron_eigen, prob_all_above, szego_symbol_min, upsilon_infty)
from .quenched import (GridError, ModelParams, block_size, critical_point_scan,
                       quenched_free_energy, strategy_lower_bound)
from .renewal import SlowVar, build_law
from .report import FAILED, INFORMATIONAL, PASSED, CheckReport


def load_bands() -> dict:
    """Frozen tolerances and pilot values shipped with the package."""
    return json.loads(resources.files("pinning").joinpath("bands.json").read_text())


def _status(ok: bool) -> str:
    return PASSED if ok else FAILED


def _rel_ok(value: float, target: float, tol: float) -> bool:
    return math.isfinite(value) and abs(value - target) <= tol * abs(target)


# ---------------------------------------------------------------------------
# smoothing


def check_smoothing(beta: float, spec: CorrelationSpec, law, h_grid, N: int = 2048,
                    replicas: int = 64, seed: int = 0, sigmas: float = 3.0,
                    threads: int | None = None) -> CheckReport:
    """F(h) <= (1+alpha)/(2 Y beta^2) (h - h_c)^2 at every grid point above the
    estimated critical bracket, using the bracket's lower edge for h_c and
    Y = 1 + 2 sum rho_k."""
    cid = "smoothing"
    params = {"beta": beta, "spec": spec.describe(), "law": law.describe(), "N": N,
              "replicas": replicas, "seed": seed, "h_grid": [float(h) for h in h_grid]}
    if beta <= 0:
        return CheckReport.refused(cid, params, "bound degenerates at beta = 0")
    try:
        smin = szego_symbol_min(spec)
    except ValueError as exc:
        return CheckReport.refused(cid, params, str(exc))
    if smin <= 0:
        return CheckReport.refused(cid, params, "covariance symbol not bounded away from 0")
    ups = upsilon_infty(spec)
    const = (1 + law.alpha) / (2 * ups * beta ** 2)
    scan = critical_point_scan(law, beta, spec, N, replicas, h_grid, 3.0, seed, threads)
    lower = scan.bracket[0]
    rows = []
    implied = math.inf
    for h, est in zip(scan.h_grid, scan.estimates):
        if h < scan.bracket[1]:
            continue
        low = est.value - sigmas * est.std_err
        bound = const * (h - lower) ** 2
        rows.append({"h": h, "estimate": est.value, "std_err": est.std_err,
                     "bound": bound, "slack": bound - low})
        if low > 0:
            # largest critical point compatible with the bound at this h
            implied = min(implied, h - math.sqrt(low / const))
    ok = all(r["slack"] >= 0 for r in rows)
    margins = {"min_slack": min(r["slack"] for r in rows) if rows else math.inf,
               "points": rows, "h_c_bracket": list(scan.bracket),
               "largest_compatible_h_c": implied}
    return CheckReport(cid, params, margins,
                       {"constant": const, "upsilon": ups, "sigmas": sigmas}, ok, _status(ok))


# ---------------------------------------------------------------------------
# no transition for non-summable correlations


def _reward_floor_rate(law, params, spec, l, budget, seed):
    return strategy_lower_bound(law, params, spec, l, budget, seed=seed)


def tune_block_constant(law, beta: float, spec: CorrelationSpec, h: float, budget: int = 1000,
                        seed: int = 0, grid=None) -> tuple[float, int]:
    """Smallest constant on `grid` whose block length gives a positive
    strategy bound at h."""
    grid = np.arange(1.0, 41.0) if grid is None else grid
    for cbar in grid:
        l = block_size(h, beta, spec.a, float(cbar))
        if l < 2:
            continue
        sb = _reward_floor_rate(law, ModelParams(beta, h), spec, l, budget, seed)
        if sb.positive:
            return float(cbar), l
    raise ValueError("no block constant on the grid gives a positive bound")


def check_no_transition(beta: float, spec: CorrelationSpec, law, h_list, cbar: float | None = None,
                        budget: int = 2000, seed: int = 0, rel_tol: float = 0.25,
                        quenched_N=(256, 512, 1024), quenched_replicas: int = 8,
                        threads: int | None = None) -> CheckReport:
    """Strategy lower bound at each h (positive, with the lower confidence edge
    above 0) and the slope of log(-log bound) against log|h|, expected to be
    (2-a)/(1-a).  Direct quenched estimates at growing N are recorded."""
    cid = "no_transition"
    h_list = sorted((float(h) for h in h_list), key=abs)
    params = {"beta": beta, "spec": spec.describe(), "law": law.describe(), "h_list": h_list,
              "budget": budget, "seed": seed}
    if spec.family != SHIFTED_POWER or not 0 < spec.a < 1:
        return CheckReport.refused(cid, params, "needs non-summable correlations (0 < a < 1)")
    if not spec.nonnegative:
        return CheckReport.refused(cid, params, "needs nonnegative correlations")
    if beta <= 0:
        return CheckReport.refused(cid, params, "needs beta > 0")
    if cbar is None:
        cbar, _ = tune_block_constant(law, beta, spec, h_list[0], min(budget, 1000), seed)
    rows = []
    for h in h_list:
        l = block_size(h, beta, spec.a, cbar)
        sb = _reward_floor_rate(law, ModelParams(beta, h), spec, l, budget, seed)
        direct = [quenched_free_energy(law, ModelParams(beta, h), spec, n, quenched_replicas,
                                       seed, threads).to_dict() for n in quenched_N]
        rows.append({"h": h, "block_len": l, "bound": sb.to_dict(), "positive": sb.positive,
                     "separated": sb.separated, "direct": direct})
    target = (2 - spec.a) / (1 - spec.a)
    slope = math.nan
    if all(r["positive"] for r in rows) and len(rows) >= 2:
        x = np.log([abs(r["h"]) for r in rows])
        y = np.log([-r["bound"]["log_value"] for r in rows])
        slope = float(np.polyfit(x, y, 1)[0])
    ok = all(r["positive"] and r["separated"] for r in rows) and _rel_ok(slope, target, rel_tol)
    margins = {"slope": slope, "points": rows, "cbar": cbar}
    return CheckReport(cid, params, margins, {"slope_target": target, "rel_tol": rel_tol},
                       ok, _status(ok))


# ---------------------------------------------------------------------------
# annealed regime


def check_annealed_regime(alpha: float, a: float, beta: float, m: int = 12, h_c_tol: float = 0.10,
                          exp_tol: float = 0.15, bands: dict | None = None) -> CheckReport:
    """Exponent fit, critical-point asymptotics and the structural annealed
    checks for one (alpha, a, beta)."""
    cid = "annealed_regime"
    bands = load_bands() if bands is None else bands
    law = build_law(alpha)
    spec = CorrelationSpec.shifted_power(a)
    cfg = ann.AnnealedConfig(law, spec, ModelParams(beta, 0.0), m)
    params = {"alpha": alpha, "a": a, "beta": beta, "m": m}
    eb = bands["annealed_exponent"]
    fit = ann.annealed_exponent_fit(cfg, eb["u_grid"], eb["cap"])
    target = max(1.0, 1.0 / alpha)
    hc = fit.h_critical
    series = ann.critical_point_series(cfg)
    ratio = hc / series if series != 0 else math.nan
    subs = {}
    if ann._summable_against_k(spec):
        subs["quasi_renewal"] = ann.quasi_renewal_check(cfg, [16, 32, 64])
        lb = bands["laplace_ratio"]
        subs["laplace_ratio"] = ann.laplace_ratio_check(cfg, lb["lambda_grid"], lb["band"])
        if alpha > 1:
            pb = bands["renewal_proximity"]
            subs["renewal_proximity"] = ann.renewal_measure_proximity(cfg, pb["N_list"], pb["band"])
            cb = bands["critical_partition_bounded"]
            subs["critical_partition_bounded"] = ann.critical_partition_bounded(
                cfg, cb["n_range"], cb["band"])
    else:
        subs["quasi_renewal"] = ann.quasi_renewal_check(cfg, [16])
    margins = {"exponent": fit.exponent, "exponent_target": target, "fit": fit.to_dict(),
               "critical_ratio": ratio, "h_critical": hc, "series": series,
               "subchecks": {k: r.to_dict() for k, r in subs.items()}}
    band = {"exponent_rel_tol": exp_tol, "critical_ratio_rel_tol": h_c_tol}
    if any(r.status == "refused" for r in subs.values()) or fit.flags:
        return CheckReport(cid, params, margins, band, None, INFORMATIONAL,
                           ["outside the hypotheses of the annealed sandwich; reported only"]
                           + fit.flags)
    ok = (_rel_ok(fit.exponent, target, exp_tol) and _rel_ok(ratio, 1.0, h_c_tol)
          and all(r.passed for r in subs.values()))
    return CheckReport(cid, params, margins, band, ok, _status(ok))


def check_critical_asymptotics(alpha: float, a: float, m: int, betas, rel_tol: float = 0.10) -> CheckReport:
    """Ratio of the annealed critical point to its small-beta prediction:
    within rel_tol of 1 at the smallest beta and improving as beta decreases."""
    cid = "critical_asymptotics"
    betas = sorted((float(b) for b in betas), reverse=True)
    params = {"alpha": alpha, "a": a, "m": m, "betas": betas}
    law = build_law(alpha)
    spec = CorrelationSpec.shifted_power(a)
    ratios = []
    for b in betas:
        cfg = ann.AnnealedConfig(law, spec, ModelParams(b, 0.0), m)
        ratios.append(ann.annealed_critical_point(cfg).value / ann.critical_point_series(cfg))
    dev = [abs(r - 1.0) for r in ratios]
    monotone = all(d1 >= d2 for d1, d2 in zip(dev, dev[1:]))
    ok = dev[-1] <= rel_tol and monotone
    return CheckReport(cid, params, {"ratios": ratios, "deviation": dev, "monotone": monotone},
                       {"rel_tol": rel_tol}, ok, _status(ok))


def quasi_renewal_battery() -> CheckReport:
    """All quasi-renewal bounds over a fixed set of a = 3 configurations."""
    cid = "quasi_renewal_battery"
    spec = CorrelationSpec.shifted_power(3.0)
    runs = []
    for alpha in (0.5, 1.5):
        law = build_law(alpha)
        for beta in (0.1, 0.3, 0.5):
            for h in (-0.2, 0.0, 0.1):
                p = ModelParams(beta, h)
                runs.append(ann.quasi_renewal_check(ann.AnnealedConfig(law, spec, p, 12), [16, 32, 64]))
                runs.append(ann.quasi_renewal_check(ann.AnnealedConfig(law, spec, p, None), [8, 12, 14]))
    # full memory up to 16 lags on the longest chain
    runs.append(ann.quasi_renewal_check(
        ann.AnnealedConfig(build_law(0.5), spec, ModelParams(0.5, 0.0), 16), [64]))
    worst = min(min(r.margins.values()) for r in runs)
    violations = sum(1 for r in runs if not r.passed)
    ok = violations == 0
    return CheckReport(cid, {"a": 3.0, "runs": len(runs)},
                       {"worst_margin": worst, "violations": violations,
                        "runs": [r.to_dict() for r in runs]},
                       {"min_margin": 0.0}, ok, _status(ok))


# ---------------------------------------------------------------------------
# entropy asymptotics and orthant probabilities


def check_entropy_asymptotics(spec: CorrelationSpec, l_list, ratio_tol: float = 0.05,
                              slope_tol: float = 0.10) -> CheckReport:
    """Summable correlations: <Y^{-1} 1, 1>/l against 1/Y_inf at the largest l.
    Non-summable: slope of log mu (Perron eigenvalue) against log l, expected 1-a."""
    cid = "entropy_asymptotics"
    l_list = sorted(int(l) for l in l_list)
    params = {"spec": spec.describe(), "l_list": l_list}
    margins = {}
    oks = []
    summable = spec.family != SHIFTED_POWER or spec.a > 1
    nonsummable = spec.family == IID or (spec.family == SHIFTED_POWER and spec.a < 1)
    if not summable and not nonsummable:
        return CheckReport.refused(cid, params, "a = 1 is covered by neither regime")
    if summable:
        if szego_symbol_min(spec) <= 0:
            return CheckReport.refused(cid, params, "covariance symbol not bounded away from 0")
        ups = upsilon_infty(spec)
        ratios = [inverse_quadratic_form(spec, l) / l * ups for l in l_list]
        margins["scaled_ratios"] = ratios
        margins["upsilon"] = ups
        oks.append(abs(ratios[-1] - 1.0) <= ratio_tol)
    if nonsummable:
        if not spec.nonnegative:
            return CheckReport.refused(cid, params, "needs nonnegative correlations")
        mus = [perron_eigen(spec, l).mu for l in l_list]
        target = 1.0 - (0.0 if spec.family == IID else spec.a)
        slope = float(np.polyfit(np.log(l_list), np.log(mus), 1)[0]) if len(l_list) > 1 else math.nan
        margins["perron"] = mus
        margins["slope"] = slope
        margins["slope_target"] = target
        if spec.family == IID:
            oks.append(all(abs(mu - 1.0) <= 1e-9 for mu in mus))
        else:
            oks.append(_rel_ok(slope, target, slope_tol))
    ok = all(oks)
    return CheckReport(cid, params, margins, {"ratio_tol": ratio_tol, "slope_tol": slope_tol},
                       ok, _status(ok))


def check_shifted_probability(spec: CorrelationSpec, l_list, A: float = 1.0, budget: int = 20000,
                              seed: int = 0, rel_tol: float = 0.15, sigmas: float = 3.0) -> CheckReport:
    """Non-summable: slope of log(-log P(all >= A)) against log l, expected a.
    IID: estimate against the exact product of Gaussian tails."""
    cid = "shifted_probability"
    l_list = sorted(int(l) for l in l_list)
    params = {"spec": spec.describe(), "l_list": l_list, "A": A, "budget": budget, "seed": seed}
    ests = [prob_all_above(spec, l, A, budget, seed) for l in l_list]
    rows = [{"l": l, "log_prob": e.log_prob, "ci": list(e.ci), "rel_err": e.rel_err}
            for l, e in zip(l_list, ests)]
    if spec.family == IID:
        oks = []
        for r in rows:
            exact = r["l"] * float(norm.logsf(A))
            sd = (r["ci"][1] - r["ci"][0]) / (2 * 1.959963984540054)
            # rounding allowance for the zero-variance case
            dev = abs(r["log_prob"] - exact)
            r["exact"] = exact
            r["deviation_sd"] = dev / sd if sd > 0 else (0.0 if dev <= 1e-10 * abs(exact) else math.inf)
            oks.append(dev <= sigmas * sd + 1e-10 * abs(exact))
        ok = all(oks)
        return CheckReport(cid, params, {"points": rows}, {"sigmas": sigmas}, ok, _status(ok))
    if spec.family != SHIFTED_POWER or not 0 < spec.a < 1:
        return CheckReport.refused(cid, params, "scaling check needs 0 < a < 1 or the IID control")
    slope = float(np.polyfit(np.log(l_list), np.log([-r["log_prob"] for r in rows]), 1)[0])
    ok = _rel_ok(slope, spec.a, rel_tol)
    return CheckReport(cid, params, {"points": rows, "slope": slope},
                       {"slope_target": spec.a, "rel_tol": rel_tol}, ok, _status(ok))


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    id: str
    inputs: dict
    seeds: list = field(default_factory=list)
    tolerance: dict = field(default_factory=dict)

    def run(self, threads: int | None = None) -> CheckReport:
        runner = SUITES[self.id]
        report = runner(copy.deepcopy(self.inputs), dict(self.tolerance), threads)
        report.params = {"scenario": self.id, "inputs": self.inputs, "seeds": self.seeds,
                         "tolerance": self.tolerance, **report.params}
        return report

    def snapshot(self) -> dict:
        return {"id": self.id, "inputs": self.inputs, "seeds": self.seeds, "tolerance": self.tolerance}


def _law(inp):
    return build_law(inp.get("alpha", 1.5), SlowVar(inp.get("gamma", 0.0)))


def _spec(inp):
    fam = inp.get("family", SHIFTED_POWER)
    if fam == IID:
        return CorrelationSpec.iid()
    if inp.get("m") is not None and fam != SHIFTED_POWER:
        return CorrelationSpec.truncated(inp["a"], inp["m"])
    return CorrelationSpec.shifted_power(inp.get("a", 2.0))


def _run_smoothing(inp, tol, threads):
    grid = inp.get("h_grid") or list(np.round(np.arange(-1.5, 0.5 + 1e-9, 0.1), 10))
    return check_smoothing(inp.get("beta", 1.0), _spec(inp), _law(inp), grid, inp.get("N", 2048),
                           inp.get("replicas", 64), inp.get("seed", 0), tol.get("sigmas", 3.0), threads)


def _run_no_transition(inp, tol, threads):
    inp.setdefault("a", 0.5)
    inp.setdefault("alpha", 0.5)
    return check_no_transition(inp.get("beta", 1.0), _spec(inp), _law(inp),
                               inp.get("h_list", [-1.0, -2.0, -4.0]), inp.get("cbar"),
                               inp.get("budget", 2000), inp.get("seed", 0), tol.get("rel_tol", 0.25),
                               threads=threads)


def _run_annealed(inp, tol, threads):
    return check_annealed_regime(inp.get("alpha", 0.5), inp.get("a", 3.0), inp.get("beta", 0.2),
                                 inp.get("m") or 12, tol.get("critical_ratio", 0.10),
                                 tol.get("exponent", 0.15))


def _run_critical(inp, tol, threads):
    return check_critical_asymptotics(inp.get("alpha", 0.5), inp.get("a", 3.0), inp.get("m") or 12,
                                      inp.get("betas", [0.4, 0.2, 0.1]), tol.get("rel_tol", 0.10))


def _run_quasi(inp, tol, threads):
    return quasi_renewal_battery()


def _run_entropy(inp, tol, threads):
    spec = _spec(inp)
    default = [250, 500, 1000, 2000]
    return check_entropy_asymptotics(spec, inp.get("l_list", default),
                                     tol.get("ratio_tol", 0.05), tol.get("slope_tol", 0.10))


def _run_orthant(inp, tol, threads):
    inp.setdefault("a", 0.5)
    return check_shifted_probability(_spec(inp), inp.get("l_list", [16, 32, 64, 128]),
                                     inp.get("A", 1.0), inp.get("budget", 20000), inp.get("seed", 0),
                                     tol.get("rel_tol", 0.15), tol.get("sigmas", 3.0))


SUITES = {
    "smoothing": _run_smoothing,
    "no_transition": _run_no_transition,
    "annealed": _run_annealed,
    "critical": _run_critical,
    "quasi_renewal": _run_quasi,
    "entropy": _run_entropy,
    "orthant": _run_orthant,
}


def run_suite(scenarios, threads: int | None = None) -> dict:
    """Run scenarios independently; the suite fails if any non-refused check fails."""
    reports = []
    for s in scenarios:
        try:
            reports.append(s.run(threads))
        except (ann.Refused, GridError) as exc:
            rep = CheckReport.refused(s.id, {"scenario": s.id, "inputs": s.inputs}, str(exc))
            if isinstance(exc, GridError):
                rep = CheckReport(s.id, rep.params, {}, {}, False, FAILED, [str(exc)])
            reports.append(rep)
    failed = any(r.status == FAILED for r in reports)
    return {"status": FAILED if failed else PASSED,
            "reports": [r.to_dict() for r in reports]}
