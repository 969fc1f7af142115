"""``kml`` command line: moment | bounds | spectrum | mingap | nystrom | verify."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import itertools
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import CHECKS, run_criteria
from .config import ExperimentConfig, active_tolerances
from .density import density_from_dict
from .errors import ConfigError, KmlError
from .kernels import (BoundReport, gaussian, eigenfunction_bound, eigenfunction_bound_full, gaussian_uniform_bound,
                      ninf_growth_bound, rkhs_schedule_bound, schedule_m, schedule_sup_bound, taylor_uniform_bound,
                      uniform_threshold_t)
from .moments import build_moment_polynomial, build_product_weight, moment_integral, squared_norm
from .nystrom import ScheduleConfig, ScheduleRow, fit_nystrom, generate_dataset, krr_fit, required_support, \
    schedule_experiment
from .random_gap import MinGapLaw, exp_lower_bound_corrected, expectation_exp_bound, ks_statistic, min_gap_cdf, \
    min_gap_density, sample_min_gap
from .spectral import (build_model, eigen_decay_fit, eigenfunction_sup, empirical_ninf, empirical_rkhs_error,
                       empirical_sup_error, load_model, quadratic_growth_constant, save_model)
from . import exact_hilbert as eh

log = logging.getLogger("kml")


class Output:
    """Collects files for one output directory and writes the manifest."""

    def __init__(self, out_dir: Path, cfg: ExperimentConfig | None):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.files: list[str] = []
        self.checks: dict[str, bool] = {}
        self.notes: list[str] = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()

    def csv(self, name: str, header, rows) -> Path:
        path = self.dir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if self.cfg is not None:
                fh.write(f"# config_hash={self.cfg.hash}\r\n")
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            w.writerows(rows)
        self.files.append(name)
        return path

    def text(self, name: str, body: str) -> None:
        (self.dir / name).write_text(body, encoding="utf-8")
        self.files.append(name)

    def manifest(self, command: str) -> None:
        doc = {
            "command": command,
            "config_hash": self.cfg.hash if self.cfg else None,
            "tool_version": __version__,
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "checks": self.checks,
            "files": sorted(set(self.files)),
            "notes": self.notes,
        }
        if self.cfg is not None:
            doc["config"] = self.cfg.doc
        with open(self.dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)


def fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _anchor(v) -> Fraction:
    return Fraction(v) if isinstance(v, str) else Fraction(v).limit_denominator(10**12)


def cmd_moment(cfg: ExperimentConfig, out: Output, args) -> None:
    rows = []
    ok = True
    for m in cfg.sweeps["m"]:
        if m > eh.MAX_ORDER:
            raise ConfigError(f"exact moment functions are limited to m <= {eh.MAX_ORDER}")
        for xv in cfg.sweeps["x"]:
            x = _anchor(xv)
            w = build_moment_polynomial(m, x)
            norm = squared_norm(w)
            resid = max(abs(moment_integral(w, ell) - x**ell) for ell in range(m))
            ok &= resid == 0 and norm <= m * m
            rows.append([m, str(x), str(norm), m * m, str(resid)])
    out.csv("moment.csv", ["m", "x", "norm_sq", "bound", "max_moment_residual"], rows)
    lines = []
    for m in range(1, max(cfg.sweeps["m"]) + 1):
        Hi = eh.hilbert_inverse(m)
        ident = eh.hilbert_matrix(m) @ Hi == eh.identity(m)
        total = sum(sum(r) for r in Hi.rows()) == m * m
        corner = Hi[0, 0] == m * m
        ok &= ident and total and corner
        lines.append(f"m={m} H*Hinv=I:{ident} sum=m^2:{total} corner=m^2:{corner}")
    out.text("identities.log", "\n".join(lines) + "\n")
    out.checks["moment_exact"] = bool(ok)


def _bound_row(rep: BoundReport, param_name: str, param) -> list:
    return [rep.name, param_name, fmt(param), fmt(rep.params.get("x", "")), fmt(float(rep.theoretical)),
            fmt(float(rep.empirical)) if rep.empirical is not None else "", fmt(float(rep.margin)),
            str(rep.passed).lower(), rep.flag]


def _sup_worst(model, spec, m, axis) -> float:
    worst = 0.0
    for x in itertools.product(axis, repeat=spec.d):
        W = build_product_weight(m, list(x), spec.density)
        worst = max(worst, empirical_sup_error(model, W, [float(v) for v in x], None))
    return worst


def cmd_bounds(cfg: ExperimentConfig, out: Output, args) -> None:
    kd, gd, sw = cfg.section("kernel"), cfg.section("grid"), cfg.sweeps
    density = density_from_dict(cfg.section("density"), kd["d"])
    spec = gaussian(kd["sigma"], kd["d"], density)
    d = spec.d
    tol = cfg.tolerances
    budget = gd.get("max_nodes", 250000)
    axis = [_anchor(v) for v in sw["x"]]
    reps = []
    model = build_model(spec, max(gd["q"], 2 * max(sw["m"]) + 8), eigen=False)
    for m in sw["m"]:
        worst = _sup_worst(model, spec, m, axis)
        reps.append(("m", m, BoundReport("taylor_uniform", {"m": m}, taylor_uniform_bound(spec, m), worst,
                                         tol.quadrature)))
        g = gaussian_uniform_bound(spec, m, strict=False)
        reps.append(("m", m, BoundReport("gaussian_uniform", {"m": m}, g, worst, tol.quadrature,
                                         "precondition" if math.isinf(g) else "")))
    t_star = uniform_threshold_t(spec)
    for t in [t_star] + list(sw["t"]):
        m = schedule_m(spec, t * d)
        q = m + 40
        bound = schedule_sup_bound(t, d)
        flag = "precondition" if t < t_star else ""
        if q**d > budget:
            reps.append(("t", t, BoundReport("schedule_sup", {"m": m}, bound, None, tol.quadrature, "budget")))
            continue
        worst = _sup_worst(build_model(spec, q, eigen=False), spec, m, axis)
        reps.append(("t", t, BoundReport("schedule_sup", {"m": m}, math.inf if flag else bound, worst,
                                         tol.quadrature, flag)))
        if q**d <= 20000:
            em = build_model(spec, max(q, 64))
            x0 = [axis[len(axis) // 2]] * d
            W = build_product_weight(m, x0, spec.density)
            val = empirical_rkhs_error(em, W, [float(v) for v in x0])
            reps.append(("s", t * d, BoundReport("rkhs_schedule", {"m": m, "x": float(x0[0])},
                                                 rkhs_schedule_bound(t * d), val, tol.quadrature)))
        else:
            reps.append(("s", t * d, BoundReport("rkhs_schedule", {"m": m}, rkhs_schedule_bound(t * d), None,
                                                 tol.quadrature, "budget")))
    if gd["q"] ** d <= 20000:
        em = build_model(spec, gd["q"])
        for lam in sw["lambda"]:
            reps.append(("lambda", lam, BoundReport("ninf_growth", {}, ninf_growth_bound(spec, lam),
                                                    empirical_ninf(em, lam, gd.get("G")))))
    header = ["bound", "param", "value", "x", "theoretical", "empirical", "margin", "passed", "flag"]
    out.csv("bounds.csv", header, [_bound_row(r, p, v) for p, v, r in reps])
    out.checks["bounds"] = all(r.passed for _, _, r in reps)


def _model_cache_path(cache_dir: Path, spec, q, dps) -> Path:
    key = json.dumps({"kernel": spec.to_dict(), "q": q, "dps": dps}, sort_keys=True)
    return cache_dir / f"model-{hashlib.sha256(key.encode()).hexdigest()[:16]}.json"


def cmd_spectrum(cfg: ExperimentConfig, out: Output, args) -> None:
    kd, gd = cfg.section("kernel"), cfg.section("grid")
    spec = gaussian(kd["sigma"], kd["d"], density_from_dict(cfg.section("density"), kd["d"]))
    q, dps, G = gd["q"], gd.get("dps"), gd.get("G")
    cache_dir = Path(args.cache) if getattr(args, "cache", None) else out.dir / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = _model_cache_path(cache_dir, spec, q, dps)
    if path.exists():
        model = load_model(path)
        out.notes.append(f"cached: model loaded from {path.name}, eigensolve skipped")
    else:
        model = build_model(spec, q, dps=dps)
        save_model(model, path)
        out.notes.append(f"built: model saved to {path.name}")
    sups = eigenfunction_sup(model, G)
    b = quadratic_growth_constant(sups)
    fit = eigen_decay_fit(model) if model.rank >= 8 else None
    rows = []
    for ell in range(1, model.rank + 1):
        mu = float(model.eigenvalues[ell - 1])
        full = eigenfunction_bound_full(spec, ell, fit.C_lower, fit.c_fit) if fit else math.nan
        rows.append([ell, fmt(mu), fmt(float(sups[ell - 1])), fmt(eigenfunction_bound(spec, mu)), fmt(full),
                     fmt(b * ell * ell)])
    out.csv("spectrum.csv", ["ell", "mu", "sup_phi", "mu_bound", "fitted_bound", "b_ell_sq"], rows)
    out.checks["mu_nonincreasing"] = bool(np.all(np.diff(model.eigenvalues) <= 0))
    out.checks["sup_below_b_ell_sq"] = bool(np.all(sups <= b * np.arange(1, sups.size + 1) ** 2 * (1 + 1e-12)))


def cmd_mingap(cfg: ExperimentConfig, out: Output, args) -> None:
    sw = cfg.sweeps
    R, bins, seed = cfg.doc["replications"], cfg.doc["bins"], cfg.seeds[0]
    tol = cfg.tolerances
    hist_rows, ks_rows, exp_rows = [], [], []
    for n in sw["n"]:
        law = MinGapLaw(n)
        gaps = sample_min_gap(law, seed + n, R, args.jobs)
        edges = np.linspace(0.0, law.support_end, bins + 1)
        counts, _ = np.histogram(gaps, bins=edges)
        probs = np.diff(min_gap_cdf(law, edges))
        width = edges[1] - edges[0]
        for i in range(bins):
            mid = 0.5 * (edges[i] + edges[i + 1])
            hist_rows.append([n, fmt(float(edges[i])), fmt(float(edges[i + 1])), fmt(float(counts[i] / (R * width))),
                              fmt(float(probs[i] / width)), fmt(min_gap_density(law, mid))])
        ks = ks_statistic(law, gaps)
        ks_rows.append([n, R, fmt(ks), str(ks <= 0.002).lower()])
        for c in sw["c"]:
            mc, lower = expectation_exp_bound(law, c, seed + 1000 * n, R, args.jobs)
            corr = exp_lower_bound_corrected(law, c)
            exp_rows.append([n, fmt(c), fmt(mc.value), fmt(mc.se), fmt(lower), fmt(corr),
                             str(mc.value + tol.mc_se * mc.se >= lower).lower(),
                             str(mc.value + tol.mc_se * mc.se >= corr).lower()])
    out.csv("mingap_hist.csv", ["n", "bin_lo", "bin_hi", "empirical_density", "exact_bin_density", "density_mid"],
            hist_rows)
    out.csv("mingap_ks.csv", ["n", "replications", "ks", "passed"], ks_rows)
    out.csv("mingap_expectation.csv", ["n", "c", "mc_value", "mc_se", "lower_stated", "lower_corrected",
                                       "passed_stated", "passed_corrected"], exp_rows)
    out.checks["ks"] = all(r[-1] == "true" for r in ks_rows)
    out.checks["expectation_stated"] = all(r[-2] == "true" for r in exp_rows)
    out.checks["expectation_corrected"] = all(r[-1] == "true" for r in exp_rows)


def cmd_nystrom(cfg: ExperimentConfig, out: Output, args) -> None:
    kd, sw = cfg.section("kernel"), cfg.sweeps
    density = density_from_dict(cfg.section("density"), kd["d"])
    spec = gaussian(kd["sigma"], kd["d"], density)
    scfg = ScheduleConfig(n_values=sw["n"], d=kd["d"], sigma=kd["sigma"], target=cfg.doc["target"],
                          noise=cfg.doc["noise"], lambda_schedules=sw["lambda_schedules"],
                          fixed_lambda=cfg.doc["fixed_lambda"], m_values=sw["m_support"], seeds=cfg.seeds,
                          density=cfg.section("density"))
    rows = schedule_experiment(scfg, args.jobs)
    support = {}
    body = []
    for r in rows:
        if r.lam not in support:
            support[r.lam] = required_support(spec, r.lam)
        body.append(r.csv_fields() + [support[r.lam]])
    out.csv("nystrom.csv", list(ScheduleRow.CSV_HEADER) + ["required_support"], body)
    n_eq = min(200, min(sw["n"]))
    data = generate_dataset(kd["d"], n_eq, cfg.doc["target"], cfg.doc["noise"], cfg.seeds[0], density)
    lam = 1.0 / n_eq
    diff = float(np.max(np.abs(fit_nystrom(data, spec, n_eq, lam, cfg.seeds[0]).predict(data.inputs)
                               - krr_fit(data, spec, lam).predict(data.inputs))))
    out.csv("nystrom_equivalence.csv", ["n", "lambda", "max_abs_diff", "passed"],
            [[n_eq, fmt(lam), fmt(diff), str(diff <= cfg.tolerances.quadrature).lower()]])
    out.checks["m_equals_n"] = diff <= cfg.tolerances.quadrature


COMMANDS = {"moment": cmd_moment, "bounds": cmd_bounds, "spectrum": cmd_spectrum, "mingap": cmd_mingap,
            "nystrom": cmd_nystrom}


def cmd_verify(args) -> int:
    only = None
    if args.only:
        only = [s.strip().upper() for s in ",".join(args.only).split(",") if s.strip()]
        unknown = [c for c in only if c not in CHECKS]
        if unknown:
            print(f"unknown criterion: {', '.join(unknown)}", file=sys.stderr)
            return 2
    try:
        tol = active_tolerances()
    except ConfigError as exc:
        print(f"FAIL tolerances: {exc}", file=sys.stderr)
        return 1
    results = run_criteria(only, tol, args.jobs)
    for r in results:
        print(r.line())
        for rep in r.reports:
            if not rep.passed:
                print(f"    {rep.name} {rep.params}: theoretical={rep.theoretical:.4g} empirical={rep.empirical:.4g}")
    failed = [r.cid for r in results if not r.passed]
    if args.out:
        out = Output(Path(args.out), None)
        out.checks = {r.cid: r.passed for r in results}
        out.csv("verify.csv", ["criterion", "passed", "elapsed", "detail"],
                [[r.cid, str(r.passed).lower(), f"{r.elapsed:.3f}", r.detail] for r in results])
        out.manifest("verify")
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return 1
    print("all criteria passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kml", description="Moment-function and kernel approximation experiments.")
    p.add_argument("--version", action="version", version=f"kml {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config file (defaults are used when omitted)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--seed", type=int, help="override the seed list with a single seed")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads for independent cells")
        sp.add_argument("--only", action="append", help="criterion ids for verify, e.g. A3 or A1,A2")
        if name == "spectrum":
            sp.add_argument("--cache", type=Path, help="model cache directory (default OUT/cache)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return 2
    if args.command == "verify":
        return cmd_verify(args)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.default(args.command)
        if cfg.experiment != args.command:
            raise ConfigError(f"config is for '{cfg.experiment}', not '{args.command}'")
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out_dir = args.out or Path(cfg.doc.get("output_dir", f"runs/{args.command}"))
        out = Output(out_dir, cfg)
        COMMANDS[args.command](cfg, out, args)
    except KmlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out.manifest(args.command)
    bad = [k for k, v in out.checks.items() if not v]
    print(f"{args.command}: wrote {len(out.files)} file(s) to {out.dir}" + (f"; failed checks: {', '.join(bad)}" if bad else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
