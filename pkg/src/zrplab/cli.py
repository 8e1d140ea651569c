"""Command line: ``zrplab <experiment> [--config FILE] [--seed S] [--workers W] [--out DIR]``.

Exit status is 0 when the experiment's acceptance check passes, 1 when it
fails and 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from .config import EXPERIMENTS, ExperimentConfig
from .errors import ConfigError, ZRPError
from .heights import TestFunction
from .measures import build_measure, solve_fugacity
from . import experiments as ex

log = logging.getLogger("zrplab")


def _measure(cfg):
    rate = cfg.rate_function()
    if cfg.alpha is not None:
        m = build_measure(rate, cfg.alpha)
        cfg.rho = m.mean_rho
        return m
    return solve_fugacity(rate, cfg.rho)


def _header(cfg, name):
    return f"experiment={name} config={cfg.digest()} seed={cfg.seed}"


def _path(cfg, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _write_summary(cfg, name, summary):
    summary = {"experiment": name, "config": cfg.digest(), "seed": cfg.seed, **summary}
    with open(_path(cfg, f"{name}_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def cmd_invariance(cfg):
    m = _measure(cfg)
    rows, ok = [], True
    with open(_path(cfg, "invariance.csv"), "w") as fh:
        fh.write(f"# {_header(cfg, 'invariance')}\n")
        fh.write("gamma,site,tv,p_chi2\n")
        for j, g in enumerate(cfg.gammas):
            rep = ex.invariance(cfg.params(gamma=g), m, cfg.T, cfg.runs, cfg.seed + j, cfg.workers)
            for x in range(cfg.N):
                fh.write(f"{float(g)!r},{x},{float(rep.tv[x])!r},{float(rep.p_site[x])!r}\n")
            rows.append({"gamma": g, "max_tv": rep.max_tv, "p_pooled": rep.p_pooled,
                         "chi2": rep.chi2, "dof": rep.dof, "passed": rep.passed()})
            ok &= rep.passed()
            print(f"gamma={g}: max TV {rep.max_tv:.4f}, pooled chi-square p {rep.p_pooled:.4g}"
                  f" -> {'PASS' if rep.passed() else 'FAIL'}")
    _write_summary(cfg, "invariance", {"runs": rows, "passed": ok})
    return ok


def cmd_crossover(cfg):
    m = _measure(cfg)
    p1 = cfg.params(beta=1.0)
    micro = ex.microscopic_mode_series(p1, m, cfg.dt, cfg.steps, cfg.runs, cfg.seed, cfg.workers)
    results = {}
    with open(_path(cfg, "crossover_modes.csv"), "w") as fh:
        fh.write(f"# {_header(cfg, 'crossover')}\n")
        fh.write("coefficients,a,b,source,variance,variance_se,rate,rate_se\n")
        for label, a, b in (("nominal", 0.5 * m.c_prime, math.sqrt(0.5 * m.c)),
                            ("generator", m.c_prime, math.sqrt(2 * m.c))):
            rep = ex.crossover_ou(p1, m, a, b, cfg.dt, cfg.steps, cfg.runs, cfg.seed,
                                  micro=micro)
            for src, s in (("micro", rep.micro), ("spectral", rep.spectral)):
                fh.write(f"{label},{float(a)!r},{float(b)!r},{src},{float(s.variance)!r},{float(s.variance_se)!r},"
                         f"{float(s.rate)!r},{float(s.rate_se)!r}\n")
            zv, zr = rep.z_scores()
            results[label] = {"a": a, "b": b, "z_variance": zv, "z_rate": zr,
                              "passed": rep.passed()}
            print(f"{label} coefficients a={a:.4g} b={b:.4g}: z(var)={zv:.2f} z(rate)={zr:.2f}"
                  f" -> {'PASS' if rep.passed() else 'FAIL'}")
    anchor = (micro.real.var() + micro.imag.var()) / 2
    results["static_variance"] = {"measured": float(anchor), "predicted": m.chi / 2}
    skews = {}
    with open(_path(cfg, "crossover_skewness.csv"), "w") as fh:
        fh.write(f"# {_header(cfg, 'crossover')}\n")
        fh.write("beta,skewness,se,runs\n")
        for beta in (0.5, 1.0):
            p = cfg.params(N=cfg.skew_N, gamma=cfg.skew_gamma, beta=beta)
            s = ex.increment_skewness(p, m, cfg.skew_T, cfg.skew_runs, cfg.seed + 7, cfg.workers)
            fh.write(f"{float(beta)!r},{float(s.skewness)!r},{float(s.se)!r},{s.runs}\n")
            skews[beta] = s
            print(f"beta={beta}: skewness {s.skewness:.4f} +- {s.se:.4f}")
    skew_ok = abs(skews[0.5].z) > 3 and abs(skews[1.0].z) <= 3
    results["skewness_passed"] = skew_ok
    ok = results["nominal"]["passed"] and skew_ok
    _write_summary(cfg, "crossover", {**results, "passed": ok})
    return ok


def cmd_entropy_scan(cfg):
    m = _measure(cfg)
    rows = ex.entropy_scan(cfg.target_profile(), m, cfg.Ns, cfg.epsilons, cfg.samples,
                           cfg.seed, cfg.workers)
    ex.write_entropy_csv(_path(cfg, "entropy_scan.csv"), rows, _header(cfg, "entropy-scan"))
    ok = True
    for eps in cfg.epsilons:
        sub = [r for r in rows if r.epsilon == eps]
        good = ex.corridor_check(sub)
        ok &= good
        for r in sub:
            print(f"N={r.N} eps={eps}: p={r.p_hat:.4g} H={r.H_hat:.4f} "
                  f"[{r.H_low:.4f}, {r.H_high:.4f}] exact {r.exact_H:.4f}")
        print(f"eps={eps}: corridor {'PASS' if good else 'FAIL'}")
    _write_summary(cfg, "entropy-scan", {"rows": [asdict(r) for r in rows], "passed": ok})
    return ok


def cmd_sandwich(cfg):
    m = _measure(cfg)
    runs = ex.sandwich_ensemble(cfg.params(), m, cfg.epsilon, cfg.kappa, cfg.T, cfg.runs,
                                cfg.seed, cfg.workers)
    ex.write_sandwich_csv(_path(cfg, "sandwich.csv"), runs, _header(cfg, "sandwich"))
    total = sum(r.violations for r in runs)
    bad = sum(1 for r in runs if r.violations)
    min_slack = min(r.min_slack for r in runs)
    print(f"{total} violations in {bad}/{len(runs)} runs; minimal slack {min_slack:.4f}")
    ok = total == 0
    _write_summary(cfg, "sandwich", {"violations": total, "runs_with_violations": bad,
                                     "min_slack": min_slack, "passed": ok})
    return ok


def cmd_sample_invariant(cfg):
    m = _measure(cfg)
    m.to_csv(_path(cfg, "measure.csv"))
    eta = ex.sample_invariant(cfg.params(), m, cfg.runs, cfg.seed)
    with open(_path(cfg, "samples.csv"), "w") as fh:
        fh.write(f"# {_header(cfg, 'sample-invariant')}\n")
        fh.write("sample," + ",".join(f"x{x}" for x in range(cfg.N)) + "\n")
        for i, row in enumerate(eta):
            fh.write(f"{i}," + ",".join(str(v) for v in row) + "\n")
    chi2, dof, p = ex.chi_square_gof(eta, m.pmf)
    ok = p > 1e-3
    print(f"{cfg.runs} samples of N={cfg.N}: chi-square p {p:.4g}")
    _write_summary(cfg, "sample-invariant", {"chi2": chi2, "dof": dof, "p": p, "passed": ok})
    return ok


def cmd_spde_bench(cfg):
    from .spde import SpectralField, feller_check_ashe

    K = 8
    a = 0.125
    Jm = np.zeros(2 * K + 1, dtype=complex)
    Jm[K + 1] = Jm[K - 1] = 0.5
    pos = np.zeros(K + 1, dtype=complex)
    pos[1] = 0.3
    r = feller_check_ashe(SpectralField.from_positive(pos, a, 1.0),
                          SpectralField.zeros(K, a, 1.0), Jm, 1.0, cfg.seed)
    exact = 0.3 * math.exp(-math.pi ** 2 / 2)
    ashe_ok = abs(r.distanceT - exact) <= 1e-12
    errs, order = ex.mshe_heat_convergence([32, 64, 128], 0.05)
    heat_ok = order >= 0.9
    J = TestFunction.cos(1)
    fel = ex.sbe_feller(J, cfg.spde_T, [0.2, 0.1, 0.05], cfg.ensemble, cfg.seed, M=cfg.grid,
                        lam=cfg.lam, workers=cfg.workers)
    with open(_path(cfg, "spde_bench.csv"), "w") as fh:
        fh.write(f"# {_header(cfg, 'spde-bench')}\n")
        fh.write("check,param,value,se\n")
        fh.write(f"ashe_gap,1,{float(r.distanceT)!r},0.0\n")
        for M, e in zip([32, 64, 128], errs):
            fh.write(f"heat_error,{M},{float(e)!r},0.0\n")
        for f in fel:
            fh.write(f"feller_ms,{float(f.epsilon)!r},{float(f.output_ms)!r},{float(f.output_se)!r}\n")
    sep = all(fel[i].output_ms - fel[i + 1].output_ms
              > 3 * math.hypot(fel[i].output_se, fel[i + 1].output_se) for i in range(len(fel) - 1))
    flags = all(f.flagged / f.runs < 0.01 for f in fel)
    ok = ashe_ok and heat_ok and sep and flags
    print(f"ASHE gap error {abs(r.distanceT - exact):.3g}; heat order {order:.3f}; "
          f"Feller separation {sep}; positivity flags ok {flags}")
    _write_summary(cfg, "spde-bench", {"ashe_gap": r.distanceT, "heat_order": order,
                                       "feller": [asdict(f) for f in fel], "passed": ok})
    return ok


COMMANDS = {
    "invariance": cmd_invariance,
    "crossover": cmd_crossover,
    "entropy-scan": cmd_entropy_scan,
    "sandwich": cmd_sandwich,
    "sample-invariant": cmd_sample_invariant,
    "spde-bench": cmd_spde_bench,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="zrplab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file with experiment settings")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out")
    return ap


def load_config(args):
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        cfg.experiment = args.command
    else:
        cfg = ExperimentConfig(experiment=args.command)
    for key in ("seed", "workers", "out"):
        v = getattr(args, key)
        if v is not None:
            setattr(cfg, key, v)
    cfg.validate()
    return cfg


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        ok = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ZRPError as exc:
        log.error("%s", exc)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
