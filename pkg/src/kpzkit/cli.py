"""Command-line driver: ``kpzkit <subcommand> [flags]``.

Parameters come from defaults, then an optional ``key = value`` config file
(``--config``), then explicit flags.  The merged configuration is hashed and
the hash is written into every output.  Exit codes: 0 pass (or no comparison),
1 comparison failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .io import config_hash, read_csv, write_csv, write_json
from .rng import check_seed

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(float(v)) for v in _floats(text)]


# name -> (type, default, help); the parser and the config-file reader share this table
_COMMON = {"out": (str, "kpz-out", "output directory")}
_SPECS = {
    "tw-table": {
        "which": (str, "gue", "gue or goe"), "s_min": (float, -8.0, ""), "s_max": (float, 4.0, ""),
        "ds": (float, 0.05, ""), "n": (int, 40, "quadrature nodes"), "L": (float, 10.0, "truncation length"),
    },
    "crossover": {
        "t": (float, 1.0, "time"), "s_min": (float, -6.0, ""), "s_max": (float, 4.0, ""), "ds": (float, 0.05, ""),
    },
    "two-point": {"w": (float, 1.0, "separation"), "n": (int, 60, "nodes per side")},
    "simulate-asep": {
        "init": (str, "step", "step, flat or stationary"), "p": (float, 0.0, "right jump rate"),
        "q": (float, 1.0, "left jump rate"), "t": (float, 100.0, "time"), "replicas": (int, 100, ""),
        "seed": (int, 0, "master seed"), "sites": (str, "0", "comma-separated sites"),
        "rho": (float, 0.5, "density for stationary data"),
    },
    "tau-moment": {
        "N": (int, 1, "moment order"), "sites": (str, "1", "comma-separated sites"), "t": (float, 1.0, ""),
        "tau": (float, 0.25, "p/q"), "replicas": (int, 20000, ""), "seed": (int, 0, ""),
    },
    "simulate-polymer": {
        "beta": (float, 1.0, ""), "dist": (str, "gaussian", "gaussian, bernoulli or exponential"),
        "N_ladder": (str, "64,128,256,512,1024", "comma-separated lengths"), "replicas": (int, 1000, ""),
        "seed": (int, 0, ""),
    },
    "simulate-she": {
        "t": (float, 0.25, ""), "dx": (float, 0.02, ""), "replicas": (int, 10000, ""), "seed": (int, 0, ""),
        "check": (str, "crossover", "crossover, moments or brownian"), "theta": (float, 0.0, "Brownian drift"),
    },
    "compare": {
        "samples": (str, "", "CSV of samples"), "column": (str, "", "column name (default: first)"),
        "table": (str, "", "DistributionTable CSV"), "ks_tol": (float, 0.0, "0 means the 1%% Kolmogorov value"),
    },
}


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys may use dashes."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{k}: expected key = value")
            key, _, val = line.partition("=")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def build_parser():
    ap = argparse.ArgumentParser(prog="kpzkit", description="KPZ exact formulas and cross-validated simulations")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, spec in _SPECS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value file; flags override it")
        for key, (typ, _, hlp) in {**_COMMON, **spec}.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=argparse.SUPPRESS, help=hlp)
    return ap


def resolve(argv) -> dict:
    """Merge defaults, config file and flags into a validated config dict."""
    ns = vars(build_parser().parse_args(argv))
    cmd = ns.pop("command")
    spec = {**_COMMON, **_SPECS[cmd]}
    cfg = {k: d for k, (_, d, _) in spec.items()}
    path = ns.pop("config", None)
    if path:
        for k, v in read_config_file(path).items():
            if k not in spec:
                raise ConfigError(f"unknown key {k!r} for {cmd}")
            try:
                cfg[k] = spec[k][0](v)
            except ValueError as e:
                raise ConfigError(f"bad value for {k}: {v!r}") from e
    cfg.update(ns)
    cfg["command"] = cmd
    _validate(cfg)
    return cfg


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate(c):
    cmd = c["command"]
    if "seed" in c:
        try:
            c["seed"] = check_seed(c["seed"])
        except ValueError as e:
            raise ConfigError(str(e)) from e
    if "replicas" in c:
        _need(c["replicas"] >= 2, "replicas must be >= 2")
    if cmd == "tw-table":
        _need(c["which"] in ("gue", "goe"), "which must be gue or goe")
        _need(c["s_min"] < c["s_max"] and c["ds"] > 0, "need s_min < s_max and ds > 0")
        _need(c["n"] >= 4 and c["L"] > 0, "need n >= 4 and L > 0")
    elif cmd == "crossover":
        _need(c["t"] > 0, "t must be positive")
        _need(c["s_min"] < c["s_max"] and c["ds"] > 0, "need s_min < s_max and ds > 0")
    elif cmd == "two-point":
        _need(0 < c["w"] <= 5, "w must lie in (0, 5]")
        _need(c["n"] >= 10, "n must be >= 10")
    elif cmd == "simulate-asep":
        _need(c["init"] in ("step", "flat", "stationary"), "init must be step, flat or stationary")
        _need(c["p"] >= 0 and c["q"] >= 0 and abs(c["p"] + c["q"] - 1) < 1e-12, "need p, q >= 0 with p + q = 1")
        _need(c["t"] > 0, "t must be positive")
        _need(0 < c["rho"] < 1, "rho must lie in (0, 1)")
        _ints(c["sites"])
    elif cmd == "tau-moment":
        _need(c["N"] in (1, 2, 3), "N must be 1, 2 or 3")
        _need(0 < c["tau"] < 1, "tau must lie in (0, 1)")
        _need(c["t"] >= 0, "t must be non-negative")
        s = _ints(c["sites"])
        _need(len(s) == c["N"], "need exactly N sites")
    elif cmd == "simulate-polymer":
        _need(c["dist"] in ("gaussian", "bernoulli", "exponential"), "unknown disorder distribution")
        _need(c["beta"] >= 0, "beta must be non-negative")
        _need(not (c["dist"] == "exponential" and c["beta"] >= 1), "exponential disorder needs beta < 1")
        N = _ints(c["N_ladder"])
        _need(len(N) >= 2 and min(N) >= 1, "N ladder needs at least two positive lengths")
    elif cmd == "simulate-she":
        _need(c["check"] in ("crossover", "moments", "brownian"), "check must be crossover, moments or brownian")
        _need(c["dx"] > 0 and c["t"] > 0, "need dx > 0 and t > 0")
        if c["check"] == "crossover":
            _need(0.25 - 1e-12 <= c["t"] <= 1 + 1e-12, "crossover check needs t in [0.25, 1]")
        if c["check"] == "moments":
            _need(c["t"] <= 1.5, "moments check needs t <= 1.5")
        ratio = c["t"] / (0.5 * c["dx"] ** 2)
        _need(abs(ratio - round(ratio)) < 1e-6, "t must be a multiple of dt = dx^2/2")
    elif cmd == "compare":
        _need(bool(c["samples"]) and os.path.exists(c["samples"]), "samples file not found")
        _need(bool(c["table"]) and os.path.exists(c["table"]), "table file not found")


def _hash(cfg):
    return config_hash({k: v for k, v in cfg.items() if k != "out"})


def _report(cfg, h, estimate, se, n_samples, tolerance, passed, details):
    return {"command": cfg["command"], "config": {k: v for k, v in cfg.items() if k != "out"},
            "estimate": estimate, "se": se, "n_samples": n_samples, "seed": cfg.get("seed"),
            "config_hash": h, "tolerance": tolerance, "pass": passed, "details": details}


def _cached_table(cfg, h, build):
    """Determinant tables are cached under <out>/cache/<hash>.csv."""
    from .distributions import DistributionTable
    path = os.path.join(cfg["out"], "cache", f"{h}.csv")
    if os.path.exists(path):
        return DistributionTable.from_csv(path), path
    tab = build()
    tab.to_csv(path, {"config_hash": h})
    return tab, path


# ---------------------------------------------------------------- runners

def run_tw_table(cfg, h):
    from .distributions import tw_table
    s = np.arange(cfg["s_min"], cfg["s_max"] + 0.5 * cfg["ds"], cfg["ds"])
    tab, _ = _cached_table(cfg, h, lambda: tw_table(cfg["which"], s, cfg["n"], cfg["L"]))
    out = os.path.join(cfg["out"], f"tw-{cfg['which']}-{h}.csv")
    write_csv(out, {"s": tab.s, "F": tab.F, "density": tab.density},
              {"units": "s dimensionless; density per unit s", "config_hash": h, "which": cfg["which"],
               "n": cfg["n"], "L": cfg["L"]})
    return None, [out]


def run_crossover(cfg, h):
    from .distributions import CrossoverParams, crossover_cdf_and_density, crossover_generating_table
    p = CrossoverParams(cfg["t"])
    s = np.arange(cfg["s_min"], cfg["s_max"] + 0.5 * cfg["ds"], cfg["ds"])
    tab, _ = _cached_table(cfg, h, lambda: crossover_cdf_and_density(p, ds=cfg["ds"]))
    G, _, _ = crossover_generating_table(p, s, with_derivative=False)
    F = tab.cdf(s)
    dens = np.interp(s, tab.s, tab.density) if tab.density is not None else np.gradient(F, s)
    out = os.path.join(cfg["out"], f"crossover-{h}.csv")
    write_csv(out, {"s": s, "G": G, "F": F, "density": dens},
              {"units": "s = eta/gamma_t dimensionless; G generating function at gamma_t s; density per unit s",
               "config_hash": h, "t": cfg["t"], "gamma_t": p.gamma_t})
    return None, [out]


def run_two_point(cfg, h):
    from .twopoint import two_point_covariance
    path = os.path.join(cfg["out"], "cache", f"{h}.json")
    r = two_point_covariance(cfg["w"], n=cfg["n"])
    rep = _report(cfg, h, r.g, None, None, "none (exact evaluation)", None,
                  {"w": r.w, "g": r.g, "covariance": r.covariance, "variance": r.variance,
                   "max_condition": r.max_condition, "symmetry_defect": r.symmetry_defect,
                   "large_w_form": 2 * r.variance - 2 / r.w ** 2, "small_w_form": 2 * r.w - 2 * r.w ** 2})
    write_json(path, rep)
    out = os.path.join(cfg["out"], f"two-point-{h}.json")
    write_json(out, rep)
    return None, [out]


def run_simulate_asep(cfg, h):
    from .asep import AsepRates, simulate_ensemble
    sites = np.array(_ints(cfg["sites"]))
    H, ev = simulate_ensemble(cfg["init"], AsepRates(cfg["p"], cfg["q"]), [cfg["t"]], sites,
                              cfg["replicas"], cfg["seed"], rho=cfg["rho"])
    H = H[:, 0, :]
    cols = {"replica": np.arange(H.shape[0])}
    for k, j in enumerate(sites):
        cols[f"h[site {j}]"] = H[:, k]
    csv = os.path.join(cfg["out"], f"asep-{h}.csv")
    write_csv(csv, cols, {"units": "h canonical lattice height; sites in lattice units", "config_hash": h,
                          "t": cfg["t"], "seed": cfg["seed"]})
    rate = H / cfg["t"]
    est = rate.mean(axis=0)
    se = rate.std(axis=0, ddof=1) / math.sqrt(H.shape[0])
    rep = _report(cfg, h, est.tolist(), se.tolist(), int(H.shape[0]), "none (ensemble summary)", None,
                  {"sites": sites, "height_mean": H.mean(axis=0), "height_var": H.var(axis=0, ddof=1),
                   "events_mean": float(np.mean(ev)), "estimate_is": "h(j, t)/t"})
    js = os.path.join(cfg["out"], f"asep-{h}.json")
    write_json(js, rep)
    return None, [csv, js]


def run_tau_moment(cfg, h):
    from .asep import AsepRates, tau_moment_contour, tau_moment_mc
    tau = cfg["tau"]
    rates = AsepRates(tau / (1 + tau), 1 / (1 + tau))
    sites = _ints(cfg["sites"])
    exact, info = tau_moment_contour(cfg["N"], sites, cfg["t"], rates)
    est, se = tau_moment_mc(cfg["N"], sites, cfg["t"], rates, cfg["replicas"], cfg["seed"])
    ok = bool(abs(est - exact) <= 3 * se)
    rep = _report(cfg, h, est, se, cfg["replicas"], "|MC - contour| <= 3 SE", ok,
                  {"contour": exact, "contour_info": {k: v for k, v in info.items() if np.isscalar(v)},
                   "p": rates.p, "q": rates.q})
    js = os.path.join(cfg["out"], f"tau-moment-{h}.json")
    write_json(js, rep)
    return ok, [js]


def run_simulate_polymer(cfg, h):
    from .polymer import fluctuation_exponent
    N = _ints(cfg["N_ladder"])
    r = fluctuation_exponent(cfg["beta"], cfg["dist"], N, cfg["replicas"], cfg["seed"])
    csv = os.path.join(cfg["out"], f"polymer-{h}.csv")
    write_csv(csv, {"N[steps]": r.N, "var[log Z]": r.variance, "var_se": r.variance_se},
              {"units": "N polymer length; variance of log Z(N, 0)", "config_hash": h, "beta": cfg["beta"],
               "dist": cfg["dist"], "seed": cfg["seed"]})
    if cfg["beta"] == 0:
        ok, tol = bool(np.all(r.variance == 0)), "variance exactly zero at beta = 0"
    else:
        ok, tol = bool(abs(r.slope - 2 / 3) <= 0.1), "|slope - 2/3| <= 0.1"
    rep = _report(cfg, h, r.slope, r.slope_se, cfg["replicas"], tol, ok,
                  {"N": r.N, "variance": r.variance, "variance_se": r.variance_se, "flagged": r.flagged})
    js = os.path.join(cfg["out"], f"polymer-{h}.json")
    write_json(js, rep)
    return ok, [csv, js]


def run_simulate_she(cfg, h):
    from . import she
    t, dx, R, seed = cfg["t"], cfg["dx"], cfg["replicas"], cfg["seed"]
    if cfg["check"] == "crossover":
        r = she.crossover_cross_validation(t, replicas=R, seed=seed, dx=dx)
        d = r.details
        ok = r.passed
        rep = _report(cfg, h, d["estimate"], d["se"], r.n_samples, r.tolerance, ok,
                      {"s": d["s"], "determinant": d["determinant"], "z": d["z"], "pass_per_s": d["pass"],
                       "gamma_t": d["gamma_t"]})
    elif cfg["check"] == "moments":
        from .replica import moment_via_strings
        Z, _ = she.sample_sharp_wedge(t, dx, R, seed)
        Z = Z[:, 0, 0]
        est, se, exact, rel = [], [], [], []
        for N in (1, 2, 3):
            v = Z ** N
            est.append(float(v.mean()))
            se.append(float(v.std(ddof=1) / math.sqrt(v.size)))
            exact.append(moment_via_strings(N, min(t, 1.5)))
            rel.append(est[-1] / exact[-1] - 1)
        # <Z^2> uses Z as control variate against the exact first moment
        m2 = she.second_moment_estimate(Z, t)
        est[1], se[1] = m2["cv"], m2["cv_se"]
        rel[1] = est[1] / exact[1] - 1
        ok = bool(abs(rel[1]) <= 0.05)
        rep = _report(cfg, h, est, se, R, "|<Z^2>_MC / <Z^2>_strings - 1| <= 0.05", ok,
                      {"N": [1, 2, 3], "strings": exact, "relative_error": rel,
                       "second_moment_plain": m2["plain"], "second_moment_plain_se": m2["plain_se"],
                       "control_correlation": m2["rho"]})
    else:
        r = she.brownian_invariance_check(cfg["theta"], t, R, seed, dx=dx)
        v = r.values
        ok = r.passed
        rep = _report(cfg, h, v["slope"], None, R, r.tolerance, ok,
                      {"x": v["x"], "variance": v["variance"], "variance_se": v["variance_se"],
                       "slope_with_intercept": v["slope_with_intercept"], "intercept": v["intercept"]})
    js = os.path.join(cfg["out"], f"she-{cfg['check']}-{h}.json")
    write_json(js, rep)
    return ok, [js]


def run_compare(cfg, h):
    from .distributions import DistributionTable
    from .stats import compare_to_table, ecdf, ks_critical
    cols, _ = read_csv(cfg["samples"])
    name = cfg["column"] or next(iter(cols))
    if name not in cols:
        raise ConfigError(f"column {name!r} not in {cfg['samples']}")
    table = DistributionTable.from_csv(cfg["table"])
    emp = ecdf(cols[name], config_hash=h)
    tol = cfg["ks_tol"] or ks_critical(emp.count, 0.01)
    try:
        r = compare_to_table(emp, table, tol)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    rep = _report(cfg, h, r.ks, None, r.n_samples, r.tolerance, r.passed,
                  {"mean_diff": r.mean_diff, "mean_diff_se": r.mean_diff_se,
                   "var_diff": r.var_diff, "var_diff_se": r.var_diff_se})
    js = os.path.join(cfg["out"], f"compare-{h}.json")
    write_json(js, rep)
    return r.passed, [js]


_RUNNERS = {
    "tw-table": run_tw_table, "crossover": run_crossover, "two-point": run_two_point,
    "simulate-asep": run_simulate_asep, "tau-moment": run_tau_moment,
    "simulate-polymer": run_simulate_polymer, "simulate-she": run_simulate_she, "compare": run_compare,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve(argv)
    except SystemExit as e:  # argparse usage errors
        return EXIT_CONFIG if e.code else EXIT_PASS
    except (ConfigError, ValueError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    h = _hash(cfg)
    try:
        passed, paths = _RUNNERS[cfg["command"]](cfg, h)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    if passed is None:
        return EXIT_PASS
    print(("PASS" if passed else "FAIL") + f" config_hash={h}")
    return EXIT_PASS if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
