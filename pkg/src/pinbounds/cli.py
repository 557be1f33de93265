"""Command-line front end: sweeps over model parameters with CSV/JSON reports.

Exit codes: 0 ok, 1 configuration error, 2 numerical indeterminacy,
3 invariant violation.  The configuration grammar is documented in
``docs/config.md``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import bounds, homog, kernels, mc
from .disorder import DisorderLaw
from .errors import (
    ConfigError,
    DomainError,
    IndeterminateError,
    NumericalFailure,
    PinboundsError,
    PreconditionError,
    UnrepresentableKernelError,
)
from .kernels import InterArrivalLaw
from .params import ModelParams

EXIT_OK, EXIT_CONFIG, EXIT_INDETERMINATE, EXIT_INVARIANT = 0, 1, 2, 3

CLOSED, SOLVER, MC = "closed-form", "solver", "mc"


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    law: InterArrivalLaw
    dis: DisorderLaw
    dis2: DisorderLaw
    grids: dict
    gammas: list | None = None
    mode: str = "direct_numeric"
    mc_n: list = field(default_factory=list)
    mc_samples: int = 0
    seed: int | None = None
    reduced_p_mc: bool = False
    out_dir: str = "out"
    formats: tuple = ("csv",)
    raw: dict = field(default_factory=dict)


def _num(table, key, path, default=None, lo=None, strict_lo=False):
    v = table.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    v = float(v)
    if lo is not None and (v < lo or (strict_lo and v == lo)):
        raise ConfigError(f"{path}.{key}: must be {'>' if strict_lo else '>='} {lo}, got {v}")
    return v


def _grid(value, path):
    """A grid is a number, a list of numbers, or ``{start, stop, steps}``."""
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, list or range table")
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list):
        if not value or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{path}: list must be nonempty and numeric")
        return [float(v) for v in value]
    if isinstance(value, dict):
        try:
            start, stop, steps = float(value["start"]), float(value["stop"]), int(value["steps"])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{path}: range tables need numeric start, stop, steps ({e})") from None
        if steps < 1:
            raise ConfigError(f"{path}.steps: must be >= 1")
        return [float(v) for v in np.linspace(start, stop, steps)] if steps > 1 else [start]
    raise ConfigError(f"{path}: expected a number, list or range table")


def _kernel(t):
    path = "kernel"
    family = t.get("family")
    n_exact = int(t.get("n_exact", kernels.N_EXACT_DEFAULT))
    damping = _num(t, "damping", path, 0.0, lo=0.0)
    try:
        if family == "srw_return":
            law = InterArrivalLaw.srw_return(n_exact)
        elif family == "wetting_half_srw":
            law = InterArrivalLaw.wetting_half_srw(n_exact)
        elif family in ("power_law", "log_power_law"):
            alpha = _num(t, "alpha", path, lo=0.0, strict_lo=True)
            if alpha is None:
                raise ConfigError(f"{path}.alpha: required for {family}")
            amp = _num(t, "amplitude", path, lo=0.0, strict_lo=True)
            mass = _num(t, "mass", path, lo=0.0, strict_lo=True)
            if (amp is None) == (mass is None):
                raise ConfigError(f"{path}: give exactly one of amplitude, mass")
            if family == "power_law":
                law = InterArrivalLaw.power_law(alpha, amp, mass, n_exact)
            else:
                kappa = _num(t, "log_exponent", path, lo=0.0)
                law = InterArrivalLaw.log_power_law(alpha, kappa, amp, mass, n_exact)
        else:
            raise ConfigError(f"{path}.family: unknown family {family!r}")
    except PinboundsError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path}: {e}") from None
    return kernels.dampen(law, damping) if damping else law


def _disorder(name, t, path):
    k_exact = int(t.get("k_exact", 10_000))
    if name == "gaussian":
        return DisorderLaw.gaussian()
    if name == "binary":
        return DisorderLaw.binary(k_exact)
    raise ConfigError(f"{path}: unknown disorder family {name!r} (gaussian | binary)")


def load_config(path, overrides=None):
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return parse_config(raw, overrides or {})


def parse_config(raw, overrides=None):
    overrides = overrides or {}
    known = {"kernel", "disorder", "grid", "bounds", "mc", "reduced_wetting", "output"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown top-level table(s): {sorted(extra)}")
    if "kernel" not in raw:
        raise ConfigError("kernel: table is required")
    for name in known & set(raw):
        if not isinstance(raw[name], dict):
            raise ConfigError(f"{name}: expected a table, got {type(raw[name]).__name__}")
    law = _kernel(raw["kernel"])
    d = raw.get("disorder", {})
    dis = _disorder(d.get("omega", "gaussian"), d, "disorder.omega")
    dis2 = _disorder(d.get("omega_tilde", "gaussian"), d, "disorder.omega_tilde")
    g = raw.get("grid", {})
    grids = {k: _grid(g[k], f"grid.{k}") for k in ("beta", "h", "lam", "h_tilde") if k in g}
    for k in ("beta", "lam", "h_tilde"):
        if any(v < 0 for v in grids.get(k, [])):
            raise ConfigError(f"grid.{k}: values must be >= 0")
    b = raw.get("bounds", {})
    gammas = _grid(b["gamma"], "bounds.gamma") if "gamma" in b else None
    if gammas and any(not 0 < x <= 1 for x in gammas):
        raise ConfigError("bounds.gamma: values must lie in (0, 1]")
    mode = b.get("mode", "direct_numeric")
    if mode not in ("closed_form", "direct_numeric"):
        raise ConfigError(f"bounds.mode: expected closed_form | direct_numeric, got {mode!r}")
    m = raw.get("mc", {})
    mc_n = [int(x) for x in _grid(m["n"], "mc.n")] if "n" in m else []
    seed = overrides.get("seed", m.get("seed"))
    samples = int(m.get("samples", 0))
    if mc_n and (seed is None or samples < 2):
        raise ConfigError("mc: seed and samples >= 2 are required when mc.n is given")
    rw = raw.get("reduced_wetting", {})
    o = raw.get("output", {})
    formats = overrides.get("format") or o.get("formats", ["csv"])
    if isinstance(formats, str):
        formats = [formats]
    if any(f not in ("csv", "json") for f in formats):
        raise ConfigError(f"output.formats: csv | json, got {formats}")
    return RunConfig(
        law, dis, dis2, grids, gammas, mode, mc_n, samples,
        None if seed is None else int(seed), bool(rw.get("mc", False)),
        overrides.get("out") or o.get("dir", "out"), tuple(formats), raw,
    )


def _require(cfg, *names):
    for n in names:
        if n not in cfg.grids:
            raise ConfigError(f"grid.{n}: required by this command")


# --------------------------------------------------------------------------
# reports


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


class Row(dict):
    """Ordered report row; ``num`` adds a value with its provenance and error cells."""

    def num(self, name, value, src, err=None):
        self[name] = value
        self[f"{name}_src"] = src
        if src != CLOSED:
            self[f"{name}_err"] = err
        return self


def write_report(rows, name, cfg, plot_cols=None):
    os.makedirs(cfg.out_dir, exist_ok=True)
    cols = list(rows[0].keys()) if rows else []
    written = []
    if "csv" in cfg.formats:
        p = os.path.join(cfg.out_dir, f"{name}.csv")
        with open(p, "w", newline="\n") as f:
            f.write(",".join(cols) + "\n")
            for r in rows:
                f.write(",".join(fmt(r.get(c)) for c in cols) + "\n")
        written.append(p)
    if "json" in cfg.formats:
        p = os.path.join(cfg.out_dir, f"{name}.json")
        with open(p, "w", newline="\n") as f:
            json.dump({"config": cfg.raw, "rows": [{k: _jsonable(v) for k, v in r.items()} for r in rows]},
                      f, indent=1, sort_keys=False)
            f.write("\n")
        written.append(p)
    if plot_cols:
        p = os.path.join(cfg.out_dir, f"{name}.dat")
        with open(p, "w", newline="\n") as f:
            f.write("# " + " ".join(plot_cols) + "\n")
            for r in rows:
                f.write(" ".join(fmt(r.get(c)) if r.get(c) is not None else "NaN" for c in plot_cols) + "\n")
        written.append(p)
    return written


def _jsonable(v):
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _pool_map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------
# commands


def cmd_pin_bounds(cfg, threads=1):
    _require(cfg, "beta")
    law, dis = cfg.law, cfg.dis

    def row(beta):
        r = Row(beta=beta)
        r.num("hc_annealed", bounds.annealed_hc(law, dis, beta), CLOSED)
        hat, g = bounds.pinning_hat_hc(law, dis, beta)
        c = kernels.c_of_gamma(law, g)
        r.num("hc_frac", hat, SOLVER, c.error / c.value / g)
        r.num("hc_frac_gamma", g, SOLVER, 1e-9)
        imp = bounds.improvement_condition(law, dis, beta)
        r.num("improve_derivative", imp.derivative, SOLVER, imp.error)
        r["improves"] = imp.improves
        r.num("beta_star", imp.beta_star, SOLVER, imp.error)
        rs = bounds.rare_stretch_hc_upper(law, dis, beta)
        r.num("hc_rare_stretch", rs, SOLVER, 1e-10)
        return r

    rows = _pool_map(row, cfg.grids["beta"], threads)
    files = write_report(rows, "pin_bounds", cfg, ["beta", "hc_annealed", "hc_frac", "hc_rare_stretch"])
    violations = [r["beta"] for r in rows if r["hc_annealed"] > r["hc_frac"] + 1e-12
                  or (r["hc_rare_stretch"] is not None and r["hc_frac"] > r["hc_rare_stretch"] + 1e-9)]
    return rows, files, violations


def cmd_copoly_bounds(cfg, threads=1):
    _require(cfg, "lam")
    law, dis2 = cfg.law, cfg.dis2
    g0 = 1.0 / (1.0 + law.alpha)
    try:
        gc = bounds.copolymer_gamma_c(law)
    except PinboundsError:
        gc = None
    try:
        gbar = bounds.copolymer_gamma_bar(law)
    except PinboundsError:
        gbar = None
    mode = bounds.Mode(cfg.mode)

    def row(lam):
        r = Row(lam=lam)
        r.num("monthus", bounds.monthus_line(dis2, g0, lam), CLOSED)
        r.num("annealed_line", bounds.monthus_line(dis2, 1.0, lam), CLOSED)
        r.num("gamma_c", gc.value if gc else None, SOLVER,
              (gc.interval[1] - gc.interval[0]) / 2 if gc else None)
        r.num("gamma_bar", gbar.value if gbar else None, SOLVER,
              (gbar.interval[1] - gbar.interval[0]) / 2 if gbar else None)
        r.num("gamma_bar_line", bounds.monthus_line(dis2, gbar.interval[1], lam) if gbar else None, CLOSED)
        cf = bounds.copolymer_upper_bound(law, dis2, lam, bounds.Mode.CLOSED_FORM, cfg.gammas)
        r["case"] = cf.kind.value
        r.num("bound_closed_form", cf.value, CLOSED)
        r["bound_closed_form_gamma"] = cf.gamma
        r["bound_closed_form_verified"] = cf.verified
        if mode is bounds.Mode.DIRECT_NUMERIC:
            dn = bounds.copolymer_upper_bound(law, dis2, lam, mode, cfg.gammas)
            r.num("bound_direct", dn.value, SOLVER, 1e-10)
            r["bound_direct_gamma"] = dn.gamma
            r["bound_direct_verified"] = dn.verified
            r["bound_direct_residual"] = dn.residual
        return r

    rows = _pool_map(row, cfg.grids["lam"], threads)
    files = write_report(rows, "copoly_bounds", cfg,
                         ["lam", "monthus", "annealed_line", "bound_closed_form"]
                         + (["bound_direct"] if mode is bounds.Mode.DIRECT_NUMERIC else []))
    violations = []
    for r in rows:
        b = r.get("bound_direct", r["bound_closed_form"])
        if not r["monthus"] - 1e-12 <= b <= r["annealed_line"] + 1e-12:
            violations.append(r["lam"])
    return rows, files, violations


def cmd_reduced_wetting(cfg, threads=1):
    _require(cfg, "beta")
    law = cfg.law
    g0 = 1.0 / (1.0 + law.alpha)
    gammas = cfg.gammas or [g0 + 0.01 * k for k in range(1, int((1.0 - g0) / 0.01) + 1) if g0 + 0.01 * k < 1.0]

    def row(beta):
        slope, g, big_c, thr = bounds.best_reduced_wetting_slope(law, beta, gammas)
        r = Row(beta=beta)
        r.num("p_star", thr.p_star, CLOSED)
        r.num("slope", slope, CLOSED)
        r["gamma"] = g
        r["C"] = big_c
        r.num("C_prime", thr.c_prime, SOLVER, 0.0)
        r["rising_at_horizon"] = thr.rising_at_horizon
        if cfg.reduced_p_mc:
            if not cfg.mc_n:
                raise ConfigError("reduced_wetting.mc: needs mc.n, mc.samples and mc.seed")
            pc = mc.reduced_wetting_pc(law, beta, cfg.mc_n[0], cfg.mc_samples, cfg.seed)
            r.num("p_hat", pc.p_hat, MC, (pc.interval[1] - pc.interval[0]) / 2)
            r.num("slope_mc", pc.slope, MC, None)
            r["p_localized_min"] = pc.interval[1]
        return r

    rows = _pool_map(row, cfg.grids["beta"], threads)
    files = write_report(rows, "reduced_wetting", cfg, ["beta", "slope"])
    # a sample size seen localized below the certified threshold contradicts the certificate
    violations = [r["beta"] for r in rows if "p_hat" in r and r["p_localized_min"] < r["p_star"]]
    return rows, files, violations


def _points(cfg):
    keys = ("beta", "h", "lam", "h_tilde")
    axes = [cfg.grids.get(k, [0.0]) for k in keys]
    return [ModelParams(*p) for p in np.array(np.meshgrid(*axes, indexing="ij")).reshape(4, -1).T]


def cmd_mc_free_energy(cfg, threads=1):
    if not cfg.mc_n:
        raise ConfigError("mc.n: required by this command")
    law, dis, dis2 = cfg.law, cfg.dis, cfg.dis2
    gammas = cfg.gammas or [1.0 / (1.0 + law.alpha) + 0.1 * k for k in range(1, 4)] + [1.0]
    rows, audit = [], []
    for n in cfg.mc_n:
        for p in _points(cfg):
            lz = mc.sample_log_z(law, dis, dis2, p, n, cfg.mc_samples, cfg.seed, threads)
            est = mc._estimate(lz / n, n, mc.Quantity.FREE_ENERGY_DENSITY)
            r = Row(n=n, beta=p.beta, h=p.h, lam=p.lam, h_tilde=p.h_tilde)
            r.num("F_mc", est.mean, MC, est.stderr)
            ann = homog.annealed_free_energy(law, dis, dis2, p, strict=False)
            r.num("F_annealed", ann.value, SOLVER, ann.value - ann.value_lower)
            best = None
            for g in gammas:
                if not kernels.c_of_gamma(law, g).finite:
                    continue
                fb = bounds.frac_moment_upper_bound(law, dis, dis2, p, g)
                if best is None or fb.value < best[0].value:
                    best = (fb, g)
                fm = mc.frac_moment_mc(law, dis, dis2, p, g, n, cfg.mc_samples, cfg.seed, log_z=lz)
                audit.append(
                    Row(n=n, beta=p.beta, h=p.h, lam=p.lam, h_tilde=p.h_tilde, gamma=g)
                    .num("moment_over_bound", fm.mean, MC, fm.stderr)
                )
                audit[-1]["log_bound"] = fm.log_scale
                audit[-1]["heavy_tail"] = fm.heavy_tail
                audit[-1]["ok"] = bool(fm.mean <= 1.0 + 3.0 * fm.stderr + mc.ROUNDING_SLACK)
            r.num("F_frac", best[0].value if best else None, SOLVER,
                  best[0].value - best[0].value_lower if best else None)
            r["frac_gamma"] = best[1] if best else None
            r["ok_annealed"] = bool(est.mean <= ann.value + 3.0 * est.stderr)
            r["ok_frac"] = bool(best is None or est.mean <= best[0].value + 3.0 * est.stderr)
            if p.beta == 0 and p.lam == 0:
                ref = homog.homogeneous_free_energy(law, p.h).value
                r.num("F_homogeneous", ref, SOLVER, 1e-12)
                r["ok_homogeneous"] = bool(abs(est.mean - ref) <= mc.finite_size_allowance(n) + 3 * est.stderr)
            else:
                r.num("F_homogeneous", None, SOLVER, None)
                r["ok_homogeneous"] = None
            rows.append(r)
    files = write_report(rows, "mc_free_energy", cfg, ["beta", "h", "lam", "h_tilde", "F_mc", "F_annealed", "F_frac"])
    files += write_report(audit, "mc_frac_audit", cfg)
    violations = [i for i, r in enumerate(rows) if not (r["ok_annealed"] and r["ok_frac"] and r["ok_homogeneous"] is not False)]
    violations += [f"audit{i}" for i, r in enumerate(audit) if not r["ok"]]
    return rows, files, violations


def cmd_audit(cfg, threads=1):
    """Quick invariant suite on the configured kernel and disorder."""
    law, dis, dis2 = cfg.law, cfg.dis, cfg.dis2
    rows = []

    def check(name, ok, detail):
        rows.append(Row(check=name, ok=bool(ok), detail=detail))

    c1 = kernels.c_of_gamma(law, 1.0)
    check("mass_at_most_one", c1.value - c1.error <= 1.0, c1.value)
    tk = kernels.normalized(law)
    total = float(np.exp(tk.log_table).sum()) + tk.tail().value
    check("tilted_kernel_normalized", abs(total - 1.0) <= 1e-6, total)
    g0 = 1.0 / (1.0 + law.alpha)
    gs = [g for g in np.linspace(g0 + 0.02, 1.0, 6) if kernels.c_of_gamma(law, g).finite]
    cs = [kernels.c_of_gamma(law, g).value for g in gs]
    check("c_decreasing", all(a > b for a, b in zip(cs, cs[1:])), len(cs))
    rng = np.random.default_rng(cfg.seed or 0)
    binary = DisorderLaw.binary()
    worst = 0.0
    for _ in range(10):
        p = ModelParams(rng.uniform(0, 2), rng.uniform(-1, 1), rng.uniform(0, 1), rng.uniform(0, 1))
        om, ot = binary_draw(rng, 10), binary_draw(rng, 10)
        a = mc.quenched_log_z(law, binary, binary, p, om, ot)
        b = mc.brute_force_log_z(law, p, om, ot)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    check("dp_equals_enumeration", worst <= 1e-12, worst)
    slack = math.inf
    for _ in range(10):
        p = ModelParams(rng.uniform(0, 2), rng.uniform(-1, 1))
        g = rng.uniform(g0 + 0.01, 1.0)
        if not kernels.c_of_gamma(law, g).finite:
            continue
        e = mc.exact_log_frac_moment(law, binary, binary, p, g, 10)
        bn = mc.log_fractional_bound(law, binary, binary, p, g, 10)
        slack = min(slack, bn - e)
    check("frac_moment_inequality", slack >= -1e-12, slack)
    res = homog.homogeneous_free_energy(law, homog.homogeneous_critical_point(law) + 0.1)
    check("root_residual", res.root_residual <= 1e-10, res.root_residual)
    files = write_report(rows, "audit", cfg)
    return rows, files, [r["check"] for r in rows if not r["ok"]]


def binary_draw(rng, n):
    return 2.0 * rng.integers(0, 2, n) - 1.0


COMMANDS = {
    "pin-bounds": cmd_pin_bounds,
    "copoly-bounds": cmd_copoly_bounds,
    "reduced-wetting": cmd_reduced_wetting,
    "mc-free-energy": cmd_mc_free_energy,
    "audit": cmd_audit,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="pinbounds", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="Monte Carlo seed (overrides mc.seed)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"))
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in (("out", args.out), ("seed", args.seed), ("format", args.format)) if v is not None}
    try:
        cfg = load_config(args.config, overrides)
        rows, files, violations = COMMANDS[args.command](cfg, max(1, args.threads))
    except (ConfigError, DomainError, PreconditionError, UnrepresentableKernelError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IndeterminateError as e:
        print(f"indeterminate: {e} interval={e.interval}", file=sys.stderr)
        return EXIT_INDETERMINATE
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_INDETERMINATE
    for f in files:
        print(f)
    if violations:
        print(f"invariant violations: {violations}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
