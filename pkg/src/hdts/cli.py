"""Command-line interface.

Subcommands: simulate, estimate, ci, covtest, experiment,
check-conditions.  Global flags --seed / --threads / --out.  Exit codes:
0 success, 2 validation error, 3 numerical failure, with a JSON error
body on stderr.  Results are bit-identical to in-process library calls
with the same seed, and independent of --threads.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path


from . import io
from .depmeasure import DependenceProfile, closed_form_profile, ga_condition_check
from .errors import HdtsError, NumericalError, ValidationError
from .covinf import cov_simultaneous_test
from .experiments import (ExperimentConfig, TOOL_VERSION, counterexample_demo,
                          coverage_experiment, ecdf_dump_rows, ga_distance,
                          mc_long_run_sigma, mdep_rate_check, rate_experiment)
from .gboot import simultaneous_ci
from .longrun import default_block_length, plan_blocks, sigma_tilde
from .model import InnovationLaw, Panel, ProcessSpec, simulate
from .rng import RngContract

DEFAULT_CONFIG = """\
[process]
family = linear
p = 5
alpha = 1.0
K = 200
h = 0
rho = 0.0
theta1 = 0.3
theta2 = 0.3
burn_in = 1024

[innovation]
kind = standard-gaussian
df = 8.0
tail_index = 4.0
u0 = 7.38905609893065
body = uniform

[simulate]
n = 1000

[estimate]
M = 0

[ci]
theta = 0.95
B = 2000
M = 0

[covtest]
theta = 0.95
B = 2000
M = 0

[experiment]
kind = coverage
R = 200
B = 2000
n = 500
p = 20
M = 0
theta = 0.95
n_grid = 512,1024,2048,4096
m_grid = 16,32,64,128,256
p_grid = 64,512,4096
q = 8.0
tail_index = 4.0
body = shell
n_perm = 0
"""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _known_keys() -> dict[str, set[str]]:
    ref = configparser.ConfigParser()
    ref.read_string(DEFAULT_CONFIG)
    return {s: set(ref.options(s)) for s in ref.sections()}


def _load_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cfg.read_string(DEFAULT_CONFIG)  # defaults first, file overrides
    try:
        with open(path) as f:
            cfg.read_file(f, source=str(path))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}")
    known = _known_keys()
    for section in cfg.sections():
        if section not in known:
            raise ValidationError(f"config has unknown section [{section}]")
        extra = set(cfg.options(section)) - known[section]
        if extra:
            raise ValidationError(
                f"config has unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
    return cfg


def _get(cfg, section, key, conv, what):
    try:
        return conv(cfg.get(section, key))
    except (configparser.NoSectionError, configparser.NoOptionError):
        raise ValidationError(f"config missing [{section}] {key}")
    except ValueError as exc:
        raise ValidationError(
            f"config field [{section}] {key} is not a valid {what}: {exc}")


def _int_list(text: str) -> list[int]:
    return [int(v.strip()) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v.strip()) for v in text.split(",") if v.strip()]


def build_innovation(cfg) -> InnovationLaw:
    kind = _get(cfg, "innovation", "kind", str, "string").strip()
    if kind == "standard-gaussian":
        return InnovationLaw.gaussian()
    if kind == "student-t":
        return InnovationLaw.student_t(_get(cfg, "innovation", "df", float, "float"))
    if kind == "symmetric-pareto":
        return InnovationLaw.symmetric_pareto(
            _get(cfg, "innovation", "tail_index", float, "float"),
            u0=_get(cfg, "innovation", "u0", float, "float"),
            body=_get(cfg, "innovation", "body", str, "string").strip())
    raise ValidationError(f"config field [innovation] kind: unknown kind {kind!r}")


def build_spec(cfg) -> ProcessSpec:
    return ProcessSpec(
        family=_get(cfg, "process", "family", str, "string").strip(),
        p=_get(cfg, "process", "p", int, "integer"),
        innovation=build_innovation(cfg),
        alpha=_get(cfg, "process", "alpha", float, "float"),
        K=_get(cfg, "process", "K", int, "integer"),
        h=_get(cfg, "process", "h", int, "integer"),
        rho=_get(cfg, "process", "rho", float, "float"),
        theta1=_get(cfg, "process", "theta1", float, "float"),
        theta2=_get(cfg, "process", "theta2", float, "float"),
        burn_in=_get(cfg, "process", "burn_in", int, "integer"),
    )


def spec_to_config_text(spec: ProcessSpec, n: int | None = None) -> str:
    """Config text that build_spec parses back into an equal ProcessSpec."""
    law = spec.innovation
    lines = [
        "[process]",
        f"family = {spec.family}",
        f"p = {spec.p}",
        f"alpha = {spec.alpha}",
        f"K = {spec.K}",
        f"h = {spec.h}",
        f"rho = {spec.rho}",
        f"theta1 = {spec.theta1}",
        f"theta2 = {spec.theta2}",
        f"burn_in = {spec.burn_in}",
        "",
        "[innovation]",
        f"kind = {law.kind}",
    ]
    if law.kind == "student-t":
        lines.append(f"df = {law.df}")
    elif law.kind == "symmetric-pareto":
        lines += [f"tail_index = {law.tail_index}", f"u0 = {law.u0!r}",
                  f"body = {law.body}"]
    if n is not None:
        lines += ["", "[simulate]", f"n = {n}"]
    return "\n".join(lines) + "\n"


def _opt_M(value: int) -> int | None:
    return None if value == 0 else value


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _manifest(args, command: str, config_path=None) -> io.RunManifest:
    digest = io.config_digest_of(config_path) if config_path else None
    return io.RunManifest(tool_version=TOOL_VERSION, command=command,
                          base_seed=args.seed, threads=args.threads,
                          config_digest=digest)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    spec = build_spec(cfg)
    n = _get(cfg, "simulate", "n", int, "integer")
    panel = simulate(spec, n, RngContract(args.seed))
    base = Path(args.out or "panel")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    bin_path = base.with_suffix(".bin")
    io.write_panel_csv(csv_path, panel.data)
    io.write_array_binary(bin_path, panel.data)
    man = _manifest(args, "simulate", args.config)
    man.add_output(csv_path)
    man.add_output(bin_path)
    man.write(base.parent / (base.name + ".manifest.json"))
    print(f"wrote {csv_path} and {bin_path} (n={n}, p={spec.p})")
    return 0


def cmd_estimate(args) -> int:
    data = io.read_panel_any(args.panel)
    panel = Panel.from_data(data)
    M = args.M if args.M > 0 else default_block_length(panel.n)
    plan = plan_blocks(panel.n, M)
    est = sigma_tilde(panel, plan)
    base = Path(args.out or "estimate")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.parent / (base.name + ".sigma.csv")
    bin_path = base.parent / (base.name + ".sigma.bin")
    side_path = base.parent / (base.name + ".sigma.json")
    io.write_matrix_csv(csv_path, est.sigma)
    io.write_array_binary(bin_path, est.sigma)
    io.write_json(side_path, {"kind": est.kind, "n": plan.n, "M": plan.M,
                              "w": plan.w, "unused": plan.unused})
    man = _manifest(args, "estimate")
    for pth in (csv_path, bin_path, side_path):
        man.add_output(pth)
    man.write(base.parent / (base.name + ".manifest.json"))
    print(f"wrote {csv_path} (p={est.p}, M={plan.M}, w={plan.w})")
    return 0


def cmd_ci(args) -> int:
    data = io.read_panel_any(args.panel)
    panel = Panel.from_data(data)
    report = simultaneous_ci(panel, args.theta, _opt_M(args.M), args.B,
                             RngContract(args.seed))
    base = Path(args.out or "ci")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.parent / (base.name + ".ci.csv")
    rows = [{"j": j + 1, "mu_hat": float(report.mu_hat[j]),
             "lo": float(report.lo[j]), "hi": float(report.hi[j]),
             "sigma_tilde_jj": float(report.sigma_diag[j])}
            for j in range(report.mu_hat.shape[0])]
    io.write_rows_csv(csv_path, rows, ["j", "mu_hat", "lo", "hi", "sigma_tilde_jj"])
    side_path = base.parent / (base.name + ".ci.json")
    io.write_json(side_path, report.sidecar_dict())
    man = _manifest(args, "ci")
    man.add_output(csv_path)
    man.add_output(side_path)
    man.write(base.parent / (base.name + ".manifest.json"))
    print(f"wrote {csv_path} (chi={report.chi:.6g}, M={report.M}, w={report.w})")
    return 0


def cmd_covtest(args) -> int:
    data = io.read_panel_any(args.panel)
    panel = Panel.from_data(data)
    null_gamma = io.read_matrix_csv(args.null) if args.null else None
    res = cov_simultaneous_test(panel, args.theta, _opt_M(args.M), args.B,
                                RngContract(args.seed), null_gamma=null_gamma)
    from .covinf import pair_indices
    js, ks = pair_indices(panel.p)
    rows = [{"j": int(js[a]) + 1, "k": int(ks[a]) + 1,
             "gamma_hat": float(res.gamma_hat[a]),
             "stat": float(res.pair_stats[a]),
             "threshold": float(res.threshold),
             "flag": int(res.pair_stats[a] > res.threshold)}
            for a in range(res.gamma_hat.shape[0])]
    base = Path(args.out or "covtest")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.parent / (base.name + ".covtest.csv")
    io.write_rows_csv(csv_path, rows,
                      ["j", "k", "gamma_hat", "stat", "threshold", "flag"])
    side_path = base.parent / (base.name + ".covtest.json")
    io.write_json(side_path, {"theta": res.theta, "statistic": res.statistic,
                              "threshold": res.threshold, "reject": res.reject,
                              "n": res.n, "M": res.M, "w": res.w, "B": res.B})
    man = _manifest(args, "covtest")
    man.add_output(csv_path)
    man.add_output(side_path)
    man.write(base.parent / (base.name + ".manifest.json"))
    print(f"wrote {csv_path} (stat={res.statistic:.6g}, "
          f"threshold={res.threshold:.6g}, reject={res.reject})")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config)
    spec = build_spec(cfg)
    kind = _get(cfg, "experiment", "kind", str, "string").strip()
    R = _get(cfg, "experiment", "R", int, "integer")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RngContract(args.seed)
    known = {"coverage", "ga", "rate", "mdep", "counterexample"}
    if kind not in known:
        raise ValidationError(
            f"config field [experiment] kind: unknown kind {kind!r}; "
            f"expected one of {sorted(known)}")

    runtimes: list[float] = []
    meta: dict = {"kind": kind, "family": spec.family}
    ecdf_cells: list[tuple[str, list[dict]]] = []
    if kind == "coverage":
        config = ExperimentConfig(
            spec=spec, kind="coverage", R=R,
            B=_get(cfg, "experiment", "B", int, "integer"),
            base_seed=args.seed,
            n_list=_get(cfg, "experiment", "n", _int_list, "integer list"),
            p_list=_get(cfg, "experiment", "p", _int_list, "integer list"),
            M_list=[_opt_M(m) for m in
                    _get(cfg, "experiment", "M", _int_list, "integer list")],
            theta_list=_get(cfg, "experiment", "theta", _float_list, "float list"),
            threads=args.threads)
        report = coverage_experiment(config)
        rows, runtimes = report.rows, report.runtimes
    elif kind == "ga":
        n = _get(cfg, "experiment", "n", _int_list, "integer list")[0]
        n_perm = _get(cfg, "experiment", "n_perm", int, "integer")
        sigma = None
        if spec.family not in ("iid", "linear"):
            sigma = mc_long_run_sigma(spec, rng=rng.derive("sigma-oracle"))
            meta["sigma_oracle"] = "approximate-batched-mean"
        res = ga_distance(spec, n, R, rng, sigma=sigma,
                          n_perm=n_perm, threads=args.threads)
        rows = [{"n": res.n, "p": res.p, "R": res.R, "ks": res.ks,
                 "pvalue": float("nan") if res.pvalue is None else res.pvalue}]
        ecdf_cells.append((f"ga_n{res.n}_p{res.p}",
                           ecdf_dump_rows(res.sample_stats, res.gauss_stats)))
    elif kind == "rate":
        res = rate_experiment(
            spec, _get(cfg, "experiment", "n_grid", _int_list, "integer list"),
            R, rng, q=_get(cfg, "experiment", "q", float, "float"),
            threads=args.threads)
        rows = res.rows
        meta["empirical_slope"] = res.empirical_slope
        meta["theoretical_slope"] = res.theoretical_slope
    elif kind == "mdep":
        res = mdep_rate_check(
            spec, _get(cfg, "experiment", "q", float, "float"), spec.alpha,
            _get(cfg, "experiment", "m_grid", _int_list, "integer list"),
            R, rng, n=_get(cfg, "experiment", "n", _int_list, "integer list")[0],
            threads=args.threads)
        rows = res.rows
        meta["slope"] = res.slope
        meta["target_slope"] = res.target_slope
    else:
        res = counterexample_demo(
            _get(cfg, "experiment", "tail_index", float, "float"),
            _get(cfg, "experiment", "n", _int_list, "integer list")[0],
            _get(cfg, "experiment", "p_grid", _int_list, "integer list"),
            R, rng, body=_get(cfg, "experiment", "body", str, "string").strip(),
            threads=args.threads)
        rows = res.rows
        if args.dump_ecdf:
            for p_val, (samp, gauss) in res.samples.items():
                ecdf_cells.append((f"ctrex_p{p_val}", ecdf_dump_rows(samp, gauss)))

    csv_path = out_dir / "report.csv"
    io.write_rows_csv(csv_path, rows)
    man = _manifest(args, f"experiment:{kind}", args.config)
    man.add_output(csv_path)
    if args.dump_ecdf:
        for name, cell_rows in ecdf_cells:
            pth = out_dir / f"{name}.ecdf.csv"
            io.write_rows_csv(pth, cell_rows, ["u", "ecdf_sample", "ecdf_gauss"])
            man.add_output(pth)
    io.write_json(out_dir / "report.meta.json",
                  {"meta": meta, "cell_runtimes_sec": runtimes})
    man.write(out_dir / "manifest.json")
    print(f"wrote {csv_path} ({len(rows)} cells)")
    return 0


def cmd_check_conditions(args) -> int:
    if args.profile:
        profile = DependenceProfile.from_json_dict(io.read_json(args.profile))
    elif args.config:
        cfg = _load_config(args.config)
        spec = build_spec(cfg)
        nu = args.nu if args.sub_exponential else None
        profile = closed_form_profile(spec, args.q, args.alpha, nu=nu)
    else:
        raise ValidationError("check-conditions needs --profile or --config")
    if args.sub_exponential and args.nu is None:
        raise ValidationError("--sub-exponential requires --nu")
    nu = args.nu if args.sub_exponential else None
    report = ga_condition_check(profile, args.n, p=args.p, nu=nu)
    text = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    import os
    ap = argparse.ArgumentParser(
        prog="hdts",
        description="Simultaneous inference for high-dimensional stationary time series")
    ap.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                    help="worker threads (default: all cores); results are "
                         "independent of this")
    ap.add_argument("--out", dest="out_global", default=None,
                    help="output base path (subcommand --out takes precedence)")
    ap.add_argument("--print-defaults", action="store_true",
                    help="print the default config and exit")
    sub = ap.add_subparsers(dest="command")

    sp = sub.add_parser("simulate", help="simulate a panel from a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None, help="output base path (no suffix)")

    sp = sub.add_parser("estimate", help="batched-mean long-run covariance")
    sp.add_argument("--panel", required=True)
    sp.add_argument("--M", type=int, default=0, help="block length; 0 = floor(n^(1/3))")
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("ci", help="simultaneous confidence intervals")
    sp.add_argument("--panel", required=True)
    sp.add_argument("--theta", type=float, default=0.95)
    sp.add_argument("--M", type=int, default=0)
    sp.add_argument("--B", type=int, default=2000)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("covtest", help="simultaneous covariance test")
    sp.add_argument("--panel", required=True)
    sp.add_argument("--theta", type=float, default=0.95)
    sp.add_argument("--M", type=int, default=0)
    sp.add_argument("--B", type=int, default=2000)
    sp.add_argument("--null", default=None, help="CSV with the null covariance matrix")
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--dump-ecdf", action="store_true")

    sp = sub.add_parser("check-conditions", help="evaluate approximation conditions")
    sp.add_argument("--profile", default=None, help="profile JSON path")
    sp.add_argument("--config", default=None, help="spec config (closed-form profile)")
    sp.add_argument("--q", type=float, default=8.0)
    sp.add_argument("--alpha", type=float, default=1.5)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--sub-exponential", action="store_true")
    sp.add_argument("--nu", type=float, default=None)
    sp.add_argument("--out", default=None)
    return ap


_DISPATCH = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "ci": cmd_ci,
    "covtest": cmd_covtest,
    "experiment": cmd_experiment,
    "check-conditions": cmd_check_conditions,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.print_defaults:
        print(DEFAULT_CONFIG, end="")
        return 0
    if not args.command:
        ap.print_help()
        return 0
    if getattr(args, "out", None) is None and args.out_global is not None:
        args.out = args.out_global
    try:
        return _DISPATCH[args.command](args)
    except NumericalError as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "type": "numerical"}) + "\n")
        return 3
    except (ValidationError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "type": "validation"}) + "\n")
        return 2
    except HdtsError as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "type": "error"}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
