"""Command-line entry point.

One executable with subcommands ``table | resolvent | hawkes | sve |
riccati | laplace | study``.  Every flag has a config-file equivalent
(flat ``key=value`` lines); precedence is flag > file > default.  Report
paths write delimited CSV/JSON artifacts plus rendered PNG figures.

Exit codes: 0 success, 1 validation error (single-line diagnostic),
2 runtime failure (diagnostic JSON written next to the outputs).
"""
from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import config as configmod
from . import harness, hawkes, plotting, riccati, specfun, sve, volterra
from .grids import UniformGrid
from .sve import LimitParams, SchemeConfig

VERSION = f"spikevol {harness.CODE_VERSION} (config schema 1)"

_MODEL_DEFAULTS = {
    "alpha": "0.75", "a": "0.5", "b": "1.0", "v0": "1.0",
    "zeta_m_star": "1.0", "lambda_m_star": "1.0",
    "zeta_l_star": "0.0", "lambda_l_star": "0.0",
    "test_mode": "false",
    "t": "1.0", "n_steps": "1024", "paths": "1000",
    "y_min": "1e-3", "tol": "1e-10",
}


class _CliError(Exception):
    pass


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out-dir", dest="out_dir",
                        help="output directory (default: $SPIKEVOL_OUT or cwd)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads; results are identical for any value")
    for flag, dest in (
        ("--alpha", "alpha"), ("--a", "a"), ("--b", "b"), ("--v0", "v0"),
        ("--zeta-m", "zeta_m_star"), ("--lambda-m", "lambda_m_star"),
        ("--zeta-l", "zeta_l_star"), ("--lambda-l", "lambda_l_star"),
        ("--t", "t"), ("--y-min", "y_min"), ("--tol", "tol"),
    ):
        parser.add_argument(flag, dest=dest, type=float, default=None)
    parser.add_argument("--n-steps", dest="n_steps", type=int, default=None)
    parser.add_argument("--paths", dest="paths", type=int, default=None)
    parser.add_argument("--test-mode", dest="test_mode", action="store_const",
                        const="true", default=None)


def _resolve(args) -> dict:
    file_cfg = configmod.load_config(args.config) if args.config else None
    flags = {k: v for k, v in vars(args).items()
             if k in _MODEL_DEFAULTS or k in ("seed", "out_dir", "kind", "lam",
                                              "g", "equation", "n", "gamma",
                                              "lam_grid", "n_ladder",
                                              "steps_ladder", "t_ladder", "g_grid")}
    flags = {k: (v if isinstance(v, str) or v is None else repr(v) if isinstance(v, float) else str(v))
             for k, v in flags.items()}
    cfg = configmod.merge(_MODEL_DEFAULTS, file_cfg, flags)
    if "out_dir" not in cfg or cfg["out_dir"] is None:
        cfg["out_dir"] = os.environ.get("SPIKEVOL_OUT", ".")
    return cfg


def _params(cfg: dict) -> LimitParams:
    return LimitParams(
        alpha=float(cfg["alpha"]), a=float(cfg["a"]), b=float(cfg["b"]),
        V0=float(cfg["v0"]),
        zeta_m_star=float(cfg["zeta_m_star"]),
        lambda_m_star=float(cfg["lambda_m_star"]),
        zeta_l_star=float(cfg["zeta_l_star"]),
        lambda_l_star=float(cfg["lambda_l_star"]),
        test_mode=str(cfg.get("test_mode", "false")).lower() in ("1", "true", "yes"),
    )


def _seed(cfg: dict, required: bool) -> int:
    if cfg.get("seed") is not None:
        return int(cfg["seed"])
    if required:
        raise _CliError("seed is required for study runs (reproducibility)")
    drawn = secrets.randbits(63)
    cfg["seed"] = str(drawn)
    return drawn


def _out(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, headers, columns):
    rows = zip(*columns)
    with path.open("w", newline="") as fh:
        fh.write(",".join(headers) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_table(args) -> int:
    cfg = _resolve(args)
    p = _params(cfg).alpha_gamma
    if args.gamma is not None:
        p = specfun.AlphaGamma(p.alpha, float(args.gamma))
    grid = UniformGrid(float(cfg["t"]), int(cfg["n_steps"]))
    t = grid.nodes
    f = np.concatenate([[np.nan], specfun.ml_density(p, t[1:])])
    F = specfun.ml_cdf(p, t)
    K = np.concatenate([[np.nan], specfun.kernel_k(p, t[1:])])
    intK = specfun.kernel_k_integral(p, t)
    out = _out(cfg)
    _write_csv(out / "table.csv", ["t", "f", "F", "K", "int_K"], [t, f, F, K, intK])
    plotting.plot_table(
        [{"t": tt, "F": FF} for tt, FF in zip(t, F)], "t", ["F"],
        out / "table.png", title="Mittag-Leffler lifetime distribution")
    _write_json(out / "table.json", {"alpha": p.alpha, "gamma": p.gamma,
                                     "rows": len(t), "config_hash": configmod.config_hash(cfg)})
    print(f"wrote {out / 'table.csv'}")
    return 0


def _cmd_resolvent(args) -> int:
    cfg = _resolve(args)
    p = _params(cfg).alpha_gamma
    if args.gamma is not None:
        p = specfun.AlphaGamma(p.alpha, float(args.gamma))
    grid = UniformGrid(float(cfg["t"]), int(cfg["n_steps"]))
    kerLK = volterra.kernel_LK(p)
    from .grids import GridFunction
    Kf = GridFunction(grid, np.concatenate(
        [[p.gamma / specfun.gamma_fn(p.alpha)],
         specfun.kernel_k(p, grid.nodes[1:])]), singular_exponent=p.alpha - 1.0)
    conv = volterra.convolve_singular(kerLK, Kf)
    resid = np.abs(conv.values - 1.0)
    resid[0] = 0.0
    out = _out(cfg)
    _write_csv(out / "resolvent.csv", ["t", "LK_conv_K", "residual"],
               [grid.nodes, conv.values, resid])
    plotting.plot_table(
        [{"t": tt, "residual": rr} for tt, rr in zip(grid.nodes[2:], resid[2:])],
        "t", ["residual"], out / "resolvent.png", logy=True,
        title="first-kind resolvent identity residual")
    _write_json(out / "resolvent.json", {
        "max_residual_excl_first_two_cells": float(np.max(resid[2:])),
        "config_hash": configmod.config_hash(cfg),
    })
    print(f"wrote {out / 'resolvent.csv'}")
    return 0


def _cmd_hawkes(args) -> int:
    cfg = _resolve(args)
    params = _params(cfg)
    seed = _seed(cfg, required=False)
    n = int(args.n) if args.n is not None else int(cfg.get("n", 50))
    chars = hawkes.characteristics_from_limit(params, n)
    T = float(cfg["t"])
    paths = int(cfg["paths"])
    out = _out(cfg)
    if paths == 1:
        log, ipath = hawkes.simulate_hawkes(chars, T * n, seed)
        res = hawkes.rescale_path(ipath, n, params.alpha)
        _write_csv(out / "hawkes_path.csv", ["t", "intensity"],
                   [res.times, res.values])
        plotting.plot_intensity(res.times, res.values, res.event_times / n
                                if len(res.event_times) else res.event_times,
                                out / "hawkes_path.png")
        payload = {"events": int(len(log.market_times) + len(log.limit_times))}
    else:
        grid = UniformGrid(T, min(int(cfg["n_steps"]), 256))
        mean, se, _ = hawkes.ensemble_rescaled_stats(chars, grid.nodes[1:],
                                                     paths, seed)
        mean_n, _ = volterra.prelimit_mean(chars, grid)
        _write_csv(out / "hawkes_mean.csv", ["t", "mc_mean", "stderr", "prelimit_mean"],
                   [grid.nodes[1:], mean, se, mean_n.values[1:]])
        plotting.plot_mean_comparison(grid.nodes[1:], mean, se, mean_n.values[1:],
                                      out / "hawkes_mean.png",
                                      title="rescaled intensity mean vs analytic")
        payload = {"max_z": float(np.max(np.abs(mean - mean_n.values[1:]) /
                                         np.maximum(se, 1e-300)))}
    payload.update({"seed": seed, "n": n,
                    "config_hash": configmod.config_hash(cfg)})
    _write_json(out / "hawkes.json", payload)
    print(f"wrote {out / 'hawkes.json'}")
    return 0


def _cmd_sve(args) -> int:
    cfg = _resolve(args)
    params = _params(cfg)
    seed = _seed(cfg, required=False)
    which = args.equation or cfg.get("equation", "eq1")
    if which not in ("eq1", "eq2"):
        raise _CliError("equation must be eq1 or eq2")
    grid = UniformGrid(float(cfg["t"]), int(cfg["n_steps"]))
    scheme = SchemeConfig(y_min=float(cfg["y_min"]))
    paths = int(cfg["paths"])
    out = _out(cfg)
    if paths == 1:
        path = (sve.simulate_eq1 if which == "eq1" else sve.simulate_eq2)(
            params, grid, scheme, seed)
        _write_csv(out / "sve_path.csv", ["t", "V"], [grid.nodes, path.values])
        _write_csv(out / "sve_jumps.csv", ["s", "y"],
                   [path.jump_times, path.jump_marks])
        plotting.plot_paths(grid.nodes, path.values, out / "sve_path.png",
                            title=f"{which} sample path")
        payload = {"clip_count": path.diagnostics.clip_count,
                   "dropped_variance": path.diagnostics.dropped_variance,
                   "big_jumps": int(len(path.jump_times))}
    else:
        st = sve.ensemble_stats(params, grid, scheme, seed, paths, which)
        lim = sve.limit_mean(params, grid).values
        _write_csv(out / "sve_mean.csv", ["t", "mc_mean", "stderr", "limit_mean"],
                   [grid.nodes, st["mean"], st["stderr"], lim])
        plotting.plot_mean_comparison(grid.nodes, st["mean"], st["stderr"], lim,
                                      out / "sve_mean.png",
                                      title=f"{which} ensemble mean vs analytic")
        d = st["diagnostics"]
        payload = {"clip_rate": d.clip_rate, "dropped_variance": d.dropped_variance,
                   "max_z": float(np.max(np.abs(st["mean"][1:] - lim[1:]) /
                                         np.maximum(st["stderr"][1:], 1e-300)))}
    payload.update({"seed": seed, "equation": which,
                    "config_hash": configmod.config_hash(cfg)})
    _write_json(out / "sve.json", payload)
    print(f"wrote {out / 'sve.json'}")
    return 0


def _cmd_riccati(args) -> int:
    cfg = _resolve(args)
    params = _params(cfg)
    lam = float(args.lam if args.lam is not None else cfg.get("lam", 1.0))
    g = _load_g(args, cfg)
    grid = UniformGrid(float(cfg["t"]), int(cfg["n_steps"]))
    sol = riccati.solve_riccati(params, grid, lam, g, tol=float(cfg["tol"]))
    if not sol.converged:
        raise RuntimeError(
            f"Picard iteration did not converge in {sol.iterations} steps "
            f"(last increment {sol.increments[-1]:.3e})")
    lp = riccati.laplace_functional(params, grid, lam, g, solution=sol)
    from .grids import cumulative_integral
    Psi = cumulative_integral(sol.psi).values * params.c3
    weighted = np.array([sol.psi.weighted_value(j) for j in range(grid.steps + 1)])
    out = _out(cfg)
    psi_out = sol.psi.values.copy()
    psi_out[0] = np.nan if lam > 0 else 0.0
    _write_csv(out / "riccati.csv", ["t", "psi", "weighted_u", "Psi_cum"],
               [grid.nodes, psi_out, weighted, Psi])
    plotting.plot_riccati(grid.nodes, psi_out, weighted, out / "riccati.png")
    _write_json(out / "riccati.json", {
        "lam": lam, "iterations": sol.iterations, "residual": sol.residual,
        "laplace_value": lp["value"], "exponent": lp["exponent"],
        "exponent_v0_part": lp["lk_psi_T"], "exponent_mean_part": lp["int_psi"],
        "config_hash": configmod.config_hash(cfg),
    })
    print(f"wrote {out / 'riccati.json'}")
    return 0


def _load_g(args, cfg):
    gspec = args.g if args.g is not None else cfg.get("g")
    if gspec is None:
        return None
    try:
        return float(gspec)
    except ValueError:
        pass
    data = np.loadtxt(gspec, delimiter=",", skiprows=1)
    return lambda t: np.interp(t, data[:, 0], data[:, 1])


def _cmd_laplace(args) -> int:
    cfg = _resolve(args)
    params = _params(cfg)
    lam_grid = [float(v) for v in str(cfg.get("lam_grid", "0,0.5,1,2")).split(",")]
    g = _load_g(args, cfg)
    grid = UniformGrid(float(cfg["t"]), int(cfg["n_steps"]))
    values = []
    for lam in lam_grid:
        lp = riccati.laplace_functional(params, grid, lam, g)
        values.append(lp["value"])
    out = _out(cfg)
    _write_csv(out / "laplace.csv", ["lam", "value"], [lam_grid, values])
    plotting.plot_table(
        [{"lam": l, "value": v} for l, v in zip(lam_grid, values)],
        "lam", ["value"], out / "laplace.png", title="Laplace transform ladder")
    _write_json(out / "laplace.json", {
        "lam_grid": lam_grid, "values": values,
        "monotone_decreasing": all(b <= a for a, b in zip(values, values[1:])),
        "config_hash": configmod.config_hash(cfg),
    })
    print(f"wrote {out / 'laplace.json'}")
    return 0


def _cmd_study(args) -> int:
    cfg = _resolve(args)
    kind = args.kind or cfg.get("kind")
    if kind is None:
        raise _CliError("study requires --kind (or kind= in the config file)")
    cfg["kind"] = kind
    _seed(cfg, required=True)
    ecfg = harness.ExperimentConfig.from_mapping(cfg)
    report = harness.run_study(ecfg)
    out = _out(cfg)
    harness.persist(report, out)
    _render_study_figures(report, out)
    status = "PASS" if report.passed() else "FAIL"
    print(f"study {kind}: {status}; artifacts in {out}")
    return 0 if report.passed() else 2


def _render_study_figures(report, out: Path):
    for name, rows in report.tables.items():
        if not rows:
            continue
        keys = list(rows[0].keys())
        numeric = [k for k in keys[1:] if isinstance(rows[0][k], (int, float))
                   and not isinstance(rows[0][k], bool)]
        if not numeric:
            continue
        plotting.plot_table(rows, keys[0], numeric[:3], out / f"{name}.png",
                            title=f"{report.kind}: {name}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikevol",
        description="numerical laboratory for rough volatility with spikes",
    )
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command")

    for name, helptext in (
        ("table", "tabulate the model's special functions"),
        ("resolvent", "first-kind resolvent identity report"),
        ("hawkes", "simulate the prelimit event system"),
        ("sve", "simulate the limiting Volterra equation"),
        ("riccati", "solve the Laplace-exponent equation"),
        ("laplace", "Laplace-transform ladder"),
        ("study", "run a named experiment campaign"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name in ("table", "resolvent"):
            p.add_argument("--gamma", type=float, default=None)
        if name == "hawkes":
            p.add_argument("--n", type=int, default=None,
                           help="prelimit scale index")
        if name == "sve":
            p.add_argument("--equation", choices=("eq1", "eq2"), default=None)
        if name in ("riccati", "laplace"):
            p.add_argument("--lam", type=float, default=None)
            p.add_argument("--g", default=None,
                           help="constant value or CSV file of (t, g)")
        if name == "laplace":
            p.add_argument("--lam-grid", dest="lam_grid", default=None)
        if name == "study":
            p.add_argument("--kind", choices=harness.STUDY_KINDS, default=None)
            for key in ("n_ladder", "steps_ladder", "t_ladder", "g_grid",
                        "lam_grid"):
                p.add_argument(f"--{key.replace('_', '-')}", dest=key,
                               default=None)
    return parser


_COMMANDS = {
    "table": _cmd_table,
    "resolvent": _cmd_resolvent,
    "hawkes": _cmd_hawkes,
    "sve": _cmd_sve,
    "riccati": _cmd_riccati,
    "laplace": _cmd_laplace,
    "study": _cmd_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 1
    if getattr(args, "workers", None) is not None and args.workers > 0:
        try:
            import numba

            numba.set_num_threads(max(1, args.workers))
        except (ImportError, ValueError):
            pass
    try:
        return _COMMANDS[args.command](args)
    except (_CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: leave a diagnostic trail
        out = Path(os.environ.get("SPIKEVOL_OUT", "."))
        out.mkdir(parents=True, exist_ok=True)
        diag = out / "failure.json"
        _write_json(diag, {"command": args.command, "error": str(exc),
                           "type": type(exc).__name__})
        print(f"runtime failure: {exc} (diagnostics: {diag})", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
