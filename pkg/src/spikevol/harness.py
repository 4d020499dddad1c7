"""Experiment campaigns cross-validating the simulators against oracles.

Each study produces a :class:`RunReport` whose tables and verdicts are
persisted as CSV/JSON with a hashed manifest.  Reports are reproducible
bit-for-bit from (config, seed): all randomness flows through
counter-based streams keyed on the seed, reductions are fixed-order, and
volatile data (wall clock) is kept out of the hashed artifacts.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as configmod
from . import hawkes, riccati, sve, volterra
from .grids import UniformGrid
from .sve import LimitParams

CODE_VERSION = "0.1.0"

STUDY_KINDS = ("convergence", "laplace", "mean", "equivalence", "moments", "holder")


class IntegrityError(RuntimeError):
    """A persisted artifact does not match its manifest hash."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: LimitParams
    seed: int
    out_dir: str | None = None
    horizon: float = 1.0
    n_steps: int = 1024
    paths: int = 2000
    n_ladder: tuple = (10, 30, 100)
    steps_ladder: tuple = (512, 1024, 2048)
    t_ladder: tuple = (1.0, 2.0, 4.0)
    lam_grid: tuple = (0.0, 0.5)
    g_grid: tuple = (0.0, 0.2)
    y_min: float = 1e-3
    tol: float = 1e-10
    fine_steps_per_unit: int = 40

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ValueError(f"unknown study kind {self.kind!r}; choose from {STUDY_KINDS}")
        if self.paths < 100:
            raise ValueError("paths must be at least 100")
        for name in ("n_ladder", "steps_ladder", "t_ladder"):
            lad = getattr(self, name)
            if any(b <= a for a, b in zip(lad, lad[1:])):
                raise ValueError(f"{name} must be strictly increasing")

    def to_mapping(self) -> dict[str, str]:
        p = self.params
        m = {
            "kind": self.kind,
            "alpha": repr(p.alpha), "a": repr(p.a), "b": repr(p.b), "v0": repr(p.V0),
            "zeta_m_star": repr(p.zeta_m_star), "lambda_m_star": repr(p.lambda_m_star),
            "zeta_l_star": repr(p.zeta_l_star), "lambda_l_star": repr(p.lambda_l_star),
            "seed": str(self.seed),
            "t": repr(self.horizon), "n_steps": str(self.n_steps),
            "paths": str(self.paths),
            "n_ladder": ",".join(str(n) for n in self.n_ladder),
            "steps_ladder": ",".join(str(n) for n in self.steps_ladder),
            "t_ladder": ",".join(repr(t) for t in self.t_ladder),
            "lam_grid": ",".join(repr(v) for v in self.lam_grid),
            "g_grid": ",".join(repr(v) for v in self.g_grid),
            "y_min": repr(self.y_min), "tol": repr(self.tol),
            "fine_steps_per_unit": str(self.fine_steps_per_unit),
        }
        # out_dir is deliberately excluded: artifacts are identical wherever
        # they are written, and the hash must reflect the experiment alone
        return m

    @classmethod
    def from_mapping(cls, m: dict) -> "ExperimentConfig":
        def fl(key, default=None):
            return float(m[key]) if key in m else default

        test_mode = str(m.get("test_mode", "")).lower() in ("1", "true", "yes")
        params = LimitParams(
            alpha=float(m["alpha"]), a=float(m["a"]), b=float(m["b"]), V0=float(m["v0"]),
            zeta_m_star=float(m.get("zeta_m_star", 1.0)),
            lambda_m_star=float(m.get("lambda_m_star", 1.0)),
            zeta_l_star=float(m.get("zeta_l_star", 0.0)),
            lambda_l_star=float(m.get("lambda_l_star", 0.0)),
            test_mode=test_mode,
        )
        kwargs = dict(
            kind=m["kind"], params=params, seed=int(m["seed"]),
            out_dir=m.get("out_dir"),
        )
        if "t" in m:
            kwargs["horizon"] = float(m["t"])
        for key, cast in (("n_steps", int), ("paths", int),
                          ("fine_steps_per_unit", int)):
            if key in m:
                kwargs[key] = cast(m[key])
        for key in ("y_min", "tol"):
            if key in m:
                kwargs[key] = float(m[key])
        for key, cast in (("n_ladder", int), ("steps_ladder", int),
                          ("t_ladder", float), ("lam_grid", float), ("g_grid", float)):
            if key in m:
                kwargs[key] = tuple(cast(v) for v in str(m[key]).split(","))
        return cls(**kwargs)

    @property
    def hash(self) -> str:
        return configmod.config_hash(self.to_mapping())


@dataclass
class RunReport:
    kind: str
    config: dict[str, str]
    config_hash: str
    seed: int
    tables: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    wall_clock: float = 0.0

    def passed(self, gating_only: bool = True) -> bool:
        return all(
            v["passed"] for v in self.verdicts if v["gating"] or not gating_only
        )


def _report(cfg: ExperimentConfig) -> RunReport:
    return RunReport(
        kind=cfg.kind, config=cfg.to_mapping(), config_hash=cfg.hash, seed=cfg.seed,
    )


def _verdict(report: RunReport, criterion: str, passed: bool, gating: bool, detail: str):
    report.verdicts.append({
        "criterion": criterion, "passed": bool(passed), "gating": bool(gating),
        "detail": detail,
    })


def run_convergence_study(cfg: ExperimentConfig) -> RunReport:
    """Prelimit mean vs limit mean over an n-ladder, with an MC cross-check."""
    t0 = time.monotonic()
    report = _report(cfg)
    grid = UniformGrid(cfg.horizon, max(cfg.n_steps, 64))
    lim = volterra.limit_mean(
        cfg.params.alpha_gamma, cfg.params.V0, cfg.params.a, cfg.params.b, grid
    ).values
    checkpoints = np.linspace(0, grid.steps, 11).astype(int)[1:]
    rows = []
    d_values = []
    mc_ok = True
    for n in cfg.n_ladder:
        mean_n, _ = volterra.prelimit_mean(
            hawkes.characteristics_from_limit(cfg.params, n), grid,
            fine_steps_per_unit=cfg.fine_steps_per_unit,
        )
        d_n = float(np.max(np.abs(mean_n.values - lim)))
        mc_mean, mc_se, _ = hawkes.ensemble_rescaled_stats(
            hawkes.characteristics_from_limit(cfg.params, n),
            grid.nodes[checkpoints], cfg.paths, cfg.seed,
        )
        z = np.abs(mc_mean - mean_n.values[checkpoints]) / np.maximum(mc_se, 1e-300)
        max_z = float(np.max(z))
        mc_ok = mc_ok and max_z <= 3.0
        d_values.append(d_n)
        rows.append({"n": n, "d_n": d_n, "mc_max_z": max_z})
    report.tables["convergence"] = rows
    decreasing = all(b <= 1.1 * a for a, b in zip(d_values, d_values[1:]))
    _verdict(report, "AC5-prelimit-convergence", decreasing, True,
             f"d_n ladder {d_values}")
    _verdict(report, "AC4-hawkes-mean-identity", mc_ok, True,
             f"max |z| over checkpoints per n: {[r['mc_max_z'] for r in rows]}")
    report.wall_clock = time.monotonic() - t0
    return report


def run_mean_check(cfg: ExperimentConfig) -> RunReport:
    """Ensemble mean of the limit scheme against the analytic mean curve."""
    t0 = time.monotonic()
    report = _report(cfg)
    grid = UniformGrid(cfg.horizon, cfg.n_steps)
    scheme = sve.SchemeConfig(y_min=cfg.y_min)
    lim = sve.limit_mean(cfg.params, grid).values
    checkpoints = np.linspace(0, grid.steps, 21).astype(int)[1:]
    rows = []
    ok = True
    for which in ("eq1", "eq2"):
        st = sve.ensemble_stats(cfg.params, grid, scheme, cfg.seed, cfg.paths, which)
        z = np.abs(st["mean"][checkpoints] - lim[checkpoints]) / np.maximum(
            st["stderr"][checkpoints], 1e-300)
        max_z = float(np.max(z))
        ok = ok and max_z <= 3.0
        for idx in checkpoints:
            rows.append({
                "equation": which, "t": grid.nodes[idx],
                "mc_mean": float(st["mean"][idx]), "stderr": float(st["stderr"][idx]),
                "limit_mean": float(lim[idx]),
            })
    report.tables["mean"] = rows
    _verdict(report, "AC6-sve-mean-identity", ok, True,
             "MC mean within 3 SE at 20 checkpoints for eq1 and eq2")
    report.wall_clock = time.monotonic() - t0
    return report


def run_laplace_validation(cfg: ExperimentConfig) -> RunReport:
    """Deterministic Laplace values against MC exponential functionals."""
    t0 = time.monotonic()
    report = _report(cfg)
    grid = UniformGrid(cfg.horizon, cfg.n_steps)
    scheme = sve.SchemeConfig(y_min=cfg.y_min)
    rows = []
    contained = 0
    total = 0
    for lam in cfg.lam_grid:
        for gc in cfg.g_grid:
            if lam == 0.0 and gc == 0.0:
                value = riccati.laplace_functional(cfg.params, grid, 0.0, None)["value"]
                rows.append({
                    "lam": lam, "g": gc, "analytic": value, "mc": 1.0,
                    "mc_se": 0.0, "contained": value == 1.0,
                })
                contained += value == 1.0
                total += 1
                continue

            lp = riccati.laplace_functional(cfg.params, grid, lam, gc)

            def functional(V, lam=lam, gc=gc):
                integ = gc * np.trapezoid(V, dx=grid.h, axis=1)
                return np.exp(-lam * V[:, -1] - integ)

            st = sve.ensemble_stats(cfg.params, grid, scheme, cfg.seed,
                                    cfg.paths, "eq1", functional=functional)
            fv = st["functional"]
            mc = float(fv.mean())
            se = float(fv.std() / math.sqrt(len(fv)))
            inside = abs(lp["value"] - mc) <= 1.96 * se
            contained += inside
            total += 1
            rows.append({
                "lam": lam, "g": gc, "analytic": float(lp["value"]),
                "mc": mc, "mc_se": se, "contained": bool(inside),
            })
    report.tables["laplace"] = rows
    _verdict(report, "AC9-laplace-functional", contained >= 0.9 * total, True,
             f"{contained}/{total} inside the 95% CI")
    report.wall_clock = time.monotonic() - t0
    return report


def run_equivalence_check(cfg: ExperimentConfig) -> RunReport:
    """Coupled eq1/eq2 sup-difference over a grid-refinement ladder."""
    t0 = time.monotonic()
    report = _report(cfg)
    scheme = sve.SchemeConfig(y_min=cfg.y_min)
    rows = []
    medians = []
    for steps in cfg.steps_ladder:
        grid = UniformGrid(cfg.horizon, steps)
        sups = sve.coupled_sup_difference(cfg.params, grid, scheme,
                                          cfg.seed, cfg.paths)
        med = float(np.median(sups))
        medians.append(med)
        rows.append({"n_steps": steps, "median_sup_diff": med})
    ratios = [a / b for a, b in zip(medians, medians[1:])]
    report.tables["equivalence"] = rows
    _verdict(report, "AC7-eq1-eq2-equivalence",
             all(r >= 1.5 for r in ratios), True,
             f"halving ratios {ratios}")
    report.wall_clock = time.monotonic() - t0
    return report


def _pure_diffusion(params: LimitParams) -> LimitParams:
    return LimitParams(params.alpha, params.a, params.b, params.V0,
                       1.0, 1.0, 0.0, 0.0)


def run_moment_and_holder(cfg: ExperimentConfig) -> RunReport:
    """Moment-growth and pathwise-roughness diagnostics (non-gating)."""
    t0 = time.monotonic()
    report = _report(cfg)
    al = cfg.params.alpha
    scheme = sve.SchemeConfig(y_min=cfg.y_min)

    if cfg.kind in ("moments",):
        rows = []
        sups = []
        for T in cfg.t_ladder:
            grid = UniformGrid(T, cfg.n_steps)
            st = sve.ensemble_stats(cfg.params, grid, scheme, cfg.seed,
                                    cfg.paths, "eq1")
            sup2 = float(np.max(st["second"]))
            # smallest C with E[V^2](t) <= C (1+t)^(2 alpha) over the horizon
            C = volterra.fit_envelope_constant(
                st["second"], (1.0 + grid.nodes) ** (2.0 * al))
            sups.append(sup2)
            rows.append({"T": T, "sup_second_moment": sup2, "fitted_C": C})
        x = np.log1p(np.asarray(cfg.t_ladder))
        slope = float(np.polyfit(x, np.log(sups), 1)[0])
        Cs = [r["fitted_C"] for r in rows]
        stable = max(Cs) <= 2.0 * min(Cs)
        report.tables["moments"] = rows
        _verdict(report, "AC10-moment-growth",
                 stable and slope <= 2.0 * al + 0.2, False,
                 f"slope {slope:.3f} vs bound {2 * al + 0.2:.2f}; C spread "
                 f"{max(Cs) / min(Cs):.2f}")

    if cfg.kind in ("holder",):
        params = _pure_diffusion(cfg.params)
        grid = UniformGrid(cfg.horizon, cfg.n_steps)
        eng = sve._Engine(params, grid, scheme)
        n_paths = min(cfg.paths, 256)
        V = eng.run_batch(cfg.seed, 0, n_paths, "eq1")["eq1"][0]
        est, width = sve.holder_estimate(V, grid)
        report.tables["holder"] = [{"exponent": est, "half_width": width}]
        # modulus-of-continuity table, emitted without a verdict
        lags = sorted({max(2, cfg.n_steps // d) for d in (256, 128, 64, 32, 16, 8)})
        report.tables["modulus"] = [
            {"lag_steps": l, "lag_time": l * grid.h,
             "median_increment": float(np.median(np.abs(V[:, l:] - V[:, :-l])))}
            for l in lags
        ]
        _verdict(report, "AC11-holder-diagnostic", 0.10 <= est <= 0.40, False,
                 f"exponent estimate {est:.3f} +- {width:.3f}")

    report.wall_clock = time.monotonic() - t0
    return report


_RUNNERS = {
    "convergence": run_convergence_study,
    "laplace": run_laplace_validation,
    "mean": run_mean_check,
    "equivalence": run_equivalence_check,
    "moments": run_moment_and_holder,
    "holder": run_moment_and_holder,
}


def run_study(cfg: ExperimentConfig) -> RunReport:
    return _RUNNERS[cfg.kind](cfg)


# ---------------------------------------------------------------------------
# persistence


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def persist(report: RunReport, out_dir) -> Path:
    """Write the report bundle; append-only, deterministic bytes.

    Layout: manifest.json (config hash, seed, per-file hashes), report.json
    (verdicts), one CSV per table.  Wall clock goes to timing.log, which is
    deliberately outside the hashed set.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        raise FileExistsError(f"{manifest_path} already exists (append-only store)")

    files: dict[str, str] = {}
    for name, rows in report.tables.items():
        path = out / f"{name}.csv"
        if rows:
            headers = list(rows[0].keys())
        else:
            headers = []
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(headers)
            for row in rows:
                writer.writerow([_format_cell(row[h]) for h in headers])
        files[f"{name}.csv"] = _sha256(path)

    report_path = out / "report.json"
    report_path.write_text(json.dumps({
        "kind": report.kind, "config_hash": report.config_hash,
        "seed": report.seed, "verdicts": report.verdicts,
    }, indent=2, sort_keys=True) + "\n")
    files["report.json"] = _sha256(report_path)

    manifest_path.write_text(json.dumps({
        "kind": report.kind,
        "config": report.config,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "code_version": CODE_VERSION,
        "files": files,
    }, indent=2, sort_keys=True) + "\n")
    (out / "timing.log").write_text(f"wall_clock_seconds={report.wall_clock:.3f}\n")
    return manifest_path


def load(out_dir) -> RunReport:
    """Reconstruct a report, verifying every artifact hash."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    for fname, digest in manifest["files"].items():
        path = out / fname
        if not path.exists():
            raise IntegrityError(f"missing artifact {fname}")
        if _sha256(path) != digest:
            raise IntegrityError(f"hash mismatch for {fname}")
    rep_data = json.loads((out / "report.json").read_text())
    report = RunReport(
        kind=manifest["kind"], config=manifest["config"],
        config_hash=manifest["config_hash"], seed=manifest["seed"],
        verdicts=rep_data["verdicts"],
    )
    for fname in manifest["files"]:
        if not fname.endswith(".csv"):
            continue
        rows = []
        with (out / fname).open() as fh:
            reader = csv.reader(fh)
            headers = next(reader)
            for rec in reader:
                row = {}
                for key, val in zip(headers, rec):
                    if val in ("true", "false"):
                        row[key] = val == "true"
                    else:
                        try:
                            row[key] = int(val)
                        except ValueError:
                            try:
                                row[key] = float(val)
                            except ValueError:
                                row[key] = val
                rows.append(row)
        report.tables[fname[:-4]] = rows
    return report
