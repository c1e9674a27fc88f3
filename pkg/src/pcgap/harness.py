"""Sweep orchestration: configuration, task enumeration, parallel execution,
append-only persistence, and report generation.

Three experiment tiers (linear grid, neural sweep, high-dimensional scaling)
plus the single-shot analyses (verify, bifurcation, IB sweep) and the
nonlinear Duffing sweep.  Every (configuration, seed) pair is an independent
task with an RNG stream derived from its identity, so aggregates do not
depend on scheduling or worker count.  Records append to JSONL with a CSV
mirror per tier; re-running with the same output directory skips tasks that
already have a record.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, duffing, gap_analysis, stats
from .encoder_opt import minimize_sphere
from .errors import CorruptRecords, EmptyGrid, TaskFailed
from .gap_analysis import ETA0, IB_BETAS, ParamPoint
from .lingauss import (build_highdim_spec, sample_trajectories,
                       solve_covariance_closed_form, solve_covariance_general)
from .neural import TrainConfig, finite_diff_fidelity, train_mlp_encoder
from .records import SweepRecord
from .risk import Encoder, RiskVariant, angular_profile, latent_risk

__all__ = ["SweepConfig", "enumerate_configs", "run_sweep", "report",
           "default_config", "TIERS", "CSV_COLUMNS"]

TIERS = ("linear_grid", "nn_sweep", "highdim", "duffing", "verify",
         "bifurcation", "ib")

# Frozen CSV column orders, one per tier.
CSV_COLUMNS = {
    "linear_grid": ("a_s", "a_e", "c", "q_s", "q_e", "r_nz", "r_env", "r_star",
                    "theta_star_deg", "fidelity", "nz_optimal", "status"),
    "nn_sweep": ("a_s", "a_e", "c", "eps", "seed", "val_risk", "r_nz",
                 "r_star_lin", "risk_ratio", "fidelity", "n_degenerate",
                 "status"),
    "highdim": ("n", "c", "q_s", "seed", "r_nz", "r_star", "gap",
                "improvement_pct", "fidelity", "converged_fraction", "status"),
    "duffing": duffing.DUFFING_CSV_COLUMNS,
    "verify": ("a_s", "c", "a_e", "q_s", "q_e", "sigma11", "sigma12", "sigma22",
               "r_nz", "r_env", "r_star", "theta_star_deg", "ratio", "delta",
               "status"),
    "bifurcation": ("a_s", "a_e", "q_s", "q_e", "c_lo", "c_hi", "c_star",
                    "bracket_width", "theta_at_c_lo", "theta_at_c_hi", "status"),
    "ib": ("a_s", "c", "a_e", "q_s", "q_e", "beta", "theta_star_deg",
           "ib_value", "status"),
}

# Full-scale sweep axes.
NN_AXES_FULL = {
    "a_s": (0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9),
    "a_e": (0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.98),
    "c": (-0.95, -0.8, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.8, 0.95),
    "eps": (0.05, 0.2, 0.5, 1.0, 2.0),
}
HIGHDIM_AXES_FULL = {
    "n": (10, 50, 100),
    "c": (-0.95, -0.5, -0.1, 0.1, 0.5, 0.95),
    "q_s": (0.01, 0.05),
}
DUFFING_AXES_FULL = {
    "alpha_e": (0.01, 0.03, 0.1, 0.3),
    "gamma_se": (0.1, 0.5, 1.0, 2.0, 5.0),
    "grounded": (False, True),
}
_Q_E = 0.10
_NN_DESK_COUNT = 20


@dataclass(frozen=True)
class SweepConfig:
    tier: str
    grids: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = (0,)
    scale: str = "desk"
    output_dir: str = "results"
    parallelism: int = 1

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}; choose from {TIERS}")
        if self.scale not in ("desk", "full"):
            raise ValueError("scale must be 'desk' or 'full'")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if len(self.seeds) < 1:
            raise ValueError("at least one seed required")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "grids", _normalize_grids(self.grids))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        obj = json.loads(text)
        obj["seeds"] = tuple(obj.get("seeds", (0,)))
        return cls(**obj)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


def _normalize_grids(grids: dict) -> dict:
    out = {}
    for key, val in grids.items():
        if isinstance(val, (list, tuple)):
            out[key] = tuple(val)
        else:
            out[key] = val
    return out


def default_config(tier: str, scale: str = "desk", output_dir: str = "results",
                   seeds: tuple[int, ...] | None = None,
                   parallelism: int = 1) -> SweepConfig:
    """Documented defaults for each tier at either scale.  Scale differences
    are config values only; the code path is identical."""
    grids: dict = {}
    if tier == "nn_sweep":
        grids = dict(NN_AXES_FULL)
        if scale == "desk":
            grids["epochs"] = 300
            grids["n_trajectories"] = 500
            grids["subset"] = _NN_DESK_COUNT
            default_seeds = (0, 1)
        else:
            grids["epochs"] = 2000
            grids["n_trajectories"] = 5000
            default_seeds = (0, 1, 2, 3, 4)
        grids["length"] = 20
    elif tier == "highdim":
        grids = dict(HIGHDIM_AXES_FULL)
        if scale == "desk":
            grids["n"] = (10, 50)
            grids["restarts"] = 50
        else:
            grids["restarts"] = 500
        default_seeds = (0,)
    elif tier == "duffing":
        grids = dict(DUFFING_AXES_FULL)
        if scale == "desk":
            grids["alpha_e"] = (0.01, 0.1)
            grids["gamma_se"] = (1.0, 5.0)
            default_seeds = (0, 1)
        else:
            default_seeds = (0, 1, 2)
        grids["epochs"] = 60
    else:
        default_seeds = (0,)
    return SweepConfig(tier=tier, grids=grids,
                       seeds=seeds if seeds is not None else default_seeds,
                       scale=scale, output_dir=output_dir,
                       parallelism=parallelism)


# ---------------------------------------------------------------------------
# Task enumeration


def _nn_points(grids: dict) -> list[dict]:
    pts = []
    for a_s in grids["a_s"]:
        for a_e in grids["a_e"]:
            for c in grids["c"]:
                for eps in grids["eps"]:
                    if abs(c) < 1.0 - max(abs(a_s), abs(a_e)):
                        pts.append({"a_s": a_s, "a_e": a_e, "c": c, "eps": eps})
    subset = grids.get("subset")
    if subset:
        # evenly spaced stratified subset of the lexicographic survivor list
        idx = [round(i * len(pts) / subset) for i in range(subset)]
        pts = [pts[i] for i in idx]
    return pts


def enumerate_configs(cfg: SweepConfig) -> list[dict]:
    """Parameter dicts in deterministic lexicographic axis order, after the
    tier's stability filter.  Raises EmptyGrid if nothing survives."""
    grids = cfg.grids
    if cfg.tier == "nn_sweep":
        pts = _nn_points(grids)
        for p in pts:
            p["epochs"] = grids.get("epochs", 300)
            p["n_trajectories"] = grids.get("n_trajectories", 500)
            p["length"] = grids.get("length", 20)
    elif cfg.tier == "highdim":
        pts = [{"n": n, "c": c, "q_s": q_s, "restarts": grids.get("restarts", 50)}
               for n in grids["n"] for c in grids["c"] for q_s in grids["q_s"]]
    elif cfg.tier == "duffing":
        pts = [{"alpha_e": a, "gamma_se": g, "grounded": bool(gr),
                "epochs": grids.get("epochs", 60)}
               for a in grids["alpha_e"] for g in grids["gamma_se"]
               for gr in grids["grounded"]]
    elif cfg.tier == "linear_grid":
        pts = [{"a_s": p.a_s, "c": p.c, "a_e": p.a_e, "q_s": p.q_s, "q_e": p.q_e}
               for p in gap_analysis.grid_configs_160()]
    elif cfg.tier == "verify":
        pts = [{"a_s": ETA0.a_s, "c": ETA0.c, "a_e": ETA0.a_e,
                "q_s": ETA0.q_s, "q_e": ETA0.q_e}]
    elif cfg.tier == "bifurcation":
        pts = [{"a_s": ETA0.a_s, "a_e": ETA0.a_e, "q_s": ETA0.q_s,
                "q_e": ETA0.q_e, "c_lo": -0.90, "c_hi": 0.0}]
    else:  # ib
        pts = [{"a_s": ETA0.a_s, "c": ETA0.c, "a_e": ETA0.a_e, "q_s": ETA0.q_s,
                "q_e": ETA0.q_e, "beta": b} for b in grids.get("betas", IB_BETAS)]
    if not pts:
        raise EmptyGrid(f"no configurations survive the {cfg.tier} grids")
    return pts


# ---------------------------------------------------------------------------
# Task pipelines (module-level so worker processes can import them)


def _run_nn_task(params: dict, seed: int) -> dict:
    q_s = params["eps"] * _Q_E
    point = ParamPoint(a_s=params["a_s"], c=params["c"], a_e=params["a_e"],
                       q_s=q_s, q_e=_Q_E)
    spec = point.spec()
    cov = solve_covariance_closed_form(spec)
    batch = sample_trajectories(spec, params["n_trajectories"],
                                params["length"], seed)
    cfg = TrainConfig(learning_rate=1e-3, epochs=params["epochs"], seed=seed)
    model = train_mlp_encoder(batch, cfg)
    probe = sample_trajectories(spec, 1, 1000, seed + 500_000).states.reshape(-1, 2)
    fid = finite_diff_fidelity(model, probe)
    profile = angular_profile(spec, cov)
    r_nz = latent_risk(Encoder.nz(2), spec, cov).value
    return {"a_s": params["a_s"], "a_e": params["a_e"], "c": params["c"],
            "eps": params["eps"], "seed": seed,
            "val_risk": model.best_validation_loss,
            "r_nz": r_nz, "r_star_lin": profile.argmin_value,
            "risk_ratio": model.best_validation_loss / profile.argmin_value,
            "fidelity": fid.value, "n_degenerate": fid.n_excluded,
            "status": "ok"}


def _run_highdim_task(params: dict, seed: int) -> dict:
    spec = build_highdim_spec(params["n"], 0.05, params["q_s"], params["c"], _Q_E)
    cov = solve_covariance_general(spec)
    sol = minimize_sphere(spec, cov, variant=RiskVariant.LATENT,
                          restarts=params["restarts"], seed=seed)
    r_nz = latent_risk(Encoder.nz(spec.dim), spec, cov).value
    gap = r_nz - sol.risk.value
    return {"n": params["n"], "c": params["c"], "q_s": params["q_s"],
            "seed": seed, "r_nz": r_nz, "r_star": sol.risk.value, "gap": gap,
            "improvement_pct": 100.0 * gap / r_nz, "fidelity": sol.fidelity,
            "converged_fraction": sol.converged_fraction, "status": "ok"}


def _run_grid_task(params: dict, seed: int) -> dict:
    point = ParamPoint(**params)
    rep = gap_analysis.verify_counterexample(point)
    fid = abs(math.cos(math.radians(rep.theta_star_deg)))
    return {**params, "r_nz": rep.r_nz, "r_env": rep.r_env, "r_star": rep.r_star,
            "theta_star_deg": rep.theta_star_deg, "fidelity": fid,
            "nz_optimal": fid > math.cos(1e-6), "status": "ok"}


def _run_verify_task(params: dict, seed: int) -> dict:
    point = ParamPoint(**params)
    rep = gap_analysis.verify_counterexample(point)
    sig = rep.sigma.sigma
    return {**params, "sigma11": sig[0, 0], "sigma12": sig[0, 1],
            "sigma22": sig[1, 1], "r_nz": rep.r_nz, "r_env": rep.r_env,
            "r_star": rep.r_star, "theta_star_deg": rep.theta_star_deg,
            "ratio": rep.r_nz / rep.r_env, "delta": rep.delta, "status": "ok"}


def _run_bifurcation_task(params: dict, seed: int) -> dict:
    base = ParamPoint(a_s=params["a_s"], c=params["c_lo"], a_e=params["a_e"],
                      q_s=params["q_s"], q_e=params["q_e"])
    res = gap_analysis.find_bifurcation(base, params["c_lo"], params["c_hi"])
    return {"a_s": params["a_s"], "a_e": params["a_e"], "q_s": params["q_s"],
            "q_e": params["q_e"], "c_lo": params["c_lo"], "c_hi": params["c_hi"],
            "c_star": res.c_star, "bracket_width": res.bracket[1] - res.bracket[0],
            "theta_at_c_lo": res.theta_star_path[0][1],
            "theta_at_c_hi": res.theta_star_path[-1][1],
            "theta_star_path": list(res.theta_star_path), "status": "ok"}


def _run_ib_task(params: dict, seed: int) -> dict:
    point = ParamPoint(a_s=params["a_s"], c=params["c"], a_e=params["a_e"],
                       q_s=params["q_s"], q_e=params["q_e"])
    (beta, theta, value), = gap_analysis.ib_sweep(point, betas=(params["beta"],))
    return {**params, "theta_star_deg": theta, "ib_value": value, "status": "ok"}


def _run_duffing_task(params: dict, seed: int) -> dict:
    return duffing.duffing_task(params["alpha_e"], params["gamma_se"],
                                params["grounded"], seed,
                                epochs=params.get("epochs", 60))


_TASK_FN = {
    "linear_grid": _run_grid_task,
    "nn_sweep": _run_nn_task,
    "highdim": _run_highdim_task,
    "duffing": _run_duffing_task,
    "verify": _run_verify_task,
    "bifurcation": _run_bifurcation_task,
    "ib": _run_ib_task,
}


def _execute(task: tuple[str, dict, int]) -> SweepRecord:
    tier, params, seed = task
    try:
        metrics = _TASK_FN[tier](params, seed)
        return SweepRecord(tier=tier, params=params, seed=seed,
                           metrics=metrics, status="ok")
    except Exception as exc:
        reason = str(exc) if not isinstance(exc, TaskFailed) else str(exc)
        return SweepRecord(tier=tier, params=params, seed=seed,
                           metrics={}, status=f"failed: {reason}")


# ---------------------------------------------------------------------------
# Persistence


def _header_line(cfg: SweepConfig) -> str:
    return json.dumps({"tool": "pcgap", "version": __version__,
                       "config_hash": cfg.config_hash()})


def _load_done_keys(jsonl_path: Path) -> set[str]:
    done = set()
    if jsonl_path.exists():
        with jsonl_path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if "tier" in obj:
                    done.add(SweepRecord.from_json(line).key())
    return done


def _csv_value(val) -> str:
    if isinstance(val, bool):
        return str(val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _append_record(rec: SweepRecord, jsonl_fh, csv_writer, columns) -> None:
    jsonl_fh.write(rec.to_json() + "\n")
    row = dict(rec.params)
    row.update(rec.metrics)
    row["seed"] = rec.seed
    row["status"] = rec.status
    csv_writer.writerow([_csv_value(row.get(col, "")) for col in columns])


@dataclass(frozen=True)
class SweepOutcome:
    records_jsonl: str
    records_csv: str
    summary_json: str
    n_ok: int
    n_failed: int
    n_skipped: int


def run_sweep(cfg: SweepConfig) -> SweepOutcome:
    """Run every (config, seed) task for the tier, resuming past work.

    Appends records, rewrites the tier summary and plot-data CSVs from the
    full record set, and persists the effective config for provenance.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(cfg.to_json() + "\n")

    jsonl_path = out_dir / f"records_{cfg.tier}.jsonl"
    csv_path = out_dir / f"records_{cfg.tier}.csv"
    done = _load_done_keys(jsonl_path)

    configs = enumerate_configs(cfg)
    tasks = []
    n_skipped = 0
    for params in configs:
        for seed in cfg.seeds:
            key = SweepRecord(tier=cfg.tier, params=params, seed=seed).key()
            if key in done:
                n_skipped += 1
            else:
                tasks.append((cfg.tier, params, seed))

    new_jsonl = not jsonl_path.exists()
    new_csv = not csv_path.exists()
    columns = CSV_COLUMNS[cfg.tier]
    n_ok = n_failed = 0
    with jsonl_path.open("a") as jfh, csv_path.open("a", newline="") as cfh:
        if new_jsonl:
            jfh.write(_header_line(cfg) + "\n")
        writer = csv.writer(cfh)
        if new_csv:
            cfh.write(f"# pcgap {__version__} config={cfg.config_hash()}\n")
            writer.writerow(columns)
        if cfg.parallelism > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
                for rec in pool.map(_execute, tasks):
                    _append_record(rec, jfh, writer, columns)
                    n_ok += rec.ok
                    n_failed += not rec.ok
        else:
            for task in tasks:
                rec = _execute(task)
                _append_record(rec, jfh, writer, columns)
                n_ok += rec.ok
                n_failed += not rec.ok

    records = _read_records(jsonl_path)
    summary = _tier_summary(cfg.tier, records)
    summary["counts"] = {"ok": sum(r.ok for r in records),
                         "failed": sum(not r.ok for r in records),
                         "skipped_this_run": n_skipped}
    summary_path = out_dir / f"summary_{cfg.tier}.json"
    summary_path.write_text(json.dumps({"tool": "pcgap", "version": __version__,
                                        "config_hash": cfg.config_hash(),
                                        "summary": summary}, indent=2,
                                       default=float) + "\n")
    _write_plot_data(cfg, records, out_dir)
    return SweepOutcome(records_jsonl=str(jsonl_path), records_csv=str(csv_path),
                        summary_json=str(summary_path), n_ok=n_ok,
                        n_failed=n_failed, n_skipped=n_skipped)


def _read_records(jsonl_path: Path) -> list[SweepRecord]:
    records = []
    bad_lines = []
    with jsonl_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                bad_lines.append(lineno)
                continue
            if "tier" not in obj:
                continue  # header line
            try:
                records.append(SweepRecord.from_json(line))
            except (KeyError, TypeError, ValueError):
                bad_lines.append(lineno)
    if bad_lines:
        raise CorruptRecords(f"unparseable records at lines {bad_lines} "
                             f"in {jsonl_path}")
    return records


# ---------------------------------------------------------------------------
# Aggregation and plot data


def _metric_vector(records, key):
    return [r.metrics[key] for r in records if r.ok and key in r.metrics]


def _stat_dict(res: stats.StatResult) -> dict:
    return {"estimate": res.estimate, "ci_low": res.ci_low,
            "ci_high": res.ci_high, "p_value": res.p_value,
            "method": res.method.value, **res.extras}


def _fidelity_distribution(fids) -> dict:
    if not fids:
        return {"n": 0}
    res = stats.summarize(fids, thresholds=(0.9, 0.8, 0.7))
    arr = np.asarray(fids)
    out = dict(res.extras)
    out["n"] = len(fids)
    out["frac_lt_0.5"] = float((arr < 0.5).mean())
    out["frac_lt_0.3"] = float((arr < 0.3).mean())
    return out


def _nn_summary(records) -> dict:
    ok = [r for r in records if r.ok]
    fids = _metric_vector(records, "fidelity")
    out = {"fidelity": _fidelity_distribution(fids)}
    if ok:
        beats = [r.metrics["val_risk"] < r.metrics["r_star_lin"] for r in ok]
        out["frac_val_below_linear_optimum"] = float(np.mean(beats))
        out["mean_risk_ratio"] = float(np.mean(_metric_vector(records, "risk_ratio")))
        by_config: dict = {}
        for r in ok:
            key = (r.params["a_s"], r.params["a_e"], r.params["c"], r.params["eps"])
            by_config.setdefault(key, []).append(r.metrics["fidelity"])
        ranked = sorted(by_config.items(), key=lambda kv: float(np.mean(kv[1])))

        def fmt(items):
            return [{"a_s": k[0], "a_e": k[1], "c": k[2], "eps": k[3],
                     "mean_fidelity": float(np.mean(v)),
                     "std_fidelity": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0}
                    for k, v in items]

        out["lowest_fidelity_configs"] = fmt(ranked[:3])
        out["highest_fidelity_configs"] = fmt(ranked[-3:][::-1])
    return out


def _highdim_summary(records) -> dict:
    out = {}
    for n in sorted({r.params["n"] for r in records}):
        sub = [r for r in records if r.ok and r.params["n"] == n]
        if not sub:
            continue
        gaps = [r.metrics["gap"] for r in sub]
        out[str(n)] = {
            "n_configs": len(sub),
            "mean_gap": float(np.mean(gaps)),
            "std_gap": float(np.std(gaps, ddof=1)) if len(gaps) > 1 else 0.0,
            "mean_fidelity": float(np.mean([r.metrics["fidelity"] for r in sub])),
            "mean_improvement_pct": float(np.mean(
                [r.metrics["improvement_pct"] for r in sub])),
        }
    return {"per_n": out}


def _duffing_summary(records) -> dict:
    ok = [r for r in records if r.ok]
    out: dict = {"n_failed": sum(not r.ok for r in records)}
    for grounded, tag in ((False, "unconstrained"), (True, "grounded")):
        sub = [r for r in ok if r.params["grounded"] == grounded]
        if not sub:
            continue
        dom = sum(r.metrics["env_dominant"] for r in sub)
        infl = [r.metrics["inflation"] for r in sub]
        out[tag] = {"n": len(sub), "n_dominant": dom,
                    "dominance": _stat_dict(stats.wilson_ci(dom, len(sub))),
                    "inflation": _stat_dict(stats.summarize(infl))}
    unc = [r for r in ok if not r.params["grounded"]]
    grd = [r for r in ok if r.params["grounded"]]
    if unc and grd:
        a = sum(r.metrics["env_dominant"] for r in unc)
        c = sum(r.metrics["env_dominant"] for r in grd)
        b, d = len(unc) - a, len(grd) - c
        try:
            out["fisher_dominance"] = _stat_dict(stats.fisher_exact(a, b, c, d))
        except Exception as exc:
            out["fisher_dominance"] = {"error": str(exc)}
        out["mwu_inflation"] = _stat_dict(stats.mann_whitney_u(
            [r.metrics["inflation"] for r in unc],
            [r.metrics["inflation"] for r in grd]))
    return out


def _tier_summary(tier: str, records) -> dict:
    if tier == "nn_sweep":
        return _nn_summary(records)
    if tier == "highdim":
        return _highdim_summary(records)
    if tier == "duffing":
        return _duffing_summary(records)
    if tier == "linear_grid":
        ok = [r for r in records if r.ok]
        n_nz = sum(r.metrics["nz_optimal"] for r in ok)
        return {"n_configs": len(ok), "n_nz_optimal": n_nz,
                "frac_suboptimal": (len(ok) - n_nz) / len(ok) if ok else None}
    # verify / bifurcation / ib: records are self-describing
    return {"records": [r.metrics for r in records if r.ok]}


def _write_csv(path: Path, header: list[str], rows, cfg: SweepConfig) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# pcgap {__version__} config={cfg.config_hash()}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_value(v) for v in row])


def _write_plot_data(cfg: SweepConfig, records, out_dir: Path) -> None:
    """Plot-data CSVs: fidelity vs config (Fig. 1 analogue comes from the
    linear-grid records CSV directly), the c=-0.50/eps=0.05 heatmap slice,
    gap and fidelity vs N, dominance heatmaps, and dominance/OOD points."""
    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)
    ok = [r for r in records if r.ok]
    if cfg.tier == "nn_sweep" and ok:
        rows = [(r.params["a_s"], r.params["a_e"], r.params["c"],
                 r.params["eps"], r.seed, r.metrics["fidelity"]) for r in ok]
        _write_csv(plots / "nn_fidelity_vs_config.csv",
                   ["a_s", "a_e", "c", "eps", "seed", "fidelity"], rows, cfg)
        cell: dict = {}
        for r in ok:
            if r.params["c"] == -0.5 and r.params["eps"] == 0.05:
                cell.setdefault((r.params["a_s"], r.params["a_e"]), []).append(
                    r.metrics["fidelity"])
        rows = [(a_s, a_e, float(np.mean(v)), len(v))
                for (a_s, a_e), v in sorted(cell.items())]
        _write_csv(plots / "nn_fidelity_heatmap_slice.csv",
                   ["a_s", "a_e", "mean_fidelity", "n_seeds"], rows, cfg)
    elif cfg.tier == "highdim" and ok:
        rows = [(r.params["n"], r.params["c"], r.params["q_s"],
                 r.metrics["gap"], r.metrics["fidelity"]) for r in ok]
        _write_csv(plots / "highdim_gap_fidelity_vs_n.csv",
                   ["n", "c", "q_s", "gap", "fidelity"], rows, cfg)
    elif cfg.tier == "duffing" and ok:
        rows = [(r.params["alpha_e"], r.params["gamma_se"],
                 r.params["grounded"], r.seed, r.metrics["ratio"],
                 r.metrics["env_dominant"], r.metrics["inflation"]) for r in ok]
        _write_csv(plots / "duffing_dominance_heatmap.csv",
                   ["alpha_e", "gamma_se", "grounded", "seed", "ratio",
                    "env_dominant", "inflation"], rows, cfg)
        summary = _duffing_summary(records)
        rows = []
        for tag in ("unconstrained", "grounded"):
            if tag in summary:
                d = summary[tag]["dominance"]
                rows.append((tag, d["estimate"], d["ci_low"], d["ci_high"]))
        _write_csv(plots / "duffing_dominance_ci.csv",
                   ["mode", "fraction", "ci_low", "ci_high"], rows, cfg)


# ---------------------------------------------------------------------------
# Reporting


def report(results_dir: str) -> dict:
    """Consolidated report recomputed from the raw JSONL records (cached
    summaries are ignored).  Returns {"json": dict, "text": str}."""
    out_dir = Path(results_dir)
    paths = sorted(out_dir.glob("records_*.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no record files under {results_dir}")
    consolidated = {}
    lines = []
    for path in paths:
        tier = path.stem.replace("records_", "")
        records = _read_records(path)
        summary = _tier_summary(tier, records)
        summary["counts"] = {"total": len(records),
                             "ok": sum(r.ok for r in records),
                             "failed": sum(not r.ok for r in records)}
        consolidated[tier] = summary
        lines.append(f"== {tier} ==")
        lines.append(f"  records: {summary['counts']['ok']} ok / "
                     f"{summary['counts']['failed']} failed")
        lines.extend(_format_tier(tier, summary))
        lines.append("")
    return {"json": consolidated, "text": "\n".join(lines)}


def _format_tier(tier: str, summary: dict) -> list[str]:
    rows = []
    if tier == "nn_sweep" and summary.get("fidelity", {}).get("n"):
        fd = summary["fidelity"]
        rows.append(f"  fidelity: mean {fd['mean']:.3f}  median {fd['median']:.3f}"
                    f"  std {fd['std']:.3f}  min {fd['min']:.3f}  max {fd['max']:.3f}")
        rows.append(f"  fraction > 0.70: {100 * fd['frac_gt_0.7']:.1f}%"
                    f"   fraction < 0.50: {100 * fd['frac_lt_0.5']:.1f}%")
        if "frac_val_below_linear_optimum" in summary:
            rows.append(f"  runs with val risk below linear optimum: "
                        f"{100 * summary['frac_val_below_linear_optimum']:.1f}%")
    elif tier == "highdim":
        for n, d in summary.get("per_n", {}).items():
            rows.append(f"  N={n}: gap {d['mean_gap']:.3f} +/- {d['std_gap']:.3f}"
                        f"  fidelity {d['mean_fidelity']:.2e}"
                        f"  improvement {d['mean_improvement_pct']:.1f}%")
    elif tier == "duffing":
        for tag in ("unconstrained", "grounded"):
            if tag in summary:
                d = summary[tag]
                dom = d["dominance"]
                infl = d["inflation"]
                rows.append(f"  {tag}: dominant {d['n_dominant']}/{d['n']} "
                            f"(CI [{dom['ci_low']:.2f}, {dom['ci_high']:.2f}]), "
                            f"inflation median {infl['median']:.2f} "
                            f"IQR [{infl['iqr_low']:.2f}, {infl['iqr_high']:.2f}]")
        if "fisher_dominance" in summary and "estimate" in summary["fisher_dominance"]:
            f = summary["fisher_dominance"]
            rows.append(f"  Fisher dominance: OR {f['estimate']:.2f} p {f['p_value']:.2e}")
        if "mwu_inflation" in summary:
            m = summary["mwu_inflation"]
            rows.append(f"  Mann-Whitney inflation: U {m['estimate']:.1f} "
                        f"p {m['p_value']:.2e}")
    elif tier == "linear_grid" and summary.get("n_configs"):
        rows.append(f"  configs: {summary['n_configs']}, NZ-optimal: "
                    f"{summary['n_nz_optimal']}")
    elif tier in ("verify", "bifurcation", "ib"):
        for rec in summary.get("records", []):
            keys = [k for k in ("r_nz", "r_env", "r_star", "theta_star_deg",
                                "ratio", "c_star", "beta", "ib_value") if k in rec]
            rows.append("  " + "  ".join(f"{k}={rec[k]:.4g}" for k in keys))
    return rows
