"""Experiment orchestration behind the command line."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io
from .config import RunConfig
from .diagnostics import (DiagnosticsSink, energy, energy_positive_variation, entropy, fit_trend,
                          h1_envelope, interaction, series_columns)
from .dynamics import DT_COLLAPSE, FINISHED, OVERFLOW, ChemotaxisSystem, SimulationError
from .elliptic import HelmholtzOperator, LinearSolveError
from .grid import ConfigurationError, build_grid
from .initdata import (BlowupRecipe, construct_blowup, rescale_mass, standard_profile,
                       verify_construction_asymptotics)
from .motility import MotilityDomainError
from .steady import constant_branch_energy, continuation_sweep, newton_steady

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2
EXIT_OVERFLOW = 3
EXIT_DT_COLLAPSE = 4
EXIT_CHECK_FAILED = 5
EXIT_SCHEMA = 6
EXIT_RUNTIME = 7

EXIT_CODES = {
    EXIT_OK: "success (run reached t_end)",
    EXIT_FAILURES: "sweep finished but at least one entry failed",
    EXIT_CONFIG: "configuration error (nothing written)",
    EXIT_OVERFLOW: "run stopped: ||u||_inf exceeded overflow_cap or became non-finite",
    EXIT_DT_COLLAPSE: "run stopped: required dt fell below dt_min",
    EXIT_CHECK_FAILED: "check: at least one assertion failed",
    EXIT_SCHEMA: "check: series file missing columns or unreadable",
    EXIT_RUNTIME: "runtime failure (linear solve, motility domain, I/O)",
}

STATUS_EXIT = {FINISHED: EXIT_OK, OVERFLOW: EXIT_OVERFLOW, DT_COLLAPSE: EXIT_DT_COLLAPSE}


def make_system(cfg: RunConfig):
    grid = build_grid(cfg.grid.geometry, cfg.grid.n_cells, cfg.grid.extent)
    return ChemotaxisSystem(grid, cfg.motility.build(), cfg.mu, HelmholtzOperator(grid))


def initial_density(cfg: RunConfig, system: ChemotaxisSystem):
    """Initial u and a dict of construction facts (e.g. the amplitude ``a``)."""
    grid = system.grid
    spec = cfg.initial
    info = {}
    if spec.kind == "blowup":
        recipe = BlowupRecipe(spec.Lambda, spec.lam, spec.r, spec.r1)
        u0, _, a = construct_blowup(recipe, grid, system.helmholtz)
        info["a"] = a
        return u0, info
    if spec.kind == "steady":
        if spec.mass <= 0:
            raise ConfigurationError("initial.mass must be positive for kind=steady")
        guess = np.full(grid.n_cells, spec.mass / grid.volume)
        entry = newton_steady(spec.mass, grid, guess, system.helmholtz)
        if not entry.converged:
            raise ConfigurationError(f"no steady state found for mass {spec.mass}")
        return entry.u, info
    try:
        u0 = standard_profile(spec.kind, grid, c=spec.c, amp=spec.amp, width=spec.width, eps=spec.eps)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    if spec.mass > 0:
        u0 = rescale_mass(grid, u0, spec.mass)
    return u0, info


class SnapshotHook:
    def __init__(self, system, times, directory, meta):
        self.system = system
        self.pending = sorted(float(t) for t in times)
        self.directory = directory
        self.meta = meta
        self.written = []

    def __call__(self, prev, state):
        while self.pending and state.t >= self.pending[0] - 1e-12:
            target = self.pending.pop(0)
            path = os.path.join(self.directory, f"snapshot_t{target:g}.csv")
            io.write_snapshot(path, self.system.grid, state.u, state.v, state.t, self.meta)
            self.written.append(path)


class CheckpointHook:
    def __init__(self, system, every, directory, config_hash, sink):
        self.system = system
        self.every = int(every)
        self.directory = directory
        self.config_hash = config_hash
        self.sink = sink
        self.last = None

    def save(self, state, name):
        path = os.path.join(self.directory, name)
        io.save_checkpoint(path, self.system.grid, state, self.config_hash,
                           extra={"v0": self.sink.v0, "v_star": self.sink.v_star, "t0": self.sink.t0})
        self.last = path
        return path

    def __call__(self, prev, state):
        if prev is not None and self.every > 0 and state.step % self.every == 0:
            self.save(state, f"checkpoint_{state.step:09d}.npz")

    def close(self, state):
        self.save(state, "final.npz")


def run_experiment(cfg: RunConfig, out_dir=None, resume=None, plots=True):
    """Time-dependent run.  Returns ``(exit_code, metrics)``."""
    out_dir = out_dir or cfg.output_dir
    system = make_system(cfg)
    h = cfg.content_hash()
    meta = {"config_hash": h}
    state = None
    sink_kw = {}
    if resume is not None:
        desc, state, ck_hash, extra = io.load_checkpoint(resume)
        if desc != system.grid.descriptor():
            raise ConfigurationError(f"checkpoint grid {desc} does not match config grid")
        if ck_hash != h:
            log.warning("resuming checkpoint written under config %s with config %s", ck_hash, h)
        meta["resumed_from"] = ck_hash
        sink_kw = {"v0": extra.get("v0"),
                   "v_star": float(extra["v_star"]) if "v_star" in extra else None,
                   "t0": float(extra["t0"]) if "t0" in extra else None}
        u0 = None
        info = {}
    else:
        u0, info = initial_density(cfg, system)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.ini"), "w") as fh:
        fh.write(cfg.to_ini())
    d = cfg.diagnostics
    columns = series_columns(d.alphas, d.p_values)
    series_path = os.path.join(out_dir, "series.csv")
    writer = io.CsvTable(series_path, columns, io.SERIES_SCHEMA,
                         {**meta, "mu": io.fmt(cfg.mu), "motility": cfg.motility.kind,
                          "volume": io.fmt(system.grid.volume),
                          **{k: io.fmt(v) for k, v in info.items()}})
    sink = DiagnosticsSink(system, every=d.every, alphas=d.alphas, p_values=d.p_values,
                           writer=writer, **sink_kw)
    hooks = [sink, SnapshotHook(system, d.snapshot_times, out_dir, meta),
             CheckpointHook(system, d.checkpoint_every, out_dir, h, sink)]
    started = time.time()
    try:
        final, status = system.run(cfg.scheme, u0=u0, state=state, hooks=hooks)
    finally:
        writer.close()
    with open(os.path.join(out_dir, "run_info.txt"), "w") as fh:
        fh.write(f"finished_at={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        fh.write(f"wall_seconds={time.time() - started:.3f}\n")
    io.write_snapshot(os.path.join(out_dir, "final_state.csv"), system.grid, final.u, final.v, final.t, meta)
    if plots:
        from . import plots as _plots
        _plots.plot_series(sink.rows, os.path.join(out_dir, "series.png"))
        _plots.plot_profile(system.grid, final.u, final.v, os.path.join(out_dir, "final_state.png"),
                            title=f"t = {final.t:g}")
    metrics = {"status": status, "t": final.t, "steps": final.step,
               "u_inf_max": max(r["u_inf"] for r in sink.rows), **info}
    return STATUS_EXIT[status], metrics


def best_found_floor(cfg: RunConfig, system, Lambda):
    """Lowest energy among steady states found at mass ``Lambda``.

    Candidates: the constant state and the end point of a continuation from
    ``[experiment] Lambda_start``.  This is only an upper estimate of the
    infimum over all steady states.  Returns ``(energy, candidates_found)``.
    """
    g = system.grid
    energies = [constant_branch_energy(g, Lambda)]
    ex = cfg.experiment
    if ex.Lambda_start < Lambda:
        branch = continuation_sweep(ex.Lambda_start, Lambda, ex.steps, g, system.helmholtz)
        last = branch.entries[-1] if branch.entries else None
        if last is not None and last.converged and abs(last.Lambda - Lambda) <= 1e-9 * Lambda:
            energies.append(last.energy)
    return min(energies), len(energies)


def construct_experiment(cfg: RunConfig, out_dir=None, plots=True):
    """Build the concentration family member and report its functionals."""
    out_dir = out_dir or cfg.output_dir
    system = make_system(cfg)
    spec = cfg.initial
    recipe = BlowupRecipe(spec.Lambda, spec.lam, spec.r, spec.r1)
    u0, v0, a = construct_blowup(recipe, system.grid, system.helmholtz)
    g = system.grid
    lo, hi = recipe.a_bracket()
    E = energy(g, u0, v0)
    floor, n_found = best_found_floor(cfg, system, spec.Lambda)
    metrics = {"Lambda": spec.Lambda, "lambda": spec.lam, "a": a, "a_lower": lo, "a_upper": hi,
               "mass": float(g.cell_measures @ u0), "entropy": entropy(g, u0),
               "interaction": interaction(g, u0, v0), "energy": E,
               "E_star_best_found": floor, "steady_states_found": n_found,
               "below_E_star_best_found": int(E < floor)}
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.content_hash()
    io.write_snapshot(os.path.join(out_dir, "initial_state.csv"), g, u0, v0, 0.0,
                      {"config_hash": h, "a": io.fmt(a)})
    with io.CsvTable(os.path.join(out_dir, "construct.csv"), list(metrics), io.SUMMARY_SCHEMA,
                     {"config_hash": h}) as out:
        out.write_row(metrics)
    if plots:
        from . import plots as _plots
        _plots.plot_profile(g, u0, v0, os.path.join(out_dir, "initial_state.png"), logy=True,
                            title=f"Lambda = {spec.Lambda:g}, lambda = {spec.lam:g}, a = {a:.6g}")
    return EXIT_OK, metrics


def asymptotics_experiment(cfg: RunConfig, out_dir=None, plots=True):
    out_dir = out_dir or cfg.output_dir
    system = make_system(cfg)
    spec = cfg.initial
    rep = verify_construction_asymptotics(spec.Lambda, cfg.experiment.lambdas, system.grid,
                                          system.helmholtz, r=spec.r, r1=spec.r1)
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.content_hash()
    cols = ["lambda", "a", "entropy", "interaction", "energy"]
    with io.CsvTable(os.path.join(out_dir, "asymptotics.csv"), cols, io.SUMMARY_SCHEMA,
                     {"config_hash": h, **{k: io.fmt(v) for k, v in rep.as_dict().items()}}) as out:
        for row in zip(rep.lambdas, rep.a, rep.entropy, rep.interaction, rep.energy):
            out.write_row(dict(zip(cols, row)))
    if plots:
        from . import plots as _plots
        _plots.plot_asymptotics(rep, os.path.join(out_dir, "asymptotics.png"))
    metrics = rep.as_dict()
    metrics.update(entropy_ok=int(rep.entropy_ok), interaction_ok=int(rep.interaction_ok),
                   energy_ok=int(rep.energy_ok), excluded=len(rep.excluded))
    return EXIT_OK, metrics


def steady_experiment(cfg: RunConfig, out_dir=None, plots=True):
    out_dir = out_dir or cfg.output_dir
    system = make_system(cfg)
    ex = cfg.experiment
    branch = continuation_sweep(ex.Lambda_start, ex.Lambda_end, ex.steps, system.grid, system.helmholtz)
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.content_hash()
    cols = ["Lambda", "E", "residual", "converged", "v_max", "iterations", "capacitance_det"]
    with io.CsvTable(os.path.join(out_dir, "branch.csv"), cols, io.BRANCH_SCHEMA,
                     {"config_hash": h}) as out:
        for e in branch.entries:
            out.write_row({"Lambda": e.Lambda, "E": e.energy, "residual": e.residual,
                           "converged": e.converged, "v_max": e.v_max, "iterations": e.iterations,
                           "capacitance_det": e.capacitance_det})
    if plots:
        from . import plots as _plots
        _plots.plot_branch(branch, os.path.join(out_dir, "branch.png"))
    metrics = {"entries": len(branch.entries), "gaps": len(branch.gaps),
               "best_energy": branch.best_energy()}
    return EXIT_OK, metrics


EXPERIMENT_RUNNERS = {
    "run": run_experiment,
    "construct": construct_experiment,
    "asymptotics": asymptotics_experiment,
    "steady": steady_experiment,
}


def execute(cfg: RunConfig, kind=None, out_dir=None, resume=None, plots=True):
    """Run one experiment, mapping every failure to an exit code.

    Returns ``(exit_code, metrics, message)``.
    """
    kind = kind or cfg.experiment.kind
    try:
        if kind == "run":
            code, metrics = run_experiment(cfg, out_dir, resume=resume, plots=plots)
        else:
            code, metrics = EXPERIMENT_RUNNERS[kind](cfg, out_dir, plots=plots)
    except ConfigurationError as exc:
        return EXIT_CONFIG, {}, f"configuration error: {exc}"
    except (SimulationError, LinearSolveError, MotilityDomainError, OSError, io.SchemaError) as exc:
        return EXIT_RUNTIME, {}, f"runtime failure: {exc}"
    msg = EXIT_CODES[code] if code else "ok"
    return code, metrics, msg


# -- check ---------------------------------------------------------------------------

def _require(columns, names, path):
    missing = [n for n in names if n not in columns]
    if missing:
        raise io.SchemaError(f"{path}: missing columns {missing}")


def _col(rows, name):
    return np.array([r[name] for r in rows], dtype=float)


def evaluate_checks(paths, spec: dict):
    """Evaluate assertions over series files.

    ``spec`` maps check names to parameter dicts.  Checks:
    ``mass_drift`` (max), ``mass_cap`` (rel_tol), ``energy_variation``
    (max_rel), ``mass_balance`` (max_rel: int u vs int v), ``pte1`` (rel_tol,
    t_max), ``pte3`` (tol), ``identity_residual`` (max), ``h1_envelope`` (max),
    ``trend`` (columns, expect, r2_min, window).
    Returns a list of ``(path, check, passed, detail)``.
    """
    results = []
    for path in paths:
        meta, columns, rows = io.read_table(path)
        if meta.get("schema") != io.SERIES_SCHEMA:
            raise io.SchemaError(f"{path}: not a series file (schema {meta.get('schema')!r})")
        _require(columns, ["t"], path)
        t = _col(rows, "t")
        for name, params in spec.items():
            kind = params.get("check", name.split(".")[0])
            p = {k: v for k, v in params.items() if k != "check"}
            results.append((path, name, *_one_check(kind, p, columns, rows, t, meta, path)))
    return results


def _one_check(kind, p, columns, rows, t, meta, path):
    if kind == "mass_drift":
        _require(columns, ["mass"], path)
        m = _col(rows, "mass")
        drift = float(np.max(np.abs(m - m[0])) / m[0])
        return drift < float(p.get("max", 1e-10)), f"drift={drift:.3e}"
    if kind == "mass_cap":
        _require(columns, ["mass"], path)
        m = _col(rows, "mass")
        if "volume" not in p and "volume" not in meta:
            raise io.SchemaError(f"{path}: mass_cap needs the domain volume")
        vol = float(p.get("volume", meta.get("volume")))
        cap = max(m[0], vol) * (1 + float(p.get("rel_tol", 1e-6)))
        worst = float(np.max(m))
        return worst <= cap, f"max mass={worst:.6g} cap={cap:.6g}"
    if kind == "mass_balance":
        _require(columns, ["mass", "mass_v"], path)
        m, mv = _col(rows, "mass"), _col(rows, "mass_v")
        rel = float(np.max(np.abs(m - mv) / np.abs(m)))
        return rel < float(p.get("max_rel", 1e-10)), f"max |int u - int v|/int u={rel:.3e}"
    if kind == "energy_variation":
        _require(columns, ["energy"], path)
        e = _col(rows, "energy")
        tpv = energy_positive_variation(e)
        lim = float(p.get("max_rel", 1e-3)) * abs(e[0])
        return tpv < lim, f"positive variation={tpv:.3e} limit={lim:.3e}"
    if kind == "pte1":
        _require(columns, ["bound_margin_pte1", "v_inf"], path)
        keep = t <= float(p.get("t_max", math.inf))
        margin = _col(rows, "bound_margin_pte1")[keep]
        vinf = _col(rows, "v_inf")[keep]
        tol = float(p.get("rel_tol", 1e-6)) * float(np.max(vinf))
        worst = float(np.min(margin))
        return worst >= -tol, f"min margin={worst:.3e} tol={tol:.3e}"
    if kind == "pte3":
        _require(columns, ["bound_margin_pte3"], path)
        margin = _col(rows, "bound_margin_pte3")
        margin = margin[np.isfinite(margin)]
        if margin.size == 0:
            return False, "pte3 bound not applicable (mu <= gamma(v_*))"
        worst = float(np.min(margin))
        return worst >= -float(p.get("tol", 1e-6)), f"min margin={worst:.3e}"
    if kind == "identity_residual":
        _require(columns, ["identity_residual"], path)
        r = _col(rows, "identity_residual")
        worst = float(np.nanmax(r)) if np.any(np.isfinite(r)) else float("nan")
        return worst <= float(p.get("max", 1e-3)), f"max residual={worst:.3e}"
    if kind == "h1_envelope":
        _require(columns, ["grad_norm"], path)
        env = h1_envelope(t, _col(rows, "grad_norm"))
        return env <= float(p.get("max", math.inf)), f"max ||v||_H1^2/(1+t)={env:.6g}"
    if kind == "trend":
        cols = [c.strip() for c in str(p.get("columns", "interaction")).split(",") if c.strip()]
        _require(columns, cols, path)
        expect = p.get("expect", "growing")
        window = float(p.get("window", 0.5))
        r2_min = float(p.get("r2_min", 0.9))
        t_cut = t[0] + (1 - window) * (t[-1] - t[0])
        keep = t >= t_cut
        details, ok = [], True
        for c in cols:
            fit = fit_trend(c, t[keep], _col(rows, c)[keep], r2_min=r2_min)
            details.append(f"{c}: slope={fit.slope:.3e} R2={fit.r2:.4f} {fit.flag}")
            ok &= fit.flag == expect
        return ok, "; ".join(details)
    raise io.SchemaError(f"unknown check {kind!r}")


def load_check_spec(path):
    import configparser
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_string(fh.read())
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read check spec {path}: {exc}") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


# -- sweep ---------------------------------------------------------------------------

def read_manifest(path):
    """Config paths, one per line, relative to the manifest; ``#`` comments."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                entries.append(line if os.path.isabs(line) else os.path.join(base, line))
    return entries


def _sweep_entry(args):
    index, config_path, out_dir, plots = args
    logging.disable(logging.WARNING)
    try:
        cfg = RunConfig.load(config_path)
    except ConfigurationError as exc:
        return index, config_path, "", EXIT_CONFIG, {}, f"configuration error: {exc}"
    entry_out = os.path.join(out_dir, f"entry_{index:03d}")
    code, metrics, msg = execute(cfg, out_dir=entry_out, plots=plots)
    return index, config_path, cfg.experiment.kind, code, metrics, msg


def sweep(manifest, out_dir, jobs=1, plots=False):
    """Run every manifest entry; one failure never stops the others."""
    entries = read_manifest(manifest)
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(i, p, out_dir, plots) for i, p in enumerate(entries)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_entry, tasks))
    else:
        results = [_sweep_entry(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    metric_names = sorted({k for r in results for k in r[4]})
    cols = ["entry", "config", "kind", "exit_code", "message"] + metric_names
    with io.CsvTable(os.path.join(out_dir, "summary.csv"), cols, io.SUMMARY_SCHEMA) as out:
        for index, path, kind, code, metrics, msg in results:
            out.write_row({"entry": index, "config": os.path.relpath(path, os.path.dirname(os.path.abspath(manifest))),
                           "kind": kind, "exit_code": code, "message": msg.replace(",", ";"), **metrics})
    failed = sum(1 for r in results if r[3] != EXIT_OK)
    return (EXIT_FAILURES if failed else EXIT_OK), results
