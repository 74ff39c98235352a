"""Command-line front end: ``quditgates {run,sweep,analyze,counts}``."""
import argparse
import logging
import platform as _pyplatform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import DomainError
from .config import ConfigError, load_config
from .controllability import controllability_report, lie_closure_rank, tensor_decompose
from .grape import GrapeOptions, GrapeProblem, default_workers, n_min, optimize
from .io import (write_circuit, write_json, write_pair_spectrum, write_ratios, write_spectrum,
                 write_sweep, write_waveform)
from .liegroup import LayerOptions, min_layers, optimize_layers, search_layers
from .linalg import symmetric_subspace_isometry
from .platform import build_model
from .targets import gate_from_name

logger = logging.getLogger("quditgates")


def _target(cfg, model):
    return gate_from_name(cfg.gate, cfg.k, model.d_phys, cfg.level_map)


def _report_common(cfg, target):
    return {
        "schema_version": 1,
        "engine": cfg.engine,
        "target": {"gate": cfg.gate, "name": target.name, "k": target.k, "d": target.d,
                   "level_map": list(target.level_map)},
        "platform": cfg.platform.to_dict(),
        "seeds": list(cfg.seeds),
        "open_system": cfg.open_system,
        "target_infidelity": cfg.target_infidelity,
    }


def _runs_summary(report):
    return [{"seed": r["seed"], "final_fidelity": r["final_fidelity"],
             "iterations": r["iterations"]} for r in report.runs]


def _grape_options(cfg, open_system, seeds=None):
    g = cfg.grape
    return GrapeOptions(
        method=g.get("method", "lbfgs"),
        seeds=tuple(cfg.seeds if seeds is None else seeds),
        target_infidelity=cfg.target_infidelity,
        max_iter=g.get("max_iter", 5000),
        stall_iterations=g.get("stall_iterations", 20),
        stall_tol=g.get("stall_tol", 1e-10),
        open_system=open_system,
        symmetric=g.get("symmetric", True),
        n_jobs=default_workers(),
    )


def run_grape(cfg, out):
    model = build_model(cfg.platform)
    target = _target(cfg, model)
    g = cfg.grape
    T = g["total_time_over_pi"] * np.pi
    report = optimize(target, model, g["n_steps"], T, _grape_options(cfg, cfg.open_system))
    wf = report.solution
    symmetric = g.get("symmetric", True)
    closed = GrapeProblem(model, target, False, symmetric).fidelity(wf.phases, wf.dt)
    opened = GrapeProblem(model, target, True, symmetric).fidelity(wf.phases, wf.dt)
    write_waveform(out / "waveform.csv", wf)
    data = _report_common(cfg, target)
    data.update({
        "options": {k: v for k, v in g.items() if k != "total_time"},
        "n_min": n_min(*_rank_dim(target, model, symmetric)),
        "best_waveform": {"file": "waveform.csv", "n_steps": wf.n_steps, "dt": wf.dt,
                          "total_time": wf.total_time,
                          "total_time_over_pi": g["total_time_over_pi"]},
        "final_fidelity": report.final_fidelity,
        "infidelity": report.infidelity,
        "fidelity_closed": closed,
        "fidelity_open": opened,
        "converged": report.converged,
        "seed": report.seed,
        "iterations": report.iterations,
        "fidelity_history": report.fidelity_history,
        "runs": _runs_summary(report),
    })
    return data, report.wall_time


def _rank_dim(target, model, symmetric):
    if symmetric:
        return target.k * (target.k + 1) // 2, model.d_phys * (model.d_phys + 1) // 2
    return target.k ** 2, model.d_phys ** 2


def run_liegroup(cfg, out):
    model = build_model(cfg.platform)
    target = _target(cfg, model)
    lg = cfg.liegroup
    opts = LayerOptions(method=lg.get("method", "lbfgs"), seeds=tuple(cfg.seeds),
                        target_infidelity=cfg.target_infidelity,
                        max_iter=lg.get("max_iter", 5000), open_system=cfg.open_system,
                        n_jobs=default_workers())
    mode = lg.get("mode", "local")
    history = None
    start = time.perf_counter()
    if lg.get("search", False):
        n, report, history = search_layers(target, model, mode, lg["n_layers"],
                                           lg.get("max_layers"), opts)
    else:
        report = optimize_layers(target, model, lg["n_layers"], mode, opts)
    write_circuit(out / "circuit.json", report.solution)
    data = _report_common(cfg, target)
    data.update({
        "options": lg,
        "min_layers": min_layers(target.k),
        "circuit": {"file": "circuit.json", "n_layers": report.solution.n_layers,
                    "mode": mode},
        "final_fidelity": report.final_fidelity,
        "infidelity": report.infidelity,
        "converged": report.converged,
        "seed": report.seed,
        "iterations": report.iterations,
        "fidelity_history": report.fidelity_history,
        "runs": _runs_summary(report),
    })
    if history is not None:
        data["layer_search"] = {str(n): f for n, f in history.items()}
    return data, time.perf_counter() - start


def run_analyze(cfg, out):
    model = build_model(cfg.platform)
    d = model.d_phys
    j = (d * d - 1) / 2
    H = model.entangling_hamiltonian()
    spectrum = tensor_decompose(H, j)
    write_spectrum(out / "spectrum.csv", spectrum)
    threshold = cfg.analyze.get("threshold", 1e-8)
    gens = [H, model.rf_generator(0.0), model.rf_generator(np.pi / 2)]
    report = controllability_report(gens, j, threshold)
    data = {
        "schema_version": 1,
        "engine": "analyze",
        "platform": cfg.platform.to_dict(),
        "spin": j,
        "spectrum": {"file": "spectrum.csv", "total_weight": spectrum.total(),
                     "rank_weights": {str(k): w for k, w in
                                      sorted(spectrum.rank_weights().items())}},
        "controllability": report.to_dict(),
    }
    if cfg.analyze.get("lie_closure", False):
        S = symmetric_subspace_isometry(d)
        res = lie_closure_rank([S.T @ g @ S for g in gens], max_dim=S.shape[1])
        data["lie_closure"] = {"rank": res.rank, "full_rank": res.full_rank,
                               "partial": res.partial, "space": "symmetric"}
    return data


def _sweep_point(cfg, model, target, T_over_pi):
    sw = cfg.sweep
    if "n_steps" in sw:
        n = sw["n_steps"]
    elif "step_time" in sw:
        n = max(1, int(round(T_over_pi / sw["step_time"])))
    else:
        n = cfg.grape["n_steps"]
    row = {"total_time_over_pi": T_over_pi, "total_time_over_pi_per_k": T_over_pi / target.k,
           "infidelity_closed": None, "infidelity_open": None, "status": "ok"}
    try:
        for key, open_system in (("infidelity_closed", False), ("infidelity_open", True)):
            opts = _grape_options(cfg, open_system)
            opts.n_jobs = 1
            rep = optimize(target, model, n, T_over_pi * np.pi, opts)
            row[key] = rep.infidelity
    except Exception as exc:  # a failed point must not stop the sweep
        row["status"] = f"error: {exc}"
    return row


def run_sweep(cfg, out):
    if not cfg.sweep:
        raise ConfigError(cfg.source, [(None, "sweep", "no sweep section in config")])
    model = build_model(cfg.platform)
    target = _target(cfg, model)
    times = cfg.sweep["total_times"]
    workers = default_workers()
    if workers > 1 and len(times) > 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=workers)(delayed(_sweep_point)(cfg, model, target, T)
                                        for T in times)
    else:
        rows = [_sweep_point(cfg, model, target, T) for T in times]
    write_sweep(out / "sweep.csv", rows)
    return rows


def _write_extras(cfg, out):
    model = None
    if cfg.outputs.get("pair_spectrum"):
        model = build_model(cfg.platform)
        write_pair_spectrum(out / "pair_spectrum.csv", model)
    if cfg.outputs.get("rabi_ratios"):
        model = model or build_model(cfg.platform)
        write_ratios(out / "rabi_ratios.csv", cfg.platform.F_a, model.rabi_ratios)


def _metadata(command, cfg, wall_time):
    return {
        "command": command,
        "config": cfg.source,
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_time": wall_time,
        "workers": default_workers(),
        "version": __version__,
        "python": _pyplatform.python_version(),
        "numpy": np.__version__,
    }


def _prepare(args):
    cfg = load_config(args.config)
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def cmd_run(args):
    cfg, out = _prepare(args)
    start = time.perf_counter()
    if cfg.engine == "grape":
        data, _ = run_grape(cfg, out)
    elif cfg.engine == "liegroup":
        data, _ = run_liegroup(cfg, out)
    else:
        data = run_analyze(cfg, out)
    if cfg.sweep:
        data["sweep"] = {"file": "sweep.csv", "points": run_sweep(cfg, out)}
    _write_extras(cfg, out)
    write_json(out / "report.json", data)
    write_json(out / "metadata.json", _metadata("run", cfg, time.perf_counter() - start))
    status = "converged" if data.get("converged", True) else "not converged"
    print(f"{cfg.engine}: {status}; artifacts in {out}")
    return 0


def cmd_sweep(args):
    cfg, out = _prepare(args)
    start = time.perf_counter()
    rows = run_sweep(cfg, out)
    model = build_model(cfg.platform)
    target = _target(cfg, model)
    data = _report_common(cfg, target)
    data.update({"engine": "sweep", "sweep": {"file": "sweep.csv", "points": rows}})
    write_json(out / "report.json", data)
    write_json(out / "metadata.json", _metadata("sweep", cfg, time.perf_counter() - start))
    print(f"sweep: {len(rows)} points; artifacts in {out}")
    return 0


def cmd_analyze(args):
    cfg, out = _prepare(args)
    start = time.perf_counter()
    data = run_analyze(cfg, out)
    _write_extras(cfg, out)
    write_json(out / "report.json", data)
    write_json(out / "metadata.json", _metadata("analyze", cfg, time.perf_counter() - start))
    print(f"analyze: {data['controllability']['verdict']}; artifacts in {out}")
    return 0


def counts_table(ks, d):
    """Rows for the parameter-count tables at physical dimension ``d``."""
    D = d * (d + 1) // 2
    rows = []
    for k in ks:
        K = k * (k + 1) // 2
        rows.append({"k": k, "K": K, "D": D, "n_min": n_min(K, D),
                     "layers_min": min_layers(k)})
    return rows


def cmd_counts(args):
    rows = counts_table(args.k, args.d)
    print("k\tK\tD\tn_min\tlayers_min")
    for r in rows:
        print(f"{r['k']}\t{r['K']}\t{r['D']}\t{r['n_min']}\t{r['layers_min']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="quditgates",
                                     description="Two-qudit gate synthesis on a dressed-atom platform.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_ in (("run", cmd_run, "run the engine named in the config"),
                              ("sweep", cmd_sweep, "infidelity versus gate time"),
                              ("analyze", cmd_analyze, "spherical-tensor controllability")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("-o", "--output-dir", help="override output_dir from the config")
        p.set_defaults(func=func)
    p = sub.add_parser("counts", help="minimum parameter and layer counts")
    p.add_argument("--k", type=int, nargs="+", default=[2, 3, 5, 7], help="logical dimensions")
    p.add_argument("--d", type=int, default=10, help="physical dimension")
    p.set_defaults(func=cmd_counts)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
