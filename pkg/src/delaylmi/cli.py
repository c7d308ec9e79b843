"""Batch command-line front end.

    delaylmi analyze|design|simulate|sweep|export-sdpa|check-certificate
             --config <file> --out <dir> [--seed N] [--jobs N]

Exit codes: 0 ok or feasible, 1 usage or configuration error, 2 infeasible
(or certificate rejected), 3 numerically inconclusive.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import report as rpt
from .conditions import (GainRecoveryError, corollary1_problem, lemma2_problem, recover_gains,
                         theorem1_problem, unbar_certificate)
from .config import TASKS, ConfigError, RunConfig, load_config
from .model import DelaySystem, ModelError, build_closed_loop
from .sdp import FEASIBLE, INFEASIBLE, SolverConfig, normalize, recheck, solve
from .sdp.sdpa import SdpaParseError, export_sdpa, read_solution_vector, write_solution
from .simverify import (MAX_AUGMENTED_DIM, DelaySignal, LkfCertificate, brute_force_cross_check,
                        check_path_complete_decrease, eval_lkf, simulate)

log = logging.getLogger("delaylmi")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INCONCLUSIVE = 0, 1, 2, 3
_STATUS_EXIT = {FEASIBLE: EXIT_OK, INFEASIBLE: EXIT_INFEASIBLE}

# a decrease violation larger than this (relative to m(k)) is not rounding noise
_MISMATCH_LEVEL = 1e-6


def _exit_for(status: str) -> int:
    return _STATUS_EXIT.get(status, EXIT_INCONCLUSIVE)


def _solver_part(result) -> tuple[dict, float]:
    diag = dict(result.diagnostics)
    seconds = float(diag.pop("solve_seconds", 0.0))
    return diag, seconds


def _margins_part(result) -> dict:
    return {name: {"min_eig": result.margins[name], "required": result.required[name],
                   "tolerance": result.tolerances[name]} for name in result.margins}


def _tolerances(solver: SolverConfig, extra: dict | None = None) -> dict:
    t = {"solver": solver.as_dict(),
         "recheck": "strict: lambda_min >= max(1e-8, 1e-9*||C||_F) - 1e-7*(1+||C||_F)"
                    " and lambda_min > rel_positive*||M||_F; non-strict: lambda_min >= -tol"}
    t.update(extra or {})
    return t


# ------------------------------------------------------------ analysis pipeline

def _random_trajectories(sys: DelaySystem, count: int, horizon: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        phi = rng.normal(size=(sys.d_M + 1, sys.n))
        out.append(simulate(sys, phi, DelaySignal.random(seed + i, sys.d_m, sys.d_M), horizon))
    return out


def run_checks(sys: DelaySystem, cert: LkfCertificate, checks: dict, seed: int) -> dict:
    """Trajectory-level checks of a switched certificate."""
    count = checks.get("trajectories", 20)
    horizon = checks.get("horizon", 200)
    trajs = _random_trajectories(sys, count, horizon, seed)
    dec = check_path_complete_decrease(cert, trajs)
    worst = 0.0
    for tr in trajs[:5]:
        for k in range(0, tr.horizon + 1, max(1, tr.horizon // 10)):
            for j in (1, 2):
                direct, quad = eval_lkf(cert, j, tr.window(k))
                worst = max(worst, abs(direct - quad) / (1.0 + abs(direct)))
    violations = [asdict(v) for v in dec.violations[:20]]
    out = {"decrease": {"trajectories": count, "horizon": horizon, "seed": seed,
                        "steps_checked": dec.steps_checked,
                        "violations": len(dec.violations), "first_violations": violations,
                        "ok": dec.ok},
           "lkf_dual_evaluation": {"max_rel_diff": worst, "ok": worst <= 1e-9}}
    if dec.violations:
        # separate rounding noise from a functional that does not match the conditions
        rel = []
        for v in dec.violations:
            tr = trajs[v.trajectory]
            w = tr.window(v.step).reshape(-1)
            m = min(float(w @ cert.matrix(1) @ w), float(w @ cert.matrix(2) @ w))
            rel.append(v.deficit / max(m, 1e-300))
        out["decrease"]["diagnosis"] = ("functional-mismatch" if max(rel) > _MISMATCH_LEVEL
                                        else "numerical-noise")
    out["brute_force"] = _brute_force(sys, checks, seed)
    return out


def _brute_force(sys: DelaySystem, checks: dict, seed: int) -> dict:
    N = sys.n * (sys.d_M + 1)
    if not checks.get("brute_force", True) or N > MAX_AUGMENTED_DIM:
        reason = "disabled" if not checks.get("brute_force", True) else "dimension cap"
        return {"ran": False, "reason": reason, "dimension": N}
    bf = brute_force_cross_check(sys, depth=checks.get("depth", 12), seed=seed)
    return {"ran": True, "dimension": N, "depth": bf.depth,
            "verdict": "instability-witness" if bf.unstable else "no-instability-found",
            "witness": list(bf.witness) if bf.witness else None, "rho": bf.rho,
            "nodes": bf.nodes, "complete": bf.complete, "growth": bf.growth}


def run_analysis(sys: DelaySystem, solver: SolverConfig, checks: dict, seed: int,
                 with_checks: bool = True) -> tuple[dict, dict, int, LkfCertificate | None]:
    """Switched-LKF analysis.  Returns (body, timing, exit code, certificate)."""
    t0 = time.perf_counter()
    problem = theorem1_problem(sys)
    sdp = normalize(problem)
    t_build = time.perf_counter() - t0
    result = solve(sdp, solver)
    diag, t_solve = _solver_part(result)
    body = {"status": result.status,
            "problem": {"kind": problem.kind, "n_scalars": sdp.n_scalars,
                        "conditions": len(problem.conditions),
                        "constraints": len(sdp.constraints), "block_sizes": sdp.block_sizes},
            "delays": {"d_m": sys.d_m, "d_n": sys.d_n, "d_M": sys.d_M},
            "solver": diag, "margins": _margins_part(result)}
    timing = {"build_seconds": t_build, "solve_seconds": t_solve}
    code = _exit_for(result.status)
    cert = None
    if result.feasible:
        body["certificate"] = result.assignment
        cert = LkfCertificate.from_assignment(result.assignment, sys.d_m, sys.d_n, sys.d_M,
                                              result.margins)
        if with_checks:
            t1 = time.perf_counter()
            body["checks"] = run_checks(sys, cert, checks, seed)
            timing["check_seconds"] = time.perf_counter() - t1
            c = body["checks"]
            bf_bad = c["brute_force"].get("verdict") == "instability-witness"
            body["checks_passed"] = bool(c["decrease"]["ok"] and c["lkf_dual_evaluation"]["ok"]
                                         and not bf_bad)
            if not body["checks_passed"]:
                code = EXIT_INCONCLUSIVE
    return body, timing, code, cert


def cmd_analyze(cfg: RunConfig, out: Path, jobs: int | None = None) -> int:
    solver = cfg.solver()
    body, timing, code, _ = run_analysis(cfg.system(), solver, cfg.section("checks"), cfg.seed)
    rpt.write_json(out / "report.json", {**rpt.header(cfg, _tolerances(solver)), **body,
                                         "timing": timing})
    return code


# ------------------------------------------------------------ design

def cmd_design(cfg: RunConfig, out: Path, jobs: int | None = None) -> int:
    solver = cfg.solver()
    plant = cfg.plant()
    d_m, d_n, d_M = cfg.delays()
    eps = cfg.epsilon()
    t0 = time.perf_counter()
    problem = corollary1_problem(plant, d_m, d_n, d_M, eps)
    sdp = normalize(problem)
    t_build = time.perf_counter() - t0
    result = solve(sdp, solver)
    diag, t_solve = _solver_part(result)
    head = rpt.header(cfg, _tolerances(solver, {"max_cond_U": 1e12}))
    rep = {**head, "status": result.status, "epsilon": eps,
           "delays": {"d_m": d_m, "d_n": d_n, "d_M": d_M},
           "problem": {"kind": problem.kind, "n_scalars": sdp.n_scalars,
                       "constraints": len(sdp.constraints), "block_sizes": sdp.block_sizes},
           "solver": diag, "margins": _margins_part(result), "success": False}
    timing = {"build_seconds": t_build, "solve_seconds": t_solve}
    code = _exit_for(result.status)
    if result.feasible:
        rep["certificate"] = result.assignment
        try:
            gains = recover_gains(result.assignment)
        except GainRecoveryError as exc:
            rep["gain_recovery_error"] = str(exc)
            code = EXIT_INCONCLUSIVE
        else:
            code = _design_followup(cfg, out, problem, result, gains, rep, timing, solver)
    rep["timing"] = timing
    rpt.write_json(out / "report.json", rep)
    return code


def _design_followup(cfg, out, problem, result, gains, rep, timing, solver) -> int:
    d_m, d_n, d_M = cfg.delays()
    gains_doc = {**rpt.header(cfg, {}), "K": gains.K, "F": gains.F, "L": gains.L,
                 "epsilon": problem.epsilon, "delays": {"d_m": d_m, "d_n": d_n, "d_M": d_M}}
    gains_doc.pop("tolerances")
    rpt.write_json(out / "gains.json", gains_doc)
    rep["gains"] = {"K": gains.K, "F": gains.F, "L": gains.L}
    rep["U_condition"] = float(np.linalg.cond(result.assignment["U"]))
    sys = build_closed_loop(problem.plant, gains, d_m, d_n, d_M)
    # the design certificate, mapped back, must itself certify the recovered loop
    analysis = theorem1_problem(sys)
    m = analysis.margins(unbar_certificate(problem, result.assignment))
    rep["unbarred_certificate"] = {"min_margin": min(m.values()),
                                   "worst": min(m, key=m.get)}
    body, t_an, code, _ = run_analysis(sys, solver, cfg.section("checks"), cfg.seed)
    rep["reanalysis"] = body
    timing.update({f"reanalysis_{k}": v for k, v in t_an.items()})
    ok = body["status"] == FEASIBLE and body.get("checks_passed", False)
    rep["success"] = ok
    return EXIT_OK if ok else EXIT_INCONCLUSIVE


# ------------------------------------------------------------ simulate

def cmd_simulate(cfg: RunConfig, out: Path, jobs: int | None = None) -> int:
    sys = cfg.system()
    sim = cfg.section("simulation")
    K = sim.get("horizon", 100)
    if "initial" in sim:
        phi = np.asarray(sim["initial"], dtype=float)
    else:
        phi = np.random.default_rng(cfg.seed).normal(size=(sys.d_M + 1, sys.n))
    try:
        tr = simulate(sys, phi, cfg.signal(sys.d_m, sys.d_M), K)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    solver = cfg.solver()
    rep = {**rpt.header(cfg, _tolerances(solver)), "horizon": K,
           "delays": {"d_m": sys.d_m, "d_n": sys.d_n, "d_M": sys.d_M}}
    timing = {}
    V = None
    if sim.get("lkf", "solve") == "solve":
        body, timing, _, cert = run_analysis(sys, solver, {}, cfg.seed, with_checks=False)
        rep["lkf_status"] = body["status"]
        if cert is not None:
            S = {j: cert.matrix(j) for j in (1, 2)}
            wins = [tr.window(k).reshape(-1) for k in range(K + 1)]
            V = np.array([[float(w @ S[j] @ w) for j in (1, 2)] for w in wins])
            vmin = V.min(axis=1)
            live = np.array([np.linalg.norm(w) >= 1e-12 for w in wins])
            steps = np.nonzero(live[:-1])[0]
            rep["min_strictly_decreasing"] = bool(np.all(vmin[steps + 1] < vmin[steps]))
    else:
        rep["lkf_status"] = "not requested"
    cols = ["k", "d", "sigma"] + [f"x{i + 1}" for i in range(sys.n)] + ["V1", "V2", "min"]
    rows = []
    for k in range(K + 1):
        d = int(tr.delays[k]) if k < K else None
        s = int(tr.modes[k]) if k < K else None
        v = [float(V[k, 0]), float(V[k, 1]), float(V[k].min())] if V is not None else [None] * 3
        rows.append([k, d, s] + [float(x) for x in tr.x(k)] + v)
    rpt.write_csv(out / "trajectory.csv", cols, rows)
    rpt.plot_trajectory(out / "trajectory.svg", np.arange(K + 1), tr.states,
                        None if V is None else V.min(axis=1))
    rep["timing"] = timing
    rpt.write_json(out / "report.json", rep)
    return EXIT_OK


# ------------------------------------------------------------ sweep

@dataclass
class SweepRecord:
    epsilon: float
    d_n: int
    max_feasible_dM: int | None
    solve_seconds: float
    first_failure_dM: int | None = None
    stop: str = "cap"                       # "infeasible", "inconclusive" or "cap"
    statuses: dict = field(default_factory=dict)

    COLUMNS = ("epsilon", "d_n", "max_feasible_dM", "first_failure_dM", "stop", "solve_seconds")

    def row(self) -> list:
        return [self.epsilon, self.d_n, self.max_feasible_dM, self.first_failure_dM,
                self.stop, self.solve_seconds]


def sweep_point(A_p, B_p, d_m: int, d_n: int, epsilon: float, cap: int,
                exhaustive: bool = False, solver: dict | None = None) -> SweepRecord:
    """Largest feasible d_M for one (epsilon, d_n) by linear increase from d_n."""
    from .model import PlantModel

    plant = PlantModel(A_p, B_p)
    cfg = SolverConfig(**(solver or {}))
    best, first, stop, total, statuses = None, None, "cap", 0.0, {}
    for d_M in range(max(d_n, d_m), cap + 1):
        t0 = time.perf_counter()
        r = solve(normalize(corollary1_problem(plant, d_m, d_n, d_M, epsilon)), cfg)
        total += time.perf_counter() - t0
        statuses[d_M] = r.status
        log.info("sweep eps=%g d_n=%d d_M=%d: %s", epsilon, d_n, d_M, r.status)
        if r.feasible:
            if first is None or exhaustive:
                best = d_M
            continue
        if first is None:
            first, stop = d_M, r.status
        if not exhaustive:
            break
    return SweepRecord(float(epsilon), int(d_n), best, total, first, stop, statuses)


def run_sweep(cfg: RunConfig, jobs: int | None = None) -> list[SweepRecord]:
    sw = cfg.section("sweep")
    plant = cfg.plant()
    d_m = cfg.data["delays"]["d_m"] if "delays" in cfg.data else 1
    points = [(e, n) for e in sw["epsilons"] for n in sw["d_n"] if n >= d_m]
    args = [(plant.A_p, plant.B_p, d_m, n, e, sw["d_M_cap"], sw.get("exhaustive", False),
             cfg.section("solver")) for e, n in points]
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(args) == 1:
        return [sweep_point(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(sweep_point, *a) for a in args]
        return [f.result() for f in futures]


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int | None = None) -> int:
    records = run_sweep(cfg, jobs)
    rpt.write_csv(out / "sweep.csv", list(SweepRecord.COLUMNS), [r.row() for r in records])
    rpt.plot_sweep(out / "sweep.svg", records)
    body = [{k: v for k, v in asdict(r).items() if k != "solve_seconds"} for r in records]
    rpt.write_json(out / "report.json", {
        **rpt.header(cfg, _tolerances(cfg.solver())), "records": body,
        "search": "exhaustive" if cfg.section("sweep").get("exhaustive") else "linear",
        "timing": {"solve_seconds": [r.solve_seconds for r in records]}})
    return EXIT_OK


# ------------------------------------------------------------ SDPA bridge

def build_problem(cfg: RunConfig):
    kind = cfg.problem_kind()
    if kind == "bounded":
        return lemma2_problem(cfg.bounded())
    if kind == "design":
        d_m, d_n, d_M = cfg.delays()
        return corollary1_problem(cfg.plant(), d_m, d_n, d_M, cfg.epsilon())
    return theorem1_problem(cfg.system())


def _directory(sdp) -> dict:
    return {"blocks": [{"name": b.name, "shape": list(b.shape), "offset": o,
                        "n_scalars": b.n_scalars} for b, o in sdp.directory],
            "constraints": [{"name": c.name, "dim": c.dim, "kind": c.kind, "strict": c.strict,
                             "margin": c.margin} for c in sdp.constraints]}


def cmd_export_sdpa(cfg: RunConfig, out: Path, jobs: int | None = None) -> int:
    from .sdp.external import solve_sdpa_text

    problem = build_problem(cfg)
    sdp = normalize(problem)
    text = export_sdpa(sdp)
    (out / "problem.dat-s").write_text(text)
    rpt.write_json(out / "blocks.json", _directory(sdp))
    solver = cfg.solver()
    rep = {**rpt.header(cfg, _tolerances(solver)), "problem": {
        "kind": problem.kind, "n_scalars": sdp.n_scalars, "block_sizes": sdp.block_sizes}}
    timing, code = {}, EXIT_OK
    if cfg.section("sdpa").get("external_solve", False):
        t0 = time.perf_counter()
        x, status = solve_sdpa_text(text)
        timing["external_seconds"] = time.perf_counter() - t0
        (out / "solution.txt").write_text(write_solution(x))
        margins, ok = recheck(sdp, x, solver.rel_positive)
        rep["external"] = {"solver": "clarabel", "solver_status": status,
                           "recheck_passed": ok, "margins": margins}
        code = EXIT_OK if ok else EXIT_INCONCLUSIVE
    rep["timing"] = timing
    rpt.write_json(out / "report.json", rep)
    return code


def _certificate_vector(cfg: RunConfig, sdp) -> np.ndarray:
    import json

    c = cfg.section("certificate")
    if "solution" in c:
        text = cfg.path(c["solution"]).read_text()
        return read_solution_vector(text, sdp.n_scalars)
    doc = json.loads(cfg.path(c["report"]).read_text())
    values = doc.get("certificate")
    if values is None:
        raise ConfigError("the referenced report holds no certificate")
    names = {b.name for b, _ in sdp.directory}
    missing = sorted(names - set(values))
    if missing:
        raise ConfigError(f"certificate lacks blocks: {', '.join(missing)}")
    return sdp.vector({k: np.asarray(v, dtype=float) for k, v in values.items()})


def cmd_check_certificate(cfg: RunConfig, out: Path, jobs: int | None = None) -> int:
    problem = build_problem(cfg)
    sdp = normalize(problem)
    try:
        x = _certificate_vector(cfg, sdp)
    except (OSError, SdpaParseError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot read certificate: {exc}") from exc
    solver = cfg.solver()
    margins, ok = recheck(sdp, x, solver.rel_positive)
    worst = min(margins, key=margins.get) if margins else None
    rep = {**rpt.header(cfg, _tolerances(solver)), "problem": {"kind": problem.kind},
           "accepted": ok, "margins": margins, "worst": worst, "timing": {}}
    rpt.write_json(out / "report.json", rep)
    return EXIT_OK if ok else EXIT_INFEASIBLE


COMMANDS = {"analyze": cmd_analyze, "design": cmd_design, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "export-sdpa": cmd_export_sdpa,
            "check-certificate": cmd_check_certificate}


# ------------------------------------------------------------ entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="delaylmi", description="LMI stability analysis and observer-based design "
                "for discrete-time systems with time-varying delay.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--jobs", type=int, help="worker processes for sweep (default: all CPUs)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config, args.task, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.task](cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"delaylmi: configuration error: {exc}", file=sys.stderr)
        for d in exc.details:
            print(f"  {d}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"delaylmi {args.task}: exit {code}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
