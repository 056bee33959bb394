"""Command-line experiment runner.

Verbs: ``run``, ``paper-experiments``, ``certify``, ``lipschitz``, ``dare-check``.
Exit codes: 0 ok, 1 certificate violation, 2 config error, 3 numerical failure.
"""

import argparse
import hashlib
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .controller import estimate_gain_lipschitz
from .dare import DareError, gain_jacobian_chain, gain_jacobian_fd, riccati_jacobians, solve_dare
from .diagnostics import DEFAULT_TOLERANCE, certify, l2_gain_report
from .linalg import unvec, vec
from .logio import read_log_csv, write_json, write_log_csv, write_plot_file, write_report
from .model import ParamBox, diameter, eval_system
from .plant import QUADROTOR_BOX, quadrotor_parametrization
from .sim import SimulationError, quadrotor_config, run, run_batch

logger = logging.getLogger("adaptive_lqr")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _provenance(sha, seed):
    return {"config_sha256": sha, "seed": seed, "adaptive_lqr_version": __version__}


def _write_run_outputs(log, report_values, out_dir, prefix, prov, stride, meta):
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, prefix)
    write_log_csv(log, base + ".csv", prov)
    write_plot_file(log, base + ".dat", stride, prov)
    write_report(report_values, base + "_report.txt", prov)
    write_json({**meta, **prov}, base + "_meta.json")
    return base


def _metadata(exp, log, elapsed):
    cfg = exp.sim
    return {
        "plant": cfg.plant,
        "mode": cfg.mode,
        "horizon": cfg.T,
        "steps_executed": log.n_steps,
        "diverged": log.diverged,
        "elapsed_s": round(elapsed, 3),
        "non_paper_defaults": exp.non_paper,
        "non_paper_choices": {
            "wind_waveform": "amplitude/period/decay of the wind profile are artifact choices",
            "divergence_threshold": cfg.divergence_threshold,
        },
    }


def cmd_run(args) -> int:
    exp = load_config(args.config, seed_override=args.seed)
    out_dir = args.out or exp.output.dir
    tol = args.tolerance if args.tolerance is not None else DEFAULT_TOLERANCE
    start = time.perf_counter()
    try:
        log = run(exp.sim)
    except (SimulationError, DareError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    report = certify(log, exp.sim.mu, exp.sim.box, tolerance=tol)
    values = report.to_dict()
    prov = _provenance(exp.sha256, exp.sim.seed)
    base = _write_run_outputs(log, values, out_dir, exp.output.prefix, prov,
                              exp.output.plot_stride, _metadata(exp, log, time.perf_counter() - start))
    print(f"wrote {base}.csv ({log.n_steps} steps, diverged={str(log.diverged).lower()})")
    return EXIT_OK


def cmd_certify(args) -> int:
    exp = load_config(args.config, seed_override=args.seed)
    cfg = exp.sim
    if cfg.plant == "quadrotor_nonlinear":
        raise ConfigError("certify needs a linear plant (system.plant = 'linear' or a custom LTV)",
                          path=args.config)
    tol = args.tolerance if args.tolerance is not None else DEFAULT_TOLERANCE
    if args.log:
        log = read_log_csv(args.log)
    else:
        try:
            log = run(cfg)
        except (SimulationError, DareError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
    report = certify(log, cfg.mu, cfg.box, tolerance=tol)
    values = report.to_dict()
    notes = []
    for name, check in report.checks.items():
        status = "ok" if check.passed else f"VIOLATED at step {check.first_violation}"
        if check.precondition_fraction < 1.0:
            notes.append(f"{name}: preconditions unmet on "
                         f"{100 * (1 - check.precondition_fraction):.1f}% of steps")
        print(f"{name}: {status} (min slack {check.min_slack:.3e})")
    for note in notes:
        print(f"note: {note}")
    values["notes"] = "; ".join(notes) if notes else "none"
    out_dir = args.out or exp.output.dir
    os.makedirs(out_dir, exist_ok=True)
    prov = _provenance(exp.sha256, cfg.seed)
    write_report(values, os.path.join(out_dir, exp.output.prefix + "_certificate.txt"), prov)
    return EXIT_OK if report.passed else EXIT_VIOLATION


CASE_STUDY_RUNS = [
    ("a_nonlinear_adaptive", "a", "quadrotor_nonlinear", "adaptive", None),
    ("a_nonlinear_frozen", "a", "quadrotor_nonlinear", "frozen", None),
    ("b_nonlinear_adaptive", "b", "quadrotor_nonlinear", "adaptive", None),
    ("b_nonlinear_frozen", "b", "quadrotor_nonlinear", "frozen", None),
    ("a_linear_plain", "a", "quadrotor_linear", "adaptive", None),
    ("a_linear_explore", "a", "quadrotor_linear", "adaptive", (0.5, 0.1)),
    ("b_linear_plain", "b", "quadrotor_linear", "adaptive", None),
    ("b_linear_explore", "b", "quadrotor_linear", "adaptive", (0.5, 0.1)),
]

SUMMARY_COLUMNS = [
    "name", "case", "plant", "mode", "exploration", "steps", "diverged",
    "final_state_norm", "final_position_norm", "final_theta_hat_error", "final_inertia_error",
    "lms_energy_min_slack", "estimate_motion_min_slack", "prediction_budget_min_slack",
    "certificates_passed", "error",
]


def case_study_configs(steps: int, seed: int):
    return [
        (name, quadrotor_config(case=case, plant=plant, mode=mode, T=steps, seed=seed,
                                exploration_std=std))
        for name, case, plant, mode, std in CASE_STUDY_RUNS
    ]


def cmd_paper_experiments(args) -> int:
    out_dir = args.out or "case_studies"
    seed = 0 if args.seed is None else args.seed
    tol = args.tolerance if args.tolerance is not None else DEFAULT_TOLERANCE
    named = case_study_configs(args.steps, seed)
    results = run_batch([c for _, c in named], workers=args.workers)
    os.makedirs(out_dir, exist_ok=True)
    sha = hashlib.sha256(f"paper-experiments steps={args.steps}".encode()).hexdigest()
    prov = _provenance(sha, seed)
    rows = []
    failed = False
    for (name, case, plant, mode, std), (_, cfg), res in zip(CASE_STUDY_RUNS, named, results):
        row = {"name": name, "case": case, "plant": plant, "mode": mode,
               "exploration": "none" if std is None else f"{std[0]}/{std[1]}"}
        if isinstance(res, Exception):
            failed = True
            row["error"] = str(res).replace(",", ";")
            rows.append(row)
            continue
        log = res
        report = certify(log, cfg.mu, cfg.box, tolerance=tol)
        write_log_csv(log, os.path.join(out_dir, f"{name}.csv"), prov)
        write_plot_file(log, os.path.join(out_dir, f"{name}.dat"), 10, prov)
        write_report(report.to_dict(), os.path.join(out_dir, f"{name}_report.txt"), prov)
        row.update(
            steps=log.n_steps,
            diverged=int(log.diverged),
            final_state_norm=float(np.linalg.norm(log.x[-1])),
            final_position_norm=float(np.linalg.norm(log.x[-1, :2])),
            final_theta_hat_error=float(np.linalg.norm(log.phi[-1])),
            final_inertia_error=float(abs(log.phi[-1, 1])),
            certificates_passed=int(report.passed),
            error="",
        )
        for key in ("lms_energy", "estimate_motion", "prediction_budget"):
            row[f"{key}_min_slack"] = report.checks[key].min_slack
        rows.append(row)
    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in prov.items():
            fh.write(f"# {key}={value}\n")
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(
                repr(row[c]) if isinstance(row.get(c), float) else str(row.get(c, ""))
                for c in SUMMARY_COLUMNS) + "\n")
    for row in rows:
        print(f"{row['name']:<22} diverged={row.get('diverged', '?')} "
              f"|x_T|={row.get('final_state_norm', float('nan')):.3e} "
              f"|theta2 err|={row.get('final_inertia_error', float('nan')):.3f}")
    print(f"wrote {path}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_lipschitz(args) -> int:
    if args.config:
        exp = load_config(args.config)
        par, box, Q, R = exp.sim.par, exp.sim.box, exp.sim.Q, exp.sim.R
    else:
        par, box, Q, R = quadrotor_parametrization(), QUADROTOR_BOX, np.eye(6), 10 * np.eye(2)
    try:
        value = estimate_gain_lipschitz(par, box, Q, R, args.grid, workers=args.workers)
    except DareError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"gain Lipschitz estimate (grid {args.grid}): {value:.6g}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_report({"grid_per_dim": args.grid, "lipschitz_estimate": value},
                     os.path.join(args.out, "lipschitz.txt"))
    return EXIT_OK


def _fd_riccati(A, B, Q, R, h=1e-6):
    n, m = B.shape
    dA = np.zeros((n * n, n * n))
    for j in range(n * n):
        E = unvec(np.eye(n * n)[j] * h, n, n)
        dA[:, j] = (vec(solve_dare(A + E, B, Q, R).P) - vec(solve_dare(A - E, B, Q, R).P)) / (2 * h)
    dB = np.zeros((n * n, n * m))
    for j in range(n * m):
        E = unvec(np.eye(n * m)[j] * h, n, m)
        dB[:, j] = (vec(solve_dare(A, B + E, Q, R).P) - vec(solve_dare(A, B - E, Q, R).P)) / (2 * h)
    return dA, dB


def dare_self_check(tol: float = 1e-5):
    """List of ``(name, passed, detail)`` solver and sensitivity self-tests."""
    results = []
    golden = (1 + 5 ** 0.5) / 2
    sol = solve_dare(1.0, 1.0, 1.0, 1.0)
    err = max(abs(sol.P[0, 0] - golden), abs(sol.K[0, 0] + 1 / golden))
    results.append(("scalar closed form", err <= 1e-9, f"error {err:.2e}"))
    par = quadrotor_parametrization()
    A, B = eval_system(par, [0.0, 250.0])
    Q, R = np.eye(6), 10 * np.eye(2)
    sol = solve_dare(A, B, Q, R)
    results.append(("quadrotor residual", sol.residual <= 1e-10, f"residual {sol.residual:.2e}"))
    jac = riccati_jacobians(A, B, Q, R, sol)
    fdA, fdB = _fd_riccati(A, B, Q, R)
    rel = max(np.linalg.norm(jac.dP_dA - fdA) / np.linalg.norm(fdA),
              np.linalg.norm(jac.dP_dB - fdB) / np.linalg.norm(fdB))
    results.append(("quadrotor Riccati Jacobians", rel <= tol, f"relative error {rel:.2e}"))
    chain = gain_jacobian_chain(par, [0.0, 250.0], Q, R)
    fd = gain_jacobian_fd(par, [0.0, 250.0], Q, R, h=1e-4)
    rel = np.linalg.norm(chain - fd) / np.linalg.norm(fd)
    results.append(("quadrotor gain Jacobian", rel <= 1e-4, f"relative error {rel:.2e}"))
    return results


def cmd_dare_check(args) -> int:
    tol = args.tolerance if args.tolerance is not None else 1e-5
    try:
        results = dare_self_check(tol)
    except DareError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL


def build_parser():
    parser = argparse.ArgumentParser(prog="adaptive-lqr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="TOML experiment file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--tolerance", type=float, help="certificate slack tolerance")

    p = sub.add_parser("run", help="simulate one configured experiment")
    common(p, True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="check the estimator certificates on a linear-plant run")
    common(p, True)
    p.add_argument("--log", help="certify an existing trajectory CSV instead of simulating")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("paper-experiments", help="run the eight quadrotor case-study runs")
    common(p, False)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_paper_experiments)

    p = sub.add_parser("lipschitz", help="grid estimate of the LQR gain Lipschitz constant")
    common(p, False)
    p.add_argument("--grid", type=int, default=15)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_lipschitz)

    p = sub.add_parser("dare-check", help="Riccati solver and sensitivity self-tests")
    common(p, False)
    p.set_defaults(func=cmd_dare_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
