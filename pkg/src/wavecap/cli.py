"""Command-line front end.

Subcommands:

* ``simulate``  -- emit drift/observation trajectories for one symbol;
* ``capacity``  -- optimize source weights, write result JSON and an
  iteration-trace CSV;
* ``verify``    -- first-order optimality certificate for given weights;
* ``sweep``     -- capacity against a swept parameter, CSV table.

Every delimited output gets a rendered figure next to it.  Exit codes:
0 success, 1 numerical failure (artifacts still written), 2 config
validation failure (nothing written).  Result JSON is byte-identical
across runs with the same config and seed; timings live in a separate
meta file.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .capacity import (FeasibleSet, optimize_blahut_arimoto,
                       optimize_capacity_gradient, verify_optimality)
from .gaussian_kernel import (NoiseSpec, build_kernel,
                              source_noise_covariance_q2, whiten_and_reduce)
from .modal_channel import GeometryError, ModelMismatchError, simulate_output
from .mutual_info import (mi_duncan, mi_monte_carlo, mi_quadrature,
                          mi_upper_bound)
from .report import (save_sweep_figure, save_trace_figure,
                     save_trajectory_figure, scenario_hash, write_csv,
                     write_json)
from .scenario import Problem, ScenarioError, build_problem, load_scenario

SEED_ENV_VAR = "WAVECAP_SEED"
_MAX_SEED = 2**64

# stable sub-stream labels so different consumers never share draws
_PURPOSE_SIMULATE = 0
_PURPOSE_GRADIENT = 1
_PURPOSE_BA = 2
_PURPOSE_MC = 3
_PURPOSE_DUNCAN = 4

NATS_PER_BIT = float(np.log(2.0))


class CliValidationError(Exception):
    """Anything that should abort with exit code 2 before artifacts exist."""


def _subseed(master: int, *purpose):
    return np.random.SeedSequence(master, spawn_key=tuple(purpose))


def _resolve_seed(flag_seed, config_seed):
    """Flag beats config beats environment; default 0."""
    for candidate, origin in ((flag_seed, "--seed"),
                              (config_seed, "estimator.seed")):
        if candidate is not None:
            if not 0 <= candidate < _MAX_SEED:
                raise CliValidationError(f"{origin} must be a u64")
            return int(candidate)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise CliValidationError(
                f"{SEED_ENV_VAR} must be an unsigned integer, got {env!r}")
        if not 0 <= value < _MAX_SEED:
            raise CliValidationError(f"{SEED_ENV_VAR} must be a u64")
        return value
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavecap",
        description="Capacity of waveguide channels from scenario configs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="scenario JSON file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (u64); beats config and "
                            f"{SEED_ENV_VAR}")
        p.add_argument("--estimator", default=None,
                       choices=("quadrature", "mc", "duncan"),
                       help="override the configured estimator")
        p.add_argument("--bits", action="store_true",
                       help="also print information values in bits")

    p_sim = sub.add_parser("simulate", help="emit output trajectories")
    common(p_sim)
    p_sim.add_argument("--symbol", type=int, default=0,
                       help="alphabet index to transmit")

    p_cap = sub.add_parser("capacity", help="optimize source weights")
    common(p_cap)

    p_ver = sub.add_parser("verify", help="certify candidate weights")
    common(p_ver)
    p_ver.add_argument("--weights", default=None,
                       help="comma-separated candidate weights")
    p_ver.add_argument("--weights-file", default=None,
                       help="JSON file with weights (accepts a capacity "
                            "result file)")
    p_ver.add_argument("--tol", type=float, default=1e-5,
                       help="certificate tolerance")

    p_swp = sub.add_parser("sweep", help="capacity against a parameter")
    common(p_swp)
    p_swp.add_argument("--param", required=True,
                       choices=("power_budget", "noise_gain"),
                       help="which scenario parameter to sweep")
    p_swp.add_argument("--values", required=True,
                       help="comma-separated parameter values")
    return parser


def _load(args):
    scenario = load_scenario(args.config)
    seed = _resolve_seed(args.seed, scenario.estimator["seed"])
    method = args.estimator or scenario.estimator["method"]
    if method == "duncan" and scenario.noise is not None:
        raise CliValidationError(
            "estimator 'duncan' requires white observation noise")
    return scenario, seed, method


def _assemble(scenario) -> Problem:
    try:
        return build_problem(scenario)
    except (GeometryError, ModelMismatchError, ValueError) as exc:
        raise CliValidationError(str(exc)) from exc


def _check_estimator_fits(method, problem):
    if method == "quadrature" and problem.reduced.dim > 2:
        raise CliValidationError(
            f"estimator 'quadrature' needs a reduced dimension of at most 2, "
            f"got {problem.reduced.dim}; use 'mc'")


def _optimizer_method(problem) -> str:
    return "quadrature" if problem.reduced.dim <= 2 else "mc"


def _estimate_at(method, problem, weights, seed, scenario):
    """Headline/cross-check estimate of J at fixed weights."""
    samples = scenario.estimator["samples"]
    paths = scenario.estimator["paths"]
    if method == "quadrature":
        return mi_quadrature(problem.reduced, weights)
    if method == "mc":
        return mi_monte_carlo(problem.reduced, weights, samples=samples,
                              seed=_subseed(seed, _PURPOSE_MC))
    return mi_duncan(problem.channel, problem.alphabet, weights, paths=paths,
                     seed=_subseed(seed, _PURPOSE_DUNCAN),
                     source_noise=problem.scenario.noise)


def _crosscheck(problem, weights, seed, scenario):
    rows = []
    methods = []
    if problem.reduced.dim <= 2:
        methods.append("quadrature")
    methods.append("mc")
    if scenario.noise is None:
        methods.append("duncan")
    for method in methods:
        est = _estimate_at(method, problem, weights, seed, scenario)
        rows.append({"method": est.method, "value": est.value,
                     "stderr": est.stderr, "count": est.count})
    return rows


def _trace_rows(trace):
    return [(it, value, gap, step) for it, value, gap, step in trace]


def _print_information(label, nats, bits_flag):
    if bits_flag:
        print(f"{label}: {nats:.9f} nats ({nats / NATS_PER_BIT:.9f} bits)")
    else:
        print(f"{label}: {nats:.9f} nats")


def cmd_capacity(args) -> int:
    scenario, seed, method = _load(args)
    problem = _assemble(scenario)
    _check_estimator_fits(method, problem)
    os.makedirs(args.out, exist_ok=True)
    timing = {}
    opts = scenario.optimizer
    opt_method = _optimizer_method(problem)
    t0 = time.perf_counter()
    grad = optimize_capacity_gradient(
        problem.reduced, problem.feasible, tol=opts["tol"],
        max_iter=opts["max_iter"], step0=opts["step0"], method=opt_method,
        samples=scenario.estimator["samples"],
        seed=_subseed(seed, _PURPOSE_GRADIENT))
    timing["gradient_seconds"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    ba = optimize_blahut_arimoto(
        problem.reduced, problem.feasible, tol=opts["tol"],
        max_iter=opts["max_iter"], method=opt_method,
        samples=scenario.estimator["samples"],
        seed=_subseed(seed, _PURPOSE_BA))
    timing["blahut_arimoto_seconds"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    headline = _estimate_at(method, problem, grad.weights, seed, scenario)
    crosscheck = _crosscheck(problem, grad.weights, seed, scenario)
    bound = mi_upper_bound(problem.alphabet, grad.weights, problem.channel)
    timing["estimate_seconds"] = time.perf_counter() - t0

    result = {
        "schema": scenario.raw["schema"],
        "tool_version": __version__,
        "scenario_hash": scenario_hash(scenario.raw),
        "seed": seed,
        "estimator": method,
        "capacity": {
            "nats": headline.value,
            "stderr": headline.stderr,
            "weights": list(grad.weights),
            "marginals": list(grad.marginals),
            "kkt_gap": grad.kkt_gap,
            "iterations": grad.iterations,
            "converged": grad.converged,
            "optimizer": "gradient",
            "objective": grad.capacity,
        },
        "blahut_arimoto": {
            "nats": ba.capacity,
            "weights": list(ba.weights),
            "kkt_gap": ba.kkt_gap,
            "iterations": ba.iterations,
            "converged": ba.converged,
        },
        "upper_bound": bound,
        "crosscheck": crosscheck,
    }
    write_json(os.path.join(args.out, "result.json"), result)
    write_csv(os.path.join(args.out, "trace.csv"),
              ("iter", "J", "kkt_gap", "step"), _trace_rows(grad.trace))
    save_trace_figure(grad.trace, os.path.join(args.out, "trace.png"))
    write_json(os.path.join(args.out, "meta.json"), {"timing": timing})
    _print_information("capacity", headline.value, args.bits)
    print(f"weights: {np.array2string(grad.weights, precision=6)}  "
          f"kkt gap: {grad.kkt_gap:.3e}  iterations: {grad.iterations}")
    if not (grad.converged and ba.converged):
        print("warning: optimization did not meet its tolerance", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    scenario, seed, method = _load(args)
    weights = _read_weights(args)
    problem = _assemble(scenario)
    _check_estimator_fits(method, problem)
    if method == "duncan":
        raise CliValidationError(
            "verify needs per-symbol marginals; use quadrature or mc")
    os.makedirs(args.out, exist_ok=True)
    ver_method = "quadrature" if problem.reduced.dim <= 2 else "mc"
    try:
        report = verify_optimality(problem.reduced, weights, problem.feasible,
                                   tol=args.tol, method=ver_method,
                                   samples=scenario.estimator["samples"],
                                   seed=_subseed(seed, _PURPOSE_MC))
    except ValueError as exc:
        raise CliValidationError(str(exc)) from exc
    payload = {
        "scenario_hash": scenario_hash(scenario.raw),
        "weights": list(np.asarray(weights, dtype=float)),
        "max_violation": report.max_violation,
        "tol": report.tol,
        "passed": report.passed,
        "marginals": list(report.marginals),
        "best_vertex": list(report.best_vertex),
    }
    write_json(os.path.join(args.out, "verify.json"), payload)
    print(f"{'PASS' if report.passed else 'FAIL'}: max violation "
          f"{report.max_violation:.3e} (tol {report.tol:g})")
    return 0 if report.passed else 1


def _read_weights(args):
    if (args.weights is None) == (args.weights_file is None):
        raise CliValidationError(
            "verify needs exactly one of --weights or --weights-file")
    if args.weights is not None:
        try:
            return np.array([float(tok) for tok in args.weights.split(",")])
        except ValueError:
            raise CliValidationError("--weights must be comma-separated numbers")
    import json as _json
    try:
        with open(args.weights_file, "r", encoding="utf-8") as fh:
            doc = _json.load(fh)
    except (OSError, _json.JSONDecodeError) as exc:
        raise CliValidationError(f"cannot read weights file: {exc}")
    if isinstance(doc, dict) and "weights" in doc:
        return np.asarray(doc["weights"], dtype=float)
    if isinstance(doc, dict) and "capacity" in doc and "weights" in doc["capacity"]:
        return np.asarray(doc["capacity"]["weights"], dtype=float)
    raise CliValidationError("weights file must contain 'weights' or a "
                             "capacity result")


def cmd_simulate(args) -> int:
    scenario, seed, _ = _load(args)
    problem = _assemble(scenario)
    if not 0 <= args.symbol < problem.alphabet.count:
        raise CliValidationError(
            f"--symbol must be below the alphabet size {problem.alphabet.count}")
    os.makedirs(args.out, exist_ok=True)
    x = problem.alphabet.symbols[args.symbol]
    drift = problem.channel.apply(x)
    increments = simulate_output(problem.channel, x,
                                 _subseed(seed, _PURPOSE_SIMULATE))
    cumulative = np.cumsum(increments, axis=1)
    times = problem.scenario.grid.nodes()[1:]
    m = drift.shape[0]
    header = (["t"] + [f"drift_{s}" for s in range(m)]
              + [f"dy_{s}" for s in range(m)] + [f"y_{s}" for s in range(m)])
    rows = []
    for j, t in enumerate(times):
        rows.append([t] + list(drift[:, j]) + list(increments[:, j])
                    + list(cumulative[:, j]))
    write_csv(os.path.join(args.out, "trajectories.csv"), header, rows)
    save_trajectory_figure(times, drift, cumulative,
                           os.path.join(args.out, "trajectories.png"))
    print(f"wrote {problem.channel.n_sensors} sensor trajectories over "
          f"{len(times)} steps")
    return 0


def cmd_sweep(args) -> int:
    scenario, seed, _ = _load(args)
    try:
        values = [float(tok) for tok in args.values.split(",")]
    except ValueError:
        raise CliValidationError("--values must be comma-separated numbers")
    if not values:
        raise CliValidationError("--values must be nonempty")
    problem = _assemble(scenario)
    os.makedirs(args.out, exist_ok=True)
    opts = scenario.optimizer
    timing = {}
    rows = []
    capacities = []
    all_converged = True
    t_start = time.perf_counter()
    for i, value in enumerate(values):
        reduced, feasible = _swept_problem(problem, args.param, value)
        method = "quadrature" if reduced.dim <= 2 else "mc"
        run = optimize_capacity_gradient(
            reduced, feasible, tol=opts["tol"], max_iter=opts["max_iter"],
            step0=opts["step0"], method=method,
            samples=scenario.estimator["samples"],
            seed=_subseed(seed, _PURPOSE_GRADIENT, i))
        all_converged &= run.converged
        capacities.append(run.capacity)
        nondecreasing = (i == 0) or (run.capacity
                                     >= capacities[i - 1] - 1e-8)
        rows.append((value, run.capacity, run.stderr, run.iterations,
                     nondecreasing))
    timing["sweep_seconds"] = time.perf_counter() - t_start
    write_csv(os.path.join(args.out, "sweep.csv"),
              ("param", "C", "stderr", "iters", "nondecreasing"), rows)
    save_sweep_figure(values, capacities, args.param,
                      os.path.join(args.out, "sweep.png"))
    write_json(os.path.join(args.out, "meta.json"), {"timing": timing})
    for value, cap in zip(values, capacities):
        _print_information(f"{args.param}={value:g}", cap, args.bits)
    return 0 if all_converged else 1


def _swept_problem(problem: Problem, param, value):
    """Reduced kernel and feasible set with one parameter overridden."""
    if param == "power_budget":
        if value <= 0:
            raise CliValidationError("power_budget values must be positive")
        try:
            feasible = FeasibleSet(problem.alphabet.energies, value)
        except ValueError as exc:
            raise CliValidationError(f"power_budget={value:g}: {exc}") from exc
        return problem.reduced, feasible
    if value < 0:
        raise CliValidationError("noise_gain values must be nonnegative")
    scenario = problem.scenario
    if value == 0.0:
        kernel = build_kernel(problem.channel, problem.alphabet, None)
    else:
        spec = NoiseSpec(np.full(problem.modes.count, value),
                         np.ones(problem.modes.count))
        q2 = source_noise_covariance_q2(problem.modes, spec,
                                        problem.sensor_couplings,
                                        scenario.grid)
        kernel = build_kernel(problem.channel, problem.alphabet, q2)
    return whiten_and_reduce(kernel), problem.feasible


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "capacity": cmd_capacity,
                "verify": cmd_verify, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except ScenarioError as exc:
        location = args.config
        if exc.line is not None:
            location = f"{args.config}:{exc.line}"
        print(f"config error at {location}: {exc.path}: {exc.message}",
              file=sys.stderr)
        return 2
    except CliValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
