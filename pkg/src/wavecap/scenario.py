"""Scenario configs: validation, alphabet generation, problem assembly.

A scenario is a JSON document with a versioned `schema` field describing
the domain, mode count, time grid, source and sensor patches, input
alphabet, noise, power budget, and estimator/optimizer options.  Unknown
keys are rejected anywhere in the document so typos fail loudly instead of
silently running defaults.
"""

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .capacity import FeasibleSet
from .gaussian_kernel import (ChannelKernel, NoiseSpec, ReducedKernel,
                              SignalAlphabet, build_kernel,
                              source_noise_covariance_q2, whiten_and_reduce)
from .modal_channel import (DIRICHLET, NEUMANN, ChannelOperator, Domain,
                            ModeSet, PatchFunction, TimeGrid,
                            assemble_channel_matrix, build_modes,
                            distributed_couplings)
from .transposition import BoundaryPatch, boundary_couplings

SCHEMA_VERSION = 1

ESTIMATOR_DEFAULTS = {"method": "quadrature", "samples": 100_000,
                      "paths": 10_000, "seed": None}
OPTIMIZER_DEFAULTS = {"step0": 0.5, "max_iter": 10_000, "tol": 1e-6}


class ScenarioError(ValueError):
    """Config validation failure, with a dotted path and best-effort line."""

    def __init__(self, path, message, line=None):
        self.path = path
        self.line = line
        self.message = message
        super().__init__(f"{path}: {message}")


def _fail(path, message):
    raise ScenarioError(path, message)


def _check_keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        _fail(path, "must be an object")
    for key in obj:
        if key not in required and key not in optional:
            _fail(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in obj:
            _fail(f"{path}.{key}" if path else key, "missing required key")


def _number(obj, path, positive=False, nonnegative=False):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, "must be a number")
    if positive and obj <= 0:
        _fail(path, "must be positive")
    if nonnegative and obj < 0:
        _fail(path, "must be nonnegative")
    return float(obj)


def _integer(obj, path, minimum=None):
    if isinstance(obj, bool) or not isinstance(obj, int):
        _fail(path, "must be an integer")
    if minimum is not None and obj < minimum:
        _fail(path, f"must be at least {minimum}")
    return obj


def _string(obj, path, allowed=None):
    if not isinstance(obj, str):
        _fail(path, "must be a string")
    if allowed is not None and obj not in allowed:
        _fail(path, f"must be one of {sorted(allowed)}")
    return obj


@dataclass
class Scenario:
    """Validated scenario ready for assembly."""

    raw: dict
    domain: Domain
    bc: str
    mode_count: int
    grid: TimeGrid
    source_model: str
    source_patches: list
    sensor_patches: list
    alphabet_spec: dict
    noise: NoiseSpec | None
    power_budget: float | None
    estimator: dict
    optimizer: dict


def _parse_volume_patch(obj, path, dims):
    _check_keys(obj, path, required=("box",), optional=("profile", "amplitude"))
    box = obj["box"]
    if not isinstance(box, list) or len(box) != dims:
        _fail(f"{path}.box", f"must list {dims} [lo, hi] pairs")
    intervals = []
    for axis, pair in enumerate(box):
        if (not isinstance(pair, list) or len(pair) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in pair)):
            _fail(f"{path}.box[{axis}]", "must be a [lo, hi] number pair")
        if not pair[0] < pair[1]:
            _fail(f"{path}.box[{axis}]", "must have lo < hi")
        intervals.append((float(pair[0]), float(pair[1])))
    profile = _string(obj.get("profile", "constant"), f"{path}.profile",
                      allowed={"constant", "bump"})
    amplitude = _number(obj.get("amplitude", 1.0), f"{path}.amplitude")
    return PatchFunction(tuple(intervals), profile, amplitude)


def _parse_boundary_patch(obj, path, dims):
    _check_keys(obj, path, required=("axis", "side"),
                optional=("box", "profile", "amplitude"))
    axis = _integer(obj["axis"], f"{path}.axis", minimum=0)
    if axis >= dims:
        _fail(f"{path}.axis", f"must be below {dims}")
    side = _string(obj["side"], f"{path}.side", allowed={"lo", "hi"})
    box = obj.get("box", [])
    if not isinstance(box, list) or len(box) != dims - 1:
        _fail(f"{path}.box", f"must list {dims - 1} [lo, hi] pairs for the face")
    intervals = []
    for i, pair in enumerate(box):
        if (not isinstance(pair, list) or len(pair) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in pair)):
            _fail(f"{path}.box[{i}]", "must be a [lo, hi] number pair")
        if not pair[0] < pair[1]:
            _fail(f"{path}.box[{i}]", "must have lo < hi")
        intervals.append((float(pair[0]), float(pair[1])))
    profile = _string(obj.get("profile", "constant"), f"{path}.profile",
                      allowed={"constant", "bump"})
    amplitude = _number(obj.get("amplitude", 1.0), f"{path}.amplitude")
    return BoundaryPatch(axis, side, tuple(intervals), profile, amplitude)


def _parse_alphabet(obj, path, steps):
    _check_keys(obj, path, required=("kind",),
                optional=("amplitude", "count", "seed", "symbols"))
    kind = _string(obj["kind"], f"{path}.kind",
                   allowed={"antipodal", "orthogonal_tones", "random",
                            "explicit"})
    spec = {"kind": kind}
    if kind == "explicit":
        if "symbols" not in obj:
            _fail(f"{path}.symbols", "missing required key")
        spec["symbols"] = obj["symbols"]
        return spec
    spec["amplitude"] = _number(obj.get("amplitude", 1.0), f"{path}.amplitude",
                                positive=True)
    if kind in ("orthogonal_tones", "random"):
        spec["count"] = _integer(obj.get("count", 2), f"{path}.count", minimum=1)
        if kind == "orthogonal_tones" and spec["count"] > steps - 1:
            _fail(f"{path}.count", "needs count <= steps - 1 distinct tones")
    if kind == "random":
        spec["seed"] = _integer(obj.get("seed", 0), f"{path}.seed", minimum=0)
    return spec


def validate_scenario(raw: dict) -> Scenario:
    """Validate a parsed config document and build the typed scenario."""
    _check_keys(raw, "", required=("schema", "domain", "boundary", "modes",
                                   "time", "source", "sensors", "alphabet"),
                optional=("noise", "power_budget", "estimator", "optimizer"))
    if raw["schema"] != SCHEMA_VERSION:
        _fail("schema", f"unsupported schema version {raw['schema']!r}; "
                        f"this build reads version {SCHEMA_VERSION}")

    dom = raw["domain"]
    _check_keys(dom, "domain", required=("lengths",), optional=("wave_speed",))
    lengths = dom["lengths"]
    if (not isinstance(lengths, list) or not 1 <= len(lengths) <= 3
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   or v <= 0 for v in lengths)):
        _fail("domain.lengths", "must list 1 to 3 positive edge lengths")
    wave_speed = _number(dom.get("wave_speed", 1.0), "domain.wave_speed",
                         positive=True)
    domain = Domain(tuple(float(v) for v in lengths), wave_speed)

    bc = _string(raw["boundary"], "boundary", allowed={DIRICHLET, NEUMANN})
    mode_count = _integer(raw["modes"], "modes", minimum=1)

    tm = raw["time"]
    _check_keys(tm, "time", required=("horizon", "steps"))
    horizon = _number(tm["horizon"], "time.horizon", positive=True)
    steps = _integer(tm["steps"], "time.steps", minimum=1)
    grid = TimeGrid(horizon, steps)

    src = raw["source"]
    _check_keys(src, "source", required=("model", "patches"))
    model = _string(src["model"], "source.model",
                    allowed={"distributed", "boundary"})
    if not isinstance(src["patches"], list) or not src["patches"]:
        _fail("source.patches", "must be a nonempty list")
    if model == "distributed":
        source_patches = [_parse_volume_patch(p, f"source.patches[{i}]",
                                              domain.dims)
                          for i, p in enumerate(src["patches"])]
    else:
        if bc != DIRICHLET:
            _fail("source.model", "boundary sources require Dirichlet modes")
        source_patches = [_parse_boundary_patch(p, f"source.patches[{i}]",
                                                domain.dims)
                          for i, p in enumerate(src["patches"])]

    if not isinstance(raw["sensors"], list) or not raw["sensors"]:
        _fail("sensors", "must be a nonempty list")
    sensor_patches = [_parse_volume_patch(p, f"sensors[{i}]", domain.dims)
                      for i, p in enumerate(raw["sensors"])]

    alphabet_spec = _parse_alphabet(raw["alphabet"], "alphabet", steps)

    noise = None
    if "noise" in raw:
        nz = raw["noise"]
        _check_keys(nz, "noise", required=("source_gains",),
                    optional=("q0_diag",))
        gains = _per_mode_vector(nz["source_gains"], "noise.source_gains",
                                 mode_count, nonnegative=True)
        q0 = _per_mode_vector(nz.get("q0_diag", 1.0), "noise.q0_diag",
                              mode_count, nonnegative=True)
        spec = NoiseSpec(gains, q0)
        noise = spec if spec.active else None

    power_budget = None
    if "power_budget" in raw and raw["power_budget"] is not None:
        power_budget = _number(raw["power_budget"], "power_budget",
                               positive=True)

    estimator = dict(ESTIMATOR_DEFAULTS)
    if "estimator" in raw:
        est = raw["estimator"]
        _check_keys(est, "estimator", required=(),
                    optional=("method", "samples", "paths", "seed"))
        if "method" in est:
            estimator["method"] = _string(est["method"], "estimator.method",
                                          allowed={"quadrature", "mc",
                                                   "duncan"})
        if "samples" in est:
            estimator["samples"] = _integer(est["samples"],
                                            "estimator.samples", minimum=2)
        if "paths" in est:
            estimator["paths"] = _integer(est["paths"], "estimator.paths",
                                          minimum=2)
        if "seed" in est and est["seed"] is not None:
            estimator["seed"] = _integer(est["seed"], "estimator.seed",
                                         minimum=0)
    if estimator["method"] == "duncan" and noise is not None:
        _fail("estimator.method", "duncan requires white observation noise "
                                  "(drop the noise section or zero its gains)")

    optimizer = dict(OPTIMIZER_DEFAULTS)
    if "optimizer" in raw:
        opt = raw["optimizer"]
        _check_keys(opt, "optimizer", required=(),
                    optional=("step0", "max_iter", "tol"))
        if "step0" in opt:
            optimizer["step0"] = _number(opt["step0"], "optimizer.step0",
                                         positive=True)
        if "max_iter" in opt:
            optimizer["max_iter"] = _integer(opt["max_iter"],
                                             "optimizer.max_iter", minimum=1)
        if "tol" in opt:
            optimizer["tol"] = _number(opt["tol"], "optimizer.tol",
                                       positive=True)

    return Scenario(raw=raw, domain=domain, bc=bc, mode_count=mode_count,
                    grid=grid, source_model=model,
                    source_patches=source_patches,
                    sensor_patches=sensor_patches,
                    alphabet_spec=alphabet_spec, noise=noise,
                    power_budget=power_budget, estimator=estimator,
                    optimizer=optimizer)


def _per_mode_vector(obj, path, count, nonnegative=False):
    if isinstance(obj, list):
        if len(obj) != count:
            _fail(path, f"must have one entry per mode ({count})")
        values = [_number(v, f"{path}[{i}]", nonnegative=nonnegative)
                  for i, v in enumerate(obj)]
        return np.array(values)
    return np.full(count, _number(obj, path, nonnegative=nonnegative))


def find_key_line(text: str, dotted_path: str) -> int | None:
    """Best-effort line number of the deepest key in a dotted config path."""
    leaf = re.split(r"[.\[]", dotted_path)[-1].rstrip("]")
    if not leaf or leaf.isdigit():
        leaf = re.split(r"[.\[]", dotted_path)[0]
    pattern = re.compile(r'"' + re.escape(leaf) + r'"\s*:')
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return lineno
    return None


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; errors carry line references."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<syntax>", f"invalid JSON: {exc.msg}",
                            line=exc.lineno) from exc
    try:
        return validate_scenario(raw)
    except ScenarioError as exc:
        exc.line = find_key_line(text, exc.path)
        raise


# ---------------------------------------------------------------------------
# alphabet generation

def make_alphabet(spec: dict, n_inputs: int, grid: TimeGrid) -> SignalAlphabet:
    """Construct the input alphabet described by a validated spec."""
    N = grid.steps
    kind = spec["kind"]
    if kind == "antipodal":
        base = np.ones((n_inputs, N)) * spec["amplitude"]
        symbols = np.stack([base, -base])
    elif kind == "orthogonal_tones":
        count = spec["count"]
        t = (np.arange(N) + 0.5) / N
        symbols = np.empty((count, n_inputs, N))
        for q in range(count):
            tone = (spec["amplitude"] * math.sqrt(2.0)
                    * np.cos(math.pi * (q + 1) * t))
            symbols[q] = np.broadcast_to(tone, (n_inputs, N))
    elif kind == "random":
        rng = np.random.default_rng(spec["seed"])
        symbols = spec["amplitude"] * rng.standard_normal((spec["count"],
                                                           n_inputs, N))
    elif kind == "explicit":
        symbols = np.asarray(spec["symbols"], dtype=float)
        if symbols.ndim != 3 or symbols.shape[1:] != (n_inputs, N):
            raise ScenarioError("alphabet.symbols",
                                f"must have shape (count, {n_inputs}, {N})")
    else:
        raise ScenarioError("alphabet.kind", f"unknown kind {kind!r}")
    return SignalAlphabet(symbols, grid.dt)


# ---------------------------------------------------------------------------
# assembly

@dataclass
class Problem:
    """Fully assembled pipeline for one scenario."""

    scenario: Scenario
    modes: ModeSet
    channel: ChannelOperator
    alphabet: SignalAlphabet
    kernel: ChannelKernel
    reduced: ReducedKernel
    feasible: FeasibleSet
    input_couplings: np.ndarray
    sensor_couplings: np.ndarray


def build_problem(scenario: Scenario) -> Problem:
    """Assemble modes, channel, alphabet, kernel and feasible set."""
    modes = build_modes(scenario.domain, scenario.bc, scenario.mode_count)
    _, G = distributed_couplings(modes, [], scenario.sensor_patches)
    if scenario.source_model == "distributed":
        B, _ = distributed_couplings(modes, scenario.source_patches, [])
    else:
        B = boundary_couplings(modes, scenario.source_patches)
    channel = assemble_channel_matrix(modes, B, G, scenario.grid)
    alphabet = make_alphabet(scenario.alphabet_spec, len(scenario.source_patches),
                             scenario.grid)
    q2 = None
    if scenario.noise is not None:
        q2 = source_noise_covariance_q2(modes, scenario.noise, G, scenario.grid)
    kernel = build_kernel(channel, alphabet, q2)
    reduced = whiten_and_reduce(kernel)
    feasible = FeasibleSet(alphabet.energies, scenario.power_budget)
    return Problem(scenario=scenario, modes=modes, channel=channel,
                   alphabet=alphabet, kernel=kernel, reduced=reduced,
                   feasible=feasible, input_couplings=B, sensor_couplings=G)
