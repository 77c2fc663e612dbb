"""Deterministic artifact writers: canonical JSON, CSV tables, figures.

Result files must be byte-identical across runs with the same config and
seed, so floats are serialized with 17 significant digits (round-trip
exact), dictionary keys are emitted sorted, and anything timing-related is
kept out of the result document.  Figures are rendered with the Agg
backend straight to files.
"""

import hashlib
import json
import math

import numpy as np


def format_float(value: float) -> str:
    """17-significant-digit decimal form; round-trips to the same double."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError("cannot serialize non-finite float")
    return format(value, ".17g")


def _serialize(obj, indent):
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{json.dumps(str(key))}: {_serialize(obj[key], indent + 1)}"
                 for key in sorted(obj)]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            return "[]"
        parts = [f"{inner}{_serialize(item, indent + 1)}" for item in items]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_canonical(obj) -> str:
    """Pretty, sorted-key, 17-digit-float JSON text (with trailing newline)."""
    return _serialize(obj, 0) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_canonical(obj))


def scenario_hash(raw: dict) -> str:
    """SHA-256 of the canonical serialization of the raw config document."""
    return hashlib.sha256(dumps_canonical(raw).encode("utf-8")).hexdigest()


def write_csv(path, header, rows):
    """Plain comma-delimited table; floats at 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for value in row:
                if isinstance(value, (bool, np.bool_)):
                    cells.append("1" if value else "0")
                elif isinstance(value, (int, np.integer)):
                    cells.append(str(int(value)))
                elif isinstance(value, (float, np.floating)):
                    cells.append(format_float(value))
                else:
                    cells.append(str(value))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# figures

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def save_trace_figure(trace_rows, path):
    """Objective and KKT gap against iteration for an optimization run."""
    plt = _pyplot()
    iters = [row[0] for row in trace_rows]
    values = [row[1] for row in trace_rows]
    gaps = [max(row[2], 1e-16) for row in trace_rows]
    fig, (ax_j, ax_gap) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    ax_j.plot(iters, values, marker=".", color="tab:blue")
    ax_j.set_ylabel("J (nats)")
    ax_j.grid(True, alpha=0.3)
    ax_gap.semilogy(iters, gaps, marker=".", color="tab:red")
    ax_gap.set_ylabel("KKT gap")
    ax_gap.set_xlabel("iteration")
    ax_gap.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(params, capacities, param_name, path):
    """Capacity against the swept parameter."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(params, capacities, marker="o", color="tab:blue")
    ax.set_xlabel(param_name)
    ax.set_ylabel("capacity (nats)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trajectory_figure(times, drift, cumulative, path):
    """Sensor drift and cumulative noisy observation over time."""
    plt = _pyplot()
    fig, (ax_f, ax_y) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    for s in range(drift.shape[0]):
        ax_f.plot(times, drift[s], label=f"sensor {s}")
        ax_y.plot(times, cumulative[s], label=f"sensor {s}")
    ax_f.set_ylabel("drift F(t)")
    ax_f.grid(True, alpha=0.3)
    ax_y.set_ylabel("cumulative y(t)")
    ax_y.set_xlabel("t")
    ax_y.grid(True, alpha=0.3)
    if drift.shape[0] > 1:
        ax_f.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
