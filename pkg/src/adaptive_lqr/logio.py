"""Flat-file outputs: trajectory CSV, gnuplot column files, key-value reports.

CSV floats are written with ``repr`` (shortest string that round-trips to the
same double), so ``read_log_csv(write_log_csv(log))`` reproduces every value
exactly. Row ``k`` holds the state-like quantities at step ``k`` and the
transition quantities of step ``k``; the final row has ``nan`` transitions.
Header comment lines (``# key=value``) carry provenance.
"""

import csv
import json
import math

import numpy as np

from .sim import TrajectoryLog


def _columns(n, m, p):
    cols = ["k"]
    cols += [f"x{i}" for i in range(n)]
    cols += [f"u{i}" for i in range(m)]
    cols += [f"theta{i}" for i in range(p)]
    cols += [f"theta_hat{i}" for i in range(p)]
    cols += [f"w{i}" for i in range(n)]
    cols += [f"e1_{i}" for i in range(n)]
    return cols + ["V", "stepsize_ok", "diverged"]


def _fmt(v) -> str:
    return repr(float(v))


def write_log_csv(log: TrajectoryLog, path, provenance: dict = None):
    n, m, p = log.x.shape[1], log.u.shape[1], log.theta.shape[1]
    nan_u, nan_n = [math.nan] * m, [math.nan] * n
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"# dims=n:{n},m:{m},p:{p}\n")
        writer = csv.writer(fh)
        writer.writerow(_columns(n, m, p))
        N = log.n_steps
        for k in range(N + 1):
            last = k == N
            row = [str(k)]
            row += [_fmt(v) for v in log.x[k]]
            row += [_fmt(v) for v in (nan_u if last else log.u[k])]
            row += [_fmt(v) for v in log.theta[k]]
            row += [_fmt(v) for v in log.theta_hat[k]]
            row += [_fmt(v) for v in (nan_n if last else log.w[k])]
            row += [_fmt(v) for v in (nan_n if last else log.e1[k])]
            row.append(_fmt(log.V[k]))
            row.append("" if last else str(int(log.stepsize_ok[k])))
            row.append(str(int(log.diverged and last)))
            writer.writerow(row)


def read_log_csv(path) -> TrajectoryLog:
    """Read a log written by :func:`write_log_csv` (gains and Riccati matrices are not stored)."""
    provenance = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            provenance[key] = value
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    rows = list(reader)
    n = sum(1 for c in header if c.startswith("x"))
    m = sum(1 for c in header if c.startswith("u"))
    p = sum(1 for c in header if c.startswith("theta_hat"))
    idx = {c: i for i, c in enumerate(header)}

    def block(prefix, count, sl):
        return np.array([[float(r[idx[f"{prefix}{i}"]]) for i in range(count)] for r in rows[sl]])

    N = len(rows) - 1
    steps = slice(0, N)
    log = TrajectoryLog(
        x=block("x", n, slice(None)),
        u=block("u", m, steps).reshape(N, m),
        theta=block("theta", p, slice(None)),
        theta_hat=block("theta_hat", p, slice(None)),
        w=block("w", n, steps).reshape(N, n),
        e1=block("e1_", n, steps).reshape(N, n),
        V=np.array([float(r[idx["V"]]) for r in rows]),
        stepsize_ok=np.array([r[idx["stepsize_ok"]] == "1" for r in rows[:N]], dtype=bool),
        K=None,
        P=None,
        diverged=bool(int(rows[-1][idx["diverged"]])),
        meta={"provenance": provenance},
    )
    return log


def write_plot_file(log: TrajectoryLog, path, stride: int = 10, provenance: dict = None):
    """Whitespace-separated, downsampled columns for gnuplot: k, x, theta, theta_hat."""
    n, p = log.x.shape[1], log.theta.shape[1]
    cols = ["k"] + [f"x{i}" for i in range(n)] + [f"theta{i}" for i in range(p)] + \
        [f"theta_hat{i}" for i in range(p)]
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("# " + " ".join(cols) + "\n")
        ks = list(range(0, log.n_steps + 1, stride))
        if ks[-1] != log.n_steps:
            ks.append(log.n_steps)
        for k in ks:
            vals = [k, *log.x[k], *log.theta[k], *log.theta_hat[k]]
            fh.write(" ".join(f"{v:.10g}" for v in vals) + "\n")


def _kv(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return '"none"'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return json.dumps(str(value))


def write_report(values: dict, path, provenance: dict = None):
    """``key = value`` lines (TOML-compatible scalars)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}={value}\n")
        for key, value in values.items():
            fh.write(f"{key} = {_kv(value)}\n")


def _parse_kv(text: str):
    if text in ("true", "false"):
        return text == "true"
    if text.startswith('"'):
        return json.loads(text)
    try:
        return int(text)
    except ValueError:
        return float(text)


def read_report(path) -> dict:
    """Inverse of :func:`write_report`; values come back as bool, int, float or str."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition(" = ")
            out[key] = _parse_kv(value)
    return out


def write_json(data: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
