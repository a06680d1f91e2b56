"""Per-iteration traces and their CSV serialization.

One schema serves the discrete solvers and the continuous simulator: the
index column is ``k`` for solvers and ``t`` for trajectories, the rest is
shared. Rows serialize in shortest round-trip decimal form; ``pd_gap``,
``energy`` and ``f_gap`` stay empty when no saddle certificate was
available, and ``wall_ns`` stays empty in files (timings live in a sidecar)
so trace bytes are deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidParameterError

CSV_COLUMNS = (
    "k",
    "mu",
    "gamma_next",
    "tau_next",
    "grad_norm",
    "f_gap",
    "feas",
    "pd_gap",
    "energy",
    "sub_stat",
    "wall_ns",
)


@dataclass
class IterationRecord:
    k: int
    grad_norm: float
    f_value: float
    feas: float
    mu: Optional[float] = None
    gamma_next: Optional[float] = None
    tau_next: Optional[float] = None
    pd_gap: Optional[float] = None
    energy: Optional[float] = None
    sub_stat: Optional[float] = None
    wall_ns: Optional[int] = None
    mu_hypothesis_ok: Optional[bool] = None  # mu_k >= 1, when mu was computed


@dataclass
class Trace:
    """Run header plus one record per performed iteration."""

    header: dict
    records: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    @property
    def f_star(self) -> Optional[float]:
        return self.header.get("f_star")

    def column(self, name: str) -> np.ndarray:
        """Column as floats with NaN for missing entries."""
        out = np.empty(len(self.records))
        for i, rec in enumerate(self.records):
            if name == "f_gap":
                val = None if self.f_star is None else abs(rec.f_value - self.f_star)
            else:
                val = getattr(rec, name)
            out[i] = np.nan if val is None else float(val)
        return out

    def to_rows(self) -> list:
        rows = []
        for rec in self.records:
            f_gap = None if self.f_star is None else abs(rec.f_value - self.f_star)
            rows.append(
                {
                    "k": rec.k,
                    "mu": rec.mu,
                    "gamma_next": rec.gamma_next,
                    "tau_next": rec.tau_next,
                    "grad_norm": rec.grad_norm,
                    "f_gap": f_gap,
                    "feas": rec.feas,
                    "pd_gap": rec.pd_gap,
                    "energy": rec.energy,
                    "sub_stat": rec.sub_stat,
                    "wall_ns": None,  # timings go to the sidecar file
                }
            )
        return rows


@dataclass
class OdeSample:
    t: float
    grad_norm: float
    f_value: float
    feas: float
    mu: float
    tau: float
    tau_dot: float
    pd_gap: Optional[float] = None
    energy: Optional[float] = None


@dataclass
class TrajectoryRecord:
    """Samples at integrator accept points, strictly increasing in t."""

    header: dict
    samples: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    @property
    def f_star(self) -> Optional[float]:
        return self.header.get("f_star")

    def column(self, name: str) -> np.ndarray:
        out = np.empty(len(self.samples))
        for i, rec in enumerate(self.samples):
            if name == "f_gap":
                val = None if self.f_star is None else abs(rec.f_value - self.f_star)
            else:
                val = getattr(rec, name)
            out[i] = np.nan if val is None else float(val)
        return out

    def to_rows(self) -> list:
        # mu, tau and tau_dot reuse the discrete scalar columns: gamma is the
        # discrete counterpart of tau_dot, tau_next of tau.
        rows = []
        for rec in self.samples:
            f_gap = None if self.f_star is None else abs(rec.f_value - self.f_star)
            rows.append(
                {
                    "k": rec.t,
                    "mu": rec.mu,
                    "gamma_next": rec.tau_dot,
                    "tau_next": rec.tau,
                    "grad_norm": rec.grad_norm,
                    "f_gap": f_gap,
                    "feas": rec.feas,
                    "pd_gap": rec.pd_gap,
                    "energy": rec.energy,
                    "sub_stat": None,
                    "wall_ns": None,
                }
            )
        return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace_csv(path, trace, index: str = "k") -> None:
    """Write a Trace or TrajectoryRecord; header lines are '#'-prefixed."""
    columns = (index,) + CSV_COLUMNS[1:]
    lines = []
    for key in sorted(trace.header):
        value = trace.header[key]
        if isinstance(value, np.ndarray):
            continue
        lines.append(f"# {key} = {value}")
    lines.append(",".join(columns))
    for row in trace.to_rows():
        row = dict(row)
        row[index] = row.pop("k")
        lines.append(",".join(_fmt(row[c]) for c in columns))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path):
    """Read back a trace CSV: (header dict, columns dict, index name)."""
    header = {}
    rows = []
    with open(path) as fh:
        data_lines = []
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
            elif line:
                data_lines.append(line)
    reader = csv.reader(data_lines)
    names = next(reader)
    index = names[0]
    if tuple(names[1:]) != CSV_COLUMNS[1:] or index not in ("k", "t"):
        raise InvalidParameterError(f"{path}: unexpected column header {names}")
    for parsed in reader:
        rows.append([float(v) if v != "" else np.nan for v in parsed])
    columns = {name: np.array([r[i] for r in rows]) for i, name in enumerate(names)}
    return header, columns, index


def validate_trace_csv(path) -> list:
    """Schema check; returns a list of problems (empty means valid)."""
    problems = []
    try:
        _, columns, index = read_trace_csv(path)
    except (InvalidParameterError, ValueError) as exc:
        return [str(exc)]
    idx = columns[index]
    if len(idx) == 0:
        problems.append("no data rows")
    elif np.any(np.diff(idx) <= 0):
        problems.append(f"{index} column is not strictly increasing")
    return problems
