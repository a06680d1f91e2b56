"""Residual extraction, energy monitors, and log-log rate fitting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidParameterError,
    SaddleCertificateError,
)
from .problem import Problem, SaddlePoint
from .trace import Trace, TrajectoryRecord

_FLOOR = 1e-300


def residual_series(trace: Trace, problem: Problem, saddle: SaddlePoint):
    """(pd_gap_k, feasibility_k, objective_gap_k), indexed like the trace.

    The objective gap is |f(x_k) - f(x*)|. For unconstrained problems the
    primal-dual gap is recomputed as f(x_k) - f*; constrained traces must
    have been recorded with the saddle available.
    """
    f_star = problem.f_value(saddle.x_star)
    f_vals = np.array([rec.f_value for rec in trace.records])
    obj_gap = np.abs(f_vals - f_star)
    feas = np.array([rec.feas for rec in trace.records])
    if problem.dim_dual == 0:
        gaps = f_vals - f_star
        bad = gaps < -1e-12 * (1.0 + abs(f_star))
        if np.any(bad):
            raise SaddleCertificateError(
                f"objective fell {gaps.min():.3e} below the certified optimum"
            )
        pd = np.maximum(gaps, 0.0)
    else:
        if any(rec.pd_gap is None for rec in trace.records):
            raise InvalidParameterError(
                "trace lacks pd_gap entries; rerun with the saddle certificate"
            )
        pd = np.array([rec.pd_gap for rec in trace.records])
    return pd, feas, obj_gap


@dataclass(frozen=True)
class RateReport:
    """Least-squares fit of log y against log k over a trailing window.

    ``r_squared_exponential`` is the fit quality of the alternative
    regression log y ~ k; when it beats the power-law fit the series decays
    faster than any power and ``exponential_suspected`` is set. That flag is
    informational: rates are upper bounds, so beating them is success.
    """

    slope: float
    intercept: float
    r_squared: float
    window: tuple
    series_tag: str
    r_squared_exponential: float
    exponential_suspected: bool


def _r_squared(xs: np.ndarray, ys: np.ndarray):
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def fit_rate(
    series: Sequence[float],
    burn_in: float = 0.3,
    index: Optional[Sequence[float]] = None,
    tag: str = "",
) -> RateReport:
    """Fit a power law to a positive decaying series.

    Entries that are nonpositive, sub-1e-300, or NaN are truncated from the
    tail (then dropped pointwise); ``burn_in`` discards the leading fraction
    of what survives. ``index`` defaults to 1..N; pass sample times to fit
    against a continuous axis.
    """
    if not (0.0 <= burn_in < 1.0):
        raise InvalidParameterError("burn_in must lie in [0, 1)")
    values = np.asarray(series, dtype=float)
    idx = (
        np.arange(1, len(values) + 1, dtype=float)
        if index is None
        else np.asarray(index, dtype=float)
    )
    if idx.shape != values.shape:
        raise InvalidParameterError("index and series lengths differ")
    usable = np.isfinite(values) & (values > _FLOOR)
    last = np.nonzero(usable)[0]
    if last.size == 0:
        raise InsufficientDataError("no usable points in series")
    values = values[: last[-1] + 1]
    idx = idx[: last[-1] + 1]
    usable = usable[: last[-1] + 1]
    values, idx = values[usable], idx[usable]

    start = int(np.floor(burn_in * len(values)))
    values, idx = values[start:], idx[start:]
    if len(values) < 5:
        raise InsufficientDataError(
            f"only {len(values)} usable points after burn-in; need at least 5"
        )
    log_idx = np.log(idx)
    log_val = np.log(values)
    slope, intercept, r2_pow = _r_squared(log_idx, log_val)
    _, _, r2_exp = _r_squared(idx, log_val)
    return RateReport(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2_pow),
        window=(float(idx[0]), float(idx[-1])),
        series_tag=tag,
        r_squared_exponential=float(r2_exp),
        exponential_suspected=bool(r2_exp > r2_pow),
    )


def energy_monotonicity(
    source: Union[Trace, TrajectoryRecord, Sequence[float]], slack: float = 0.0
) -> list:
    """Positions where the energy rises by more than slack * (1 + E_0).

    Accepts a trace, a trajectory, or a bare sequence. An empty list means
    the energy is nonincreasing within slack.
    """
    if isinstance(source, (Trace, TrajectoryRecord)):
        energies = source.column("energy")
        if len(energies) == 0 or not np.any(np.isfinite(energies)):
            raise InvalidParameterError("no energy column present in the trace")
    else:
        energies = np.asarray(source, dtype=float)
    finite = np.isfinite(energies)
    values = energies[finite]
    positions = np.nonzero(finite)[0]
    if len(values) == 0:
        return []
    budget = slack * (1.0 + float(values[0]))
    violations = []
    for j in range(1, len(values)):
        if values[j] > values[j - 1] + budget:
            violations.append(int(positions[j]))
    return violations
