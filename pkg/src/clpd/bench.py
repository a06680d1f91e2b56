"""Experiment harness: config files, runs, and artifact bundles.

Configs are line-oriented ``key = value`` files with ``[section]`` headers:
one ``[experiment]`` section, one ``[solver NAME]`` section per solver run
(omitted for ode experiments), and an optional ``[output]`` section. A
``#`` starts a comment. Every solver in an experiment shares the one
problem instance generated from the experiment seed; artifacts per run are
``<solver>.csv`` traces, ``summary.txt``, ``timing.txt`` (wall times live
only here so the CSVs stay byte-deterministic), and ``convergence.svg``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .aapda import AapdaOptions, run as run_aapda
from .baselines import BaselineOptions, run_fista, run_lin_alm
from .errors import (
    ClpdError,
    ConfigError,
    InsufficientDataError,
    NoSaddlePointError,
    UnsupportedProblemError,
)
from .metrics import fit_rate
from .ode import OdeParams, initial_state, integrate
from .problem import (
    Problem,
    RngSpec,
    gen_equality_qp,
    gen_least_squares,
    load_problem,
    solve_kkt_saddle,
)
from .svgplot import semilogy_svg
from .trace import write_trace_csv

_METHODS = ("aapda", "fista", "lin-alm")

_EXPERIMENT_KEYS = {
    "tag": str,
    "seed": int,
    "n": int,
    "m": int,
    "mu": float,
    "density": float,
    "q": float,
    "p": float,
    "t0": float,
    "tend": float,
    "rtol": float,
    "atol": float,
    "max_step": float,
    "mu_cap": float,
    "problem": str,
    "x1": str,
    "lambda1": str,
}

_SOLVER_KEYS = {
    "method": str,
    "p": str,  # number or "k"
    "gamma1": float,
    "theta": float,
    "cap": int,
    "mu_floor": str,  # number or "off"
    "subtol": float,
    "grad_eps": float,
    "alpha": float,
    "penalty": float,
    "dual_step": float,
}

_OUTPUT_KEYS = {"dir": str, "plot": bool}

_REQUIRED_BY_TAG = {
    "example1": ("seed", "n", "m", "mu"),
    "example2": ("seed", "m", "n", "density"),
    "ode": ("seed", "n", "m", "mu", "q", "p"),
    "custom": ("problem",),
}


@dataclass
class SolverConfig:
    name: str
    method: str
    options: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    tag: str
    seed: int = 0
    values: dict = field(default_factory=dict)
    solvers: list = field(default_factory=list)
    out_dir: str = "out"
    plot: bool = True

    def value(self, key, default=None):
        return self.values.get(key, default)


def _parse_bool(text: str):
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    errors = []
    sections: dict = {}
    order: list = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: unterminated section header {raw.strip()!r}")
                current = None
                continue
            name = line[1:-1].strip()
            if name == "experiment" or name == "output":
                key = name
            elif name.startswith("solver"):
                solver_name = name[len("solver") :].strip()
                if not solver_name:
                    errors.append(f"line {lineno}: solver section needs a name")
                    current = None
                    continue
                key = f"solver {solver_name}"
            else:
                errors.append(f"line {lineno}: unknown section [{name}]")
                current = None
                continue
            if key in sections:
                errors.append(f"line {lineno}: duplicate section [{key}]")
            sections[key] = {}
            order.append(key)
            current = key
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside of any section")
            continue
        key, _, value = line.partition("=")
        sections[current][key.strip()] = (value.strip(), lineno)

    if "experiment" not in sections:
        errors.append("missing required section [experiment]")
        raise ConfigError(errors)

    def typed(section_name, schema, key, raw_pair):
        value, lineno = raw_pair
        want = schema[key]
        try:
            if want is bool:
                return _parse_bool(value)
            return want(value)
        except ValueError:
            errors.append(
                f"line {lineno}: key {key!r} in [{section_name}] expects "
                f"{want.__name__}, got {value!r}"
            )
            return None

    exp_values: dict = {}
    for key, raw_pair in sections["experiment"].items():
        if key not in _EXPERIMENT_KEYS:
            errors.append(f"line {raw_pair[1]}: unknown key {key!r} in [experiment]")
            continue
        parsed = typed("experiment", _EXPERIMENT_KEYS, key, raw_pair)
        if parsed is not None:
            exp_values[key] = parsed

    tag = exp_values.get("tag")
    if tag is None:
        errors.append("missing required key 'tag' in section [experiment]")
    elif tag not in _REQUIRED_BY_TAG:
        errors.append(f"unknown experiment tag {tag!r}; expected one of "
                      f"{sorted(_REQUIRED_BY_TAG)}")
        tag = None
    if tag is not None:
        for key in _REQUIRED_BY_TAG[tag]:
            if key not in exp_values:
                errors.append(f"missing required key {key!r} in section [experiment]")
        if tag == "example2" and "density" in exp_values:
            if not (0.0 < exp_values["density"] <= 1.0):
                errors.append("key 'density' in [experiment] must lie in (0, 1]")
    for init_key in ("x1", "lambda1"):
        raw = exp_values.get(init_key)
        if raw is not None and raw not in ("zeros", "ones"):
            try:
                float(raw)
            except ValueError:
                errors.append(
                    f"key {init_key!r} in [experiment] must be 'zeros', 'ones', or a number"
                )

    solvers = []
    for section in order:
        if not section.startswith("solver "):
            continue
        name = section[len("solver ") :]
        raw_items = sections[section]
        opts: dict = {}
        for key, raw_pair in raw_items.items():
            if key not in _SOLVER_KEYS:
                errors.append(f"line {raw_pair[1]}: unknown key {key!r} in [{section}]")
                continue
            parsed = typed(section, _SOLVER_KEYS, key, raw_pair)
            if parsed is not None:
                opts[key] = parsed
        method = opts.pop("method", name if name in _METHODS else None)
        if method is None:
            errors.append(
                f"section [{section}] needs a 'method' key (or a name in {_METHODS})"
            )
            continue
        if method not in _METHODS:
            errors.append(f"section [{section}]: unknown method {method!r}")
            continue
        if method == "aapda":
            if "p" not in opts:
                errors.append(f"missing required key 'p' in section [{section}]")
            elif opts["p"] != "k":
                try:
                    opts["p"] = float(opts["p"])
                except ValueError:
                    errors.append(
                        f"section [{section}]: key 'p' must be a number or 'k'"
                    )
            if "mu_floor" in opts and opts["mu_floor"] != "off":
                try:
                    opts["mu_floor"] = float(opts["mu_floor"])
                except ValueError:
                    errors.append(
                        f"section [{section}]: key 'mu_floor' must be a number or 'off'"
                    )
        solvers.append(SolverConfig(name=name, method=method, options=opts))

    if tag == "ode" and solvers:
        errors.append("ode experiments integrate one trajectory; remove [solver] sections")
    if tag in ("example1", "example2", "custom") and not solvers:
        errors.append("need at least one [solver] section")

    out_dir, plot = "out", True
    if "output" in sections:
        for key, raw_pair in sections["output"].items():
            if key not in _OUTPUT_KEYS:
                errors.append(f"line {raw_pair[1]}: unknown key {key!r} in [output]")
                continue
            parsed = typed("output", _OUTPUT_KEYS, key, raw_pair)
            if parsed is None:
                continue
            if key == "dir":
                out_dir = parsed
            else:
                plot = parsed

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        tag=tag,
        seed=int(exp_values.get("seed", 0)),
        values=exp_values,
        solvers=solvers,
        out_dir=out_dir,
        plot=plot,
    )


def build_problem(config: ExperimentConfig) -> Problem:
    rng = RngSpec(config.seed)
    v = config.value
    if config.tag == "example1" or config.tag == "ode":
        return gen_equality_qp(v("n"), v("m"), v("mu"), rng)
    if config.tag == "example2":
        return gen_least_squares(v("m"), v("n"), v("density"), rng)
    return load_problem(v("problem"))


def _init_vector(spec_text: Optional[str], size: int) -> Optional[np.ndarray]:
    if spec_text is None or spec_text == "zeros":
        return None
    if spec_text == "ones":
        return np.ones(size)
    return np.full(size, float(spec_text))


@dataclass
class ExperimentResult:
    out_dir: Path
    traces: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    saddle_available: bool = False

    @property
    def ok(self) -> bool:
        return not self.errors


def _solver_runner(solver: SolverConfig, problem: Problem, config: ExperimentConfig):
    opts = dict(solver.options)
    x1 = _init_vector(config.value("x1"), problem.dim_primal)
    lam1 = _init_vector(config.value("lambda1"), problem.dim_dual)
    if solver.method == "aapda":
        mu_floor = opts.get("mu_floor")
        aapda_opts = AapdaOptions(
            p_schedule=opts["p"],
            gamma_1=opts.get("gamma1", 1.0),
            max_iterations=opts.get("cap", 100),
            stop_theta=opts.get("theta", 1e-6),
            grad_stop_eps=opts.get("grad_eps"),
            mu_floor=None if mu_floor in (None, "off") else mu_floor,
            sub_tol=opts.get("subtol", 1e-10),
            init_x=x1,
            init_lambda=lam1,
        )
        return lambda saddle: run_aapda(problem, aapda_opts, saddle)
    base_opts = BaselineOptions(
        method=solver.method,
        step_size=opts.get("alpha"),
        penalty=opts.get("penalty", 1.0),
        dual_step=opts.get("dual_step"),
        max_iterations=opts.get("cap", 200),
        stop_theta=opts.get("theta", 1e-6),
        init_x=x1,
        init_lambda=lam1,
    )
    if solver.method == "fista":
        return lambda saddle: run_fista(problem, base_opts, saddle)
    return lambda saddle: run_lin_alm(problem, base_opts, saddle)


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[str] = None,
    plot: Optional[bool] = None,
    jobs: int = 1,
) -> ExperimentResult:
    """Run every configured solver (or the ode trajectory) and write artifacts.

    Solver failures are recorded per solver; the bundle is still produced
    for the ones that succeeded.
    """
    target = Path(out_dir if out_dir is not None else config.out_dir)
    target.mkdir(parents=True, exist_ok=True)
    do_plot = config.plot if plot is None else plot
    result = ExperimentResult(out_dir=target)

    problem = build_problem(config)
    saddle = None
    if problem.quadratic_form is not None:
        try:
            saddle = solve_kkt_saddle(problem)
        except (NoSaddlePointError, UnsupportedProblemError):
            saddle = None
    result.saddle_available = saddle is not None

    timings: dict = {}
    if config.tag == "ode":
        v = config.value
        params = OdeParams(
            q=v("q"),
            p=v("p"),
            t0=v("t0", 1.0),
            t_end=v("tend", v("t0", 1.0) + 50.0),
            rtol=v("rtol", 1e-9),
            atol=v("atol", 1e-12),
            max_step=v("max_step", math.inf),
            mu_cap=v("mu_cap", 1e12),
        )
        init = initial_state(
            problem,
            params,
            x0=_init_vector(v("x1"), problem.dim_primal),
            lam0=_init_vector(v("lambda1"), problem.dim_dual),
        )
        started = time.perf_counter()
        try:
            traj = integrate(problem, init, params, saddle)
            result.traces["ode"] = traj
            write_trace_csv(target / "ode.csv", traj, index="t")
        except ClpdError as exc:
            result.errors["ode"] = exc
        timings["ode"] = time.perf_counter() - started
    else:
        def one(solver: SolverConfig):
            runner = _solver_runner(solver, problem, config)
            started = time.perf_counter()
            try:
                trace = runner(saddle)
                return solver.name, trace, None, time.perf_counter() - started
            except ClpdError as exc:
                return solver.name, getattr(exc, "trace", None), exc, time.perf_counter() - started

        if jobs > 1 and len(config.solvers) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(one, config.solvers))
        else:
            outcomes = [one(s) for s in config.solvers]
        for name, trace, exc, elapsed in outcomes:
            timings[name] = elapsed
            if exc is not None:
                result.errors[name] = exc
            if trace is not None:
                result.traces[name] = trace
                write_trace_csv(target / f"{name}.csv", trace, index="k")

    _write_timing(target / "timing.txt", timings)
    _write_summary(target / "summary.txt", config, result, timings)
    if do_plot:
        (target / "convergence.svg").write_text(_plot(config, result))
    return result


def _write_timing(path: Path, timings: dict) -> None:
    lines = [f"{name} {seconds:.6f} s" for name, seconds in timings.items()]
    lines.append(f"total {sum(timings.values()):.6f} s")
    path.write_text("\n".join(lines) + "\n")


def _rate_lines(trace, index_name: str) -> list:
    lines = []
    idx = trace.column("t") if index_name == "t" else None
    for column in ("f_gap", "feas"):
        series = trace.column(column)
        if not np.any(np.isfinite(series)):
            continue
        try:
            rep = fit_rate(series, burn_in=0.3, index=idx, tag=column)
        except InsufficientDataError as exc:
            lines.append(f"    rate[{column}]: unavailable ({exc})")
            continue
        shape = "exponential-like" if rep.exponential_suspected else "power-law"
        lines.append(
            f"    rate[{column}]: slope {rep.slope:+.4f} r2 {rep.r_squared:.6f} "
            f"window [{rep.window[0]:g}, {rep.window[1]:g}] ({shape})"
        )
    return lines


def _write_summary(path: Path, config, result: ExperimentResult, timings: dict) -> None:
    lines = [f"experiment: {config.tag} seed={config.seed}"]
    keys = {k: v for k, v in config.values.items() if k != "tag"}
    lines.append("parameters: " + ", ".join(f"{k}={v}" for k, v in sorted(keys.items())))
    lines.append(f"saddle certificate: {'yes' if result.saddle_available else 'no'}")
    for name, trace in result.traces.items():
        final = trace.final
        lines.append(f"[{name}]")
        if "steps" in final:
            lines.append(
                f"    accepted steps {final['steps']}, stop: {final.get('stop_reason')}"
                f", t_final: {final.get('t_final'):g}"
            )
        elif "stop_reason" in final:
            lines.append(
                f"    iterations {final.get('iterations', 0)}, stop: {final['stop_reason']}"
            )
        for key in ("grad_norm", "f_value", "f_gap", "feas"):
            if key in final:
                lines.append(f"    final {key}: {final[key]:.6e}")
        if "mu_nondecreasing" in final:
            lines.append(
                f"    mu nondecreasing: {final['mu_nondecreasing']}, "
                f"mu<1 iterations: {final['mu_hypothesis_violations']}"
            )
        if name in timings:
            lines.append(f"    wall: {timings[name]:.6f} s")
        lines.extend(_rate_lines(trace, "t" if config.tag == "ode" else "k"))
    for name, exc in result.errors.items():
        lines.append(f"[{name}] ERROR: {type(exc).__name__}: {exc}")
    path.write_text("\n".join(lines) + "\n")


def _plot(config, result: ExperimentResult) -> str:
    curves = []
    index_name = "t" if config.tag == "ode" else "k"
    for name, trace in result.traces.items():
        if index_name == "t":
            xs = trace.column("t")
        else:
            xs = np.array([rec.k for rec in trace.records], dtype=float)
        fg = trace.column("f_gap")
        curves.append((f"{name} |f-f*|", xs, fg))
        feas = trace.column("feas")
        if np.any(feas > 0):
            curves.append((f"{name} ||Ax-b||", xs, feas))
    title = f"{config.tag} seed={config.seed}"
    return semilogy_svg(curves, title, index_name)
