"""Day-ahead battery scheduling: problem construction and exact solves.

The optimization minimizes the daily electricity bill

    sum_t p_im[t]*price_import[t] - p_ex[t]*price_export[t]

subject to hourly energy balance, non-negativity of all grid/battery
flows, mode-split (dis)charge power limits, SoC bounds and the SoC
recursion with the battery returned to its initial state at the end of
the day. A continuous ``mode`` variable in [0,1] splits the hourly power
budget between charging and discharging, which suppresses profitable
simultaneous charge/discharge without integer variables.

An optional quadratic term ``quad_reg_eps * ||(p_im,p_ex,p_ch,p_dis)||^2``
makes the solution map single-valued and differentiable; reported costs
always exclude it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .domain import DayInstance, Schedule
from .errors import Infeasible, MaxIterations, ScheduleInfeasible

_FEAS_TOL = 1e-6


@dataclass(frozen=True)
class SolveOptions:
    """Solver knobs; SoC overrides implement the evaluation-time relaxation."""

    soc_min_frac_override: float | None = None
    soc_max_frac_override: float | None = None
    quad_reg_eps: float = 0.0
    tolerance: float = 1e-8
    max_iterations: int = 200

    def __post_init__(self):
        if self.quad_reg_eps < 0:
            raise ValueError("quad_reg_eps must be >= 0")
        if (
            self.soc_min_frac_override is not None
            and self.soc_max_frac_override is not None
            and not self.soc_min_frac_override < self.soc_max_frac_override
        ):
            raise ValueError("SoC overrides must satisfy min < max")

    def soc_bounds_kwh(self, battery) -> tuple[float, float]:
        lo = (
            self.soc_min_frac_override
            if self.soc_min_frac_override is not None
            else battery.soc_min_frac
        )
        hi = (
            self.soc_max_frac_override
            if self.soc_max_frac_override is not None
            else battery.soc_max_frac
        )
        return lo * battery.capacity_kwh, hi * battery.capacity_kwh


#: SoC window used when re-evaluating a frozen schedule against realized PV.
RELAXED_SOC = (0.1, 0.9)


def relaxed_options(options: SolveOptions | None = None) -> SolveOptions:
    """Options with the evaluation-time 10%/90% SoC window applied."""
    base = options or SolveOptions()
    return replace(
        base,
        soc_min_frac_override=RELAXED_SOC[0],
        soc_max_frac_override=RELAXED_SOC[1],
    )


@dataclass(frozen=True)
class StandardFormLP:
    """Dense standard form: min c'x + x'Qx/2 s.t. Ax = b, Gx <= h.

    Kept as an inspectable twin of the structured kernel representation;
    tests pin their equivalence. ``variable_layout`` maps block names to
    (start, stop) column ranges covering every column exactly once.
    """

    cost_vector: np.ndarray
    quad_diag: np.ndarray
    equality_matrix: np.ndarray
    equality_rhs: np.ndarray
    inequality_matrix: np.ndarray
    inequality_rhs: np.ndarray
    variable_count: int
    variable_layout: dict

    def __post_init__(self):
        n = self.variable_count
        if self.cost_vector.shape != (n,) or self.quad_diag.shape != (n,):
            raise ValueError("cost vector dimensions inconsistent with variable_count")
        if self.equality_matrix.shape != (self.equality_rhs.size, n):
            raise ValueError("equality block dimensions inconsistent")
        if self.inequality_matrix.shape != (self.inequality_rhs.size, n):
            raise ValueError("inequality block dimensions inconsistent")
        covered = np.zeros(n, dtype=int)
        for lo, hi in self.variable_layout.values():
            covered[lo:hi] += 1
        if not (covered == 1).all():
            raise ValueError("variable_layout must cover every column exactly once")

    def objective(self, x) -> float:
        x = np.asarray(x, float)
        return float(self.cost_vector @ x + 0.5 * self.quad_diag @ (x * x))


def _dense_ineq(T: int, pmax: float) -> tuple[np.ndarray, np.ndarray]:
    n, _, m_in = _backend.problem_dims(T)
    G = np.zeros((m_in, n))
    im, ex, ch, dis, mo, so = 0, T, 2 * T, 3 * T, 4 * T, 5 * T
    r = np.arange(T)
    G[r, im + r] = -1.0
    G[T + r, ex + r] = -1.0
    G[2 * T + r, ch + r] = -1.0
    G[3 * T + r, dis + r] = -1.0
    G[4 * T + r, ch + r] = 1.0
    G[4 * T + r, mo + r] = -pmax
    G[5 * T + r, dis + r] = 1.0
    G[5 * T + r, mo + r] = pmax
    G[6 * T + r, mo + r] = -1.0
    G[7 * T + r, mo + r] = 1.0
    rs = np.arange(T + 1)
    G[8 * T + rs, so + rs] = -1.0
    G[9 * T + 1 + rs, so + rs] = 1.0
    return G


def build_problem_arrays(
    pv, load, price_import, price_export, battery, options: SolveOptions
) -> StandardFormLP:
    """Standard form for an arbitrary horizon (the test scaffold uses T=4)."""
    pv = np.asarray(pv, float)
    T = pv.size
    lo, hi = options.soc_bounds_kwh(battery)
    pmax = battery.max_power_kwh
    c, qdiag, b, h = _backend.build_vectors(
        np.asarray(price_import, float),
        np.asarray(price_export, float),
        np.asarray(load, float) - pv,
        pmax,
        lo,
        hi,
        battery.soc_init_kwh,
        options.quad_reg_eps,
        T,
    )
    n, _, _ = _backend.problem_dims(T)
    return StandardFormLP(
        cost_vector=c,
        quad_diag=qdiag,
        equality_matrix=_backend.build_dense_eq(T),
        equality_rhs=b,
        inequality_matrix=_dense_ineq(T, pmax),
        inequality_rhs=h,
        variable_count=n,
        variable_layout=_backend.layout(T),
    )


def build_problem(instance: DayInstance, options: SolveOptions) -> StandardFormLP:
    return build_problem_arrays(
        instance.pv,
        instance.load,
        instance.price_import,
        instance.price_export,
        instance.battery,
        options,
    )


def dump_standard_form(lp: StandardFormLP, path) -> None:
    """Plain-text dump (row-major) for cross-checking with external solvers."""
    with open(path, "w") as fh:
        fh.write(
            f"lp-dump 1 vars={lp.variable_count} "
            f"eq={lp.equality_rhs.size} ineq={lp.inequality_rhs.size}\n"
        )
        fh.write("layout " + " ".join(
            f"{name}:{lo}:{hi}" for name, (lo, hi) in lp.variable_layout.items()
        ) + "\n")

        def block(tag, arr):
            fh.write(tag + "\n")
            for row in np.atleast_2d(arr):
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")

        block("c", lp.cost_vector)
        block("qdiag", lp.quad_diag)
        block("A", lp.equality_matrix)
        block("b", lp.equality_rhs)
        block("G", lp.inequality_matrix)
        block("h", lp.inequality_rhs)


def _polish_lp_solution(x: np.ndarray, T: int, pmax: float) -> np.ndarray:
    """Canonicalize a pure-LP optimum without changing its cost.

    The bilinear objective is flat along two directions: adding the same
    amount to charge and discharge, and to import and export when the
    hourly prices tie. Interior-point converges to the centre of such
    optimal faces; this maps the point to the extreme with no
    simultaneous flows, and re-derives a consistent mode split.
    """
    x = x.copy()
    p_im, p_ex = x[0:T], x[T : 2 * T]
    p_ch, p_dis = x[2 * T : 3 * T], x[3 * T : 4 * T]
    a = p_ch - p_dis
    x[2 * T : 3 * T] = np.maximum(a, 0.0)
    x[3 * T : 4 * T] = np.maximum(-a, 0.0)
    e = np.minimum(p_im, p_ex)
    x[0:T] = p_im - e
    x[T : 2 * T] = p_ex - e
    if pmax > 0:
        x[4 * T : 5 * T] = np.clip(x[2 * T : 3 * T] / pmax, 0.0, 1.0)
    return x


def _bilinear_cost(p_im, p_ex, price_import, price_export) -> float:
    return float(p_im @ price_import - p_ex @ price_export)


def _solve_arrays(pv, load, price_import, price_export, battery, options, polish):
    pv = np.asarray(pv, float)
    load = np.asarray(load, float)
    price_import = np.asarray(price_import, float)
    price_export = np.asarray(price_export, float)
    T = pv.size
    lo, hi = options.soc_bounds_kwh(battery)
    pmax = battery.max_power_kwh
    x, y, z, s, iters, status = _backend.solve(
        price_import,
        price_export,
        load - pv,
        pmax,
        lo,
        hi,
        battery.soc_init_kwh,
        options.quad_reg_eps,
        options.tolerance,
        options.max_iterations,
    )
    if status == _backend.MAX_ITER:
        raise MaxIterations(
            f"no convergence within {options.max_iterations} iterations"
        )
    if status != _backend.CONVERGED:
        raise Infeasible("interior-point solver broke down")
    if polish and options.quad_reg_eps == 0.0:
        x = _polish_lp_solution(x, T, pmax)
    schedule = Schedule(
        p_ch=np.maximum(x[2 * T : 3 * T], 0.0),
        p_dis=np.maximum(x[3 * T : 4 * T], 0.0),
        p_im=np.maximum(x[0:T], 0.0),
        p_ex=np.maximum(x[T : 2 * T], 0.0),
        mode=np.clip(x[4 * T : 5 * T], 0.0, 1.0),
        soc=x[5 * T :],
        cost=_bilinear_cost(x[0:T], x[T : 2 * T], price_import, price_export),
    )
    return schedule, (x, y, z, s, iters)


def solve_horizon(
    pv, load, price_import, price_export, battery, options: SolveOptions | None = None
) -> Schedule:
    """Solve the scheduling problem for an arbitrary horizon length."""
    return _solve_arrays(
        pv, load, price_import, price_export, battery,
        options or SolveOptions(), polish=True,
    )[0]


def solve_day(instance: DayInstance, options: SolveOptions | None = None) -> Schedule:
    """Optimal 24-hour schedule; cost excludes any quadratic regularizer."""
    options = options or SolveOptions()
    schedule = solve_horizon(
        instance.pv,
        instance.load,
        instance.price_import,
        instance.price_export,
        instance.battery,
        options,
    )
    schedule.validate_against(instance, tol=_FEAS_TOL)
    return schedule


def evaluate_fixed_schedule(
    instance_actual: DayInstance,
    p_ch,
    p_dis,
    options: SolveOptions | None = None,
) -> tuple[float, Schedule]:
    """Cost of a frozen charge/discharge plan under realized conditions.

    Import and export are re-chosen optimally hour by hour; because
    price_import >= price_export this reduces to covering the net demand
    ``load + p_ch - pv - p_dis`` from the grid. The frozen plan must
    respect the power limits and keep the SoC trajectory inside the
    (possibly relaxed) bounds, otherwise ScheduleInfeasible is raised.
    """
    options = options or relaxed_options()
    p_ch = np.asarray(p_ch, float)
    p_dis = np.asarray(p_dis, float)
    bat = instance_actual.battery
    pmax = bat.max_power_kwh
    if p_ch.min() < -_FEAS_TOL or p_dis.min() < -_FEAS_TOL:
        raise ScheduleInfeasible("negative charge or discharge in frozen schedule")
    if (p_ch + p_dis).max() > pmax + _FEAS_TOL:
        raise ScheduleInfeasible("frozen schedule exceeds the hourly power limit")
    p_ch = np.clip(p_ch, 0.0, None)
    p_dis = np.clip(p_dis, 0.0, None)
    soc = bat.soc_init_kwh + np.concatenate(([0.0], np.cumsum(p_ch - p_dis)))
    lo, hi = options.soc_bounds_kwh(bat)
    if soc.min() < lo - _FEAS_TOL or soc.max() > hi + _FEAS_TOL:
        raise ScheduleInfeasible("frozen schedule leaves the relaxed SoC window")
    if abs(soc[-1] - bat.soc_init_kwh) > _FEAS_TOL:
        raise ScheduleInfeasible("frozen schedule does not return the battery to its initial state")
    net = instance_actual.load + p_ch - instance_actual.pv - p_dis
    p_im = np.maximum(net, 0.0)
    p_ex = np.maximum(-net, 0.0)
    cost = _bilinear_cost(p_im, p_ex, instance_actual.price_import, instance_actual.price_export)
    mode = np.clip(p_ch / pmax, 0.0, 1.0) if pmax > 0 else np.zeros_like(p_ch)
    schedule = Schedule(
        p_ch=p_ch, p_dis=p_dis, p_im=p_im, p_ex=p_ex,
        mode=mode, soc=soc, cost=cost,
    )
    return cost, schedule


def no_opt_cost(instance: DayInstance) -> float:
    """Grid-only cost with no battery: buy the shortfall, sell the surplus."""
    net = instance.load - instance.pv
    return _bilinear_cost(
        np.maximum(net, 0.0),
        np.maximum(-net, 0.0),
        instance.price_import,
        instance.price_export,
    )
