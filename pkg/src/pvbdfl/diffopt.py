"""Differentiating the scheduling cost through the solver's KKT system.

With a strictly convex regularizer the optimal charge/discharge plan is a
differentiable function of the PV input almost everywhere; its Jacobian
is obtained by implicit differentiation of the stationarity and
complementarity conditions at the solution, reusing the same linear
system the interior-point method factorizes. The downstream regret
gradient then follows by the chain rule through the closed-form
fixed-schedule cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .domain import HOURS_PER_DAY, BatterySpec, DayInstance, Schedule
from .errors import SingularKkt
from .sched_opt import SolveOptions, _solve_arrays, evaluate_fixed_schedule, relaxed_options

_DAMPING_RETRY = 1e-8


@dataclass(frozen=True)
class KktFactorization:
    """Solution-point KKT data, reusable for many sensitivity right-hand sides."""

    solution: Schedule
    dual_eq: np.ndarray
    dual_ineq: np.ndarray
    active_set: np.ndarray
    factorized_system: object
    horizon: int
    stationarity_residual: float
    max_comp_slack: float

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the KKT system for stacked [dx; dy] right-hand sides."""
        return _backend.kkt_solve(self.factorized_system, rhs)

    def jacobian_charge_wrt_pv(self) -> tuple[np.ndarray, np.ndarray]:
        """(d p_ch / d pv, d p_dis / d pv), both (T, T)."""
        T = self.horizon
        n, m_eq, _ = _backend.problem_dims(T)
        rhs = np.zeros((n + m_eq, T))
        # pv enters the balance right-hand side as load - pv
        rhs[n + np.arange(T), np.arange(T)] = -1.0
        sol = self.solve(rhs)
        if not np.isfinite(sol).all():
            raise SingularKkt("sensitivity solve produced non-finite values")
        return sol[2 * T : 3 * T, :], sol[3 * T : 4 * T, :]

    def gradient_wrt_pv(self, weights_x: np.ndarray) -> np.ndarray:
        """Adjoint product: d(weights_x . x*) / d pv in one backsolve."""
        T = self.horizon
        n, m_eq, _ = _backend.problem_dims(T)
        rhs = np.zeros(n + m_eq)
        rhs[:n] = weights_x
        sol = self.solve(rhs)
        if not np.isfinite(sol).all():
            raise SingularKkt("adjoint solve produced non-finite values")
        return -sol[n : n + T]


def _factor_solution(T, pmax, eps, s, z):
    handle = _backend.kkt_factor(T, pmax, eps, s, z, 0.0)
    probe = _backend.kkt_solve(handle, np.ones(_backend.problem_dims(T)[0] + 2 * T + 2))
    if np.isfinite(probe).all():
        return handle
    handle = _backend.kkt_factor(T, pmax, eps, s, z, _DAMPING_RETRY)
    probe = _backend.kkt_solve(handle, np.ones(_backend.problem_dims(T)[0] + 2 * T + 2))
    if np.isfinite(probe).all():
        return handle
    raise SingularKkt("KKT system singular even after diagonal damping")


def solve_with_sensitivities(
    instance: DayInstance, quad_reg_eps: float, options: SolveOptions | None = None
) -> tuple[Schedule, KktFactorization]:
    """Solve the regularized problem and factorize its KKT system.

    Requires quad_reg_eps > 0: the pure LP has set-valued solutions and
    no useful derivative, so differentiation is only offered for the
    strictly convex surrogate.
    """
    if not quad_reg_eps > 0:
        raise ValueError("quad_reg_eps must be > 0 for a differentiable solution map")
    base = options or SolveOptions()
    if base.quad_reg_eps != quad_reg_eps:
        from dataclasses import replace

        base = replace(base, quad_reg_eps=quad_reg_eps)
    schedule, (x, y, z, s, _iters) = _solve_arrays(
        instance.pv,
        instance.load,
        instance.price_import,
        instance.price_export,
        instance.battery,
        base,
        polish=False,
    )
    T = instance.pv.size
    pmax = instance.battery.max_power_kwh
    handle = _factor_solution(T, pmax, quad_reg_eps, s, z)
    lo, hi = base.soc_bounds_kwh(instance.battery)
    c, qdiag, _, _ = _backend.build_vectors(
        instance.price_import,
        instance.price_export,
        instance.load - instance.pv,
        pmax,
        lo,
        hi,
        instance.battery.soc_init_kwh,
        quad_reg_eps,
        T,
    )
    from ._ipm_py import _mul_AT, _mul_GT

    stat = qdiag * x + c + _mul_AT(y, T) + _mul_GT(z, T, pmax)
    fact = KktFactorization(
        solution=schedule,
        dual_eq=y,
        dual_ineq=z,
        active_set=z > s,
        factorized_system=handle,
        horizon=T,
        stationarity_residual=float(np.abs(stat).max()),
        max_comp_slack=float((z * s).max()),
    )
    return schedule, fact


def fixed_cost_weights(net, price_import, price_export) -> np.ndarray:
    """d(realized cost)/d(net demand), hour-wise; zero exactly at net == 0."""
    return np.where(net > 0, price_import, np.where(net < 0, price_export, 0.0))


def regret_and_gradient(
    pv_forecast,
    pv_actual,
    load_forecast,
    price_import,
    price_export,
    battery: BatterySpec,
    quad_reg_eps: float,
    perfect_cost: float | None = None,
) -> tuple[float, np.ndarray]:
    """Downstream regret of a PV forecast and its gradient w.r.t. the forecast.

    The forecast drives a regularized solve whose frozen charge/discharge
    plan is re-costed against the actual PV (with the relaxed SoC window);
    the perfect-information cost is subtracted. Both cost terms are the
    plain bilinear bill. The perfect solve does not depend on the
    forecast, so its cached value may be passed in to skip one LP.
    """
    pv_forecast = np.asarray(pv_forecast, float)
    pv_actual = np.asarray(pv_actual, float)
    load_forecast = np.asarray(load_forecast, float)
    price_import = np.asarray(price_import, float)
    price_export = np.asarray(price_export, float)

    forecast_instance = DayInstance(
        pv=np.maximum(pv_forecast, 0.0),
        load=load_forecast,
        price_import=price_import,
        price_export=price_export,
        battery=battery,
    )
    _, fact = solve_with_sensitivities(forecast_instance, quad_reg_eps)
    p_ch = np.maximum(fact.solution.p_ch, 0.0)
    p_dis = np.maximum(fact.solution.p_dis, 0.0)

    actual_instance = DayInstance(
        pv=pv_actual,
        load=load_forecast,
        price_import=price_import,
        price_export=price_export,
        battery=battery,
    )
    cost_fixed, _ = evaluate_fixed_schedule(
        actual_instance, p_ch, p_dis, relaxed_options()
    )

    if perfect_cost is None:
        perfect_cost = perfect_information_cost(
            pv_actual, load_forecast, price_import, price_export, battery
        )
    regret = cost_fixed - perfect_cost

    net = load_forecast + p_ch - pv_actual - p_dis
    w_net = fixed_cost_weights(net, price_import, price_export)
    T = pv_forecast.size
    n, _, _ = _backend.problem_dims(T)
    weights_x = np.zeros(n)
    weights_x[2 * T : 3 * T] = w_net
    weights_x[3 * T : 4 * T] = -w_net
    grad = fact.gradient_wrt_pv(weights_x)
    return float(regret), grad


def perfect_information_cost(
    pv_actual, load, price_import, price_export, battery: BatterySpec
) -> float:
    """Pure-LP optimal cost with the PV known exactly (no regularizer)."""
    instance = DayInstance(
        pv=np.asarray(pv_actual, float),
        load=np.asarray(load, float),
        price_import=np.asarray(price_import, float),
        price_export=np.asarray(price_export, float),
        battery=battery,
    )
    from .sched_opt import solve_day

    return solve_day(instance, SolveOptions()).cost
