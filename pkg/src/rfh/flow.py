"""Negative gradient flows of the action and their diagnostics.

The truncated flow is an ODE on the E-coordinates.  It is integrated with a
Dormand-Prince 5(4) pair; ``D_s L`` has unit spectral radius so the system is
non-stiff unless ``|lambda|`` times the fiber Hessian becomes large, which the
step-size floor reports as :class:`StiffnessError`.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson, trapezoid

from .functional import FunctionalContext
from .nonlinearity import LinearCombination
from .perturbation import PerturbationMap

log = logging.getLogger(__name__)

# Dormand-Prince 5(4)
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200,
                    187 / 2100, 1 / 40])


class StiffnessError(RuntimeError):
    """Step size fell below the floor; carries the trajectory so far."""

    def __init__(self, message: str, trajectory: "FlowTrajectory"):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 0.05
    first_step: float = 1e-3
    min_step: float = 1e-12
    stationary_tol: float = 1e-9
    stationary_steps: int = 10
    divergence_bound: float = 1e6


@dataclass
class FlowTrajectory:
    """Accepted states of a flow with per-step diagnostics.

    ``power_gk`` is ``||grad^K A||^2`` in the perturbed metric, i.e.
    ``-(d/dt) A`` along an autonomous flow; ``power_e`` the same vector
    measured in the E norm.
    """

    ctx: FunctionalContext
    times: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    grad_norms: np.ndarray
    power_gk: np.ndarray
    power_e: np.ndarray
    step_sizes: list = field(default_factory=list)
    rejections: int = 0
    converged: bool = False
    diverged: bool = False
    reason: str = "horizon"

    def point(self, i: int):
        return self.ctx.point(self.states[i])

    @property
    def final(self):
        return self.point(-1)

    def sup_norms(self) -> dict:
        z = np.linalg.norm(self.states[:, :-1], axis=1)
        return {"sup_z_Es": float(z.max()), "sup_abs_lambda": float(np.abs(self.states[:, -1]).max()),
                "sup_w_E": float(np.linalg.norm(self.states, axis=1).max())}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "action", "grad_norm", "lambda", "z_norm_Es"])
            for t, a, g, x in zip(self.times, self.actions, self.grad_norms, self.states):
                wr.writerow([repr(float(t)), repr(float(a)), repr(float(g)), repr(float(x[-1])),
                             repr(float(np.linalg.norm(x[:-1])))])

    def to_dict(self, states: bool = False) -> dict:
        d = {"num_steps": len(self.times) - 1, "t_final": float(self.times[-1]),
             "action_start": float(self.actions[0]), "action_end": float(self.actions[-1]),
             "grad_norm_end": float(self.grad_norms[-1]), "converged": self.converged,
             "diverged": self.diverged, "reason": self.reason, "rejections": self.rejections,
             "lambda_end": float(self.states[-1, -1]), **self.sup_norms()}
        if states:
            d["states"] = self.states.tolist()
            d["times"] = self.times.tolist()
        return d

    def dump_sidecar(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(states=True), fh, sort_keys=True)


def _dp_integrate(rhs: Callable, observe: Callable, x0: np.ndarray, t0: float, t1: float,
                  tol: Tolerances, ctx: FunctionalContext) -> FlowTrajectory:
    """Adaptive DP5(4) loop; ``observe(t, x)`` returns (action, |g|, power_gk, power_e)."""
    t, x = t0, np.array(x0, float)
    h = min(tol.first_step, tol.max_step, t1 - t0) if t1 > t0 else 0.0
    times, states, obs = [t], [x.copy()], [observe(t, x)]
    steps, rejections, quiet = [], 0, 0
    reason, converged, diverged = "horizon", False, False
    k1 = rhs(t, x)
    while t < t1 - 1e-15 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        ks = [k1]
        for i in range(1, 7):
            xi = x + h * sum(a * k for a, k in zip(_A[i], ks))
            ks.append(rhs(t + _C[i] * h, xi))
        xnew = xi  # FSAL: the 7th stage is evaluated at the 5th-order solution
        err_vec = h * sum(e * k for e, k in zip(_E, ks))
        scale = tol.atol + tol.rtol * np.maximum(np.abs(x), np.abs(xnew))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t += h
            x = xnew
            k1 = ks[-1]
            times.append(t)
            states.append(x.copy())
            o = observe(t, x)
            obs.append(o)
            steps.append(h)
            if o[1] < tol.stationary_tol:
                quiet += 1
                if quiet >= tol.stationary_steps:
                    reason, converged = "stationary", True
                    break
            else:
                quiet = 0
            if np.linalg.norm(x) > tol.divergence_bound:
                reason, diverged = "diverged", True
                break
            fac = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
            h = min(h * fac, tol.max_step)
        else:
            rejections += 1
            h *= max(0.1, 0.9 * err ** -0.2)
        if h < tol.min_step:
            traj = _build(ctx, times, states, obs, steps, rejections, False, False, "stiff")
            raise StiffnessError(f"step size underflow at t={t:.6g}", traj)
    if not converged and obs[-1][1] < tol.stationary_tol:
        converged = True
    return _build(ctx, times, states, obs, steps, rejections, converged, diverged, reason)


def _build(ctx, times, states, obs, steps, rejections, converged, diverged, reason):
    obs = np.array(obs)
    return FlowTrajectory(ctx, np.array(times), np.array(states), obs[:, 0], obs[:, 1],
                          obs[:, 2], obs[:, 3], steps, rejections, converged, diverged, reason)


def _observer(ctx: FunctionalContext, pert: PerturbationMap | None):
    def observe(t, x):
        g = ctx.grad_vec(x)
        if pert is not None and pert.terms:
            gk = g + pert.operator(x) @ g
        else:
            gk = g
        return ctx.action_vec(x), float(np.linalg.norm(gk)), float(gk @ g), float(gk @ gk)
    return observe


def integrate_flow(ctx: FunctionalContext, pert: PerturbationMap | None, w_start,
                   horizon: float, tol: Tolerances | None = None) -> FlowTrajectory:
    """Integrate ``dw/dt = -(I + K(w)) grad A(w)`` from ``w_start`` up to ``horizon``.

    Stops early once ``||grad^K A|| < stationary_tol`` for ``stationary_steps``
    consecutive accepted steps, or when ``||w|| > divergence_bound``.
    """
    tol = tol or Tolerances()
    if pert is not None:
        pert.check_gate()
    x0 = ctx.coords(w_start)

    def rhs(t, x):
        g = ctx.grad_vec(x)
        if pert is not None and pert.terms:
            g = g + pert.operator(x) @ g
        return -g

    return _dp_integrate(rhs, _observer(ctx, pert), x0, 0.0, float(horizon), tol, ctx)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class EnergyReport:
    action_drop: float
    dissipation_gk: float
    dissipation_e: float
    defect_gk: float
    defect_e: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.defect_gk < self.tolerance

    def to_dict(self) -> dict:
        return {"action_drop": self.action_drop, "dissipation_gK": self.dissipation_gk,
                "dissipation_E": self.dissipation_e, "relative_defect_gK": self.defect_gk,
                "relative_defect_E": self.defect_e, "passed": self.passed}


def energy_identity_check(traj: FlowTrajectory, tolerance: float = 1e-6) -> EnergyReport:
    """Compare ``A(w(t0)) - A(w(tN))`` with ``int ||grad^K A||^2_{g^K} dt``.

    Defects are relative to the spread of the action along the trajectory
    (or 1 if the action is constant).
    """
    drop = float(traj.actions[0] - traj.actions[-1])
    if len(traj.times) < 3:
        diss_gk = diss_e = 0.0
    else:
        diss_gk = float(simpson(traj.power_gk, x=traj.times))
        diss_e = float(simpson(traj.power_e, x=traj.times))
    spread = float(np.ptp(traj.actions)) or 1.0
    return EnergyReport(drop, diss_gk, diss_e, abs(drop - diss_gk) / spread,
                        abs(drop - diss_e) / spread, tolerance)


def monotonicity_violation(traj: FlowTrajectory) -> float:
    """Largest increase of the action between consecutive accepted states."""
    if len(traj.actions) < 2:
        return 0.0
    return float(max(0.0, np.max(np.diff(traj.actions))))


# ---------------------------------------------------------------------------
# nonautonomous continuation flow


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, maximal slope 2 at t = 1/2."""
    t = np.asarray(t, float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def smooth_step_derivative(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    ti = t[inside]
    a, b = np.exp(-1 / ti), np.exp(-1 / (1 - ti))
    da, db = a / ti ** 2, -b / (1 - ti) ** 2
    out[inside] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


@dataclass(frozen=True)
class HomotopySchedule:
    """Path ``H_t = (1 - beta(t)) H0 + beta(t) H1`` (and likewise for K).

    ``budget`` is the declared bound A on ``int int |dH/dt| dx dt``.
    """

    h0: object
    h1: object
    k0: PerturbationMap | None = None
    k1: PerturbationMap | None = None
    budget: float = np.inf
    beta: Callable = smooth_step
    beta_prime: Callable = smooth_step_derivative

    def validate(self, samples: int = 2001):
        t = np.linspace(-0.5, 1.5, samples)
        d = self.beta_prime(t)
        if np.any(d < -1e-12) or np.any(d > 2 + 1e-9):
            raise ValueError("beta' must lie in [0, 2]")
        for k in (self.k0, self.k1):
            if k is not None:
                k.check_gate()

    def hamiltonian(self, t: float) -> LinearCombination:
        b = float(self.beta(t))
        return LinearCombination(((1 - b, self.h0), (b, self.h1)))

    def perturbation(self, t: float, x: np.ndarray) -> np.ndarray | None:
        b = float(self.beta(t))
        parts = []
        if self.k0 is not None:
            parts.append((1 - b) * self.k0.operator(x))
        if self.k1 is not None:
            parts.append(b * self.k1.operator(x))
        return sum(parts) if parts else None


@dataclass
class HomotopyReport:
    trajectory: FlowTrajectory
    measured_budget: float
    declared_budget: float
    gradient_floor: float
    epsilon: float | None

    @property
    def budget_flagged(self) -> bool:
        return self.measured_budget > self.declared_budget

    @property
    def budget_ok(self) -> bool | None:
        if self.epsilon is None:
            return None
        return self.declared_budget < self.epsilon / 5

    @property
    def boundedness_asserted(self) -> bool:
        return not self.budget_flagged and not self.trajectory.diverged

    def to_dict(self) -> dict:
        return {**self.trajectory.to_dict(), "measured_budget": self.measured_budget,
                "declared_budget": None if np.isinf(self.declared_budget) else self.declared_budget,
                "budget_flagged": self.budget_flagged, "budget_ok": self.budget_ok,
                "gradient_floor": self.gradient_floor,
                "boundedness_asserted": self.boundedness_asserted}


def integrate_homotopy(ctx: FunctionalContext, schedule: HomotopySchedule, w_start,
                       horizon: float, tol: Tolerances | None = None,
                       epsilon: float | None = None) -> HomotopyReport:
    """Integrate ``dw/dt + (I + K(t, w)) grad A_{H_t}(w) = 0`` on ``[0, horizon]``."""
    tol = tol or Tolerances()
    schedule.validate()
    ctx_at = lambda t: ctx.with_nonlinearity(schedule.hamiltonian(t))  # noqa: E731

    def grad_k(t, x):
        c = ctx_at(t)
        g = c.grad_vec(x)
        k = schedule.perturbation(t, x)
        return c, g, (g if k is None else g + k @ g)

    def rhs(t, x):
        return -grad_k(t, x)[2]

    def observe(t, x):
        c, g, gk = grad_k(t, x)
        return c.action_vec(x), float(np.linalg.norm(gk)), float(gk @ g), float(gk @ gk)

    traj = _dp_integrate(rhs, observe, ctx.coords(w_start), 0.0, float(horizon), tol, ctx)
    # along-trajectory budget: int beta'(t) int |H1 - H0|(z(t)) dx dt
    dens = []
    c0 = ctx.with_nonlinearity(LinearCombination(((1.0, schedule.h1), (-1.0, schedule.h0))))
    for t, x in zip(traj.times, traj.states):
        u, v = c0.fields(x)
        diff = np.mean(np.abs(c0.nonlinearity.evaluate(c0.points, u, v)))
        dens.append(float(schedule.beta_prime(np.array([t]))[0]) * diff)
    measured = float(trapezoid(dens, traj.times)) if len(dens) > 1 else 0.0
    floor = float(traj.grad_norms.min())
    return HomotopyReport(traj, measured, schedule.budget, floor, epsilon)


# ---------------------------------------------------------------------------
# Palais-Smale style diagnostics


@dataclass
class PSRecord:
    action: float
    grad_norm: float
    z_norm: float
    abs_lambda: float
    bound_ratio: float
    flagged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ps_records(actions, grad_norms, z_norms, lambdas, integral_defects=None,
               grad_tol: float = 1e-3, bound: float = 1e3) -> list[PSRecord]:
    """Evaluate the bound pattern ``|lam| + ||z|| <= C (1 + |eps||lam| + eta (||z|| + |lam|))``.

    ``bound_ratio`` is the left side over the bracket; a point is flagged
    (PS-suspect) when its gradient is below ``grad_tol`` but the ratio
    exceeds ``bound``.
    """
    out = []
    eps = np.zeros(len(actions)) if integral_defects is None else integral_defects
    for a, g, zn, lam, e in zip(actions, grad_norms, z_norms, lambdas, eps):
        lam = abs(lam)
        ratio = (lam + zn) / (1 + abs(e) * lam + g * (zn + lam))
        out.append(PSRecord(float(a), float(g), float(zn), float(lam), float(ratio),
                            bool(g < grad_tol and ratio > bound)))
    return out


def ps_diagnostics(ctx: FunctionalContext, points, grad_tol: float = 1e-3,
                   bound: float = 1e3) -> list[PSRecord]:
    xs = [ctx.coords(w) for w in points]
    acts = [ctx.action_vec(x) for x in xs]
    grads = [ctx.grad_vec(x) for x in xs]
    return ps_records(acts, [np.linalg.norm(g) for g in grads],
                      [np.linalg.norm(x[:-1]) for x in xs], [x[-1] for x in xs],
                      [-g[-1] for g in grads], grad_tol, bound)
