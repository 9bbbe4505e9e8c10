"""Trajectories of contact vector fields with invariant-law monitors.

Integration uses an explicit adaptive Runge-Kutta method (scipy's DOP853,
order 8 with embedded error estimation).  The state is augmented by
``w' = H_z`` so that the integrated level law ``H(t) = H(0) exp(-w(t))``
can be checked along the numerical solution; the drift and divergence
identities are checked pointwise from the symbolic right-hand side.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .equilibria import EquilibriumRecord
from .geometry import DarbouxForm, field_from_jet, jacobian_from_jet
from .hamiltonian import HamiltonianSystem, ParamValues

BLOWUP = 1e8


@dataclass(frozen=True)
class Trajectory:
    n: int
    t: np.ndarray
    states: np.ndarray  # (steps, 2n+1)
    H: np.ndarray
    drift_residual: np.ndarray  # dH(X_H) + H_z H, pointwise
    divergence_residual: np.ndarray  # div X_H + (n+1) H_z, pointwise
    level_residual: np.ndarray  # H - H(0) exp(-int H_z dt)
    rtol: float
    atol: float
    status: str  # "ok" or a diagnostic for a truncated run
    truncated: bool

    @property
    def scale(self) -> float:
        return 1.0 + float(np.max(np.abs(self.H)))

    @property
    def flagged(self) -> bool:
        lim = 10 * self.rtol * self.scale
        return self.truncated or monitor_drift(self) > lim or float(np.max(np.abs(self.level_residual))) > lim


def integrate(
    sys: HamiltonianSystem,
    params: ParamValues,
    x0,
    t_span: tuple[float, float],
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_step: float = np.inf,
) -> Trajectory:
    """Integrate ``X_H`` from ``x0``; monitors are recorded at every accepted step."""
    n = sys.n
    d = sys.dim
    pv = sys.param_vector(params)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (d,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"initial state must be {d} finite numbers")

    def rhs(_t, y):
        x = y[:d]
        g = sys.gradient(x, pv)
        return np.append(field_from_jet(g, sys.value(x, pv), x[n:2 * n]), g[-1])

    def blowup(_t, y):
        return BLOWUP - np.max(np.abs(y[:d]))

    blowup.terminal = True
    sol = solve_ivp(rhs, t_span, np.append(x0, 0.0), method="DOP853", rtol=rtol, atol=atol,
                    max_step=max_step, events=blowup)
    t = sol.t
    Y = sol.y.T
    X = Y[:, :d]
    H = np.empty(len(t))
    drift = np.empty(len(t))
    div = np.empty(len(t))
    for k, x in enumerate(X):
        g = sys.gradient(x, pv)
        h = sys.value(x, pv)
        H[k] = h
        drift[k] = g @ field_from_jet(g, h, x[n:2 * n]) + g[-1] * h
        J = jacobian_from_jet(g, sys.hessian(x, pv), x[n:2 * n])
        div[k] = np.trace(J) + (n + 1) * g[-1]
    level = H - H[0] * np.exp(-Y[:, -1])
    if sol.status == 1:
        status, truncated = "state exceeded blow-up bound", True
    elif sol.status < 0:
        status, truncated = f"integration failed: {sol.message}", True
    else:
        status, truncated = "ok", False
    return Trajectory(n, t, X, H, drift, div, level, rtol, atol, status, truncated)


def monitor_drift(traj: Trajectory) -> float:
    """Largest pointwise drift-law residual ``|dH(X_H) + H_z H|`` along the trajectory."""
    return float(np.max(np.abs(traj.drift_residual)))


def monitor_level(traj: Trajectory) -> float:
    """Largest deviation of ``H`` from the integrated law ``H(0) exp(-int H_z)``."""
    return float(np.max(np.abs(traj.level_residual)))


def equilibrium_flow_factor(sys: HamiltonianSystem, record: EquilibriumRecord, t: float) -> tuple[float, float]:
    """Factor by which the linearized flow scales ``eta`` at the equilibrium.

    ``eta(x0) . exp(t J) = f eta(x0)`` where ``J`` is the Jacobian in the
    original coordinates; returns ``(f, exp(tau t))``.  The component of
    ``eta exp(tJ)`` orthogonal to ``eta`` is not assumed to vanish; ``f``
    is its projection.
    """
    eta = DarbouxForm(record.n).covector(record.point)
    row = eta @ expm(t * record.jacobian)
    return float(row @ eta / (eta @ eta)), float(np.exp(record.tau * t))


def trajectory_csv(traj: Trajectory, coords) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *coords, "H", "drift_residual", "divergence_residual", "level_residual"])
    for k in range(len(traj.t)):
        w.writerow([repr(float(traj.t[k])), *(repr(float(v)) for v in traj.states[k]), repr(float(traj.H[k])),
                    repr(float(traj.drift_residual[k])), repr(float(traj.divergence_residual[k])),
                    repr(float(traj.level_residual[k]))])
    return buf.getvalue()
