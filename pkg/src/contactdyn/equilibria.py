"""Equilibria of contact vector fields: location, linear data, classification.

A point ``x0`` is an equilibrium of ``X_H`` iff ``H(x0) = 0`` and
``dH(x0) = -tau * eta(x0)``; ``tau = -H_z(x0)`` is the principal
coefficient.

Linear data are expressed in the Darboux frame centred at the equilibrium,
``x = x0 + M y`` with ``M`` the identity except ``M[z, q_j] = p0_j``.  That
affine map preserves ``eta`` exactly, so the centred frame is again a
Darboux chart with the equilibrium at its origin and the closed-form
origin formulas apply verbatim.  When ``p0 = 0`` the frame is the original
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import expr as ex
from .errors import NoConvergenceError, SingularJacobianError
from .geometry import jacobian_from_jet, symplectic_matrix
from .hamiltonian import HamiltonianSystem, Jet3, ParamValues, jet3

DEFAULT_TOL = 1e-11
MAX_HALVINGS = 40
COND_LIMIT = 1e13


class Kind(str, Enum):
    NONDEGENERATE_STABLE = "NondegenerateStable"
    NONDEGENERATE_UNSTABLE = "NondegenerateUnstable"
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    HIGHER_DEGENERATE = "HigherDegenerate"

    @property
    def degenerate(self) -> bool:
        return self in (Kind.TYPE_I, Kind.TYPE_II, Kind.HIGHER_DEGENERATE)


@dataclass(frozen=True)
class Margins:
    """Relative degeneracy thresholds.

    With ``scale = ||Hess'||_F + |tau|`` the absolute thresholds are
    ``tau * scale`` for the principal coefficient and eigenvalue real parts,
    and ``det * scale**(2n)`` for the amended Hessian determinant.
    """

    tau: float = 1e-8
    det: float = 1e-8


@dataclass(frozen=True)
class ClassificationTag:
    kind: Kind
    min_abs_eigenvalue: float
    abs_tau: float
    abs_det: float
    max_real_part: float
    # tau < 0 and sym(Hess') definite: sufficient for asymptotic stability
    sufficient_stable: bool
    # n = 1 only: tau < 0 and B^2 - B tau - 4AC < 0
    planar_stable: bool | None = None

    @property
    def stable(self) -> bool:
        return self.kind is Kind.NONDEGENERATE_STABLE


@dataclass(frozen=True)
class EquilibriumRecord:
    n: int
    point: np.ndarray
    params: tuple[float, ...]
    tau: float
    L: np.ndarray  # linearization in the centred Darboux frame
    L_xi: np.ndarray
    rho: np.ndarray
    amended_hessian: np.ndarray
    eigenvalues: np.ndarray
    residual: float
    jacobian: np.ndarray  # D(X_H) in the original coordinates
    frame: np.ndarray
    jet: Jet3  # 3-jet of H in the centred frame
    tag: ClassificationTag
    iterations: int = 0

    @property
    def q(self):
        return self.point[: self.n]

    @property
    def p(self):
        return self.point[self.n: 2 * self.n]

    @property
    def z(self) -> float:
        return float(self.point[-1])


def centred_frame(point, n: int) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    M = np.eye(2 * n + 1)
    M[-1, :n] = x[n:2 * n]
    return M


def equilibrium_residual(sys: HamiltonianSystem, point, tau: float, params: ParamValues = None) -> np.ndarray:
    """``(H, H_q - tau p, H_p, H_z + tau)``; zero exactly at equilibria."""
    x = np.asarray(point, dtype=float)
    n = sys.n
    g = sys.gradient(x, params)
    return np.concatenate([[sys.value(x, params)], g[:n] - tau * x[n:2 * n], g[n:2 * n], [g[-1] + tau]])


def equilibrium_jacobian(sys: HamiltonianSystem, point, tau: float, params: ParamValues = None) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    n = sys.n
    d = 2 * n + 1
    g = sys.gradient(x, params)
    h = sys.hessian(x, params)
    J = np.zeros((d + 1, d + 1))
    J[0, :d] = g
    J[1:, :d] = h
    J[1:n + 1, n:2 * n] -= tau * np.eye(n)
    J[1:n + 1, d] = -x[n:2 * n]
    J[d, d] = 1.0
    return J


def linear_data(jet: Jet3) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """``(tau, L, rho, Hess')`` from the centred 3-jet at an equilibrium."""
    n = jet.n
    d = 2 * n + 1
    h = jet.hessian
    tau = -float(jet.gradient[-1])
    L = np.zeros((d, d))
    L[:n, :] = h[n:2 * n, :]
    L[n:2 * n, :] = -h[:n, :]
    L[n:2 * n, n:2 * n] += tau * np.eye(n)
    L[-1, :] = 0.0
    L[-1, -1] = tau
    rho = L[:2 * n, -1].copy()
    hess = h[:2 * n, :2 * n].copy()
    hess[:n, n:2 * n] -= tau * np.eye(n)
    return tau, L, rho, hess


def _sorted_eigs(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return w[np.lexsort((w.imag, w.real))]


def analyze_point(
    sys: HamiltonianSystem,
    point,
    params: ParamValues = None,
    margins: Margins | None = None,
    iterations: int = 0,
) -> EquilibriumRecord:
    """Build the full record at ``point`` (assumed to be an equilibrium)."""
    x = np.asarray(point, dtype=float).copy()
    n = sys.n
    pv = sys.param_vector(params)
    raw = jet3(sys, x, pv)
    M = centred_frame(x, n)
    jet = raw.push(M)
    tau, L, rho, hess = linear_data(jet)
    eigs = _sorted_eigs(np.linalg.eigvals(L))
    resid = float(np.max(np.abs(equilibrium_residual(sys, x, tau, pv))))
    J = jacobian_from_jet(raw.gradient, raw.hessian, x[n:2 * n])
    tag = _classify(n, tau, hess, eigs, margins or Margins())
    return EquilibriumRecord(
        n=n, point=x, params=pv, tau=tau, L=L, L_xi=L[:2 * n, :2 * n].copy(), rho=rho,
        amended_hessian=hess, eigenvalues=eigs, residual=resid, jacobian=J, frame=M,
        jet=jet, tag=tag, iterations=iterations,
    )


def find_equilibrium(
    sys: HamiltonianSystem,
    params: ParamValues,
    guess,
    tau: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 50,
    margins: Margins | None = None,
) -> EquilibriumRecord:
    """Newton's method on the square system in ``(q, p, z, tau)``.

    Plain Newton steps, halved (at most 40 times) while the residual
    grows.  Raises :class:`SingularJacobianError` when the augmented
    Jacobian is numerically singular before convergence, which is what
    happens near degenerate equilibria.
    """
    pv = sys.param_vector(params)
    x = np.asarray(guess, dtype=float).copy()
    if x.shape != (sys.dim,):
        from .errors import DimensionError

        raise DimensionError(f"guess has shape {x.shape}, expected ({sys.dim},)")
    t = -float(sys.gradient(x, pv)[-1]) if tau is None else float(tau)
    u = np.append(x, t)
    d = sys.dim

    def F(u):
        return equilibrium_residual(sys, u[:d], u[d], pv)

    r = F(u)
    rn = np.max(np.abs(r))
    it = 0
    while rn >= tol:
        if it >= max_iter:
            raise NoConvergenceError(f"no convergence after {it} iterations (residual {rn:.3e})", it, rn)
        J = equilibrium_jacobian(sys, u[:d], u[d], pv)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularJacobianError(f"augmented Jacobian singular (cond {cond:.3e}, residual {rn:.3e})", cond)
        step = np.linalg.solve(J, -r)
        alpha = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = u + alpha * step
            rt = F(trial)
            rtn = np.max(np.abs(rt))
            if np.isfinite(rtn) and rtn <= rn:
                break
            alpha *= 0.5
        else:
            raise NoConvergenceError(f"line search failed at iteration {it} (residual {rn:.3e})", it, rn)
        u, r, rn = trial, rt, rtn
        it += 1
    rec = analyze_point(sys, u[:d], pv, margins, iterations=it)
    # tau was an unknown; it must agree with -H_z at the solution
    if abs(rec.tau - u[d]) > max(10 * tol, 1e-9 * max(1.0, abs(rec.tau))):
        raise NoConvergenceError(f"tau mismatch: solved {u[d]!r}, -H_z = {rec.tau!r}", it, rn)
    return rec


def linearization(sys: HamiltonianSystem, record: EquilibriumRecord) -> np.ndarray:
    """Linear part of ``X_H`` in the centred frame.  Bottom row ``(0, ..., 0, tau)``."""
    M = centred_frame(record.point, sys.n)
    jet = jet3(sys, record.point, record.params).push(M)
    return linear_data(jet)[1]


def amended_hessian(sys: HamiltonianSystem, record: EquilibriumRecord) -> np.ndarray:
    """Amended Hessian in the basis ``(d_q + p d_z, d_p)`` of xi.

    Entry ``[r, c]`` is ``D_{e_c}(dH + tau eta)(e_r)``.  At the origin this is
    ``[[H_qq, H_qp - tau I], [H_pq, H_pp]]``.
    """
    M = centred_frame(record.point, sys.n)
    jet = jet3(sys, record.point, record.params).push(M)
    return linear_data(jet)[3]


def amended_hessian_general(
    eta_components: Sequence[ex.Expr],
    sys: HamiltonianSystem,
    point,
    tau: float,
    basis: np.ndarray,
    params: ParamValues = None,
    atol: float = 1e-9,
) -> np.ndarray:
    """Amended Hessian for an arbitrary contact form ``eta = a_i dx^i``.

    Returns ``basis.T @ K @ basis`` with ``K[i, j] = H_ij + tau * da_i/dx_j``,
    the same index convention as :func:`amended_hessian`.
    """
    x = np.asarray(point, dtype=float)
    d = sys.dim
    if len(eta_components) != d:
        raise ValueError(f"need {d} form components, got {len(eta_components)}")
    E = np.asarray(basis, dtype=float)
    a_sys = [HamiltonianSystem(a, sys.n, sys.params) for a in eta_components]
    a0 = np.array([s.value(x, params) for s in a_sys])
    Da = np.array([s.gradient(x, params) for s in a_sys])
    scale = max(1.0, np.linalg.norm(a0))
    if np.max(np.abs(a0 @ E)) > atol * scale * max(1.0, np.linalg.norm(E)):
        raise ValueError("basis vectors are not in the kernel of the form")
    g = sys.gradient(x, params)
    if np.max(np.abs(g + tau * a0)) > 1e-7 * max(1.0, np.linalg.norm(g)):
        raise ValueError("dH(x0) is not -tau times the form: not an equilibrium for this form")
    K = sys.hessian(x, params) + tau * Da
    return E.T @ K @ E


# -- quadruplets -----------------------------------------------------------

@dataclass(frozen=True)
class QuadrupletReport:
    shifted: np.ndarray
    negation_pairs: list[tuple[complex, complex, float]]
    conjugation_pairs: list[tuple[complex, complex, float]]
    max_negation_error: float
    max_conjugation_error: float
    hamiltonian_symmetry_error: float  # ||S - S^T||, S = W^-1 (L_xi - tau/2 I)
    hamiltonian_hessian_error: float  # ||S - sym(Hess')||
    tol: float = 1e-7
    sym_tol: float = 1e-9

    @property
    def ok(self) -> bool:
        return (
            self.max_negation_error < self.tol
            and self.max_conjugation_error < self.tol
            and self.hamiltonian_symmetry_error < self.sym_tol
            and self.hamiltonian_hessian_error < self.sym_tol
        )


def greedy_match(values: np.ndarray, targets: np.ndarray) -> list[tuple[complex, complex, float]]:
    """Pair each value with its nearest unused target.

    Values are visited in ascending imaginary part then real part.  The
    error is relative: ``|v - t| / max(1, |v|)``.
    """
    order = np.lexsort((values.real, values.imag))
    free = list(range(len(targets)))
    pairs = []
    for i in order:
        v = values[i]
        dist = [abs(v - targets[j]) for j in free]
        k = int(np.argmin(dist))
        j = free.pop(k)
        pairs.append((complex(v), complex(targets[j]), dist[k] / max(1.0, abs(v))))
    return pairs


def spectrum_and_quadruplets(record: EquilibriumRecord, tol: float = 1e-7) -> QuadrupletReport:
    n = record.n
    mu = np.linalg.eigvals(record.L_xi)
    shifted = _sorted_eigs(mu - record.tau / 2)
    neg = greedy_match(shifted, -shifted)
    conj = greedy_match(shifted, np.conj(shifted))
    W = symplectic_matrix(n)
    S = np.linalg.solve(W, record.L_xi - 0.5 * record.tau * np.eye(2 * n))
    Hs = 0.5 * (record.amended_hessian + record.amended_hessian.T)
    scale = max(1.0, np.max(np.abs(Hs)))
    return QuadrupletReport(
        shifted=shifted,
        negation_pairs=neg,
        conjugation_pairs=conj,
        max_negation_error=max((e for *_, e in neg), default=0.0),
        max_conjugation_error=max((e for *_, e in conj), default=0.0),
        hamiltonian_symmetry_error=float(np.max(np.abs(S - S.T))) / scale,
        hamiltonian_hessian_error=float(np.max(np.abs(S - Hs))) / scale,
        tol=tol,
    )


# -- classification --------------------------------------------------------

def _classify(n: int, tau: float, hess: np.ndarray, eigs: np.ndarray, margins: Margins) -> ClassificationTag:
    scale = np.linalg.norm(hess) + abs(tau)
    det = float(np.linalg.det(hess))
    tau_margin = margins.tau * scale
    det_margin = margins.det * scale ** (2 * n)
    type_one = abs(tau) < tau_margin or scale == 0.0
    type_two = abs(det) < det_margin or scale == 0.0
    max_re = float(np.max(eigs.real))
    if type_one and type_two:
        kind = Kind.HIGHER_DEGENERATE
    elif type_one:
        kind = Kind.TYPE_I
    elif type_two:
        kind = Kind.TYPE_II
    elif max_re < -tau_margin:
        kind = Kind.NONDEGENERATE_STABLE
    else:
        kind = Kind.NONDEGENERATE_UNSTABLE
    hs = np.linalg.eigvalsh(0.5 * (hess + hess.T))
    definite = bool(np.all(hs > 0) or np.all(hs < 0))
    planar = None
    if n == 1:
        A, B, C = hess[0, 0] / 2, hess[1, 0], hess[1, 1] / 2
        planar = bool(tau < 0 and B * B - B * tau - 4 * A * C < 0)
    return ClassificationTag(
        kind=kind,
        min_abs_eigenvalue=float(np.min(np.abs(eigs))),
        abs_tau=abs(tau),
        abs_det=abs(det),
        max_real_part=max_re,
        sufficient_stable=bool(tau < 0 and definite),
        planar_stable=planar,
    )


def classify(record: EquilibriumRecord, margins: Margins | None = None) -> ClassificationTag:
    return _classify(record.n, record.tau, record.amended_hessian, record.eigenvalues, margins or Margins())


def planar_coefficients(record: EquilibriumRecord) -> dict[str, float]:
    """``A, B, C, tau`` read back from the amended Hessian (n = 1)."""
    h = record.amended_hessian
    return {"A": h[0, 0] / 2, "B": h[1, 0], "C": h[1, 1] / 2, "tau": record.tau}
