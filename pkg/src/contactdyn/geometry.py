"""Darboux contact structure on R^{2n+1} and contact Hamiltonian vector fields.

With ``eta = dz - p_i dq_i`` the field generated by ``H`` is::

    qdot_j = H_{p_j}
    pdot_j = -H_{q_j} - p_j H_z
    zdot   = p_j H_{p_j} - H

The contact volume ``eta ^ (d eta)^n`` has constant density in these
coordinates, so its Lie derivative along ``X_H`` is the coordinate
divergence of ``X_H`` times the volume; see ``docs/volume_lemma.md``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .hamiltonian import HamiltonianSystem, ParamValues


@dataclass(frozen=True)
class DarbouxForm:
    n: int

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    def covector(self, point) -> np.ndarray:
        """Components of eta at ``point``: ``(-p, 0, 1)``."""
        x = np.asarray(point, dtype=float)
        n = self.n
        out = np.zeros(self.dim)
        out[:n] = -x[n:2 * n]
        out[-1] = 1.0
        return out

    def component_exprs(self) -> list[ex.Expr]:
        n = self.n
        return [ex.neg(ex.Var(f"p{i}")) for i in range(1, n + 1)] + [ex.ZERO] * n + [ex.ONE]

    def two_form(self) -> np.ndarray:
        """Matrix of ``d eta = dq_i ^ dp_i``: ``d eta(u, v) = u @ W @ v``."""
        n = self.n
        W = np.zeros((self.dim, self.dim))
        W[:n, n:2 * n] = np.eye(n)
        W[n:2 * n, :n] = -np.eye(n)
        return W

    def reeb(self) -> np.ndarray:
        r = np.zeros(self.dim)
        r[-1] = 1.0
        return r

    def xi_basis(self, point) -> np.ndarray:
        """Columns ``d_{q_j} + p_j d_z`` (j = 1..n) then ``d_{p_j}``.

        This is canonical for the restriction of ``d eta`` to xi and
        reduces to the first 2n unit vectors at ``p = 0``.
        """
        x = np.asarray(point, dtype=float)
        n = self.n
        E = np.zeros((self.dim, 2 * n))
        E[:2 * n, :2 * n] = np.eye(2 * n)
        E[-1, :n] = x[n:2 * n]
        return E


def symplectic_matrix(n: int) -> np.ndarray:
    """``d eta`` on xi in the canonical basis: ``[[0, I], [-I, 0]]``."""
    return DarbouxForm(n).two_form()[:2 * n, :2 * n]


@dataclass(frozen=True)
class VectorFieldEval:
    point: np.ndarray
    velocity: np.ndarray


def field_from_jet(grad: np.ndarray, value: float, p: np.ndarray) -> np.ndarray:
    n = p.shape[0]
    Hq, Hp, Hz = grad[:n], grad[n:2 * n], grad[-1]
    return np.concatenate([Hp, -Hq - p * Hz, [p @ Hp - value]])


def vector_field(sys: HamiltonianSystem, point, params: ParamValues = None) -> VectorFieldEval:
    x = np.asarray(point, dtype=float)
    n = sys.n
    g = sys.gradient(x, params)
    h = sys.value(x, params)
    return VectorFieldEval(x.copy(), field_from_jet(g, h, x[n:2 * n]))


def jacobian_from_jet(grad: np.ndarray, hess: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``D(X_H)`` from first and second partials of H at a point with momenta ``p``."""
    n = p.shape[0]
    d = 2 * n + 1
    J = np.empty((d, d))
    Hz = grad[-1]
    J[:n] = hess[n:2 * n]
    J[n:2 * n] = -hess[:n] - np.outer(p, hess[-1])
    J[n:2 * n, n:2 * n] -= Hz * np.eye(n)
    J[-1] = p @ hess[n:2 * n] - grad
    J[-1, n:2 * n] += grad[n:2 * n]
    return J


def vector_field_jacobian(sys: HamiltonianSystem, point, params: ParamValues = None) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    return jacobian_from_jet(sys.gradient(x, params), sys.hessian(x, params), x[sys.n:2 * sys.n])


def second_derivative_from_jet(grad, hess, third, p) -> np.ndarray:
    """``D^2(X_H)`` as a (d, d, d) array: component, then two derivative slots."""
    n = p.shape[0]
    d = 2 * n + 1
    T = np.empty((d, d, d))
    T[:n] = third[n:2 * n]
    for j in range(n):
        pj = n + j
        Tj = -third[j] - p[j] * third[-1]
        Tj[pj, :] -= hess[-1]
        Tj[:, pj] -= hess[-1]
        T[pj] = Tj
    Tz = np.einsum("k,kab->ab", p, third[n:2 * n]) - hess
    Tz[n:2 * n, :] += hess[n:2 * n]
    Tz[:, n:2 * n] += hess[n:2 * n].T
    T[-1] = Tz
    return T


def vector_field_exprs(sys: HamiltonianSystem) -> list[ex.Expr]:
    """Components of ``X_H`` as expressions (used by the symbolic fold oracle)."""
    n = sys.n
    Hz = sys.diff(("z",))
    ps = [ex.Var(f"p{j}") for j in range(1, n + 1)]
    Hp = [sys.diff((f"p{j}",)) for j in range(1, n + 1)]
    Hq = [sys.diff((f"q{j}",)) for j in range(1, n + 1)]
    out = list(Hp)
    out += [ex.neg(ex.add(Hq[j], ex.mul(ps[j], Hz))) for j in range(n)]
    out.append(ex.add(*(ex.mul(ps[j], Hp[j]) for j in range(n)), ex.neg(sys.expr)))
    return out


def reeb_derivative(sys: HamiltonianSystem, point, params: ParamValues = None) -> float:
    """``R(H) = H_z``; at an equilibrium the principal coefficient is ``-R(H)``."""
    return float(sys.gradient(point, params)[-1])


def drift_residual(sys: HamiltonianSystem, point, params: ParamValues = None) -> float:
    """``dH(X_H) + R(H) H``, identically zero for every Hamiltonian."""
    x = np.asarray(point, dtype=float)
    g = sys.gradient(x, params)
    h = sys.value(x, params)
    X = field_from_jet(g, h, x[sys.n:2 * sys.n])
    return float(g @ X + g[-1] * h)


def bracket(sys: HamiltonianSystem, f: ex.Expr, point, params: ParamValues = None) -> float:
    """``X_H(f)`` via the non-skew contact bracket.

    ``{H,f}_(p,q) + p_i {H,f}_(p_i,z) - H f_z`` with
    ``{H,f}_(x,y) = H_x f_y - H_y f_x``.
    """
    x = np.asarray(point, dtype=float)
    n = sys.n
    g = sys.gradient(x, params)
    h = sys.value(x, params)
    fsys = HamiltonianSystem(f, n, sys.params)
    fg = fsys.gradient(x, params)
    Hq, Hp, Hz = g[:n], g[n:2 * n], g[-1]
    fq, fp, fz = fg[:n], fg[n:2 * n], fg[-1]
    p = x[n:2 * n]
    return float(np.sum(Hp * fq - Hq * fp) + np.sum(p * (Hp * fz - Hz * fp)) - h * fz)


def divergence_law_check(sys: HamiltonianSystem, point, params: ParamValues = None) -> tuple[float, float]:
    """Return ``(div X_H, -(n+1) R(H))`` at ``point``; the two agree."""
    J = vector_field_jacobian(sys, point, params)
    return float(np.trace(J)), -(sys.n + 1) * reeb_derivative(sys, point, params)
