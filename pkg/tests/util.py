"""Random systems shared by the tests."""

from __future__ import annotations

import itertools

import numpy as np

from contactdyn import expr as ex
from contactdyn.equilibria import amended_hessian_general, find_equilibrium
from contactdyn.errors import NoConvergenceError, SingularJacobianError
from contactdyn.geometry import DarbouxForm
from contactdyn.hamiltonian import coordinate_names, parse
from contactdyn.legendre import LegendreChart, TangentFieldFamily, chart_names
from contactdyn.parser import parse_expr


def _num(c: float) -> str:
    return repr(float(c))


def random_polynomial(rng: np.random.Generator, n: int, degree: int = 3, terms: int = 8, params=()) -> str:
    names = list(coordinate_names(n)) + list(params)
    out = []
    for _ in range(terms):
        k = int(rng.integers(0, degree + 1))
        mono = [names[int(i)] for i in rng.integers(0, len(names), k)]
        c = _num(rng.uniform(-2, 2))
        out.append("*".join([f"({c})"] + mono))
    return " + ".join(out)


def shifted(names, x0):
    """Displacement variables ``(x_i - x0_i)`` as source snippets."""
    return [f"({v} - ({_num(c)}))" for v, c in zip(names, x0)]


def random_equilibrium_source(rng: np.random.Generator, n: int, tau: float | None = None, scale: float = 1.0):
    """Source for H with a known equilibrium ``x0`` and principal coefficient ``tau``.

    ``H = -tau (Z - p0 . Q) + (random quadratic and cubic in the displacement)``
    has ``H(x0) = 0`` and ``dH(x0) = -tau eta(x0)``.
    """
    d = 2 * n + 1
    x0 = rng.uniform(-scale, scale, d)
    if tau is None:
        tau = float(rng.uniform(0.3, 2.0) * rng.choice([-1, 1]))
    y = shifted(coordinate_names(n), x0)
    lin = f"({_num(-tau)})*({y[-1]}" + "".join(f" - ({_num(x0[n + j])})*{y[j]}" for j in range(n)) + ")"
    terms = [lin]
    for i, j in itertools.combinations_with_replacement(range(d), 2):
        terms.append(f"({_num(rng.uniform(-1, 1))})*{y[i]}*{y[j]}")
    for _ in range(4):
        i, j, k = rng.integers(0, d, 3)
        terms.append(f"({_num(rng.uniform(-1, 1))})*{y[i]}*{y[j]}*{y[k]}")
    return " + ".join(terms), x0, tau


def random_equilibrium_system(rng, n, tau=None, scale=1.0):
    src, x0, tau = random_equilibrium_source(rng, n, tau, scale)
    return parse(src, n), x0, tau


def central_diff(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(out, axis=-1)


# -- degenerate instances -------------------------------------------------
#
# Hamiltonians are written in the centred Darboux coordinates of a random
# base point x0: Y_q = q - q0, Y_p = p - p0, Y_z = z - z0 - p0.(q - q0).  In
# these coordinates x0 is the origin and eta(x0) = dY_z, so the coefficient
# tables below are exactly the centred jet.

def centred_names(n: int, x0) -> list[str]:
    names = coordinate_names(n)
    y = shifted(names, x0)
    yz = f"(z - ({_num(x0[-1])})" + "".join(f" - ({_num(x0[n + j])})*{y[j]}" for j in range(n)) + ")"
    return y[:-1] + [yz]


def poly_from_coeffs(coeffs, Y) -> str:
    terms = []
    for mono, c in coeffs.items():
        if c != 0.0:
            terms.append("*".join([f"({_num(c)})"] + [Y[i] for i in mono]))
    return " + ".join(terms) if terms else "0"


def quadratic_hessian(coeffs, d: int) -> np.ndarray:
    h = np.zeros((d, d))
    for mono, c in coeffs.items():
        if len(mono) == 2:
            i, j = mono
            if i == j:
                h[i, i] += 2 * c
            else:
                h[i, j] += c
                h[j, i] += c
    return h


def random_quadratic(rng, d: int) -> dict:
    return {(i, j): float(rng.uniform(-1, 1)) for i, j in itertools.combinations_with_replacement(range(d), 2)}


def random_cubic(rng, d: int, count: int = 5) -> dict:
    out = {}
    for _ in range(count):
        out[tuple(sorted(int(i) for i in rng.integers(0, d, 3)))] = float(rng.uniform(-1, 1))
    return out


def type_one_instance(rng, n: int, zero: bool):
    """Coefficients of an H with tau = 0 at the origin; ``zero`` forces Delta2 = 0."""
    d = 2 * n + 1
    co = random_quadratic(rng, d)
    co.update(random_cubic(rng, d))
    co[(d - 1, d - 1)] = 0.0
    h = quadratic_hessian(co, d)
    a = np.linalg.solve(h[:2 * n, :2 * n], -h[:2 * n, -1])
    delta2 = float(h[-1, :2 * n] @ a)
    co[(d - 1, d - 1)] = -delta2 / 2 if zero else -delta2 / 2 + float(rng.uniform(0.5, 1.5) * rng.choice([-1, 1]))
    return co


def make_system(n: int, x0, tau: float, co: dict, params_src: str = ""):
    Y = centred_names(n, x0)
    src = f"({_num(-tau)})*{Y[-1]} + " + poly_from_coeffs(co, Y) + params_src
    return parse(src, n)


def _hess_prime(h: np.ndarray, n: int, tau: float) -> np.ndarray:
    hp = h[:2 * n, :2 * n].copy()
    hp[:n, n:2 * n] -= tau * np.eye(n)
    return hp


def type_two_instance(rng, n: int, zero: bool, x0=None):
    """``(sys, x0, tau)`` with tau != 0 and singular amended Hessian at ``x0``.

    For n = 1 the qp coefficient B is found by root finding on
    ``det Hess'``; for n > 1 a rank-one change of the q1 q1 coefficient makes
    ``Hess'`` singular.  With ``zero`` a cubic coefficient is solved for so
    that the fold value vanishes.
    """
    from scipy.optimize import brentq

    from contactdyn.degeneracy import classify_type_II
    from contactdyn.equilibria import analyze_point

    d = 2 * n + 1
    x0 = rng.uniform(-1, 1, d) if x0 is None else np.asarray(x0, dtype=float)
    tau = float(rng.uniform(0.5, 2.0) * rng.choice([-1, 1]))
    co = random_quadratic(rng, d)
    co.update(random_cubic(rng, d))
    if n == 1:
        # det Hess' = 4AC - B(B - tau); need AC > -tau^2/16 for a real root
        A, C = co[(0, 0)], co[(1, 1)]
        if A * C <= -tau * tau / 16:
            co[(1, 1)] = C = -C
        f = lambda B: 4 * A * C - B * (B - tau)
        co[(0, 1)] = brentq(f, tau / 2, tau / 2 + np.sign(tau) * (abs(tau) + 10), xtol=1e-15)
    else:
        hp = _hess_prime(quadratic_hessian(co, d), n, tau)
        s = -1.0 / np.linalg.solve(hp, np.eye(2 * n)[0])[0]
        co[(0, 0)] += s / 2
    if zero:
        mono = (n, n, n)  # p1^3
        co[mono] = 0.0
        v0 = classify_type_II(None, analyze_point(make_system(n, x0, tau, co), x0)).fold_value
        co[mono] = 1.0
        v1 = classify_type_II(None, analyze_point(make_system(n, x0, tau, co), x0)).fold_value
        co[mono] = -v0 / (v1 - v0)
    return make_system(n, x0, tau, co), x0, tau


def converged_equilibria(count, seed):
    """``count`` Newton-converged equilibria of random systems, n cycling 1..3."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = 1 + len(out) % 3
        sys, x0, tau = random_equilibrium_system(rng, n)
        guess = x0 + 1e-4 * rng.normal(size=x0.size)
        try:
            rec = find_equilibrium(sys, None, guess, tau + 1e-4)
        except (NoConvergenceError, SingularJacobianError):
            continue
        if rec.tag.kind.degenerate:
            continue
        out.append((sys, rec))
    return out


def rescaled_hessians(sys, f_src, x0, tau):
    """``f(x0)`` and Hess' for ``(eta, H)`` and for ``(f eta, f H)``."""
    n = sys.n
    f = parse_expr(f_src, sys.coords)
    H2 = parse(f"({f_src})*({ex.to_source(sys.expr)})", n)
    eta = DarbouxForm(n).component_exprs()
    eta2 = [ex.mul(f, a) for a in eta]
    E = DarbouxForm(n).xi_basis(x0)
    one = amended_hessian_general(eta, sys, x0, tau, E)
    two = amended_hessian_general(eta2, H2, x0, tau, E)
    return f.evaluate(dict(zip(sys.coords, x0))), one, two


def random_chart_poly(rng, names, degree=3, terms=6):
    out = []
    for _ in range(terms):
        k = int(rng.integers(0, degree + 1))
        mono = [names[int(i)] for i in rng.integers(0, len(names), k)]
        out.append("*".join([f"({rng.uniform(-1, 1)!r})"] + mono))
    return " + ".join(out)


def index_sets(n):
    return [list(c) for k in range(n + 1) for c in itertools.combinations(range(1, n + 1), k)]


def random_setup(rng, n, I, params=()):
    names = chart_names(n, I)
    chart = LegendreChart.parse(n, I, random_chart_poly(rng, names))
    Y = TangentFieldFamily.parse(n, I, [random_chart_poly(rng, names + tuple(params), terms=4) for _ in range(n)], params)
    return chart, Y
