import numpy as np
import pytest
from util import (
    central_diff,
    converged_equilibria,
    random_equilibrium_system,
    random_polynomial,
    rescaled_hessians,
)

from contactdyn.equilibria import (
    Kind,
    Margins,
    amended_hessian,
    amended_hessian_general,
    analyze_point,
    centred_frame,
    classify,
    find_equilibrium,
    linearization,
    planar_coefficients,
    spectrum_and_quadruplets,
)
from contactdyn.errors import DimensionError, NoConvergenceError, SingularJacobianError
from contactdyn.geometry import DarbouxForm, symplectic_matrix, vector_field
from contactdyn.hamiltonian import parse


def _sorted(w):
    w = np.asarray(w, dtype=complex)
    return w[np.lexsort((w.imag, w.real))]


# -- Newton --------------------------------------------------------------

def test_find_equilibrium_examples():
    rec = find_equilibrium(parse("z + p1*q1", 1), None, [0.01, -0.01, 0.02])
    assert np.allclose(rec.point, 0, atol=1e-12) and rec.tau == pytest.approx(-1.0)
    rec = find_equilibrium(parse("-lam + q1^2 + p1^2 + z^2", 1, ["lam"]), {"lam": 0.25}, [0, 0, 0.4], -0.9)
    assert np.allclose(rec.point, [0, 0, 0.5], atol=1e-12) and rec.tau == pytest.approx(-1.0, abs=1e-12)
    rec = find_equilibrium(parse("z - p1*q1 + p1^2*q1 - 0.04*q1", 1), None, [0, 0.1, 0])
    assert np.allclose(rec.point, [0, 0.2, 0], atol=1e-12) and rec.tau == pytest.approx(-1.0, abs=1e-12)
    assert rec.residual < 1e-11


def test_newton_errors():
    sys = parse("z^2 - 1 + q1^2", 1)
    with pytest.raises(SingularJacobianError) as e:
        find_equilibrium(sys, None, [0, 0, 0])
    assert e.value.condition > 1e13
    with pytest.raises(NoConvergenceError) as e:
        find_equilibrium(parse("-lam + q1^2 + p1^2 + z^2", 1, ["lam"]), {"lam": 1.0}, [0.3, 0.2, 3.0], max_iter=1)
    assert e.value.iterations == 1
    with pytest.raises(DimensionError):
        find_equilibrium(sys, None, [0, 0])


def test_record_invariants():
    for sys, rec in converged_equilibria(30, 20):
        n = rec.n
        assert abs(sys.value(rec.point)) < 1e-10
        g = sys.gradient(rec.point)
        assert np.max(np.abs(g + rec.tau * DarbouxForm(n).covector(rec.point))) < 1e-10
        assert np.min(np.abs(rec.eigenvalues - rec.tau)) < 1e-8 * max(1, abs(rec.tau))
        assert np.array_equal(rec.L[-1], np.append(np.zeros(2 * n), rec.tau))


# -- linearization -------------------------------------------------------

def _planar(A, B, C, D, E, F, tau):
    return parse(f"-({tau})*z + ({A})*q1^2 + ({B})*q1*p1 + ({C})*p1^2 + ({D})*q1*z + ({E})*p1*z + ({F})*z^2", 1)


def test_planar_linearization_and_hessian():
    rng = np.random.default_rng(21)
    for _ in range(20):
        A, B, C, D, E, F, tau = rng.normal(size=7)
        sys = _planar(A, B, C, D, E, F, tau)
        rec = analyze_point(sys, [0, 0, 0])
        L = np.array([[B, 2 * C, E], [-2 * A, -B + tau, -D], [0, 0, tau]])
        assert np.allclose(rec.L, L, atol=1e-14)
        assert np.allclose(linearization(sys, rec), L, atol=1e-14)
        assert np.allclose(rec.amended_hessian, [[2 * A, B - tau], [B, 2 * C]], atol=1e-14)
        assert np.allclose(amended_hessian(sys, rec), rec.amended_hessian)
        # closed-form spectrum: tau and (tau +- sqrt((2B - tau)^2 - 16AC)) / 2
        r = np.sqrt(complex((2 * B - tau) ** 2 - 16 * A * C))
        expected = _sorted([tau, (tau + r) / 2, (tau - r) / 2])
        assert np.allclose(rec.eigenvalues, expected, atol=1e-10)
        co = planar_coefficients(rec)
        assert np.allclose([co["A"], co["B"], co["C"], co["tau"]], [A, B, C, tau])


def test_simple_linear_examples():
    rec = analyze_point(parse("z + p1*q1", 1), [0, 0, 0])
    assert np.allclose(rec.eigenvalues, [-2, -1, 1])
    eta = DarbouxForm(1).covector(rec.point)
    assert np.allclose(eta @ rec.L, rec.tau * eta)
    assert np.array_equal(rec.amended_hessian, [[0, 2], [1, 0]])
    assert rec.tag.kind is Kind.NONDEGENERATE_UNSTABLE
    A, B, C = 0.0, 1.0, 0.0
    assert B * B - B * rec.tau - 4 * A * C == 2.0 and rec.tag.planar_stable is False
    rec = analyze_point(parse("z - p1*q1", 1), [0, 0, 0])
    assert np.array_equal(rec.amended_hessian, [[0, 0], [-1, 0]])
    assert rec.tag.kind is Kind.TYPE_II


def test_linearization_conjugate_to_jacobian():
    for sys, rec in converged_equilibria(30, 22):
        fd = central_diff(lambda y: vector_field(sys, y).velocity, rec.point)
        assert np.allclose(rec.jacobian, fd, atol=1e-6)
        M = centred_frame(rec.point, rec.n)
        assert np.allclose(np.linalg.solve(M, rec.jacobian @ M), rec.L, atol=1e-10)


def test_amended_hessian_general_point_display():
    """Compare with the coordinate display of the amended Hessian at a point with p != 0."""
    rng = np.random.default_rng(23)
    for k in range(60):
        n = 1 + k % 3
        sys, x0, tau = random_equilibrium_system(rng, n)
        rec = analyze_point(sys, x0)
        h = sys.hessian(x0)
        Hz = sys.gradient(x0)[-1]
        p = x0[n:2 * n]
        qq, qp, pp = h[:n, :n], h[:n, n:2 * n], h[n:2 * n, n:2 * n]
        qz, pz, zz = h[:n, -1], h[n:2 * n, -1], h[-1, -1]
        top_left = qq + np.outer(p, qz) + np.outer(qz, p) + zz * np.outer(p, p)
        top_right = Hz * np.eye(n) + qp + np.outer(p, pz)
        bottom_left = qp.T + np.outer(pz, p)
        display = np.block([[top_left, top_right], [bottom_left, pp]])
        assert np.allclose(rec.amended_hessian, display, atol=1e-10)
        if n == 1:
            literal = np.array([[qq[0, 0] + 2 * p[0] * qz[0] + zz * p[0] ** 2, Hz + qp[0, 0] + p[0] * pz[0]],
                                [qp[0, 0] + p[0] * pz[0], pp[0, 0]]])
            assert np.allclose(rec.amended_hessian, literal, atol=1e-10)


# -- general contact forms -----------------------------------------------

def test_general_form_matches_standard():
    rng = np.random.default_rng(24)
    for n in (1, 2, 3):
        sys, x0, tau = random_equilibrium_system(rng, n)
        rec = analyze_point(sys, x0)
        E = DarbouxForm(n).xi_basis(x0)
        M = amended_hessian_general(DarbouxForm(n).component_exprs(), sys, x0, rec.tau, E)
        assert np.allclose(M, rec.amended_hessian, atol=1e-12)


def test_rescaling_examples():
    sys = parse("z + p1*q1", 1)
    x0 = np.zeros(3)
    f0, one, two = rescaled_hessians(sys, "1 + q1 + z", x0, -1.0)
    assert f0 == 1.0 and np.allclose(two, one, atol=1e-12)
    f0, one, two = rescaled_hessians(sys, "2 + q1", x0, -1.0)
    assert np.allclose(two, 2 * one, atol=1e-10)


def test_rescaling_random_points():
    rng = np.random.default_rng(25)
    for k in range(10):
        n = 1 + k % 2
        sys, x0, tau = random_equilibrium_system(rng, n)
        f_src = "3 + " + random_polynomial(rng, n, degree=2, terms=4)
        f0, one, two = rescaled_hessians(sys, f_src, x0, tau)
        assert np.allclose(two, f0 * one, rtol=1e-10, atol=1e-10 * np.abs(one).max())


def test_general_form_errors():
    sys = parse("z + p1*q1", 1)
    eta = DarbouxForm(1).component_exprs()
    with pytest.raises(ValueError, match="kernel"):
        amended_hessian_general(eta, sys, np.zeros(3), -1.0, np.eye(3)[:, [0, 2]])
    with pytest.raises(ValueError, match="equilibrium"):
        amended_hessian_general(eta, sys, np.zeros(3), 1.0, DarbouxForm(1).xi_basis(np.zeros(3)))


# -- quadruplets ---------------------------------------------------------

def test_quadruplets_random():
    for sys, rec in converged_equilibria(60, 26):
        rep = spectrum_and_quadruplets(rec)
        assert rep.ok, (rep.max_negation_error, rep.max_conjugation_error, rep.hamiltonian_hessian_error)
        W = symplectic_matrix(rec.n)
        S = np.linalg.solve(W, rec.L_xi - rec.tau / 2 * np.eye(2 * rec.n))
        sym = (rec.amended_hessian + rec.amended_hessian.T) / 2
        assert np.allclose(S, S.T, atol=1e-9) and np.allclose(S, sym, atol=1e-9)


def test_quadruplet_examples():
    rec = analyze_point(parse("z + p1*q1", 1), [0, 0, 0])
    rep = spectrum_and_quadruplets(rec)
    assert np.allclose(rep.shifted, [-1.5, 1.5]) and rep.ok
    rec = analyze_point(parse("z + p1*q2 - q1*p2", 2), np.zeros(5))
    assert np.allclose(rec.eigenvalues, _sorted([-1, 1j, -1j, -1 + 1j, -1 - 1j]), atol=1e-12)
    assert spectrum_and_quadruplets(rec).ok
    rec = analyze_point(parse("q1*p1 + 2*q1^2 - p1^2", 1), [0, 0, 0])
    rep = spectrum_and_quadruplets(rec)
    assert rec.tau == 0 and rep.ok
    assert np.allclose(np.sort_complex(rep.shifted), np.sort_complex(-rep.shifted))


def test_quadruplet_failure_is_flagged():
    rec = analyze_point(parse("z + p1*q1", 1), [0, 0, 0])
    import dataclasses

    bad = dataclasses.replace(rec, L_xi=np.array([[1.0, 0.0], [0.0, -3.0]]))
    assert not spectrum_and_quadruplets(bad).ok


# -- classification ------------------------------------------------------

def test_classification_examples():
    rec = analyze_point(parse("z + q1^2 + p1^2", 1), [0, 0, 0])
    assert rec.tag.kind is Kind.NONDEGENERATE_STABLE and rec.tag.planar_stable and rec.tag.sufficient_stable
    assert np.all(rec.eigenvalues.real < 0)
    sys = parse("-lam + q1^2 + p1^2 + z^2", 1, ["lam"])
    low = find_equilibrium(sys, {"lam": 0.25}, [0, 0, -0.4])
    assert low.tau == pytest.approx(1.0) and low.tag.kind is Kind.NONDEGENERATE_UNSTABLE
    assert analyze_point(sys, [0, 0, 0], {"lam": 0.0}).tag.kind is Kind.TYPE_I
    assert analyze_point(parse("q1^2 + z^2", 1), [0, 0, 0]).tag.kind is Kind.HIGHER_DEGENERATE
    assert analyze_point(parse("q1^2 + p1^2 + q1*z", 1), [0, 0, 0]).tag.kind is Kind.TYPE_I


def test_margins_are_relative():
    sys = parse("1e-10*z + q1^2 + p1^2", 1)
    assert analyze_point(sys, [0, 0, 0]).tag.kind is Kind.TYPE_I
    assert classify(analyze_point(sys, [0, 0, 0]), Margins(tau=1e-12)).kind is Kind.NONDEGENERATE_STABLE
    big = parse("1e-4*z + 1e6*q1^2 + 1e6*p1^2", 1)
    assert analyze_point(big, [0, 0, 0]).tag.kind is Kind.TYPE_I


def test_sufficient_condition_implies_stable():
    for sys, rec in converged_equilibria(60, 27):
        if rec.tag.sufficient_stable:
            assert rec.tag.kind is Kind.NONDEGENERATE_STABLE


def test_hessian_eigenvalues_complex_for_large_B_tau():
    for t in np.linspace(3, 30, 10):
        A, C = 1.0, 0.5
        B = t / 2
        rec = analyze_point(_planar(A, B, C, 0, 0, 0, t), [0, 0, 0])
        assert np.all(np.abs(np.linalg.eigvals(rec.amended_hessian).imag) > 1e-6)
    rec = analyze_point(_planar(1.0, 0.0, 0.5, 0, 0, 0, 1.0), [0, 0, 0])
    assert np.all(np.linalg.eigvals(rec.amended_hessian).imag == 0)
