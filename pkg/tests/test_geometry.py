import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statdisk.errors import GridEmpty, NotInDistribution, NotOnBoundary
from statdisk.geometry import (
    Ball,
    DeformationPath,
    Ellipsoid,
    check_strong_pseudoconvexity,
    constant_structure,
    deformation_norm,
    domain_from_dict,
    levi_form,
    random_generator,
    sample_cotangent_grid,
    standard_matrix,
    standard_structure,
    to_complex,
    to_real,
    zero_generator,
)


def test_chart_round_trip():
    z = np.array([1 + 2j, -0.5j])
    assert np.allclose(to_complex(to_real(z)), z)
    J0 = standard_matrix(2)
    assert np.allclose(to_complex(J0 @ to_real(z)), 1j * z)


def test_ball_levi_form_at_pole(ball2, std2):
    # rho = |z|^2 - 1 gives dd^c rho(v, Jv) = 4|v|^2 on the complex tangent space
    val = levi_form(ball2, std2, [1, 0, 0, 0], [0, 0, 1, 0])
    assert val == pytest.approx(4.0, rel=1e-12)


def test_levi_form_zero_vector(ball2, std2):
    assert levi_form(ball2, std2, [1, 0, 0, 0], np.zeros(4)) == 0.0


def test_levi_form_rejects_normal_direction(ball2, std2):
    with pytest.raises(NotInDistribution):
        levi_form(ball2, std2, [1, 0, 0, 0], [1, 0, 0, 0])


def test_levi_form_needs_boundary_point(ball2, std2):
    with pytest.raises(NotOnBoundary):
        levi_form(ball2, std2, [0.5, 0, 0, 0], [0, 0, 1, 0])


def test_ellipsoid_levi_form_positive(std2):
    dom = Ellipsoid([1.0, 4.0])
    x = dom.boundary_project(np.array([0.6, 0.1, 0.3, 0.2]))
    g = dom.grad(x)
    B = np.linalg.svd(np.vstack([g, std2(x).T @ g]))[2][2:]
    assert levi_form(dom, std2, x, B[0]) > 0


def test_pseudoconvexity_ball_uniform(ball2, std2):
    grid = ball2.sample_boundary(100, 3)
    rep = check_strong_pseudoconvexity(ball2, std2, grid)
    assert rep.passed
    assert np.allclose(rep.eigenvalues, rep.eigenvalues[0], rtol=1e-10)


def test_pseudoconvexity_indefinite_quadric_fails(std2):
    from statdisk.geometry import PolynomialDomain

    # |z1|^2 - |z2|^2 - 1 written as a real polynomial in (x1, y1, x2, y2)
    terms = [((2, 0, 0, 0), 1.0), ((0, 2, 0, 0), 1.0), ((0, 0, 2, 0), -1.0), ((0, 0, 0, 2), -1.0),
             ((0, 0, 0, 0), -1.0)]
    dom = PolynomialDomain(2, terms, interior_point=[0, 0, 0, 0])
    x = np.array([np.sqrt(1.25), 0, 0.5, 0])
    rep = check_strong_pseudoconvexity(dom, std2, [x])
    assert not rep.passed


def test_pseudoconvexity_single_point(ball2, std2):
    rep = check_strong_pseudoconvexity(ball2, std2, [[1, 0, 0, 0]])
    assert rep.passed and rep.eigenvalues.shape == (1,)
    with pytest.raises(GridEmpty):
        check_strong_pseudoconvexity(ball2, std2, np.zeros((0, 4)))


@pytest.mark.parametrize("weights", [[1.0, 4.0], [2.0, 0.5], [1.0, 1.0, 3.0]])
def test_pseudoconvexity_ellipsoids(weights):
    dom = Ellipsoid(weights)
    J = standard_structure(dom.n)
    assert check_strong_pseudoconvexity(dom, J, dom.sample_boundary(40, 1)).passed


def test_deformation_norm_trivial_cases(ball2, std2, path2):
    xs, ps = sample_cotangent_grid(ball2, 50, 0)
    assert deformation_norm(std2, std2, xs, ps) == 0.0
    assert deformation_norm(path2.at(0.0), std2, xs, ps) == 0.0


def test_deformation_norm_first_order(ball2, std2, path2):
    xs, ps = sample_cotangent_grid(ball2, 200, 0)
    a = deformation_norm(path2.at(0.01), std2, xs, ps)
    b = deformation_norm(path2.at(0.02), std2, xs, ps)
    assert b / a == pytest.approx(2.0, rel=0.1)


def test_deformation_norm_symmetric(ball2, std2, path2):
    xs, ps = sample_cotangent_grid(ball2, 50, 2)
    J = path2.at(0.05)
    assert deformation_norm(J, std2, xs, ps) == pytest.approx(deformation_norm(std2, J, xs, ps), rel=1e-14)


def test_zero_generator_path_is_standard():
    J = DeformationPath(zero_generator(2), 2).at(0.3)
    x = np.array([0.1, 0.2, -0.3, 0.4])
    assert np.array_equal(J(x), standard_matrix(2))


def test_constant_structure_square():
    P = np.array([[1, 0.3, 0, 0], [0, 1, 0, 0.2], [0.1, 0, 1, 0], [0, 0, 0.4, 1.0]])
    J = constant_structure(P @ standard_matrix(2) @ np.linalg.inv(P))
    assert J.square_defect(np.zeros((1, 4))) < 1e-14
    assert not J.standard


def test_domain_from_dict():
    assert isinstance(domain_from_dict({"kind": "ball", "n": 3}), Ball)
    with pytest.raises(ValueError):
        domain_from_dict({"kind": "torus"})


def test_boundary_samples_on_boundary():
    dom = Ellipsoid([1.0, 4.0])
    b = dom.sample_boundary(50, 0)
    assert np.abs(dom.rho(b)).max() < 1e-12
    assert np.all(np.linalg.norm(dom.grad(b), axis=-1) > 1e-8)
    assert np.all(dom.rho(dom.sample_interior(50, 0)) < 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0.0, 0.3))
def test_deformed_structure_squares_to_minus_identity(seed, t):
    J = DeformationPath(random_generator(2, seed), 2).at(t)
    pts = np.random.default_rng(seed).uniform(-1, 1, size=(500, 4))
    assert J.square_defect(pts) < 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_derivative_matches_differences(seed):
    J = DeformationPath(random_generator(2, seed), 2).at(0.2)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.7, 0.7, 4)
    h = 1e-5
    fd = np.array([(J(x + h * e) - J(x - h * e)) / (2 * h) for e in np.eye(4)])
    assert np.abs(fd - J.deriv(x)).max() < 1e-7


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), seed=st.integers(0, 1000))
def test_levi_form_quadratic_scaling(c, seed):
    dom = Ellipsoid([1.0, 2.0])
    J = standard_structure(2)
    x = dom.sample_boundary(1, seed)[0]
    g = dom.grad(x)
    v = np.linalg.svd(np.vstack([g, J(x).T @ g]))[2][2]
    assert levi_form(dom, J, x, c * v) == pytest.approx(c * c * levi_form(dom, J, x, v), rel=1e-10)
