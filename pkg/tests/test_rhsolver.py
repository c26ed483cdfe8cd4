import numpy as np
import pytest

from statdisk.cotangent import c_action, fiber_to_real
from statdisk.disk import DiskTrace, PolarGrid
from statdisk.errors import ConeViolation, DegenerateVelocity, StepUnderflow
from statdisk.geometry import Ball, DeformationPath, random_generator, standard_structure, to_complex, to_real, zero_generator
from statdisk.indices import assemble_linearized_operator
from statdisk.rhsolver import (
    SolverOptions,
    continuation_path,
    evaluate_center_operator,
    linearize,
    newton_jacobian,
    solve_stationary_boundary,
    solve_stationary_center,
    tangency_parameter,
)

E = np.eye(4)
PROBE = 0.6 * np.exp(1j * np.linspace(0, 2 * np.pi, 9))


def moebius_disk(a, v):
    """Extremal disk of the unit ball through a with direction v (complex vectors)."""
    v = v / np.linalg.norm(v)
    lam = -np.vdot(v, a)
    R = np.sqrt(abs(lam) ** 2 + 1 - np.vdot(a, a).real)
    b = -lam / R
    return lambda z: a + np.multiply.outer(lam + R * (z + b) / (1 + np.conj(b) * z), v)


def parabolic(z, nu):
    # automorphism fixing 1, derivative 1 there, tangency nu
    w = 1j * (1 + z) / (1 - z) - nu
    return (w - 1j) / (w + 1j)


def test_straight_disk(center_disk):
    z = center_disk.evaluate(PROBE)
    assert np.abs(z - np.multiply.outer(PROBE, [1, 0])).max() < 1e-8
    assert center_disk.mu == pytest.approx(1.0, abs=1e-8)
    assert max(center_disk.residuals.values()) < 1e-10


@pytest.mark.parametrize("v0", [E[0], E[2], (E[0] + E[3]) / np.sqrt(2)])
def test_offcenter_ball_disk_matches_moebius(ball2, std2, v0):
    x0 = np.array([0.3, 0.0, 0.0, 0.0])
    sol = solve_stationary_center(ball2, std2, x0, v0, opts=SolverOptions(128, 16))
    exact = moebius_disk(to_complex(x0), to_complex(v0))
    assert np.abs(sol.evaluate(PROBE) - exact(PROBE)).max() < 1e-8


def test_boundary_fiber_is_conormal(deformed_disk, ball2):
    J, sol = deformed_disk
    n = sol.n
    x = to_real(sol.trace.boundary[:, :n])
    p = fiber_to_real(sol.fiber_boundary())
    got = np.array([c_action(J, xi, z, pi) for xi, z, pi in zip(x, sol.grid.zeta, p)])
    expect = sol.multiplier.values[:, None] * ball2.grad(x)
    assert np.abs(got - expect).max() < 1e-9
    assert sol.multiplier.values.min() > 0


def test_deformed_solve_converges_quickly(deformed_disk):
    J, sol = deformed_disk
    assert sol.iterations <= 8
    assert max(sol.residuals.values()) < 1e-10


def test_maximum_principle(deformed_disk, ball2):
    J, sol = deformed_disk
    rho_in = ball2.rho(to_real(sol.base_interior()).reshape(-1, 4))
    rho_bd = ball2.rho(to_real(sol.base_boundary()))
    assert rho_in.max() < 0
    assert np.abs(rho_bd).max() < 1e-9


def test_direction_residual_scales_with_multiplier(ball2, std2, center_disk, opts64):
    base = evaluate_center_operator(ball2, std2, np.zeros(4), E[0], center_disk.coeffs, center_disk.mu, opts64)
    twice = evaluate_center_operator(ball2, std2, np.zeros(4), E[0], center_disk.coeffs, 2 * center_disk.mu, opts64)
    assert np.abs(base["direction"]).max() < 1e-12
    assert np.linalg.norm(twice["direction"]) == pytest.approx(center_disk.mu, rel=1e-12)
    assert np.abs(twice["boundary"]).max() < 1e-12


def test_fiber_scaling_only_breaks_normalization(ball2, deformed_disk, opts64):
    J, sol = deformed_disk
    blocks = evaluate_center_operator(ball2, J, np.zeros(4), E[0], sol.coeffs, sol.mu, opts64,
                                      reference=sol.reference, fiber_scale=3.0)
    for key in ("boundary", "center", "direction"):
        assert np.abs(blocks[key]).max() < 1e-9, key
    assert abs(blocks["normalization"][0]) == pytest.approx(2.0, rel=1e-8)


def test_linearization_vanishes_for_standard_structure(center_disk, ball2, std2):
    lin = linearize(center_disk, ball2, std2)
    assert np.abs(lin.A).max() == 0 and np.abs(lin.B).max() == 0
    assert lin.G.min_abs_det > 1e-3


def test_linearization_first_order_in_deformation(ball2, path2, center_disk, opts64):
    fam = continuation_path(ball2, path2, center_disk, 0.02, steps=2, opts=opts64).family
    norms = [max(np.abs(lin.A).max(), np.abs(lin.B).max())
             for lin in (linearize(s, ball2, path2.at(t)) for s, t in zip(fam[1:], (0.01, 0.02)))]
    assert norms[0] > 0
    assert norms[1] / norms[0] == pytest.approx(2.0, rel=0.1)


def test_newton_matrix_equals_assembled_operator(deformed_disk, ball2):
    J, sol = deformed_disk
    Jm, _ = newton_jacobian(sol, ball2, J)
    S = assemble_linearized_operator(sol, ball2, J)
    assert Jm.shape == S.shape
    assert np.abs(Jm - S).max() < 1e-6 * np.abs(Jm).max()


def test_direction_equivariance(ball2, std2):
    x0 = np.array([0.3, 0.0, 0.0, 0.0])
    o = SolverOptions(128, 16)
    a = solve_stationary_center(ball2, std2, x0, E[0], opts=o)
    b = solve_stationary_center(ball2, std2, x0, E[1], opts=o)
    assert np.abs(b.evaluate(PROBE) - a.evaluate(1j * PROBE)).max() < 1e-8


def test_tangency_straight_disk_is_zero(center_disk):
    assert abs(tangency_parameter(center_disk)) < 1e-12


def test_tangency_polynomial_trace():
    g = PolarGrid(32, 8)
    c = 0.1j
    tr = DiskTrace.from_coefficients([[0, 0], [1, 0], [c, 0]], g)
    fx, fxx = 1 + 2 * c, 2 * c
    assert tangency_parameter(tr) == pytest.approx(np.imag(np.conj(fx) * fxx), abs=1e-13)


def test_boundary_problem_diameter(ball2, std2):
    sol = solve_stationary_boundary(ball2, std2, E[0], E[0], opts=SolverOptions(64, 16))
    assert np.abs(sol.evaluate(PROBE) - np.multiply.outer(PROBE, [1, 0])).max() < 1e-8
    assert abs(tangency_parameter(sol, std2)) < 1e-10


@pytest.mark.parametrize("nu", [0.3, 1.0])
def test_boundary_problem_prescribed_tangency(ball2, std2, nu):
    o = SolverOptions(128, 16)
    sol = solve_stationary_boundary(ball2, std2, E[0], E[0], nu=nu, opts=o)
    assert tangency_parameter(sol, std2) == pytest.approx(nu, abs=1e-8)
    assert np.abs(sol.evaluate(PROBE)[:, 0] - parabolic(PROBE, nu)).max() < 1e-8
    flat = solve_stationary_boundary(ball2, std2, E[0], E[0], opts=o)
    assert np.abs(sol.evaluate(PROBE) - flat.evaluate(PROBE)).max() > 0.1


def test_boundary_problem_rejects_inward_velocity(ball2, std2):
    with pytest.raises(ConeViolation):
        solve_stationary_boundary(ball2, std2, E[0], -E[0])


def test_degenerate_velocity(ball2, std2):
    with pytest.raises(DegenerateVelocity):
        solve_stationary_center(ball2, std2, np.zeros(4), np.zeros(4))


def test_zero_generator_family_is_constant(ball2, center_disk, opts64):
    res = continuation_path(ball2, DeformationPath(zero_generator(2), 2), center_disk, 0.1, steps=3, opts=opts64)
    assert res.t_reached == pytest.approx(0.1)
    assert all(np.abs(s.coeffs - center_disk.coeffs).max() < 1e-12 for s in res.family)


def test_continuation_underflow(ball2, center_disk):
    path = DeformationPath(random_generator(2, seed=0, scale=1.0), 2)
    with pytest.raises(StepUnderflow):
        continuation_path(ball2, path, center_disk, 5.0, steps=1, min_step=0.5,
                          opts=SolverOptions(64, 16, max_iter=3))
