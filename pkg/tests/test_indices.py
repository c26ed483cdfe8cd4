import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statdisk.errors import NotInvertible, WindingAmbiguous
from statdisk.indices import (
    MatrixLoop,
    birkhoff_factorize,
    closed_form_kernel,
    cokernel_dimension,
    fredholm_index,
    good_boundary_test,
    kernel_dimension,
    normalization_row,
    partial_indices_of_boundary,
    reduce_columns,
    winding_number,
)
from statdisk.rhsolver import linearize

N = 64


def loop(f, n=N):
    return MatrixLoop.from_function(f, n)


def toy(z):
    return np.array([[z * z, 0], [-2 * z, -1]])


@pytest.fixture(scope="module")
def ball_lin(center_disk, ball2, std2):
    return linearize(center_disk, ball2, std2)


def test_toy_loop_right_indices():
    # canonical pair: Phi- = [[1/z, 1/z^2], [0, -2/z]], Phi+ = A Phi- = [[z, 1], [-2, 0]]
    res = birkhoff_factorize(loop(toy))
    assert res.indices == [1, 1]
    assert res.total == res.winding_check == 2
    assert res.defect < 1e-8


def test_toy_loop_left_indices():
    assert birkhoff_factorize(loop(toy), side="left").indices == [2, 0]


def test_printed_pair_reduces_to_equal_orders():
    # columns (z^-2, -2 z^-1) and (0, 1): orders 1 and 0 but det has order 2
    cols = [{-2: [1, 0], -1: [0, -2]}, {0: [0, 1]}]
    _, orders = reduce_columns(cols)
    assert sorted(orders) == [1, 1]


def test_identity_and_diagonal_loops():
    assert birkhoff_factorize(loop(lambda z: np.eye(3))).indices == [0, 0, 0]
    diag = loop(lambda z: np.diag([z ** 3, z ** -1, 1, z]))
    res = birkhoff_factorize(diag)
    assert res.indices == [3, 1, 0, -1]
    assert res.total == 3


def test_constant_unitary_boundary():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    G = loop(lambda z: Q)
    assert partial_indices_of_boundary(G).indices == [0, 0, 0, 0]
    assert fredholm_index(G) == 4
    rep = kernel_dimension(G)
    assert rep.count == 4 and rep.closed_form == 4 and rep.surjective


def test_fredholm_shift_by_winding():
    G = loop(lambda z: np.diag([1 / z, 2, 1j, 1 + 0.3 * z]))
    assert fredholm_index(G) == 4 + 2


def test_winding_helpers():
    z = np.exp(2j * np.pi * np.arange(N) / N)
    assert winding_number(z ** 3)[0] == 3
    with pytest.raises(WindingAmbiguous):
        winding_number(z ** 40)
    with pytest.raises(NotInvertible):
        MatrixLoop(np.zeros((N, 2, 2)))


def test_ball_indices_and_fredholm(ball_lin):
    res = partial_indices_of_boundary(ball_lin.G)
    assert res.indices == [1, 1, 1, 1]
    assert fredholm_index(ball_lin.G) == 4 + res.total
    assert ball_lin.G.min_abs_det == pytest.approx(0.125, rel=1e-6)


def test_ball_kernel_counts(ball_lin):
    plain = kernel_dimension(ball_lin.G)
    tau = kernel_dimension(ball_lin.G, tau_row=ball_lin.g_row)
    assert plain.count == plain.closed_form == 8
    assert tau.count == 8
    assert plain.surjective


def test_negative_two_index_breaks_surjectivity():
    G = loop(lambda z: np.diag([z, 1, 1, 1]).astype(complex))
    res = partial_indices_of_boundary(G)
    assert res.indices == [0, 0, 0, -2]
    rep = kernel_dimension(G)
    assert rep.count != 4 + res.total
    assert rep.count == 3
    assert not rep.surjective


@pytest.mark.parametrize("make", [
    lambda z: np.eye(4),
    lambda z: np.diag([z, 1, 1, 1]),
    lambda z: np.diag([1 / z, 1, 2, 1]),
])
def test_fredholm_consistency(make):
    G = loop(lambda z: np.asarray(make(z), complex))
    assert fredholm_index(G) == kernel_dimension(G).count - cokernel_dimension(G)


def test_fredholm_consistency_ball(ball_lin):
    G = ball_lin.G
    assert fredholm_index(G) == kernel_dimension(G).count - cokernel_dimension(G)


def test_closed_form_kernel():
    assert closed_form_kernel([2, 0, 1, 1]) == 8
    assert closed_form_kernel([1, -1, -2]) == 2


def test_invariance_under_holomorphic_factor(ball_lin):
    z = ball_lin.G.zeta
    M = np.tile(np.eye(4, dtype=complex), (N, 1, 1))
    M[:, 0, 0] = 1 + z / 2
    G2 = MatrixLoop(ball_lin.G.values @ np.linalg.inv(M))
    assert partial_indices_of_boundary(G2).indices == partial_indices_of_boundary(ball_lin.G).indices


def test_good_boundary_ball(center_disk, ball2, std2):
    rep = good_boundary_test(center_disk, ball2, std2)
    assert rep.invertible
    zeroed = good_boundary_test(center_disk, ball2, std2, zero_rows=[normalization_row(center_disk)])
    assert not zeroed.invertible


def test_good_boundary_deformed(deformed_disk, ball2):
    J, sol = deformed_disk
    assert good_boundary_test(sol, ball2, J).invertible


def _random_loop(rng, degrees, amp):
    z = np.exp(2j * np.pi * np.arange(N) / N)
    m = len(degrees)
    vals = np.array([np.diag([zz ** k for k in degrees]) for zz in z], complex)
    for k in (-2, -1, 1, 2):
        C = amp * (rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))) / (1 + k * k)
        vals = vals + z[:, None, None] ** k * C
    return vals


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), degrees=st.lists(st.integers(-2, 2), min_size=2, max_size=3))
def test_total_index_equals_winding(seed, degrees):
    rng = np.random.default_rng(seed)
    A = MatrixLoop(_random_loop(rng, degrees, 0.05))
    res = birkhoff_factorize(A)
    assert res.total == res.winding_check == sum(degrees)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), size=st.floats(0.01, 0.3))
def test_indices_invariant_under_random_holomorphic_factor(seed, size, ball_lin):
    rng = np.random.default_rng(seed)
    z = ball_lin.G.zeta
    C1, C2 = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(2))
    # |M - I| <= size on the closed disk keeps the poles of M^-1 well outside it
    scale = size / (np.linalg.norm(C1, 2) + np.linalg.norm(C2, 2) / 2)
    C1, C2 = C1 * scale, C2 * scale
    M = np.eye(4) + z[:, None, None] * C1 + z[:, None, None] ** 2 * C2 / 2
    G2 = MatrixLoop(ball_lin.G.values @ np.linalg.inv(M))
    assert partial_indices_of_boundary(G2).indices == [1, 1, 1, 1]
