"""Matrix loops on the circle: partial indices, winding, kernel counts, invertibility.

Right factorization convention: ``A = Θ₊ Λ Θ₋`` with Θ₊ holomorphic and
invertible on the closed disk, Θ₋ holomorphic and invertible outside it
(including ∞), and ``Λ = diag(ζ^{k_i})``.  The indices are read off a
canonical system ``Φ⁺ = A Φ⁻``: columns of Φ⁻ vanish at ∞ to orders k_i.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disk import PolarGrid, evaluate_field, mode_numbers
from .errors import FactorizationFailed, NotInvertible, WindingAmbiguous

DELTA_DET = 1e-12
TOL_FACT = 1e-8
SIGMA_NULL = 1e-7
SIGMA_INV = 1e-7
NULL_TOL = 1e-8


class MatrixLoop:
    """Samples L(θ_k) ∈ GL(m, ℂ) at N equispaced nodes."""

    def __init__(self, values, delta_det: float = DELTA_DET, label: str = ""):
        v = np.asarray(values, complex)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("loop values must have shape (N, m, m)")
        self.values = v
        self.label = label
        dets = np.linalg.det(v)
        self.min_abs_det = float(np.abs(dets).min())
        if self.min_abs_det <= delta_det * max(1.0, float(np.abs(v).max()) ** v.shape[1]):
            raise NotInvertible(f"loop is singular at some node (min |det| = {self.min_abs_det:.2e})")

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def size(self):
        return self.values.shape[1]

    @property
    def zeta(self):
        return np.exp(2j * np.pi * np.arange(self.N) / self.N)

    @classmethod
    def from_function(cls, f, N: int, **kw):
        z = np.exp(2j * np.pi * np.arange(N) / N)
        return cls(np.array([f(zz) for zz in z]), **kw)

    def coefficients(self) -> np.ndarray:
        return np.fft.fft(self.values, axis=0) / self.N

    def tail(self) -> float:
        c = np.abs(self.coefficients())
        k = np.abs(mode_numbers(self.N))
        top = c.max()
        return float(c[k >= self.N // 4].max() / top) if top else 0.0

    def inverse(self) -> "MatrixLoop":
        return MatrixLoop(np.linalg.inv(self.values))

    def transpose(self) -> "MatrixLoop":
        return MatrixLoop(np.swapaxes(self.values, 1, 2))

    def __matmul__(self, other):
        o = other.values if isinstance(other, MatrixLoop) else other
        return MatrixLoop(self.values @ o)


@dataclass
class FactorizationResult:
    indices: list
    total: int
    plus: np.ndarray           # Θ₊ at the nodes
    minus: np.ndarray          # Θ₋ at the nodes
    Lambda: np.ndarray
    defect: float
    winding_check: int
    side: str = "right"
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"indices": [int(k) for k in self.indices], "total": int(self.total),
                "defect": float(self.defect), "winding_check": int(self.winding_check),
                "side": self.side}


# --------------------------------------------------------------------------- winding

def winding_number(values, max_step: float = np.pi / 2) -> tuple[int, float]:
    """Winding of a nonvanishing sampled loop around 0, with its rounding defect."""
    v = np.asarray(values, complex)
    steps = np.angle(np.roll(v, -1) / v)
    if np.abs(steps).max() >= max_step:
        raise WindingAmbiguous("phase step between nodes is too large to resolve the winding")
    w = steps.sum() / (2 * np.pi)
    k = int(np.rint(w))
    return k, float(abs(w - k))


def fredholm_index(G: MatrixLoop, threshold: float = 1e-6) -> int:
    """2n minus twice the winding number of det G (so 2n + k, k the total partial index)."""
    k, defect = winding_number(np.linalg.det(G.values))
    if defect > threshold:
        raise WindingAmbiguous(f"winding rounding defect {defect:.2e}")
    return G.size - 2 * k


# --------------------------------------------------------------------------- factorization

def _toeplitz_system(coef, N, j, L):
    """Rows: negative modes of A Φ⁻; columns: modes -j-L .. -j of Φ⁻ (complex)."""
    m = coef.shape[1]
    lmodes = np.arange(-j - L, -j + 1)
    pmodes = np.arange(-j - L - N // 2, 0)
    diff = pmodes[:, None] - lmodes[None, :]
    valid = (diff >= -N // 2) & (diff < N // 2)
    blocks = coef[diff % N] * valid[..., None, None]          # (R, C, m, m)
    S = blocks.transpose(0, 2, 1, 3).reshape(pmodes.size * m, lmodes.size * m)
    return S, lmodes


def _nullspace(S, tol=NULL_TOL):
    u, s, vh = np.linalg.svd(S)
    top = s[0] if s.size else 1.0
    rank = int(np.sum(s > tol * max(top, 1e-300)))
    return vh[rank:].conj().T


def _right_indices(A: MatrixLoop, L=None, tol=NULL_TOL):
    N, m = A.N, A.size
    L = N // 2 if L is None else L
    coef = A.coefficients()
    ks = mode_numbers(N)
    mags = np.abs(coef).reshape(N, -1).max(axis=1)
    pos = ks[(ks > 0) & (mags > 1e-9 * mags.max())]
    j = int(pos.max()) + 1 if pos.size else 1
    dims = {}
    spaces = {}

    def d(jj):
        if jj not in dims:
            S, lmodes = _toeplitz_system(coef, N, jj, L)
            Nsp = _nullspace(S, tol)
            dims[jj] = Nsp.shape[1]
            spaces[jj] = (Nsp, lmodes)
        return dims[jj]

    counts = []
    floor = -N // 4
    while True:
        ge = d(j) - d(j + 1)
        counts.append((j, ge))
        if ge >= m:
            break
        j -= 1
        if j < floor:
            raise FactorizationFailed("index scan left the resolvable band")
    indices = []
    prev = 0
    for jj, ge in counts:
        indices += [jj] * (ge - prev)
        prev = ge
    return indices[:m], spaces, coef


def _column_extraction(indices, spaces, m, N):
    """Canonical Φ⁻ columns: at each order pick new independent leading coefficients."""
    columns = []   # (order, coefficient array over modes 0..-(order+L) as dict mode -> vec)
    for order in sorted(set(indices), reverse=True):
        need = indices.count(order)
        Nsp, lmodes = spaces[order]
        lead_row = np.where(lmodes == -order)[0][0]
        Lead = Nsp[lead_row * m:(lead_row + 1) * m, :]
        prev = [c[1] for c in columns]
        if prev:
            Pm = np.column_stack(prev)
            qp, _ = np.linalg.qr(Pm)
            Lead_perp = Lead - qp @ (qp.conj().T @ Lead)
        else:
            Lead_perp = Lead
        u, s, vh = np.linalg.svd(Lead_perp)
        for t in range(need):
            y = vh[t].conj() / s[t]
            vec = Nsp @ y
            coeffs = {int(l): vec[i * m:(i + 1) * m] for i, l in enumerate(lmodes)}
            columns.append((order, coeffs[-order] / np.linalg.norm(coeffs[-order]), coeffs))
    columns.sort(key=lambda c: -c[0])
    z = np.exp(2j * np.pi * np.arange(N) / N)
    Phi = np.zeros((N, m, m), complex)
    for ci, (order, lead, coeffs) in enumerate(columns):
        for l, v in coeffs.items():
            Phi[:, :, ci] += np.outer(z ** l, v)
    return Phi, [c[0] for c in columns]


def birkhoff_factorize(A: MatrixLoop, side: str = "right", L=None) -> FactorizationResult:
    """Partial indices of a loop from a canonical system of the Riemann problem Φ⁺ = A Φ⁻."""
    if side == "left":
        res = birkhoff_factorize(A.transpose(), "right", L)
        return FactorizationResult(res.indices, res.total, np.swapaxes(res.minus, 1, 2),
                                   np.swapaxes(res.plus, 1, 2), res.Lambda, res.defect,
                                   res.winding_check, "left", res.provenance)
    if side != "right":
        raise ValueError("side must be 'right' or 'left'")
    N, m = A.N, A.size
    idx, spaces, coef = _right_indices(A, L)
    Phi, orders = _column_extraction(idx, spaces, m, N)
    z = np.exp(2j * np.pi * np.arange(N) / N)
    ks = mode_numbers(N)
    Lam = np.zeros((N, m, m), complex)
    for i, k in enumerate(orders):
        Lam[:, i, i] = z ** k
    # Θ₊ = P₊[A Φ⁻], Θ₋ = (P₋[Φ⁻ Λ])⁻¹
    plus_c = np.fft.fft(A.values @ Phi, axis=0)
    plus_c[ks < 0] = 0
    plus = np.fft.ifft(plus_c, axis=0)
    minus_c = np.fft.fft(Phi @ Lam, axis=0)
    minus_c[ks > 0] = 0
    PhiLam = np.fft.ifft(minus_c, axis=0)
    if np.abs(np.linalg.det(PhiLam)).min() < 1e-10 or np.abs(np.linalg.det(plus)).min() < 1e-10:
        raise FactorizationFailed("canonical system is not normal")
    minus = np.linalg.inv(PhiLam)
    recon = plus @ Lam @ minus
    defect = float(np.abs(recon - A.values).max() / max(1.0, np.abs(A.values).max()))
    if defect > TOL_FACT:
        raise FactorizationFailed(f"factorization defect {defect:.2e} exceeds {TOL_FACT:g}")
    wind, _ = winding_number(np.linalg.det(A.values))
    desc = sorted(orders, reverse=True)
    return FactorizationResult(desc, int(sum(desc)), plus, minus, Lam, defect, wind, "right",
                               {"label": A.label})


def reduce_columns(columns, max_passes: int = 50):
    """Column reduction of a matrix Laurent polynomial in ζ⁻¹.

    ``columns`` is a list of dicts {mode (≤ 0): coefficient vector}.  Returns
    reduced columns and their orders at ∞; the orders of a reduced system sum
    to the order of its determinant.
    """
    cols = [{int(k): np.asarray(v, complex) for k, v in c.items()} for c in columns]

    def order(c):
        nz = [k for k, v in c.items() if np.abs(v).max() > 1e-13]
        return -max(nz)

    for _ in range(max_passes):
        orders = [order(c) for c in cols]
        leads = np.column_stack([cols[i][-orders[i]] for i in range(len(cols))])
        u, s, vh = np.linalg.svd(leads)
        if s[-1] > 1e-12 * s[0]:
            return cols, orders
        a = vh[-1].conj()
        involved = [i for i in range(len(cols)) if abs(a[i]) > 1e-12]
        star = min(involved, key=lambda i: orders[i])
        new = {}
        for i in involved:
            shift = orders[i] - orders[star]
            for k, v in cols[i].items():
                new[k + shift] = new.get(k + shift, 0) + a[i] * v
        new = {k: v for k, v in new.items() if np.abs(v).max() > 1e-13}
        if any(k > 0 for k in new):
            raise FactorizationFailed("reduction produced positive powers")
        cols[star] = new
    raise FactorizationFailed("column reduction did not terminate")


def partial_indices_of_boundary(G: MatrixLoop, side: str = "right") -> FactorizationResult:
    """Partial indices of G⁻¹·conj(G)."""
    A = MatrixLoop(np.linalg.solve(G.values, np.conj(G.values)), label=f"G^-1 conj G ({G.label})")
    res = birkhoff_factorize(A, side)
    res.provenance["G"] = G.label
    return res


# --------------------------------------------------------------------------- kernel counts

@dataclass
class KernelReport:
    count: int
    closed_form: int | None
    expected_if_surjective: int
    surjective: bool
    singular_values: np.ndarray
    basis: np.ndarray
    with_tau: bool

    @property
    def agree(self):
        return self.closed_form is None or self.closed_form == self.count

    def to_dict(self):
        return {"count": self.count, "closed_form": self.closed_form,
                "expected_if_surjective": self.expected_if_surjective,
                "surjective": self.surjective, "with_tau": self.with_tau}


def closed_form_kernel(indices) -> int:
    return int(sum(k + 1 for k in indices if k >= 0))


def _boundary_operator(G: MatrixLoop, degree: int, A=None, B=None, grid=None, tau_row=None):
    """Real matrix of ĥ ↦ 2 Re(G ĥ) on the nodes, ĥ = H + T[-(Aĥ + Bĥ̄)], H of the given degree."""
    N, m = G.N, G.size
    nc = (degree + 1) * m
    P = 2 * nc
    dc = np.zeros((P, degree + 1, m), complex)
    flat = dc.reshape(P, nc)
    flat[np.arange(nc), np.arange(nc)] = 1.0
    flat[nc + np.arange(nc), np.arange(nc)] = 1j
    if A is None or (np.abs(A).max() == 0 and np.abs(B).max() == 0):
        z = G.zeta
        hb = np.einsum("nk,pkd->pnd", z[:, None] ** np.arange(degree + 1), dc)
    else:
        grid = grid or PolarGrid(N, A.shape[0])
        dq = np.zeros((P, grid.M, N, m), complex)
        for _ in range(200):
            fld = evaluate_field(grid, dc, dq)
            h = fld.interior
            dqn = -((A @ h[..., None])[..., 0] + (B @ np.conj(h)[..., None])[..., 0])
            if np.abs(dqn - dq).max() < 1e-14 * max(1.0, np.abs(dqn).max()):
                dq = dqn
                break
            dq = dqn
        hb = evaluate_field(grid, dc, dq).boundary
    rows = 2 * np.real(np.einsum("nab,pnb->pna", G.values, hb)).reshape(P, -1).T
    if tau_row is not None:
        g = 2 * np.real(np.einsum("na,pna->pn", tau_row, hb)).T  # (N, P)
        top = np.hstack([rows, np.zeros((rows.shape[0], N))])
        bottom = np.hstack([-g, np.eye(N)])
        rows = np.vstack([top, bottom])
    return rows


def kernel_dimension(G: MatrixLoop, A=None, B=None, degree=None, tau_row=None,
                     sigma_null: float = SIGMA_NULL, indices=None) -> KernelReport:
    """Numerical dim ker of ĥ ↦ (∂̄ĥ + Aĥ + Bĥ̄, 2Re(Gĥ)|∂Δ[, τ - g(ĥ)]).

    Interior equations are imposed exactly by the representation
    ĥ = H + T[-(Aĥ + Bĥ̄)]; the count is the number of singular values below
    ``sigma_null`` relative to the largest.
    """
    degree = G.N // 4 if degree is None else degree
    S = _boundary_operator(G, degree, A, B, tau_row=tau_row)
    u, s, vh = np.linalg.svd(S, full_matrices=True)
    ncols = S.shape[1]
    sv = np.zeros(ncols)
    sv[:s.size] = s
    count = int(np.sum(sv < sigma_null * s[0]))
    basis = vh[ncols - count:].T if count else np.zeros((ncols, 0))
    closed = None
    if indices is None and (A is None or np.abs(A).max() == 0):
        try:
            indices = partial_indices_of_boundary(G).indices
        except (FactorizationFailed, NotInvertible):
            indices = None
    if indices is not None:
        closed = closed_form_kernel(indices)
    expected = fredholm_index(G)
    return KernelReport(count, closed, expected, count == expected, sv, basis, tau_row is not None)


def dual_loop(G: MatrixLoop) -> MatrixLoop:
    """ζ·G^{-T}: its kernel counts the cokernel of the problem for G."""
    z = G.zeta
    return MatrixLoop(z[:, None, None] * np.linalg.inv(np.swapaxes(G.values, 1, 2)), label="dual")


def cokernel_dimension(G: MatrixLoop, degree=None, sigma_null: float = SIGMA_NULL) -> int:
    return kernel_dimension(dual_loop(G), degree=degree, sigma_null=sigma_null).count


# --------------------------------------------------------------------------- good boundary

@dataclass
class GoodBoundaryReport:
    min_singular_value: float
    relative: float
    invertible: bool
    shape: tuple

    def to_dict(self):
        return {"min_singular_value": self.min_singular_value, "relative": self.relative,
                "invertible": self.invertible, "shape": list(self.shape)}


def assemble_linearized_operator(solution, domain, J, lin=None):
    """(R_{A,B,G}, 𝕽₃, 𝕽₄, 𝕽₅) on the reduced unknowns (holomorphic coefficients, μ).

    Built from the linearization data (A, B, G): the same rows as the Newton
    matrix but assembled independently of the nonlinear residual code.
    """
    from .cotangent import fiber_to_real
    from .geometry import to_real
    from .rhsolver import SolverOptions, linearize

    grid = solution.grid
    lin = lin or linearize(solution, domain, J)
    n = solution.n
    d = 2 * n
    K = solution.coeffs.shape[0] - 1
    kind = solution.provenance.get("kind", "center")
    nc = (K + 1) * d
    P = 2 * nc
    dc = np.zeros((P, K + 1, d), complex)
    flat = dc.reshape(P, nc)
    flat[np.arange(nc), np.arange(nc)] = 1.0
    flat[nc + np.arange(nc), np.arange(nc)] = 1j
    if lin.Qtilde is None:
        fld = evaluate_field(grid, dc, None)
    else:
        from .cotangent import real_to_state, state_to_real
        dq = np.zeros((P, grid.M, grid.N, d), complex)
        for _ in range(300):
            fld = evaluate_field(grid, dc, dq)
            h = fld.interior
            dqn = -((lin.A @ h[..., None])[..., 0] + (lin.B @ np.conj(h)[..., None])[..., 0]) \
                + real_to_state((lin.Qtilde @ state_to_real(fld.d_interior)[..., None])[..., 0])
            step = np.abs(dqn - dq).max()
            dq = dqn
            if step < 1e-14 * max(1.0, np.abs(dq).max()):
                break
        fld = evaluate_field(grid, dc, dq)
    rb = 2 * np.real(np.einsum("nab,pnb->pna", lin.G.values, fld.boundary)).reshape(P, -1) * lin.weight
    sfld = solution.field
    p1 = fiber_to_real(sfld.boundary[0, n:])
    v1 = to_real(sfld.dx_one[:n])
    dp1 = fiber_to_real(fld.boundary[:, 0, n:])
    dv1 = to_real(fld.dx_one[:, :n])
    norm = (dp1 @ v1 + dv1 @ p1)[:, None]
    if kind == "center":
        rows = np.hstack([rb, to_real(fld.at_zero[:, :n]), to_real(fld.dx_zero[:, :n]), norm]).T
        mu_col = np.zeros((rows.shape[0], 1))
        off = grid.N * d + 2 * n
        mu_col[off:off + 2 * n, 0] = -np.asarray(solution.provenance["v0"], float)
        return np.hstack([rows, mu_col])
    Jx0 = J(np.asarray(solution.provenance["x0"], float))
    xx = to_real(sfld.dxx_one[:n])
    tang = (to_real(fld.dxx_one[:, :n]) @ (Jx0 @ v1) + (dv1 @ Jx0.T) @ xx)[:, None]
    return np.hstack([rb, to_real(fld.boundary[:, 0, :n]), dv1, tang, norm]).T


def good_boundary_test(solution, domain, J, sigma_inv: float = SIGMA_INV, zero_rows=None,
                       matrix=None) -> GoodBoundaryReport:
    """Smallest singular value of the linearized operator; invertible iff above σ_inv (relative).

    The discrete operator is tall (more boundary rows than unknowns);
    injectivity of the tall matrix stands in for invertibility of the square
    continuous operator of index zero.
    """
    S = assemble_linearized_operator(solution, domain, J) if matrix is None else np.array(matrix)
    if zero_rows is not None:
        S = S.copy()
        S[zero_rows] = 0.0
    s = np.linalg.svd(S, compute_uv=False)
    rel = float(s[-1] / s[0])
    return GoodBoundaryReport(float(s[-1]), rel, rel > sigma_inv, S.shape)


def normalization_row(solution) -> int:
    """Index of the lift-normalization row in the assembled operator (the last one)."""
    return -1
