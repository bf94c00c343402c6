"""Sparse Dirichlet finite-difference operators and smallest-eigenpair solvers.

Operators are second-order central-difference stencils restricted to the
interior nodes of a mask, with zero Dirichlet values on the outside. The
smallest eigenpair is found by shifted inverse iteration; the shift is
bootstrapped from a coarse-grid solve of the same operator (two-grid) and
refreshed from the Rayleigh quotient as the iteration converges.

Potentials may be any per-node finite field: integrability conditions of the
continuum theory (W in some L^p class) have no pointwise meaning on a grid
and are not checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh, splu

from .geometry import DomainMask, GeometryError, coarsen
from .grid import ScalarField


class SpectralError(RuntimeError):
    """Solver failure or operator misuse."""


@dataclass
class StencilOperator:
    """Symmetric stencil c * Laplacian + potential + shift on a mask."""

    mask: DomainMask
    laplacian_coefficient: float
    potential: ScalarField | None
    shift: float
    matrix: sparse.csr_matrix

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]

    def apply(self, interior_values: np.ndarray) -> np.ndarray:
        return self.matrix @ interior_values

    def apply_field(self, f: ScalarField) -> ScalarField:
        if f.grid != self.mask.grid:
            raise SpectralError("field lives on a different grid")
        vec = f.values[self.mask.inside]
        return self.mask.field(self.matrix @ vec)

    def norm_estimate(self) -> float:
        """Gershgorin bound on the spectral radius."""
        m = self.matrix
        return float(np.max(np.abs(m).sum(axis=1)))


def dirichlet_laplacian_matrix(mask: DomainMask) -> sparse.csr_matrix:
    """Plain Laplacian (sum of second differences) on the interior nodes."""
    grid = mask.grid
    inside = mask.inside
    n_in = mask.count
    index = -np.ones(grid.shape, dtype=np.int64)
    index[inside] = np.arange(n_in)

    diag = np.zeros(n_in)
    rows, cols, vals = [], [], []
    for a in range(grid.dim):
        inv_h2 = 1.0 / grid.spacing[a] ** 2
        diag -= 2.0 * inv_h2
        sl_lo = [slice(None)] * grid.dim
        sl_hi = [slice(None)] * grid.dim
        sl_lo[a] = slice(0, -1)
        sl_hi[a] = slice(1, None)
        both = inside[tuple(sl_lo)] & inside[tuple(sl_hi)]
        i_lo = index[tuple(sl_lo)][both]
        i_hi = index[tuple(sl_hi)][both]
        rows.extend((i_lo, i_hi))
        cols.extend((i_hi, i_lo))
        vals.extend((np.full(i_lo.size, inv_h2), np.full(i_lo.size, inv_h2)))

    rows.append(np.arange(n_in))
    cols.append(np.arange(n_in))
    vals.append(diag)
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_in, n_in),
    )
    return mat.tocsr()


def assemble_dirichlet(
    mask: DomainMask,
    laplacian_coefficient: float = -1.0,
    potential: ScalarField | None = None,
    shift: float = 0.0,
) -> StencilOperator:
    if mask.count == 0:
        raise GeometryError("mask has no interior nodes")
    mat = laplacian_coefficient * dirichlet_laplacian_matrix(mask)
    if potential is not None:
        if potential.grid != mask.grid:
            raise SpectralError("potential lives on a different grid")
        mat = mat + sparse.diags(np.asarray(potential.values)[mask.inside])
    if shift != 0.0:
        mat = mat + shift * sparse.identity(mask.count, format="csr")
    return StencilOperator(mask, laplacian_coefficient, potential, shift, mat.tocsr())


@dataclass
class EigenResult:
    eigenvalue: float
    eigenvector: ScalarField
    residual: float
    iterations: int


def _quad_norm(mask: DomainMask, vec: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(vec) ** 2)) * np.sqrt(mask.grid.node_weight))


def _coarse_operator(op: StencilOperator) -> StencilOperator | None:
    try:
        cmask = coarsen(op.mask)
        if cmask.count < 2 or not (~cmask.inside).any():
            return None
        cpot = None
        if op.potential is not None:
            slices = tuple(slice(0, None, 2) for _ in range(op.mask.grid.dim))
            cpot = ScalarField(cmask.grid, np.asarray(op.potential.values)[slices])
        return assemble_dirichlet(cmask, op.laplacian_coefficient, cpot, op.shift)
    except (GeometryError, SpectralError):
        return None


def _bootstrap_shift(op: StencilOperator) -> float:
    """Two-grid bootstrap: solve on the coarsened mask, else use Gershgorin."""
    coarse = op
    while coarse.n_unknowns > 1500:
        nxt = _coarse_operator(coarse)
        if nxt is None or nxt.n_unknowns >= coarse.n_unknowns:
            break
        coarse = nxt
    try:
        if coarse.n_unknowns <= 1500:
            lam = float(
                np.min(np.linalg.eigvalsh(coarse.matrix.toarray()))
            )
        else:
            lam = float(eigsh(coarse.matrix, k=1, which="SA", tol=1e-6,
                              return_eigenvectors=False)[0])
    except Exception:
        m = op.matrix
        row_abs = np.asarray(np.abs(m).sum(axis=1)).ravel()
        lam = float(np.min(m.diagonal() - (row_abs - np.abs(m.diagonal()))))
    return lam


def smallest_eigenpair(
    op: StencilOperator,
    tol: float = 1e-10,
    max_iter: int = 400,
    v0: np.ndarray | None = None,
) -> EigenResult:
    """Lowest eigenpair by shifted inverse iteration with CSR LU factorizations.

    ``tol`` is relative: the iteration stops when ||A v - lam v||_2 <= tol * ||A||_est.
    """
    if tol <= 0:
        raise SpectralError("tolerance must be positive")
    mat = op.matrix
    n = mat.shape[0]
    norm_est = op.norm_estimate()

    if n == 1:
        lam = float(mat[0, 0])
        vec = np.ones(1)
        field = op.mask.field(vec / _quad_norm(op.mask, vec))
        return EigenResult(lam, field, 0.0, 0)

    lam_guess = _bootstrap_shift(op)
    # tighter than tol * ||A||_est (stiff stencils have huge norms), but not
    # below the floating-point floor eps * ||A||
    eps_floor = 32 * np.finfo(float).eps * norm_est
    target = max(tol * min(norm_est, max(1.0, abs(lam_guess))), eps_floor)
    margin = max(1e-3 * (abs(lam_guess) + 1.0), 1e-10 * norm_est)
    sigma = lam_guess - margin

    rng = np.random.default_rng(0)
    v = v0.copy() if v0 is not None else rng.standard_normal(n)
    v /= np.linalg.norm(v)

    lu = None
    lam = lam_guess
    residual = np.inf
    refactor = True
    for it in range(1, max_iter + 1):
        if refactor:
            ident = sparse.identity(n, format="csc")
            try:
                lu = splu((mat - sigma * ident).tocsc())
            except RuntimeError:
                sigma -= max(1.0, abs(sigma)) * 1e-6
                lu = splu((mat - sigma * ident).tocsc())
            refactor = False
        w = lu.solve(v)
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0:
            sigma -= margin
            refactor = True
            continue
        v = w / nw
        av = mat @ v
        lam = float(v @ av)
        residual = float(np.linalg.norm(av - lam * v))
        if residual <= target:
            break
        # refresh the shift once the Rayleigh quotient is trustworthy
        if it % 4 == 0:
            new_sigma = lam - max(2.0 * residual, 1e-8 * (abs(lam) + 1.0))
            if abs(new_sigma - sigma) > 1e-3 * (abs(lam) + 1.0):
                sigma = new_sigma
                refactor = True
    else:
        raise SpectralError(
            f"eigensolver did not converge in {max_iter} iterations "
            f"(residual {residual:.3e}, target {target:.3e})"
        )

    # sign fix: nonnegative integral
    if np.sum(v) < 0:
        v = -v
    qn = _quad_norm(op.mask, v)
    field = op.mask.field(v / qn)
    # v has unit Euclidean norm, so the L2-normalized residual equals this one
    return EigenResult(lam, field, residual, it)


def onset_threshold(
    mask: DomainMask,
    potential: ScalarField | None = None,
    tol: float = 1e-10,
    max_iter: int = 400,
) -> EigenResult:
    """Ground eigenpair of -(1/4) Laplacian + W with Dirichlet walls.

    The eigenvalue is the threshold above which the quadratic coefficient in
    the condensate functional turns the zero state unstable.
    """
    op = assemble_dirichlet(mask, -0.25, potential)
    return smallest_eigenpair(op, tol=tol, max_iter=max_iter)


def hardy_quotient(
    mask: DomainMask,
    lambda_offset: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 5000,
) -> float:
    """Largest mu with M_{d^-2} phi = mu (-Lap + lambda) phi on the mask.

    mu estimates sup over phi of int d^-2 |phi|^2 / (int |grad phi|^2 +
    lambda int |phi|^2); the implied boundary-decay constant is 2/sqrt(mu).
    Nodes closer to the complement than one spacing get zero weight, which
    caps the (never attained) continuum supremum on the grid.
    """
    stiff = assemble_dirichlet(mask, -1.0, None, lambda_offset)
    if lambda_offset < 0:
        ground = smallest_eigenpair(stiff, tol=1e-8)
        if ground.eigenvalue <= 0:
            raise SpectralError(
                "offset makes the gradient form indefinite; increase lambda_offset"
            )
    d = mask.dist[mask.inside]
    weight = np.zeros_like(d)
    ok = d >= min(mask.grid.spacing)
    weight[ok] = 1.0 / d[ok] ** 2
    if not ok.any():
        raise SpectralError("no interior nodes clear of the boundary band")

    lu = splu(stiff.matrix.tocsc())
    rng = np.random.default_rng(1)
    v = rng.standard_normal(mask.count)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(max_iter):
        w = lu.solve(weight * v)
        nw = np.linalg.norm(w)
        if nw == 0:
            raise SpectralError("weight operator annihilated the iterate")
        w /= nw
        num = float(w @ (weight * w))
        den = float(w @ (stiff.matrix @ w))
        mu_new = num / den
        done = abs(mu_new - mu) <= tol * abs(mu_new)
        v, mu = w, mu_new
        if done:
            return mu
    raise SpectralError(f"Hardy quotient power iteration stalled at mu={mu:.6g}")
