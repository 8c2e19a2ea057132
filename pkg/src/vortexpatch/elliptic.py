"""Dirichlet Poisson solve for the stream function, velocity and kinetic energy.

The discrete operator is the 5-point Laplacian on interior cells. Where a
neighbour lies outside the domain, the zero Dirichlet value is imposed at the
true boundary crossing (fraction ``theta`` of a cell width away) by linear
extrapolation of a ghost value. Only the diagonal changes, so the matrix stays
symmetric positive definite and second-order accurate in the max norm.
"""

from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, SolverFailure
from .geometry import Grid

DEFAULT_TOL = 1e-10
# boundary crossings closer than this fraction of h are snapped to it
THETA_MIN = 1e-3

_NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))
_operators = weakref.WeakKeyDictionary()


class GreenOperator:
    """Factorised inverse of the discrete Dirichlet Laplacian on one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        mask = grid.mask
        n = int(mask.sum())
        index = -np.ones(grid.shape, dtype=np.int64)
        index[mask] = np.arange(n)
        self.index = index
        I, J = np.nonzero(mask)
        X, Y = grid.centers()
        inv_h2 = 1.0 / grid.cell_area

        diag = np.zeros(n)
        rows, cols = [], []
        for di, dj in _NEIGHBOURS:
            nb = index[I + di, J + dj]
            inside = nb >= 0
            rows.append(index[I[inside], J[inside]])
            cols.append(nb[inside])
            diag[inside] += inv_h2
            out = ~inside
            theta = grid.domain.exit_fraction(
                X[I[out], J[out]], Y[I[out], J[out]],
                X[I[out] + di, J[out] + dj], Y[I[out] + di, J[out] + dj],
            )
            theta = np.maximum(theta, THETA_MIN)
            np.add.at(diag, index[I[out], J[out]], inv_h2 / theta)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        off = sp.coo_matrix((np.full(rows.size, -inv_h2), (rows, cols)), shape=(n, n))
        self.matrix = (off + sp.diags(diag)).tocsc()
        self._lu = spla.splu(self.matrix)

    def to_vector(self, field):
        return np.asarray(field, dtype=float)[self.grid.mask]

    def to_field(self, vec):
        out = np.zeros(self.grid.shape)
        out[self.grid.mask] = vec
        return out

    def laplacian(self, psi):
        """Apply ``-Delta_h`` to interior values of ``psi`` (exterior treated as 0)."""
        return self.to_field(self.matrix @ self.to_vector(psi))

    def solve(self, omega, tol=DEFAULT_TOL):
        rhs = self.to_vector(omega)
        if not np.all(np.isfinite(rhs)):
            raise InvalidArgument("vorticity contains non-finite values")
        scale = np.abs(rhs).max() if rhs.size else 0.0
        if scale == 0.0:
            return self.grid.zeros()
        x = self._lu.solve(rhs)
        for _ in range(2):
            r = rhs - self.matrix @ x
            rel = np.abs(r).max() / scale
            if rel <= tol:
                break
            x += self._lu.solve(r)
        else:
            r = rhs - self.matrix @ x
            rel = np.abs(r).max() / scale
            if rel > tol:
                raise SolverFailure(f"Poisson residual {rel:.3e} exceeds tolerance {tol:.1e}", residual=rel)
        return self.to_field(x)


def green_operator(grid):
    """Return the (cached) operator for ``grid``."""
    op = _operators.get(grid)
    if op is None:
        op = GreenOperator(grid)
        _operators[grid] = op
    return op


def solve_stream(grid, omega, tol=DEFAULT_TOL):
    """Solve ``-Delta psi = omega`` with ``psi = 0`` on the boundary.

    Returns a full-grid array, zero on exterior cells. Raises
    :class:`SolverFailure` if the relative residual stays above ``tol``.
    """
    omega = grid.check_field(omega, "omega")
    return green_operator(grid).solve(omega, tol=tol)


def velocity(grid, psi):
    """Cell-centred ``v = J grad psi = (d2 psi, -d1 psi)``.

    Centred differences where both neighbours are interior, one-sided where
    only one is, zero where neither is.
    """
    psi = grid.check_field(psi, "psi")
    mask = grid.mask
    grads = []
    for axis in (0, 1):
        fwd_ok = np.roll(mask, -1, axis=axis) & mask
        bwd_ok = np.roll(mask, 1, axis=axis) & mask
        fwd = np.roll(psi, -1, axis=axis) - psi
        bwd = psi - np.roll(psi, 1, axis=axis)
        g = np.where(fwd_ok & bwd_ok, 0.5 * (fwd + bwd), np.where(fwd_ok, fwd, np.where(bwd_ok, bwd, 0.0)))
        grads.append(g / grid.h)
    v1 = np.where(mask, grads[1], 0.0)
    v2 = np.where(mask, -grads[0], 0.0)
    return v1, v2


def energy(grid, omega, psi):
    """Kinetic energy ``(1/2) sum omega psi dA`` for ``psi = solve_stream(omega)``."""
    omega = grid.check_field(omega, "omega")
    psi = grid.check_field(psi, "psi")
    m = grid.mask
    return 0.5 * float(np.dot(omega[m], psi[m])) * grid.cell_area


def energy_bound(grid, lam):
    """Upper bound ``(1/2) lam^2 sum |G|`` on the energy of any field in K.

    The discrete Green matrix is entrywise non-negative, so the sum of its
    entries is the integral of the solve with unit right-hand side.
    """
    ones = grid.mask.astype(float)
    return 0.5 * lam**2 * float(solve_stream(grid, ones)[grid.mask].sum()) * grid.cell_area


def disk_green_reference(x, y, R, center=(0.0, 0.0)):
    """Method-of-images Green function of ``-Delta`` on the disk of radius ``R``.

    ``G(x, y) = (1/2pi) log( |x - y*| |y| / (R |x - y|) )`` with ``y*`` the
    inversion of ``y`` in the circle; written without the inversion so that
    ``y`` at the centre needs no special case.
    """
    x = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
    y = np.asarray(y, dtype=float) - np.asarray(center, dtype=float)
    if R <= 0:
        raise InvalidArgument("radius must be positive")
    rx2 = np.sum(x * x, axis=-1)
    ry2 = np.sum(y * y, axis=-1)
    if np.any(rx2 >= R * R) or np.any(ry2 >= R * R):
        raise InvalidArgument("points must lie strictly inside the disk")
    d2 = np.sum((x - y) ** 2, axis=-1)
    if np.any(d2 == 0):
        raise InvalidArgument("Green function is singular at coincident points")
    image = rx2 * ry2 - 2 * R * R * np.sum(x * y, axis=-1) + R**4
    return 0.5 / (2 * np.pi) * np.log(image / (R * R * d2))


def _log_square_primitive(x, y):
    # F with d2F/dxdy = log(x^2 + y^2)
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(r2 > 0, x * y * np.log(r2), 0.0)
        t2 = np.where(x != 0, x * x * np.arctan(y / np.where(x != 0, x, 1.0)), 0.0)
        t3 = np.where(y != 0, y * y * np.arctan(x / np.where(y != 0, y, 1.0)), 0.0)
    return t1 - 3 * x * y + t2 + t3


def cell_log_integral(dx, dy, h):
    """Exact ``int log|u| du`` over the square of side ``h`` centred at ``(dx, dy)``."""
    a1, b1 = dx - 0.5 * h, dx + 0.5 * h
    a2, b2 = dy - 0.5 * h, dy + 0.5 * h
    F = _log_square_primitive
    return 0.5 * (F(b1, b2) - F(a1, b2) - F(b1, a2) + F(a1, a2))


def kernel_stream(grid, omega, chunk=512):
    """Stream function of a disk grid field by quadrature of the images kernel.

    The free-space logarithm is integrated exactly over each source cell, the
    smooth image part by the midpoint rule. Independent of the sparse solve;
    used only as a cross-check.
    """
    dom = grid.domain
    if dom.kind != "disk":
        raise InvalidArgument("kernel quadrature is available for disks only")
    omega = grid.check_field(omega, "omega")
    X, Y = grid.centers()
    m = grid.mask
    cx, cy = dom.center
    xs, ys = X[m] - cx, Y[m] - cy
    w = omega[m]
    R = dom.radius
    h = grid.h
    out = np.empty(xs.size)
    for s in range(0, xs.size, chunk):
        tx = xs[s:s + chunk, None]
        ty = ys[s:s + chunk, None]
        free = -cell_log_integral(xs[None, :] - tx, ys[None, :] - ty, h) / (2 * np.pi)
        image = (tx * tx + ty * ty) * (xs * xs + ys * ys) - 2 * R * R * (tx * xs + ty * ys) + R**4
        image = np.log(image / (R * R)) / (4 * np.pi) * grid.cell_area
        out[s:s + chunk] = (free + image) @ w
    psi = grid.zeros()
    psi[m] = out
    return psi
