"""Energy maximizers over the constraint set K by level-set ascent.

Each ascent step solves for the stream function of the current iterate and
replaces the iterate by the bathtub maximizer of the linear functional
``omega -> <omega, psi>`` over K: the field equal to ``lam`` on the cells with
the largest ``psi``, just enough of them to carry the prescribed mass. Because
the Green operator is symmetric positive definite, the energy cannot decrease.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .elliptic import energy, solve_stream, velocity
from .errors import ConvergenceFailure, InfeasibleConstraint, InvalidArgument
from .geometry import measure

log = logging.getLogger(__name__)

TIE_BAND = 1e-12
MASS_RTOL = 1e-9


@dataclass(frozen=True)
class PatchSpec:
    lam: float
    mass: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidArgument(f"lambda must be positive, got {self.lam}")
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise InvalidArgument(f"mass must be positive, got {self.mass}")

    def feasible_on(self, grid):
        return self.lam * grid.interior_area >= self.mass * (1 - MASS_RTOL)


@dataclass
class ThresholdResult:
    mu: float
    plateau_fraction: float
    above: np.ndarray = field(repr=False)
    band: np.ndarray = field(repr=False)

    def field(self, lam):
        return lam * (self.above + self.plateau_fraction * self.band)


@dataclass
class MaximizerResult:
    omega: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    mu: float
    energy: float
    iterations: int
    characterization_residual: float
    steadiness_residual: float
    energy_history: list
    history: list = field(default_factory=list, repr=False)
    plateau_fraction: float = 0.0
    converged: bool = True


def admissible(omega, spec, grid):
    """True iff ``omega`` lies in K: ``0 <= omega <= lam`` and total mass matches."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != grid.shape:
        return False
    w = omega[grid.mask]
    if not np.all(np.isfinite(w)) or w.min() < 0 or w.max() > spec.lam:
        return False
    return abs(measure(grid, omega) - spec.mass) <= MASS_RTOL * spec.mass


def _tie_width(values):
    spread = values.max() - values.min()
    return TIE_BAND * spread


def threshold_level(psi, spec, grid):
    """Level ``mu`` such that ``lam * |{psi > mu}|`` (plus a tie plateau) equals the mass.

    Cells within a relative tie band of ``mu`` share one fractional value so
    the mass constraint holds exactly.
    """
    psi = grid.check_field(psi, "psi")
    m = grid.mask
    vals = psi[m]
    n = vals.size
    cells = spec.mass / (spec.lam * grid.cell_area)
    if cells > n * (1 + MASS_RTOL):
        raise InfeasibleConstraint(
            f"mass {spec.mass} exceeds lam*|D| = {spec.lam * grid.interior_area}"
        )
    above = np.zeros(grid.shape, dtype=bool)
    band = np.zeros(grid.shape, dtype=bool)
    nearest = round(cells)
    if abs(cells - nearest) <= MASS_RTOL * max(1.0, cells):
        cells_int = nearest
    else:
        cells_int = int(np.floor(cells))
    if cells_int >= n:
        above[m] = True
        lowest = vals.min()
        return ThresholdResult(lowest - max(1.0, abs(lowest)), 1.0, above, band)

    order = np.argsort(-vals, kind="stable")
    mu = float(vals[order[cells_int]])
    tie = _tie_width(vals)
    is_above = vals > mu + tie
    is_band = np.abs(vals - mu) <= tie
    n_above = int(is_above.sum())
    n_band = int(is_band.sum())
    frac = float(np.clip((cells - n_above) / n_band, 0.0, 1.0))
    above[m] = is_above
    band[m] = is_band
    return ThresholdResult(mu, frac, above, band)


def patch_from_stream(psi, spec, grid):
    thr = threshold_level(psi, spec, grid)
    return thr.field(spec.lam), thr


def ascent_step(omega, spec, grid):
    """One level-set ascent step: ``lam`` on ``{psi > mu}``, 0 below, plateau on ties."""
    psi = solve_stream(grid, omega)
    new, _ = patch_from_stream(psi, spec, grid)
    return new


def uniform_field(spec, grid):
    omega = grid.zeros()
    omega[grid.mask] = spec.mass / grid.interior_area
    return omega


def seed_patch(spec, grid, center):
    """Quasi-circular patch of the right mass around ``center``."""
    X, Y = grid.centers()
    dist = -np.hypot(X - center[0], Y - center[1])
    omega, _ = patch_from_stream(np.where(grid.mask, dist, 0.0), spec, grid)
    return omega


def solve_maximizer(grid, spec, init=None, tol=1e-8, max_iter=500, test_set=None):
    """Iterate :func:`ascent_step` until the L1 change drops below ``tol * mass``.

    Raises :class:`ConvergenceFailure` (with the partial result attached) when
    ``max_iter`` is exhausted first.
    """
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    if not spec.feasible_on(grid):
        raise InfeasibleConstraint(
            f"mass {spec.mass} exceeds lam*|D| = {spec.lam * grid.interior_area}"
        )
    if abs(spec.lam * grid.interior_area - spec.mass) <= MASS_RTOL * spec.mass:
        # K is the single field omega = lam
        omega = np.where(grid.mask, spec.lam, 0.0)
        psi = solve_stream(grid, omega)
        e = energy(grid, omega, psi)
        return MaximizerResult(omega, psi, float(psi[grid.mask].min()), e, 0, 0.0,
                               steadiness_residual(omega, psi, grid, test_set),
                               [e], [(0, e, float("nan"), float("nan"))], 1.0)

    omega = uniform_field(spec, grid) if init is None else grid.check_field(init, "init").copy()
    if not admissible(omega, spec, grid):
        raise InvalidArgument("initial field is not admissible")

    psi = solve_stream(grid, omega)
    e = energy(grid, omega, psi)
    energies = [e]
    history = [(0, e, float("nan"), float("nan"))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new, thr = patch_from_stream(psi, spec, grid)
        change = measure(grid, np.abs(new - omega))
        omega = new
        psi = solve_stream(grid, omega)
        e = energy(grid, omega, psi)
        energies.append(e)
        history.append((it, e, change, thr.mu))
        if change <= tol * spec.mass:
            converged = True
            break

    thr = threshold_level(psi, spec, grid)
    result = MaximizerResult(
        omega=omega,
        psi=psi,
        mu=thr.mu,
        energy=e,
        iterations=it,
        characterization_residual=characterization_residual(omega, psi, thr.mu, grid, spec.lam),
        steadiness_residual=steadiness_residual(omega, psi, grid, test_set),
        energy_history=energies,
        history=history,
        plateau_fraction=thr.plateau_fraction,
        converged=converged,
    )
    log.debug("maximizer: %d iterations, E=%.12g, converged=%s", it, e, converged)
    if not converged:
        raise ConvergenceFailure(f"no convergence after {max_iter} iterations", partial=result)
    return result


def characterization_residual(omega, psi, mu, grid, lam):
    """Area of cells breaking the patch structure away from the level ``mu``.

    A cell violates it when ``psi > mu`` but ``omega != lam``, or ``psi < mu``
    but ``omega != 0``; cells inside the numerical tie band are exempt.
    """
    omega = grid.check_field(omega, "omega")
    psi = grid.check_field(psi, "psi")
    m = grid.mask
    tie = _tie_width(psi[m]) if m.any() else 0.0
    atol = TIE_BAND * lam
    hi = (psi > mu + tie) & (np.abs(omega - lam) > atol)
    lo = (psi < mu - tie) & (np.abs(omega) > atol)
    return measure(grid, (hi | lo) & m)


def patch_defect(omega, grid, lam):
    """Area of interior cells whose value is neither 0 nor ``lam``."""
    w = grid.check_field(omega, "omega")
    atol = TIE_BAND * lam
    bad = (np.abs(w) > atol) & (np.abs(w - lam) > atol)
    return measure(grid, bad & grid.mask)


# ---------------------------------------------------------------------------
# steadiness

def _bump(s):
    inside = np.abs(s) < 1
    safe = np.where(inside, s, 0.0)
    q = 1.0 - safe * safe
    b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    db = np.where(inside, b * (-2.0 * safe / (q * q)), 0.0)
    return b, db


@dataclass(frozen=True)
class BumpTest:
    """Tensor-product bump of half-width ``width`` centred at ``center``."""

    center: tuple
    width: float

    def gradient(self, X, Y):
        sx = (X - self.center[0]) / self.width
        sy = (Y - self.center[1]) / self.width
        bx, dbx = _bump(sx)
        by, dby = _bump(sy)
        return dbx * by / self.width, bx * dby / self.width


def _square_inside(domain, cx, cy, w, samples=17):
    t = np.linspace(-w, w, samples)
    X, Y = np.meshgrid(cx + t, cy + t, indexing="ij")
    if not domain.contains(X, Y).all():
        return False
    if domain.kind == "annulus":
        # nearest point of the square to the hole centre
        px = np.clip(domain.center[0], cx - w, cx + w)
        py = np.clip(domain.center[1], cy - w, cy + w)
        if np.hypot(px - domain.center[0], py - domain.center[1]) <= domain.inner:
            return False
    return True


def default_test_set(grid, widths=(0.25, 0.4), spacing=0.5):
    """Bumps on a coarse lattice whose supports sit strictly inside the domain.

    Widths and lattice spacing are fractions of the domain's larger half-extent.
    """
    dom = grid.domain
    scale = max(dom.extent)
    tests = []
    for frac in widths:
        w = frac * scale
        step = spacing * w
        hx, hy = dom.extent
        nxs = int(np.floor(hx / step))
        nys = int(np.floor(hy / step))
        for a in range(-nxs, nxs + 1):
            for b in range(-nys, nys + 1):
                cx = dom.center[0] + a * step
                cy = dom.center[1] + b * step
                if _square_inside(dom, cx, cy, w * (1 + 1e-9)):
                    tests.append(BumpTest((cx, cy), w))
    return tests


def steadiness_residual(omega, psi, grid, test_set=None):
    """Largest normalised ``|int omega (d1 xi d2 psi - d2 xi d1 psi)|`` over the test set.

    Each test contributes ``|sum omega v . grad xi dA| / sum |grad xi| dA``.
    Test items are :class:`BumpTest` instances or callables ``f(X, Y)``
    returning the two gradient components.
    """
    if test_set is None:
        test_set = default_test_set(grid)
    if len(test_set) == 0:
        raise InvalidArgument("steadiness test set is empty")
    omega = grid.check_field(omega, "omega")
    v1, v2 = velocity(grid, psi)
    X, Y = grid.centers()
    m = grid.mask
    worst = 0.0
    for test in test_set:
        gx, gy = test.gradient(X, Y) if hasattr(test, "gradient") else test(X, Y)
        gx = np.broadcast_to(gx, grid.shape)
        gy = np.broadcast_to(gy, grid.shape)
        norm = np.hypot(gx, gy)[m].sum()
        if norm == 0:
            continue
        val = abs(np.sum((omega * (v1 * gx + v2 * gy))[m])) / norm
        worst = max(worst, float(val))
    return worst
