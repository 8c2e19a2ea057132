"""Orbital-stability experiments: perturb a maximizer inside K, evolve, and track
the L^p distance to a numerical model of the maximizer set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dynamics import EvolutionParams, evolve
from .errors import InfeasiblePerturbation, InvalidArgument
from .geometry import interface_cells, measure
from .maximizer import PatchSpec, patch_from_stream, solve_maximizer

log = logging.getLogger(__name__)

PERTURBATION_KINDS = ("translate", "boundary-noise", "amplitude-dent")


def lp_distance(w1, w2, p, grid):
    """``(sum |w1 - w2|^p dA)^(1/p)`` over interior cells."""
    a = np.asarray(w1, dtype=float)
    b = np.asarray(w2, dtype=float)
    if a.shape != grid.shape or b.shape != grid.shape:
        raise InvalidArgument("fields do not live on this grid")
    if p < 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    d = np.abs(a - b)[grid.mask]
    if p == 1:
        return float(d.sum() * grid.cell_area)
    return float((np.sum(d**p) * grid.cell_area) ** (1.0 / p))


def transform_patch(grid, spec, psi, theta=0.0, shift=(0.0, 0.0), center=None):
    """Patch obtained by rotating/shifting a stream function and re-thresholding.

    ``psi`` is sampled at ``R(-theta)(x - shift - c) + c`` by cubic spline
    interpolation, then :func:`threshold_level` restores the exact mass, so
    the result is always admissible.
    """
    if center is None:
        center = grid.domain.center
    X, Y = grid.centers()
    c, s = np.cos(theta), np.sin(theta)
    dx = X - shift[0] - center[0]
    dy = Y - shift[1] - center[1]
    sx = c * dx + s * dy + center[0]
    sy = -s * dx + c * dy + center[1]
    fi = (sx - grid.origin[0]) / grid.h - 0.5
    fj = (sy - grid.origin[1]) / grid.h - 0.5
    moved = ndimage.map_coordinates(psi, [fi, fj], order=3, mode="constant", cval=0.0)
    moved = np.where(grid.mask, moved, 0.0)
    omega, _ = patch_from_stream(moved, spec, grid)
    return omega


@dataclass
class MaximizerSetModel:
    """Numerical stand-in for the maximizer set.

    A single representative, or (for rotation-invariant domains) the orbit
    of one maximizer sampled at ``angles``.
    """

    grid: object = field(repr=False)
    spec: PatchSpec
    base_omega: np.ndarray = field(repr=False)
    base_psi: np.ndarray = field(repr=False)
    representatives: list = field(repr=False)
    angles: np.ndarray | None = None
    refine: int = 8
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def is_orbit(self):
        return self.angles is not None

    def rotated(self, theta):
        theta = float(np.mod(theta, 2 * np.pi))
        key = round(theta, 14)
        if key not in self._cache:
            if key in (0.0, round(2 * np.pi, 14)):
                self._cache[key] = self.base_omega
            else:
                self._cache[key] = transform_patch(self.grid, self.spec, self.base_psi, theta)
        return self._cache[key]

    def energies(self):
        from .elliptic import energy, solve_stream

        return [energy(self.grid, w, solve_stream(self.grid, w)) for w in self.representatives]

    def gap_bound(self, p=1):
        """Bound on the distance from any orbit element to the nearest sample.

        Rotating the patch by half the sample spacing sweeps at most
        ``perimeter * max_radius * dtheta / 2`` of area on each side.
        """
        if not self.is_orbit:
            return 0.0
        g = self.grid
        support = self.base_omega > 0
        edges = interface_cells(g, support) & support
        perimeter = edges.sum() * g.h * np.sqrt(2)
        X, Y = g.centers()
        cx, cy = g.domain.center
        rmax = float(np.hypot(X - cx, Y - cy)[support].max()) + g.h
        dtheta = 2 * np.pi / len(self.angles)
        swept = perimeter * rmax * dtheta / 2
        return float(self.spec.lam * (2 * swept) ** (1.0 / p))


def single_model(grid, spec, omega, psi):
    return MaximizerSetModel(grid, spec, omega, psi, [omega])


def orbit_model(grid, spec, omega, psi, n_theta=64, refine=8):
    """Rotation orbit of one maximizer about the domain centre."""
    if n_theta < 1:
        raise InvalidArgument("n_theta must be positive")
    angles = 2 * np.pi * np.arange(n_theta) / n_theta
    model = MaximizerSetModel(grid, spec, omega, psi, [], angles=angles, refine=refine)
    model.representatives = [model.rotated(a) for a in angles]
    return model


def distance_to_set(omega, model, p, grid):
    """Smallest L^p distance to the model, refined in angle for orbit models."""
    if not model.representatives:
        raise InvalidArgument("maximizer-set model is empty")
    d = [lp_distance(omega, r, p, grid) for r in model.representatives]
    best = int(np.argmin(d))
    out = d[best]
    if model.is_orbit and model.refine > 0 and len(model.angles) > 1:
        step = 2 * np.pi / len(model.angles)
        center = model.angles[best]
        for k in range(1, model.refine):
            off = step * k / model.refine
            for theta in (center - off, center + off):
                out = min(out, lp_distance(omega, model.rotated(theta), p, grid))
    return out


# ---------------------------------------------------------------------------
# perturbations

@dataclass(frozen=True)
class ExperimentConfig:
    delta: float
    kind: str = "translate"
    p: int = 2
    T: float = 1.0
    seed: int = 0
    eps: float | None = None  # L1 verdict tolerance, defaults to 4 * delta
    interval: float | None = None

    def __post_init__(self):
        if self.delta < 0 or not np.isfinite(self.delta):
            raise InvalidArgument("delta must be non-negative")
        if self.kind not in PERTURBATION_KINDS:
            raise InvalidArgument(f"unknown perturbation kind {self.kind!r}")
        if int(self.p) != self.p or self.p < 1:
            raise InvalidArgument("p must be an integer >= 1")
        if self.T < 0:
            raise InvalidArgument("T must be non-negative")

    @property
    def tolerance(self):
        return 4 * self.delta if self.eps is None else self.eps


def tolerance_for_p(eps_l1, lam, p):
    """L^p tolerance matching an L1 one for differences of height-``lam`` patches.

    Such a difference takes values in ``{-lam, 0, lam}``, so its L^p norm is
    ``lam^(1 - 1/p) * (L1 norm)^(1/p)``.
    """
    return float(lam ** (1.0 - 1.0 / p) * eps_l1 ** (1.0 / p))


def _projected_width(grid, support, direction):
    X, Y = grid.centers()
    nx, ny = -direction[1], direction[0]
    proj = (X * nx + Y * ny)[support]
    return float(proj.max() - proj.min()) + grid.h


def _check_distance(result, omega_star, delta, grid):
    d = lp_distance(result, omega_star, 1, grid)
    if not (0.5 * delta <= d <= 2 * delta):
        raise InfeasiblePerturbation(
            f"could not realise an L1 perturbation of {delta:g} (got {d:g})"
        )
    return result


def perturb(omega_star, config, spec, grid, psi_star=None):
    """Admissible field at L1 distance roughly ``config.delta`` from ``omega_star``.

    ``translate`` shifts the patch along a seed-chosen direction;
    ``boundary-noise`` roughens the interface while staying a patch;
    ``amplitude-dent`` lowers the patch height and widens its support, which
    leaves the patch class but stays in K.
    """
    from .elliptic import solve_stream

    delta = float(config.delta)
    omega_star = grid.check_field(omega_star, "omega_star")
    if delta == 0.0:
        return omega_star.copy()
    if psi_star is None:
        psi_star = solve_stream(grid, omega_star)
    rng = np.random.default_rng(config.seed)
    support = omega_star > 0

    if config.kind == "amplitude-dent":
        s = delta / (2 * spec.mass)
        if s >= 1 or spec.lam * (1 - s) * grid.interior_area < spec.mass:
            raise InfeasiblePerturbation(f"dent of size {delta:g} cannot stay in K")
        lowered = PatchSpec(spec.lam * (1 - s), spec.mass)
        result, _ = patch_from_stream(psi_star, lowered, grid)
        return _check_distance(result, omega_star, delta, grid)

    if config.kind == "translate":
        phi = rng.uniform(0, 2 * np.pi)
        direction = np.array([np.cos(phi), np.sin(phi)])
        width = _projected_width(grid, support, direction)
        amount = delta / (2 * spec.lam * width)
        result = omega_star
        for _ in range(4):
            result = transform_patch(grid, spec, psi_star, shift=amount * direction)
            got = lp_distance(result, omega_star, 1, grid)
            if got == 0 or abs(got - delta) <= 0.05 * delta:
                break
            amount *= delta / got
        return _check_distance(result, omega_star, delta, grid)

    # boundary-noise: white noise in psi, scaled to a fraction of the interface slope
    from .elliptic import velocity

    v1, v2 = velocity(grid, psi_star)
    slope = float(np.hypot(v1, v2)[interface_cells(grid, support)].mean())
    noise = rng.standard_normal(grid.shape) * slope * grid.h
    lo, hi = 0.0, 1.0
    # grow the bracket until the distance overshoots delta
    for _ in range(30):
        if lp_distance(patch_from_stream(psi_star + hi * noise, spec, grid)[0], omega_star, 1, grid) >= delta:
            break
        lo, hi = hi, 2 * hi
    else:
        raise InfeasiblePerturbation(f"noise cannot reach an L1 distance of {delta:g}")
    result = omega_star
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        result = patch_from_stream(psi_star + mid * noise, spec, grid)[0]
        got = lp_distance(result, omega_star, 1, grid)
        if abs(got - delta) <= 0.05 * delta:
            break
        if got < delta:
            lo = mid
        else:
            hi = mid
    return _check_distance(result, omega_star, delta, grid)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentRecord:
    config: ExperimentConfig
    times: list
    dist: dict  # p -> series
    energy: list
    mass: list
    profile_drift: list
    baseline: dict  # p -> series of the unperturbed run
    summary: dict = field(default_factory=dict)
    partial: bool = False

    def excess(self, p):
        return [max(0.0, a - b) for a, b in zip(self.dist[p], self.baseline[p])]


@dataclass
class _Track:
    times: list = field(default_factory=list)
    dist: dict = field(default_factory=dict)
    energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    profile: list = field(default_factory=list)


def _tracked_run(grid, spec, omega0, T, model, params, interval, ps):
    track = _Track(dist={p: [] for p in ps})

    def on_sample(state):
        track.times.append(state.t)
        for p in ps:
            track.dist[p].append(distance_to_set(state.omega, model, p, grid))

    samples, _ = evolve(grid, omega0, T, spec.lam, params, interval=interval, on_sample=on_sample)
    track.energy = [s.energy for s in samples]
    track.mass = [s.mass for s in samples]
    track.profile = [s.profile for s in samples]
    return track


def baseline_run(grid, spec, model, T, params=EvolutionParams(), interval=None, ps=(1, 2)):
    """Unperturbed evolution of the model's base maximizer, for drift subtraction."""
    return _tracked_run(grid, spec, model.base_omega, T, model, params, interval, ps)


def run_orbital_experiment(config, model, grid, spec, params=EvolutionParams(), baseline=None, ps=(1, 2)):
    """Perturb, evolve to ``config.T`` and compare the distance series to the baseline drift."""
    ps = tuple(sorted(set(ps) | {config.p}))
    if baseline is None:
        baseline = baseline_run(grid, spec, model, config.T, params, config.interval, ps)
    omega0 = perturb(model.base_omega, config, spec, grid, model.base_psi)
    if config.delta == 0:
        run = baseline
    else:
        run = _tracked_run(grid, spec, omega0, config.T, model, params, config.interval, ps)
    prof = np.asarray(run.profile)
    drift = np.abs(prof - prof[0])[:, 1:-1].max(axis=1).tolist() if len(prof) else []
    rec = ExperimentRecord(
        config=config,
        times=run.times,
        dist=run.dist,
        energy=run.energy,
        mass=run.mass,
        profile_drift=drift,
        baseline={p: baseline.dist[p] for p in ps},
    )
    p = config.p
    e0 = rec.energy[0]
    rec.summary = {
        "delta": config.delta,
        "kind": config.kind,
        "seed": config.seed,
        "p": p,
        "initial_dist": rec.dist[p][0],
        "sup_dist": max(rec.dist[p]),
        "sup_dist_p1": max(rec.dist[1]) if 1 in rec.dist else float("nan"),
        "sup_dist_p2": max(rec.dist[2]) if 2 in rec.dist else float("nan"),
        "sup_baseline": max(rec.baseline[p]),
        "sup_excess": max(rec.excess(p)),
        "energy_drift": float(max(abs(e - e0) for e in rec.energy) / e0) if e0 else 0.0,
        "tolerance": tolerance_for_p(config.tolerance, spec.lam, p),
    }
    rec.summary["verdict"] = "pass" if rec.summary["sup_excess"] <= rec.summary["tolerance"] else "fail"
    return rec


def run_isolated_experiment(config, omega_lam, grid, spec, psi_lam=None, params=EvolutionParams(), baseline=None):
    """Same protocol, with distances measured to the single maximizer ``omega_lam``."""
    from .elliptic import solve_stream

    if psi_lam is None:
        psi_lam = solve_stream(grid, omega_lam)
    model = single_model(grid, spec, omega_lam, psi_lam)
    return run_orbital_experiment(config, model, grid, spec, params, baseline)


def annulus_maximizers(grid, spec, radius=None, n=4, tol=1e-8, max_iter=500):
    """Maximizers grown from ``n`` seed patches spaced evenly around an annulus."""
    from .maximizer import seed_patch

    dom = grid.domain
    if radius is None:
        radius = 0.5 * (dom.inner + dom.radius)
    out = []
    for k in range(n):
        a = 2 * np.pi * k / n
        c = (dom.center[0] + radius * np.cos(a), dom.center[1] + radius * np.sin(a))
        out.append(solve_maximizer(grid, spec, init=seed_patch(spec, grid, c), tol=tol, max_iter=max_iter))
    return out
