import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexpatch.dynamics import (
    EvolutionParams,
    EvolutionState,
    advect_step,
    cell_speeds,
    diagnostics,
    distribution_profile,
    evolve,
    face_velocities,
    initial_state,
    profile_drift,
    relative_drift,
    sample_times,
    stable_dt,
    turnover_time,
)
from vortexpatch.elliptic import solve_stream
from vortexpatch.errors import BlowUp, InvalidArgument
from vortexpatch.geometry import Domain, build_grid, measure
from vortexpatch.maximizer import PatchSpec, seed_patch


def test_params_validation():
    with pytest.raises(InvalidArgument):
        EvolutionParams(cfl=0)
    with pytest.raises(InvalidArgument):
        EvolutionParams(cfl=1.5)
    with pytest.raises(InvalidArgument):
        EvolutionParams(limiter="none")
    with pytest.raises(InvalidArgument):
        EvolutionParams(dt_max=0)


def test_stable_dt():
    z = np.zeros((4, 4))
    assert stable_dt(z, z, 0.1) == 0.1
    assert stable_dt(z, z, 0.1, dt_max=0.05) == 0.05
    v1 = np.full((4, 4), 2.0)
    v2 = np.full((4, 4), -1.0)
    assert stable_dt(v1, v2, 0.1, cfl=0.3) == pytest.approx(0.3 * 0.1 / 3.0)


@given(st.integers(0, 2**32 - 1))
def test_face_velocities_divergence_free(seed):
    g = build_grid(Domain.annulus(0.3, 1.0), 24)
    rng = np.random.default_rng(seed)
    psi = solve_stream(g, np.where(g.mask, rng.random(g.shape), 0.0))
    ux, uy = face_velocities(g, psi)
    div = np.zeros(g.shape)
    div[:-1] += ux
    div[1:] -= ux
    div[:, :-1] += uy
    div[:, 1:] -= uy
    assert np.abs(div).max() <= 1e-12 * max(np.abs(ux).max(), 1.0)
    m = g.mask
    assert not ux[~(m[:-1] & m[1:])].any() and not uy[~(m[:, :-1] & m[:, 1:])].any()


def test_cell_speeds_take_adjacent_maximum():
    ux = np.array([[1.0], [-3.0]])
    uy = np.zeros((3, 0))
    a1, _ = cell_speeds(ux, uy)
    assert a1[:, 0].tolist() == [1.0, 3.0, 3.0]


def test_zero_field_stays_zero(disk32):
    state = initial_state(disk32, disk32.zeros())
    for _ in range(3):
        state = advect_step(state, 0.01, disk32, 1.0)
    assert not state.omega.any()


def test_uniform_field_is_steady(disk32):
    w = np.where(disk32.mask, 1.0, 0.0)
    samples, final = evolve(disk32, w, 0.5, 1.0)
    assert np.abs(final.omega - w).max() <= 1e-12


def test_blowup_raised_with_state(disk32, disk_spec):
    w = seed_patch(disk_spec, disk32, (0.3, 0.0))
    with pytest.raises(BlowUp) as info:
        evolve(disk32, w, 1.0, disk_spec.lam, EvolutionParams(blowup_factor=0.5))
    assert isinstance(info.value.state, EvolutionState)
    assert len(info.value.samples) == 1


def test_mass_conserved_and_bounds_kept(disk32, disk_spec):
    w = seed_patch(disk_spec, disk32, (0.25, -0.1))
    samples, _ = evolve(disk32, w, 2.0, disk_spec.lam, interval=0.25)
    assert relative_drift([s.mass for s in samples]) <= 1e-9
    assert min(s.min_w for s in samples) >= -1e-6 * disk_spec.lam
    assert max(s.max_w for s in samples) <= disk_spec.lam * (1 + 1e-6)


def test_sample_times_hit_exactly(disk32, disk_spec):
    w = seed_patch(disk_spec, disk32, (0.0, 0.0))
    samples, final = evolve(disk32, w, 0.7, disk_spec.lam, interval=0.3)
    assert [s.t for s in samples] == [0.0, 0.3, 0.6, 0.7]
    assert final.t == 0.7
    samples, _ = evolve(disk32, w, 0.0, disk_spec.lam)
    assert len(samples) == 1 and samples[0].t == 0.0


def test_sample_time_grid():
    assert sample_times(0, 0.1) == [0.0]
    assert sample_times(1.0, None) == [0.0, 1.0]
    t = sample_times(1.0, 0.1)
    assert len(t) == 11 and t[-1] == 1.0 and np.all(np.diff(t) > 0)
    with pytest.raises(InvalidArgument):
        sample_times(-1, 0.1)


def test_radial_field_keeps_centre_of_vorticity():
    shifts = []
    for res in (32, 64):
        g = build_grid(Domain.disk(), res)
        X, Y = g.centers()
        w = np.where(g.mask, np.exp(-10 * (X**2 + Y**2)), 0.0)
        _, final = evolve(g, w, 1.0, 1.0)
        cx = (final.omega * X).sum() / final.omega.sum()
        cy = (final.omega * Y).sum() / final.omega.sum()
        shift = np.hypot(cx, cy)
        assert shift <= g.h
        shifts.append(shift)


def test_steady_patch_change_vanishes_under_refinement(disk_spec):
    from vortexpatch.maximizer import solve_maximizer

    rates = []
    for res in (32, 64):
        g = build_grid(Domain.disk(), res)
        r = solve_maximizer(g, disk_spec)
        _, final = evolve(g, r.omega, 1.0, disk_spec.lam)
        rates.append(measure(g, np.abs(final.omega - r.omega)))
    assert rates[1] < rates[0]


def test_diagnostics_examples():
    g = build_grid(Domain.disk(), 32)
    zero = diagnostics(g, initial_state(g, g.zeros()), 1.0)
    assert zero.energy == 0 and zero.mass == 0 and zero.l1 == 0 and zero.l2 == 0 and zero.l4 == 0
    assert not zero.profile.any()
    lam = 3.0
    X, Y = g.centers()
    A = g.mask & (np.hypot(X, Y) < 0.4)
    area = measure(g, A)
    d = diagnostics(g, initial_state(g, np.where(A, lam, 0.0)), lam)
    assert d.mass == pytest.approx(lam * area, rel=1e-12)
    assert d.l1 == pytest.approx(d.mass, rel=1e-12)
    assert d.l2 == pytest.approx(np.sqrt(lam * d.mass), rel=1e-12)
    assert np.allclose(d.profile[:-1], area) and d.profile[-1] == 0


@given(st.integers(0, 2**32 - 1))
def test_profile_non_increasing(seed):
    g = build_grid(Domain.disk(), 24)
    w = np.where(g.mask, np.random.default_rng(seed).random(g.shape) * 2.0, 0.0)
    p = distribution_profile(g, w, 2.0)
    assert len(p) == 65 and np.all(np.diff(p) <= 0)
    assert p[0] <= g.interior_area


def test_turnover_time_disk(disk_max64, disk64, disk_spec):
    t = turnover_time(disk64, disk_max64.omega, disk_max64.psi, disk_spec.lam)
    # max speed of the centred patch is mass / (2 pi a) at r = a = 1/2
    assert t == pytest.approx((np.pi / 4) / ((1 / np.pi) * 1.0), rel=0.05)
    with pytest.raises(InvalidArgument):
        turnover_time(disk64, disk64.zeros(), disk64.zeros(), 1.0)


def test_drift_helpers():
    assert relative_drift([2.0, 2.1, 1.8]) == pytest.approx(0.1)
    prof = [np.array([3.0, 2.0, 1.0]), np.array([3.5, 2.25, 1.0])]
    assert profile_drift(prof) == 0.5
    assert profile_drift(prof, interior_only=True) == 0.25


def test_energy_drift_shrinks(disk_spec):
    from vortexpatch.maximizer import solve_maximizer

    drifts = []
    for res in (32, 64):
        g = build_grid(Domain.disk(), res)
        r = solve_maximizer(g, disk_spec)
        s, _ = evolve(g, r.omega, 2.0, disk_spec.lam, interval=0.5)
        drifts.append(relative_drift([x.energy for x in s]))
    assert drifts[1] < drifts[0]


def test_patch_spec_roundtrip_through_state(disk32):
    spec = PatchSpec(2.0, 0.5)
    w = seed_patch(spec, disk32, (0.1, 0.1))
    s = initial_state(disk32, w)
    assert np.allclose(s.psi, solve_stream(disk32, w))
