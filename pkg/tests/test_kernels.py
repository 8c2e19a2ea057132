import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vortexpatch import _kernels_py, kernels
from vortexpatch.dynamics import face_velocities
from vortexpatch.elliptic import solve_stream
from vortexpatch.geometry import Domain, build_grid

try:
    from vortexpatch import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def random_case(seed, nx, ny):
    rng = np.random.default_rng(seed)
    mask = rng.random((nx, ny)) < 0.8
    mask[[0, -1], :] = False
    mask[:, [0, -1]] = False
    w = np.where(mask, rng.standard_normal((nx, ny)), 0.0)
    ux = rng.standard_normal((nx - 1, ny))
    uy = rng.standard_normal((nx, ny - 1))
    ux[~(mask[:-1] & mask[1:])] = 0.0
    uy[~(mask[:, :-1] & mask[:, 1:])] = 0.0
    return w, mask.astype(np.uint8), ux, uy


@needs_compiled
@given(st.integers(0, 2**32 - 1), st.integers(3, 30), st.integers(3, 30), st.sampled_from(sorted(kernels.LIMITERS)))
def test_compiled_matches_numpy_bitwise(seed, nx, ny, limiter):
    w, mask, ux, uy = random_case(seed, nx, ny)
    code = kernels.LIMITERS[limiter]
    ref = _kernels_py.advection_rhs(w, mask.astype(bool), ux, uy, 0.1, code)
    got = compiled.advection_rhs(w, mask, ux, uy, 0.1, code)
    np.testing.assert_array_equal(got, ref)


@given(st.integers(0, 2**32 - 1), st.sampled_from(sorted(kernels.LIMITERS)))
def test_flux_form_conserves_total(seed, limiter):
    w, mask, ux, uy = random_case(seed, 20, 17)
    rhs = kernels.advection_rhs(w, mask, ux, uy, 0.05, kernels.LIMITERS[limiter])
    assert abs(rhs.sum()) <= 1e-10 * np.abs(rhs).sum()
    # exterior cells never change
    assert not rhs[mask == 0].any()


def test_zero_velocity_is_identity():
    w, mask, ux, uy = random_case(1, 12, 12)
    rhs = kernels.advection_rhs(w, mask, np.zeros_like(ux), np.zeros_like(uy), 0.1, 2)
    assert not rhs.any()


def test_constant_field_in_divergence_free_flow():
    g = build_grid(Domain.disk(), 32)
    X, Y = g.centers()
    psi = solve_stream(g, np.where(g.mask, np.exp(-4 * ((X - 0.2) ** 2 + Y**2)), 0.0))
    ux, uy = face_velocities(g, psi)
    w = np.where(g.mask, 2.5, 0.0)
    rhs = kernels.advection_rhs(w, g.mask.astype(np.uint8), ux, uy, g.h, 2)
    assert np.abs(rhs).max() <= 1e-12


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if compiled is not None:
        assert kernels.BACKEND == "cython"


def test_pure_fallback_selected_by_environment():
    env = dict(os.environ, VORTEXPATCH_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "from vortexpatch import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
