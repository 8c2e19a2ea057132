"""Time the compiled transport kernel against the numpy reference.

    python benchmarks/bench_kernels.py [--resolutions 64 128 256 512] [--repeat 20]

Also times one full evolution step on each backend, which includes the
elliptic solve both backends share.
"""

import argparse
import timeit

import numpy as np

from vortexpatch import _kernels_py, kernels
from vortexpatch.dynamics import EvolutionState, advect_step, face_velocities
from vortexpatch.elliptic import solve_stream
from vortexpatch.geometry import Domain, build_grid
from vortexpatch.maximizer import PatchSpec, seed_patch


def setup(res):
    g = build_grid(Domain.disk(), res)
    spec = PatchSpec(4 / np.pi, 1.0)
    w = seed_patch(spec, g, (0.2, -0.1))
    psi = solve_stream(g, w)
    ux, uy = face_velocities(g, psi)
    mask = np.ascontiguousarray(g.mask, dtype=np.uint8)
    return g, spec, w, psi, ux, uy, mask


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolutions", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    compiled = kernels.advection_rhs if kernels.BACKEND == "cython" else None
    if compiled is None:
        print("compiled extension not available; timing the numpy kernel only")
    limiter = kernels.LIMITERS["superbee"]
    print(f"{'res':>5} {'numpy rhs ms':>13} {'cython rhs ms':>14} {'speedup':>8} {'step ms':>9} {'max |diff|':>11}")
    for res in args.resolutions:
        g, spec, w, psi, ux, uy, mask = setup(res)
        t_py = best_of(lambda: _kernels_py.advection_rhs(w, mask, ux, uy, g.h, limiter), args.repeat)
        row = f"{res:>5} {1e3 * t_py:>13.3f}"
        if compiled is not None:
            t_c = best_of(lambda: compiled(w, mask, ux, uy, g.h, limiter), args.repeat)
            diff = float(np.abs(compiled(w, mask, ux, uy, g.h, limiter)
                                - _kernels_py.advection_rhs(w, mask, ux, uy, g.h, limiter)).max())
            row += f" {1e3 * t_c:>14.3f} {t_py / t_c:>8.1f}"
        else:
            diff = 0.0
            row += f" {'-':>14} {'-':>8}"
        state = EvolutionState(0.0, w, psi, 0.0)
        t_step = best_of(lambda: advect_step(state, 0.1 * g.h, g, spec.lam), max(3, args.repeat // 4))
        print(row + f" {1e3 * t_step:>9.3f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
