"""Backend dispatch for the many-trajectory kernels."""

import numpy as np

from . import _accel, kernels, kernels_numpy


def first_hits(arena, targets, pos, vel, t_cap, backend=None):
    """(times, censored, n_events) for trials targeting ``targets[i]``."""
    backend = backend or _accel.backend()
    kind, g0, g1, obs = arena.flat
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    pos = np.ascontiguousarray(pos, dtype=float)
    vel = np.ascontiguousarray(vel, dtype=float)
    if backend == "numba":
        return kernels.first_hits(kind, g0, g1, obs, targets, pos, vel, float(t_cap))
    return kernels_numpy.first_hits(kind, g0, g1, obs, targets, pos, vel, float(t_cap))


def free_times(arena, pos, vel, n_hits, t_cap, backend=None):
    """One array of inter-obstacle-hit intervals per starting state."""
    backend = backend or _accel.backend()
    kind, g0, g1, obs = arena.flat
    if backend == "numba":
        return [kernels.free_times(kind, g0, g1, obs, float(p[0]), float(p[1]), float(v[0]),
                                   float(v[1]), int(n_hits), float(t_cap))
                for p, v in zip(pos, vel)]
    return kernels_numpy.free_times(kind, g0, g1, obs, np.asarray(pos, float), np.asarray(vel, float),
                                    int(n_hits), float(t_cap))
