"""The numba kernels and the vectorized numpy fallback must agree."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from motiondb import _accel, batch, kernels, kernels_numpy
from motiondb.geometry import (BunimovichStadium, Rectangle, SinaiSquare, place_obstacles,
                               sample_free_states)

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba disabled")

SHAPES = [Rectangle(), BunimovichStadium(), SinaiSquare(1.0, 0.1)]


@needs_numba
@pytest.mark.parametrize("shape", SHAPES, ids=["square", "stadium", "sinai"])
def test_first_hits_agree(shape):
    rng = np.random.default_rng(21)
    arena = place_obstacles(shape, 3, 0.05, rng)
    pos, vel = sample_free_states(arena, 2000, rng)
    targets = rng.integers(0, len(arena.obstacles), size=2000)
    a = batch.first_hits(arena, targets, pos, vel, 300.0, backend="numba")
    b = batch.first_hits(arena, targets, pos, vel, 300.0, backend="numpy")
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_allclose(a[0], b[0], rtol=1e-9, atol=1e-9)


@needs_numba
def test_free_times_agree():
    rng = np.random.default_rng(22)
    arena = place_obstacles(BunimovichStadium(), 4, 0.05, rng)
    pos, vel = sample_free_states(arena, 4, rng)
    a = batch.free_times(arena, pos, vel, 300, 1e6, backend="numba")
    b = batch.free_times(arena, pos, vel, 300, 1e6, backend="numpy")
    for x, y in zip(a, b):
        # chaotic divergence limits how long the two float paths stay together
        np.testing.assert_allclose(x[:50], y[:50], rtol=1e-6)
        assert len(x) == len(y) == 300


def test_scalar_and_vector_next_event_agree():
    rng = np.random.default_rng(23)
    for shape in SHAPES:
        arena = place_obstacles(shape, 2, 0.08, rng)
        kind, g0, g1, obs = arena.flat
        pos, vel = sample_free_states(arena, 300, rng)
        excl = np.full(300, -1, dtype=np.int64)
        t_vec, s_vec = kernels_numpy.next_event(pos, vel, kind, g0, g1, obs, excl)
        for i in range(300):
            t, s = kernels.next_event(pos[i, 0], pos[i, 1], vel[i, 0], vel[i, 1], kind, g0, g1, obs, -1)
            assert s == s_vec[i]
            assert t == pytest.approx(t_vec[i], rel=1e-12, abs=1e-15)


def test_env_flag_selects_numpy_path():
    code = (
        "import json, numpy as np\n"
        "from motiondb import _accel, batch\n"
        "from motiondb.geometry import Rectangle, place_obstacles, sample_free_states\n"
        "rng = np.random.default_rng(5)\n"
        "arena = place_obstacles(Rectangle(), 1, 0.05, rng)\n"
        "pos, vel = sample_free_states(arena, 200, rng)\n"
        "t, c, _ = batch.first_hits(arena, np.zeros(200, dtype=np.int64), pos, vel, 500.0)\n"
        "print(json.dumps({'backend': _accel.backend(), 'times': t.tolist()}))\n"
    )
    runs = {}
    for flag in ("1", "0"):
        env = {**os.environ, "MOTIONDB_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        runs[flag] = json.loads(out.stdout)
    assert runs["1"]["backend"] == "numpy"
    if _accel.HAVE_NUMBA:
        assert runs["0"]["backend"] == "numba"
    np.testing.assert_allclose(runs["1"]["times"], runs["0"]["times"], rtol=1e-9)
