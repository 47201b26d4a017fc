"""Vectorized numpy versions of the batch kernels.

Same geometry encoding and surface ids as :mod:`motiondb.kernels`; every
trial in a batch advances one event per sweep. Used when numba is disabled
and as a cross-check for the JIT path.
"""

import numpy as np

from .kernels import EPS_EVENT, N_WALLS, RECTANGLE, _JOIN_SLACK


def next_event(pos, vel, kind, g0, g1, obs, exclude):
    """Vectorized :func:`motiondb.kernels.next_event` over rows of pos/vel."""
    n = pos.shape[0]
    px, py = pos[:, 0], pos[:, 1]
    vx, vy = vel[:, 0], vel[:, 1]
    cand = np.full((n, N_WALLS + obs.shape[0]), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == RECTANGLE:
            cand[:, 0] = np.where((vx < 0) & (exclude != 0), np.maximum(-px / vx, 0.0), np.inf)
            cand[:, 1] = np.where((vx > 0) & (exclude != 1), np.maximum((g0 - px) / vx, 0.0), np.inf)
            cand[:, 2] = np.where((vy < 0) & (exclude != 2), np.maximum(-py / vy, 0.0), np.inf)
            cand[:, 3] = np.where((vy > 0) & (exclude != 3), np.maximum((g1 - py) / vy, 0.0), np.inf)
        else:
            length, rho = g0, g1
            x_lo, x_hi = rho, rho + length
            t_top = np.maximum((2.0 * rho - py) / vy, 0.0)
            t_bot = np.maximum(-py / vy, 0.0)
            x_top = px + vx * t_top
            x_bot = px + vx * t_bot
            on_top = (x_top >= x_lo - _JOIN_SLACK) & (x_top <= x_hi + _JOIN_SLACK)
            on_bot = (x_bot >= x_lo - _JOIN_SLACK) & (x_bot <= x_hi + _JOIN_SLACK)
            cand[:, 3] = np.where((vy > 0) & (exclude != 3) & on_top, t_top, np.inf)
            cand[:, 2] = np.where((vy < 0) & (exclude != 2) & on_bot, t_bot, np.inf)
            a = vx * vx + vy * vy
            for side, cx in ((0, x_lo), (1, x_hi)):
                dx = px - cx
                dy = py - rho
                b = dx * vx + dy * vy
                c = dx * dx + dy * dy - rho * rho
                disc = b * b - a * c
                s = np.sqrt(np.maximum(disc, 0.0))
                t = np.where(b <= 0.0, (-b + s) / a, c / (-b - s))
                t = np.maximum(t, 0.0)
                xh = px + vx * t
                ok = disc >= 0.0
                ok &= ~((exclude == side) & (t <= EPS_EVENT))
                ok &= (xh <= x_lo + _JOIN_SLACK) if side == 0 else (xh >= x_hi - _JOIN_SLACK)
                cand[:, side] = np.where(ok, t, np.inf)
        if obs.shape[0]:
            a = (vx * vx + vy * vy)[:, None]
            dx = px[:, None] - obs[None, :, 0]
            dy = py[:, None] - obs[None, :, 1]
            b = dx * vx[:, None] + dy * vy[:, None]
            c = dx * dx + dy * dy - (obs[None, :, 2] ** 2)
            disc = b * b - a * c
            t = c / (-b + np.sqrt(np.maximum(disc, 0.0)))
            t = np.maximum(t, 0.0)
            ok = (b < 0.0) & (disc > 0.0)
            ok &= exclude[:, None] != (N_WALLS + np.arange(obs.shape[0]))[None, :]
            cand[:, N_WALLS:] = np.where(ok, t, np.inf)
    surf = np.argmin(cand, axis=1)
    best = cand[np.arange(n), surf]
    surf = np.where(np.isfinite(best), surf, -1)
    return best, surf


def surface_normal(pos, surf, kind, g0, g1, obs):
    n = pos.shape[0]
    normal = np.zeros((n, 2))
    is_obs = surf >= N_WALLS
    if is_obs.any():
        k = surf[is_obs] - N_WALLS
        normal[is_obs] = pos[is_obs] - obs[k, :2]
    if kind == RECTANGLE:
        normal[(surf == 0) | (surf == 1), 0] = 1.0
        normal[(surf == 2) | (surf == 3), 1] = 1.0
    else:
        normal[(surf == 2) | (surf == 3), 1] = 1.0
        for side, cx in ((0, g1), (1, g1 + g0)):
            m = surf == side
            normal[m, 0] = pos[m, 0] - cx
            normal[m, 1] = pos[m, 1] - g1
    return normal / np.linalg.norm(normal, axis=1, keepdims=True)


def reflect(vel, normal):
    d = 2.0 * np.sum(vel * normal, axis=1, keepdims=True)
    return vel - d * normal


def first_hits(kind, g0, g1, obs, targets, pos, vel, t_cap):
    n = pos.shape[0]
    pos = pos.copy()
    vel = vel.copy()
    times = np.full(n, t_cap, dtype=float)
    censored = np.zeros(n, dtype=bool)
    clock = np.zeros(n)
    exclude = np.full(n, -1, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    target = np.where(targets >= 0, N_WALLS + targets, -2)
    active = np.arange(n)
    n_events = 0
    while active.size:
        dt, surf = next_event(pos[active], vel[active], kind, g0, g1, obs, exclude[active])
        lost = (surf < 0) | (clock[active] + dt > t_cap)
        censored[active[lost]] = True
        keep = ~lost
        active, dt, surf = active[keep], dt[keep], surf[keep]
        n_events += active.size
        clock[active] += dt
        pos[active] += vel[active] * dt[:, None]
        hit = surf == target[active]
        times[active[hit]] = clock[active[hit]]
        active, surf = active[~hit], surf[~hit]
        normal = surface_normal(pos[active], surf, kind, g0, g1, obs)
        vel[active] = reflect(vel[active], normal)
        exclude[active] = surf
    return times, censored, n_events


def free_times(kind, g0, g1, obs, pos, vel, n_hits, t_cap):
    """Inter-hit intervals for several independent chains at once.

    Returns a list with one array per chain.
    """
    n = pos.shape[0]
    pos = pos.copy()
    vel = vel.copy()
    out = np.empty((n, n_hits))
    count = np.zeros(n, dtype=np.int64)
    clock = np.zeros(n)
    last_hit = np.full(n, -1.0)
    exclude = np.full(n, -1, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        dt, surf = next_event(pos[active], vel[active], kind, g0, g1, obs, exclude[active])
        keep = (surf >= 0) & (clock[active] + dt <= t_cap)
        active, dt, surf = active[keep], dt[keep], surf[keep]
        clock[active] += dt
        pos[active] += vel[active] * dt[:, None]
        hit = surf >= N_WALLS
        rec = active[hit & (last_hit[active] >= 0.0)]
        out[rec, count[rec]] = clock[rec] - last_hit[rec]
        count[rec] += 1
        last_hit[active[hit]] = clock[active[hit]]
        normal = surface_normal(pos[active], surf, kind, g0, g1, obs)
        vel[active] = reflect(vel[active], normal)
        exclude[active] = surf
        active = active[count[active] < n_hits]
    return [out[i, : count[i]] for i in range(n)]
