"""Scalar event-driven billiard kernels.

Every function here runs either under numba (default) or as plain Python
when ``MOTIONDB_DISABLE_NUMBA`` is set. Arena geometry is passed flat:

    kind   0 = rectangle [0, g0] x [0, g1]
           1 = stadium, flat length g0, cap radius g1, spanning
               [0, g0 + 2 g1] x [0, 2 g1]
    obs    (P, 3) float64 array of (cx, cy, r)

Surface ids: 0..3 are boundary pieces (rectangle: left, right, bottom, top;
stadium: left arc, right arc, bottom segment, top segment), 4 + k is
obstacle k.
"""

import math

import numpy as np

from ._accel import njit

RECTANGLE = 0
STADIUM = 1
N_WALLS = 4
EPS_EVENT = 1e-12
# hit points this close to a segment/arc junction are accepted on both sides
_JOIN_SLACK = 1e-12


@njit
def next_event(px, py, vx, vy, kind, g0, g1, obs, exclude):
    """Time to the next impact and the surface id, or (inf, -1)."""
    best = math.inf
    surf = -1
    if kind == RECTANGLE:
        if vx > 0.0 and exclude != 1:
            t = max((g0 - px) / vx, 0.0)
            if t < best:
                best, surf = t, 1
        elif vx < 0.0 and exclude != 0:
            t = max(-px / vx, 0.0)
            if t < best:
                best, surf = t, 0
        if vy > 0.0 and exclude != 3:
            t = max((g1 - py) / vy, 0.0)
            if t < best:
                best, surf = t, 3
        elif vy < 0.0 and exclude != 2:
            t = max(-py / vy, 0.0)
            if t < best:
                best, surf = t, 2
    else:
        length = g0
        rho = g1
        x_lo = rho
        x_hi = rho + length
        if vy > 0.0 and exclude != 3:
            t = max((2.0 * rho - py) / vy, 0.0)
            xh = px + vx * t
            if x_lo - _JOIN_SLACK <= xh <= x_hi + _JOIN_SLACK and t < best:
                best, surf = t, 3
        elif vy < 0.0 and exclude != 2:
            t = max(-py / vy, 0.0)
            xh = px + vx * t
            if x_lo - _JOIN_SLACK <= xh <= x_hi + _JOIN_SLACK and t < best:
                best, surf = t, 2
        a = vx * vx + vy * vy
        for side in range(2):
            cx = x_lo if side == 0 else x_hi
            dx = px - cx
            dy = py - rho
            b = dx * vx + dy * vy
            c = dx * dx + dy * dy - rho * rho
            disc = b * b - a * c
            if disc < 0.0:
                continue
            s = math.sqrt(disc)
            # larger root, computed without cancellation
            if b <= 0.0:
                t = (-b + s) / a
            else:
                t = c / (-b - s)
            if t < 0.0:
                t = 0.0
            if side == exclude and t <= EPS_EVENT:
                continue
            xh = px + vx * t
            if side == 0 and xh > x_lo + _JOIN_SLACK:
                continue
            if side == 1 and xh < x_hi - _JOIN_SLACK:
                continue
            if t < best:
                best, surf = t, side
    a = vx * vx + vy * vy
    for k in range(obs.shape[0]):
        if exclude == N_WALLS + k:
            continue
        dx = px - obs[k, 0]
        dy = py - obs[k, 1]
        b = dx * vx + dy * vy
        if b >= 0.0:
            continue
        c = dx * dx + dy * dy - obs[k, 2] * obs[k, 2]
        disc = b * b - a * c
        if disc <= 0.0:
            continue
        # smaller root in the stable form c / (-b + sqrt(disc))
        t = c / (-b + math.sqrt(disc))
        if t < 0.0:
            t = 0.0
        if t < best:
            best, surf = t, N_WALLS + k
    return best, surf


@njit
def surface_normal(px, py, surf, kind, g0, g1, obs):
    """Unit normal of ``surf`` at the impact point (sign is irrelevant)."""
    if surf >= N_WALLS:
        k = surf - N_WALLS
        nx = px - obs[k, 0]
        ny = py - obs[k, 1]
    elif kind == RECTANGLE or surf >= 2:
        if surf <= 1:
            return 1.0, 0.0
        return 0.0, 1.0
    else:
        cx = g1 if surf == 0 else g1 + g0
        nx = px - cx
        ny = py - g1
    norm = math.sqrt(nx * nx + ny * ny)
    return nx / norm, ny / norm


@njit
def reflect(vx, vy, nx, ny):
    d = 2.0 * (vx * nx + vy * ny)
    return vx - d * nx, vy - d * ny


@njit
def step(px, py, vx, vy, kind, g0, g1, obs, exclude):
    """Advance to the next impact and reflect there.

    Returns (dt, surface, px, py, vx, vy); surface is -1 if nothing is hit.
    """
    dt, surf = next_event(px, py, vx, vy, kind, g0, g1, obs, exclude)
    if surf < 0:
        return dt, surf, px, py, vx, vy
    px = px + vx * dt
    py = py + vy * dt
    nx, ny = surface_normal(px, py, surf, kind, g0, g1, obs)
    vx, vy = reflect(vx, vy, nx, ny)
    return dt, surf, px, py, vx, vy


@njit
def first_hits(kind, g0, g1, obs, targets, pos, vel, t_cap):
    """Time until each trial first strikes its target obstacle.

    ``targets[i]`` is an obstacle index (or -1 for none). Returns
    (times, censored, n_events); censored trials report ``t_cap``.
    """
    n = pos.shape[0]
    times = np.empty(n)
    censored = np.zeros(n, dtype=np.bool_)
    n_events = 0
    for i in range(n):
        px, py = pos[i, 0], pos[i, 1]
        vx, vy = vel[i, 0], vel[i, 1]
        # -1 (no target) must not alias a wall code
        target = N_WALLS + targets[i] if targets[i] >= 0 else -2
        clock = 0.0
        exclude = -1
        while True:
            dt, surf = next_event(px, py, vx, vy, kind, g0, g1, obs, exclude)
            if surf < 0 or clock + dt > t_cap:
                times[i] = t_cap
                censored[i] = True
                break
            clock += dt
            px += vx * dt
            py += vy * dt
            n_events += 1
            if surf == target:
                times[i] = clock
                break
            nx, ny = surface_normal(px, py, surf, kind, g0, g1, obs)
            vx, vy = reflect(vx, vy, nx, ny)
            exclude = surf
    return times, censored, n_events


@njit
def free_times(kind, g0, g1, obs, px, py, vx, vy, n_hits, t_cap):
    """Intervals between successive obstacle hits along one trajectory.

    Wall hits are ignored for timing; the stretch before the first obstacle
    hit is discarded. Returns fewer than ``n_hits`` values if ``t_cap`` runs
    out first.
    """
    out = np.empty(n_hits)
    count = 0
    clock = 0.0
    last_hit = -1.0
    exclude = -1
    while count < n_hits:
        dt, surf = next_event(px, py, vx, vy, kind, g0, g1, obs, exclude)
        if surf < 0 or clock + dt > t_cap:
            break
        clock += dt
        px += vx * dt
        py += vy * dt
        if surf >= N_WALLS:
            if last_hit >= 0.0:
                out[count] = clock - last_hit
                count += 1
            last_hit = clock
        nx, ny = surface_normal(px, py, surf, kind, g0, g1, obs)
        vx, vy = reflect(vx, vy, nx, ny)
        exclude = surf
    return out[:count]


@njit
def trajectory(kind, g0, g1, obs, px, py, vx, vy, n_events):
    """Event log of one trajectory: (times, surfaces, xs, ys, vxs, vys).

    Positions are impact points, velocities are post-reflection.
    """
    times = np.empty(n_events)
    surfs = np.empty(n_events, dtype=np.int64)
    xs = np.empty(n_events)
    ys = np.empty(n_events)
    vxs = np.empty(n_events)
    vys = np.empty(n_events)
    clock = 0.0
    exclude = -1
    count = 0
    for i in range(n_events):
        dt, surf, px, py, vx, vy = step(px, py, vx, vy, kind, g0, g1, obs, exclude)
        if surf < 0:
            break
        clock += dt
        times[i] = clock
        surfs[i] = surf
        xs[i] = px
        ys[i] = py
        vxs[i] = vx
        vys[i] = vy
        exclude = surf
        count += 1
    return times[:count], surfs[:count], xs[:count], ys[:count], vxs[:count], vys[:count]


@njit
def lyapunov_pair(kind, g0, g1, obs, px, py, vx, vy, dpx, dpy, dvx, dvy,
                  delta0, delta_max, horizon, window_max, capacity):
    """Paired-trajectory divergence with renormalization.

    The twin starts at the reference state plus (dp, dv) scaled to
    ``delta0`` in the metric |dp|^2 + |d(v/|v|)|^2. Separation is sampled
    at the midpoint of each reference free flight. A window closes when the
    separation exceeds ``delta_max`` or the window lasts ``window_max``; its
    log growth and duration are recorded and the twin is pulled back to
    ``delta0`` along the current separation direction.

    Returns (log_growth, durations, n_windows, completed) where completed is
    False if ``capacity`` windows filled before ``horizon``.
    """
    speed = math.sqrt(vx * vx + vy * vy)
    logs = np.empty(capacity)
    durs = np.empty(capacity)
    n_win = 0

    scale = delta0 / math.sqrt(dpx * dpx + dpy * dpy + (dvx * dvx + dvy * dvy) / (speed * speed))
    qx = px + dpx * scale
    qy = py + dpy * scale
    ux = vx + dvx * scale
    uy = vy + dvy * scale
    un = math.sqrt(ux * ux + uy * uy)
    ux *= speed / un
    uy *= speed / un

    t_ref = 0.0
    ex_ref = -1
    t_twin = 0.0
    ex_twin = -1
    dt_twin, s_twin = next_event(qx, qy, ux, uy, kind, g0, g1, obs, ex_twin)
    win_start = 0.0

    while t_ref < horizon:
        dt_ref, s_ref = next_event(px, py, vx, vy, kind, g0, g1, obs, ex_ref)
        if s_ref < 0:
            break
        ts = t_ref + 0.5 * dt_ref
        # bring the twin up to ts
        while s_twin >= 0 and t_twin + dt_twin <= ts:
            qx += ux * dt_twin
            qy += uy * dt_twin
            t_twin += dt_twin
            nx, ny = surface_normal(qx, qy, s_twin, kind, g0, g1, obs)
            ux, uy = reflect(ux, uy, nx, ny)
            ex_twin = s_twin
            dt_twin, s_twin = next_event(qx, qy, ux, uy, kind, g0, g1, obs, ex_twin)
        h_ref = ts - t_ref
        h_twin = ts - t_twin
        rx = px + vx * h_ref
        ry = py + vy * h_ref
        sx = qx + ux * h_twin
        sy = qy + uy * h_twin
        ddx = sx - rx
        ddy = sy - ry
        dux = (ux - vx) / speed
        duy = (uy - vy) / speed
        sep = math.sqrt(ddx * ddx + ddy * ddy + dux * dux + duy * duy)
        elapsed = ts - win_start
        if sep > delta_max or elapsed >= window_max:
            if n_win == capacity:
                return logs, durs, n_win, False
            logs[n_win] = math.log(sep / delta0)
            durs[n_win] = elapsed
            n_win += 1
            f = delta0 / sep
            qx = rx + ddx * f
            qy = ry + ddy * f
            ux = vx + dux * speed * f
            uy = vy + duy * speed * f
            un = math.sqrt(ux * ux + uy * uy)
            ux *= speed / un
            uy *= speed / un
            t_twin = ts
            ex_twin = ex_ref
            dt_twin, s_twin = next_event(qx, qy, ux, uy, kind, g0, g1, obs, ex_twin)
            win_start = ts
        # finish the reference flight
        px += vx * dt_ref
        py += vy * dt_ref
        t_ref += dt_ref
        nx, ny = surface_normal(px, py, s_ref, kind, g0, g1, obs)
        vx, vy = reflect(vx, vy, nx, ny)
        ex_ref = s_ref
    return logs, durs, n_win, True
