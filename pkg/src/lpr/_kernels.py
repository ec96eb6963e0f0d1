"""Compiled inner loops for IK, collision checking and RRT-Connect.

These run thousands of times per environment step on tiny inputs, where
numpy call overhead dominates; the numpy implementations elsewhere in the
package remain the reference behaviour and are used to test these.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# --- kinematics -------------------------------------------------------------


@njit(cache=True)
def _wrap(a):
    return math.pi - (math.pi - a) % (2.0 * math.pi)


@njit(cache=True)
def chain_points(q, L, base, out):
    """Joint positions of one config into ``out`` (d+1, 2)."""
    out[0, 0] = base[0]
    out[0, 1] = base[1]
    phi = 0.0
    for j in range(len(L)):
        phi += q[j]
        out[j + 1, 0] = out[j, 0] + L[j] * math.cos(phi)
        out[j + 1, 1] = out[j, 1] + L[j] * math.sin(phi)


@njit(cache=True)
def _dls(q, L, base, lo, hi, px, py, ori, weight, iters, tol, damping, max_step):
    """Damped least squares on one target, updating ``q`` in place."""
    d = len(L)
    pts = np.empty((d + 1, 2))
    n_rows = 3 if weight > 0 else 2
    J = np.zeros((n_rows, d))
    e = np.zeros(n_rows)
    lam2 = damping * damping
    for _ in range(iters):
        chain_points(q, L, base, pts)
        ex = px - pts[d, 0]
        ey = py - pts[d, 1]
        err = math.sqrt(ex * ex + ey * ey)
        eo = 0.0
        if weight > 0:
            s = 0.0
            for j in range(d):
                s += q[j]
            eo = _wrap(ori - s)
            if err <= tol and abs(eo) <= tol:
                return
        elif err <= tol:
            return
        for j in range(d):
            J[0, j] = -(pts[d, 1] - pts[j, 1])
            J[1, j] = pts[d, 0] - pts[j, 0]
            if weight > 0:
                J[2, j] = weight
        e[0] = ex
        e[1] = ey
        if weight > 0:
            e[2] = weight * eo
        A = J @ J.T
        for i in range(n_rows):
            A[i, i] += lam2
        dq = J.T @ np.linalg.solve(A, e)
        norm = math.sqrt(np.sum(dq * dq))
        if norm > max_step:
            dq *= max_step / norm
        moved = 0.0
        for j in range(d):
            v = min(max(q[j] + dq[j], lo[j]), hi[j])
            moved = max(moved, abs(v - q[j]))
            q[j] = v
        if moved <= 1e-12:
            return  # pinned against a limit


@njit(cache=True)
def _ee_error(q, L, base, px, py, pts):
    chain_points(q, L, base, pts)
    d = len(L)
    return math.hypot(px - pts[d, 0], py - pts[d, 1])


@njit(cache=True)
def ik_solve(q, L, base, lo, hi, px, py, ori, weight, iters, polish_iters, tol):
    """Weighted pose solve, then a position-only polish if needed.  Returns
    True iff the final position error is within ``tol``."""
    pts = np.empty((len(L) + 1, 2))
    for j in range(len(q)):
        q[j] = min(max(q[j], lo[j]), hi[j])
    _dls(q, L, base, lo, hi, px, py, ori, weight, iters, tol, 1e-2, 0.5)
    if _ee_error(q, L, base, px, py, pts) > tol:
        _dls(q, L, base, lo, hi, px, py, ori, 0.0, polish_iters, tol, 1e-2, 0.5)
    return _ee_error(q, L, base, px, py, pts) <= tol


@njit(cache=True)
def ik_many(L, base, lo, hi, P, O, Q0, weight, iters, polish_iters, tol):
    Q = Q0.copy()
    ok = np.zeros(len(P), dtype=np.bool_)
    for i in range(len(P)):
        ok[i] = ik_solve(Q[i], L, base, lo, hi, P[i, 0], P[i, 1], O[i], weight, iters, polish_iters, tol)
    return Q, ok


@njit(cache=True)
def convert_curves(L, base, lo, hi, pts, oris, q0, weight, iters, polish_iters, tol):
    """Sequentially seeded IK along each curve; a curve stops at its first
    failed waypoint."""
    K, T = pts.shape[0], pts.shape[1]
    d = len(L)
    Q = np.zeros((K, T, d))
    ok = np.ones(K, dtype=np.bool_)
    for k in range(K):
        Q[k, 0] = q0
        for t in range(1, T):
            Q[k, t] = Q[k, t - 1]
            if not ik_solve(Q[k, t], L, base, lo, hi, pts[k, t, 0], pts[k, t, 1], oris[t],
                            weight, iters, polish_iters, tol):
                ok[k] = False
                break
    return Q, ok


# --- collision --------------------------------------------------------------


@njit(cache=True)
def _cross(ux, uy, vx, vy):
    return ux * vy - uy * vx


@njit(cache=True)
def _seg_seg(ax, ay, bx, by, cx, cy, dx, dy):
    rx, ry = bx - ax, by - ay
    sx, sy = dx - cx, dy - cy
    d1 = _cross(rx, ry, cx - ax, cy - ay)
    d2 = _cross(rx, ry, dx - ax, dy - ay)
    d3 = _cross(sx, sy, ax - cx, ay - cy)
    d4 = _cross(sx, sy, bx - cx, by - cy)
    if d1 == 0.0 and d2 == 0.0:
        return (min(ax, bx) <= max(cx, dx) and min(cx, dx) <= max(ax, bx)
                and min(ay, by) <= max(cy, dy) and min(cy, dy) <= max(ay, by))
    return d1 * d2 <= 0.0 and d3 * d4 <= 0.0


@njit(cache=True)
def _seg_circle(ax, ay, bx, by, cx, cy, r):
    abx, aby = bx - ax, by - ay
    denom = max(abx * abx + aby * aby, 1e-300)
    t = ((cx - ax) * abx + (cy - ay) * aby) / denom
    t = min(max(t, 0.0), 1.0)
    ex = cx - (ax + t * abx)
    ey = cy - (ay + t * aby)
    return ex * ex + ey * ey <= r * r


@njit(cache=True)
def config_hits(q, L, base, cc, cr, s1, s2, pts):
    chain_points(q, L, base, pts)
    for j in range(len(L)):
        ax, ay, bx, by = pts[j, 0], pts[j, 1], pts[j + 1, 0], pts[j + 1, 1]
        for c in range(len(cr)):
            if _seg_circle(ax, ay, bx, by, cc[c, 0], cc[c, 1], cr[c]):
                return True
        for s in range(len(s1)):
            if _seg_seg(ax, ay, bx, by, s1[s, 0], s1[s, 1], s2[s, 0], s2[s, 1]):
                return True
    return False


@njit(cache=True)
def hits_many(Q, L, base, cc, cr, s1, s2):
    pts = np.empty((len(L) + 1, 2))
    out = np.zeros(len(Q), dtype=np.bool_)
    for i in range(len(Q)):
        out[i] = config_hits(Q[i], L, base, cc, cr, s1, s2, pts)
    return out


@njit(cache=True)
def _first_hit(qa, qb, n, L, base, cc, cr, s1, s2, pts, buf):
    """Check qa + k/n (qb - qa) for k = 1..n; index (1-based) of the first
    colliding point, or n + 1 if all are free."""
    for k in range(1, n + 1):
        f = k / n
        for j in range(len(qa)):
            buf[j] = qa[j] + f * (qb[j] - qa[j])
        if config_hits(buf, L, base, cc, cr, s1, s2, pts):
            return k
    return n + 1


# --- RRT-Connect --------------------------------------------------------------


@njit(cache=True)
def _grow(nodes, parent, n):
    if n < len(nodes):
        return nodes, parent
    nn = np.empty((2 * len(nodes), nodes.shape[1]))
    nn[:n] = nodes[:n]
    pp = np.empty(2 * len(nodes), dtype=np.int64)
    pp[:n] = parent[:n]
    return nn, pp


@njit(cache=True)
def _nearest(nodes, n, target):
    best, best_d = 0, np.inf
    for i in range(n):
        s = 0.0
        for j in range(nodes.shape[1]):
            v = nodes[i, j] - target[j]
            s += v * v
        if s < best_d:
            best, best_d = i, s
    return best


@njit(cache=True)
def _advance(nodes, parent, n, target, step, greedy, check, L, base, cc, cr, s1, s2, pts, buf):
    """EXTEND (one step) or CONNECT (greedy) toward ``target``.
    Returns (nodes, parent, n, status, last) with status 0 trapped,
    1 advanced, 2 reached."""
    d = nodes.shape[1]
    i = _nearest(nodes, n, target)
    q = nodes[i].copy()
    delta = target - q
    dist = math.sqrt(np.sum(delta * delta))
    if dist < 1e-12:
        return nodes, parent, n, 2, i
    goal = target.copy()
    if not greedy and dist > step:
        goal = q + delta * (step / dist)
        dist = step
    m = max(int(math.ceil(dist / step)), 1)
    # nodes at k/m plus a midpoint between consecutive nodes
    n_ok = m
    if check:
        k = _first_hit(q, goal, 2 * m, L, base, cc, cr, s1, s2, pts, buf)
        n_ok = (k - 1) // 2
    if n_ok == 0:
        return nodes, parent, n, 0, i
    last = i
    for k in range(1, n_ok + 1):
        nodes, parent = _grow(nodes, parent, n)
        for j in range(d):
            nodes[n, j] = q[j] + (k / m) * (goal[j] - q[j])
        parent[n] = last
        last = n
        n += 1
    status = 2 if (n_ok == m and greedy) else 1
    return nodes, parent, n, status, last


@njit(cache=True)
def _branch(nodes, parent, i):
    count = 0
    k = i
    while k >= 0:
        count += 1
        k = parent[k]
    out = np.empty((count, nodes.shape[1]))
    k = i
    for c in range(count):
        out[c] = nodes[k]
        k = parent[k]
    return out  # from node i back to the root


@njit(cache=True)
def rrt_connect(start, goal, samples, step, check, L, base, cc, cr, s1, s2):
    """Bidirectional RRT with greedy connection.  ``samples`` holds one
    uniform joint sample per iteration.  Returns vertices, or an empty array
    on failure."""
    d = len(start)
    pts = np.empty((len(L) + 1, 2))
    buf = np.empty(d)
    empty = np.empty((0, d))
    if check and (config_hits(start, L, base, cc, cr, s1, s2, pts)
                  or config_hits(goal, L, base, cc, cr, s1, s2, pts)):
        return empty
    gap = math.sqrt(np.sum((goal - start) ** 2))
    if gap <= step:
        m = max(int(math.ceil(gap / (step / 2))), 1)
        if not check or _first_hit(start, goal, m, L, base, cc, cr, s1, s2, pts, buf) > m:
            out = np.empty((2, d))
            out[0] = start
            out[1] = goal
            return out
    na, pa = np.empty((256, d)), np.empty(256, dtype=np.int64)
    nb, pb = np.empty((256, d)), np.empty(256, dtype=np.int64)
    na[0] = start
    pa[0] = -1
    nb[0] = goal
    pb[0] = -1
    ca, cb = 1, 1
    a_is_start = True
    for it in range(len(samples)):
        na, pa, ca, status, ia = _advance(na, pa, ca, samples[it], step, False, check,
                                          L, base, cc, cr, s1, s2, pts, buf)
        if status != 0:
            nb, pb, cb, status, ib = _advance(nb, pb, cb, na[ia].copy(), step, True, check,
                                              L, base, cc, cr, s1, s2, pts, buf)
            if status == 2:
                ra = _branch(na, pa, ia)[::-1]
                rb = _branch(nb, pb, ib)[1:]
                out = np.empty((len(ra) + len(rb), d))
                out[: len(ra)] = ra
                out[len(ra):] = rb
                return out if a_is_start else out[::-1].copy()
        na, nb = nb, na
        pa, pb = pb, pa
        ca, cb = cb, ca
        a_is_start = not a_is_start
    return empty


@njit(cache=True)
def shortcut(verts, draws, res, check, L, base, cc, cr, s1, s2):
    """Random shortcutting; ``draws`` (attempts, 2) are uniforms in [0, 1)."""
    d = verts.shape[1]
    pts = np.empty((len(L) + 1, 2))
    buf = np.empty(d)
    v = verts.copy()
    n = len(v)
    for a in range(len(draws)):
        if n <= 2:
            break
        i = int(draws[a, 0] * n)
        j = int(draws[a, 1] * (n - 1))
        if j >= i:
            j += 1
        if i > j:
            i, j = j, i
        if j - i < 2:
            continue
        gap = math.sqrt(np.sum((v[j] - v[i]) ** 2))
        m = max(int(math.ceil(gap / res)), 1)
        if not check or _first_hit(v[i].copy(), v[j].copy(), m, L, base, cc, cr, s1, s2, pts, buf) > m:
            drop = j - i - 1
            v[i + 1: n - drop] = v[j:n].copy()
            n -= drop
    return v[:n].copy()
