"""Hot inner loops: COO stiffness triplets and partition-of-unity distances.

Both kernels exist in two interchangeable implementations: a numba ``@njit``
version and a pure-numpy fallback. The active one is chosen at import time;
set ``MSRAS_PURE_NUMPY=1`` to force the numpy path (or when numba is not
installed). Both paths emit bitwise-identical outputs, including triplet
order, so downstream CSR sums are deterministic either way.
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("MSRAS_PURE_NUMPY", "0").lower() not in ("0", "", "false")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _stiffness_triplets_loops(cx, cy, coeff, kref, node_map, nx):
    # One 4x4 block per cell, row-major (i, j) order; entries whose row or
    # column maps to -1 (constrained/absent dof) are skipped.
    ncells = cx.shape[0]
    rows = np.empty(16 * ncells, dtype=np.int64)
    cols = np.empty(16 * ncells, dtype=np.int64)
    vals = np.empty(16 * ncells, dtype=np.float64)
    nodes = np.empty(4, dtype=np.int64)
    k = 0
    for c in range(ncells):
        n00 = cy[c] * (nx + 1) + cx[c]
        nodes[0] = node_map[n00]
        nodes[1] = node_map[n00 + 1]
        nodes[2] = node_map[n00 + nx + 1]
        nodes[3] = node_map[n00 + nx + 2]
        a = coeff[c]
        for i in range(4):
            mi = nodes[i]
            if mi < 0:
                continue
            for j in range(4):
                mj = nodes[j]
                if mj < 0:
                    continue
                rows[k] = mi
                cols[k] = mj
                vals[k] = a * kref[i, j]
                k += 1
    return rows[:k], cols[:k], vals[:k]


def _stiffness_triplets_numpy(cx, cy, coeff, kref, node_map, nx):
    n00 = cy.astype(np.int64) * (nx + 1) + cx.astype(np.int64)
    corners = np.stack([n00, n00 + 1, n00 + nx + 1, n00 + nx + 2], axis=1)
    mapped = node_map[corners]  # (ncells, 4)
    rows = np.repeat(mapped, 4, axis=1).reshape(-1)
    cols = np.tile(mapped, (1, 4)).reshape(-1)
    vals = (coeff[:, None, None] * kref[None, :, :]).reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    return rows[keep], cols[keep], vals[keep]


def _pu_distances_loops(cellmask, cap):
    # Distance 0 on nodes whose nodal basis support leaves the cell set,
    # -1 on nodes with no incident cell in the set, BFS levels elsewhere.
    # Adjacency: two nodes are neighbours when they share an in-set cell.
    ny, nx = cellmask.shape
    dist = np.full((ny + 1, nx + 1), -1, dtype=np.int64)
    nnodes = (ny + 1) * (nx + 1)
    queue = np.empty(nnodes, dtype=np.int64)
    head = 0
    tail = 0
    for iy in range(ny + 1):
        for ix in range(nx + 1):
            inside = 0
            outside = 0
            for dy in (-1, 0):
                for dx in (-1, 0):
                    cyy = iy + dy
                    cxx = ix + dx
                    if cyy < 0 or cyy >= ny or cxx < 0 or cxx >= nx:
                        continue
                    if cellmask[cyy, cxx]:
                        inside += 1
                    else:
                        outside += 1
            if inside == 0:
                continue
            if outside > 0:
                dist[iy, ix] = 0
                queue[tail] = iy * (nx + 1) + ix
                tail += 1
            else:
                dist[iy, ix] = -2  # interior, not yet reached
    while head < tail:
        node = queue[head]
        head += 1
        iy = node // (nx + 1)
        ix = node % (nx + 1)
        d = dist[iy, ix]
        if d >= cap:
            continue
        for dy in (-1, 0):
            for dx in (-1, 0):
                cyy = iy + dy
                cxx = ix + dx
                if cyy < 0 or cyy >= ny or cxx < 0 or cxx >= nx:
                    continue
                if not cellmask[cyy, cxx]:
                    continue
                for oy in (0, 1):
                    for ox in (0, 1):
                        jy = cyy + oy
                        jx = cxx + ox
                        if dist[jy, jx] == -2:
                            dist[jy, jx] = d + 1
                            queue[tail] = jy * (nx + 1) + jx
                            tail += 1
    # Unreached interior pockets cannot occur for connected cell sets, but
    # cap them anyway so the output never contains the -2 marker.
    for iy in range(ny + 1):
        for ix in range(nx + 1):
            if dist[iy, ix] == -2:
                dist[iy, ix] = cap
            elif dist[iy, ix] > cap:
                dist[iy, ix] = cap
    return dist


def _pu_distances_numpy(cellmask, cap):
    ny, nx = cellmask.shape
    pad_any = np.zeros((ny + 2, nx + 2), dtype=bool)
    pad_any[1 : ny + 1, 1 : nx + 1] = cellmask
    pad_all = np.ones((ny + 2, nx + 2), dtype=bool)
    pad_all[1 : ny + 1, 1 : nx + 1] = cellmask

    def pool(p):
        return p[: ny + 1, : nx + 1], p[: ny + 1, 1:], p[1:, : nx + 1], p[1:, 1:]

    a, b, c, d = pool(pad_any)
    any_in = a | b | c | d
    a, b, c, d = pool(pad_all)
    all_in = a & b & c & d

    dist = np.full((ny + 1, nx + 1), -1, dtype=np.int64)
    boundary = any_in & ~all_in
    dist[boundary] = 0
    reached = boundary.copy()
    for level in range(1, cap + 1):
        # nodes -> cells: a cell is active if in the set and touching a
        # reached node; cells -> nodes: all corners of active cells.
        rp = np.zeros((ny + 2, nx + 2), dtype=bool)
        rp[: ny + 1, : nx + 1] |= reached
        rp[: ny + 1, 1:] |= reached
        rp[1:, : nx + 1] |= reached
        rp[1:, 1:] |= reached
        active = cellmask & rp[1 : ny + 1, 1 : nx + 1]
        ap = np.zeros((ny + 2, nx + 2), dtype=bool)
        ap[1 : ny + 1, 1 : nx + 1] = active
        a, b, c, d = pool(ap)
        frontier = (a | b | c | d) & all_in & ~reached
        if not frontier.any():
            break
        dist[frontier] = level
        reached |= frontier
    remaining = all_in & ~reached
    dist[remaining] = cap
    return dist


if HAS_NUMBA:
    _stiffness_triplets_numba = njit(cache=True)(_stiffness_triplets_loops)
    _pu_distances_numba = njit(cache=True)(_pu_distances_loops)

if HAS_NUMBA and not _FORCE_NUMPY:
    stiffness_triplets = _stiffness_triplets_numba
    pu_distances = _pu_distances_numba
    ACTIVE_BACKEND = "numba"
else:
    stiffness_triplets = _stiffness_triplets_numpy
    pu_distances = _pu_distances_numpy
    ACTIVE_BACKEND = "numpy"
