"""
Transportation simplex on the complete bipartite graph (compiled core).

The basis is a spanning tree of m + n - 1 arcs over the m source rows and
n target columns (columns are nodes m .. m+n-1). Degenerate arcs carry
zero flow but stay in the tree. Potentials are rebuilt by BFS after each
pivot; at desk scale this O(m + n) pass is cheaper than the O(mn) pricing.
"""

import numpy as np
from numba import njit

OPTIMAL = 0
ITERATION_LIMIT = 1
BROKEN_TREE = 2


@njit(cache=True, nogil=True)
def northwest_corner(a, b, row_order, col_order):
    """Staircase basis visiting rows and columns in the given order.

    Always returns m + n - 1 arcs forming a spanning tree; ties exhaust the
    row first and leave a zero-flow arc on the next row.
    """
    m = a.shape[0]
    n = b.shape[0]
    k_total = m + n - 1
    bi = np.empty(k_total, dtype=np.int64)
    bj = np.empty(k_total, dtype=np.int64)
    x = np.empty(k_total, dtype=np.float64)
    ra = a[row_order[0]]
    rb = b[col_order[0]]
    p = 0
    q = 0
    for k in range(k_total):
        i = row_order[p]
        j = col_order[q]
        f = min(ra, rb)
        if f < 0.0:
            f = 0.0
        bi[k] = i
        bj[k] = j
        x[k] = f
        ra -= f
        rb -= f
        if p == m - 1:
            q += 1
            if q < n:
                rb = b[col_order[q]]
        elif q == n - 1:
            p += 1
            ra = a[row_order[p]]
        elif ra <= rb:
            p += 1
            ra = a[row_order[p]]
        else:
            q += 1
            rb = b[col_order[q]]
    return bi, bj, x


@njit(cache=True, nogil=True)
def _tree_potentials(C, bi, bj, m, n, pot, parent, parc, depth, deg, start, nbr, queue):
    n_nodes = m + n
    k_total = bi.shape[0]
    for v in range(n_nodes):
        deg[v] = 0
        parent[v] = -2
    for k in range(k_total):
        deg[bi[k]] += 1
        deg[m + bj[k]] += 1
    start[0] = 0
    for v in range(n_nodes):
        start[v + 1] = start[v] + deg[v]
        deg[v] = 0
    for k in range(k_total):
        r = bi[k]
        c = m + bj[k]
        nbr[start[r] + deg[r]] = k
        deg[r] += 1
        nbr[start[c] + deg[c]] = k
        deg[c] += 1

    pot[0] = 0.0
    parent[0] = -1
    parc[0] = -1
    depth[0] = 0
    head = 0
    tail = 1
    queue[0] = 0
    while head < tail:
        v = queue[head]
        head += 1
        for s in range(start[v], start[v + 1]):
            k = nbr[s]
            if v < m:
                w = m + bj[k]
            else:
                w = bi[k]
            if parent[w] != -2:
                continue
            parent[w] = v
            parc[w] = k
            depth[w] = depth[v] + 1
            # u_i + v_j = C_ij on every tree arc
            pot[w] = C[bi[k], bj[k]] - pot[v]
            queue[tail] = w
            tail += 1
    return tail == n_nodes


@njit(cache=True, nogil=True)
def transport_simplex(C, bi, bj, x, max_pivots):
    """Drive a feasible tree basis to optimality in place.

    Block-search pricing; after a run of degenerate pivots it switches to
    Bland's rule (first improving arc, lowest-index leaving arc) until the
    next nondegenerate pivot.
    Returns (status, pivots).
    """
    m = C.shape[0]
    n = C.shape[1]
    n_nodes = m + n
    k_total = bi.shape[0]

    pot = np.zeros(n_nodes)
    parent = np.empty(n_nodes, dtype=np.int64)
    parc = np.empty(n_nodes, dtype=np.int64)
    depth = np.empty(n_nodes, dtype=np.int64)
    deg = np.empty(n_nodes, dtype=np.int64)
    start = np.empty(n_nodes + 1, dtype=np.int64)
    nbr = np.empty(2 * k_total, dtype=np.int64)
    queue = np.empty(n_nodes, dtype=np.int64)
    path_q = np.empty(n_nodes, dtype=np.int64)
    path_p = np.empty(n_nodes, dtype=np.int64)
    cycle = np.empty(n_nodes + 1, dtype=np.int64)

    cmax = 0.0
    for i in range(m):
        for j in range(n):
            if C[i, j] > cmax:
                cmax = C[i, j]
    tol = 1e-12 * max(cmax, 1e-300)

    n_arcs = m * n
    block = max(int(np.sqrt(n_arcs)), 16)
    next_i = 0
    next_j = 0
    degenerate_run = 0
    bland_after = n_nodes
    pivots = 0
    while True:
        if not _tree_potentials(C, bi, bj, m, n, pot, parent, parc, depth,
                                deg, start, nbr, queue):
            return BROKEN_TREE, pivots

        use_bland = degenerate_run > bland_after
        ei = -1
        ej = -1
        best = -tol
        if use_bland:
            # first improving arc in row-major order
            for i in range(m):
                ui = pot[i]
                for j in range(n):
                    if C[i, j] - ui - pot[m + j] < -tol:
                        ei = i
                        ej = j
                        break
                if ei >= 0:
                    break
        else:
            # block search: best arc of the first block holding an improving one
            i = next_i
            j = next_j
            in_block = 0
            for _ in range(n_arcs):
                rc = C[i, j] - pot[i] - pot[m + j]
                if rc < best:
                    best = rc
                    ei = i
                    ej = j
                j += 1
                if j == n:
                    j = 0
                    i += 1
                    if i == m:
                        i = 0
                in_block += 1
                if in_block == block:
                    if ei >= 0:
                        break
                    in_block = 0
            next_i = i
            next_j = j
        if ei < 0:
            return OPTIMAL, pivots
        if pivots >= max_pivots:
            return ITERATION_LIMIT, pivots

        # tree path between row ei and column ej, split at their common ancestor
        p = ei
        q = m + ej
        lp = 0
        lq = 0
        while depth[p] > depth[q]:
            path_p[lp] = parc[p]
            lp += 1
            p = parent[p]
        while depth[q] > depth[p]:
            path_q[lq] = parc[q]
            lq += 1
            q = parent[q]
        while p != q:
            path_p[lp] = parc[p]
            lp += 1
            p = parent[p]
            path_q[lq] = parc[q]
            lq += 1
            q = parent[q]
        # walk from column ej to the ancestor, then down to row ei;
        # signs alternate starting with a donor arc
        lc = 0
        for s in range(lq):
            cycle[lc] = path_q[s]
            lc += 1
        for s in range(lp - 1, -1, -1):
            cycle[lc] = path_p[s]
            lc += 1

        theta = np.inf
        leave = -1
        leave_key = -1
        for s in range(0, lc, 2):
            k = cycle[s]
            key = bi[k] * n + bj[k]
            if x[k] < theta or (x[k] == theta and use_bland and key < leave_key):
                theta = x[k]
                leave = k
                leave_key = key
        for s in range(lc):
            k = cycle[s]
            if s % 2 == 0:
                x[k] -= theta
            else:
                x[k] += theta
        bi[leave] = ei
        bj[leave] = ej
        x[leave] = theta
        pivots += 1
        if theta > 0.0:
            degenerate_run = 0
        else:
            degenerate_run += 1
