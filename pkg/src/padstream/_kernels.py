"""Compiled tree-growing and traversal loops.

Randomness is never drawn inside these functions: callers pass arrays of
uniform variates produced by a seeded numpy Generator, consumed in order.
Trees of one forest are packed into flat arrays; ``left[i] == -1`` marks a
leaf and child indices are global.
"""

import numpy as np
from numba import njit


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@njit(cache=True)
def splitmix_next(state):
    """One splitmix64 step: (new state, uniform in [0, 1))."""
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return state, np.float64(z >> _S11) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _is_constant(col, idx, start, end):
    v0 = col[idx[start]]
    for r in range(start + 1, end):
        if col[idx[r]] != v0:
            return False
    return True


@njit(cache=True)
def grow_forest(X, y, n_classes, weights, max_depth, min_leaf, k, seeds, binary):
    """Gini CART trees, one per row of ``weights``.

    ``weights[t, i]`` is how often row i was drawn for tree t (bootstrap
    multiplicity); rows with weight 0 are left out. Weighted growth gives
    the same tree as growing on the duplicated rows. ``seeds[t]`` starts
    the splitmix64 stream tree t uses for feature sampling: features are
    drawn without replacement and those found constant in the node are
    set aside until ``k`` varying ones are found, which yields a uniform
    k-subset of the varying features. ``binary[f]`` marks
    0/1 columns, whose only split (at 0.5) is scored without sorting.
    Returns (feature, threshold, left, right, value, roots).
    """
    T, m = weights.shape
    d = X.shape[1]
    cap = T * (2 * m + 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_classes))
    roots = np.zeros(T, np.int64)

    XT = np.ascontiguousarray(X.T)
    buf = np.empty(d, np.int64)
    # features not yet found constant on the path; constant ones stay constant below
    stack_vary = np.empty((2 * m + 2, d), np.int64)
    stack_nvary = np.empty(2 * m + 2, np.int64)
    counts = np.zeros(n_classes)
    lc = np.zeros(n_classes)
    rc = np.zeros(n_classes)
    vals = np.empty(m)
    order = np.empty(m, np.int64)
    stack_node = np.empty(2 * m + 2, np.int64)
    stack_start = np.empty(2 * m + 2, np.int64)
    stack_end = np.empty(2 * m + 2, np.int64)
    stack_depth = np.empty(2 * m + 2, np.int64)
    n_nodes = 0
    for t in range(T):
        w = weights[t]
        idx = np.flatnonzero(w > 0)
        state = seeds[t]
        roots[t] = n_nodes
        n_nodes += 1
        stack_node[0] = roots[t]
        stack_start[0] = 0
        stack_end[0] = idx.shape[0]
        stack_depth[0] = 0
        for f in range(d):
            stack_vary[0, f] = f
        stack_nvary[0] = d
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack_node[sp]
            start = stack_start[sp]
            end = stack_end[sp]
            depth = stack_depth[sp]
            n = end - start
            counts[:] = 0.0
            for r in range(start, end):
                counts[y[idx[r]]] += w[idx[r]]
            total = 0.0
            for c in range(n_classes):
                total += counts[c]
            pure = False
            for c in range(n_classes):
                value[node, c] = counts[c] / total
                if counts[c] == total:
                    pure = True
            if pure or total < 2 * min_leaf or depth >= max_depth:
                continue
            live = stack_nvary[sp]
            buf[:live] = stack_vary[sp, :live]
            kk = 0
            while kk < k and kk < live:
                state, x = splitmix_next(state)
                r = kk + int(x * (live - kk))
                f = buf[r]
                buf[r] = buf[kk]
                if _is_constant(XT[f], idx, start, end):
                    live -= 1
                    buf[kk] = buf[live]
                    buf[live] = f
                else:
                    buf[kk] = f
                    kk += 1
            if kk == 0:
                continue
            # candidates in feature order so ties go to the lowest index
            for a in range(1, kk):
                f = buf[a]
                b = a - 1
                while b >= 0 and buf[b] > f:
                    buf[b + 1] = buf[b]
                    b -= 1
                buf[b + 1] = f
            best = -1.0
            bf = -1
            bt = 0.0
            sq = 0.0
            for c in range(n_classes):
                sq += counts[c] * counts[c]
            for j in range(kk):
                f = buf[j]
                if binary[f]:
                    lc[:] = 0.0
                    nl = 0.0
                    for r in range(start, end):
                        row = idx[r]
                        if XT[f, row] == 0.0:
                            lc[y[row]] += w[row]
                            nl += w[row]
                    nr = total - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    sl2 = 0.0
                    sr2 = 0.0
                    for c in range(n_classes):
                        sl2 += lc[c] * lc[c]
                        sr2 += (counts[c] - lc[c]) * (counts[c] - lc[c])
                    g = sl2 / nl + sr2 / nr
                    if g > best:
                        best = g
                        bf = f
                        bt = 0.5
                    continue
                col = XT[f]
                for r in range(n):
                    vals[r] = col[idx[start + r]]
                # order within ties is irrelevant: only boundaries a < b are scored
                if n <= 32:
                    for a in range(n):
                        order[a] = a
                    for a in range(1, n):
                        o = order[a]
                        v = vals[o]
                        b = a - 1
                        while b >= 0 and vals[order[b]] > v:
                            order[b + 1] = order[b]
                            b -= 1
                        order[b + 1] = o
                else:
                    order[:n] = np.argsort(vals[:n])
                lc[:] = 0.0
                rc[:] = counts
                sl2 = 0.0
                sr2 = sq
                nl = 0.0
                for i in range(n - 1):
                    row = idx[start + order[i]]
                    c = y[row]
                    wr = w[row]
                    sl2 += 2.0 * lc[c] * wr + wr * wr
                    lc[c] += wr
                    sr2 -= 2.0 * rc[c] * wr - wr * wr
                    rc[c] -= wr
                    nl += wr
                    nr = total - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    a = vals[order[i]]
                    b = vals[order[i + 1]]
                    if a < b:
                        g = sl2 / nl + sr2 / nr
                        if g > best:
                            best = g
                            bf = f
                            bt = (a + b) / 2.0
            if bf < 0:
                continue
            # in-place partition: x <= bt to the left
            i = start
            j = end - 1
            while i <= j:
                if X[idx[i], bf] <= bt:
                    i += 1
                else:
                    tmp = idx[i]
                    idx[i] = idx[j]
                    idx[j] = tmp
                    j -= 1
            feature[node] = bf
            threshold[node] = bt
            left[node] = n_nodes
            right[node] = n_nodes + 1
            n_nodes += 2
            # right first so the left subtree is grown first
            stack_node[sp] = right[node]
            stack_start[sp] = i
            stack_end[sp] = end
            stack_depth[sp] = depth + 1
            stack_vary[sp, :live] = buf[:live]
            stack_nvary[sp] = live
            sp += 1
            stack_node[sp] = left[node]
            stack_start[sp] = start
            stack_end[sp] = i
            stack_depth[sp] = depth + 1
            stack_vary[sp, :live] = buf[:live]
            stack_nvary[sp] = live
            sp += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], roots)


@njit(cache=True)
def forest_proba(Q, feature, threshold, left, right, value, roots):
    """Mean leaf value over trees for each row of Q."""
    out = np.zeros((Q.shape[0], value.shape[1]))
    for q in range(Q.shape[0]):
        for t in range(roots.shape[0]):
            node = roots[t]
            while left[node] != -1:
                if Q[q, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for c in range(value.shape[1]):
                out[q, c] += value[node, c]
    return out / roots.shape[0]


@njit(cache=True)
def forest_leaves(Q, feature, threshold, left, right, roots, go_right_on_ge):
    """Leaf index per (row, tree). ``go_right_on_ge`` selects x >= t (isolation) vs x > t (CART)."""
    out = np.empty((Q.shape[0], roots.shape[0]), np.int64)
    for q in range(Q.shape[0]):
        for t in range(roots.shape[0]):
            node = roots[t]
            while left[node] != -1:
                x = Q[q, feature[node]]
                if go_right_on_ge:
                    node = right[node] if x >= threshold[node] else left[node]
                else:
                    node = right[node] if x > threshold[node] else left[node]
            out[q, t] = node
    return out


@njit(cache=True)
def grow_isolation_forest(U, rows, limit, u):
    """Isolation trees over ``rows[t]`` (indices into U), one per tree.

    Each split draws a feature uniformly among those varying at the node
    and a threshold uniformly in [min, max); x < threshold goes left.
    Returns (feature, threshold, left, right, size, depth, roots).
    """
    T, psi = rows.shape
    d = U.shape[1]
    cap = T * (2 * psi + 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    size = np.zeros(cap)
    depth_of = np.zeros(cap)
    roots = np.zeros(T, np.int64)
    buf = np.empty(d, np.int64)
    lo = np.empty(d)
    hi = np.empty(d)
    stack_node = np.empty(2 * psi + 2, np.int64)
    stack_start = np.empty(2 * psi + 2, np.int64)
    stack_end = np.empty(2 * psi + 2, np.int64)
    n_nodes = 0
    for t in range(T):
        idx = rows[t].copy()
        p = 0
        roots[t] = n_nodes
        size[n_nodes] = psi
        n_nodes += 1
        stack_node[0] = roots[t]
        stack_start[0] = 0
        stack_end[0] = psi
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack_node[sp]
            start = stack_start[sp]
            end = stack_end[sp]
            n = end - start
            if n <= 1 or depth_of[node] >= limit:
                continue
            nv = 0
            for f in range(d):
                mn = U[idx[start], f]
                mx = mn
                for r in range(start + 1, end):
                    v = U[idx[r], f]
                    if v < mn:
                        mn = v
                    elif v > mx:
                        mx = v
                if mx > mn:
                    buf[nv] = f
                    lo[nv] = mn
                    hi[nv] = mx
                    nv += 1
            if nv == 0:
                continue
            j = int(u[t, p] * nv)
            p += 1
            f = buf[j]
            th = lo[j] + u[t, p] * (hi[j] - lo[j])
            p += 1
            if th <= lo[j]:
                th = (lo[j] + hi[j]) / 2.0
            i = start
            e = end - 1
            while i <= e:
                if U[idx[i], f] < th:
                    i += 1
                else:
                    tmp = idx[i]
                    idx[i] = idx[e]
                    idx[e] = tmp
                    e -= 1
            feature[node] = f
            threshold[node] = th
            left[node] = n_nodes
            right[node] = n_nodes + 1
            size[n_nodes] = i - start
            size[n_nodes + 1] = end - i
            depth_of[n_nodes] = depth_of[node] + 1
            depth_of[n_nodes + 1] = depth_of[node] + 1
            n_nodes += 2
            stack_node[sp] = right[node]
            stack_start[sp] = i
            stack_end[sp] = end
            sp += 1
            stack_node[sp] = left[node]
            stack_start[sp] = start
            stack_end[sp] = i
            sp += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            size[:n_nodes], depth_of[:n_nodes], roots)
