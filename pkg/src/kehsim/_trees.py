"""Numba-compiled CART trees and bagged forests (Gini impurity).

Trees are stored as flat arrays: feature/threshold/left/right per node, with
leaf_class >= 0 marking leaves. Splits go left when x <= threshold. Split
thresholds are midpoints between distinct adjacent sorted values. Importances
accumulate weighted impurity decrease per feature.

Randomness uses an explicit splitmix64 stream per tree, so fits are
deterministic for a given seed regardless of thread scheduling.
"""

import os

import numpy as np

# The default TBB layer is version-sensitive; workqueue is always available
# and fine for coarse per-tree parallelism.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from numba import njit, prange

_U64_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _next_u64(state):
    state = (state + _SM_GAMMA) & _U64_MASK
    z = state
    z = ((z ^ (z >> np.uint64(30))) * _SM_M1) & _U64_MASK
    z = ((z ^ (z >> np.uint64(27))) * _SM_M2) & _U64_MASK
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, inline="always")
def _rand_below(state, n):
    state, z = _next_u64(state)
    return state, np.int64(z % np.uint64(n))


@njit(cache=True)
def _gini(counts, total):
    if total <= 0:
        return 0.0
    acc = 0.0
    for c in counts:
        p = c / total
        acc += p * p
    return 1.0 - acc


@njit(cache=True)
def _build_tree(X, y, n_classes, sample_idx, max_features, min_leaf, seed,
                feature, threshold, left, right, leaf_class, importance):
    """Grow one tree into the provided node arrays; returns node count."""
    n_total = sample_idx.size
    d = X.shape[1]
    idx = sample_idx.copy()
    tmp = np.empty(n_total, np.int64)
    vals = np.empty(n_total, np.float64)
    perm = np.empty(d, np.int64)
    counts = np.empty(n_classes, np.int64)
    left_counts = np.empty(n_classes, np.int64)

    # Stack of (node_id, start, end)
    stack = np.empty((2 * n_total + 2, 3), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_total
    top = 1
    n_nodes = 1
    state = seed

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        n_node = end - start

        counts[:] = 0
        for i in range(start, end):
            counts[y[idx[i]]] += 1
        g_parent = _gini(counts, n_node)

        # Majority class, lowest index on ties.
        best_c = 0
        for c in range(1, n_classes):
            if counts[c] > counts[best_c]:
                best_c = c

        if g_parent == 0.0 or n_node < 2 * min_leaf or n_node < 2:
            feature[node] = -1
            leaf_class[node] = best_c
            continue

        # Sample candidate features without replacement.
        for j in range(d):
            perm[j] = j
        m = max_features if max_features < d else d
        for j in range(m):
            state, r = _rand_below(state, d - j)
            k = j + r
            perm[j], perm[k] = perm[k], perm[j]

        best_cost = np.inf
        best_f = -1
        best_thr = 0.0
        best_nl = 0
        best_gl = 0.0
        best_gr = 0.0

        for j in range(m):
            f = perm[j]
            for i in range(n_node):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:n_node])

            left_counts[:] = 0
            nl = 0
            for i in range(n_node - 1):
                row = idx[start + order[i]]
                left_counts[y[row]] += 1
                nl += 1
                v_here = vals[order[i]]
                v_next = vals[order[i + 1]]
                if v_next <= v_here:
                    continue
                nr = n_node - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                gl = _gini(left_counts, nl)
                # right gini from complement counts
                acc = 0.0
                for c in range(n_classes):
                    rc = counts[c] - left_counts[c]
                    p = rc / nr
                    acc += p * p
                gr = 1.0 - acc
                cost = nl * gl + nr * gr
                if cost < best_cost:
                    best_cost = cost
                    best_f = f
                    best_thr = 0.5 * (v_here + v_next)
                    best_nl = nl
                    best_gl = gl
                    best_gr = gr

        if best_f < 0:
            feature[node] = -1
            leaf_class[node] = best_c
            continue

        nr = n_node - best_nl
        importance[best_f] += (n_node * g_parent - best_nl * best_gl - nr * best_gr)

        # Partition idx[start:end] by the chosen split (stable).
        a = 0
        b = 0
        for i in range(start, end):
            row = idx[i]
            if X[row, best_f] <= best_thr:
                tmp[a] = row
                a += 1
            else:
                tmp[n_node - 1 - b] = row
                b += 1
        for i in range(a):
            idx[start + i] = tmp[i]
        for i in range(b):
            idx[start + a + i] = tmp[n_node - 1 - i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id
        leaf_class[node] = -1

        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + a
        top += 1
        stack[top, 0] = right_id
        stack[top, 1] = start + a
        stack[top, 2] = end
        top += 1

    return n_nodes


@njit(cache=True, parallel=True)
def forest_fit(X, y, n_classes, n_trees, max_features, min_leaf, base_seed, bootstrap):
    n = X.shape[0]
    d = X.shape[1]
    max_nodes = 2 * n + 2
    feature = np.full((n_trees, max_nodes), -2, np.int64)
    threshold = np.zeros((n_trees, max_nodes), np.float64)
    left = np.full((n_trees, max_nodes), -1, np.int64)
    right = np.full((n_trees, max_nodes), -1, np.int64)
    leaf_class = np.full((n_trees, max_nodes), -1, np.int64)
    importances = np.zeros((n_trees, d), np.float64)
    node_counts = np.zeros(n_trees, np.int64)

    for t in prange(n_trees):
        state = (np.uint64(base_seed) + np.uint64(t) * _SM_GAMMA) & _U64_MASK
        state, mix = _next_u64(state)
        sample_idx = np.empty(n, np.int64)
        if bootstrap:
            for i in range(n):
                state, r = _rand_below(state, n)
                sample_idx[i] = r
        else:
            for i in range(n):
                sample_idx[i] = i
        node_counts[t] = _build_tree(X, y, n_classes, sample_idx, max_features,
                                     min_leaf, state, feature[t], threshold[t],
                                     left[t], right[t], leaf_class[t],
                                     importances[t])
    return feature, threshold, left, right, leaf_class, node_counts, importances


@njit(cache=True)
def forest_votes(feature, threshold, left, right, leaf_class, n_trees, X, n_classes):
    n = X.shape[0]
    votes = np.zeros((n, n_classes), np.int64)
    for t in range(n_trees):
        for i in range(n):
            node = 0
            while leaf_class[t, node] < 0:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            votes[i, leaf_class[t, node]] += 1
    return votes


def warmup():
    """Trigger JIT compilation with a tiny problem."""
    X = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [1.5, 1.5]])
    y = np.array([0, 1, 0, 1], dtype=np.int64)
    out = forest_fit(X, y, 2, 2, 1, 1, 12345, True)
    forest_votes(out[0], out[1], out[2], out[3], out[4], 2, X, 2)
