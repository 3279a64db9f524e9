"""
Compiled kd-tree kernels.
Every kernel runs without the GIL, so calls made from different worker
threads execute concurrently. Trees are passed as their flat arrays (see
:class:`core.spatial.SpatialTree`); results are tree positions unless stated
otherwise, and the kernels that compute point distances return how many.
"""
import math

import numba
import numpy as np

# Cluster mark for kd-tree nodes whose points span several clusters
NO_MARK = -1

# Label / mark value that excludes nothing
NO_EXCLUSION = -2

# Larger than any item id
_ID_SENTINEL = np.iinfo(np.int64).max


@numba.njit(nogil=True, cache=True)
def _grow(buf):
    out = np.empty(2 * buf.shape[0], dtype=np.int64)
    out[:buf.shape[0]] = buf
    return out


@numba.njit(nogil=True, cache=True)
def point_dist_sq(xa, i, xb, j):
    """Squared distance between row ``i`` of ``xa`` and row ``j`` of ``xb``."""
    total = 0.0
    for k in range(xa.shape[1]):
        diff = xa[i, k] - xb[j, k]
        total += diff * diff
    return total


@numba.njit(nogil=True, cache=True)
def _query_dist_sq(coords, pos, query):
    total = 0.0
    for k in range(query.shape[0]):
        diff = coords[pos, k] - query[k]
        total += diff * diff
    return total


@numba.njit(nogil=True, cache=True)
def box_min_dist_sq(lower, upper, node, query):
    """Squared distance from ``query`` to the closest point of ``node``'s box."""
    total = 0.0
    for k in range(query.shape[0]):
        x = query[k]
        if x < lower[node, k]:
            gap = lower[node, k] - x
        elif x > upper[node, k]:
            gap = x - upper[node, k]
        else:
            gap = 0.0
        total += gap * gap
    return total


@numba.njit(nogil=True, cache=True)
def box_max_dist_sq(lower, upper, node, query):
    """Squared distance from ``query`` to the farthest corner of ``node``'s box."""
    total = 0.0
    for k in range(query.shape[0]):
        far = max(abs(query[k] - lower[node, k]), abs(upper[node, k] - query[k]))
        total += far * far
    return total


@numba.njit(nogil=True, cache=True)
def box_gap_sq(lower_a, upper_a, a, lower_b, upper_b, b):
    """Squared smallest distance between two boxes (0 when they overlap)."""
    total = 0.0
    for k in range(lower_a.shape[1]):
        gap = max(0.0, lower_a[a, k] - upper_b[b, k], lower_b[b, k] - upper_a[a, k])
        total += gap * gap
    return total


@numba.njit(nogil=True, cache=True)
def box_span_sq(lower_a, upper_a, a, lower_b, upper_b, b):
    """Squared largest distance between two boxes."""
    total = 0.0
    for k in range(lower_a.shape[1]):
        span = max(abs(upper_a[a, k] - lower_b[b, k]), abs(upper_b[b, k] - lower_a[a, k]))
        total += span * span
    return total


@numba.njit(nogil=True, cache=True)
def ball_positions(coords, start, end, left, right, lower, upper, max_depth, center, r2):
    """Tree positions of the items within squared radius ``r2`` of ``center``, in tree order."""
    stack = np.empty(max_depth + 2, dtype=np.int64)
    stack[0] = 0
    top = 1
    hits = np.empty(16, dtype=np.int64)
    count = 0
    while top > 0:
        top -= 1
        node = stack[top]
        if box_min_dist_sq(lower, upper, node, center) > r2:
            continue
        if left[node] < 0:
            for pos in range(start[node], end[node]):
                if _query_dist_sq(coords, pos, center) <= r2:
                    if count == hits.shape[0]:
                        hits = _grow(hits)
                    hits[count] = pos
                    count += 1
        else:
            stack[top] = right[node]
            stack[top + 1] = left[node]
            top += 2
    return hits[:count]


@numba.njit(nogil=True, cache=True)
def nearest_position(coords, ids, labels, start, end, left, right, lower, upper, mark, max_depth,
                     query, exclude_label, exclude_mark):
    """Closest item to ``query`` by ``(distance, id)``.

    Items whose label equals ``exclude_label`` and subtrees marked
    ``exclude_mark`` are skipped.

    Returns:
        ``(position or -1, squared distance, point distances computed)``
    """
    stack = np.empty(max_depth + 2, dtype=np.int64)
    stack[0] = 0
    top = 1
    best_pos = -1
    best_id = _ID_SENTINEL
    best_d2 = np.inf
    evaluated = 0
    while top > 0:
        top -= 1
        node = stack[top]
        if exclude_mark != NO_EXCLUSION and mark[node] == exclude_mark:
            continue
        if box_min_dist_sq(lower, upper, node, query) > best_d2:
            continue
        if left[node] < 0:
            evaluated += end[node] - start[node]
            for pos in range(start[node], end[node]):
                if labels[pos] == exclude_label:
                    continue
                d2 = _query_dist_sq(coords, pos, query)
                if d2 < best_d2 or (d2 == best_d2 and ids[pos] < best_id):
                    best_pos = pos
                    best_id = ids[pos]
                    best_d2 = d2
        else:
            near = left[node]
            far = right[node]
            if box_min_dist_sq(lower, upper, far, query) < box_min_dist_sq(lower, upper, near, query):
                near, far = far, near
            stack[top] = far
            stack[top + 1] = near
            top += 2
    return best_pos, best_d2, evaluated


@numba.njit(nogil=True, cache=True)
def all_nearest_subtree(coords, ids, start, end, left, right, parent, lower, upper, max_depth,
                        root, best_d2, best_id, bound):
    """Dual-tree nearest-neighbor search for the query subtree at ``root``.

    Only positions under ``root`` and bounds of nodes under ``root`` are
    written, so disjoint query subtrees may run at the same time.

    Returns:
        Number of point distances computed
    """
    cap = 4 * max_depth + 8
    stack_q = np.empty(cap, dtype=np.int64)
    stack_r = np.empty(cap, dtype=np.int64)
    stack_q[0] = root
    stack_r[0] = 0
    top = 1
    evaluated = 0
    while top > 0:
        top -= 1
        q = stack_q[top]
        r = stack_r[top]
        if box_gap_sq(lower, upper, q, lower, upper, r) > bound[q]:
            continue
        q_leaf = left[q] < 0
        r_leaf = left[r] < 0
        if q_leaf and r_leaf:
            worst = 0.0
            for qi in range(start[q], end[q]):
                bd = best_d2[qi]
                bi = best_id[qi]
                for rj in range(start[r], end[r]):
                    if qi == rj:
                        continue
                    d2 = point_dist_sq(coords, qi, coords, rj)
                    if d2 < bd or (d2 == bd and ids[rj] < bi):
                        bd = d2
                        bi = ids[rj]
                best_d2[qi] = bd
                best_id[qi] = bi
                if bd > worst:
                    worst = bd
            evaluated += (end[q] - start[q]) * (end[r] - start[r])
            bound[q] = worst
            node = q
            while node != root:
                up = parent[node]
                refreshed = max(bound[left[up]], bound[right[up]])
                if refreshed == bound[up]:
                    break
                bound[up] = refreshed
                node = up
        elif q_leaf or (not r_leaf and end[r] - start[r] >= end[q] - start[q]):
            first = left[r]
            second = right[r]
            if box_gap_sq(lower, upper, q, lower, upper, second) < box_gap_sq(lower, upper, q, lower, upper, first):
                first, second = second, first
            stack_q[top] = q
            stack_r[top] = second
            stack_q[top + 1] = q
            stack_r[top + 1] = first
            top += 2
        else:
            stack_q[top] = right[q]
            stack_r[top] = r
            stack_q[top + 1] = left[q]
            stack_r[top + 1] = r
            top += 2
    return evaluated


@numba.njit(nogil=True, cache=True)
def farthest_pair_subtree(coords_a, start_a, end_a, left_a, right_a, lower_a, upper_a,
                          coords_b, start_b, end_b, left_b, right_b, lower_b, upper_b,
                          max_depth, a0, b0, best):
    """Largest squared distance under the node pair ``(a0, b0)``, or ``best`` if none beats it.

    Returns:
        ``(best squared distance, point distances computed)``
    """
    cap = 2 * max_depth + 8
    stack_a = np.empty(cap, dtype=np.int64)
    stack_b = np.empty(cap, dtype=np.int64)
    stack_a[0] = a0
    stack_b[0] = b0
    top = 1
    evaluated = 0
    while top > 0:
        top -= 1
        a = stack_a[top]
        b = stack_b[top]
        if box_span_sq(lower_a, upper_a, a, lower_b, upper_b, b) <= best:
            continue
        a_leaf = left_a[a] < 0
        b_leaf = left_b[b] < 0
        if a_leaf and b_leaf:
            for i in range(start_a[a], end_a[a]):
                for j in range(start_b[b], end_b[b]):
                    d2 = point_dist_sq(coords_a, i, coords_b, j)
                    if d2 > best:
                        best = d2
            evaluated += (end_a[a] - start_a[a]) * (end_b[b] - start_b[b])
            continue
        if a_leaf or (not b_leaf and end_b[b] - start_b[b] > end_a[a] - start_a[a]):
            a1, b1, a2, b2 = a, left_b[b], a, right_b[b]
        else:
            a1, b1, a2, b2 = left_a[a], b, right_a[a], b
        # The wider pair is popped first.
        if box_span_sq(lower_a, upper_a, a1, lower_b, upper_b, b1) > box_span_sq(lower_a, upper_a, a2,
                                                                                 lower_b, upper_b, b2):
            a1, b1, a2, b2 = a2, b2, a1, b1
        stack_a[top] = a1
        stack_b[top] = b1
        stack_a[top + 1] = a2
        stack_b[top + 1] = b2
        top += 2
    return best, evaluated


@numba.njit(nogil=True, cache=True)
def complete_linkage_counts(coords, labels, start, end, left, right, lower, upper, mark, max_depth,
                            center, r2, own):
    """In-ball point counts, as ``(cluster, count)`` records, over a marked tree.

    A marked subtree lying wholly inside the ball yields one record for its
    size; clusters labelled ``own`` are skipped. Records are not merged.

    Returns:
        ``(cluster labels, counts, point distances computed)``
    """
    stack = np.empty(max_depth + 2, dtype=np.int64)
    stack[0] = 0
    top = 1
    out_label = np.empty(16, dtype=np.int64)
    out_count = np.empty(16, dtype=np.int64)
    k = 0
    evaluated = 0
    while top > 0:
        top -= 1
        node = stack[top]
        node_mark = mark[node]
        if node_mark == own or box_min_dist_sq(lower, upper, node, center) > r2:
            continue
        if node_mark != NO_MARK and box_max_dist_sq(lower, upper, node, center) <= r2:
            if k == out_label.shape[0]:
                out_label = _grow(out_label)
                out_count = _grow(out_count)
            out_label[k] = node_mark
            out_count[k] = end[node] - start[node]
            k += 1
            continue
        if left[node] >= 0:
            stack[top] = right[node]
            stack[top + 1] = left[node]
            top += 2
            continue
        evaluated += end[node] - start[node]
        for pos in range(start[node], end[node]):
            if labels[pos] == own or _query_dist_sq(coords, pos, center) > r2:
                continue
            if k == out_label.shape[0]:
                out_label = _grow(out_label)
                out_count = _grow(out_count)
            out_label[k] = labels[pos]
            out_count[k] = 1
            k += 1
    return out_label[:k], out_count[:k], evaluated


@numba.njit(nogil=True, cache=True)
def pair_distance_sum(xa, xb):
    """Sum of Euclidean distances over all row pairs of ``xa`` x ``xb``."""
    total = 0.0
    for i in range(xa.shape[0]):
        for j in range(xb.shape[0]):
            total += math.sqrt(point_dist_sq(xa, i, xb, j))
    return total


@numba.njit(nogil=True, cache=True)
def pair_max_dist_sq(xa, xb):
    """Largest squared distance over all row pairs of ``xa`` x ``xb``."""
    best = 0.0
    for i in range(xa.shape[0]):
        for j in range(xb.shape[0]):
            d2 = point_dist_sq(xa, i, xb, j)
            if d2 > best:
                best = d2
    return best


@numba.njit(nogil=True, cache=True)
def stat_distance(ward, i, j, sizes, centroids, variances):
    """Ward (``ward`` True) or avg-2 distance of clusters ``i`` and ``j`` from their statistics."""
    d2 = point_dist_sq(centroids, i, centroids, j)
    if ward:
        return math.sqrt(2.0 * sizes[i] * sizes[j] / (sizes[i] + sizes[j]) * d2)
    return d2 + (variances[i] / sizes[i] + variances[j] / sizes[j])


@numba.njit(nogil=True, parallel=True, cache=True)
def statistics_search(terminals, pred_id, pred_dist, alive, sizes, centroids, variances,
                      coords, ids, start, end, left, right, lower, upper, mark, max_depth,
                      ward, n_min, pad):
    """Nearest active cluster of every terminal for Ward / avg-2, over the centroid tree.

    The bound comes from a live predecessor link when there is one,
    otherwise from the nearest other centroid; the centroid ball it implies
    is then scanned. Each terminal only writes its own output slot.

    Returns:
        ``(neighbor ids, distances, distance evaluations, point distances)``,
        one entry per terminal
    """
    m = terminals.shape[0]
    out_id = np.empty(m, dtype=np.int64)
    out_dist = np.empty(m, dtype=np.float64)
    evals = np.zeros(m, dtype=np.int64)
    work = np.zeros(m, dtype=np.int64)
    for t in numba.prange(m):
        i = terminals[t]
        query = centroids[i]
        anchor = pred_id[i]
        beta = pred_dist[i]
        if anchor < 0 or not alive[anchor]:
            pos, _, evaluated = nearest_position(coords, ids, ids, start, end, left, right, lower, upper,
                                                 mark, max_depth, query, i, NO_EXCLUSION)
            anchor = ids[pos]
            beta = stat_distance(ward, i, anchor, sizes, centroids, variances)
            work[t] += evaluated + 1
            evals[t] += 1
        if ward:
            radius = beta * math.sqrt((sizes[i] + n_min) / (2.0 * n_min * sizes[i]))
        else:
            radius = math.sqrt(beta)
        radius *= pad
        best_id = anchor
        best_dist = beta
        hits = ball_positions(coords, start, end, left, right, lower, upper, max_depth, query, radius * radius)
        for h in range(hits.shape[0]):
            j = ids[hits[h]]
            if j == i or j == anchor:
                continue
            d = stat_distance(ward, i, j, sizes, centroids, variances)
            evals[t] += 1
            work[t] += 1
            if d < best_dist or (d == best_dist and j < best_id):
                best_id = j
                best_dist = d
        out_id[t] = best_id
        out_dist[t] = best_dist
    return out_id, out_dist, evals, work
