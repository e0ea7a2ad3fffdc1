# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bounded bidirectional path enumeration.

Same contract as ``kgverify._pathcore_py.enumerate_paths``.
"""

import numpy as np

from libc.stdint cimport int64_t, int8_t


cdef inline bint _blocked(int64_t u, int64_t r, int8_t f, int64_t v,
                          const int64_t[:, :] ex, Py_ssize_t nex) noexcept nogil:
    cdef int64_t h, t
    cdef Py_ssize_t i
    if nex == 0:
        return False
    if f:
        h = u
        t = v
    else:
        h = v
        t = u
    for i in range(nex):
        if ex[i, 0] == h and ex[i, 1] == r and ex[i, 2] == t:
            return True
    return False


cdef inline Py_ssize_t _find(const int64_t[:] keys, Py_ssize_t n, int64_t x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    if lo < n and keys[lo] == x:
        return lo
    return -1


def enumerate_paths(indptr_a, other_a, rel_a, forward_a, degree_a,
                    int64_t a, int64_t b, int max_hops, int64_t degree_cap,
                    excluded, Py_ssize_t limit):
    cdef const int64_t[:] indptr = np.ascontiguousarray(indptr_a, dtype=np.int64)
    cdef const int64_t[:] other = np.ascontiguousarray(other_a, dtype=np.int64)
    cdef const int64_t[:] rel = np.ascontiguousarray(rel_a, dtype=np.int64)
    cdef const int8_t[:] forward = np.ascontiguousarray(forward_a, dtype=np.int8)
    cdef const int64_t[:] degree = np.ascontiguousarray(degree_a, dtype=np.int64)
    ex_arr = np.asarray(excluded, dtype=np.int64).reshape(-1, 3)
    cdef const int64_t[:, :] ex = ex_arr
    cdef Py_ssize_t nex = ex_arr.shape[0]

    cdef Py_ssize_t s, s2, j, k, nback
    cdef int64_t v, m, x, y, r, r2
    cdef int8_t f, f2

    if a == b or max_hops < 1:
        return []

    first = []
    for s in range(indptr[a], indptr[a + 1]):
        v = other[s]
        r = rel[s]
        f = forward[s]
        if v != a and not _blocked(a, r, f, v, ex, nex):
            first.append((a, r, f, v))

    results = sorted([(h,) for h in first if h[3] == b])
    if max_hops == 1 or (0 < limit <= len(results)):
        return results

    # backward frontier from b, reversed hops, grouped by meeting node
    back_rows = []
    for s in range(indptr[b], indptr[b + 1]):
        m = other[s]
        if m == a or m == b or (degree_cap >= 0 and degree[m] > degree_cap):
            continue
        r = rel[s]
        f = forward[s]
        if _blocked(b, r, f, m, ex, nex):
            continue
        back_rows.append((m, r, 1 - f))
    back_rows.sort()
    nback = len(back_rows)
    keys_l = []
    starts_l = []
    cdef int64_t last = -1
    for k in range(nback):
        m = back_rows[k][0]
        if k == 0 or m != last:
            keys_l.append(m)
            starts_l.append(k)
            last = m
    starts_l.append(nback)
    keys_np = np.asarray(keys_l, dtype=np.int64)
    starts_np = np.asarray(starts_l, dtype=np.int64)
    cdef const int64_t[:] keys = keys_np
    cdef const int64_t[:] starts = starts_np
    cdef Py_ssize_t nkeys = keys_np.shape[0]
    back_hops = [(row[0], row[1], row[2], b) for row in back_rows]

    two = []
    for h1 in first:
        j = _find(keys, nkeys, h1[3])
        if j >= 0:
            for k in range(starts[j], starts[j + 1]):
                two.append((h1, back_hops[k]))
    two.sort()
    results.extend(two)
    if max_hops == 2 or (0 < limit <= len(results)):
        return results

    three = []
    for h1 in first:
        x = h1[3]
        if x == a or x == b or (degree_cap >= 0 and degree[x] > degree_cap):
            continue
        for s2 in range(indptr[x], indptr[x + 1]):
            y = other[s2]
            if y == x:
                continue
            j = _find(keys, nkeys, y)
            if j < 0:
                continue
            r2 = rel[s2]
            f2 = forward[s2]
            if _blocked(x, r2, f2, y, ex, nex):
                continue
            h2 = (x, r2, f2, y)
            for k in range(starts[j], starts[j + 1]):
                three.append((h1, h2, back_hops[k]))
    three.sort()
    results.extend(three)
    return results
