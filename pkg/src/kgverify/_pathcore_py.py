"""Pure-Python bounded bidirectional path enumeration (fallback for ``_pathcore``).

Both implementations share one contract. Nodes and relations are integer
indices; ``indptr/other/rel/forward`` is the CSR incidence list where slot ``s``
of node ``u`` is the edge ``(u, rel[s], other[s])`` if ``forward[s]`` else
``(other[s], rel[s], u)``. A hop is ``(u, r, f, v)`` with ``f`` 1 for forward,
0 for backward. Paths are simple, have 1 to ``max_hops`` (<= 3) hops, and may
only pass through nodes whose degree is at most ``degree_cap`` (negative means
no cap). Paths come back grouped by length, each group sorted; enumeration stops
after the first length group that brings the total to ``limit`` (<= 0: no limit).
"""

from __future__ import annotations


def enumerate_paths(indptr, other, rel, forward, degree, a, b, max_hops, degree_cap, excluded, limit):
    if a == b or max_hops < 1:
        return []
    indptr = indptr.tolist() if hasattr(indptr, "tolist") else indptr
    other = other.tolist() if hasattr(other, "tolist") else other
    rel = rel.tolist() if hasattr(rel, "tolist") else rel
    forward = forward.tolist() if hasattr(forward, "tolist") else forward
    degree = degree.tolist() if hasattr(degree, "tolist") else degree
    excl = {tuple(int(x) for x in row) for row in excluded}

    def interior_ok(x):
        return x != a and x != b and (degree_cap < 0 or degree[x] <= degree_cap)

    def blocked(u, r, f, v):
        return bool(excl) and ((u, r, v) if f else (v, r, u)) in excl

    # forward frontier, depth 1
    first = []
    for s in range(indptr[a], indptr[a + 1]):
        v, r, f = other[s], rel[s], forward[s]
        if v != a and not blocked(a, r, f, v):
            first.append((a, r, f, v))

    results = sorted((h,) for h in first if h[3] == b)
    if max_hops == 1 or (0 < limit <= len(results)):
        return results

    # backward frontier, depth 1, keyed by meeting node; hops stored reversed
    back: dict[int, list[tuple]] = {}
    for s in range(indptr[b], indptr[b + 1]):
        m, r, f = other[s], rel[s], forward[s]
        if interior_ok(m) and not blocked(b, r, f, m):
            back.setdefault(m, []).append((m, r, 1 - f, b))

    two = []
    for h1 in first:
        for h2 in back.get(h1[3], ()):
            two.append((h1, h2))
    results.extend(sorted(two))
    if max_hops == 2 or (0 < limit <= len(results)):
        return results

    # forward frontier, depth 2, only towards nodes already met from b
    three = []
    for h1 in first:
        x = h1[3]
        if not interior_ok(x):
            continue
        for s in range(indptr[x], indptr[x + 1]):
            y = other[s]
            if y == x or y not in back:
                continue
            r, f = rel[s], forward[s]
            if blocked(x, r, f, y):
                continue
            h2 = (x, r, f, y)
            for h3 in back[y]:
                three.append((h1, h2, h3))
    results.extend(sorted(three))
    return results
