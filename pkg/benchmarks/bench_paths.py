"""Compare the compiled and pure-Python path-search kernels on a random graph.

    python benchmarks/bench_paths.py --entities 14541 --triples 310116 --queries 200

Both kernels must return identical results; the script exits non-zero otherwise.
"""

from __future__ import annotations

import argparse
import random
import sys
import time

from kgverify import _pathcore_py, pathsearch
from kgverify.graph import KnowledgeGraph, Triple


def random_graph(n_entities: int, n_relations: int, n_triples: int, seed: int) -> KnowledgeGraph:
    rng = random.Random(seed)
    triples: set[Triple] = set()
    while len(triples) < n_triples:
        h, t = rng.randrange(n_entities), rng.randrange(n_entities)
        if h != t:
            triples.add(Triple(f"e{h}", f"r{rng.randrange(n_relations)}", f"e{t}"))
    return KnowledgeGraph.from_triples(triples)


def time_kernel(g: KnowledgeGraph, pairs, kernel, degree_cap, max_paths) -> tuple[float, list]:
    out = []
    start = time.perf_counter()
    for a, b in pairs:
        out.append(pathsearch.find_paths(g, a, b, max_paths=max_paths, degree_cap=degree_cap, kernel=kernel))
    return time.perf_counter() - start, out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--entities", type=int, default=14541)
    p.add_argument("--relations", type=int, default=237)
    p.add_argument("--triples", type=int, default=310116)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--degree-cap", type=int, default=1000)
    p.add_argument("--max-paths", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    t0 = time.perf_counter()
    g = random_graph(args.entities, args.relations, args.triples, args.seed)
    g.adjacency
    print(f"graph: {g.summary()} built in {time.perf_counter() - t0:.2f}s")
    rng = random.Random(args.seed + 1)
    ents = list(g.entities)
    pairs = [(rng.choice(ents), rng.choice(ents)) for _ in range(args.queries)]

    if pathsearch.KERNEL != "compiled":
        print("compiled kernel not available; build with `pip install -e . --no-build-isolation`")
        return 1
    compiled = pathsearch._kernel
    tc, rc = time_kernel(g, pairs, compiled, args.degree_cap, args.max_paths)
    tp, rp = time_kernel(g, pairs, _pathcore_py.enumerate_paths, args.degree_cap, args.max_paths)
    if rc != rp:
        print("MISMATCH between kernels", file=sys.stderr)
        return 2
    found = sum(len(r) for r in rc)
    print(f"queries: {len(pairs)}, paths returned: {found}")
    print(f"compiled: {tc:.3f}s ({1e3 * tc / len(pairs):.2f} ms/query)")
    print(f"python:   {tp:.3f}s ({1e3 * tp / len(pairs):.2f} ms/query)")
    print(f"speedup:  {tp / tc:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
