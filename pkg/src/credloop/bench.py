"""Kernel benchmark: numba row loops vs scipy.sparse matmuls.

Run as ``python -m credloop.bench``.  Shapes default to the training hot
path: a few thousand unit-norm document rows, a 5000-feature vocabulary and
152 label columns.  The first numba call is timed separately as JIT warmup.
"""

from __future__ import annotations

import argparse
import time

import numpy as np
from scipy import sparse

from . import kernels


def synthetic_csr(rows: int, features: int, nnz_per_row: int, seed: int) -> sparse.csr_matrix:
    rng = np.random.default_rng(seed)
    indptr = np.arange(0, rows * nnz_per_row + 1, nnz_per_row, dtype=np.int32)
    indices = np.empty(rows * nnz_per_row, dtype=np.int32)
    for i in range(rows):
        cols = rng.choice(features, size=nnz_per_row, replace=False)
        indices[i * nnz_per_row : (i + 1) * nnz_per_row] = np.sort(cols)
    data = rng.random(rows * nnz_per_row)
    x = sparse.csr_matrix((data, indices, indptr), shape=(rows, features))
    # unit rows, like TF-IDF output
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1))).ravel()
    return sparse.diags(1.0 / norms) @ x


def _time(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run(rows: int, features: int, labels: int, nnz: int, repeats: int, seed: int) -> str:
    x = synthetic_csr(rows, features, nnz, seed)
    rng = np.random.default_rng(seed + 1)
    w = rng.standard_normal((features, labels))
    r = rng.standard_normal((rows, labels))

    lines = [
        f"shape: x=({rows}x{features}, {nnz} nnz/row), w=({features}x{labels})",
        f"selected backend: {kernels.backend_name()}",
        "",
        f"{'backend':<8} {'op':<8} {'best of ' + str(repeats):<12} {'rel speed':<9}",
    ]
    base: dict[str, float] = {}
    table = kernels.backends()
    for name in sorted(table):
        matmul, rmatmul = table[name]
        if name == "numba":
            t0 = time.perf_counter()
            matmul(x, w)
            rmatmul(x, r)
            lines.append(f"(numba jit warmup: {time.perf_counter() - t0:.3f}s)")
        for op, fn, arg in (("matmul", matmul, w), ("rmatmul", rmatmul, r)):
            t = _time(fn, x, arg, repeats=repeats)
            base.setdefault(op, t)
            lines.append(f"{name:<8} {op:<8} {t * 1000:>9.3f}ms {base[op] / t:>8.2f}x")

    out = {name: table[name][0](x, w) for name in table}
    if len(out) == 2:
        diff = float(np.max(np.abs(out["numpy"] - out["numba"])))
        lines.append("")
        lines.append(f"max |numpy - numba| over matmul output: {diff:.3e}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="benchmark the sparse kernels")
    parser.add_argument("--rows", type=int, default=3000)
    parser.add_argument("--features", type=int, default=5000)
    parser.add_argument("--labels", type=int, default=152)
    parser.add_argument("--nnz", type=int, default=60, help="nonzeros per row")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=20260814)
    args = parser.parse_args(argv)
    print(run(args.rows, args.features, args.labels, args.nnz, args.repeats, args.seed))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
