"""Benchmark the compiled kernels against the numpy fallback.

Run with ``python -m faultkem.bench``. Both backends are imported
directly so the comparison works regardless of which one the package
selected at import time.
"""

from __future__ import annotations

import time

import numpy as np

from . import _pykernels
from .ring import Seed
from .schemes import get_params, kem_decaps, kem_encaps, kem_keygen

try:
    from . import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeat: int) -> float:
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def bench_kernels(repeat: int = 300) -> list[tuple[str, float, float | None]]:
    rng = np.random.default_rng(7)
    q = 3329
    a = rng.integers(0, q, 256, dtype=np.int64)
    b = rng.integers(0, q, 256, dtype=np.int64)
    mat = rng.integers(0, q, (3, 3, 256), dtype=np.int64)
    vec = rng.integers(0, q, (3, 256), dtype=np.int64)
    cases = [
        ("negacyclic_mul 256", lambda k: k.negacyclic_mul(a, b, q)),
        ("matvec_mul 3x3", lambda k: k.matvec_mul(mat, vec, q, False)),
        ("vec_dot l=3", lambda k: k.vec_dot(vec, vec, q)),
    ]
    rows = []
    for name, fn in cases:
        py = _time(lambda: fn(_pykernels), repeat)
        cy = _time(lambda: fn(_kernels), repeat) if _kernels else None
        rows.append((name, py, cy))
    return rows


def bench_decaps(repeat: int = 50) -> list[tuple[str, float, float | None]]:
    # Full decapsulation timing under whichever backend is active.
    rows = []
    for scheme_id in ("kyber768", "saber"):
        kp = kem_keygen(get_params(scheme_id), Seed.from_int(1))
        ct, _ = kem_encaps(kp.pk, seed=Seed.from_int(2))
        rows.append((f"kem_decaps {scheme_id}", _time(lambda: kem_decaps(kp, ct), repeat), None))
    return rows


def main():
    from .ring import BACKEND

    print(f"active backend: {BACKEND}")
    print(f"{'case':24s} {'python':>12s} {'compiled':>12s} {'speedup':>9s}")
    for name, py, cy in bench_kernels():
        if cy is None:
            print(f"{name:24s} {py * 1e6:10.1f}us {'n/a':>12s}")
        else:
            print(f"{name:24s} {py * 1e6:10.1f}us {cy * 1e6:10.1f}us {py / cy:8.1f}x")
    for name, active, _ in bench_decaps():
        print(f"{name:24s} {'':12s} {active * 1e6:10.1f}us  (active backend)")


if __name__ == "__main__":
    main()
