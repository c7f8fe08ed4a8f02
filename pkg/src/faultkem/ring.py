"""Exact arithmetic in Z_q[x]/(x^n + 1) plus the seeded samplers.

Everything here is a pure function of its inputs: identical seeds give
identical coefficient streams on every platform (the stream is SHAKE-128).
Coefficients are kept in the canonical range [0, q) everywhere; signed
interpretation happens only at decode boundaries in the scheme layer.

The negacyclic multiplication kernels live in a compiled extension when
one was built, with a numpy fallback selected at import time.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

if os.environ.get("FAULTKEM_PURE_PYTHON"):
    from . import _pykernels as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND

SEED_BYTES = 32


@dataclass(frozen=True)
class Modulus:
    """Ring shape: coefficients mod q, degree mod x^n + 1."""

    q: int
    n: int

    def __post_init__(self):
        if self.n < 1 or self.n & (self.n - 1):
            raise ParameterError(f"ring degree must be a power of two, got {self.n}")
        if self.q <= 2:
            raise ParameterError(f"modulus must exceed 2, got {self.q}")


@dataclass(frozen=True)
class Seed:
    """Fixed-length seed feeding a deterministic SHAKE-128 byte stream."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != SEED_BYTES:
            raise ParameterError(f"seed must be {SEED_BYTES} bytes, got {len(self.data)}")

    @classmethod
    def from_int(cls, value: int) -> "Seed":
        return cls(value.to_bytes(SEED_BYTES, "little", signed=False))

    def expand(self, label: bytes | str, nbytes: int) -> bytes:
        if isinstance(label, str):
            label = label.encode()
        return hashlib.shake_128(self.data + label).digest(nbytes)

    def derive(self, label: bytes | str) -> "Seed":
        return Seed(self.expand(label, SEED_BYTES))


def _as_coeffs(values, m: Modulus) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.shape != (m.n,):
        raise ParameterError(f"expected {m.n} coefficients, got shape {arr.shape}")
    if ((arr < 0) | (arr >= m.q)).any():
        raise ParameterError("coefficients outside canonical range [0, q)")
    return arr


@dataclass(frozen=True)
class Poly:
    """Element of R_q with canonical coefficients."""

    coeffs: np.ndarray
    m: Modulus

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs, self.m))

    @classmethod
    def zeros(cls, m: Modulus) -> "Poly":
        return cls(np.zeros(m.n, dtype=np.int64), m)

    @classmethod
    def monomial(cls, c: int, i: int, m: Modulus) -> "Poly":
        coeffs = np.zeros(m.n, dtype=np.int64)
        coeffs[i % m.n] = c % m.q
        return cls(coeffs, m)

    def __eq__(self, other):
        return (
            isinstance(other, Poly)
            and self.m == other.m
            and np.array_equal(self.coeffs, other.coeffs)
        )


@dataclass(frozen=True)
class PolyVec:
    """Vector of l polynomials sharing one modulus; stored as an (l, n) array."""

    data: np.ndarray
    m: Modulus

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != self.m.n:
            raise ParameterError(f"expected shape (l, {self.m.n}), got {arr.shape}")
        if ((arr < 0) | (arr >= self.m.q)).any():
            raise ParameterError("coefficients outside canonical range [0, q)")
        object.__setattr__(self, "data", arr)

    @property
    def l(self) -> int:
        return self.data.shape[0]

    def poly(self, i: int) -> Poly:
        return Poly(self.data[i], self.m)


def poly_mul_negacyclic(a: Poly, b: Poly, m: Modulus) -> Poly:
    """Product a*b reduced mod (x^n + 1, q), schoolbook complexity."""
    if a.m != m or b.m != m:
        raise ParameterError("operand modulus mismatch")
    return Poly(_impl.negacyclic_mul(a.coeffs, b.coeffs, m.q), m)


# Raw-array entry points used by the scheme layer (no Poly wrapping).
def mul_arrays(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    return _impl.negacyclic_mul(a, b, q)


def matvec(mat: np.ndarray, vec: np.ndarray, q: int, transpose: bool = False) -> np.ndarray:
    return _impl.matvec_mul(np.ascontiguousarray(mat), np.ascontiguousarray(vec), q, transpose)


def vec_dot(u: np.ndarray, s: np.ndarray, q: int) -> np.ndarray:
    return _impl.vec_dot(np.ascontiguousarray(u), np.ascontiguousarray(s), q)


def _check_width(d: int, m: Modulus):
    if d < 1 or d >= m.q.bit_length():
        raise ParameterError(f"bit-width {d} invalid for modulus {m.q}")


def compress(x: int, d: int, m: Modulus) -> int:
    """round(2^d * x / q) mod 2^d with ties rounded up."""
    _check_width(d, m)
    if not 0 <= x < m.q:
        raise ParameterError(f"coefficient {x} outside [0, {m.q})")
    return (((x << (d + 1)) + m.q) // (2 * m.q)) % (1 << d)


def decompress(y: int, d: int, m: Modulus) -> int:
    """round(q * y / 2^d) with ties rounded up."""
    _check_width(d, m)
    if not 0 <= y < (1 << d):
        raise ParameterError(f"value {y} outside [0, 2^{d})")
    return (m.q * y + (1 << (d - 1))) >> d


def compress_array(arr: np.ndarray, d: int, q: int) -> np.ndarray:
    return ((arr.astype(np.int64) * (2 << d) + q) // (2 * q)) % (1 << d)


def decompress_array(arr: np.ndarray, d: int, q: int) -> np.ndarray:
    return (arr.astype(np.int64) * q + (1 << (d - 1))) >> d


def shift_round(x: int, from_bits: int, to_bits: int) -> int:
    """Power-of-two rounding: add the half constant, then drop low bits."""
    if from_bits <= to_bits:
        raise ParameterError("from_bits must exceed to_bits")
    return ((x + (1 << (from_bits - to_bits - 1))) >> (from_bits - to_bits)) % (1 << to_bits)


def shift_round_array(arr: np.ndarray, from_bits: int, to_bits: int) -> np.ndarray:
    return ((arr + (1 << (from_bits - to_bits - 1))) >> (from_bits - to_bits)) % (1 << to_bits)


def cbd_from_bytes(buf: bytes, eta: int, n: int, q: int) -> np.ndarray:
    """Centered-binomial coefficients from a byte stream, reduced mod q.

    Coefficient i consumes bits [2*eta*i, 2*eta*(i+1)) of the stream
    (little-endian within each byte): the first eta bits add, the next
    eta subtract.
    """
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")
    step = 2 * eta
    acc = np.zeros(n, dtype=np.int64)
    for k in range(eta):
        acc += bits[k : step * n : step]
        acc -= bits[eta + k : step * n : step]
    return np.mod(acc, q)


def sample_cbd(seed: Seed, eta: int, m: Modulus) -> Poly:
    """Sample a CBD(eta) polynomial: support [-eta, eta] mapped to [0, q)."""
    if eta < 1:
        raise ParameterError(f"CBD parameter must be >= 1, got {eta}")
    buf = seed.expand(b"cbd", (2 * eta * m.n + 7) // 8)
    return Poly(cbd_from_bytes(buf, eta, m.n, m.q), m)


def uniform_from_seed(seed: Seed, label: bytes, n: int, q: int) -> np.ndarray:
    """Uniform coefficients mod q; power-of-two moduli read bits directly,
    prime moduli (q < 4096) use 12-bit rejection sampling."""
    if q & (q - 1) == 0:
        buf = seed.expand(label, 2 * n)
        vals = np.frombuffer(buf, dtype="<u2").astype(np.int64)
        return vals % q
    if q >= 4096:
        raise ParameterError(f"no uniform sampler for modulus {q}")
    # 12-bit rejection; SHAKE output is prefix-stable, so on the (vanishingly
    # rare) refill the whole stream is re-parsed and the first n accepted
    # values are identical.
    nbytes = 3 * n
    while True:
        buf = np.frombuffer(seed.expand(label, nbytes), dtype=np.uint8).astype(np.int64)
        buf = buf.reshape(-1, 3)
        d1 = buf[:, 0] | ((buf[:, 1] & 0x0F) << 8)
        d2 = (buf[:, 1] >> 4) | (buf[:, 2] << 4)
        cand = np.ravel(np.column_stack([d1, d2]))
        cand = cand[cand < q]
        if len(cand) >= n:
            return cand[:n].copy()
        nbytes *= 2


def sample_uniform(seed: Seed, m: Modulus) -> Poly:
    return Poly(uniform_from_seed(seed, b"uniform", m.n, m.q), m)
