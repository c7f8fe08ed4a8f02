"""Reference-level LPR, Kyber and Saber PKE plus the FO-transformed KEM.

Two scheme families share one code path:

* ``lwe``: LPR and the Kyber instances. Noisy b = A*s + e over a prime
  modulus; Kyber additionally compresses ciphertext coefficients to
  d_u / d_v bits (the generic LPR instance ships uncompressed).
* ``lwr``: the Saber instances. Deterministic rounding replaces noise:
  b = (A*s + h) >> (eps_q - eps_p), with the usual h1/h2 constants.

Decapsulation mirrors the standard transform: decrypt, re-derive the
coins, re-encrypt, compare serialized ciphertexts, and fall back to the
rejection key on mismatch. The comparison outcome routes through a
FaultController so a simulated fault can force the success branch - the
attack surface everything else in this package is built around.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError
from .ring import (
    Modulus,
    Seed,
    cbd_from_bytes,
    compress_array,
    decompress_array,
    matvec,
    shift_round_array,
    uniform_from_seed,
    vec_dot,
)

FAMILY_LWE = "lwe"
FAMILY_LWR = "lwr"


@dataclass(frozen=True)
class SchemeParams:
    scheme_id: str
    family: str
    n: int
    l: int
    q: int
    eta1: int
    eta2: int
    d_u: Optional[int] = None  # lwe only; None = uncompressed ring scheme
    d_v: Optional[int] = None

    def __post_init__(self):
        if self.family not in (FAMILY_LWE, FAMILY_LWR):
            raise ParameterError(f"unknown family {self.family}")
        if self.family == FAMILY_LWR and self.q & (self.q - 1):
            raise ParameterError("lwr family requires a power-of-two modulus")

    @property
    def modulus(self) -> Modulus:
        return Modulus(self.q, self.n)

    # --- lwr (Saber) exponents and rounding constants ------------------
    @property
    def eps_q(self) -> int:
        return self.q.bit_length() - 1

    @property
    def eps_p(self) -> int:
        if self.family != FAMILY_LWR:
            raise ParameterError("eps_p is lwr-only")
        return 10  # all Saber instances share p = 2^10

    @property
    def eps_t(self) -> int:
        if self.family != FAMILY_LWR:
            raise ParameterError("eps_t is lwr-only")
        return self._eps_t

    @property
    def p(self) -> int:
        """Modulus of the ciphertext u component."""
        if self.family == FAMILY_LWR:
            return 1 << self.eps_p
        return 1 << self.d_u if self.d_u is not None else self.q

    @property
    def T(self) -> int:
        """Modulus of the ciphertext v component."""
        if self.family == FAMILY_LWR:
            return 1 << self.eps_t
        return 1 << self.d_v if self.d_v is not None else self.q

    @property
    def h1(self) -> int:
        return 1 << (self.eps_q - self.eps_p - 1)

    @property
    def h2(self) -> int:
        ep, et = self.eps_p, self.eps_t
        return (1 << (ep - 2)) - (1 << (ep - et - 1)) + (1 << (self.eps_q - ep - 1))

    @property
    def cbd_support(self) -> tuple[int, ...]:
        return tuple(range(-self.eta1, self.eta1 + 1))

    @property
    def message_bytes(self) -> int:
        return self.n // 8


# eps_t rides in a private slot so SchemeParams stays frozen-friendly.
def _lwr(scheme_id, l, eps_t, eta):
    p = SchemeParams(scheme_id, FAMILY_LWR, 256, l, 1 << 13, eta, eta)
    object.__setattr__(p, "_eps_t", eps_t)
    return p


_SCHEMES = {
    "lpr-generic": SchemeParams("lpr-generic", FAMILY_LWE, 256, 1, 3329, 2, 2),
    "kyber512": SchemeParams("kyber512", FAMILY_LWE, 256, 2, 3329, 3, 2, d_u=10, d_v=4),
    "kyber768": SchemeParams("kyber768", FAMILY_LWE, 256, 3, 3329, 2, 2, d_u=10, d_v=4),
    "kyber1024": SchemeParams("kyber1024", FAMILY_LWE, 256, 4, 3329, 2, 2, d_u=11, d_v=5),
    "lightsaber": _lwr("lightsaber", 2, 3, 5),
    "saber": _lwr("saber", 3, 4, 4),
    "firesaber": _lwr("firesaber", 4, 6, 3),
}

SCHEME_IDS = tuple(_SCHEMES)


def get_params(scheme_id: str) -> SchemeParams:
    try:
        return _SCHEMES[scheme_id]
    except KeyError:
        raise ParameterError(f"unknown scheme {scheme_id!r}; known: {SCHEME_IDS}") from None


# --------------------------------------------------------------------------
# Hash suite
# --------------------------------------------------------------------------

def _h(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=32).digest()


def _g(m: bytes, hpk: bytes) -> tuple[bytes, bytes]:
    d = hashlib.blake2b(b"G" + m + hpk, digest_size=64).digest()
    return d[:32], d[32:]


def _f(key: bytes, digest: bytes) -> bytes:
    return hashlib.blake2s(key + digest, digest_size=16).digest()


@dataclass(frozen=True)
class HashSuite:
    """Deterministic hash triple (G, H, F) shared by decapsulation and the
    attacker's offline matching. Any standard family works; the default is
    BLAKE2 for speed (F sits in the matched oracle's hot loop)."""

    h: Callable[[bytes], bytes] = _h
    g: Callable[[bytes, bytes], tuple[bytes, bytes]] = _g
    f: Callable[[bytes, bytes], bytes] = _f
    name: str = "blake2"


DEFAULT_SUITE = HashSuite()


# --------------------------------------------------------------------------
# Message <-> bit helpers (bit i of the message lives at byte i>>3, bit i&7)
# --------------------------------------------------------------------------

def message_to_bits(m: bytes, n: int) -> np.ndarray:
    if len(m) != n // 8:
        raise ParameterError(f"message must be {n // 8} bytes, got {len(m)}")
    return np.unpackbits(np.frombuffer(m, dtype=np.uint8), bitorder="little").astype(np.int64)


def bits_to_message(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8), bitorder="little").tobytes()


# --------------------------------------------------------------------------
# Keys and ciphertexts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PublicKey:
    params: SchemeParams
    a_seed: bytes
    b: np.ndarray  # (l, n); R_q for lwe, R_p for lwr

    @cached_property
    def matrix(self) -> np.ndarray:
        return expand_matrix(self.params, self.a_seed)

    @cached_property
    def to_bytes(self) -> bytes:
        head = f"{self.params.scheme_id}|pk|".encode()
        return head + self.a_seed + self.b.astype("<u2").tobytes()


@dataclass(frozen=True)
class KeyPair:
    """Decapsulation key material: sk' = (s, pk, H(pk), z)."""

    pk: PublicKey
    s: np.ndarray  # (l, n) canonical mod q
    z: bytes
    h_pk: bytes

    @property
    def params(self) -> SchemeParams:
        return self.pk.params


@dataclass(frozen=True)
class Ciphertext:
    params: SchemeParams
    u: np.ndarray  # (l, n) in the compressed/native u domain
    v: np.ndarray  # (n,) in the compressed/native v domain

    def __post_init__(self):
        p, t = self.params.p, self.params.T
        if self.u.shape != (self.params.l, self.params.n) or self.v.shape != (self.params.n,):
            raise ParameterError("ciphertext component shape mismatch")
        if ((self.u < 0) | (self.u >= p)).any() or ((self.v < 0) | (self.v >= t)).any():
            raise ParameterError("ciphertext coefficients out of domain")

    @cached_property
    def to_bytes(self) -> bytes:
        head = f"{self.params.scheme_id}|ct|".encode()
        return head + self.u.astype("<u2").tobytes() + self.v.astype("<u2").tobytes()

    def __eq__(self, other):
        return isinstance(other, Ciphertext) and self.to_bytes == other.to_bytes


def expand_matrix(params: SchemeParams, a_seed: bytes) -> np.ndarray:
    """Deterministic public matrix A in R_q^{l x l} from a 32-byte seed."""
    seed = Seed(a_seed)
    a = np.empty((params.l, params.l, params.n), dtype=np.int64)
    for i in range(params.l):
        for j in range(params.l):
            a[i, j] = uniform_from_seed(seed, b"A%d,%d" % (i, j), params.n, params.q)
    return a


def _cbd_vec(params: SchemeParams, seed: Seed, label: bytes, eta: int) -> np.ndarray:
    """All l CBD polynomials of one vector from a single stream expansion."""
    per = (2 * eta * params.n + 7) // 8
    buf = seed.expand(label, per * params.l)
    out = np.empty((params.l, params.n), dtype=np.int64)
    for i in range(params.l):
        out[i] = cbd_from_bytes(buf[i * per : (i + 1) * per], eta, params.n, params.q)
    return out


# --------------------------------------------------------------------------
# PKE
# --------------------------------------------------------------------------

def pke_keygen(params: SchemeParams, seed: Seed, suite: HashSuite = DEFAULT_SUITE) -> KeyPair:
    a_seed = seed.expand(b"matrix", 32)
    s = _cbd_vec(params, seed.derive(b"secret"), b"s", params.eta1)
    a = expand_matrix(params, a_seed)
    if params.family == FAMILY_LWE:
        e = _cbd_vec(params, seed.derive(b"error"), b"e", params.eta1)
        b = (matvec(a, s, params.q) + e) % params.q
    else:
        b = shift_round_array(matvec(a, s, params.q) + params.h1, params.eps_q, params.eps_p)
    pk = PublicKey(params, a_seed, b)
    return KeyPair(pk=pk, s=s, z=seed.expand(b"z", 32), h_pk=suite.h(pk.to_bytes))


def keypair_from_parts(
    params: SchemeParams,
    a: np.ndarray,
    s: np.ndarray,
    e: Optional[np.ndarray] = None,
    z: bytes = b"\x00" * 32,
    suite: HashSuite = DEFAULT_SUITE,
) -> KeyPair:
    """Test/bench hook: build a keypair from explicit components.

    The public vector is recomputed from (a, s, e) so the keygen equation
    holds by construction. The matrix seed is a placeholder; callers that
    need enc/dec must go through this keypair's cached matrix.
    """
    a = np.asarray(a, dtype=np.int64).reshape(params.l, params.l, params.n)
    s = np.mod(np.asarray(s, dtype=np.int64).reshape(params.l, params.n), params.q)
    if params.family == FAMILY_LWE:
        e = np.zeros_like(s) if e is None else np.mod(e.reshape(params.l, params.n), params.q)
        b = (matvec(a, s, params.q) + e) % params.q
    else:
        b = shift_round_array(matvec(a, s, params.q) + params.h1, params.eps_q, params.eps_p)
    pk = PublicKey(params, b"\x00" * 32, b)
    object.__setattr__(pk, "matrix", a)  # prime the cached_property
    return KeyPair(pk=pk, s=s, z=z, h_pk=suite.h(pk.to_bytes))


def pke_enc(pk: PublicKey, m: bytes, coins: Seed, params: Optional[SchemeParams] = None) -> Ciphertext:
    params = params or pk.params
    bits = message_to_bits(m, params.n)
    a = pk.matrix
    if params.family == FAMILY_LWE:
        r = _cbd_vec(params, coins.derive(b"r"), b"r", params.eta1)
        e1 = _cbd_vec(params, coins.derive(b"e1"), b"e1", params.eta2)
        e2 = cbd_from_bytes(
            coins.derive(b"e2").expand(b"e2", (2 * params.eta2 * params.n + 7) // 8),
            params.eta2,
            params.n,
            params.q,
        )
        u = (matvec(a, r, params.q, transpose=True) + e1) % params.q
        v = (vec_dot(pk.b, r, params.q) + e2 + bits * (params.q // 2)) % params.q
        if params.d_u is not None:
            u = compress_array(u, params.d_u, params.q)
            v = compress_array(v, params.d_v, params.q)
    else:
        sp = _cbd_vec(params, coins.derive(b"sp"), b"sp", params.eta1)
        u = shift_round_array(
            matvec(a, sp, params.q, transpose=True) + params.h1, params.eps_q, params.eps_p
        )
        p = params.p
        vp = (vec_dot(pk.b, sp, p) + params.h1 - bits * (p >> 1)) % p
        v = vp >> (params.eps_p - params.eps_t)
    return Ciphertext(params, u, v)


def _dec_accumulate(kp: KeyPair, ct: Ciphertext, params: SchemeParams) -> np.ndarray:
    """Per-coefficient value handed to the decoder."""
    if params.family == FAMILY_LWE:
        u, v = ct.u, ct.v
        if params.d_u is not None:
            u = decompress_array(u, params.d_u, params.q)
            v = decompress_array(v, params.d_v, params.q)
        return (v - vec_dot(kp.s, u, params.q)) % params.q
    p = params.p
    return (vec_dot(ct.u, kp.s, p) - (p >> params.eps_t) * ct.v + params.h2) % p


def decode_bit(params: SchemeParams, accumulated: int) -> int:
    """Message bit from one accumulated coefficient."""
    if params.family == FAMILY_LWE:
        x = accumulated % params.q
        return (((x << 2) + params.q) // (2 * params.q)) % 2
    return (accumulated % params.p) >> (params.eps_p - 1)


def _decode_array(params: SchemeParams, acc: np.ndarray) -> np.ndarray:
    if params.family == FAMILY_LWE:
        return ((acc * 4 + params.q) // (2 * params.q)) % 2
    return acc >> (params.eps_p - 1)


def pke_dec(kp: KeyPair, ct: Ciphertext, params: Optional[SchemeParams] = None) -> bytes:
    params = params or kp.params
    return bits_to_message(_decode_array(params, _dec_accumulate(kp, ct, params)))


# --------------------------------------------------------------------------
# Fault controller and FO-transformed KEM
# --------------------------------------------------------------------------

MODE_NONE = "none"
MODE_FORCE_PASS = "force-pass"


@dataclass
class FaultController:
    """Gates the decapsulation comparison result.

    In mode ``none`` decapsulation is bit-identical to the honest
    algorithm. In ``force-pass`` a mismatching comparison is overridden to
    success, the fault counter advances, and an optional callback fires
    (used to drive the simulated Rowhammer pipeline).
    """

    mode: str = MODE_NONE
    faults: int = 0
    on_fault: Optional[Callable[[], None]] = None

    def __post_init__(self):
        if self.mode not in (MODE_NONE, MODE_FORCE_PASS):
            raise ParameterError(f"unknown fault mode {self.mode!r}")

    def gate(self, passed: bool) -> bool:
        if self.mode == MODE_FORCE_PASS and not passed:
            self.faults += 1
            if self.on_fault is not None:
                self.on_fault()
            return True
        return passed


def kem_keygen(params: SchemeParams, seed: Seed, suite: HashSuite = DEFAULT_SUITE) -> KeyPair:
    return pke_keygen(params, seed, suite)


def kem_encaps(
    pk: PublicKey,
    suite: HashSuite = DEFAULT_SUITE,
    *,
    seed: Optional[Seed] = None,
    message: Optional[bytes] = None,
) -> tuple[Ciphertext, bytes]:
    """Encapsulate: random m unless pinned via the seed/message hooks."""
    params = pk.params
    if message is None:
        message = seed.expand(b"m", params.message_bytes) if seed else os.urandom(params.message_bytes)
    hpk = suite.h(pk.to_bytes)
    key, coins = suite.g(message, hpk)
    ct = pke_enc(pk, message, Seed(coins))
    return ct, suite.f(key, suite.h(ct.to_bytes))


def kem_decaps(
    kp: KeyPair,
    ct: Ciphertext,
    fault: Optional[FaultController] = None,
    suite: HashSuite = DEFAULT_SUITE,
) -> bytes:
    m = pke_dec(kp, ct)
    key, coins = suite.g(m, kp.h_pk)
    reenc = pke_enc(kp.pk, m, Seed(coins))
    ok = reenc.to_bytes == ct.to_bytes
    if fault is not None:
        ok = fault.gate(ok)
    return suite.f(key if ok else kp.z, suite.h(ct.to_bytes))
