"""Parallel plaintext-checking oracle in two interchangeable realizations.

* ``ideal``: reads the decryption directly (fast experiments).
* ``matched``: observes the shared key of a fault-forced decapsulation
  and matches it offline against the 2^t candidate derivations; costs
  exactly one decapsulation and one fault per query.

Both return the index r of the candidate message the ciphertext decrypts
to. A query whose true decryption is outside the candidate set is a
broken silence invariant or a hash collision: the oracle raises
OracleMissError and the attack run aborts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import OracleMissError, ParameterError
from .schemes import (
    MODE_FORCE_PASS,
    DEFAULT_SUITE,
    Ciphertext,
    FaultController,
    HashSuite,
    KeyPair,
    kem_decaps,
    pke_dec,
)

IDEAL = "ideal"
MATCHED = "matched"

T_CEILING_IDEAL = 32
T_CEILING_MATCHED = 24


@dataclass(frozen=True)
class CandidateSet:
    """2^t candidate messages: candidate i carries the bit pattern of i at
    the listed positions and zeros elsewhere. Messages are materialized on
    demand, so large t stays cheap for the ideal oracle."""

    positions: tuple[int, ...]
    n_bits: int

    def __post_init__(self):
        if len(set(self.positions)) != len(self.positions):
            raise ParameterError("duplicate candidate positions")
        if any(not 0 <= p < self.n_bits for p in self.positions):
            raise ParameterError("candidate position out of message range")

    @property
    def t(self) -> int:
        return len(self.positions)

    def __len__(self) -> int:
        return 1 << self.t

    def message(self, i: int) -> bytes:
        if not 0 <= i < len(self):
            raise ParameterError(f"candidate index {i} out of range")
        buf = bytearray(self.n_bits // 8)
        for j, pos in enumerate(self.positions):
            if (i >> j) & 1:
                buf[pos >> 3] |= 1 << (pos & 7)
        return bytes(buf)

    @property
    def messages(self) -> list[bytes]:
        if self.t > 20:
            raise ParameterError("refusing to materialize more than 2^20 messages")
        return [self.message(i) for i in range(len(self))]

    def index_of(self, m: bytes) -> Optional[int]:
        """Candidate index of m, or None when m lies outside the set."""
        idx = 0
        for j, pos in enumerate(self.positions):
            if m[pos >> 3] & (1 << (pos & 7)):
                idx |= 1 << j
        return idx if self.message(idx) == m else None


def gen_candidates(t: int, positions, n_bits: int = 256, allow_large: bool = False) -> CandidateSet:
    positions = tuple(positions)
    if len(positions) != t:
        raise ParameterError(f"expected {t} positions, got {len(positions)}")
    if not 1 <= t <= (64 if allow_large else T_CEILING_IDEAL):
        raise ParameterError(f"parallelization factor {t} out of range")
    return CandidateSet(positions, n_bits)


@dataclass
class QueryLog:
    queries: int = 0
    faults: int = 0
    offline_hash_evals: int = 0
    records: list = field(default_factory=list)  # (ct digest hex, returned index)

    def as_dict(self) -> dict:
        return {
            "queries": self.queries,
            "faults": self.faults,
            "offline_hash_evals": self.offline_hash_evals,
        }


class OracleHandle:
    """One oracle bound to one victim keypair; queries are serialized."""

    def __init__(
        self,
        keypair: KeyPair,
        mode: str = IDEAL,
        suite: HashSuite = DEFAULT_SUITE,
        fault: Optional[FaultController] = None,
        allow_large_t: bool = False,
    ):
        if mode not in (IDEAL, MATCHED):
            raise ParameterError(f"unknown oracle mode {mode!r}")
        self.keypair = keypair
        self.mode = mode
        self.suite = suite
        self.allow_large_t = allow_large_t
        self.log = QueryLog()
        if mode == MATCHED:
            self.fault = fault if fault is not None else FaultController(MODE_FORCE_PASS)
            if self.fault.mode != MODE_FORCE_PASS:
                raise ParameterError("matched oracle needs a force-pass fault controller")
        else:
            self.fault = None
        # derived candidate keys in index order, one table per positions tuple
        self._key_cache: dict[tuple[int, ...], list[bytes]] = {}

    def _check_t(self, t: int):
        ceiling = T_CEILING_MATCHED if self.mode == MATCHED else T_CEILING_IDEAL
        if t > ceiling and not self.allow_large_t:
            raise ParameterError(
                f"t={t} above the {self.mode} ceiling {ceiling}; pass allow_large_t to override"
            )


def query(handle: OracleHandle, ct: Ciphertext, cands: CandidateSet) -> int:
    """Index r of the candidate message ct decrypts to."""
    handle._check_t(cands.t)
    if handle.mode == IDEAL:
        m = pke_dec(handle.keypair, ct)
        r = cands.index_of(m)
        if r is None:
            raise OracleMissError(
                "decryption not in candidate set (silence invariant broken?)"
            )
    else:
        r = _matched_query(handle, ct, cands)
    handle.log.queries += 1
    if handle.fault is not None:
        handle.log.faults = handle.fault.faults
    handle.log.records.append((handle.suite.h(ct.to_bytes).hex()[:16], r))
    return r


def _matched_query(handle: OracleHandle, ct: Ciphertext, cands: CandidateSet) -> int:
    suite = handle.suite
    shared = kem_decaps(handle.keypair, ct, fault=handle.fault, suite=suite)
    hct = suite.h(ct.to_bytes)
    hpk = handle.keypair.h_pk
    keys = handle._key_cache.setdefault(cands.positions, [])
    f, g, message, append = suite.f, suite.g, cands.message, keys.append
    hit = None
    # ascending scan, lowest matching index wins; candidate keys are
    # memoized per positions tuple (scans only ever extend the prefix)
    for i, key in enumerate(keys):
        if f(key, hct) == shared:
            hit = i
            break
    if hit is None:
        for i in range(len(keys), len(cands)):
            key, _ = g(message(i), hpk)
            append(key)
            if f(key, hct) == shared:
                hit = i
                break
    handle.log.offline_hash_evals += len(cands) if hit is None else hit + 1
    if hit is None:
        raise OracleMissError(
            "no candidate reproduces the faulted shared key "
            "(silence invariant broken, or fault not delivered)"
        )
    return hit
