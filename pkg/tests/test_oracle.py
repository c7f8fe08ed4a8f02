import numpy as np
import pytest

from conftest import planted_key
from faultkem.attack import craft_block_ct
from faultkem.errors import OracleMissError, ParameterError
from faultkem.oracle import IDEAL, MATCHED, OracleHandle, gen_candidates, query
from faultkem.ring import Seed
from faultkem.schemes import Ciphertext, get_params, kem_keygen
from faultkem.tree import probe_plan


def test_gen_candidates_t1():
    cands = gen_candidates(1, [0])
    assert cands.messages == [b"\x00" * 32, b"\x01" + b"\x00" * 31]


def test_gen_candidates_t2_patterns():
    cands = gen_candidates(2, [0, 1])
    got = [m[0] for m in cands.messages]
    assert got == [0b00, 0b01, 0b10, 0b11]


def test_gen_candidates_arbitrary_positions():
    cands = gen_candidates(3, [5, 9, 200])
    m = cands.message(0b101)  # bits j of the index land at positions[j]
    assert m[5 // 8] == 1 << 5
    assert m[200 // 8] == 1 << (200 % 8)
    assert sum(bin(b).count("1") for b in m) == 2
    assert cands.index_of(m) == 0b101


def test_gen_candidates_validation():
    with pytest.raises(ParameterError):
        gen_candidates(2, [3, 3])
    with pytest.raises(ParameterError):
        gen_candidates(2, [3])
    with pytest.raises(ParameterError):
        gen_candidates(40, range(40))
    assert len(gen_candidates(40, range(40), allow_large=True)) == 1 << 40


def test_candidate_set_is_lazy_for_large_t():
    cands = gen_candidates(32, range(32))
    assert len(cands) == 1 << 32
    assert cands.message(1 << 31)[3] == 0x80
    with pytest.raises(ParameterError):
        _ = cands.messages


def _probe_ct(params, plan, d0):
    return craft_block_ct(params, plan, 0, 0, [d0])


def test_query_reads_table_bit():
    # s[0] = 1 probed with d0 = 12 answers candidate index 1
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    kp = planted_key(params, {(0, 0): 1})
    ct = _probe_ct(params, plan, 12)
    cands = gen_candidates(1, [0])
    for mode in (IDEAL, MATCHED):
        handle = OracleHandle(kp, mode=mode)
        assert query(handle, ct, cands) == 1


def test_mode_equivalence_on_random_crafted_queries():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    kp = kem_keygen(params, Seed.from_int(31))
    ideal = OracleHandle(kp, mode=IDEAL)
    matched = OracleHandle(kp, mode=MATCHED)
    rng = np.random.default_rng(0)
    for _ in range(100):
        t = int(rng.integers(1, 11))
        probes = rng.integers(0, 16, t).tolist()
        poly = int(rng.integers(params.l))
        start = int(rng.integers(params.n))
        ct = craft_block_ct(params, plan, poly, start, probes)
        cands = gen_candidates(t, range(t))
        assert query(ideal, ct, cands) == query(matched, ct, cands)
    assert ideal.log.queries == matched.log.queries == 100
    assert ideal.log.faults == 0
    assert matched.log.faults == 100  # exactly one fault per query


def test_oracle_miss_is_fatal():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    kp = planted_key(params, {(0, 0): 1})
    ct = _probe_ct(params, plan, 12)  # decrypts with bit 0 set
    off_target = gen_candidates(1, [1])  # candidates only vary bit 1
    for mode in (IDEAL, MATCHED):
        with pytest.raises(OracleMissError):
            query(OracleHandle(kp, mode=mode), ct, off_target)


def test_matched_hash_budget_per_query():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    kp = kem_keygen(params, Seed.from_int(32))
    handle = OracleHandle(kp, mode=MATCHED)
    t = 8
    ct = craft_block_ct(params, plan, 0, 0, [12] * t)
    before = handle.log.offline_hash_evals
    query(handle, ct, gen_candidates(t, range(t)))
    assert handle.log.offline_hash_evals - before <= 1 << t


def test_matched_refuses_large_t_by_default():
    kp = kem_keygen(get_params("kyber768"), Seed.from_int(33))
    handle = OracleHandle(kp, mode=MATCHED)
    cands = gen_candidates(25, range(25))
    ct = Ciphertext(
        get_params("kyber768"),
        np.zeros((3, 256), dtype=np.int64),
        np.zeros(256, dtype=np.int64),
    )
    with pytest.raises(ParameterError):
        query(handle, ct, cands)
    assert handle.log.queries == 0  # refused before any work


def test_query_log_records():
    params = get_params("saber")
    plan = probe_plan("saber")
    kp = kem_keygen(params, Seed.from_int(34))
    handle = OracleHandle(kp, mode=IDEAL)
    ct = craft_block_ct(params, plan, 0, 0, [4, 4])
    r = query(handle, ct, gen_candidates(2, [0, 1]))
    assert handle.log.records == [(handle.log.records[0][0], r)]
    assert len(handle.log.records[0][0]) == 16
