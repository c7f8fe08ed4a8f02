import math

import numpy as np
import pytest

from faultkem.attack import (
    PAPER_LITERAL,
    SIGN_NORMALIZED,
    AttackConfig,
    SecretState,
    block_schedule,
    collect_index_set,
    craft_block_ct,
    craft_index_ct,
    predict_queries,
    recover_key,
    reduce_secret_sets,
    reorder_secret,
    run_campaign,
)
from faultkem.errors import ParameterError, StateCorruptionError
from faultkem.oracle import IDEAL, MATCHED, OracleHandle
from faultkem.ring import Seed
from faultkem.schemes import get_params, kem_keygen, message_to_bits
from faultkem.tree import cbd_probabilities, probe_plan


def _recover(scheme_id, t, mode=IDEAL, probe_mode=SIGN_NORMALIZED, seed=1, allow=False):
    params = get_params(scheme_id)
    kp = kem_keygen(params, Seed.from_int(seed))
    cfg = AttackConfig(scheme_id, t, probe_mode=probe_mode, oracle_mode=mode, allow_large_t=allow)
    handle = OracleHandle(kp, mode=mode, allow_large_t=allow)
    return recover_key(cfg, handle), kp


def test_craft_block_ct_kyber_first_block():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    ct = craft_block_ct(params, plan, 0, 0, [12])
    assert ct.u[0, 0] == 38 and np.count_nonzero(ct.u) == 1
    assert ct.v[0] == 12 and np.all(ct.v[1:] == 14)


def test_craft_block_ct_sign_normalized_rotation():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    ct = craft_block_ct(params, plan, 0, 10, [12] * 10, SIGN_NORMALIZED)
    assert ct.u[0, 246] == 986  # u-domain value decompressing to q-124
    ct_lit = craft_block_ct(params, plan, 0, 10, [12] * 10, PAPER_LITERAL)
    assert ct_lit.u[0, 246] == 38


def test_craft_block_ct_saber():
    params = get_params("saber")
    plan = probe_plan("saber")
    ct = craft_block_ct(params, plan, 0, 0, [4, 4])
    assert ct.u[0, 0] == 0x3C8
    assert ct.v[0] == ct.v[1] == 4 and not ct.v[2:].any()


def test_craft_block_ct_targets_one_polynomial():
    params = get_params("saber")
    plan = probe_plan("saber")
    ct = craft_block_ct(params, plan, 2, 0, [4])
    assert ct.u[2, 0] == 0x3C8 and not ct.u[:2].any()


def test_craft_index_ct_saber_example():
    params = get_params("saber")
    plan = probe_plan("saber")
    ct = craft_index_ct(params, plan, [(1, 3), (1, 77)], 12)
    assert ct.u[1, 0] == 7 and np.count_nonzero(ct.u) == 1
    assert ct.v[3] == ct.v[77] == 12
    assert np.count_nonzero(ct.v) == 2


def test_craft_index_ct_guards():
    params = get_params("saber")
    plan = probe_plan("saber")
    assert craft_index_ct(params, plan, [], 12) is None
    with pytest.raises(ParameterError):
        craft_index_ct(params, plan, [(0, 3), (1, 77)], 12)


def test_reduce_secret_sets_descends_and_resolves():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    state = SecretState(params, plan)
    coords = [(0, 0), (0, 1)]
    # response bits: coefficient 0 -> 0, coefficient 1 -> 1
    reduce_secret_sets(state, coords, bytes([0b10]) + b"\x00" * 31)
    assert state.at(0, 0).node.values == (-2, -1, 0)
    assert state.at(0, 1).node.values == (1, 2)
    # second round: bit 0 then bit 1 resolve 0 and 2 via the table paths
    reduce_secret_sets(state, coords, bytes([0b10]) + b"\x00" * 31)
    assert state.at(0, 0).value == 0
    assert state.at(0, 1).value == 2


def test_reduce_secret_sets_leaf_descent_is_corruption():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    state = SecretState(params, plan)
    st = state.at(0, 0)
    st.node = plan.tree.root.one.one  # leaf {2}
    with pytest.raises(StateCorruptionError):
        reduce_secret_sets(state, [(0, 0)], b"\x00" * 32)


def test_collect_index_set_groups_and_empty():
    params = get_params("kyber768")
    plan = probe_plan("kyber768")
    state = SecretState(params, plan)
    for i in range(params.l):
        for j in range(params.n):
            state.at(i, j).value = 0
    assert collect_index_set(state) == []
    state.at(1, 5).value = None
    state.at(1, 5).node = plan.tree.pruned
    state.at(1, 9).value = None
    state.at(1, 9).node = plan.tree.pruned
    state.at(1, 9).sign = -1
    groups = collect_index_set(state)
    assert [(g["poly"], g["sign"], [j for j, _ in g["positions"]]) for g in groups] == [
        (1, 1, [5]),
        (1, -1, [9]),
    ]


def test_residual_count_matches_binomial_expectation():
    # coefficients in S_w = {-2,-1} per polynomial ~ Binomial(256, 5/16)
    rng_seed = Seed.from_int(77)
    total = 0
    keys = 100
    for i in range(keys):
        kp = kem_keygen(get_params("kyber768"), rng_seed.derive(b"k%d" % i))
        centered = np.where(kp.s > 3329 // 2, kp.s - 3329, kp.s)
        total += int(np.count_nonzero((centered == -2) | (centered == -1)))
    mean = total / (keys * 3)
    sigma = math.sqrt(256 * (5 / 16) * (11 / 16)) / math.sqrt(keys * 3)
    assert abs(mean - 80) <= 3 * sigma


def test_reorder_secret_rotation_example():
    # n=8, t=2: s1 = [s0,s1, -s6,-s7, -s4,-s5, -s2,-s3]
    s = list(range(1, 9))
    s1 = [s[0], s[1], -s[6], -s[7], -s[4], -s[5], -s[2], -s[3]]
    assert reorder_secret(s1, 2).tolist() == s


def test_reorder_secret_t_equals_n_identity():
    s1 = list(range(16))
    assert reorder_secret(s1, 16).tolist() == s1


def test_reorder_secret_roundtrip_random():
    rng = np.random.default_rng(3)
    n, t = 32, 4
    s = rng.integers(-4, 5, n)
    s1 = np.empty(n, dtype=np.int64)
    s1[:t] = s[:t]
    for j in range(1, n // t):
        for k in range(t):
            s1[t * j + k] = -s[(n - t * j + k) % n]
    assert np.array_equal(reorder_secret(s1, t), s)


def test_reorder_secret_errors():
    with pytest.raises(ParameterError):
        reorder_secret([1, 2, 3], 2)
    with pytest.raises(ParameterError):
        reorder_secret(list(range(8)), 2, n=16)


def test_block_schedule_covers_exactly():
    for n, t in [(256, 1), (256, 10), (256, 16), (256, 7), (256, 256), (256, 200)]:
        blocks = block_schedule(n, t)
        assert len(blocks) == math.ceil(n / t)
        seen = []
        for start, size in blocks:
            seen.extend(range(start, start + size))
        assert sorted(seen) == list(range(n))


@pytest.mark.parametrize("t", [1, 7, 10, 32])
def test_recover_kyber768_ideal(t):
    report, kp = _recover("kyber768", t)
    assert report.success and report.identity_ok
    assert np.array_equal(np.mod(report.recovered, 3329), kp.s)


@pytest.mark.parametrize(
    "scheme_id,t",
    [
        ("kyber512", 1),
        ("kyber512", 5),
        ("kyber512", 16),
        ("kyber512", 32),
        ("kyber1024", 1),
        ("kyber1024", 7),
        ("kyber1024", 16),
        ("kyber1024", 32),
        ("firesaber", 1),
        ("firesaber", 11),
        ("firesaber", 16),
        ("firesaber", 32),
        ("lpr-generic", 1),
        ("lpr-generic", 13),
        ("lpr-generic", 16),
        ("lpr-generic", 32),
        ("saber", 1),
        ("saber", 9),
        ("saber", 32),
    ],
)
def test_exact_recovery_across_schemes(scheme_id, t):
    report, _ = _recover(scheme_id, t, seed=5)
    assert report.success and report.identity_ok


@pytest.mark.parametrize("scheme_id", ["kyber768", "saber", "kyber512"])
def test_probe_modes_recover_identical_keys(scheme_id):
    normalized, kp1 = _recover(scheme_id, 16, probe_mode=SIGN_NORMALIZED, seed=8)
    literal, kp2 = _recover(scheme_id, 16, probe_mode=PAPER_LITERAL, seed=8)
    assert np.array_equal(kp1.s, kp2.s)
    assert np.array_equal(normalized.recovered, literal.recovered)
    assert normalized.success and literal.success
    assert literal.queries >= normalized.queries  # extra sign-class chunks
    assert literal.identity_ok and normalized.identity_ok


def test_paper_literal_with_nondividing_t():
    report, _ = _recover("kyber768", 12, probe_mode=PAPER_LITERAL, seed=6)
    assert report.success and report.identity_ok


def test_matched_recovery_counts_faults():
    report, _ = _recover("kyber768", 10, mode=MATCHED, seed=2)
    assert report.success
    assert report.faults == report.queries
    assert report.offline_hash_evals <= report.queries * (1 << 10)


def test_ideal_t40_with_override():
    report, _ = _recover("kyber768", 40, seed=4, allow=True)
    assert report.success
    assert report.predicted_average == 48


def test_recover_exercises_query_identity():
    report, _ = _recover("saber", 10, seed=12)
    depth = probe_plan("saber").tree.traversal_depth
    expected = 3 * depth * math.ceil(256 / 10) + sum(
        math.ceil(g["size"] / 10) for g in report.index_groups
    )
    assert report.queries == expected


def test_predict_queries_table_values():
    assert predict_queries("kyber768", 12, "average") == 153
    assert predict_queries("kyber768", 1, "average") == 1776
    assert predict_queries("saber", 32, "average") == 75
    assert predict_queries("kyber768", 10, "best") == 156  # 3 * 26 * 2
    with pytest.raises(ParameterError):
        predict_queries("kyber768", 10, "worst")


def test_predicted_average_monotone_in_t():
    for scheme_id in ("kyber768", "saber", "kyber512"):
        preds = [predict_queries(scheme_id, t, "average") for t in range(1, 41)]
        assert all(a >= b for a, b in zip(preds, preds[1:]))


def test_run_campaign_aggregates_and_is_deterministic():
    rep1 = run_campaign("kyber768", 32, oracle_mode=IDEAL, trials=3, seed=9)
    rep2 = run_campaign("kyber768", 32, oracle_mode=IDEAL, trials=3, seed=9)
    assert rep1 == rep2
    assert rep1["aggregate"]["successes"] == 3
    assert rep1["aggregate"]["identity_ok_all"]
    assert len(rep1["trial_records"]) == 3
    assert rep1["predicted"]["average"] == 57


def test_attack_config_validation():
    with pytest.raises(ParameterError):
        AttackConfig("kyber768", 0)
    with pytest.raises(ParameterError):
        AttackConfig("kyber768", 300)
    with pytest.raises(ParameterError):
        AttackConfig("kyber768", 10, probe_mode="sideways")
