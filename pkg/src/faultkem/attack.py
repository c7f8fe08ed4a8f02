"""End-to-end key recovery: block phase, residual index phase, prediction.

The driver probes t consecutive secret coefficients per oracle query. A
block starting at coefficient j' is addressed by placing the probe
constant at u position (n - j') mod n; the negacyclic wrap makes later
blocks measure -s there, which the two probe modes handle differently:

* ``sign-normalized`` (default) places the u-domain negation of k_u for
  j' > 0 so every probe measures +s. All residuals then sit in the
  pruned node and one index-phase constant resolves them, matching the
  published query counts exactly.
* ``paper-literal`` keeps +k_u everywhere, recovers later blocks negated
  and rotated, splits the index phase into two sign classes (probed with
  +/- k_u_index), and restores coefficient order afterwards.

Query accounting is exact: every run satisfies
queries = l * depth * ceil(n/t) + sum over (poly, sign class) of
ceil(class size / t).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IncompleteRecoveryError, ParameterError, StateCorruptionError
from .oracle import IDEAL, MATCHED, CandidateSet, OracleHandle, gen_candidates, query
from .ring import Seed
from .schemes import (
    MODE_FORCE_PASS,
    Ciphertext,
    FaultController,
    SchemeParams,
    get_params,
    kem_keygen,
)
from .tree import DecisionNode, ProbePlan, cbd_probabilities, expected_residual, probe_plan

SIGN_NORMALIZED = "sign-normalized"
PAPER_LITERAL = "paper-literal"


@dataclass
class AttackConfig:
    scheme_id: str
    t: int
    probe_mode: str = SIGN_NORMALIZED
    oracle_mode: str = IDEAL
    allow_large_t: bool = False

    def __post_init__(self):
        params = get_params(self.scheme_id)
        if not 1 <= self.t <= params.n:
            raise ParameterError(f"t must lie in [1, {params.n}], got {self.t}")
        if self.probe_mode not in (SIGN_NORMALIZED, PAPER_LITERAL):
            raise ParameterError(f"unknown probe mode {self.probe_mode!r}")

    @property
    def params(self) -> SchemeParams:
        return get_params(self.scheme_id)


@dataclass
class CoeffState:
    node: DecisionNode
    sign: int = 1
    value: Optional[int] = None  # resolved actual (signed) secret value


@dataclass
class SecretState:
    """Per-coefficient tracker over all l polynomials."""

    params: SchemeParams
    plan: ProbePlan
    grid: list = field(default_factory=list)

    def __post_init__(self):
        if not self.grid:
            self.grid = [
                [CoeffState(self.plan.tree.root) for _ in range(self.params.n)]
                for _ in range(self.params.l)
            ]

    def at(self, poly: int, j: int) -> CoeffState:
        return self.grid[poly][j]

    def unresolved(self):
        for i in range(self.params.l):
            for j in range(self.params.n):
                if self.grid[i][j].value is None:
                    yield i, j


def block_schedule(n: int, t: int) -> list[tuple[int, int]]:
    """(start, size) per block: ceil(n/t) disjoint blocks covering all
    coefficients, the final one short when t does not divide n."""
    full = n // t
    blocks = [(0, t)] + [((n - b * t) % n, t) for b in range(1, full)]
    if n % t:
        blocks.append((t, n - full * t))
    return blocks


def craft_block_ct(
    params: SchemeParams,
    plan: ProbePlan,
    poly_index: int,
    block_start: int,
    probes: list[int],
    mode: str = SIGN_NORMALIZED,
) -> Ciphertext:
    """One nonzero u coefficient at (n - j') mod n of the targeted
    polynomial; v carries the probes at positions 0..t-1, filler elsewhere."""
    n = params.n
    if not 0 <= block_start < n:
        raise ParameterError(f"block start {block_start} out of range")
    u = np.zeros((params.l, n), dtype=np.int64)
    if block_start == 0 or mode == PAPER_LITERAL:
        u_val = plan.k_u_block
    else:
        u_val = plan.k_u_block_neg
    u[poly_index, (n - block_start) % n] = u_val
    v = np.full(n, plan.v_filler, dtype=np.int64)
    v[: len(probes)] = probes
    return Ciphertext(params, u, v)


def _craft_residual_ct(
    params: SchemeParams,
    plan: ProbePlan,
    entries: list[tuple[int, int, int]],  # (poly, position, probe)
    sign: int,
) -> Optional[Ciphertext]:
    if not entries:
        return None
    polys = {i for i, _, _ in entries}
    if len(polys) > 1:
        raise ParameterError(f"index positions span polynomials {sorted(polys)}")
    u = np.zeros((params.l, params.n), dtype=np.int64)
    u[entries[0][0], 0] = plan.k_u_index if sign > 0 else plan.k_u_index_neg
    v = np.full(params.n, plan.v_filler, dtype=np.int64)
    for _, j, d in entries:
        v[j] = d
    return Ciphertext(params, u, v)


def craft_index_ct(
    params: SchemeParams,
    plan: ProbePlan,
    positions: list[tuple[int, int]],
    d_w: int,
    sign: int = 1,
) -> Optional[Ciphertext]:
    """Residual-phase ciphertext: u[0] of the shared polynomial carries
    +/- k_u_index; v carries d_w at the residual positions."""
    return _craft_residual_ct(params, plan, [(i, j, d_w) for i, j in positions], sign)


def reduce_secret_sets(
    state: SecretState, coords: list[tuple[int, int]], message: bytes
) -> SecretState:
    """Descend each targeted coefficient by its message bit (bit k of the
    response steers coordinate k)."""
    for k, (i, j) in enumerate(coords):
        st = state.at(i, j)
        if st.value is not None:
            continue  # probed with filler; response bit carries nothing
        if st.node.is_leaf or st.node.zero is None:
            raise StateCorruptionError(f"descent from leaf {st.node.values} at ({i},{j})")
        bit = (message[k >> 3] >> (k & 7)) & 1
        st.node = st.node.child(bit)
        if st.node.is_leaf:
            st.value = st.sign * st.node.value
    return state


def collect_index_set(state: SecretState) -> list[dict]:
    """Unresolved coefficients grouped by (polynomial, probe sign).

    Each position keeps its own residual node; schemes with several
    pruned pairs still fit one sign class per polynomial, so the query
    identity holds with one chunk of t per ceil(|class| / t)."""
    groups: dict[tuple, dict] = {}
    for i, j in state.unresolved():
        st = state.at(i, j)
        key = (i, -st.sign)
        entry = groups.setdefault(key, {"poly": i, "sign": st.sign, "positions": []})
        entry["positions"].append((j, st.node))
    return [groups[k] for k in sorted(groups)]


def reorder_secret(s1, t: int, n: Optional[int] = None) -> np.ndarray:
    """Undo the paper-literal probing order: block 0 is direct, later
    blocks are negated and rotated back into place."""
    s1 = np.asarray(s1, dtype=np.int64)
    n_seq = len(s1)
    if n is not None and n_seq != n:
        raise ParameterError(f"sequence length {n_seq} != ring degree {n}")
    if t < 1 or n_seq % t:
        raise ParameterError(f"t={t} must divide the sequence length {n_seq}")
    out = np.empty(n_seq, dtype=np.int64)
    for j in range(t):
        out[j] = s1[j]
    for j in range(1, n_seq // t):
        for k in range(t):
            out[t * j + k] = -s1[(n_seq - t * j + k) % n_seq]
    return out


@dataclass
class AttackReport:
    scheme_id: str
    t: int
    probe_mode: str
    oracle_mode: str
    queries: int
    faults: int
    offline_hash_evals: int
    block_queries: int
    index_queries: int
    index_groups: list
    identity_ok: bool
    recovered: np.ndarray
    success: Optional[bool] = None
    predicted_best: int = 0
    predicted_average: int = 0
    fault_latency_total: Optional[float] = None

    def as_dict(self) -> dict:
        d = {
            "scheme": self.scheme_id,
            "t": self.t,
            "probe_mode": self.probe_mode,
            "oracle_mode": self.oracle_mode,
            "queries": self.queries,
            "faults": self.faults,
            "offline_hash_evals": self.offline_hash_evals,
            "block_queries": self.block_queries,
            "index_queries": self.index_queries,
            "index_groups": self.index_groups,
            "identity_ok": self.identity_ok,
            "success": self.success,
            "predicted_best": self.predicted_best,
            "predicted_average": self.predicted_average,
        }
        if self.fault_latency_total is not None:
            d["fault_latency_total_s"] = self.fault_latency_total
        return d


def recover_key(config: AttackConfig, oracle: OracleHandle) -> AttackReport:
    """Run the full block + index attack against the oracle's keypair."""
    params = config.params
    plan = probe_plan(config.scheme_id)
    tree = plan.tree
    depth = tree.traversal_depth
    t, n, l = config.t, params.n, params.l
    state = SecretState(params, plan)
    blocks = block_schedule(n, t)
    start_queries = oracle.log.queries

    cand_cache: dict[tuple, CandidateSet] = {}

    def candidates(positions) -> CandidateSet:
        key = tuple(positions)
        if key not in cand_cache:
            cand_cache[key] = gen_candidates(
                len(key), key, params.n, allow_large=config.allow_large_t
            )
        return cand_cache[key]

    for poly in range(l):
        for block_start, size in blocks:
            coords = [(poly, block_start + k) for k in range(size)]
            sign = 1 if (block_start == 0 or config.probe_mode == SIGN_NORMALIZED) else -1
            for _, j in coords:
                state.at(poly, j).sign = sign
            for _ in range(depth):
                probes = [
                    plan.v_filler if state.at(i, j).value is not None else state.at(i, j).node.probe
                    for i, j in coords
                ]
                ct = craft_block_ct(params, plan, poly, block_start, probes, config.probe_mode)
                cands = candidates(range(size))
                r = query(oracle, ct, cands)
                reduce_secret_sets(state, coords, cands.message(r))
    block_queries = oracle.log.queries - start_queries

    groups = collect_index_set(state)
    index_groups = []
    for group in groups:
        sign, poly = group["sign"], group["poly"]
        positions = sorted(group["positions"])
        index_groups.append({"poly": poly, "sign": sign, "size": len(positions)})
        for lo in range(0, len(positions), t):
            chunk = positions[lo : lo + t]
            ct = _craft_residual_ct(
                params, plan, [(poly, j, node.probe) for j, node in chunk], sign
            )
            cands = candidates([j for j, _ in chunk])
            r = query(oracle, ct, cands)
            message = cands.message(r)
            for j, node in chunk:
                bit = (message[j >> 3] >> (j & 7)) & 1
                st = state.at(poly, j)
                st.node = node.child(bit)
                st.value = sign * st.node.value
    index_queries = oracle.log.queries - start_queries - block_queries

    leftovers = list(state.unresolved())
    if leftovers:
        raise IncompleteRecoveryError(f"{len(leftovers)} coefficients unresolved")

    recovered = _assemble(config, params, plan, state, blocks)

    expected = l * depth * len(blocks) + sum(
        math.ceil(g["size"] / t) for g in index_groups
    )
    report = AttackReport(
        scheme_id=config.scheme_id,
        t=t,
        probe_mode=config.probe_mode,
        oracle_mode=config.oracle_mode,
        queries=oracle.log.queries - start_queries,
        faults=oracle.log.faults,
        offline_hash_evals=oracle.log.offline_hash_evals,
        block_queries=block_queries,
        index_queries=index_queries,
        index_groups=index_groups,
        identity_ok=(oracle.log.queries - start_queries) == expected,
        recovered=recovered,
        predicted_best=predict_queries(config.scheme_id, t, "best"),
        predicted_average=predict_queries(config.scheme_id, t, "average"),
    )
    truth = oracle.keypair.s
    report.success = bool(np.array_equal(np.mod(recovered, params.q), truth))
    return report


def _assemble(config, params, plan, state, blocks) -> np.ndarray:
    """Signed recovered secret; paper-literal runs go through the rotation
    algorithm whenever the block layout permits it (t divides n)."""
    n = params.n
    recovered = np.empty((params.l, n), dtype=np.int64)
    for i in range(params.l):
        for j in range(n):
            recovered[i, j] = state.at(i, j).value
    if config.probe_mode == PAPER_LITERAL and n % config.t == 0:
        for i in range(params.l):
            s1 = np.empty(n, dtype=np.int64)
            for b, (start, size) in enumerate(blocks):
                for k in range(size):
                    st = state.at(i, start + k)
                    s1[b * config.t + k] = st.value * st.sign  # measured value
            recovered[i] = reorder_secret(s1, config.t, n)
    return recovered


def predict_queries(scheme_id: str, t: int, case: str = "average") -> int:
    """Closed-form query counts; average adds the expected residual cost."""
    params = get_params(scheme_id)
    if t < 1:
        raise ParameterError("t must be positive")
    plan = probe_plan(scheme_id)
    per_poly_block = math.ceil(params.n / t) * plan.tree.traversal_depth
    if case == "best":
        return params.l * per_poly_block
    if case == "average":
        e1 = expected_residual(params, plan.tree, cbd_probabilities(params.eta1))
        return params.l * (per_poly_block + math.ceil(e1 / t))
    raise ParameterError(f"unknown case {case!r}")


# --------------------------------------------------------------------------
# Campaign runner (shared by the CLI and the acceptance suite)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FaultSimSpec:
    """Optional simulated-Rowhammer backing for matched campaigns."""

    n_addresses: int = 1 << 30
    n_vulnerable: int = 8
    flag_offset: int = 0x040
    stride: int = 0x020
    latency_bound: float = 0.350
    placement_probability: float = 1.0


def _trial(args) -> dict:
    (scheme_id, t, probe_mode, oracle_mode, seed_bytes, allow_large_t, fault_spec) = args
    from . import faultsim  # local import keeps worker pickling light

    config = AttackConfig(scheme_id, t, probe_mode, oracle_mode, allow_large_t)
    seed = Seed(seed_bytes)
    kp = kem_keygen(config.params, seed)
    controller = None
    plan_pipe = None
    if oracle_mode == MATCHED:
        if fault_spec is not None:
            plan_pipe = faultsim.build_pipeline(
                n_addresses=fault_spec.n_addresses,
                n_vulnerable=fault_spec.n_vulnerable,
                flag_offset=fault_spec.flag_offset,
                stride=fault_spec.stride,
                latency_bound=fault_spec.latency_bound,
                placement_probability=fault_spec.placement_probability,
                seed=seed.derive(b"faultsim"),
            )
            controller = faultsim.bind_controller(plan_pipe)
        else:
            controller = FaultController(MODE_FORCE_PASS)
    handle = OracleHandle(
        kp, mode=oracle_mode, fault=controller, allow_large_t=allow_large_t
    )
    report = recover_key(config, handle)
    if plan_pipe is not None:
        report.fault_latency_total = plan_pipe.total_latency
    out = report.as_dict()
    out["inductions"] = plan_pipe.inductions if plan_pipe is not None else None
    return out


def run_campaign(
    scheme_id: str,
    t: int,
    oracle_mode: str = IDEAL,
    probe_mode: str = SIGN_NORMALIZED,
    trials: int = 1,
    seed: int | bytes | Seed = 0,
    workers: int = 1,
    allow_large_t: bool = False,
    fault_spec: Optional[FaultSimSpec] = None,
) -> dict:
    """Run seeded independent trials and aggregate a report dict."""
    if isinstance(seed, int):
        seed = Seed.from_int(seed)
    elif isinstance(seed, bytes):
        seed = Seed(seed)
    jobs = [
        (
            scheme_id,
            t,
            probe_mode,
            oracle_mode,
            seed.derive(b"trial%d" % i).data,
            allow_large_t,
            fault_spec,
        )
        for i in range(trials)
    ]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial, jobs))
    else:
        records = [_trial(j) for j in jobs]
    for i, rec in enumerate(records):
        rec["trial"] = i
        rec.pop("recovered", None)
    queries = [r["queries"] for r in records]
    agg = {
        "trials": trials,
        "successes": sum(1 for r in records if r["success"]),
        "queries_mean": sum(queries) / len(queries),
        "queries_min": min(queries),
        "queries_max": max(queries),
        "faults_total": sum(r["faults"] for r in records),
        "offline_hash_evals_total": sum(r["offline_hash_evals"] for r in records),
        "identity_ok_all": all(r["identity_ok"] for r in records),
    }
    return {
        "run": {
            "scheme": scheme_id,
            "t": t,
            "oracle_mode": oracle_mode,
            "probe_mode": probe_mode,
            "trials": trials,
            "seed": seed.data.hex(),
        },
        "predicted": {
            "best": predict_queries(scheme_id, t, "best"),
            "average": predict_queries(scheme_id, t, "average"),
        },
        "trial_records": records,
        "aggregate": agg,
    }
