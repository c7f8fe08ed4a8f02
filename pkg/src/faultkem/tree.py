"""Pruned binary decision trees over the CBD secret alphabet.

A probe is a pair (k_u, d): one nonzero ciphertext-u coefficient k_u and
one targeted ciphertext-v coefficient d. The decrypted message bit then
depends only on the probed secret coefficient, so each probe splits the
candidate set in two. ``canonical_table`` reproduces the published probe
constants for kyber768 and saber verbatim; ``build_tree`` constructs a
tree for any alphabet via a greedy balanced-split search, and the plan
search below finds usable probe constants for the remaining instances.

Trees are immutable after construction and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, floor, log2
from typing import Optional

from .errors import NoProbeError, ParameterError
from .ring import Modulus, decompress
from .schemes import FAMILY_LWE, SchemeParams, decode_bit, get_params


def cbd_probabilities(eta: int) -> dict[int, Fraction]:
    """Exact CBD mass: P(v) = C(2*eta, v+eta) / 4^eta."""
    return {v: Fraction(comb(2 * eta, v + eta), 4**eta) for v in range(-eta, eta + 1)}


def v_domain(params: SchemeParams) -> range:
    return range(params.T)


def bit_response(params: SchemeParams, k_u: int, d: int, s: int) -> int:
    """Decrypted message bit of a probe (k_u, d) on secret value s.

    k_u and d are given in the ciphertext domain (compressed for Kyber);
    decompression happens here, mirroring decryption exactly.
    """
    if params.family == FAMILY_LWE:
        m = Modulus(params.q, params.n)
        k_eff = decompress(k_u, params.d_u, m) if params.d_u is not None else k_u
        d_eff = decompress(d, params.d_v, m) if params.d_v is not None else d
        return decode_bit(params, (d_eff - k_eff * s) % params.q)
    p = params.p
    return decode_bit(params, (k_u * s - (p >> params.eps_t) * d + params.h2) % p)


def negate_u(params: SchemeParams, k_u: int) -> int:
    """u-domain value whose effective multiplier is the negation of k_u's.

    Exact for lwr and uncompressed lwe; for compressed Kyber the mirrored
    compressed value is validated against the decompression map.
    """
    if params.family == FAMILY_LWE and params.d_u is not None:
        m = Modulus(params.q, params.n)
        neg = (-k_u) % (1 << params.d_u)
        k_eff = decompress(k_u, params.d_u, m)
        if decompress(neg, params.d_u, m) != (params.q - k_eff) % params.q:
            raise ParameterError(f"no exact u-domain negation for {k_u}")
        return neg
    dom = params.p if params.family != FAMILY_LWE else params.q
    return (-k_u) % dom


@dataclass
class DecisionNode:
    """Candidate set S_y with its probe d_y; leaves have no probe."""

    values: tuple[int, ...]
    depth: int
    probe: Optional[int] = None
    zero: Optional["DecisionNode"] = None
    one: Optional["DecisionNode"] = None

    @property
    def is_leaf(self) -> bool:
        return len(self.values) == 1

    @property
    def value(self) -> int:
        if not self.is_leaf:
            raise ParameterError(f"node {self.values} is not resolved")
        return self.values[0]

    def child(self, bit: int) -> "DecisionNode":
        node = self.one if bit else self.zero
        if node is None:
            raise ParameterError(f"node {self.values} has no children")
        return node


@dataclass(frozen=True)
class PrunedTree:
    """Decision tree with its deepest probe level cut from block traversal.

    ``pruned_nodes`` hold the residual pairs: their probes belong to the
    index phase (possibly under a different k_u). For the two published
    schemes there is exactly one such node, S_w.
    """

    root: DecisionNode
    pruned_nodes: tuple[DecisionNode, ...]
    traversal_depth: int

    @property
    def height(self) -> int:
        return self.traversal_depth + (1 if self.pruned_nodes else 0)

    @property
    def pruned(self) -> DecisionNode:
        if len(self.pruned_nodes) != 1:
            raise ParameterError(f"{len(self.pruned_nodes)} pruned nodes, expected one")
        return self.pruned_nodes[0]

    def internal_nodes(self) -> list[DecisionNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.probe is not None:
                out.append(node)
                stack.extend([node.one, node.zero])
        return out


@dataclass(frozen=True)
class ProbeTable:
    scheme_id: str
    k_u_block: int
    k_u_index: int
    v_filler: int
    columns: tuple[tuple[int, int], ...]  # (k_u, d) per column
    rows: dict[int, tuple[int, ...]]  # secret value -> bit per column

    def verify(self, params: SchemeParams) -> list[str]:
        """Replay every cell through bit_response; returns mismatches."""
        bad = []
        for s, bits in self.rows.items():
            for (k_u, d), expect in zip(self.columns, bits):
                got = bit_response(params, k_u, d, s)
                if got != expect:
                    bad.append(f"s={s} k_u={k_u} d={d}: got {got}, expected {expect}")
        return bad


# --------------------------------------------------------------------------
# Canonical published constants
# --------------------------------------------------------------------------

_KYBER768_ROWS = {
    -2: (0, 1, 0, 1),
    -1: (0, 1, 0, 0),
    0: (0, 0, 0, 0),
    1: (1, 0, 0, 0),
    2: (1, 0, 1, 0),
}

_SABER_ROWS = {
    -4: (0, 0, 0, 0, 0, 0, 0, 0),
    -3: (0, 0, 0, 0, 0, 1, 0, 0),
    -2: (0, 0, 0, 0, 1, 1, 0, 0),
    -1: (0, 0, 0, 0, 1, 1, 1, 0),
    0: (1, 0, 0, 0, 1, 1, 1, 0),
    1: (1, 0, 1, 0, 1, 1, 1, 0),
    2: (1, 1, 1, 0, 1, 1, 1, 0),
    3: (1, 1, 1, 1, 1, 1, 1, 0),
    4: (1, 1, 1, 1, 1, 1, 1, 1),
}


def _node(values, depth, probe=None, zero=None, one=None):
    return DecisionNode(tuple(values), depth, probe, zero, one)


def _kyber768_canonical() -> tuple[ProbeTable, PrunedTree]:
    table = ProbeTable(
        scheme_id="kyber768",
        k_u_block=38,
        k_u_index=38,
        v_filler=14,
        columns=((38, 12), (38, 4), (38, 13), (38, 3)),
        rows=_KYBER768_ROWS,
    )
    pruned = _node((-2, -1), 2, 3, zero=_node([-1], 3), one=_node([-2], 3))
    root = _node(
        (-2, -1, 0, 1, 2),
        0,
        12,
        zero=_node((-2, -1, 0), 1, 4, zero=_node([0], 2), one=pruned),
        one=_node((1, 2), 1, 13, zero=_node([1], 2), one=_node([2], 2)),
    )
    return table, PrunedTree(root, (pruned,), traversal_depth=2)


def _saber_canonical() -> tuple[ProbeTable, PrunedTree]:
    table = ProbeTable(
        scheme_id="saber",
        k_u_block=0x3C8,
        k_u_index=7,
        v_filler=0,
        columns=(
            (0x3C8, 4),
            (0x3C8, 2),
            (0x3C8, 3),
            (0x3C8, 1),
            (0x3C8, 6),
            (0x3C8, 7),
            (0x3C8, 5),
            (7, 12),
        ),
        rows=_SABER_ROWS,
    )
    pruned = _node((3, 4), 3, 12, zero=_node([3], 4), one=_node([4], 4))
    root = _node(
        tuple(range(-4, 5)),
        0,
        4,
        zero=_node(
            (-4, -3, -2, -1),
            1,
            6,
            zero=_node((-4, -3), 2, 7, zero=_node([-4], 3), one=_node([-3], 3)),
            one=_node((-2, -1), 2, 5, zero=_node([-2], 3), one=_node([-1], 3)),
        ),
        one=_node(
            (0, 1, 2, 3, 4),
            1,
            2,
            zero=_node((0, 1), 2, 3, zero=_node([0], 3), one=_node([1], 3)),
            one=_node((2, 3, 4), 2, 1, zero=_node([2], 3), one=pruned),
        ),
    )
    return table, PrunedTree(root, (pruned,), traversal_depth=3)


def canonical_table(scheme_id: str) -> tuple[ProbeTable, PrunedTree]:
    """The published probe table and tree for kyber768 or saber."""
    if scheme_id == "kyber768":
        return _kyber768_canonical()
    if scheme_id == "saber":
        return _saber_canonical()
    raise ParameterError(f"no canonical table for {scheme_id!r}; use build_tree")


def check_tree(params: SchemeParams, tree: PrunedTree, k_u_block: int, k_u_index: int) -> list[str]:
    """Replay bit_response along every edge; returns inconsistencies."""
    bad = []
    pruned = set(id(n) for n in tree.pruned_nodes)
    for node in tree.internal_nodes():
        k_u = k_u_index if id(node) in pruned else k_u_block
        for s in node.values:
            bit = bit_response(params, k_u, node.probe, s)
            if s not in node.child(bit).values:
                bad.append(f"value {s} (bit {bit}) not in child of {node.values}")
        zero, one = set(node.zero.values), set(node.one.values)
        if zero & one or zero | one != set(node.values) or not zero or not one:
            bad.append(f"children of {node.values} do not partition it")
    return bad


# --------------------------------------------------------------------------
# Generic greedy builder
# --------------------------------------------------------------------------

def _split_by(params, k_u, d, values):
    zero = tuple(s for s in values if bit_response(params, k_u, d, s) == 0)
    one = tuple(s for s in values if s not in zero)
    return zero, one


def _find_pair_probe(params, k_u, pair) -> Optional[int]:
    for d in v_domain(params):
        zero, one = _split_by(params, k_u, d, pair)
        if len(zero) == 1 and len(one) == 1:
            return d
    return None


def _build_structure(params, k_u, probabilities, depth_budget):
    """Greedy tree shape under the block-phase k_u.

    Nodes at the budget depth are left probe-less (they become the pruned
    residual level); everything shallower gets a balanced feasible split.
    """
    support = tuple(sorted(probabilities))

    def mass(values):
        return sum(probabilities[s] for s in values)

    def build(values, depth):
        node = DecisionNode(tuple(values), depth)
        if len(values) == 1:
            return node
        if depth == depth_budget:
            if len(values) != 2:
                raise NoProbeError(values, f"residual set {values} exceeds a pair")
            return node  # probe assigned later from the index-phase constant
        cap = 1 << (depth_budget - depth)
        best = None
        for d in v_domain(params):
            zero, one = _split_by(params, k_u, d, values)
            if not zero or not one or len(zero) > cap or len(one) > cap:
                continue
            m0, m1 = mass(zero), mass(one)
            balance = abs(m0 - m1)
            # ties: send the lighter mass toward the side that must grow
            # deeper (the larger-cardinality child)
            if len(zero) != len(one):
                deep_mass = m0 if len(zero) > len(one) else m1
            else:
                deep_mass = Fraction(0)
            key = (balance, deep_mass, d)
            if best is None or key < best[0]:
                best = (key, d, zero, one)
        if best is None:
            raise NoProbeError(values)
        _, d, zero, one = best
        node.probe = d
        node.zero = build(zero, depth + 1)
        node.one = build(one, depth + 1)
        return node

    root = build(support, 0)
    residual = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.probe is None and not node.is_leaf:
            residual.append(node)
        elif node.probe is not None:
            stack.extend([node.zero, node.one])
    residual.sort(key=lambda n: n.values)
    return root, residual


def build_tree(
    params: SchemeParams,
    k_u: int,
    probabilities: dict[int, Fraction],
    k_u_index: Optional[int] = None,
) -> PrunedTree:
    """Greedy pruned tree over the given alphabet.

    Block-phase probes (depths < floor(log2 |S_0|)) use k_u; the residual
    pair level is probed with k_u_index (defaults to k_u). Raises
    NoProbeError naming the stuck subset when no constant splits it.
    """
    if len(probabilities) < 1:
        raise ParameterError("empty alphabet")
    depth_budget = floor(log2(len(probabilities))) if len(probabilities) > 1 else 0
    root, residual = _build_structure(params, k_u, probabilities, depth_budget)
    k_idx = k_u if k_u_index is None else k_u_index
    for node in residual:
        d = _find_pair_probe(params, k_idx, node.values)
        if d is None:
            raise NoProbeError(node.values)
        node.probe = d
        zero, one = _split_by(params, k_idx, d, node.values)
        node.zero = DecisionNode(zero, node.depth + 1)
        node.one = DecisionNode(one, node.depth + 1)
    return PrunedTree(root, tuple(residual), traversal_depth=depth_budget)


def expected_residual(
    params: SchemeParams, tree: PrunedTree, probabilities: dict[int, Fraction]
) -> Fraction:
    """E1: expected residual coefficients per polynomial, n * P(S_w)."""
    mass = sum((probabilities[s] for node in tree.pruned_nodes for s in node.values), Fraction(0))
    return params.n * mass


# --------------------------------------------------------------------------
# Probe plans: everything the attack driver needs per scheme
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbePlan:
    params: SchemeParams
    table: ProbeTable
    tree: PrunedTree
    k_u_block: int
    k_u_block_neg: int
    k_u_index: int
    k_u_index_neg: int
    v_filler: int

    @property
    def depth(self) -> int:
        return self.tree.traversal_depth


def is_silent(params: SchemeParams, k_u: int, v_filler: int) -> bool:
    """Untargeted positions must decode to 0 for every secret value and
    both probe signs (the support is sign-symmetric, so checking every s
    under one k_u covers the mirrored multiplier as well)."""
    return all(
        bit_response(params, k_u, v_filler, s) == 0 for s in params.cbd_support
    )


def _table_from_tree(params, tree, k_u_block, k_u_index, v_filler) -> ProbeTable:
    pruned = set(id(n) for n in tree.pruned_nodes)
    columns = []
    for node in sorted(tree.internal_nodes(), key=lambda n: (n.depth, n.values)):
        k_u = k_u_index if id(node) in pruned else k_u_block
        if (k_u, node.probe) not in columns:
            columns.append((k_u, node.probe))
    support = sorted(params.cbd_support)
    rows = {
        s: tuple(bit_response(params, k, d, s) for k, d in columns) for s in support
    }
    return ProbeTable(params.scheme_id, k_u_block, k_u_index, v_filler, tuple(columns), rows)


def _negation_ok(params, k_u) -> bool:
    try:
        negate_u(params, k_u)
        return True
    except ParameterError:
        return False


def _lwe_block_candidates(params):
    # descending u-domain value == descending effective multiplier
    top = params.q if params.d_u is None else params.p
    return range(top - 1, 0, -1)


def _lwr_candidates(params):
    ks = [k for k in range(1, params.p) if is_silent(params, k, 0)]
    ks.sort(key=lambda k: min(k, params.p - k), reverse=True)
    return ks


def _search_plan(params: SchemeParams) -> ProbePlan:
    probs = cbd_probabilities(params.eta1)
    v_filler = 0
    if params.family == FAMILY_LWE:
        candidates = [
            c
            for c in _lwe_block_candidates(params)
            if is_silent(params, c, v_filler) and _negation_ok(params, c)
        ]
        index_candidates = None  # same constant serves both phases
    else:
        candidates = _lwr_candidates(params)
        index_candidates = candidates
    for k_block in candidates:
        try:
            root, residual = _build_structure(
                params, k_block, probs, floor(log2(len(probs)))
            )
        except NoProbeError:
            continue
        pairs = [node.values for node in residual]
        for k_index in [k_block] if index_candidates is None else index_candidates:
            if all(_find_pair_probe(params, k_index, p) is not None for p in pairs):
                tree = build_tree(params, k_block, probs, k_u_index=k_index)
                table = _table_from_tree(params, tree, k_block, k_index, v_filler)
                return ProbePlan(
                    params=params,
                    table=table,
                    tree=tree,
                    k_u_block=k_block,
                    k_u_block_neg=negate_u(params, k_block),
                    k_u_index=k_index,
                    k_u_index_neg=negate_u(params, k_index),
                    v_filler=v_filler,
                )
    raise NoProbeError(
        _stuck_subset(params, probs),
        f"no probe constants recover {params.scheme_id} with this attack shape",
    )


def _stuck_subset(params, probs):
    """Smallest adjacent pair no silent constant can split (for an
    actionable NoProbeError message)."""
    support = sorted(probs)
    if params.family == FAMILY_LWE:
        cands = [c for c in _lwe_block_candidates(params) if is_silent(params, c, 0)]
    else:
        cands = _lwr_candidates(params)
    for a, b in zip(support, support[1:]):
        if not any(_find_pair_probe(params, k, (a, b)) is not None for k in cands):
            return (a, b)
    return tuple(support)


@lru_cache(maxsize=None)
def probe_plan(scheme_id: str) -> ProbePlan:
    """Canonical constants for the published schemes, searched otherwise."""
    params = get_params(scheme_id)
    if scheme_id in ("kyber768", "saber"):
        table, tree = canonical_table(scheme_id)
        plan = ProbePlan(
            params=params,
            table=table,
            tree=tree,
            k_u_block=table.k_u_block,
            k_u_block_neg=negate_u(params, table.k_u_block),
            k_u_index=table.k_u_index,
            k_u_index_neg=negate_u(params, table.k_u_index),
            v_filler=table.v_filler,
        )
    else:
        plan = _search_plan(params)
    _validate_plan(plan)
    return plan


def _validate_plan(plan: ProbePlan):
    params = plan.params
    bad = plan.table.verify(params)
    bad += check_tree(params, plan.tree, plan.k_u_block, plan.k_u_index)
    for k_u in (plan.k_u_block, plan.k_u_block_neg, plan.k_u_index, plan.k_u_index_neg):
        if not is_silent(params, k_u, plan.v_filler):
            bad.append(f"silence violated for k_u={k_u}")
    if bad:
        raise ParameterError(f"invalid probe plan for {params.scheme_id}: {bad[:4]}")
