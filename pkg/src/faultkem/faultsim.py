"""Abstract Rowhammer fault-delivery pipeline.

DRAM geometry is abstracted to a flat address space with a small planted
set of vulnerable cells on a stride grid. The attack pipeline mirrors the
deterministic placement procedure: template the memory for flips, pick a
1->0 cell whose page offset matches the victim's fail flag, unmap that
page so the victim reallocates onto it, then re-hammer the same row per
override. Every random choice flows from one seed; latencies are drawn
below a configurable per-induction bound.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import FaultStateError, ParameterError, PlacementError
from .ring import Seed
from .schemes import MODE_FORCE_PASS, FaultController

FLIP_1_TO_0 = "1to0"
FLIP_0_TO_1 = "0to1"

STATE_TEMPLATED = "templated"
STATE_PLACED = "placed"
STATE_ARMED = "armed"


@dataclass(frozen=True)
class VulnerableCell:
    address: int
    page_offset: int
    direction: str


@dataclass
class MemoryModel:
    """N1 addresses with N planted vulnerable cells (N << N1)."""

    n_addresses: int
    page_size: int = 4096
    stride: int = 0x020
    seed: Optional[Seed] = None
    vulnerable: list = field(default_factory=list)

    @classmethod
    def plant(
        cls,
        n_addresses: int,
        n_vulnerable: int,
        seed: Seed,
        page_size: int = 4096,
        stride: int = 0x020,
        flip_bias: float = 0.7,
        ensure_offset: Optional[int] = None,
    ) -> "MemoryModel":
        """Seeded model with n_vulnerable cells on the stride grid.

        ensure_offset forces at least one 1->0 cell onto that page offset
        so deterministic placement runs cannot dead-end.
        """
        if n_vulnerable > n_addresses // stride:
            raise ParameterError("more vulnerable cells than grid addresses")
        rng = random.Random(seed.expand(b"memory", 16))
        cells = []
        seen = set()
        while len(cells) < n_vulnerable:
            addr = rng.randrange(n_addresses // stride) * stride
            if addr in seen:
                continue
            seen.add(addr)
            direction = FLIP_1_TO_0 if rng.random() < flip_bias else FLIP_0_TO_1
            cells.append(VulnerableCell(addr, addr % page_size, direction))
        if ensure_offset is not None and not any(
            c.page_offset == ensure_offset and c.direction == FLIP_1_TO_0 for c in cells
        ):
            if ensure_offset % stride:
                raise ParameterError("ensure_offset must sit on the stride grid")
            page = rng.randrange(n_addresses // page_size) * page_size
            cells[-1] = VulnerableCell(page + ensure_offset, ensure_offset, FLIP_1_TO_0)
        cells.sort(key=lambda c: c.address)
        return cls(n_addresses, page_size, stride, seed, cells)


def template(model: MemoryModel, passes: int = 1, direction: Optional[str] = None) -> list:
    """Sweep the stride grid and report discovered vulnerable cells.

    Deterministic in the model: a full pass finds every planted cell that
    sits on the grid. Filter by direction for the attack (1->0 only).
    """
    if passes < 1:
        raise ParameterError("at least one hammer pass required")
    found = [c for c in model.vulnerable if c.address % model.stride == 0]
    if direction is not None:
        found = [c for c in found if c.direction == direction]
    return sorted(found, key=lambda c: c.address)


def collision_probability(n_vulnerable: int, n_addresses: int) -> Fraction:
    """Chance that an unplaced fail flag lands on a vulnerable cell:
    (1/N1) * (N/N1)."""
    if n_addresses <= 0:
        raise ParameterError("address-space size must be positive")
    if not 0 <= n_vulnerable <= n_addresses:
        raise ParameterError("vulnerable count out of range")
    return Fraction(n_vulnerable, n_addresses * n_addresses)


@dataclass
class FaultPlan:
    """Templating -> placement -> armed induction, all seeded."""

    model: MemoryModel
    flag_offset: int = 0x040
    placement_probability: float = 1.0
    flip_probability: float = 1.0
    latency_bound: float = 0.350
    state: str = STATE_TEMPLATED
    target: Optional[VulnerableCell] = None
    latencies: list = field(default_factory=list)
    _rng: Optional[random.Random] = None

    def __post_init__(self):
        if self._rng is None:
            seed = self.model.seed or Seed(b"\x00" * 32)
            self._rng = random.Random(seed.expand(b"plan", 16))

    @property
    def inductions(self) -> int:
        return len(self.latencies)

    @property
    def total_latency(self) -> float:
        return sum(self.latencies)


def place_victim(plan: FaultPlan, flag_offset: Optional[int] = None) -> bool:
    """Unmap the vulnerable page and let the victim reallocate onto it.

    Returns True when the flag now coincides with the chosen 1->0 cell
    (probability placement_probability, default certain)."""
    if flag_offset is not None:
        plan.flag_offset = flag_offset
    matches = [
        c
        for c in template(plan.model, direction=FLIP_1_TO_0)
        if c.page_offset == plan.flag_offset
    ]
    if not matches:
        raise PlacementError(
            f"no 1->0 vulnerable cell at page offset {plan.flag_offset:#x}"
        )
    if plan._rng.random() <= plan.placement_probability:
        plan.target = matches[0]
        plan.state = STATE_PLACED
        return True
    return False


def arm(plan: FaultPlan) -> FaultPlan:
    if plan.state not in (STATE_PLACED, STATE_ARMED):
        raise FaultStateError("arming requires a placed victim")
    plan.state = STATE_ARMED
    return plan


def induce_flip(plan: FaultPlan) -> tuple[bool, float]:
    """Re-hammer the aggressor row: flips the flag bit 1->0 within the
    latency bound (success probability configurable, default certain)."""
    if plan.state != STATE_ARMED:
        raise FaultStateError(f"cannot induce a flip in state {plan.state!r}")
    latency = plan._rng.uniform(0.0, plan.latency_bound)
    success = plan._rng.random() <= plan.flip_probability
    if success:
        plan.latencies.append(latency)
    return success, latency


def bind_controller(plan: FaultPlan) -> FaultController:
    """Force-pass controller consuming one induced flip per override."""

    def on_fault():
        ok, _ = induce_flip(plan)
        if not ok:
            raise FaultStateError("flip induction failed while gating decapsulation")

    return FaultController(mode=MODE_FORCE_PASS, on_fault=on_fault)


def build_pipeline(
    n_addresses: int = 1 << 30,
    n_vulnerable: int = 8,
    flag_offset: int = 0x040,
    stride: int = 0x020,
    page_size: int = 4096,
    latency_bound: float = 0.350,
    placement_probability: float = 1.0,
    seed: Seed | int = 0,
) -> FaultPlan:
    """Template, place and arm in one deterministic step."""
    if isinstance(seed, int):
        seed = Seed.from_int(seed)
    if placement_probability <= 0:
        raise ParameterError("placement probability must be positive")
    model = MemoryModel.plant(
        n_addresses,
        n_vulnerable,
        seed,
        page_size=page_size,
        stride=stride,
        ensure_offset=flag_offset,
    )
    plan = FaultPlan(
        model,
        flag_offset=flag_offset,
        placement_probability=placement_probability,
        latency_bound=latency_bound,
    )
    while not place_victim(plan):
        pass  # reallocation retry; certain under the default probability
    return arm(plan)


def monte_carlo_collision(
    n_vulnerable: int, n_addresses: int, trials: int, seed: Seed | int = 0
) -> float:
    """Empirical collision rate: each trial draws the flag position and a
    vulnerability event (rank < N is distribution-identical to membership
    in a fresh uniform N-subset). Vectorized for large trial counts."""
    if isinstance(seed, int):
        seed = Seed.from_int(seed)
    rng = np.random.default_rng(int.from_bytes(seed.expand(b"mc", 8), "little"))
    hits = 0
    chunk = 10_000_000
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        flag = rng.integers(0, n_addresses, size=m)
        vuln_rank = rng.integers(0, n_addresses, size=m)
        hits += int(np.count_nonzero((flag == 0) & (vuln_rank < n_vulnerable)))
        done += m
    return hits / trials
