"""Accumulator tests against an independent flat-slot oracle.

The oracle keeps one array of slots in scan order (largest tree first,
leaves left to right) with no hashing at all: insertion takes the first
vacant slot, growth rebuilds the array the way the forest merge does, and
an occupant's index is derived purely from segment occupancy.  Every state
the real accumulator reaches must agree with it.
"""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from veilstore.accumulator import (
    AcaState,
    DuplicateFidError,
    UnknownFidError,
    Witness,
    compute_index,
    index_to_leaf,
    verify_membership,
)
from veilstore.hashing import fid_of


class FlatOracle:
    """First-vacant slot array in scan order; growth mirrors the merge."""

    def __init__(self) -> None:
        self.m = 1
        self.slots: list[bytes | None] = [None]

    def _segments(self):
        # (tree_index, start, length) in scan order: k = m-1 .. 0
        start = 0
        for k in range(self.m - 1, -1, -1):
            yield k, start, 1 << k
            start += 1 << k

    def insert(self, fid: bytes) -> int:
        assert fid not in self.slots
        if None not in self.slots:
            occupants = [s for s in self.slots if s is not None]
            self.m += 1
            capacity = (1 << self.m) - 1
            self.slots = occupants + [fid] + [None] * (capacity - len(occupants) - 1)
        else:
            self.slots[self.slots.index(None)] = fid
        return self.index_of(fid)

    def delete(self, fid: bytes) -> None:
        self.slots[self.slots.index(fid)] = None

    def live(self) -> list[bytes]:
        return [s for s in self.slots if s is not None]

    def index_of(self, fid: bytes) -> int:
        position = self.slots.index(fid)
        index = 1
        for k, start, length in self._segments():
            segment = self.slots[start : start + length]
            if start <= position < start + length:
                return index + (position - start)
            if any(s is not None for s in segment):
                index += length
        raise AssertionError("fid not found")


def fids(n: int, salt: str = "") -> list[bytes]:
    return [fid_of(f"{salt}file-{i}".encode()) for i in range(n)]


def test_gen_is_single_vacant_root():
    state = AcaState.gen()
    assert state.m == 1
    assert state.roots() == (None,)
    assert state.capacity() == 1
    assert state.occupied_count() == 0


def test_first_insert_gets_index_one():
    state = AcaState.gen()
    assignment = state.insert(fids(1)[0])
    assert assignment.index == 1
    assert assignment.tree_index == 0
    assert assignment.witness.path == ()


def test_second_insert_grows_and_gets_index_two():
    state = AcaState.gen()
    a, b = fids(2)
    state.insert(a)
    assignment = state.insert(b)
    assert state.m == 2
    assert state.roots()[0] is None
    assert state.roots()[1] is not None
    assert assignment.index == 2
    assert assignment.witness.leaf_position == 1


def test_worked_six_insert_example():
    """Six sequential inserts reproduce the canonical forest: four digests
    in the big tree, the fifth in the two-leaf tree's left leaf, and the
    sixth lands at index 1 + 4 + 1 = 6."""
    state = AcaState.gen()
    assignments = [state.insert(fid) for fid in fids(6)]
    assert [a.index for a in assignments] == [1, 2, 3, 4, 5, 6]
    sixth = assignments[5]
    assert sixth.tree_index == 1
    assert sixth.witness.leaf_position == 1
    assert sixth.witness.path[0].side == "left"
    occupancy = [r is not None for r in state.roots()]
    assert occupancy == [False, True, True]


def test_compute_index_empty_sums():
    state = AcaState.gen()
    fid = fids(1)[0]
    assignment = state.insert(fid)
    assert compute_index(state.roots(), 0, assignment.witness) == 1


def test_compute_index_rejects_out_of_range_tree():
    state = AcaState.gen()
    assignment = state.insert(fids(1)[0])
    with pytest.raises(ValueError):
        compute_index(state.roots(), 5, assignment.witness)


def test_duplicate_insert_rejected():
    state = AcaState.gen()
    fid = fids(1)[0]
    state.insert(fid)
    with pytest.raises(DuplicateFidError):
        state.insert(fid)


def test_delete_unknown_rejected():
    with pytest.raises(UnknownFidError):
        AcaState.gen().delete(fids(1)[0])


def test_delete_cases():
    state = AcaState.gen()
    names = fids(6)
    for fid in names:
        state.insert(fid)
    # tree 1 holds five and six; deleting five keeps the root (case 1)
    record = state.delete(names[4])
    assert record.tree_index == 1 and not record.collapsed
    assert state.roots()[1] is not None
    # deleting six empties tree 1 entirely (case 2)
    record = state.delete(names[5])
    assert record.collapsed
    assert state.roots()[1] is None


def test_sole_digest_delete_collapses():
    state = AcaState.gen()
    fid = fids(1)[0]
    state.insert(fid)
    record = state.delete(fid)
    assert record.collapsed
    assert state.roots() == (None,)


def test_freed_leaf_reused_with_same_index():
    state = AcaState.gen()
    names = fids(7, salt="reuse")
    for fid in names[:6]:
        state.insert(fid)
    freed = state.assignment(names[2]).index
    state.delete(names[2])
    assignment = state.insert(names[6])
    assert assignment.index == freed


def test_witness_membership_round_trip():
    state = AcaState.gen()
    names = fids(9, salt="w")
    for fid in names:
        state.insert(fid)
    for fid in names:
        a = state.assignment(fid)
        assert verify_membership(state.roots(), a.tree_index, a.witness, fid)
        # a different live digest must not verify at this position
        other = names[0] if fid != names[0] else names[1]
        assert not verify_membership(state.roots(), a.tree_index, a.witness, other)


def test_witness_tamper_detected():
    state = AcaState.gen()
    names = fids(5, salt="t")
    for fid in names:
        state.insert(fid)
    a = state.assignment(names[3])
    step = a.witness.path[0]
    flipped = bytes([step.sibling[0] ^ 1]) + step.sibling[1:]
    bad = Witness(
        a.witness.tree_index,
        a.witness.leaf_position,
        (type(step)(flipped, step.side),) + a.witness.path[1:],
    )
    assert not verify_membership(state.roots(), a.tree_index, bad, names[3])


def test_witness_length_is_tree_index():
    state = AcaState.gen()
    for fid in fids(33, salt="len"):
        a = state.insert(fid)
        assert len(a.witness.path) == a.tree_index
        assert a.tree_index <= state.m - 1


def test_index_to_leaf_inverts_worked_example():
    assert index_to_leaf(6, 3) == (1, 1)
    assert index_to_leaf(1, 3) == (2, 0)
    assert index_to_leaf(7, 3) == (0, 0)
    with pytest.raises(ValueError):
        index_to_leaf(8, 3)
    with pytest.raises(ValueError):
        index_to_leaf(0, 3)


def test_index_to_leaf_respects_occupancy():
    # with the big tree vacant, index 1 belongs to the two-leaf tree
    assert index_to_leaf(1, 3, occupied=(False, True, False)) == (1, 0)
    with pytest.raises(ValueError):
        index_to_leaf(3, 3, occupied=(False, True, False))


def test_index_to_leaf_inverts_compute_index_on_live_states():
    rng = random.Random(2)
    state = AcaState.gen()
    names = fids(40, salt="inv")
    for fid in names:
        state.insert(fid)
    for fid in rng.sample(names, 15):
        state.delete(fid)
    roots = state.roots()
    occupied = tuple(r is not None for r in roots)
    for fid, index in state.live_mappings():
        k, pos = index_to_leaf(index, state.m, occupied)
        assert state.location(fid) == (k, pos)


def test_serialization_round_trip_preserves_digest():
    state = AcaState.gen()
    names = fids(11, salt="ser")
    for fid in names:
        state.insert(fid)
    state.delete(names[4])
    clone = AcaState.from_bytes(state.to_bytes())
    assert clone.digest() == state.digest()
    assert clone.roots() == state.roots()
    assert dict(clone.live_mappings()) == dict(state.live_mappings())


def test_replicas_reach_identical_bytes():
    ops = []
    rng = random.Random(9)
    live: list[bytes] = []
    pool = fids(64, salt="det")
    for _ in range(120):
        if live and rng.random() < 0.4:
            fid = rng.choice(live)
            ops.append(("delete", fid))
            live.remove(fid)
        else:
            remaining = [f for f in pool if f not in live]
            if not remaining:
                continue
            fid = rng.choice(remaining)
            ops.append(("insert", fid))
            live.append(fid)
    a, b = AcaState.gen(), AcaState.gen()
    for kind, fid in ops:
        for state in (a, b):
            if kind == "insert":
                state.insert(fid)
            else:
                state.delete(fid)
    assert a.to_bytes() == b.to_bytes()


def oracle_equivalence_run(seed: int, n_ops: int, max_live: int) -> int:
    """Random mixed workload; returns the number of index comparisons."""
    rng = random.Random(seed)
    state = AcaState.gen()
    oracle = FlatOracle()
    live: list[bytes] = []
    counter = 0
    checks = 0
    for step in range(n_ops):
        deletable = bool(live)
        do_delete = deletable and (len(live) >= max_live or rng.random() < 0.35)
        if do_delete:
            fid = live[rng.randrange(len(live))]
            state.delete(fid)
            oracle.delete(fid)
            live.remove(fid)
        else:
            fid = fid_of(f"oracle-{seed}-{counter}".encode())
            counter += 1
            assignment = state.insert(fid)
            expected = oracle.insert(fid)
            assert assignment.index == expected
            live.append(fid)
        checks += 1
        if step % 100 == 99 or step == n_ops - 1:
            assert sorted(oracle.live()) == sorted(state.live_fids())
            for live_fid, index in state.live_mappings():
                assert index == oracle.index_of(live_fid)
                checks += 1
    return checks


def test_oracle_equivalence_random_workloads():
    for seed in range(6):
        oracle_equivalence_run(seed, n_ops=160, max_live=48)


def test_no_collision_and_root_consistency():
    rng = random.Random(4)
    state = AcaState.gen()
    live: list[bytes] = []
    for i in range(100):
        if live and rng.random() < 0.3:
            fid = live.pop(rng.randrange(len(live)))
            state.delete(fid)
        else:
            fid = fid_of(f"consa-{i}".encode())
            state.insert(fid)
            live.append(fid)
        # no two live digests share an index
        indexes = [index for _, index in state.live_mappings()]
        assert len(set(indexes)) == len(indexes)
        # every non-vacant root recomputes from its serialized leaves
        rebuilt = AcaState.from_bytes(state.to_bytes())
        assert rebuilt.roots() == state.roots()


@settings(deadline=None, max_examples=40)
@given(st.lists(st.integers(0, 31), min_size=1, max_size=24, unique=True))
def test_membership_holds_for_any_insert_set(ids):
    state = AcaState.gen()
    names = [fid_of(f"hyp-{i}".encode()) for i in ids]
    for fid in names:
        state.insert(fid)
    for fid in names:
        a = state.assignment(fid)
        assert verify_membership(state.roots(), a.tree_index, a.witness, fid)
