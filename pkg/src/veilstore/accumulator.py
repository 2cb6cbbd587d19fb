"""Merkle-forest accumulator mapping content digests to dense 1-based indexes.

The accumulator state is a vector of tree roots ``(r_0 .. r_{m-1})`` where
tree ``i`` is a complete binary Merkle tree over ``2**i`` leaves.  A root is
the vacancy marker (``None``) exactly when every leaf of its tree is vacant.
Capacity is ``2**m - 1``.

Insertion scans the vector from ``r_{m-1}`` down to ``r_0`` for the first
tree with a vacancy and fills its first vacant leaf; when every leaf is
occupied the forest is merged into a single tree of ``2**m`` leaves
(descending tree order, then left-to-right) with the new digest in the
rightmost leaf, and the vector grows by one.

A leaf's index is ``1 + sum(2**i for occupied trees above it) + position``,
so indexes of live digests form exactly ``1..n`` in scan order.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .hashing import (
    DIGEST_LEN,
    dsha,
    leaf_digest,
    node_digest,
    vacant_digest,
)
from .wire import Reader, u8, u32

LEFT = "left"
RIGHT = "right"

_SIDE_BYTE = {LEFT: 0, RIGHT: 1}
_SIDE_NAME = {0: LEFT, 1: RIGHT}


class DuplicateFidError(ValueError):
    """The digest is already mapped to a leaf."""


class UnknownFidError(KeyError):
    """The digest is not mapped to any leaf."""


@dataclass(frozen=True)
class WitnessStep:
    """One Merkle-path element: the sibling digest and which side (left or
    right child) the *sibling* occupies."""

    sibling: bytes
    side: str


@dataclass(frozen=True)
class Witness:
    """Merkle path from a leaf up to its tree root.

    ``path[j]`` is the sibling at level ``j``; ``len(path)`` equals the tree
    index, and the step sides encode ``leaf_position`` in binary (the leaf is
    a right child at level ``j`` iff its sibling is a left child).
    """

    tree_index: int
    leaf_position: int
    path: tuple[WitnessStep, ...]

    def fold(self, leaf: bytes) -> bytes:
        """Root obtained by hashing ``leaf`` up the path."""
        acc = leaf
        for step in self.path:
            if step.side == LEFT:
                acc = node_digest(step.sibling, acc)
            else:
                acc = node_digest(acc, step.sibling)
        return acc

    def consistent(self) -> bool:
        """Path length and sides must agree with the claimed position."""
        if len(self.path) != self.tree_index:
            return False
        if not 0 <= self.leaf_position < (1 << self.tree_index):
            return False
        pos = 0
        for j, step in enumerate(self.path):
            if step.side not in (LEFT, RIGHT):
                return False
            if step.side == LEFT:
                pos |= 1 << j
        return pos == self.leaf_position

    def to_bytes(self) -> bytes:
        out = [u32(self.tree_index), u32(self.leaf_position)]
        for step in self.path:
            out.append(u8(_SIDE_BYTE[step.side]))
            out.append(step.sibling)
        return b"".join(out)

    @classmethod
    def read_from(cls, reader: Reader) -> "Witness":
        tree_index = reader.u32()
        leaf_position = reader.u32()
        steps = []
        for _ in range(tree_index):
            side = _SIDE_NAME[reader.u8()]
            steps.append(WitnessStep(reader.take(DIGEST_LEN), side))
        return cls(tree_index, leaf_position, tuple(steps))


@dataclass(frozen=True)
class IndexAssignment:
    """Result of an insertion: where the digest landed and its proof path."""

    index: int
    fid: bytes
    tree_index: int
    witness: Witness


@dataclass(frozen=True)
class DeletionRecord:
    """Result of a deletion: the pre-deletion path of the removed leaf.

    ``collapsed`` is true when the tree held no other digest and its root
    became vacant.
    """

    tree_index: int
    leaf_position: int
    witness: Witness
    collapsed: bool


class _Tree:
    """Complete binary Merkle tree with 2**order leaves, heap-stored.

    ``nodes[0]`` is the root; children of node ``i`` are ``2i+1`` and
    ``2i+2``; leaves occupy the last ``2**order`` slots in left-to-right
    order.  Leaf updates rehash only the path to the root.
    """

    __slots__ = ("order", "leaves", "nodes", "occupied")

    def __init__(self, order: int) -> None:
        self.order = order
        size = 1 << order
        self.leaves: list[bytes | None] = [None] * size
        self.nodes: list[bytes] = [b""] * (2 * size - 1)
        self.occupied = 0
        for pos in range(size):
            self.nodes[size - 1 + pos] = vacant_digest(0)
        for i in range(size - 2, -1, -1):
            self.nodes[i] = node_digest(self.nodes[2 * i + 1], self.nodes[2 * i + 2])

    def root(self) -> bytes:
        return self.nodes[0]

    def set_leaf(self, pos: int, fid: bytes | None) -> None:
        was = self.leaves[pos]
        if was is None and fid is not None:
            self.occupied += 1
        elif was is not None and fid is None:
            self.occupied -= 1
        self.leaves[pos] = fid
        i = (1 << self.order) - 1 + pos
        self.nodes[i] = vacant_digest(0) if fid is None else leaf_digest(fid)
        while i > 0:
            i = (i - 1) // 2
            self.nodes[i] = node_digest(self.nodes[2 * i + 1], self.nodes[2 * i + 2])

    def first_vacant(self) -> int | None:
        # Pre-order DFS over a complete tree visits leaves left to right.
        try:
            return self.leaves.index(None)
        except ValueError:
            return None

    def witness(self, pos: int) -> Witness:
        steps = []
        i = (1 << self.order) - 1 + pos
        while i > 0:
            if i % 2 == 1:  # this node is a left child; sibling sits right
                steps.append(WitnessStep(self.nodes[i + 1], RIGHT))
            else:
                steps.append(WitnessStep(self.nodes[i - 1], LEFT))
            i = (i - 1) // 2
        return Witness(self.order, pos, tuple(steps))


class AcaState:
    """The accumulator: root vector plus the backing Merkle forest.

    One logical owner mutates an instance at a time; use :meth:`clone` for
    speculative execution.
    """

    def __init__(self) -> None:
        self._trees: list[_Tree] = [_Tree(0)]
        self._where: dict[bytes, tuple[int, int]] = {}

    @classmethod
    def gen(cls) -> "AcaState":
        """Fresh accumulator: vector ``(r_0)`` with ``r_0`` vacant."""
        return cls()

    @property
    def m(self) -> int:
        return len(self._trees)

    def capacity(self) -> int:
        return (1 << self.m) - 1

    def occupied_count(self) -> int:
        return len(self._where)

    def roots(self) -> tuple[bytes | None, ...]:
        """Vector view: vacant trees appear as ``None``."""
        return tuple(
            tree.root() if tree.occupied else None for tree in self._trees
        )

    def contains(self, fid: bytes) -> bool:
        return fid in self._where

    def live_fids(self) -> list[bytes]:
        return list(self._where)

    def location(self, fid: bytes) -> tuple[int, int]:
        try:
            return self._where[fid]
        except KeyError:
            raise UnknownFidError(fid.hex()) from None

    def _scan_target(self) -> tuple[int, int] | None:
        """First tree (from r_{m-1} down) with a vacancy, and the leaf."""
        for k in range(self.m - 1, -1, -1):
            tree = self._trees[k]
            if tree.occupied == 0:
                return k, 0
            pos = tree.first_vacant()
            if pos is not None:
                return k, pos
        return None

    def insert(self, fid: bytes) -> IndexAssignment:
        if len(fid) != DIGEST_LEN:
            raise ValueError(f"fid must be {DIGEST_LEN} bytes")
        if fid in self._where:
            raise DuplicateFidError(fid.hex())
        target = self._scan_target()
        if target is None:
            k, pos = self._grow(fid)
        else:
            k, pos = target
            self._trees[k].set_leaf(pos, fid)
        self._where[fid] = (k, pos)
        witness = self._trees[k].witness(pos)
        index = compute_index(self.roots(), k, witness)
        return IndexAssignment(index, fid, k, witness)

    def _grow(self, fid: bytes) -> tuple[int, int]:
        """Full case: merge every leaf into a new top tree, new digest
        rightmost, and vacate the consumed vector slots."""
        m = self.m
        merged = _Tree(m)
        pos = 0
        for k in range(m - 1, -1, -1):
            for leaf in self._trees[k].leaves:
                if leaf is not None:
                    merged.set_leaf(pos, leaf)
                    self._where[leaf] = (m, pos)
                pos += 1
            self._trees[k] = _Tree(k)
        merged.set_leaf((1 << m) - 1, fid)
        self._trees.append(merged)
        return m, (1 << m) - 1

    def delete(self, fid: bytes) -> DeletionRecord:
        k, pos = self.location(fid)
        tree = self._trees[k]
        witness = tree.witness(pos)
        tree.set_leaf(pos, None)
        del self._where[fid]
        return DeletionRecord(k, pos, witness, collapsed=tree.occupied == 0)

    def witness(self, fid: bytes) -> Witness:
        k, pos = self.location(fid)
        return self._trees[k].witness(pos)

    def assignment(self, fid: bytes) -> IndexAssignment:
        """Current index and path of a live digest."""
        k, pos = self.location(fid)
        witness = self._trees[k].witness(pos)
        return IndexAssignment(compute_index(self.roots(), k, witness), fid, k, witness)

    def live_mappings(self) -> list[tuple[bytes, int]]:
        """(fid, current index) for every live digest."""
        roots = self.roots()
        out = []
        for fid, (k, pos) in self._where.items():
            index = 1 + pos
            for i in range(k + 1, len(roots)):
                if roots[i] is not None:
                    index += 1 << i
            out.append((fid, index))
        return out

    def set_leaf_unchecked(self, k: int, pos: int, fid: bytes | None) -> None:
        """Directly overwrite a leaf, bypassing the scan discipline.

        Exists so adversarial miners can fabricate states; honest code never
        calls it.
        """
        tree = self._trees[k]
        old = tree.leaves[pos]
        if old is not None:
            self._where.pop(old, None)
        tree.set_leaf(pos, fid)
        if fid is not None:
            self._where[fid] = (k, pos)

    def clone(self) -> "AcaState":
        return copy.deepcopy(self)

    def to_bytes(self) -> bytes:
        out = [u32(self.m)]
        for tree in self._trees:
            for leaf in tree.leaves:
                if leaf is None:
                    out.append(u8(0))
                else:
                    out.append(u8(1))
                    out.append(leaf)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "AcaState":
        reader = Reader(data)
        m = reader.u32()
        state = cls.__new__(cls)
        state._trees = []
        state._where = {}
        for k in range(m):
            tree = _Tree(k)
            for pos in range(1 << k):
                if reader.u8():
                    fid = reader.take(DIGEST_LEN)
                    tree.set_leaf(pos, fid)
                    state._where[fid] = (k, pos)
            state._trees.append(tree)
        reader.expect_done()
        return state

    def digest(self) -> bytes:
        return dsha(b"ACA-STATE", self.to_bytes())


def compute_index(
    roots: tuple[bytes | None, ...], tree_index: int, witness: Witness
) -> int:
    """Database index proven by a witness: one plus the leaves of occupied
    trees above this one plus the leaves preceding it inside its tree."""
    if tree_index >= len(roots):
        raise ValueError("tree index outside the root vector")
    index = 1
    for i in range(tree_index + 1, len(roots)):
        if roots[i] is not None:
            index += 1 << i
    for j, step in enumerate(witness.path):
        if step.side == LEFT:
            index += 1 << j
    return index


def index_to_leaf(
    index: int, m: int, occupied: tuple[bool, ...] | None = None
) -> tuple[int, int]:
    """Inverse of :func:`compute_index`: which (tree, position) holds the
    database index.

    ``occupied`` flags which trees currently hold digests; omitted means all
    of them (the fully-packed layout).
    """
    if occupied is None:
        occupied = tuple(True for _ in range(m))
    if len(occupied) != m:
        raise ValueError("occupancy flags must cover all m trees")
    if not 1 <= index <= (1 << m) - 1:
        raise ValueError(f"index {index} outside [1, {(1 << m) - 1}]")
    offset = index - 1
    for k in range(m - 1, -1, -1):
        if not occupied[k]:
            continue
        if offset < (1 << k):
            return k, offset
        offset -= 1 << k
    raise ValueError(f"index {index} exceeds the occupied capacity")


def verify_membership(
    roots: tuple[bytes | None, ...], tree_index: int, witness: Witness, fid: bytes
) -> bool:
    """True iff hashing ``fid`` up the witness reproduces the k-th root."""
    if tree_index >= len(roots) or not witness.consistent():
        return False
    if witness.tree_index != tree_index:
        return False
    expected = roots[tree_index]
    if expected is None:
        expected = vacant_digest(tree_index)
    return witness.fold(leaf_digest(fid)) == expected


def roots_to_bytes(roots: tuple[bytes | None, ...]) -> bytes:
    out = [u32(len(roots))]
    for r in roots:
        if r is None:
            out.append(u8(0))
        else:
            out.append(u8(1))
            out.append(r)
    return b"".join(out)


def roots_read_from(reader: Reader) -> tuple[bytes | None, ...]:
    m = reader.u32()
    out: list[bytes | None] = []
    for _ in range(m):
        if reader.u8():
            out.append(reader.take(DIGEST_LEN))
        else:
            out.append(None)
    return tuple(out)
