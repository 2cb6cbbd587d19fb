"""Bulletin-board behavior: gated appends, directory folding, chain heads,
replay, and persistence."""

from __future__ import annotations

import random

import pytest

from veilstore.accumulator import AcaState, compute_index
from veilstore.hashing import entry_digest, fid_of, genesis_digest
from veilstore.ledger import Ledger, LedgerRejection
from veilstore.node import CONFLICT_INDEX, forged_upload_proof
from veilstore.proofs import (
    CHAIN_BROKEN,
    FID_ABSENT,
    INDEX_CONFLICT,
    UploadProof,
    make_deletion_proof,
    make_upload_proof,
)


def fids(n: int, salt: str = "") -> list[bytes]:
    return [fid_of(f"{salt}ledger-{i}".encode()) for i in range(n)]


def fresh(chain: str = "m0") -> tuple[Ledger, AcaState]:
    board = Ledger()
    board.register_chain(chain, (chain,))
    return board, AcaState.gen()


def test_append_then_lookup():
    board, state = fresh()
    fid = fids(1)[0]
    board.append("m0", make_upload_proof(state, fid, board.head("m0")))
    (info,) = board.lookup(fid)
    assert info.index == 1
    assert info.db_size == 1
    assert info.miners == ("m0",)


def test_worked_example_lookup_index_six():
    board, state = fresh()
    names = fids(6, salt="six")
    for fid in names:
        board.append("m0", make_upload_proof(state, fid, board.head("m0")))
    (info,) = board.lookup(names[5])
    assert info.index == 6
    assert info.db_size == 7


def test_deleted_fid_absent_from_directory():
    board, state = fresh()
    names = fids(3)
    for fid in names:
        board.append("m0", make_upload_proof(state, fid, board.head("m0")))
    board.append("m0", make_deletion_proof(state, names[1], board.head("m0")))
    assert board.lookup(names[1]) == []
    assert board.lookup(names[0]) != []


def test_head_is_hash_of_latest_proof():
    board, state = fresh()
    assert board.head("m0") == genesis_digest("m0")
    for fid in fids(5, salt="h"):
        proof = make_upload_proof(state, fid, board.head("m0"))
        board.append("m0", proof)
        assert board.head("m0") == entry_digest(proof.to_bytes())
    assert board.height("m0") == 5


def test_forged_proof_refused_directory_unchanged():
    rng = random.Random(0)
    board, state = fresh()
    names = fids(4, salt="forge")
    for fid in names[:3]:
        board.append("m0", make_upload_proof(state, fid, board.head("m0")))
    before = {fid.hex(): board.lookup(fid) for fid in names[:3]}
    forged = forged_upload_proof(state, names[3], board.head("m0"), CONFLICT_INDEX, rng)
    with pytest.raises(LedgerRejection) as excinfo:
        board.append("m0", forged)
    assert excinfo.value.outcome.reason == INDEX_CONFLICT
    assert board.height("m0") == 3
    assert {fid.hex(): board.lookup(fid) for fid in names[:3]} == before
    assert board.lookup(names[3]) == []


def test_duplicate_fid_upload_refused():
    """A structurally perfect insert proof re-publishing a live fid at a
    fresh leaf passes the path checks; the directory fold still refuses it
    because the fid already has an index."""
    board, state = fresh()
    names = fids(3, salt="dup")
    for fid in names:
        board.append("m0", make_upload_proof(state, fid, board.head("m0")))
    dup = names[0]
    shadow = AcaState.from_bytes(state.to_bytes())
    sentinel = shadow.insert(fid_of(b"dup-sentinel"))
    shadow.set_leaf_unchecked(sentinel.tree_index, sentinel.witness.leaf_position, dup)
    witness = shadow.witness(dup)
    forged = UploadProof(
        roots=shadow.roots(),
        tree_index=sentinel.tree_index,
        witness=witness,
        fid=dup,
        index=compute_index(shadow.roots(), sentinel.tree_index, witness),
        prev_hash=board.head("m0"),
    )
    with pytest.raises(LedgerRejection) as excinfo:
        board.append("m0", forged)
    assert excinfo.value.outcome.reason == INDEX_CONFLICT


def test_delete_of_unmapped_fid_refused():
    board, state = fresh()
    board.append("m0", make_upload_proof(state, fids(1)[0], board.head("m0")))
    ghost = fids(2, salt="ghost")[1]
    shadow = AcaState.from_bytes(state.to_bytes())
    shadow.insert(ghost)
    proof = make_deletion_proof(shadow, ghost, board.head("m0"))
    with pytest.raises(LedgerRejection) as excinfo:
        board.append("m0", proof)
    assert excinfo.value.outcome.reason == FID_ABSENT


def test_wrong_prev_hash_is_chain_broken():
    board, state = fresh()
    board.append("m0", make_upload_proof(state, fids(1, salt="cb")[0], board.head("m0")))
    proof = make_upload_proof(state, fids(2, salt="cb")[1], genesis_digest("m0"))
    with pytest.raises(LedgerRejection) as excinfo:
        board.append("m0", proof)
    assert excinfo.value.outcome.reason == CHAIN_BROKEN


def test_append_is_idempotent_for_replicas():
    board, state = fresh()
    proof = make_upload_proof(state, fids(1, salt="idem")[0], board.head("m0"))
    first = board.append("m0", proof)
    again = board.append("m0", proof)
    assert first == again
    assert board.height("m0") == 1


def test_get_unknown_entry_raises():
    board, _ = fresh()
    with pytest.raises(KeyError):
        board.get(b"\x00" * 32)


def test_replay_reproduces_state():
    rng = random.Random(3)
    board, state = fresh()
    live = []
    for i in range(60):
        if live and rng.random() < 0.35:
            fid = live.pop(rng.randrange(len(live)))
            board.append("m0", make_deletion_proof(state, fid, board.head("m0")))
        else:
            fid = fid_of(f"replay-{i}".encode())
            board.append("m0", make_upload_proof(state, fid, board.head("m0")))
            live.append(fid)
    replayed = board.replay_chain_state("m0")
    assert replayed.to_bytes() == state.to_bytes()
    # the directory's index view matches the live accumulator
    for fid, index in state.live_mappings():
        (info,) = board.lookup(fid)
        assert info.index == index


def test_save_load_round_trip(tmp_path):
    board, state = fresh()
    names = fids(8, salt="disk")
    for fid in names:
        board.append("m0", make_upload_proof(state, fid, board.head("m0")))
    board.append("m0", make_deletion_proof(state, names[2], board.head("m0")))
    path = tmp_path / "board.log"
    board.save(str(path))
    loaded = Ledger.load(str(path))
    assert loaded.head("m0") == board.head("m0")
    assert loaded.height("m0") == board.height("m0")
    for fid in names:
        assert [i.index for i in loaded.lookup(fid)] == [
            i.index for i in board.lookup(fid)
        ]


def test_merge_remaps_directory_indexes():
    """Growth migrates every live digest into the new top tree; the
    directory must follow (spot-checked against the accumulator)."""
    board, state = fresh()
    names = fids(16, salt="grow")
    for fid in names:
        board.append("m0", make_upload_proof(state, fid, board.head("m0")))
        for live_fid, index in state.live_mappings():
            (info,) = board.lookup(live_fid)
            assert info.index == index


def test_case2_delete_shifts_lower_tree_indexes():
    """Vacating a whole tree removes its contribution to lower trees'
    indexes; directory lookups must reflect the shift."""
    board, state = fresh()
    names = fids(6, salt="shift")
    for fid in names:
        board.append("m0", make_upload_proof(state, fid, board.head("m0")))
    # names[0..3] fill the four-leaf tree; delete them all (last one
    # collapses the tree), shifting names[4], names[5] down by four.
    before = {fid: board.lookup(fid)[0].index for fid in names[4:]}
    assert before == {names[4]: 5, names[5]: 6}
    for fid in names[:4]:
        board.append("m0", make_deletion_proof(state, fid, board.head("m0")))
    after = {fid: board.lookup(fid)[0].index for fid in names[4:]}
    assert after == {names[4]: 1, names[5]: 2}
    for fid, index in state.live_mappings():
        assert board.lookup(fid)[0].index == index
