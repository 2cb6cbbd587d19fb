"""Replay a scripted insert/delete sequence against the accumulator,
printing every state transition, assigned index, and verification outcome.

Ops files are plain text, one operation per line::

    insert alpha
    delete alpha
    # comments and blank lines are ignored

The name after the verb is the file body; its digest is the fid.
"""

from __future__ import annotations

from .accumulator import AcaState
from .hashing import HashMeter, fid_of
from .ledger import Ledger, LedgerRejection
from .proofs import make_deletion_proof, make_upload_proof


class OpsFileError(ValueError):
    pass


def parse_ops(text: str) -> list[tuple[str, str]]:
    ops = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("insert", "delete"):
            raise OpsFileError(f"line {lineno}: expected 'insert <name>' or 'delete <name>'")
        ops.append((parts[0], parts[1]))
    return ops


def _vector_summary(state: AcaState) -> str:
    cells = []
    for i, root in enumerate(state.roots()):
        cells.append(f"r{i}=" + ("_" if root is None else root.hex()[:8]))
    return "(" + ", ".join(cells) + ")"


def run_demo(text: str, chain_id: str = "demo") -> list[str]:
    """Execute the ops script; returns the printable transition log."""
    ops = parse_ops(text)
    state = AcaState.gen()
    board = Ledger()
    board.register_chain(chain_id, (chain_id,))
    lines = [f"start: vector {_vector_summary(state)} capacity {state.capacity()}"]
    for verb, name in ops:
        fid = fid_of(name.encode())
        head = board.head(chain_id)
        try:
            if verb == "insert":
                proof = make_upload_proof(state, fid, head)
                with HashMeter() as meter:
                    board.append(chain_id, proof)
                lines.append(
                    f"insert {name}: fid {fid.hex()[:12]} -> index {proof.index} "
                    f"(tree r{proof.tree_index}, leaf {proof.witness.leaf_position}); "
                    f"proof accepted ({meter.count} hashes); "
                    f"vector {_vector_summary(state)}"
                )
            else:
                proof = make_deletion_proof(state, fid, head)
                with HashMeter() as meter:
                    board.append(chain_id, proof)
                case = "collapsed" if proof.roots[proof.tree_index] is None else "rehashed"
                lines.append(
                    f"delete {name}: fid {fid.hex()[:12]} from tree r{proof.tree_index} "
                    f"leaf {proof.leaf_position} ({case}); "
                    f"proof accepted ({meter.count} hashes); "
                    f"vector {_vector_summary(state)}"
                )
        except (KeyError, ValueError, LedgerRejection) as exc:
            lines.append(f"{verb} {name}: rejected ({exc})")
            continue
    lines.append(
        f"end: {state.occupied_count()} live digests, capacity {state.capacity()}, "
        f"chain height {board.height(chain_id)}"
    )
    return lines
