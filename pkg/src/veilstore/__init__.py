"""veilstore: verifiable content-index mapping with private file retrieval.

The package implements a desk-scale decentralized storage stack:

- a Merkle-forest accumulator mapping sparse content digests to dense
  1-based database indexes, with publicly checkable upload/deletion proofs
  chained per miner on an append-only bulletin (`accumulator`, `proofs`,
  `ledger`);
- single-miner private retrieval over a lattice backend and Byzantine-robust
  multi-miner retrieval over secret-shared queries (`pir_single`,
  `pir_multi`, `client`, `node`);
- quorum-replicated miner state with leader rotation and view changes,
  driven by a deterministic discrete-event network (`smr`, `netsim`,
  `runner`);
- a FastAPI service wrapping a live in-process deployment, with the CLI as
  a thin client (`service`, `cli`).
"""

__version__ = "0.1.0"
