"""Hash-chained append-only log of per-round aggregation records.

Each block commits to its predecessor with SHA-256 over
(index, round, prev_hash, canonical payload JSON), so any retroactive edit
breaks verification at the first touched block.  Persistence is JSONL: one
compact sorted-key object per line, hashes hex, ring blobs base64.
"""
from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from .errors import FormatError, RoundNotFound

GENESIS_HASH = bytes(32)


@dataclass(frozen=True)
class Block:
    index: int
    round: int
    prev_hash: bytes
    payload: dict[str, Any]
    hash: bytes


def canonical_payload_bytes(payload: dict[str, Any]) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def block_hash(index: int, round_no: int, prev_hash: bytes,
               payload: dict[str, Any]) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack("<QQ", index, round_no))
    h.update(prev_hash)
    h.update(canonical_payload_bytes(payload))
    return h.digest()


def make_round_payload(agg_share_blob: bytes, trust_weights: dict[int, float],
                       global_model_digest: bytes) -> dict[str, Any]:
    """Standard per-round record: the publishing server's aggregate share
    (blob + digest), the trust weights, and the digest of the global model
    the round trained from."""
    return {
        "agg_share_digest": hashlib.sha256(agg_share_blob).hexdigest(),
        "agg_share_blob": base64.b64encode(agg_share_blob).decode("ascii"),
        "trust_weights": {str(cid): float(w) for cid, w in sorted(trust_weights.items())},
        "global_model_digest": global_model_digest.hex(),
    }


def payload_agg_blob(payload: dict[str, Any]) -> bytes:
    return base64.b64decode(payload["agg_share_blob"])


def payload_trust_weights(payload: dict[str, Any]) -> dict[int, float]:
    return {int(cid): float(w) for cid, w in payload["trust_weights"].items()}


class Ledger:
    """Single-writer append-only chain, optionally persisted as JSONL."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.blocks: list[Block] = []
        if self.path is not None and self.path.exists():
            self.blocks = list(read_chain(self.path))

    def append(self, round_no: int, payload: dict[str, Any]) -> Block:
        """Append a block; the line is persisted before the call returns."""
        index = len(self.blocks)
        prev = self.blocks[-1].hash if self.blocks else GENESIS_HASH
        digest = block_hash(index, round_no, prev, payload)
        block = Block(index, round_no, prev, payload, digest)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(_block_line(block) + "\n")
                fh.flush()
        self.blocks.append(block)
        return block

    def read_round(self, round_no: int) -> dict[str, Any]:
        """Payload of the first block recorded for the given round."""
        for block in self.blocks:
            if block.round == round_no:
                return block.payload
        raise RoundNotFound(f"no block for round {round_no}")

    def verify(self) -> int | None:
        return verify_blocks(self.blocks)


def _block_line(block: Block) -> str:
    record = {
        "index": block.index,
        "round": block.round,
        "prev_hash": block.prev_hash.hex(),
        "payload": block.payload,
        "hash": block.hash.hex(),
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def read_chain(path: str | Path) -> Iterator[Block]:
    """Parse a JSONL chain file; malformed lines raise FormatError."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                yield Block(
                    index=int(record["index"]),
                    round=int(record["round"]),
                    prev_hash=bytes.fromhex(record["prev_hash"]),
                    payload=record["payload"],
                    hash=bytes.fromhex(record["hash"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc


def verify_blocks(blocks: list[Block]) -> int | None:
    """Recompute every hash and linkage; return the first bad index, or
    None when the chain is intact."""
    for i, block in enumerate(blocks):
        if block.index != i:
            return i
        expected_prev = GENESIS_HASH if i == 0 else blocks[i - 1].hash
        if block.prev_hash != expected_prev:
            return i
        if block_hash(block.index, block.round, block.prev_hash, block.payload) != block.hash:
            return i
    return None


def verify_file(path: str | Path) -> int | None:
    """Verify a persisted chain; unparseable or undecodable lines count as
    bad blocks (arbitrary byte corruption must never escape detection)."""
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    prev_hash = GENESIS_HASH
    for lineno, line in enumerate(lines):
        try:
            record = json.loads(line.decode("utf-8"))
            block = Block(
                index=int(record["index"]),
                round=int(record["round"]),
                prev_hash=bytes.fromhex(record["prev_hash"]),
                payload=record["payload"],
                hash=bytes.fromhex(record["hash"]),
            )
        except (ValueError, KeyError, TypeError, UnicodeDecodeError):
            return lineno
        if block.index != lineno or block.prev_hash != prev_hash:
            return lineno
        if block_hash(block.index, block.round, block.prev_hash, block.payload) != block.hash:
            return lineno
        prev_hash = block.hash
    return None
