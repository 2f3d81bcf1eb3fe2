"""Transaction ingestion from a JSON-RPC node or a recorded JSONL fixture."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import requests

from .errors import (
    ConfigInvalid,
    FixtureNotFound,
    MalformedResponse,
    ParseError,
    RpcUnreachable,
    ValueOverflow,
)
from .graph_core import TxEdge

log = logging.getLogger(__name__)

FIXTURE_FIELDS = ("hash", "from", "to", "value", "gas", "block", "timestamp")
CONTRACT_SINK = "0x" + "0" * 40
MAX_VALUE = 2**256 - 1
RETRIES = 3
BACKOFF_S = 0.5


@dataclass(frozen=True)
class IngestConfig:
    start_block: int
    end_block: int
    source: str = "file"
    rpc_url: str | None = None
    file_path: str | None = None

    def __post_init__(self):
        if self.source not in ("rpc", "file"):
            raise ConfigInvalid(f"unknown source {self.source!r}")
        if self.start_block > self.end_block:
            raise ConfigInvalid(
                f"start_block {self.start_block} > end_block {self.end_block}"
            )
        if self.source == "file" and not self.file_path:
            raise ConfigInvalid("file source needs file_path")
        if self.source == "rpc" and not (self.rpc_url or os.environ.get("ETH_RPC_URL")):
            raise ConfigInvalid("rpc source needs rpc_url or ETH_RPC_URL")

    @classmethod
    def descending(cls, latest_block: int, stop_block: int, **kw) -> "IngestConfig":
        """Accept a `range(latest, stop, -1)` style range, stored ascending."""
        lo, hi = sorted((stop_block + 1, latest_block))
        return cls(start_block=lo, end_block=hi, **kw)

    @property
    def endpoint(self) -> str | None:
        return os.environ.get("ETH_RPC_URL") or self.rpc_url


@dataclass(frozen=True)
class RawTransaction:
    hash: str
    from_: str
    to: str | None
    value: int
    gas: int
    block: int
    timestamp: int

    def to_json(self) -> dict:
        return {
            "hash": self.hash,
            "from": self.from_,
            "to": self.to,
            "value": str(self.value),
            "gas": self.gas,
            "block": self.block,
            "timestamp": self.timestamp,
        }


def _parse_value(raw) -> int:
    if isinstance(raw, bool):
        raise ValueError("boolean value")
    if isinstance(raw, int):
        v = raw
    elif isinstance(raw, str):
        v = int(raw, 16) if raw.startswith(("0x", "0X")) else int(raw, 10)
    else:
        raise ValueError(f"value of type {type(raw).__name__}")
    if v < 0:
        raise ValueError("negative value")
    if v > MAX_VALUE:
        raise ValueOverflow(f"value {v} exceeds uint256")
    return v


def parse_fixture_line(line: str, lineno: int) -> RawTransaction:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(obj, dict) or set(obj) != set(FIXTURE_FIELDS):
        got = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
        raise ParseError(f"expected fields {list(FIXTURE_FIELDS)}, got {got}", lineno)
    try:
        return RawTransaction(
            hash=str(obj["hash"]),
            from_=str(obj["from"]).lower(),
            to=None if obj["to"] is None else str(obj["to"]).lower(),
            value=_parse_value(obj["value"]),
            gas=int(obj["gas"]),
            block=int(obj["block"]),
            timestamp=int(obj["timestamp"]),
        )
    except ValueOverflow:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), lineno) from None


def read_fixture(path) -> list[RawTransaction]:
    path = Path(path)
    if not path.is_file():
        raise FixtureNotFound(f"fixture not found: {path}")
    txs = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                txs.append(parse_fixture_line(line, lineno))
    return txs


def write_fixture(txs: Iterable[RawTransaction], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tx in txs:
            fh.write(json.dumps(tx.to_json(), separators=(",", ":")) + "\n")
            n += 1
    return n


def _in_range(txs, cfg: IngestConfig) -> list[RawTransaction]:
    picked = [t for t in txs if cfg.start_block <= t.block <= cfg.end_block]
    # stable sort keeps intra-block order from the file
    picked.sort(key=lambda t: t.block)
    seen = set()
    for t in picked:
        if t.hash in seen:
            raise ParseError(f"duplicate transaction hash {t.hash}")
        seen.add(t.hash)
    return picked


class RpcClient:
    """Minimal JSON-RPC client for `eth_getBlockByNumber` with bounded retry."""

    def __init__(self, url: str, timeout: float = 30.0, retries: int = RETRIES,
                 backoff: float = BACKOFF_S, session=None):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self._id = 0

    def call(self, method: str, params: list):
        self._id += 1
        payload = {"jsonrpc": "2.0", "id": self._id, "method": method, "params": params}
        last = None
        for attempt in range(self.retries):
            try:
                resp = self.session.post(self.url, json=payload, timeout=self.timeout)
                resp.raise_for_status()
                body = resp.json()
                break
            except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
                last = exc
                log.warning("rpc attempt %d/%d failed: %s", attempt + 1, self.retries, exc)
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
            except ValueError as exc:
                raise MalformedResponse(f"non-JSON response from {self.url}") from exc
        else:
            raise RpcUnreachable(f"{self.url}: {last}")
        if not isinstance(body, dict):
            raise MalformedResponse("response is not a JSON object")
        if body.get("error"):
            raise MalformedResponse(f"rpc error: {body['error']}")
        if "result" not in body:
            raise MalformedResponse("response lacks 'result'")
        return body["result"]

    def get_block(self, number: int) -> dict | None:
        return self.call("eth_getBlockByNumber", [hex(number), True])


def block_transactions(block: dict, number: int) -> list[RawTransaction]:
    """Convert an `eth_getBlockByNumber(..., true)` result into transactions."""
    try:
        ts = int(block["timestamp"], 16)
        out = []
        for tx in block["transactions"]:
            if not isinstance(tx, dict):
                raise MalformedResponse("block fetched without full transactions")
            out.append(RawTransaction(
                hash=tx["hash"],
                from_=tx["from"].lower(),
                to=tx["to"].lower() if tx.get("to") else None,
                value=_parse_value(tx["value"]),
                gas=int(tx["gas"], 16),
                block=number,
                timestamp=ts,
            ))
        return out
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise MalformedResponse(f"block {number}: {exc!r}") from None


def fetch_block_range(cfg: IngestConfig, client: RpcClient | None = None) -> list[RawTransaction]:
    """All transactions in [start_block, end_block], ordered by (block, index)."""
    if cfg.source == "file":
        return _in_range(read_fixture(cfg.file_path), cfg)
    client = client or RpcClient(cfg.endpoint)
    txs: list[RawTransaction] = []
    for number in range(cfg.start_block, cfg.end_block + 1):
        block = client.get_block(number)
        if block is None:
            raise MalformedResponse(f"block {number} not found")
        txs.extend(block_transactions(block, number))
    return _in_range(txs, cfg)


def to_edges(txs: Iterable[RawTransaction], skip_contract_creation: bool = True,
             include_zero_value: bool = True) -> list[TxEdge]:
    """One edge per transaction; creations are dropped or sent to a sink address."""
    edges = []
    for t in txs:
        if t.to is None:
            if skip_contract_creation:
                continue
            to = CONTRACT_SINK
        else:
            to = t.to
        if not include_zero_value and t.value == 0:
            continue
        if t.value > MAX_VALUE:
            raise ValueOverflow(f"{t.hash}: value exceeds uint256")
        edges.append(TxEdge(t.from_, to, t.value, t.gas, t.block, t.timestamp))
    return edges
