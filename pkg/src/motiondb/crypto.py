"""Tables, round-robin shards, canonical serialization and shard encryption.

Keys and nonces come from the caller's generator so that seeded runs are
reproducible; pass a generator seeded from ``os.urandom`` for real use.
"""

from __future__ import annotations

import contextlib
import csv
import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305

from .errors import (AuthenticationError, InvalidShardCount, NotEnoughBalls, SchemaError,
                     SerializationFailure)

TYPES = ("integer", "float", "text")
_TAG = {"integer": 0, "float": 1, "text": 2}
_TYPE_OF_TAG = {v: k for k, v in _TAG.items()}
KEY_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
_MAGIC = b"MDBS"
_VERSION = 1


@dataclass(frozen=True)
class Table:
    name: str
    schema: tuple  # ((column, type), ...)
    rows: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple((str(c), str(t)) for c, t in self.schema))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        check_rows(self.schema, self.rows, self.name)

    @property
    def columns(self):
        return [c for c, _ in self.schema]


def check_rows(schema, rows, name="table"):
    for col, typ in schema:
        if typ not in TYPES:
            raise SchemaError(f"{name}.{col}: unknown type {typ!r}")
    for i, row in enumerate(rows):
        if len(row) != len(schema):
            raise SchemaError(f"{name} row {i}: arity {len(row)} != {len(schema)}")
        for v, (col, typ) in zip(row, schema):
            if not _is_type(v, typ):
                raise SchemaError(f"{name} row {i}: {col}={v!r} is not {typ}")


def _is_type(v, typ):
    if typ == "integer":
        return isinstance(v, int) and not isinstance(v, bool)
    if typ == "float":
        return isinstance(v, float) and v == v
    return isinstance(v, str)


def read_schema(path) -> tuple[str, tuple]:
    """Sidecar schema: ``{"name": ..., "columns": [{"name": ..., "type": ...}]}``."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        cols = tuple((c["name"], c["type"]) for c in doc["columns"])
        name = doc.get("name") or Path(path).stem.split(".")[0]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed schema ({exc})") from None
    return name, cols


def read_table(csv_path, schema_path) -> Table:
    """Load a headed CSV, converting cells by the sidecar schema. Empty cells are rejected."""
    name, schema = read_schema(schema_path)
    conv = {"integer": int, "float": float, "text": str}
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [c for c, _ in schema]:
            raise SchemaError(f"{csv_path}: header {header} does not match schema columns")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(schema):
                raise SchemaError(f"{csv_path}:{lineno}: expected {len(schema)} fields")
            row = []
            for cell, (col, typ) in zip(rec, schema):
                if cell == "":
                    raise SchemaError(f"{csv_path}:{lineno}: missing value for {col}")
                try:
                    row.append(conv[typ](cell))
                except ValueError:
                    raise SchemaError(f"{csv_path}:{lineno}: {col}={cell!r} is not {typ}") from None
            rows.append(tuple(row))
    return Table(name, schema, rows)


@dataclass(frozen=True)
class Shard:
    shard_id: int
    table: str
    schema: tuple
    rows: tuple


@dataclass(frozen=True)
class ShardBundle:
    """Shard ``shard_id`` of every table in a database; one ball carries one bundle."""

    shard_id: int
    shards: tuple

    def view(self) -> dict:
        return {s.table: s for s in self.shards}


@dataclass(frozen=True)
class ShardSet:
    table: Table
    shards: tuple

    def __len__(self):
        return len(self.shards)


def shard_table(table: Table, n: int) -> ShardSet:
    """Round-robin partition: row i goes to shard i mod n."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidShardCount(f"shard count must be >= 1, got {n}")
    shards = tuple(Shard(k, table.name, table.schema, table.rows[k::n]) for k in range(n))
    return ShardSet(table, shards)


# canonical serialization: little-endian, length-prefixed, type-tagged

def _pack_str(out: list, s: str):
    b = s.encode("utf-8")
    out.append(struct.pack("<I", len(b)))
    out.append(b)


def _encode_shard(out: list, shard: Shard):
    _pack_str(out, shard.table)
    out.append(struct.pack("<I", len(shard.schema)))
    for col, typ in shard.schema:
        out.append(struct.pack("<B", _TAG[typ]))
        _pack_str(out, col)
    out.append(struct.pack("<I", len(shard.rows)))
    for row in shard.rows:
        for v, (col, typ) in zip(row, shard.schema):
            tag = _TAG[typ]
            out.append(struct.pack("<B", tag))
            if tag == 0:
                if not -(1 << 63) <= v < (1 << 63):
                    raise SerializationFailure(f"{col}={v} does not fit in int64")
                out.append(struct.pack("<q", v))
            elif tag == 1:
                out.append(struct.pack("<d", v))
            else:
                _pack_str(out, v)


def serialize(payload) -> bytes:
    """Canonical bytes for a :class:`Shard` or :class:`ShardBundle`."""
    shards = payload.shards if isinstance(payload, ShardBundle) else (payload,)
    out = [_MAGIC, struct.pack("<BBqI", _VERSION, 1 if isinstance(payload, ShardBundle) else 0,
                               payload.shard_id, len(shards))]
    try:
        for s in shards:
            if s.shard_id != payload.shard_id:
                raise SerializationFailure("bundle mixes shard ids")
            check_rows(s.schema, s.rows, s.table)
            _encode_shard(out, s)
    except (SchemaError, struct.error, KeyError) as exc:
        raise SerializationFailure(str(exc)) from exc
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt):
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += struct.calcsize(fmt)
        return vals

    def string(self):
        (n,) = self.take("<I")
        b = self.data[self.pos:self.pos + n]
        if len(b) != n:
            raise SerializationFailure("truncated string")
        self.pos += n
        return b.decode("utf-8")


def deserialize(data: bytes):
    if data[:4] != _MAGIC:
        raise SerializationFailure("bad magic")
    r = _Reader(data)
    r.pos = 4
    try:
        version, is_bundle, shard_id, count = r.take("<BBqI")
        if version != _VERSION:
            raise SerializationFailure(f"unsupported version {version}")
        shards = []
        for _ in range(count):
            table = r.string()
            (ncol,) = r.take("<I")
            schema = []
            for _ in range(ncol):
                (tag,) = r.take("<B")
                schema.append((r.string(), _TYPE_OF_TAG[tag]))
            (nrow,) = r.take("<I")
            rows = []
            for _ in range(nrow):
                row = []
                for _ in range(ncol):
                    (tag,) = r.take("<B")
                    if tag == 0:
                        row.append(r.take("<q")[0])
                    elif tag == 1:
                        row.append(r.take("<d")[0])
                    elif tag == 2:
                        row.append(r.string())
                    else:
                        raise SerializationFailure(f"unknown value tag {tag}")
                rows.append(tuple(row))
            shards.append(Shard(shard_id, table, tuple(schema), tuple(rows)))
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise SerializationFailure(f"corrupt shard bytes: {exc}") from exc
    if r.pos != len(data):
        raise SerializationFailure("trailing bytes")
    if is_bundle:
        return ShardBundle(shard_id, tuple(shards))
    return shards[0]


# authenticated encryption

class AEADCipher:
    """Nonce-based AEAD with 256-bit keys; ``impl`` is a cryptography AEAD class."""

    def __init__(self, name, impl):
        self.name = name
        self._impl = impl

    def seal(self, key: bytes, nonce: bytes, plaintext: bytes, aad: bytes):
        sealed = self._impl(key).encrypt(nonce, plaintext, aad)
        return sealed[:-TAG_BYTES], sealed[-TAG_BYTES:]

    def open(self, key: bytes, nonce: bytes, ciphertext: bytes, tag: bytes, aad: bytes) -> bytes:
        try:
            return self._impl(key).decrypt(nonce, ciphertext + tag, aad)
        except InvalidTag:
            raise AuthenticationError("authentication failed") from None


CIPHERS = {
    "aes-256-gcm": AEADCipher("aes-256-gcm", AESGCM),
    "chacha20-poly1305": AEADCipher("chacha20-poly1305", ChaCha20Poly1305),
}
DEFAULT_CIPHER = "aes-256-gcm"


@dataclass(frozen=True)
class EncryptedShard:
    shard_id: int
    ciphertext: bytes = field(repr=False)
    nonce: bytes
    key_id: str
    auth_tag: bytes
    cipher: str = DEFAULT_CIPHER


def _aad(shard_id: int, key_id: str) -> bytes:
    return f"{shard_id}|{key_id}".encode()


def generate_key(rng: np.random.Generator) -> bytes:
    return rng.bytes(KEY_BYTES)


def encrypt_shard(shard, key: bytes, rng: np.random.Generator, key_id: str = "",
                  cipher: str = DEFAULT_CIPHER) -> EncryptedShard:
    """Seal the canonical serialization of a Shard or ShardBundle under a fresh nonce."""
    if len(key) != KEY_BYTES:
        raise ValueError("keys are 256-bit")
    nonce = rng.bytes(NONCE_BYTES)
    ct, tag = CIPHERS[cipher].seal(key, nonce, serialize(shard), _aad(shard.shard_id, key_id))
    return EncryptedShard(shard.shard_id, ct, nonce, key_id, tag, cipher)


_audit_log: list | None = None


@contextlib.contextmanager
def record_decryptions():
    """Collect the ``site`` label of every decryption made inside the block."""
    global _audit_log
    previous = _audit_log
    _audit_log = []
    try:
        yield _audit_log
    finally:
        _audit_log = previous


def decrypt_bytes(enc: EncryptedShard, key: bytes, site: str) -> bytes:
    plaintext = CIPHERS[enc.cipher].open(key, enc.nonce, enc.ciphertext, enc.auth_tag,
                                         _aad(enc.shard_id, enc.key_id))
    if _audit_log is not None:
        _audit_log.append(site)
    return plaintext


def decrypt_shard(enc: EncryptedShard, key: bytes, site: str = "obstacle"):
    """Authenticated decryption; raises AuthenticationError on a wrong key or tampering."""
    return deserialize(decrypt_bytes(enc, key, site))


# key management

@dataclass
class KeyRegistry:
    keys: dict = field(default_factory=dict, repr=False)  # key_id -> bytes
    obstacle_of: dict = field(default_factory=dict)  # key_id -> obstacle id
    ball_of_shard: dict = field(default_factory=dict)  # shard_id -> ball id
    key_of_ball: dict = field(default_factory=dict)  # ball id -> key_id

    def rings(self) -> dict:
        """obstacle id -> set of key ids it holds."""
        out = {}
        for kid, ob in self.obstacle_of.items():
            out.setdefault(ob, set()).add(kid)
        return out

    def key_counts(self, n_obstacles: int) -> list:
        c = Counter(self.obstacle_of.values())
        return [c.get(i, 0) for i in range(n_obstacles)]


def _count(x):
    return x if isinstance(x, (int, np.integer)) else len(x)


def assign_keys(shard_set, balls, obstacles, rng: np.random.Generator) -> KeyRegistry:
    """Match each shard to a distinct random ball and give its fresh key to a random obstacle.

    ``balls`` and ``obstacles`` may be counts or sequences. Obstacles are
    drawn with replacement, so one obstacle may hold several keys.
    """
    n = _count(shard_set.shards if isinstance(shard_set, ShardSet) else shard_set)
    m = _count(balls)
    p = _count(obstacles)
    if m < n:
        raise NotEnoughBalls(f"{n} shards need at least {n} balls, got {m}")
    if p < 1:
        raise ValueError("need at least one obstacle")
    reg = KeyRegistry()
    chosen = rng.permutation(m)[:n]
    for shard_id, ball in enumerate(chosen):
        key_id = rng.bytes(8).hex()
        while key_id in reg.keys:
            key_id = rng.bytes(8).hex()
        reg.keys[key_id] = generate_key(rng)
        reg.obstacle_of[key_id] = int(rng.integers(p))
        reg.ball_of_shard[shard_id] = int(ball)
        reg.key_of_ball[int(ball)] = key_id
    return reg
