import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from motiondb.crypto import (CIPHERS, EncryptedShard, Shard, ShardBundle, Table, assign_keys,
                             decrypt_shard, deserialize, encrypt_shard, generate_key, read_table,
                             record_decryptions, serialize, shard_table)
from motiondb.errors import (AuthenticationError, InvalidShardCount, NotEnoughBalls, SchemaError,
                             SerializationFailure)

SCHEMA = (("id", "integer"), ("name", "text"), ("score", "float"))


def _table(n):
    return Table("t", SCHEMA, [(i, f"n{i}", i / 4) for i in range(n)])


def test_round_robin_sizes():
    ss = shard_table(_table(10), 3)
    assert [len(s.rows) for s in ss.shards] == [4, 3, 3]
    assert ss.shards[1].rows[0][0] == 1 and ss.shards[1].rows[1][0] == 4
    with pytest.raises(InvalidShardCount):
        shard_table(_table(3), 0)


rows_st = st.lists(st.tuples(st.integers(-2**63, 2**63 - 1), st.text(max_size=12),
                             st.floats(allow_nan=False)), max_size=60)


@given(rows_st, st.integers(1, 9))
def test_sharding_is_lossless(rows, n):
    table = Table("t", SCHEMA, rows)
    ss = shard_table(table, n)
    assert len(ss) == n
    merged = [None] * len(rows)
    for s in ss.shards:
        merged[s.shard_id::n] = s.rows
    assert tuple(merged) == table.rows


@given(rows_st, st.integers(0, 5))
def test_serialization_round_trip(rows, k):
    shard = Shard(k, "t", SCHEMA, tuple(rows))
    assert deserialize(serialize(shard)) == shard
    bundle = ShardBundle(k, (shard, Shard(k, "u", (("x", "text"),), (("é☃",),))))
    assert deserialize(serialize(bundle)) == bundle


def test_serialization_is_canonical_and_strict():
    a = Shard(0, "t", SCHEMA, ((1, "a", 0.5),))
    assert serialize(a) == serialize(Shard(0, "t", SCHEMA, ((1, "a", 0.5),)))
    with pytest.raises(SerializationFailure):
        deserialize(serialize(a)[:-1])
    with pytest.raises(SerializationFailure):
        deserialize(b"junk")


@pytest.mark.parametrize("cipher", sorted(CIPHERS))
def test_encrypt_round_trip_and_empty_shard(cipher):
    rng = np.random.default_rng(0)
    key = generate_key(rng)
    for shard in shard_table(_table(2), 3).shards:  # the last shard is empty
        enc = encrypt_shard(shard, key, rng, "kid", cipher)
        assert enc.cipher == cipher and len(enc.auth_tag) == 16 and len(enc.nonce) == 12
        assert decrypt_shard(enc, key) == shard


def test_wrong_key_and_tampering_are_detected():
    rng = np.random.default_rng(1)
    key = generate_key(rng)
    enc = encrypt_shard(shard_table(_table(5), 1).shards[0], key, rng, "kid")
    with pytest.raises(AuthenticationError):
        decrypt_shard(enc, generate_key(rng))
    for i in range(0, len(enc.ciphertext) * 8, 37):
        ct = bytearray(enc.ciphertext)
        ct[i // 8] ^= 1 << (i % 8)
        bad = EncryptedShard(enc.shard_id, bytes(ct), enc.nonce, enc.key_id, enc.auth_tag)
        with pytest.raises(AuthenticationError):
            decrypt_shard(bad, key)
    for field_change in ({"shard_id": 1}, {"key_id": "other"}):
        doc = {**enc.__dict__, **field_change}
        with pytest.raises(AuthenticationError):
            decrypt_shard(EncryptedShard(**doc), key)


def test_nonces_are_fresh():
    rng = np.random.default_rng(2)
    key = generate_key(rng)
    shard = shard_table(_table(3), 1).shards[0]
    encs = [encrypt_shard(shard, key, rng) for _ in range(500)]
    assert len({e.nonce for e in encs}) == 500
    assert len({e.ciphertext for e in encs}) == 500


def test_decryption_audit_records_sites():
    rng = np.random.default_rng(3)
    key = generate_key(rng)
    enc = encrypt_shard(shard_table(_table(3), 1).shards[0], key, rng)
    decrypt_shard(enc, key)
    with record_decryptions() as log:
        decrypt_shard(enc, key)
        decrypt_shard(enc, key, site="ball-onfly")
    assert log == ["obstacle", "ball-onfly"]


def test_assign_keys_minimal():
    reg = assign_keys(1, 1, 1, np.random.default_rng(0))
    assert reg.ball_of_shard == {0: 0}
    (kid,) = reg.keys
    assert reg.obstacle_of == {kid: 0} and reg.key_of_ball == {0: kid}
    assert reg.rings() == {0: {kid}}


def test_assign_keys_conservation():
    rng = np.random.default_rng(4)
    reg = assign_keys(shard_table(_table(20), 7), 12, 5, rng)
    assert len(reg.keys) == 7
    assert sum(reg.key_counts(5)) == 7
    assert len(set(reg.ball_of_shard.values())) == 7
    assert all(0 <= b < 12 for b in reg.ball_of_shard.values())
    assert all(len(k) == 32 for k in reg.keys.values())
    with pytest.raises(NotEnoughBalls):
        assign_keys(5, 4, 3, rng)


def test_assign_keys_uniform_over_obstacles():
    # three independent 10^4-draw chi-square tests at the 1% level
    for seed in (5, 6, 7):
        rng = np.random.default_rng(seed)
        counts = np.zeros(4)
        for _ in range(10_000):
            counts += assign_keys(1, 3, 4, rng).key_counts(4)
        _, p = sps.chisquare(counts)
        assert p > 0.01, (seed, counts)


def test_read_table_sample(sample):
    assert sample.name == "t" and len(sample.rows) == 100
    assert sample.columns == ["id", "region", "product", "qty", "price"]


def test_read_table_errors(tmp_path):
    schema = tmp_path / "s.schema.json"
    schema.write_text(json.dumps({"name": "s", "columns": [{"name": "a", "type": "integer"},
                                                           {"name": "b", "type": "float"}]}))
    cases = {"a,c\n1,2.0\n": "header", "a,b\n1,\n": "missing", "a,b\nx,2.0\n": "not integer",
             "a,b\n1,2.0,3\n": "fields"}
    for text, needle in cases.items():
        path = tmp_path / "s.csv"
        path.write_text(text)
        with pytest.raises(SchemaError, match=needle):
            read_table(path, schema)
    path.write_text("a,b\n1,2.5\n")
    assert read_table(path, schema).rows == ((1, 2.5),)
    bad = tmp_path / "bad.schema.json"
    bad.write_text(json.dumps({"columns": [{"name": "a"}]}))
    with pytest.raises(SchemaError):
        read_table(path, bad)
    with pytest.raises(SchemaError):
        Table("x", (("a", "float"),), [(float("nan"),)])
    with pytest.raises(SchemaError):
        Table("x", (("a", "blob"),))
