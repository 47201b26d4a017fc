import dataclasses
import math

import numpy as np
import pytest

from helpers import random_plan, random_tables
from motiondb import orchestrator as orch
from motiondb.crypto import EncryptedShard, Table, decrypt_shard, record_decryptions
from motiondb.errors import (AuthFailureOnClaimedMatch, ConfigError, ConvergenceTimeout,
                             DuplicateShard, PhaseError, ReplayMismatch)
from motiondb.orchestrator import (SimulationConfig, next_epoch, read_event_log, replay_epoch,
                                   run_query, setup_epoch, write_event_log)
from motiondb.query import Agg, QueryPlan, execute_oracle, map_shard, parse_sql

COUNT = QueryPlan("t", aggregates=(Agg("COUNT"),))


def cfg(**kw):
    base = dict(n_shards=4, n_balls=6, n_obstacles=4, arena="stadium", seed=3)
    return SimulationConfig(**{**base, **kw})


def test_minimal_epoch():
    tables = {"t": Table("t", (("v", "integer"),), [(1,), (2,)])}
    config = SimulationConfig(n_shards=1, n_balls=1, n_obstacles=1, seed=1)
    epoch = setup_epoch(config, tables)
    result = run_query(epoch, parse_sql("SELECT SUM(v) FROM t"))
    assert result.rows == [(3,)]
    assert epoch.phase == "Reduced" and epoch.delivered == {0}
    assert sum(e.matched for e in epoch.event_log) == 1
    assert epoch.event_log[-1].matched and epoch.event_log[-1].surface.kind == "obstacle"
    assert epoch.convergence_time == epoch.sim_time == epoch.event_log[-1].time


def test_config_validation():
    with pytest.raises(ConfigError):
        cfg(n_balls=2)
    with pytest.raises(ConfigError):
        cfg(arena="hexagon")
    with pytest.raises(ConfigError):
        cfg(arena_params={"sides": 3})
    with pytest.raises(ConfigError):
        SimulationConfig.from_dict({"n_shard": 3})
    with pytest.raises(ConfigError):
        cfg(speed=float("nan"))
    c = cfg()
    assert SimulationConfig.from_dict(c.to_dict()) == c


def test_setup_keys_and_decoys(sample):
    epoch = setup_epoch(cfg(n_balls=9), {"t": sample})
    carriers = set(epoch.shard_of_ball)
    assert len(carriers) == 4
    decoys = [b for b in epoch.balls if b.id not in carriers]
    assert len(decoys) == 5
    rings = set().union(*(o.key_ring for o in epoch.arena.obstacles))
    for b in decoys:
        assert b.payload.shard_id == -1 and b.key_id not in rings
        assert len(b.payload.ciphertext) == len(epoch.balls[min(carriers)].payload.ciphertext)
    for b in carriers:
        assert epoch.balls[b].key_id in rings
    run_query(epoch, COUNT)
    assert not any(e.matched and e.ball_id not in carriers for e in epoch.event_log)
    assert all(epoch.balls[b].status == "InFlight" for b in (d.id for d in decoys))


def test_sinai_central_disk_holds_no_keys(sample):
    c = cfg(arena="sinai", arena_params={"side": 1.0, "disk_radius": 0.2}, obstacle_radius=0.04)
    epoch = setup_epoch(c, {"t": sample})
    assert len(epoch.arena.obstacles) == 5
    assert epoch.arena.obstacles[0].key_ring == frozenset()
    assert run_query(epoch, COUNT).rows == [(100,)]


def test_setup_is_deterministic(sample):
    a = setup_epoch(cfg(), {"t": sample})
    b = setup_epoch(cfg(), {"t": sample})
    assert a.fingerprint() == b.fingerprint()
    assert a.registry.keys == b.registry.keys
    assert setup_epoch(cfg(seed=4), {"t": sample}).fingerprint() != a.fingerprint()


@pytest.mark.parametrize("mode", orch.MAP_MODES)
def test_count_and_groupby_match_oracle(sample, mode):
    for plan in (COUNT, parse_sql("SELECT region, AVG(price), MAX(qty) FROM t GROUP BY region")):
        epoch = setup_epoch(cfg(map_mode=mode), {"t": sample})
        res = run_query(epoch, plan)
        assert res.same_answer(execute_oracle(plan, {"t": sample}))
        assert res.provenance == [0, 1, 2, 3] and res.epoch == 0


def test_next_epoch_rerandomizes(sample):
    plan = parse_sql("SELECT product, SUM(qty) FROM t GROUP BY product")
    first = setup_epoch(cfg(), {"t": sample})
    r1 = run_query(first, plan)
    second = next_epoch(first, tables={"t": sample})
    r2 = run_query(second, plan)
    assert second.epoch_id == 1
    assert r1.rows == r2.rows
    assert not set(first.registry.keys) & set(second.registry.keys)
    assert not set(first.registry.keys.values()) & set(second.registry.keys.values())
    assert second.fingerprint() != first.fingerprint()


def test_phase_rules(sample):
    epoch = setup_epoch(cfg(), {"t": sample})
    with pytest.raises(PhaseError):
        next_epoch(epoch, tables={"t": sample})
    run_query(epoch, COUNT)
    with pytest.raises(PhaseError):
        run_query(epoch, COUNT)
    with pytest.raises(PhaseError):
        epoch.set_phase("InMotion")


def test_master_rejects_duplicate(sample):
    epoch = setup_epoch(cfg(n_shards=1, n_balls=1), {"t": sample})
    part = map_shard(COUNT, _bundle_of(epoch, 0))
    epoch.master.receive(part)
    with pytest.raises(DuplicateShard):
        epoch.master.receive(part)


def _bundle_of(epoch, shard_id):
    ball = epoch.balls[epoch.registry.ball_of_shard[shard_id]]
    return decrypt_shard(ball.payload, epoch.registry.keys[ball.key_id])


def test_replay_reproduces_fingerprint(sample, tmp_path):
    plan = parse_sql("SELECT region, COUNT(*) FROM t GROUP BY region")
    epoch = setup_epoch(cfg(), {"t": sample})
    run_query(epoch, plan, arrival_time=3.0)
    path = write_event_log([epoch], tmp_path / "events.csv")
    log = read_event_log(path)[0]
    assert log == epoch.event_log
    again = replay_epoch(cfg(), {"t": sample}, log, plan, arrival_time=3.0)
    assert again.fingerprint() == epoch.fingerprint()
    bad = list(log)
    bad[5] = dataclasses.replace(bad[5], time=math.nextafter(bad[5].time, math.inf))
    with pytest.raises(ReplayMismatch):
        replay_epoch(cfg(), {"t": sample}, bad, plan, arrival_time=3.0)


def test_arrival_time_gates_matches(sample):
    epoch = setup_epoch(cfg(), {"t": sample})
    run_query(epoch, COUNT, arrival_time=25.0)
    matched = [e for e in epoch.event_log if e.matched]
    assert len(matched) == 4 and all(e.time >= 25.0 for e in matched)
    assert epoch.convergence_time == pytest.approx(matched[-1].time - 25.0)


def test_decryption_sites(sample):
    for mode, expected in (("at-obstacle", ["obstacle"] * 4),
                           ("on-the-fly", ["ball-onfly"] * 4 + ["obstacle"] * 4)):
        epoch = setup_epoch(cfg(map_mode=mode), {"t": sample})
        with record_decryptions() as sites:
            run_query(epoch, COUNT)
        assert sites == expected


def test_convergence_timeout(sample):
    epoch = setup_epoch(cfg(tmax_factor=1e-3, tmax_offset=0.0), {"t": sample})
    with pytest.raises(ConvergenceTimeout) as info:
        run_query(epoch, COUNT)
    exc = info.value
    assert sorted(exc.delivered + exc.undelivered) == [0, 1, 2, 3]
    assert exc.undelivered
    assert epoch.phase == "InMotion"


def test_corrupted_payload_fails_loudly(sample):
    epoch = setup_epoch(cfg(), {"t": sample})
    ball = epoch.balls[epoch.registry.ball_of_shard[2]]
    p = ball.payload
    ball.payload = EncryptedShard(p.shard_id, bytes([p.ciphertext[0] ^ 1]) + p.ciphertext[1:], p.nonce,
                                  p.key_id, p.auth_tag, p.cipher)
    with pytest.raises(AuthFailureOnClaimedMatch):
        run_query(epoch, COUNT)


def test_delivered_set_only_grows(sample, monkeypatch):
    sizes = []
    real = orch.handle_collision

    def spy(event, epoch, registry=None):
        out = real(event, epoch, registry)
        sizes.append(len(epoch.delivered))
        return out

    monkeypatch.setattr(orch, "handle_collision", spy)
    epoch = setup_epoch(cfg(n_shards=6, n_balls=8), {"t": sample})
    run_query(epoch, COUNT)
    assert sizes == sorted(sizes) and sizes[-1] == 6
    times = [e.time for e in epoch.event_log]
    assert times == sorted(times)


def test_liveness_many_seeds(sample):
    config = cfg(n_shards=16, n_balls=16, n_obstacles=4)
    timeouts = 0
    for seed in range(300):
        c = dataclasses.replace(config, seed=seed)
        try:
            assert run_query(setup_epoch(c, {"t": sample}), COUNT).rows == [(100,)]
        except ConvergenceTimeout:
            timeouts += 1
    assert timeouts == 0


@pytest.mark.parametrize("seed", range(6))
def test_jobs_and_modes_agree(seed):
    rng = np.random.default_rng(seed)
    tables = random_tables(rng, 120)
    plan = random_plan(rng)
    c = SimulationConfig(n_shards=3, n_balls=4, n_obstacles=3, arena="stadium", seed=seed)
    results, prints = [], []
    for mode in orch.MAP_MODES:
        for jobs in (1, 8):
            epoch = setup_epoch(dataclasses.replace(c, map_mode=mode), tables)
            results.append(run_query(epoch, plan, jobs=jobs))
            prints.append(epoch.fingerprint())
    assert all(r.to_dict() == results[0].to_dict() for r in results)
    assert len(set(prints)) == 1
    assert results[0].same_answer(execute_oracle(plan, tables))
