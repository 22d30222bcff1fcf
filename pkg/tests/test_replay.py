"""Episode file format and the sequence sampler."""

import struct

import numpy as np
import pytest

from protocad.replay import (EPISODE_MAGIC, EpisodeError, EpisodeRecord,
                             ReplayBuffer, load_episode, save_episode)


def make_record(L=10, od=3, ad=1, seed=0):
    rng = np.random.default_rng(seed)
    return EpisodeRecord(
        task="pendulum_swingup", mass_mult=1.25, damping_mult=1.0,
        split="train", seed=seed,
        obs=rng.standard_normal((L + 1, od)),
        act=rng.uniform(-1, 1, (L, ad)),
        rew=rng.random(L),
    )


def probe_record(L=10, od=2, ad=1):
    """Arrays whose values encode their indices, for window-alignment checks."""
    obs = np.stack([np.full(od, i, dtype=np.float32) for i in range(L + 1)])
    act = np.arange(100, 100 + L, dtype=np.float32)[:, None]
    rew = np.arange(200, 200 + L, dtype=np.float32)
    return EpisodeRecord(task="msd_reach", mass_mult=1.0, damping_mult=1.0,
                         split="train", seed=1, obs=obs, act=act, rew=rew)


def test_record_validates_alignment():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        EpisodeRecord(task="t", mass_mult=1, damping_mult=1, split="train", seed=0,
                      obs=rng.standard_normal((10, 3)),  # needs L+1 = 11 rows
                      act=rng.standard_normal((10, 1)),
                      rew=rng.random(10))


def test_record_casts_to_float32():
    rec = make_record()
    assert rec.obs.dtype == np.float32
    assert rec.act.dtype == np.float32
    assert rec.rew.dtype == np.float32
    assert rec.length == 10
    assert abs(rec.return_ - rec.rew.sum()) == 0.0


def test_round_trip_bit_exact(tmp_path):
    rec = make_record(L=17, od=4, ad=2, seed=3)
    p = tmp_path / "ep.pcad"
    save_episode(p, rec)
    back = load_episode(p)
    assert back.task == rec.task
    assert back.mass_mult == rec.mass_mult
    assert back.damping_mult == rec.damping_mult
    assert back.split == rec.split
    assert back.seed == rec.seed
    assert np.array_equal(back.obs, rec.obs)
    assert np.array_equal(back.act, rec.act)
    assert np.array_equal(back.rew, rec.rew)
    # and saving the loaded record reproduces the file byte for byte
    p2 = tmp_path / "ep2.pcad"
    save_episode(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.pcad"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(EpisodeError, match="magic"):
        load_episode(p)


def test_load_rejects_unknown_version(tmp_path):
    rec = make_record()
    p = tmp_path / "ep.pcad"
    save_episode(p, rec)
    blob = bytearray(p.read_bytes())
    blob[4:8] = struct.pack("<I", 99)
    p.write_bytes(bytes(blob))
    with pytest.raises(EpisodeError, match="version"):
        load_episode(p)


def test_load_rejects_truncated_payload(tmp_path):
    rec = make_record()
    p = tmp_path / "ep.pcad"
    save_episode(p, rec)
    blob = p.read_bytes()
    p.write_bytes(blob[:-8])
    with pytest.raises(EpisodeError, match="payload"):
        load_episode(p)


def test_load_rejects_tiny_file(tmp_path):
    p = tmp_path / "ep.pcad"
    p.write_bytes(EPISODE_MAGIC + b"\x01")
    with pytest.raises(EpisodeError):
        load_episode(p)


def test_buffer_add_names_files_sequentially(tmp_path):
    buf = ReplayBuffer(tmp_path)
    p0 = buf.add(make_record(seed=0))
    p1 = buf.add(make_record(seed=1))
    assert p0.name == "ep_000000.pcad"
    assert p1.name == "ep_000001.pcad"
    assert len(buf) == 2


def test_buffer_rescans_directory_in_order(tmp_path):
    buf = ReplayBuffer(tmp_path)
    for i in range(3):
        buf.add(make_record(seed=i))
    again = ReplayBuffer(tmp_path)
    assert len(again) == 3
    for a, b in zip(buf.episodes, again.episodes):
        assert a.seed == b.seed
        assert np.array_equal(a.obs, b.obs)


def test_sample_window_alignment(tmp_path):
    buf = ReplayBuffer(tmp_path)
    buf.add(probe_record(L=10))
    rng = np.random.default_rng(0)
    for _ in range(50):
        batch = buf.sample_batch(rng, batch=4, seq_len=4)
        for b in range(4):
            start = int(batch["obs"][b, 0, 0])
            assert np.array_equal(batch["obs"][b, :, 0], np.arange(start, start + 4))
            if start == 0:
                # first step of the episode: nothing arrived with obs[0]
                assert batch["prev_act"][b, 0, 0] == 0.0
                assert batch["prev_rew"][b, 0] == 0.0
                assert np.array_equal(batch["prev_act"][b, 1:, 0], 100 + np.arange(3))
                assert np.array_equal(batch["prev_rew"][b, 1:], 200 + np.arange(3))
            else:
                assert np.array_equal(batch["prev_act"][b, :, 0],
                                      100 + np.arange(start - 1, start + 3))
                assert np.array_equal(batch["prev_rew"][b],
                                      200 + np.arange(start - 1, start + 3))


def test_sample_start_range_covers_full_episode(tmp_path):
    buf = ReplayBuffer(tmp_path)
    buf.add(probe_record(L=6))
    rng = np.random.default_rng(0)
    starts = set()
    for _ in range(300):
        batch = buf.sample_batch(rng, batch=1, seq_len=4)
        starts.add(int(batch["obs"][0, 0, 0]))
    assert starts == {0, 1, 2}  # L - M = 2 is the last admissible start


def test_sample_batch_shapes_and_dtype(tmp_path):
    buf = ReplayBuffer(tmp_path)
    buf.add(make_record(L=12, od=3, ad=2))
    batch = buf.sample_batch(np.random.default_rng(0), batch=5, seq_len=6)
    assert batch["obs"].shape == (5, 6, 3)
    assert batch["prev_act"].shape == (5, 6, 2)
    assert batch["prev_rew"].shape == (5, 6)
    assert all(v.dtype == np.float32 for v in batch.values())


def test_sample_batch_validates(tmp_path):
    buf = ReplayBuffer(tmp_path)
    with pytest.raises(ValueError, match="empty"):
        buf.sample_batch(np.random.default_rng(0), batch=1, seq_len=4)
    buf.add(make_record(L=3))
    with pytest.raises(ValueError, match="shorter"):
        buf.sample_batch(np.random.default_rng(0), batch=1, seq_len=4)
