"""Episode storage and sequence sampling.

Episodes are serialized one per file: magic ``PCAD``, a u32 format version,
a u32 JSON-metadata byte length, the UTF-8 JSON metadata, then float32
little-endian payloads for observations [L+1, obs], actions [L, act] and
rewards [L], in that order. Files round-trip bit-exactly; the buffer keeps
the arrays in memory and treats the files as the durable store.

Window convention: a sampled window pairs each observation with the action
and reward that *arrived with it* (zeros at an episode's very first step),
which is exactly what the filtering and reward heads consume.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EPISODE_MAGIC = b"PCAD"
EPISODE_VERSION = 1


class EpisodeError(Exception):
    pass


@dataclass
class EpisodeRecord:
    task: str
    mass_mult: float
    damping_mult: float
    split: str
    seed: int
    obs: np.ndarray   # float32 [L+1, obs_dim]
    act: np.ndarray   # float32 [L, act_dim]
    rew: np.ndarray   # float32 [L]

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float32)
        self.act = np.asarray(self.act, dtype=np.float32)
        self.rew = np.asarray(self.rew, dtype=np.float32)
        L = self.rew.shape[0]
        if self.obs.shape[0] != L + 1 or self.act.shape[0] != L:
            raise ValueError(
                f"episode arrays misaligned: obs {self.obs.shape}, act {self.act.shape}, rew {self.rew.shape}"
            )

    @property
    def length(self) -> int:
        return self.rew.shape[0]

    @property
    def return_(self) -> float:
        return float(self.rew.sum())


def save_episode(path, rec: EpisodeRecord) -> None:
    meta = {
        "task": rec.task,
        "context": {"mass_mult": rec.mass_mult, "damping_mult": rec.damping_mult, "split": rec.split},
        "seed": rec.seed,
        "length": rec.length,
        "obs_dim": int(rec.obs.shape[1]),
        "act_dim": int(rec.act.shape[1]),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(EPISODE_MAGIC)
        f.write(struct.pack("<I", EPISODE_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for arr in (rec.obs, rec.act, rec.rew):
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_episode(path) -> EpisodeRecord:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != EPISODE_MAGIC:
        raise EpisodeError(f"{path}: not an episode file (bad magic)")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != EPISODE_VERSION:
        raise EpisodeError(f"{path}: unsupported episode version {version}")
    meta_len = struct.unpack("<I", blob[8:12])[0]
    if len(blob) < 12 + meta_len:
        raise EpisodeError(f"{path}: truncated metadata")
    meta = json.loads(blob[12 : 12 + meta_len].decode("utf-8"))
    L, od, ad = meta["length"], meta["obs_dim"], meta["act_dim"]
    need = 4 * ((L + 1) * od + L * ad + L)
    payload = blob[12 + meta_len :]
    if len(payload) != need:
        raise EpisodeError(f"{path}: payload is {len(payload)} bytes, expected {need}")
    obs_n = (L + 1) * od
    act_n = L * ad
    obs = np.frombuffer(payload[: 4 * obs_n], dtype="<f4").reshape(L + 1, od)
    act = np.frombuffer(payload[4 * obs_n : 4 * (obs_n + act_n)], dtype="<f4").reshape(L, ad)
    rew = np.frombuffer(payload[4 * (obs_n + act_n) :], dtype="<f4")
    ctx = meta["context"]
    return EpisodeRecord(
        task=meta["task"], mass_mult=ctx["mass_mult"], damping_mult=ctx["damping_mult"],
        split=ctx.get("split", "train"), seed=meta["seed"],
        obs=obs.copy(), act=act.copy(), rew=rew.copy(),
    )


class ReplayBuffer:
    """On-disk episode store plus in-memory arrays and a window sampler."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.episodes: list[EpisodeRecord] = []
        for path in sorted(self.directory.glob("ep_*.pcad")):
            self.episodes.append(load_episode(path))

    def __len__(self) -> int:
        return len(self.episodes)

    def add(self, rec: EpisodeRecord) -> Path:
        path = self.directory / f"ep_{len(self.episodes):06d}.pcad"
        save_episode(path, rec)
        self.episodes.append(rec)
        return path

    def sample_batch(self, rng: np.random.Generator, batch: int, seq_len: int) -> dict:
        """Uniform episodes, uniform window starts in [0, L - seq_len].

        Returns obs [B,M,obs], prev_act [B,M,act], prev_rew [B,M]: the action
        and reward aligned to each observation per the window convention.
        """
        if not self.episodes:
            raise ValueError("sample_batch on an empty buffer")
        if any(ep.length < seq_len for ep in self.episodes):
            raise ValueError(f"an episode is shorter than the window length {seq_len}")
        od = self.episodes[0].obs.shape[1]
        ad = self.episodes[0].act.shape[1]
        obs = np.zeros((batch, seq_len, od), dtype=np.float32)
        prev_act = np.zeros((batch, seq_len, ad), dtype=np.float32)
        prev_rew = np.zeros((batch, seq_len), dtype=np.float32)
        for b in range(batch):
            ep = self.episodes[int(rng.integers(len(self.episodes)))]
            start = int(rng.integers(ep.length - seq_len + 1))
            obs[b] = ep.obs[start : start + seq_len]
            if start == 0:
                prev_act[b, 1:] = ep.act[: seq_len - 1]
                prev_rew[b, 1:] = ep.rew[: seq_len - 1]
            else:
                prev_act[b] = ep.act[start - 1 : start + seq_len - 1]
                prev_rew[b] = ep.rew[start - 1 : start + seq_len - 1]
        return {"obs": obs, "prev_act": prev_act, "prev_rew": prev_rew}
