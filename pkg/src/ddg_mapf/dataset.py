"""Observation-action samples, ring-buffered datasets and binary shard files.

Shard layout (little endian)::

    magic "DDGS" | version u16 | vocab u16 | context u16 | reserved u16 | count u64
    count x record: tokens u8[256] | action u8 | seed u64 | timestep i32 | agent i32 | phase i32
    crc32 u32 over everything above
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import Action
from .tokens import CONTEXT, VOCAB_SIZE, describe_tokens

RECORD_DTYPE = np.dtype([
    ("tokens", "u1", (CONTEXT,)),
    ("action", "u1"),
    ("seed", "<u8"),
    ("timestep", "<i4"),
    ("agent", "<i4"),
    ("phase", "<i4"),
])
EXPERT_PHASE = -1

_MAGIC = b"DDGS"
_VERSION = 1
_HEADER = struct.Struct("<4sHHHHQ")


@dataclass(frozen=True, eq=False)
class Sample:
    tokens: np.ndarray
    action: Action
    seed: int
    timestep: int
    agent: int
    phase: int

    @property
    def provenance(self) -> tuple[int, int, int, int]:
        return self.seed, self.timestep, self.agent, self.phase


def make_records(tokens, actions, seed, timesteps, agents, phase) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.uint8).reshape(-1, CONTEXT)
    rec = np.zeros(len(tokens), dtype=RECORD_DTYPE)
    rec["tokens"] = tokens
    rec["action"] = np.asarray(actions, dtype=np.uint8)
    rec["seed"] = seed
    rec["timestep"] = timesteps
    rec["agent"] = agents
    rec["phase"] = phase
    return rec


def empty_records() -> np.ndarray:
    return np.zeros(0, dtype=RECORD_DTYPE)


class Dataset:
    """In-memory sample store; with ``capacity`` the oldest samples are evicted first."""

    def __init__(self, role: str = "generated", capacity: int | None = None,
                 records: np.ndarray | None = None):
        if role not in ("expert", "generated"):
            raise ValueError("role must be 'expert' or 'generated'")
        self.role = role
        self.capacity = capacity
        self.records = empty_records() if records is None else np.asarray(records, RECORD_DTYPE)
        self.evicted = 0
        self._trim()

    def __len__(self):
        return len(self.records)

    @property
    def tokens(self) -> np.ndarray:
        return self.records["tokens"]

    @property
    def actions(self) -> np.ndarray:
        return self.records["action"]

    def phases(self) -> list[int]:
        return sorted(set(self.records["phase"].tolist()))

    def sample(self, i: int) -> Sample:
        r = self.records[i]
        return Sample(r["tokens"].copy(), Action(int(r["action"])), int(r["seed"]),
                      int(r["timestep"]), int(r["agent"]), int(r["phase"]))

    def append(self, records: np.ndarray) -> None:
        if len(records):
            self.records = np.concatenate([self.records, np.asarray(records, RECORD_DTYPE)])
            self._trim()

    def _trim(self):
        if self.capacity is not None and len(self.records) > self.capacity:
            extra = len(self.records) - self.capacity
            self.records = self.records[extra:].copy()
            self.evicted += extra

    def split(self, fraction: float, rng: np.random.Generator) -> tuple["Dataset", "Dataset"]:
        """Random (1 - fraction, fraction) split, e.g. train / validation."""
        idx = rng.permutation(len(self))
        cut = int(round(len(self) * (1 - fraction)))
        a, b = np.sort(idx[:cut]), np.sort(idx[cut:])
        return Dataset(self.role, None, self.records[a]), Dataset(self.role, None, self.records[b])

    def save(self, directory) -> list[Path]:
        """One shard per phase, named ``<role>-phase<id>.shard``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for ph in self.phases():
            p = directory / f"{self.role}-phase{ph}.shard"
            write_shard(p, self.records[self.records["phase"] == ph])
            paths.append(p)
        return paths

    @classmethod
    def load(cls, directory, role: str = "generated", capacity: int | None = None) -> "Dataset":
        paths = sorted(Path(directory).glob(f"{role}-phase*.shard"),
                       key=lambda p: int(p.stem.split("phase")[1]))
        recs = [read_shard(p) for p in paths]
        return cls(role, capacity, np.concatenate(recs) if recs else None)


def shard_bytes(records: np.ndarray) -> bytes:
    records = np.ascontiguousarray(records, dtype=RECORD_DTYPE)
    head = _HEADER.pack(_MAGIC, _VERSION, VOCAB_SIZE, CONTEXT, 0, len(records))
    body = head + records.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def write_shard(path, records: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(shard_bytes(records))
    tmp.replace(path)


def parse_shard(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size + 4:
        raise FormatError("truncated shard")
    magic, version, vocab, context, _, count = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError("not a dataset shard")
    if version != _VERSION or vocab != VOCAB_SIZE or context != CONTEXT:
        raise FormatError(f"incompatible shard (version {version}, vocab {vocab}, context {context})")
    end = _HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) != end + 4:
        raise FormatError("shard size does not match its header")
    (crc,) = struct.unpack_from("<I", data, end)
    if zlib.crc32(data[:end]) != crc:
        raise FormatError("shard checksum mismatch")
    return np.frombuffer(data, RECORD_DTYPE, count, _HEADER.size).copy()


def read_shard(path) -> np.ndarray:
    return parse_shard(Path(path).read_bytes())


def dump_shard(path, limit: int | None = None, tokens: bool = False) -> str:
    recs = read_shard(path)
    lines = [f"# {Path(path).name}: {len(recs)} samples, vocab {VOCAB_SIZE}, context {CONTEXT}",
             "index\tseed\ttimestep\tagent\tphase\taction"]
    for i, r in enumerate(recs[:limit]):
        lines.append(f"{i}\t{r['seed']}\t{r['timestep']}\t{r['agent']}\t{r['phase']}\t"
                     f"{Action(int(r['action'])).name}")
        if tokens:
            lines.append(describe_tokens(r["tokens"]))
    return "\n".join(lines) + "\n"
