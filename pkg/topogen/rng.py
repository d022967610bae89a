"""
Per-sample, per-stage random streams.

Every stage of every sample draws from its own stream derived from
(master_seed, genus, sample_index, stage[, level]) through numpy's
SeedSequence spawn keys, so worker scheduling and stage order never change
what a sample receives.
"""

from __future__ import annotations

import hashlib
from typing import Optional

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

STAGES = (
    "environment",
    "placement",
    "growth",
    "displacement",
    "noise",
    "points",
    "surface_points",
)


def _sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed) & MASK64, spawn_key=tuple(int(k) for k in key))


def sample_subseed(master_seed: int, genus: int, index: int) -> int:
    """64-bit provenance seed of one (genus, index) run."""
    return int(_sequence(master_seed, genus, index).generate_state(1, dtype=np.uint64)[0])


def stage_seed(master_seed: int, genus: int, index: int, stage: str, level: Optional[int] = None) -> int:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    key = (genus, index, STAGES.index(stage) + 1) + (() if level is None else (level,))
    return int(_sequence(master_seed, *key).generate_state(1, dtype=np.uint64)[0])


def stage_rng(master_seed: int, genus: int, index: int, stage: str, level: Optional[int] = None) -> np.random.Generator:
    return np.random.default_rng(stage_seed(master_seed, genus, index, stage, level))


def split_tag(run_id: str, train_fraction: float) -> str:
    """'train' or 'test', by hashing the run id onto [0, 1)."""
    digest = hashlib.sha256(run_id.encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "big") / 2.0**64
    return "train" if u < train_fraction else "test"
