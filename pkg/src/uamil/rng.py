"""Seeded random streams.

Every stochastic choice in the package draws from a ``numpy.random.Generator``
backed by Philox-4x64 (a counter-based generator with published constants), so
a seed fully determines datasets, checkpoints and reports.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & SEED_MASK)))


def stable_hash(text: str) -> int:
    """64-bit hash of a string, identical across processes and platforms."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, *keys: str | int) -> np.random.Generator:
    """Independent stream for ``(seed, *keys)``, e.g. one per entity id."""
    entropy = [int(seed) & SEED_MASK]
    for k in keys:
        entropy.append(stable_hash(k) if isinstance(k, str) else int(k) & SEED_MASK)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [int(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def get_state(rng: np.random.Generator) -> dict:
    """JSON-serializable snapshot of the generator state."""
    return _plain(rng.bit_generator.state)


def from_state(state: dict) -> np.random.Generator:
    if state.get("bit_generator") != "Philox":
        raise ValueError(f"unsupported bit generator {state.get('bit_generator')!r}")
    bg = np.random.Philox()
    st = dict(state)
    st["state"] = {k: np.asarray(v, dtype=np.uint64) for k, v in state["state"].items()}
    st["buffer"] = np.asarray(state["buffer"], dtype=np.uint64)
    bg.state = st
    return np.random.Generator(bg)
