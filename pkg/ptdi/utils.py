from __future__ import annotations

import os
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator

import numpy as np

SEED_BITS = 64


def derive_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """
    Counter-based stream for (master_seed, *stream).
    The same key always yields the same stream regardless of call order.
    """
    if master_seed < 0 or master_seed >= 2**SEED_BITS:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {master_seed}")
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(master_seed: int, *stream: int) -> int:
    """64-bit child seed for (master_seed, *stream), recorded in trial reports."""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(s) for s in stream))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


@contextmanager
def atomic_output(path: str | Path, mode: str = "w") -> Iterator[IO]:
    """Write to a temporary sibling and move it into place only on success."""
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": ""}
    try:
        with open(tmp, mode, **kwargs) as handle:
            yield handle
        os.replace(tmp, target)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise
