"""Named, independently re-seedable random streams.

Each simulation subsystem (placement, grasp, perception, task) draws from its
own counter-based Philox stream keyed by (seed, name), so re-seeding or
re-ordering one subsystem never perturbs the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

SUBSYSTEM_STREAMS = ("placement", "grasp", "perception", "task")


def _stream_key(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


class RngStreams:
    """Lazy map of stream name -> numpy Generator over a Philox counter RNG."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            gen = np.random.Generator(np.random.Philox(key=_stream_key(self.seed, name)))
            self._streams[name] = gen
        return gen

    def reseed(self, name: str, seed: int) -> None:
        """Re-seed a single named stream without touching the others."""
        self._streams[name] = np.random.Generator(
            np.random.Philox(key=_stream_key(int(seed), name))
        )

    @property
    def placement(self) -> np.random.Generator:
        return self.stream("placement")

    @property
    def grasp(self) -> np.random.Generator:
        return self.stream("grasp")

    @property
    def perception(self) -> np.random.Generator:
        return self.stream("perception")

    @property
    def task(self) -> np.random.Generator:
        return self.stream("task")
