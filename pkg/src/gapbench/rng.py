"""Reproducible random streams keyed by (master seed, stream id)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RngStream:
    """A numpy ``Generator`` determined by ``(master_seed, stream_id)``.

    The stream is stateful: successive draws advance it.  Two streams built
    from equal ids produce identical draws.
    """

    master_seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.master_seed & (2**64 - 1),
                                        spawn_key=(self.stream_id & (2**64 - 1),))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream; depends only on this stream's ids and ``index``."""
        ss = np.random.SeedSequence(entropy=self.master_seed & (2**64 - 1),
                                    spawn_key=(self.stream_id & (2**64 - 1), index + 1))
        sid = int(ss.generate_state(1, np.uint64)[0])
        return RngStream(self.master_seed, sid)

    def fresh(self) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, int):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot use {type(rng).__name__} as a random stream")


def seed_of(rng) -> int | None:
    return rng.master_seed if isinstance(rng, RngStream) else None
