# rng.py
"""
Labeled random streams.

A stream is a seed plus a path of labels (seed -> timestep -> purpose ...).
Identical paths give identical draws; distinct paths give independent
streams, so particle counts and job counts never change results.
"""

import hashlib
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

Label = Union[str, int]


def _label_key(label: Label) -> int:
    """Map a label to a 32-bit spawn key word"""
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        if label < 0:
            raise ValueError(f"Stream labels must be non-negative, got {label}")
        return int(label) & 0xFFFFFFFF
    digest = hashlib.sha256(str(label).encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream identified by (seed, path)"""
    seed: int
    path: Tuple[Label, ...] = ()

    def child(self, *labels: Label) -> 'RngStream':
        """Stream one or more levels below this one"""
        return RngStream(self.seed, self.path + tuple(labels))

    def spawn_key(self) -> Tuple[int, ...]:
        return tuple(_label_key(label) for label in self.path)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream"""
        sequence = np.random.SeedSequence(
            entropy=int(self.seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=self.spawn_key(),
        )
        return np.random.Generator(np.random.Philox(sequence))

    def __str__(self):
        labels = '/'.join(str(label) for label in self.path)
        return f"{self.seed}:{labels}"


def as_stream(rng) -> RngStream:
    """Accept an RngStream or a bare integer seed"""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"Expected RngStream or int seed, got {type(rng).__name__}")


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an RngStream or an integer seed"""
    if isinstance(rng, np.random.Generator):
        return rng
    return as_stream(rng).generator()
