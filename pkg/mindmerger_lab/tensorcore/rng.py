from collections.abc import Sequence
import hashlib
from typing import Any

import numpy as np


_SEED_MASK = (1 << 64) - 1


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=4).digest(), "little")


class RngStream:
    """Seeded random stream with named, independent children.

    A child is identified by the parent seed plus the full path of fork names, so
    ``rng.fork("data").fork("math")`` is reproducible no matter what else was drawn before.
    """

    def __init__(self, seed: int, path: Sequence[str] = ()):
        self.seed = int(seed) & _SEED_MASK
        self.path = tuple(path)
        sequence = np.random.SeedSequence(
            entropy=self.seed, spawn_key=tuple(_name_key(name) for name in self.path)
        )
        self._generator = np.random.Generator(np.random.PCG64(sequence))
        self.draws = 0

    def fork(self, name: str) -> "RngStream":
        return RngStream(self.seed, (*self.path, name))

    def uniform(self, low: float = 0.0, high: float = 1.0, size: Any = None) -> Any:
        self.draws += 1
        return self._generator.uniform(low, high, size)

    def normal(self, size: Any = None, std: float = 1.0, mean: float = 0.0) -> Any:
        self.draws += 1
        return self._generator.normal(mean, std, size)

    def integers(self, low: int, high: int, size: Any = None) -> Any:
        """Draw from ``[low, high)``."""
        self.draws += 1
        return self._generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self._generator.permutation(n)

    def categorical(self, probs: Sequence[float], size: Any = None) -> Any:
        weights = np.asarray(probs, dtype=np.float64)
        if weights.ndim != 1 or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError(f"Invalid categorical probabilities {list(probs)}")
        self.draws += 1
        return self._generator.choice(len(weights), size=size, p=weights / weights.sum())

    def choice(self, options: Sequence[Any]) -> Any:
        return options[int(self.integers(0, len(options)))]

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"


def rng_stream(seed: int) -> RngStream:
    return RngStream(seed)
