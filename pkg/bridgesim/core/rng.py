from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class RngSpec:
    """
    Seed plus stream id. Equal specs give bit-identical draws on one platform;
    distinct streams (and distinct children) are statistically independent.
    """
    seed: int
    stream: int = 0
    sub: Tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self.sub))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream, self.sub + (int(index),))
