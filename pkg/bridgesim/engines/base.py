from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from bridgesim.core.rng import RngSpec
from bridgesim.sde.models import BridgeSpec, DiffusionModel, PathBatch, TimeGrid


class BridgeProposal(ABC):
    """
    Abstract Base Class for bridge proposals.
    Responsible for drawing batches of paths from u at 0 to v at T on a grid.
    """

    name: str = "proposal"
    weighted: bool = False

    def __init__(self, model: DiffusionModel, spec: BridgeSpec, grid: TimeGrid):
        self.model = model
        self.spec = spec
        self.grid = grid

    @abstractmethod
    def simulate(self, n_paths: int, rng: RngSpec, increments: Optional[np.ndarray] = None) -> PathBatch:
        """Draw n_paths bridges. Weighted proposals return a BridgeBatch."""
        pass
