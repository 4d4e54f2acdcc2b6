from .models import BridgeSpec, DiffusionModel, Path, PathBatch, TimeGrid
from .grid import make_bridge_grid, refine_grid, uniform_grid
from .integrator import (
    coarsen_increments, euler_maruyama, euler_maruyama_batch, sample_brownian_increments,
)
