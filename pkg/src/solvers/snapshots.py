"""
Periodic full-field dumps during time stepping
"""
import os
from pathlib import Path

from ..geometry.grid import UniformGrid
from ..storage.result_store import write_structured_points
from ..utils.logger import SolverComponent


class SnapshotWriter(SolverComponent):
    """Writes `field_<step>.vtk` every `every` steps"""

    def __init__(self, out_dir, grid: UniformGrid, every: int, logger=None):
        super().__init__(logger)
        self.out_dir = Path(out_dir)
        self.grid = grid
        self.every = int(every)
        self.paths = []
        os.makedirs(self.out_dir, exist_ok=True)

    def hook(self):
        """(every, callback) pair accepted by the stepper"""
        return (self.every, self.write)

    def write(self, step: int, u):
        path = self.out_dir / f"field_{step}.vtk"
        write_structured_points(path, self.grid, u, name="u")
        self.paths.append(path)
        self.log_debug(f"Wrote snapshot {path}")
