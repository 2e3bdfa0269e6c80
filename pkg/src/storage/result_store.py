"""
File persistence for runs: trace and cell CSV files, legacy-VTK fields,
history/report tables, PNG figures and the run manifest
"""
import csv
import json
import os
import platform
from datetime import datetime
from pathlib import Path

import numpy as np

from ..geometry.domain import RectDomain
from ..geometry.grid import TimeAxis, UniformGrid
from ..geometry.quadtree import QuadtreeCoeffMesh
from ..solvers.traces import TimeTraces
from ..utils.definitions import Definitions
from ..utils.errors import DimensionMismatchError, GeometryError
from ..utils.logger import SolverComponent

TRACE_HEADER = ["x", "y", "z", "t", "u"]
AXIS_NAMES = ("x", "y", "z")


def format_value(value):
    """Shortest round-trippable text used for every numeric CSV cell"""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _axis_names(dim):
    return ("x", "z") if dim == 2 else AXIS_NAMES


def write_rows_csv(path, rows, columns=None):
    """Write a list of dicts; columns default to the keys of the first row"""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c, "")) for c in columns])
    return Path(path)


def read_rows_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_traces_csv(path, traces: TimeTraces):
    """One row per (node, time) with header x,y,z,t,u (y = 0 in 2-D)"""
    dim = traces.coords.shape[1]
    times = traces.axis.times
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for j, point in enumerate(traces.coords):
            xyz = [point[0], 0.0, point[1]] if dim == 2 else list(point)
            lead = [format_value(v) for v in xyz]
            for k, t in enumerate(times):
                writer.writerow(lead + [format_value(t), format_value(traces.samples[k, j])])
    return Path(path)


def read_traces_csv(path, dim=2, tag=Definitions.GAMMA) -> TimeTraces:
    """Inverse of write_traces_csv; nodes keep their order of appearance"""
    nodes = {}
    columns = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise DimensionMismatchError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        for row in reader:
            x, y, z, t, u = (float(v) for v in row)
            key = (x, z) if dim == 2 else (x, y, z)
            if key not in nodes:
                nodes[key] = len(columns)
                columns.append([])
            columns[nodes[key]].append((t, u))
    if not columns:
        raise DimensionMismatchError(f"{path}: no trace rows")
    lengths = {len(c) for c in columns}
    if len(lengths) != 1:
        raise DimensionMismatchError(f"{path}: nodes carry different numbers of samples")
    t = np.array([tt for tt, _ in columns[0]])
    steps = len(t) - 1
    axis = TimeAxis(T=float(t[-1]), tau=float(t[-1]) / steps, steps=steps)
    samples = np.array([[u for _, u in c] for c in columns]).T
    return TimeTraces(tag, np.array(list(nodes.keys())), samples, axis)


def write_cells_csv(path, mesh: QuadtreeCoeffMesh):
    names = _axis_names(mesh.dim)
    columns = ["cell", "level"] + [f"lo_{n}" for n in names] + [f"hi_{n}" for n in names] + ["eps"]
    rows = []
    for c in range(mesh.n_cells):
        row = {"cell": c, "level": int(mesh.level[c]), "eps": float(mesh.values[c])}
        for a, n in enumerate(names):
            row[f"lo_{n}"] = float(mesh.lo[c, a])
            row[f"hi_{n}"] = float(mesh.hi[c, a])
        rows.append(row)
    return write_rows_csv(path, rows, columns)


def read_cells_csv(path, domain: RectDomain, max_level: int) -> QuadtreeCoeffMesh:
    rows = read_rows_csv(path)
    if not rows:
        raise GeometryError(f"{path}: no cells")
    names = _axis_names(domain.dim)
    try:
        lo = np.array([[float(r[f"lo_{n}"]) for n in names] for r in rows])
        hi = np.array([[float(r[f"hi_{n}"]) for n in names] for r in rows])
        level = np.array([int(r["level"]) for r in rows])
        values = np.array([float(r["eps"]) for r in rows])
    except KeyError as e:
        raise GeometryError(f"{path}: missing column {e}")
    volume = float(np.sum(np.prod(hi - lo, axis=1)))
    if abs(volume - domain.volume) > 1e-9 * domain.volume:
        raise GeometryError(f"{path}: cells cover {volume}, Omega has volume {domain.volume}")
    return QuadtreeCoeffMesh(domain, lo, hi, level, values, max_level)


def write_vtk_image(path, origin, spacing, values, name="eps", title="coeffinv field"):
    """
    Legacy-VTK ASCII STRUCTURED_POINTS; `values` is indexed (x, z) or
    (x, y, z). 2-D arrays are written as nx x 1 x nz with x varying fastest.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[:, None, :]
        origin = (origin[0], 0.0, origin[1])
        spacing = (spacing[0], 1.0, spacing[1])
    nx, ny, nz = values.shape
    flat = np.transpose(values, (2, 1, 0)).ravel()
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET STRUCTURED_POINTS\n")
        f.write(f"DIMENSIONS {nx} {ny} {nz}\n")
        f.write("ORIGIN " + " ".join(format_value(float(v)) for v in origin) + "\n")
        f.write("SPACING " + " ".join(format_value(float(v)) for v in spacing) + "\n")
        f.write(f"POINT_DATA {flat.size}\n")
        f.write(f"SCALARS {name} double 1\n")
        f.write("LOOKUP_TABLE default\n")
        for start in range(0, flat.size, 6):
            f.write(" ".join(format_value(v) for v in flat[start:start + 6]) + "\n")
    return Path(path)


def write_structured_points(path, grid: UniformGrid, values, name="u"):
    """Nodal field on a uniform grid"""
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    return write_vtk_image(path, grid.domain.lo, grid.spacing, values, name=name)


def write_mesh_vtk(path, mesh: QuadtreeCoeffMesh, name="eps"):
    """Cell coefficient sampled at the pixel centres of the finest cell size"""
    from ..inversion.imaging import rasterize

    image, pixel = rasterize(mesh)
    origin = np.asarray(mesh.domain.lo) + 0.5 * pixel
    return write_vtk_image(path, origin, pixel, image, name=name)


def plot_coefficient(path, mesh: QuadtreeCoeffMesh, title=""):
    """PNG of a 2-D cell coefficient (depth axis vertical)"""
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure
    from ..inversion.imaging import rasterize

    if mesh.dim != 2:
        raise GeometryError("Figures are drawn for 2-D coefficients only")
    image, _ = rasterize(mesh)
    lo, hi = mesh.domain.lo, mesh.domain.hi
    figure = Figure(figsize=(6, 3), dpi=100)
    FigureCanvasAgg(figure)
    ax = figure.add_subplot(111)
    shown = ax.imshow(image.T, origin="lower", extent=[lo[0], hi[0], lo[1], hi[1]], cmap="viridis")
    figure.colorbar(shown, ax=ax, label="eps")
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    ax.set_title(title)
    figure.savefig(path)
    return Path(path)


class ResultStore(SolverComponent):
    """
    Output directory of one run; every written file is tracked for the manifest
    """
    def __init__(self, out_dir, logger=None):
        super().__init__(logger)
        self.out_dir = Path(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self.outputs = []
        self.timings = {}

    def path(self, name):
        target = self.out_dir / name
        os.makedirs(target.parent, exist_ok=True)
        return target

    def register(self, path):
        rel = Path(path).resolve().relative_to(self.out_dir.resolve()).as_posix()
        if rel not in self.outputs:
            self.outputs.append(rel)
        self.log_debug(f"Wrote {rel}")
        return Path(path)

    def save_traces(self, name, traces):
        return self.register(write_traces_csv(self.path(name), traces))

    def save_cells(self, name, mesh):
        return self.register(write_cells_csv(self.path(name), mesh))

    def save_rows(self, name, rows, columns=None):
        return self.register(write_rows_csv(self.path(name), rows, columns))

    def save_mesh_vtk(self, name, mesh):
        return self.register(write_mesh_vtk(self.path(name), mesh))

    def save_grid_vtk(self, name, grid, values, field="eps"):
        return self.register(write_structured_points(self.path(name), grid, values, name=field))

    def save_figure(self, name, mesh, title=""):
        try:
            return self.register(plot_coefficient(self.path(name), mesh, title))
        except GeometryError as e:
            self.log_warning(f"Figure {name} skipped: {e}")
            return None

    def record_timing(self, stage, seconds):
        self.timings[stage] = round(float(seconds), 6)

    def write_manifest(self, config, seed, notes=None):
        """manifest.json: config digest, seed, versions, timings, peak memory and outputs"""
        import matplotlib
        import psutil
        import scipy

        from ..version import __version__

        manifest = {
            "created": datetime.now().isoformat(timespec="seconds"),
            "config_sha256": config.digest(),
            "seed": seed,
            "versions": {
                "coeffinv": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "matplotlib": matplotlib.__version__,
                "psutil": psutil.__version__,
            },
            "timings": dict(self.timings),
            "rss_bytes": psutil.Process(os.getpid()).memory_info().rss,
            "notes": notes or {},
            "outputs": sorted(self.outputs),
        }
        path = self.path("manifest.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        self.log_info(f"Manifest written with {len(self.outputs)} outputs")
        return path
