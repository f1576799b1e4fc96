"""Cell-centred tensor grids with no-flux boundaries and their discrete calculus.

Cell ``i`` on an axis of spacing ``h`` has centre ``(i + 1/2) h``.  Boundary
conditions are imposed with reflection ghosts (ghost value = adjacent interior
value), which makes every boundary face carry zero gradient and zero flux.
Quadrature is the midpoint rule throughout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, PositivityError


@dataclass(frozen=True)
class Grid:
    cells: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        lengths = tuple(float(x) for x in self.lengths)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)
        if len(cells) not in (1, 2):
            raise ConfigError(f"grid dimension must be 1 or 2, got {len(cells)}")
        if len(lengths) != len(cells):
            raise ConfigError("cells and lengths must have the same number of axes")
        if any(c < 4 for c in cells):
            raise ConfigError(f"need at least 4 cells per axis, got {cells}")
        if any(not (x > 0 and math.isfinite(x)) for x in lengths):
            raise ConfigError(f"axis lengths must be positive, got {lengths}")

    @classmethod
    def uniform(cls, dim: int, n: int, length: float = 1.0) -> "Grid":
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @cached_property
    def h(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    @property
    def size(self) -> int:
        return math.prod(self.cells)

    def centers(self, axis: int = 0) -> np.ndarray:
        return (np.arange(self.cells[axis]) + 0.5) * self.h[axis]

    def faces(self, axis: int = 0) -> np.ndarray:
        return np.arange(self.cells[axis] + 1) * self.h[axis]

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinate arrays, each of shape ``self.shape``."""
        return np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij")

    def face_mesh(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the faces normal to ``axis`` (shape with +1 on that axis)."""
        axes = [self.faces(a) if a == axis else self.centers(a) for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def to_dict(self) -> dict:
        return {"dim": self.dim, "cells": list(self.cells), "lengths": list(self.lengths)}


@dataclass
class Field:
    """Cell averages of a scalar on ``grid``; ``values`` has shape ``grid.shape``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.shape)
            else:
                raise ConfigError(f"field has {v.size} values, grid has {self.grid.size} cells")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        self.values = v

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, np.broadcast_to(fn(*grid.mesh()), grid.shape).astype(float))

    @classmethod
    def _trusted(cls, grid: Grid, values: np.ndarray) -> "Field":
        """Wrap an array already known to be finite and correctly shaped."""
        obj = cls.__new__(cls)
        obj.grid, obj.values = grid, values
        return obj

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


# ---------------------------------------------------------------------------
# array kernels (used in the time stepper without Field wrapping)


def _sl(ndim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _face_gradient(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    shape = list(f.shape)
    shape[axis] += 1
    out = np.zeros(shape)
    out[_sl(f.ndim, axis, slice(1, -1))] = np.diff(f, axis=axis) / h
    return out


def _div_interior(flux: np.ndarray, h: float, axis: int, out: np.ndarray) -> None:
    """Add the divergence of interior-face ``flux`` to ``out`` (boundary faces carry 0)."""
    nd = out.ndim
    q = flux / h
    out[_sl(nd, axis, slice(None, -1))] += q
    out[_sl(nd, axis, slice(1, None))] -= q


def _laplacian(f: np.ndarray, h) -> np.ndarray:
    # divergence of face gradients with zero boundary faces == reflection ghosts
    out = np.zeros_like(f)
    for axis, hx in enumerate(h):
        _div_interior(np.diff(f, axis=axis) / hx, hx, axis, out)
    return out


def _face_average(f: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic means on interior faces (``n - 1`` entries along ``axis``)."""
    nd = f.ndim
    return 0.5 * (f[_sl(nd, axis, slice(None, -1))] + f[_sl(nd, axis, slice(1, None))])


def _cell_gradient(f: np.ndarray, h) -> list[np.ndarray]:
    """Per-axis cell-centred gradient from the adjacent interior faces.

    Interior cells average their two face gradients; a boundary cell takes the
    single interior face next to it (the no-flux boundary face is excluded
    from the average rather than counted as a zero).
    """
    grads = []
    nd = f.ndim
    for axis, hx in enumerate(h):
        d = np.diff(f, axis=axis) / hx
        g = np.empty_like(f)
        g[_sl(nd, axis, slice(1, -1))] = 0.5 * (d[_sl(nd, axis, slice(None, -1))] + d[_sl(nd, axis, slice(1, None))])
        g[_sl(nd, axis, slice(0, 1))] = d[_sl(nd, axis, slice(0, 1))]
        g[_sl(nd, axis, slice(-1, None))] = d[_sl(nd, axis, slice(-1, None))]
        grads.append(g)
    return grads


def _grad_norm(f: np.ndarray, h) -> np.ndarray:
    gs = _cell_gradient(f, h)
    if len(gs) == 1:
        return np.abs(gs[0])
    return np.sqrt(sum(g * g for g in gs))


# ---------------------------------------------------------------------------
# public operations


def integrate(f: Field) -> float:
    """Midpoint-rule integral over the domain."""
    return float(np.sum(f.values) * f.grid.cell_volume)


def lp_norm(f: Field, p: float) -> float:
    if not p >= 1:
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    if math.isinf(p):
        return linf_norm(f)
    return float((np.sum(np.abs(f.values) ** p) * f.grid.cell_volume) ** (1.0 / p))


def linf_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values)))


def laplacian_neumann(f: Field) -> Field:
    """Second-order Laplacian with reflection ghosts (zero normal derivative)."""
    return Field(f.grid, _laplacian(f.values, f.grid.h))


def face_gradient(f: Field, axis: int = 0) -> np.ndarray:
    """Difference quotients on the faces normal to ``axis``; boundary faces are 0."""
    if not 0 <= axis < f.grid.dim:
        raise DomainError(f"axis {axis} out of range for a {f.grid.dim}D grid")
    return _face_gradient(f.values, f.grid.h[axis], axis)


def cell_gradient(f: Field) -> list[np.ndarray]:
    return _cell_gradient(f.values, f.grid.h)


def weighted_gradient_functional(v: Field, q: float) -> float:
    """``sum v**(1-q) |grad v|**q`` times the cell volume, for positive ``v``."""
    if not q >= 2:
        raise DomainError(f"q must be >= 2, got {q}")
    if np.any(v.values <= 0):
        raise PositivityError("weighted gradient functional needs v > 0 in every cell")
    g = _grad_norm(v.values, v.grid.h)
    return float(np.sum(v.values ** (1.0 - q) * g ** q) * v.grid.cell_volume)


# ---------------------------------------------------------------------------
# serialization

_MAGIC = b"CFVF"
_CSV_TAG = "# chemofv-field v1"


def save_field(f: Field, path) -> Path:
    """Write ``f`` as CSV (``.csv``) or flat little-endian binary (anything else)."""
    path = Path(path)
    g = f.grid
    flat = f.values.reshape(-1)  # row-major
    if path.suffix == ".csv":
        lines = [
            _CSV_TAG,
            f"dim,{g.dim}",
            "cells," + ",".join(str(c) for c in g.cells),
            "lengths," + ",".join(repr(x) for x in g.lengths),
            "values",
        ]
        lines.extend(repr(float(x)) for x in flat)
        path.write_text("\n".join(lines) + "\n")
    else:
        header = struct.pack("<4sII", _MAGIC, 1, g.dim)
        header += struct.pack(f"<{g.dim}Q", *g.cells)
        header += struct.pack(f"<{g.dim}d", *g.lengths)
        path.write_bytes(header + flat.astype("<f8").tobytes())
    return path


def load_field(path) -> Field:
    path = Path(path)
    if path.suffix == ".csv":
        lines = path.read_text().splitlines()
        if not lines or lines[0].strip() != _CSV_TAG:
            raise ConfigError(f"{path}: not a chemofv field file")
        meta = {}
        i = 1
        while lines[i].strip() != "values":
            key, *vals = lines[i].split(",")
            meta[key] = vals
            i += 1
        grid = Grid(tuple(int(c) for c in meta["cells"]), tuple(float(x) for x in meta["lengths"]))
        if int(meta["dim"][0]) != grid.dim:
            raise ConfigError(f"{path}: dim header disagrees with cells")
        vals = np.array([float(x) for x in lines[i + 1:] if x.strip()])
        return Field(grid, vals.reshape(grid.shape))
    data = path.read_bytes()
    magic, version, dim = struct.unpack_from("<4sII", data, 0)
    if magic != _MAGIC or version != 1:
        raise ConfigError(f"{path}: not a chemofv binary field (v1)")
    off = struct.calcsize("<4sII")
    cells = struct.unpack_from(f"<{dim}Q", data, off)
    off += 8 * dim
    lengths = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    grid = Grid(cells, lengths)
    vals = np.frombuffer(data, dtype="<f8", offset=off, count=grid.size).astype(float)
    return Field(grid, vals.reshape(grid.shape))
