"""Axis-aligned tensor grids with nodes at cell midpoints."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardError, InvalidInputError

MAX_NODES = 10**8


@dataclass(frozen=True)
class GridSpec:
    """Cube ``center +- half_width`` split into ``points_per_axis`` cells per axis.

    Nodes sit at cell midpoints, so with an odd count the center is a node.
    """

    center: tuple
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "center", c)
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("grid center must be finite")
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise InvalidInputError("half_width must be finite and > 0")
        object.__setattr__(self, "half_width", float(self.half_width))
        if int(self.points_per_axis) < 2:
            raise InvalidInputError("points_per_axis must be >= 2")
        object.__setattr__(self, "points_per_axis", int(self.points_per_axis))
        if self.total_nodes > MAX_NODES:
            raise GuardError(f"grid has {self.total_nodes} nodes (limit {MAX_NODES})")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def total_nodes(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis(self, i: int) -> np.ndarray:
        """Node coordinates along axis ``i``."""
        h = self.spacing
        return self.center[i] - self.half_width + (np.arange(self.points_per_axis) + 0.5) * h

    def block_nodes(self, start: int, stop: int) -> np.ndarray:
        """Nodes whose first-axis index lies in ``[start, stop)``, C order, shape (m, d)."""
        axes = [self.axis(0)[start:stop]] + [self.axis(i) for i in range(1, self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def block_rows(self, target_nodes: int = 65536) -> int:
        """First-axis rows per block so a block holds about ``target_nodes`` nodes."""
        per_row = self.points_per_axis ** (self.dim - 1)
        return max(1, target_nodes // per_row)

    def refined(self, factor: float) -> "GridSpec":
        n = int(round(self.points_per_axis * factor))
        if self.points_per_axis % 2 == 1 and n % 2 == 0:
            n += 1
        return GridSpec(self.center, self.half_width, n)

    def scaled(self, factor: float) -> "GridSpec":
        """The same grid after the dilation ``x -> factor * x``."""
        return GridSpec(tuple(factor * c for c in self.center), factor * self.half_width,
                        self.points_per_axis)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_width": self.half_width,
                "points_per_axis": self.points_per_axis}
