"""Chart-local ambient context: coordinates, sample grid, twist 3-form,
tolerances.

Everything downstream is chart-local; a ChartModel fixes the coordinate
names, a box domain with a quasi-random sample grid, the closed 3-form
twisting the bracket, and the two tolerances shared by all checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ModelError, PreconditionError
from .fields import TensorField, d_three_form_residual, zero_field


class ChartError(ModelError):
    pass


@dataclass(frozen=True)
class Tolerances:
    rank_tolerance: float = 1e-9
    bracket_residual: float = 1e-7


def default_grid(dimension: int, box: np.ndarray, size: int | None = None,
                 seed: int = 0) -> np.ndarray:
    """Quasi-random (scrambled Halton) sample of the box; default size 2^(n+1)."""
    size = size if size is not None else 2 ** (dimension + 1)
    sampler = qmc.Halton(d=dimension, scramble=True, seed=seed)
    unit = sampler.random(size)
    lo, hi = box[:, 0], box[:, 1]
    return lo + unit * (hi - lo)


@dataclass(frozen=True)
class ChartModel:
    dimension: int
    coordinate_names: tuple[str, ...]
    box: np.ndarray
    sample_grid: np.ndarray
    h_field: TensorField
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0

    def __post_init__(self):
        if len(self.coordinate_names) != self.dimension:
            raise ChartError("need one coordinate name per dimension")
        if len(set(self.coordinate_names)) != self.dimension:
            raise ChartError("coordinate names must be distinct")
        box = np.asarray(self.box, dtype=float).reshape(self.dimension, 2)
        grid = np.asarray(self.sample_grid, dtype=float)
        if grid.ndim != 2 or grid.shape[1] != self.dimension:
            raise ChartError("sample grid must have shape (P, dimension)")
        if grid.shape[0] == 0:
            raise ChartError("sample grid must be nonempty")
        pad = 1e-12 + 1e-9 * np.max(np.abs(box))
        if np.any(grid < box[:, 0] - pad) or np.any(grid > box[:, 1] + pad):
            raise ChartError("sample grid leaves the declared box domain")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "sample_grid", grid)

    @property
    def coordinate_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.coordinate_names)}

    def h_values(self, points: np.ndarray) -> np.ndarray:
        return self.h_field.values(points)


def build_chart(dimension: int,
                coordinate_names,
                box=None,
                grid: np.ndarray | None = None,
                grid_size: int | None = None,
                seed: int = 0,
                h_field: TensorField | None = None,
                tolerances: Tolerances | None = None,
                require_closed_h: bool = True) -> ChartModel:
    """Assemble a chart, checking the 3-form at load.

    With `require_closed_h`, the sampled dH residual must stay below the
    bracket tolerance (this is what makes the twisted bracket a Courant
    bracket); disabling it admits deliberately broken twists for negative
    controls. In dimension < 3 no nonzero 3-form exists and H = 0 is
    enforced.
    """
    names = tuple(coordinate_names)
    if box is None:
        box = np.repeat(np.array([[-1.0, 1.0]]), dimension, axis=0)
    box = np.asarray(box, dtype=float).reshape(dimension, 2)
    if grid is None:
        grid = default_grid(dimension, box, grid_size, seed)
    tol = tolerances or Tolerances()
    if h_field is None:
        h_field = zero_field("three_form", dimension)
    if h_field.kind != "three_form" or h_field.dimension != dimension:
        raise ChartError("h_field must be a three_form over this chart")
    if dimension < 3 and not h_field.is_zero():
        raise ChartError("dimension < 3 admits no nonzero 3-form; H must be 0")
    chart = ChartModel(dimension, names, box, grid, h_field, tol, seed)
    if require_closed_h:
        residual = d_three_form_residual(h_field, chart.sample_grid)
        if residual > tol.bracket_residual:
            raise PreconditionError(
                f"3-form is not closed on the grid (max dH residual {residual:.3e})")
    return chart
