"""Q-table bound to the dimensions of one GridMap."""

import numpy as np

from gridiql.errors import GridDomainError
from gridiql.grid_env import N_ACTIONS


class QTable:
    """Action values for every (cell, action) pair, rows indexed by cell number - 1."""

    def __init__(self, h, v, values):
        values = np.array(values, dtype=float)
        if values.shape != (h * v, N_ACTIONS):
            raise GridDomainError(f"Q-table shape {values.shape} does not match a {h}x{v} map", name="values")
        if not np.all(np.isfinite(values)):
            raise GridDomainError("Q-table entries must be finite", name="values")
        self._h = h
        self._v = v
        self.values = values

    @classmethod
    def constant(cls, grid, value=0.0):
        return cls(grid.h, grid.v, np.full((grid.n_cells, N_ACTIONS), float(value)))

    @property
    def h(self):
        return self._h

    @property
    def v(self):
        return self._v

    def matches(self, grid):
        return (self._h, self._v) == (grid.h, grid.v)

    def row(self, c):
        return self.values[c - 1]

    def get(self, c, action):
        return float(self.values[c - 1, action])

    def set(self, c, action, value):
        self.values[c - 1, action] = value

    def copy(self):
        return QTable(self._h, self._v, self.values.copy())

    def nonzero_count(self):
        return int(np.count_nonzero(self.values))

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return (self._h, self._v) == (other._h, other._v) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"QTable({self._h}x{self._v}, min={self.values.min():.4g}, max={self.values.max():.4g})"
