"""
Raster map model for the path-planning experiments.

Cells are numbered 1..h*v column by column, from bottom to top and left to
right, so cell 1 is the bottom-left corner (x=1, y=1) and x grows to the
right, y grows upwards. The agent moves in 8 directions; a move into an
obstacle or off the grid leaves it in place, and a diagonal move is only
legal when both orthogonal cells it passes between are free.
"""

import heapq
import logging
import math
import numbers
from collections import deque
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import cached_property
from itertools import pairwise
from pathlib import Path

from gridiql.errors import GridDomainError, MapParseError
from gridiql.geometry import Metric, distance

log = logging.getLogger(__name__)


class Action(IntEnum):
    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7

    @property
    def offset(self):
        return _OFFSETS[self]

    @property
    def is_diagonal(self):
        dx, dy = _OFFSETS[self]
        return dx != 0 and dy != 0


_OFFSETS = {
    Action.N: (0, 1),
    Action.NE: (1, 1),
    Action.E: (1, 0),
    Action.SE: (1, -1),
    Action.S: (0, -1),
    Action.SW: (-1, -1),
    Action.W: (-1, 0),
    Action.NW: (-1, 1),
}
_BY_OFFSET = {offset: action for action, offset in _OFFSETS.items()}

ACTIONS = tuple(Action)
N_ACTIONS = len(ACTIONS)


def action_for_offset(dx, dy):
    """The action moving by (dx, dy), or None if no single move does."""
    return _BY_OFFSET.get((dx, dy))


class Outcome(Enum):
    MOVED = "moved"
    BLOCKED_STAY = "blocked_stay"
    REACHED_GOAL = "reached_goal"


def _check_dims(h, v):
    if h < 1 or v < 1:
        raise GridDomainError(f"grid dimensions must be positive, got {h}x{v}", name="h")


def cell_to_coords(c, h, v=None):
    """Convert a cell number to (x, y) grid coordinates.

    `v` defaults to `h` (square map). Each column holds `v` cells, so
    x = ceil(c / v) and y = mod(c, v), with a zero remainder meaning y = v.
    """
    v = h if v is None else v
    _check_dims(h, v)
    if isinstance(c, bool) or not isinstance(c, numbers.Integral) or not 1 <= c <= h * v:
        raise GridDomainError(f"cell number {c!r} outside 1..{h * v}", name="c")
    x = (c - 1) // v + 1
    y = c % v or v
    return x, y


def coords_to_cell(x, y, h, v=None):
    v = h if v is None else v
    _check_dims(h, v)
    if not 1 <= x <= h:
        raise GridDomainError(f"x coordinate {x!r} outside 1..{h}", name="x")
    if not 1 <= y <= v:
        raise GridDomainError(f"y coordinate {y!r} outside 1..{v}", name="y")
    return (x - 1) * v + y


@dataclass(frozen=True)
class Transition:
    from_cell: int
    action: Action
    to_cell: int
    outcome: Outcome
    from_xy: tuple[int, int]
    to_xy: tuple[int, int]

    @property
    def attempted_xy(self):
        """Where the action would have led, even when it was blocked."""
        dx, dy = self.action.offset
        return self.from_xy[0] + dx, self.from_xy[1] + dy


@dataclass(frozen=True)
class GridMap:
    """Immutable raster map; `obstacles[c - 1]` is True when cell c is blocked."""

    h: int
    v: int
    obstacles: tuple[bool, ...]
    start: int
    goal: int

    def __post_init__(self):
        _check_dims(self.h, self.v)
        object.__setattr__(self, "obstacles", tuple(bool(o) for o in self.obstacles))
        if len(self.obstacles) != self.h * self.v:
            raise GridDomainError(
                f"obstacle mask has {len(self.obstacles)} cells, expected {self.h * self.v}",
                name="obstacles",
            )
        for name in ("start", "goal"):
            cell = getattr(self, name)
            if isinstance(cell, bool) or not isinstance(cell, numbers.Integral) or not 1 <= cell <= self.n_cells:
                raise GridDomainError(f"{name} cell {cell!r} outside 1..{self.n_cells}", name=name)
            if self.obstacles[cell - 1]:
                raise GridDomainError(f"{name} cell {cell} is an obstacle", name=name)
        if self.start == self.goal:
            raise GridDomainError(f"start and goal are the same cell ({self.start})", name="goal")

    @classmethod
    def from_obstacle_coords(cls, h, v, obstacle_coords, start, goal):
        """Build a map from (x, y) obstacle positions and (x, y) start/goal."""
        mask = [False] * (h * v)
        for x, y in obstacle_coords:
            mask[coords_to_cell(x, y, h, v) - 1] = True
        return cls(h, v, tuple(mask), coords_to_cell(*start, h, v), coords_to_cell(*goal, h, v))

    @classmethod
    def empty(cls, h, v, start=None, goal=None):
        """Obstacle-free map, by default from the bottom-left to the top-right corner."""
        start = (1, 1) if start is None else start
        goal = (h, v) if goal is None else goal
        return cls.from_obstacle_coords(h, v, (), start, goal)

    @property
    def n_cells(self):
        return self.h * self.v

    @property
    def obstacle_count(self):
        return sum(self.obstacles)

    def coords(self, c):
        return cell_to_coords(c, self.h, self.v)

    def cell(self, x, y):
        return coords_to_cell(x, y, self.h, self.v)

    def inside(self, x, y):
        return 1 <= x <= self.h and 1 <= y <= self.v

    def is_obstacle(self, c):
        if not 1 <= c <= self.n_cells:
            raise GridDomainError(f"cell number {c!r} outside 1..{self.n_cells}", name="c")
        return self.obstacles[c - 1]

    def free_cells(self):
        return [c for c in range(1, self.n_cells + 1) if not self.obstacles[c - 1]]

    def _blocked(self, x, y):
        return not self.inside(x, y) or self.obstacles[(x - 1) * self.v + y - 1]

    @cached_property
    def _successors(self):
        # successors[c - 1][a] is the target cell of action a from c, or None
        table = []
        for c in range(1, self.n_cells + 1):
            if self.obstacles[c - 1]:
                table.append((None,) * N_ACTIONS)
                continue
            x, y = self.coords(c)
            row = []
            for action in ACTIONS:
                dx, dy = action.offset
                tx, ty = x + dx, y + dy
                if self._blocked(tx, ty):
                    row.append(None)
                elif dx and dy and (self._blocked(x + dx, y) or self._blocked(x, y + dy)):
                    row.append(None)
                else:
                    row.append(self.cell(tx, ty))
            table.append(tuple(row))
        return tuple(table)

    @cached_property
    def _legal(self):
        return tuple(
            tuple(a for a in ACTIONS if row[a] is not None) for row in self._successors
        )

    def successor(self, c, action):
        """Target cell of `action` from `c`, or None when the move is illegal."""
        return self._successors[c - 1][action]

    def neighbors(self, c):
        return tuple(t for t in self._successors[c - 1] if t is not None)


def legal_actions(grid, c):
    """Actions that move the agent out of cell `c`, in Action order."""
    if grid.is_obstacle(c):
        raise GridDomainError(f"cell {c} is an obstacle", name="c")
    return grid._legal[c - 1]


def step(grid, c, action):
    if grid.is_obstacle(c):
        raise GridDomainError(f"cell {c} is an obstacle", name="c")
    here = grid.coords(c)
    target = grid.successor(c, action)
    if target is None:
        return Transition(c, action, c, Outcome.BLOCKED_STAY, here, here)
    outcome = Outcome.REACHED_GOAL if target == grid.goal else Outcome.MOVED
    return Transition(c, action, target, outcome, here, grid.coords(target))


def action_between(grid, a, b):
    """The legal action leading from cell `a` to cell `b`, or None."""
    for action in legal_actions(grid, a):
        if grid.successor(a, action) == b:
            return action
    return None


def _int_fields(text, line, what):
    parts = text.split()
    if len(parts) != 2:
        raise MapParseError(f"expected {what}, got {text!r}", line=line)
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise MapParseError(f"expected {what}, got {text!r}", line=line) from None


def load_map(text):
    """Parse the plain-text map format.

    Line 1 is `h v`, line 2 is `start goal` (cell numbers), followed by v
    rows of h digits (0 free, 1 obstacle), topmost row first. Lines starting
    with `#` and blank lines are ignored.
    """
    body = [
        (n, line.strip())
        for n, line in enumerate(text.splitlines(), 1)
        if line.strip() and not line.strip().startswith("#")
    ]
    if len(body) < 2:
        last = body[-1][0] if body else 1
        raise MapParseError("missing `h v` / `start goal` header", line=last)

    header_line, header = body[0]
    h, v = _int_fields(header, header_line, "`h v`")
    if h < 1 or v < 1:
        raise MapParseError(f"grid dimensions must be positive, got {h}x{v}", line=header_line)
    endpoints_line, endpoints = body[1]
    start, goal = _int_fields(endpoints, endpoints_line, "`start goal`")

    rows = body[2:]
    if len(rows) != v:
        where = rows[v][0] if len(rows) > v else (rows[-1][0] if rows else endpoints_line)
        raise MapParseError(f"expected {v} map rows, found {len(rows)}", line=where)

    mask = [False] * (h * v)
    for i, (n, row) in enumerate(rows):
        y = v - i
        tokens = row.split()
        if len(tokens) != h:
            raise MapParseError(f"expected {h} cells, found {len(tokens)}", line=n)
        for x, token in enumerate(tokens, 1):
            if token not in ("0", "1"):
                raise MapParseError(f"cell value {token!r} is not 0 or 1", line=n)
            mask[(x - 1) * v + y - 1] = token == "1"

    try:
        return GridMap(h, v, tuple(mask), start, goal)
    except GridDomainError as exc:
        raise MapParseError(str(exc), line=endpoints_line) from exc


def read_map(path):
    return load_map(Path(path).read_text(encoding="utf-8"))


def render_map(grid, comments=()):
    """Inverse of load_map."""
    lines = [f"# {c}" for c in comments]
    lines.append(f"{grid.h} {grid.v}")
    lines.append(f"{grid.start} {grid.goal}")
    for y in range(grid.v, 0, -1):
        lines.append(" ".join("1" if grid.is_obstacle(grid.cell(x, y)) else "0" for x in range(1, grid.h + 1)))
    return "\n".join(lines) + "\n"


def is_valid_path(grid, path):
    cells = list(path)
    if len(cells) < 2 or cells[0] != grid.start or cells[-1] != grid.goal:
        return False
    for c in cells:
        if isinstance(c, bool) or not isinstance(c, numbers.Integral) or not 1 <= c <= grid.n_cells:
            return False
        if grid.obstacles[c - 1]:
            return False
    return all(b in grid.neighbors(a) for a, b in pairwise(cells))


def is_reachable(grid, source=None, target=None):
    """Flood fill over legal moves from `source` (default start) to `target` (default goal)."""
    source = grid.start if source is None else source
    target = grid.goal if target is None else target
    seen = {source}
    queue = deque([source])
    while queue:
        c = queue.popleft()
        if c == target:
            return True
        for n in grid.neighbors(c):
            if n not in seen:
                seen.add(n)
                queue.append(n)
    return False


def shortest_path(grid, metric=Metric.EUCLIDEAN):
    """Dijkstra over the legal move graph.

    Returns (length, cells); (inf, ()) when the goal is unreachable.
    """
    best = {grid.start: 0.0}
    parent = {grid.start: None}
    heap = [(0.0, grid.start)]
    while heap:
        cost, c = heapq.heappop(heap)
        if c == grid.goal:
            cells = []
            while c is not None:
                cells.append(c)
                c = parent[c]
            return cost, tuple(reversed(cells))
        if cost > best[c]:
            continue
        here = grid.coords(c)
        for n in grid.neighbors(c):
            new_cost = cost + distance(metric, here, grid.coords(n))
            if new_cost < best.get(n, math.inf):
                best[n] = new_cost
                parent[n] = c
                heapq.heappush(heap, (new_cost, n))
    return math.inf, ()


def shortest_path_length(grid, metric=Metric.EUCLIDEAN):
    return shortest_path(grid, metric)[0]


def path_length(grid, cells, metric=Metric.EUCLIDEAN):
    return sum(distance(metric, grid.coords(a), grid.coords(b)) for a, b in pairwise(cells))


def generate_map(h, v, density, rng, max_tries=1000):
    """Random map with the given obstacle density and a reachable goal.

    Start is the bottom-left corner and goal the top-right corner; masks are
    redrawn until the goal is reachable under the corner-cutting rule.
    """
    if not 0.0 <= density < 1.0:
        raise GridDomainError(f"density must be in [0, 1), got {density}", name="density")
    if h * v < 2:
        raise GridDomainError(f"a {h}x{v} map cannot hold distinct start and goal", name="h")
    start, goal = 1, h * v
    for attempt in range(max_tries):
        mask = rng.random(h * v) < density
        mask[start - 1] = False
        mask[goal - 1] = False
        grid = GridMap(h, v, tuple(mask.tolist()), start, goal)
        if is_reachable(grid):
            log.debug("generated %dx%d map after %d attempt(s)", h, v, attempt + 1)
            return grid
    raise GridDomainError(
        f"no reachable {h}x{v} map at density {density} after {max_tries} attempts", name="density"
    )
