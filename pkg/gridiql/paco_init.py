"""
PACO: ant colony search for a start-to-goal route whose pheromone volatility
decays with the iteration count, and the Q-table seeding built on the best
route it finds.

Each iteration releases `m` ants from the start cell. An ant moves to an
untried legal neighbor j with probability proportional to
tau_ij^alpha * eta_j^beta, where eta_j = 1 / (1 + distance(j, goal)), and is
abandoned if it runs out of untried neighbors. After all ants have moved,
every edge evaporates by rho(nc) = lambda1 / (1 + exp(lambda * nc / (3m)))
and each ant that reached the goal deposits Q / L_k on the edges it used.
"""

import logging
import math
from dataclasses import dataclass
from itertools import pairwise

import numpy as np
from tqdm import trange

from gridiql.errors import DeadEnd, GridDomainError, NoPathFound
from gridiql.geometry import Metric, distance
from gridiql.grid_env import N_ACTIONS, action_between, action_for_offset, is_reachable, legal_actions
from gridiql.qtable import QTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PacoParams:
    m: int = 20
    alpha: float = 1.0
    beta: float = 5.0
    lambda1: float = 0.9
    lam: float = 1.0
    q_deposit: float = 1.0
    tau0: float = 1.0
    max_iters: int = 50
    # metric of the goal-distance heuristic
    metric: Metric = Metric.EUCLIDEAN

    def __post_init__(self):
        if self.m < 1:
            raise GridDomainError(f"ant count must be >= 1, got {self.m}", name="m")
        if self.alpha < 0 or self.beta < 0:
            raise GridDomainError("heuristic exponents must be >= 0", name="alpha" if self.alpha < 0 else "beta")
        if not 0 < self.lambda1 < 2:
            raise GridDomainError(f"lambda1 must be in (0, 2), got {self.lambda1}", name="lambda1")
        if self.lam < 0:
            raise GridDomainError(f"lambda must be >= 0, got {self.lam}", name="lam")
        if not self.q_deposit > 0:
            raise GridDomainError(f"deposit constant must be positive, got {self.q_deposit}", name="q_deposit")
        if not self.tau0 > 0:
            raise GridDomainError(f"initial pheromone must be positive, got {self.tau0}", name="tau0")
        if self.max_iters < 1:
            raise GridDomainError(f"max_iters must be >= 1, got {self.max_iters}", name="max_iters")


class PheromoneField:
    """Pheromone per directed edge, stored as one value per (cell, action)."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)

    @classmethod
    def uniform(cls, grid, tau0):
        return cls(grid, np.full((grid.n_cells, N_ACTIONS), float(tau0)))

    def _action(self, i, j):
        action = action_between(self.grid, i, j)
        if action is None:
            raise GridDomainError(f"cells {i} and {j} are not legal neighbors", name="edge")
        return action

    def __getitem__(self, edge):
        i, j = edge
        return float(self.values[i - 1, self._action(i, j)])

    def __setitem__(self, edge, value):
        i, j = edge
        self.values[i - 1, self._action(i, j)] = value

    def edges(self):
        """Yield (i, j, tau) for every legal directed edge."""
        for i in self.grid.free_cells():
            for action in legal_actions(self.grid, i):
                yield i, self.grid.successor(i, action), float(self.values[i - 1, action])

    def copy(self):
        return PheromoneField(self.grid, self.values.copy())


@dataclass(frozen=True)
class AntTour:
    visited: tuple[int, ...]
    reached_goal: bool
    # Euclidean length of the route
    length: float


@dataclass(frozen=True)
class PacoIteration:
    iteration: int
    best_length: float
    mean_length: float
    reached: int
    volatility: float


@dataclass(frozen=True)
class PacoResult:
    best_tour: AntTour
    field: PheromoneField
    history: tuple[PacoIteration, ...]

    def running_best(self):
        return list(np.minimum.accumulate([it.best_length for it in self.history]))


def transition_probabilities(field, params, current, tabu, grid):
    """Move probabilities from `current` to each untried legal neighbor.

    Raises DeadEnd when every legal neighbor is already in `tabu`.
    """
    goal_xy = grid.coords(grid.goal)
    allowed = []
    weights = []
    for action in legal_actions(grid, current):
        j = grid.successor(current, action)
        if j in tabu:
            continue
        eta = 1.0 / (1.0 + distance(params.metric, grid.coords(j), goal_xy))
        allowed.append(j)
        weights.append(float(field.values[current - 1, action]) ** params.alpha * eta**params.beta)
    if not allowed:
        raise DeadEnd(f"no untried neighbor left at cell {current}")
    total = math.fsum(weights)
    if not (total > 0 and math.isfinite(total)):
        weights = [1.0] * len(allowed)
        total = float(len(allowed))
    return {j: w / total for j, w in zip(allowed, weights)}


def volatility(nc, params):
    if nc < 0:
        raise GridDomainError(f"iteration index must be >= 0, got {nc}", name="nc")
    x = params.lam * nc / (3 * params.m)
    # lambda1 / (1 + e^x), written so large x underflows instead of overflowing
    z = math.exp(-x)
    return params.lambda1 * z / (1.0 + z)


def update_pheromones(field, tours, nc, params):
    """Evaporate every edge by rho(nc), then let goal-reaching tours deposit Q / L_k."""
    rho = volatility(nc, params)
    updated = PheromoneField(field.grid, (1.0 - rho) * field.values)
    grid = field.grid
    for tour in tours:
        if not tour.reached_goal:
            continue
        if not tour.length > 0:
            raise GridDomainError(f"tour length must be positive, got {tour.length}", name="length")
        deposit = params.q_deposit / tour.length
        for a, b in pairwise(tour.visited):
            (ax, ay), (bx, by) = grid.coords(a), grid.coords(b)
            updated.values[a - 1, action_for_offset(bx - ax, by - ay)] += deposit
    return updated


def construct_tour(field, params, grid, rng):
    """Walk one ant from the start until it reaches the goal or dead-ends."""
    current = grid.start
    visited = [current]
    tabu = {current}
    length = 0.0
    while current != grid.goal:
        try:
            probs = transition_probabilities(field, params, current, tabu, grid)
        except DeadEnd:
            return AntTour(tuple(visited), False, length)
        cells = list(probs)
        nxt = cells[int(rng.choice(len(cells), p=list(probs.values())))]
        length += distance(Metric.EUCLIDEAN, grid.coords(current), grid.coords(nxt))
        visited.append(nxt)
        tabu.add(nxt)
        current = nxt
    return AntTour(tuple(visited), True, length)


def run_paco(grid, params, rng, progress=False):
    """Run the colony for `params.max_iters` iterations and keep the shortest route.

    Every ant draws from its own child of `rng`, spawned per iteration.
    """
    if not is_reachable(grid):
        raise NoPathFound(f"goal cell {grid.goal} is unreachable from start cell {grid.start}", unreachable=True)

    field = PheromoneField.uniform(grid, params.tau0)
    best = None
    history = []
    for nc in trange(params.max_iters, desc="PACO", unit=" iter", leave=False, disable=not progress):
        tours = [construct_tour(field, params, grid, ant_rng) for ant_rng in rng.spawn(params.m)]
        finished = [t.length for t in tours if t.reached_goal]
        for tour in tours:
            if tour.reached_goal and (best is None or tour.length < best.length):
                best = tour
        history.append(
            PacoIteration(
                iteration=nc,
                best_length=min(finished, default=math.inf),
                mean_length=sum(finished) / len(finished) if finished else math.inf,
                reached=len(finished),
                volatility=volatility(nc, params),
            )
        )
        field = update_pheromones(field, tours, nc, params)
        log.debug("PACO iteration %d: %d/%d ants reached the goal", nc, len(finished), params.m)

    if best is None:
        raise NoPathFound(
            f"no ant reached the goal within {params.max_iters} iterations", unreachable=False
        )
    log.info("PACO best route: %d cells, length %.4f", len(best.visited), best.length)
    return PacoResult(best, field, tuple(history))


def seed_qtable(best_tour, v_init, grid):
    """Q-table holding `v_init` on each (cell, action) of the route and 0 elsewhere."""
    if not best_tour.reached_goal:
        raise GridDomainError("cannot seed a Q-table from a route that never reached the goal", name="best_tour")
    q = QTable.constant(grid, 0.0)
    for a, b in pairwise(best_tour.visited):
        action = action_between(grid, a, b)
        if action is None:
            raise GridDomainError(f"route step {a} -> {b} is not a legal move", name="best_tour")
        q.set(a, action, v_init)
    return q
