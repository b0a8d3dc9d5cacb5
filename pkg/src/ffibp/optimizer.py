"""Fact-Finding Instructor (FFI) population optimizer.

Two equally sized teams search a box-bounded space. Fact finders explore by
differential moves around random team mates and around the best location;
chasers pursue with steps scaled by the chaser centroid and are blended with
an instructor that evolves by a teaching-style update. All moves are clamped
to the bounds and accepted greedily, so the best objective never increases.

Random draws happen in a fixed order from a single seeded generator, which
makes a run bit-reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

Objective = Callable[[np.ndarray], float]


class ObjectiveNotFinite(ArithmeticError):
    pass


@dataclass
class FFIConfig:
    population_size: int = 20
    max_iterations: int = 100
    bounds: Sequence[tuple[float, float]] = ((-5.0, 5.0), (-5.0, 5.0))
    objective_tolerance: float = 0.0
    a4_epsilon: float = 0.1
    rng_seed: int = 0
    # "ffi" runs every phase; "tlo" keeps only the teaching-style update
    mode: str = "ffi"

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        b = np.asarray(self.bounds, dtype=np.float64)
        if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] < 1:
            raise ValueError("bounds must be a sequence of (lo, hi) pairs")
        if not np.all(b[:, 0] < b[:, 1]):
            raise ValueError("every bound needs lo < hi")
        if self.objective_tolerance < 0 or self.a4_epsilon <= 0:
            raise ValueError("objective_tolerance must be >= 0 and a4_epsilon > 0")
        if self.mode not in ("ffi", "tlo"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.bounds, dtype=np.float64)[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.bounds, dtype=np.float64)[:, 1]


@dataclass
class Agent:
    position: np.ndarray
    objective: float

    def copy(self) -> "Agent":
        return Agent(self.position.copy(), self.objective)


@dataclass
class Population:
    """Team positions as (X, Y) arrays with their objective values."""

    ff_positions: np.ndarray
    ff_objectives: np.ndarray
    ct_positions: np.ndarray
    ct_objectives: np.ndarray
    instructor: Agent
    best: Agent
    iteration: int = 0

    @property
    def size(self) -> int:
        return self.ff_positions.shape[0]

    @property
    def fact_finders(self) -> list[Agent]:
        return [Agent(x.copy(), float(f)) for x, f in zip(self.ff_positions, self.ff_objectives)]

    @property
    def chasers(self) -> list[Agent]:
        return [Agent(x.copy(), float(f)) for x, f in zip(self.ct_positions, self.ct_objectives)]

    def all_positions(self) -> np.ndarray:
        return np.vstack([self.ff_positions, self.ct_positions])


@dataclass
class OptimizeResult:
    best: Agent
    trace: list[float]
    population: Population = field(repr=False)
    evaluations: int = 0


# ---------------------------------------------------------------------------
# update rules, written with explicit random coefficients


def first_location(x: np.ndarray, x_d: np.ndarray, x_q: np.ndarray, x_p: np.ndarray, a: np.ndarray) -> np.ndarray:
    """x + a * (x_d - (x_q + x_p) / 2), a in [-1, 1]."""
    return x + a * (x_d - 0.5 * (x_q + x_p))


def location_probability(objectives: Sequence[float]) -> np.ndarray:
    """(worst - f) / (worst - best): 1 for the best agent, 0 for the worst.

    When all objectives are equal every agent gets probability 1.
    """
    f = np.asarray(objectives, dtype=np.float64)
    worst, best = f.max(), f.min()
    if worst == best:
        return np.ones_like(f)
    return (worst - f) / (worst - best)


def second_location(x_best: np.ndarray, x_b: np.ndarray, x_d: np.ndarray, x_p: np.ndarray, a5: np.ndarray) -> np.ndarray:
    """x_best + x_b + a5 * (x_d - x_p), a5 in [0, 1]."""
    return x_best + x_b + a5 * (x_d - x_p)


def guard_a4(a4: np.ndarray, eps: float) -> np.ndarray:
    """Push |a4| up to at least eps, keeping its sign (0 maps to +eps)."""
    a4 = np.asarray(a4, dtype=np.float64)
    sign = np.where(a4 < 0, -1.0, 1.0)
    return sign * np.maximum(np.abs(a4), eps)


def chase_location(x: np.ndarray, chaser_mean: np.ndarray, a3: np.ndarray, a4: np.ndarray, eps: float = 0.1) -> np.ndarray:
    """x + (a3 - 0.5) * 2 * chaser_mean / a4, with |a4| >= eps."""
    return x + (a3 - 0.5) * 2.0 * chaser_mean / guard_a4(a4, eps)


def instructor_location(x_te: np.ndarray, mean: np.ndarray, teaching_factor: int, a1: np.ndarray) -> np.ndarray:
    """x_te + a1 * (x_te - T * mean)."""
    return x_te + a1 * (x_te - teaching_factor * mean)


def combined_location(chase: np.ndarray, instructed: np.ndarray) -> np.ndarray:
    return 0.5 * chase + 0.5 * instructed


# ---------------------------------------------------------------------------


class FFIOptimizer:
    """Stateful driver; `run` performs the full loop.

    Each phase draws its random coefficients as one block before any agent
    moves, in this order per iteration: first-update partners and A; gate
    uniforms, second-update partners and A5; then A3, A4, T and A1 for the
    chaser/instructor phase.
    """

    def __init__(self, objective: Objective, cfg: FFIConfig):
        self.objective = objective
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.lo = cfg.lower
        self.hi = cfg.upper
        self.evaluations = 0
        self.population: Population | None = None

    def evaluate(self, x: np.ndarray) -> float:
        value = float(self.objective(x))
        self.evaluations += 1
        if not math.isfinite(value):
            raise ObjectiveNotFinite(f"objective returned {value} at {x!r}")
        return value

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def _accept(self, positions: np.ndarray, objectives: np.ndarray, i: int, candidate: np.ndarray) -> np.ndarray:
        """Clamp, evaluate, and keep the candidate in row i only if it improves it."""
        candidate = self.clamp(candidate)
        value = self.evaluate(candidate)
        if value < objectives[i]:
            positions[i] = candidate
            objectives[i] = value
            if value < self.population.best.objective:
                self.population.best = Agent(candidate.copy(), value)
        return candidate

    def _partners(self, size: int) -> np.ndarray:
        """Per agent tau, `size` distinct indices from {0..X-1} without tau."""
        x = self.cfg.population_size
        idx = np.argsort(self.rng.random((x, x - 1)), axis=1)[:, :size]
        return idx + (idx >= np.arange(x)[:, None])

    def init_population(self) -> Population:
        x, y = self.cfg.population_size, self.cfg.dimension
        ff = self.rng.uniform(self.lo, self.hi, size=(x, y))
        ct = self.rng.uniform(self.lo, self.hi, size=(x, y))
        ff_obj = np.array([self.evaluate(p) for p in ff])
        ct_obj = np.array([self.evaluate(p) for p in ct])
        pos = np.vstack([ff, ct])
        obj = np.concatenate([ff_obj, ct_obj])
        j = int(np.argmin(obj))
        best = Agent(pos[j].copy(), float(obj[j]))
        self.population = Population(ff, ff_obj, ct, ct_obj, best.copy(), best, 0)
        return self.population

    # phases ---------------------------------------------------------------

    def suspect_first_update(self, tau: int, partners: Sequence[int], a: np.ndarray) -> np.ndarray:
        pop = self.population
        ff = pop.ff_positions
        d, q, p = partners
        return self._accept(ff, pop.ff_objectives, tau, first_location(ff[tau], ff[d], ff[q], ff[p], a))

    def suspect_second_update(self, d: int, partners: Sequence[int], a5: np.ndarray) -> np.ndarray:
        pop = self.population
        ff = pop.ff_positions
        b, p = partners
        cand = second_location(pop.best.position, ff[b], ff[d], ff[p], a5)
        return self._accept(ff, pop.ff_objectives, d, cand)

    def chaser_update(self, tau: int, a3: np.ndarray, a4: np.ndarray) -> np.ndarray:
        pop = self.population
        ct = pop.ct_positions
        mean = ct.mean(axis=0)
        cand = chase_location(ct[tau], mean, a3, a4, self.cfg.a4_epsilon)
        return self._accept(ct, pop.ct_objectives, tau, cand)

    def instructor_update(self, teaching_factor: int, a1: np.ndarray) -> np.ndarray:
        pop = self.population
        mu = (pop.ff_positions.sum(axis=0) + pop.ct_positions.sum(axis=0)) / (2 * pop.size)
        cand = self.clamp(instructor_location(pop.instructor.position, mu, teaching_factor, a1))
        value = self.evaluate(cand)
        if value < pop.instructor.objective:
            pop.instructor = Agent(cand, value)
            if value < pop.best.objective:
                pop.best = Agent(cand.copy(), value)
        return cand

    def combined_update(self, tau: int, chase: np.ndarray, instructed: np.ndarray) -> np.ndarray:
        pop = self.population
        return self._accept(pop.ct_positions, pop.ct_objectives, tau, combined_location(chase, instructed))

    def teaching_update(self, positions: np.ndarray, objectives: np.ndarray, i: int, teaching_factor: int, a1: np.ndarray) -> np.ndarray:
        """Teaching-only move used by the "tlo" ablation: x + a1 * (x_best - T * mean)."""
        pop = self.population
        mu = (pop.ff_positions.sum(axis=0) + pop.ct_positions.sum(axis=0)) / (2 * pop.size)
        cand = positions[i] + a1 * (pop.best.position - teaching_factor * mu)
        return self._accept(positions, objectives, i, cand)

    def step(self) -> None:
        pop = self.population
        x, y = self.cfg.population_size, self.cfg.dimension
        rng = self.rng
        if self.cfg.mode == "tlo":
            t = rng.integers(1, 3, size=2 * x)
            a1 = rng.random((2 * x, y))
            for i in range(x):
                self.teaching_update(pop.ff_positions, pop.ff_objectives, i, int(t[i]), a1[i])
            for i in range(x):
                self.teaching_update(pop.ct_positions, pop.ct_objectives, i, int(t[x + i]), a1[x + i])
            pop.iteration += 1
            return

        partners = self._partners(3)
        a = (rng.random((x, y)) - 0.5) * 2.0
        for tau in range(x):
            self.suspect_first_update(tau, partners[tau], a[tau])

        prob = location_probability(pop.ff_objectives)
        gate = rng.random(x)
        partners = self._partners(2)
        a5 = rng.random((x, y))
        for d in range(x):
            if gate[d] < prob[d]:
                self.suspect_second_update(d, partners[d], a5[d])

        a3 = rng.random((x, y))
        a4 = rng.uniform(-1.0, 1.0, size=(x, y))
        t = rng.integers(1, 3, size=x)
        a1 = rng.random((x, y))
        for tau in range(x):
            chase = self.chaser_update(tau, a3[tau], a4[tau])
            instructed = self.instructor_update(int(t[tau]), a1[tau])
            self.combined_update(tau, chase, instructed)
        pop.iteration += 1

    def run(self) -> OptimizeResult:
        pop = self.init_population()
        if pop.best.objective <= self.cfg.objective_tolerance:
            return OptimizeResult(pop.best.copy(), [pop.best.objective], pop, self.evaluations)
        trace = []
        for _ in range(self.cfg.max_iterations):
            self.step()
            trace.append(pop.best.objective)
            if pop.best.objective <= self.cfg.objective_tolerance:
                break
        return OptimizeResult(pop.best.copy(), trace, pop, self.evaluations)


def optimize(objective: Objective, cfg: FFIConfig) -> OptimizeResult:
    """Minimize `objective` over the box in `cfg`; returns best agent and per-iteration trace."""
    return FFIOptimizer(objective, cfg).run()


def init_population(cfg: FFIConfig, objective: Objective) -> Population:
    """Uniform random teams inside the bounds, seeded by `cfg.rng_seed`."""
    return FFIOptimizer(objective, cfg).init_population()


def sphere(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def write_trace_csv(path: str | Path, trace: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "best_objective"])
        for i, v in enumerate(trace, start=1):
            w.writerow([i, repr(float(v))])
