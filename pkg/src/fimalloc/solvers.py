"""Selection and power-allocation algorithms over a sensor network.

Four entry points returning feasible allocations under a shared power
budget: a uniform-full-activation baseline, a rank-then-sweep heuristic
(uniform power, top-i selection, sweep the cardinality), a greedy scheme
that re-optimizes continuous powers each time a sensor is added, and a
dynamic program over discretized power levels (one choice per sensor).
A brute-force enumerator over the same discretization serves as the
reference oracle for small instances.

The continuous subproblem (maximize the summed information of a fixed
active set subject to the budget) is concave and separable; it is solved
by bisection on the budget multiplier with a safeguarded Newton root per
sensor, falling back to projected gradient if the per-sensor derivative
turns out not to be monotone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadCardinality,
    ConcavityViolation,
    ConcavityWarning,
    DimensionMismatch,
    GridMismatch,
    NoConvergence,
    TooLarge,
)
from .fisher import DEFAULT_NODES, InfoKernel, t_k, tabulate_t, trace_fim
from .model import Network

BUDGET_RTOL = 1e-8
KKT_RTOL = 1e-6
MAX_ITER = 10_000
POWER_FLOOR_SCALE = 1e-9
DEFAULT_EPS0 = 1e-3
BRUTE_MAX_K = 6
BRUTE_MAX_N = 8


@dataclass(frozen=True)
class Allocation:
    """Result of one solver run: who transmits, at what power, and the value.

    diagnostics holds (iteration, objective) pairs in the order the solver
    accepted them; its meaning varies per algorithm.
    """

    selection: np.ndarray   # (K,) 0/1
    powers: np.ndarray      # (K,) nonnegative, zero where unselected
    objective: float
    algorithm: str
    iterations: int
    diagnostics: tuple

    @property
    def num_selected(self) -> int:
        return int(np.sum(self.selection))


@dataclass(frozen=True)
class PowerGrid:
    """Uniform discretization of the budget: samples[j] = j * unit, j = 0..N."""

    samples: np.ndarray
    unit: float

    @property
    def n(self) -> int:
        return self.samples.size - 1


def make_power_grid(p_tot: float, n: int) -> PowerGrid:
    if p_tot <= 0.0:
        raise ValueError(f"p_tot must be positive, got {p_tot}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    unit = p_tot / n
    samples = np.arange(n + 1) * unit
    samples.setflags(write=False)
    return PowerGrid(samples=samples, unit=unit)


def _finish(selection, powers, network, algorithm, iterations, diagnostics,
            nodes) -> Allocation:
    selection = np.asarray(selection, dtype=np.int8).copy()
    powers = np.asarray(powers, dtype=float).copy()
    powers[selection == 0] = 0.0
    objective = trace_fim(powers, selection, network, nodes=nodes)
    selection.setflags(write=False)
    powers.setflags(write=False)
    return Allocation(
        selection=selection,
        powers=powers,
        objective=objective,
        algorithm=algorithm,
        iterations=iterations,
        diagnostics=tuple(diagnostics),
    )


def verify_allocation(alloc: Allocation, network: Network, p_tot: float, *,
                      nodes: int = DEFAULT_NODES) -> None:
    """Independent feasibility and objective re-check; raises on violation."""
    k = network.k
    if alloc.selection.shape != (k,) or alloc.powers.shape != (k,):
        raise DimensionMismatch("allocation vectors do not match the network size")
    if np.any(alloc.powers < 0.0):
        raise ValueError("allocation has a negative power")
    total = float(np.sum(alloc.powers))
    if total > p_tot * (1.0 + 1e-9):
        raise ValueError(f"allocation spends {total}, budget is {p_tot}")
    if np.any(alloc.powers[alloc.selection == 0] != 0.0):
        raise ValueError("unselected sensor carries nonzero power")
    recomputed = trace_fim(alloc.powers, alloc.selection, network, nodes=nodes)
    if abs(recomputed - alloc.objective) > 1e-9 * abs(recomputed):
        raise ValueError(
            f"stored objective {alloc.objective} differs from recomputed {recomputed}"
        )


# ---------------------------------------------------------------------------
# Baseline and ranking-based selection.
# ---------------------------------------------------------------------------

def solve_ufa(network: Network, p_tot: float, *, nodes: int = DEFAULT_NODES) -> Allocation:
    """Uniform full activation: every sensor on, equal share of the budget."""
    if p_tot <= 0.0:
        raise ValueError(f"p_tot must be positive, got {p_tot}")
    k = network.k
    return _finish(np.ones(k), np.full(k, p_tot / k), network, "ufa", 1, (), nodes)


def solve_boolean_relaxation(t_values, i: int) -> np.ndarray:
    """Relaxed selection of cardinality i: indicator of the i largest values.

    The box-constrained relaxation of picking i sensors by value is a linear
    program whose optimum sits at a vertex, i.e. exactly the top-i indicator;
    ties break toward the lower sensor index.
    """
    t = np.asarray(t_values, dtype=float)
    k = t.size
    if not 1 <= i <= k:
        raise BadCardinality(f"cardinality {i} is outside 1..{k}")
    order = np.argsort(-t, kind="stable")
    w = np.zeros(k)
    w[order[:i]] = 1.0
    return w


def solve_usu(network: Network, p_tot: float, *, nodes: int = DEFAULT_NODES) -> Allocation:
    """Rank under uniform power, then sweep the activation cardinality.

    Sensors are ranked once by their contribution at the all-on uniform
    power P/K (the ranking step is the same every iteration, so it is not
    repeated).  For i = 1, 2, ... the top-i sensors get uniform power P/i;
    the sweep stops at the first i whose objective does not improve, or at
    i = K, and the best configuration seen is returned.
    """
    if p_tot <= 0.0:
        raise ValueError(f"p_tot must be positive, got {p_tot}")
    k = network.k
    prior = network.prior
    t_uniform = np.array(
        [t_k(p_tot / k, s, prior, nodes=nodes) for s in network.sensors]
    )
    order = np.argsort(-t_uniform, kind="stable")
    diagnostics = []
    best = None
    objective_prev = 0.0
    for i in range(1, k + 1):
        chosen = order[:i]
        share = p_tot / i
        objective = prior.inverse_trace + sum(
            t_k(share, network.sensors[j], prior, nodes=nodes) for j in chosen
        )
        diagnostics.append((i, objective))
        if objective <= objective_prev:
            break
        best = (i, chosen, share)
        objective_prev = objective
    i, chosen, share = best
    selection = np.zeros(k)
    selection[chosen] = 1
    powers = np.zeros(k)
    powers[chosen] = share
    return _finish(selection, powers, network, "usu", len(diagnostics), diagnostics, nodes)


# ---------------------------------------------------------------------------
# Continuous power allocation for a fixed active set.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerSolution:
    """Continuous subproblem output: powers plus solver diagnostics."""

    powers: np.ndarray
    multiplier: float
    kkt_residual: float
    iterations: int
    fallback: bool


def _newton_root(f: Callable[[float], float], lo: float, hi: float,
                 f_lo: float, f_hi: float, x0: float, x_tol: float) -> float:
    """Root of a decreasing f on [lo, hi] with f(lo) > 0 > f(hi).

    Newton-like secant steps through the last two evaluations, safeguarded
    by the shrinking bracket; steps leaving the bracket fall back to
    bisection.  Iterates to x accuracy (no residual shortcut), because a
    residual-based stop returns stale points on flat stretches of f and
    the budget loop upstream needs the summed response to keep moving.
    """
    x = min(max(x0, lo), hi)
    if x == lo or x == hi:
        x = 0.5 * (lo + hi)
    x_prev, f_prev = lo, f_lo
    for _ in range(100):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx > 0.0:
            lo, f_lo = x, fx
        else:
            hi, f_hi = x, fx
        if hi - lo <= x_tol:
            break
        denom = fx - f_prev
        step = x - fx * (x - x_prev) / denom if denom != 0.0 and x != x_prev else math.nan
        x_prev, f_prev = x, fx
        x = step if lo < step < hi else 0.5 * (lo + hi)
    return 0.5 * (lo + hi)


def _project_budget(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto the simplex {x >= 0, sum x = total}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    rho = np.nonzero(u - css / np.arange(1, v.size + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _projected_gradient(t_primes: Sequence[Callable[[float], float]],
                        p_tot: float, floor: float,
                        steps: int = 400) -> np.ndarray:
    """Diminishing-step projected gradient ascent; fallback path only."""
    m = len(t_primes)
    powers = np.full(m, p_tot / m)
    for r in range(1, steps + 1):
        grad = np.array([tp(max(p, floor)) for tp, p in zip(t_primes, powers)])
        norm = float(np.linalg.norm(grad))
        if norm == 0.0:
            break
        powers = _project_budget(powers + (p_tot / math.sqrt(r)) * grad / norm, p_tot)
    return powers


def _allocate_power_core(t_primes: Sequence[Callable[[float], float]],
                         p_tot: float, *, budget_rtol: float = BUDGET_RTOL,
                         kkt_rtol: float = KKT_RTOL,
                         max_iter: int = MAX_ITER) -> PowerSolution:
    """Dual bisection on the budget multiplier over arbitrary callables.

    Factored out so tests can exercise the solver (including the projected
    gradient fallback) on synthetic derivative functions.
    """
    m = len(t_primes)
    if m == 0:
        raise ValueError("active set must be nonempty")
    if m == 1:
        return PowerSolution(np.array([p_tot]), math.nan, 0.0, 0, False)
    floor = POWER_FLOOR_SCALE * p_tot
    slope_at_floor = np.array([tp(floor) for tp in t_primes])
    slope_at_top = np.array([tp(p_tot) for tp in t_primes])

    if np.any(slope_at_top > slope_at_floor + 1e-12 * np.abs(slope_at_floor) + 1e-300):
        # Derivative rises over the interval: the concavity the dual method
        # relies on does not hold.  Switch to projected gradient.
        warnings.warn(
            "derivative is not monotone over the power interval; "
            "falling back to projected gradient",
            ConcavityWarning,
        )
        powers = _projected_gradient(t_primes, p_tot, floor)
        if not np.all(np.isfinite(powers)):
            raise ConcavityViolation(
                "projected-gradient fallback produced non-finite powers"
            )
        return PowerSolution(powers, math.nan, math.inf, 0, True)

    lam_hi = float(np.max(slope_at_floor))
    if lam_hi <= 0.0:
        # No sensor gains anything from power; split the budget evenly.
        return PowerSolution(np.full(m, p_tot / m), 0.0, 0.0, 0, False)
    lam_lo = 0.0
    powers = np.full(m, p_tot / m)
    interior = np.zeros(m, dtype=bool)
    x_tol = 1e-12 * p_tot
    total = math.inf
    iterations = 0
    while True:
        iterations += 1
        if iterations > max_iter:
            raise NoConvergence(
                f"budget bisection did not reach {budget_rtol:g} relative after "
                f"{max_iter} iterations"
            )
        lam = 0.5 * (lam_lo + lam_hi)
        for j, tp in enumerate(t_primes):
            if slope_at_floor[j] - lam <= 0.0:
                powers[j] = floor
                interior[j] = False
            elif slope_at_top[j] - lam >= 0.0:
                powers[j] = p_tot
                interior[j] = False
            else:
                powers[j] = _newton_root(
                    lambda x, tp=tp: tp(x) - lam,
                    floor, p_tot,
                    slope_at_floor[j] - lam, slope_at_top[j] - lam,
                    powers[j], x_tol,
                )
                interior[j] = True
        total = float(np.sum(powers))
        if abs(total - p_tot) <= budget_rtol * p_tot:
            break
        if total > p_tot:
            lam_lo = lam
        else:
            lam_hi = lam
        if lam_hi - lam_lo <= 1e-16 * max(lam_hi, 1.0):
            raise NoConvergence(
                "multiplier bracket collapsed before the budget matched; "
                "the summed power response may be discontinuous"
            )
    # Stationarity holds for clipped sensors by the clip tests themselves;
    # check the interior coordinates against the final multiplier before the
    # (at most 1e-8 relative) feasibility rescale below.
    if np.any(interior):
        residual = max(abs(t_primes[j](powers[j]) - lam) for j in np.nonzero(interior)[0])
    else:
        residual = 0.0
    if residual > kkt_rtol * max(lam, 1e-300):
        raise NoConvergence(
            f"stationarity residual {residual:.3e} exceeds {kkt_rtol:g} * multiplier"
        )
    if total > p_tot:
        powers *= p_tot / total
    return PowerSolution(powers, lam, residual, iterations, False)


def _power_allocation_detailed(active_set, network: Network, p_tot: float, *,
                               budget_rtol: float = BUDGET_RTOL,
                               kkt_rtol: float = KKT_RTOL,
                               max_iter: int = MAX_ITER,
                               nodes: int = DEFAULT_NODES) -> PowerSolution:
    active = list(active_set)
    if len(active) == 0:
        raise ValueError("active set must be nonempty")
    if p_tot <= 0.0:
        raise ValueError(f"p_tot must be positive, got {p_tot}")
    kernels = [InfoKernel(network.sensors[j], network.prior, nodes) for j in active]
    t_primes = [kern.t_prime for kern in kernels]
    return _allocate_power_core(
        t_primes, p_tot, budget_rtol=budget_rtol, kkt_rtol=kkt_rtol, max_iter=max_iter
    )


def solve_power_allocation(active_set, network: Network, p_tot: float, *,
                           budget_rtol: float = BUDGET_RTOL,
                           kkt_rtol: float = KKT_RTOL,
                           max_iter: int = MAX_ITER,
                           nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Optimal budget split over a fixed active set, aligned with active_set.

    Maximizes the summed information of the active sensors subject to the
    powers adding up to the budget.  Bisection on the budget multiplier
    drives each sensor's derivative to the common value; the budget matches
    within budget_rtol and the stationarity residual of interior sensors
    stays within kkt_rtol of the multiplier.
    """
    return _power_allocation_detailed(
        active_set, network, p_tot, budget_rtol=budget_rtol, kkt_rtol=kkt_rtol,
        max_iter=max_iter, nodes=nodes,
    ).powers


# ---------------------------------------------------------------------------
# Greedy activation with continuous re-optimization.
# ---------------------------------------------------------------------------

def solve_greedy(network: Network, p_tot: float, eps0: float = DEFAULT_EPS0, *,
                 nodes: int = DEFAULT_NODES) -> Allocation:
    """Add one sensor per round, re-optimizing the continuous power split.

    Every inactive sensor is tried as the next addition (the candidate's
    active set gets a fresh continuous solve); the best candidate joins, and
    the loop stops once the relative objective improvement drops to eps0 or
    every sensor is active.  The last accepted configuration is returned.
    """
    if p_tot <= 0.0:
        raise ValueError(f"p_tot must be positive, got {p_tot}")
    if eps0 <= 0.0:
        raise ValueError(f"eps0 must be positive, got {eps0}")
    k = network.k
    active: list = []
    inactive = list(range(k))
    objective_prev = 1e-12
    accepted_powers = np.zeros(k)
    diagnostics = []
    fallback_seen = False
    rounds = 0
    while inactive:
        best_obj = -math.inf
        best_j = None
        best_solution = None
        for j in inactive:
            candidate = active + [j]
            solution = _power_allocation_detailed(candidate, network, p_tot, nodes=nodes)
            powers_full = np.zeros(k)
            powers_full[candidate] = solution.powers
            selection = np.zeros(k)
            selection[candidate] = 1
            objective = trace_fim(powers_full, selection, network, nodes=nodes)
            if objective > best_obj:
                best_obj = objective
                best_j = j
                best_solution = solution
        if (best_obj - objective_prev) / objective_prev <= eps0:
            break
        active.append(best_j)
        inactive.remove(best_j)
        accepted_powers = np.zeros(k)
        accepted_powers[active] = best_solution.powers
        fallback_seen = fallback_seen or best_solution.fallback
        objective_prev = best_obj
        rounds += 1
        diagnostics.append((rounds, best_obj))
    selection = np.zeros(k)
    selection[active] = 1
    label = "greedy(pg-fallback)" if fallback_seen else "greedy"
    return _finish(selection, accepted_powers, network, label, rounds, diagnostics, nodes)


# ---------------------------------------------------------------------------
# Discretized formulation: one power level per sensor, shared capacity.
# ---------------------------------------------------------------------------

def solve_mckp(value_table, grid: PowerGrid, p_tot: float, *,
               baseline: float = 0.0) -> Allocation:
    """Exact optimum of the discretized problem by dynamic programming.

    value_table[k, j] is sensor k's contribution at grid.samples[j]; the
    zero-power column lets the program leave a sensor out, which marks it
    unselected in the result.  Capacity runs over integer grid units, so
    the program is exact on the discretization.  Ties prefer the smaller
    grid index.  The prior's baseline is folded into the stored objective.
    """
    table = np.asarray(value_table, dtype=float)
    if table.ndim != 2:
        raise GridMismatch(f"value table must be 2-D, got shape {table.shape}")
    k, cols = table.shape
    samples = grid.samples
    if cols != samples.size:
        raise GridMismatch(
            f"value table has {cols} columns, grid has {samples.size} samples"
        )
    if samples[0] != 0.0 or np.any(np.abs(table[:, 0]) > 1e-12):
        raise GridMismatch("grid must start at zero power with zero value")
    n = cols - 1
    if abs(samples[-1] - p_tot) > 1e-9 * max(p_tot, 1.0):
        raise GridMismatch(
            f"grid tops out at {samples[-1]}, budget is {p_tot}"
        )

    capacities = np.arange(n + 1)
    best = np.zeros(n + 1)
    choice = np.zeros((k, n + 1), dtype=np.int32)
    candidate = np.empty((n + 1, n + 1))
    for row in range(k):
        candidate.fill(-np.inf)
        for j in range(n + 1):
            candidate[j, j:] = best[: n + 1 - j] + table[row, j]
        choice_row = np.argmax(candidate, axis=0)  # first max: smallest j wins ties
        best = candidate[choice_row, capacities]
        choice[row] = choice_row

    units_left = n
    picks = np.zeros(k, dtype=int)
    for row in range(k - 1, -1, -1):
        picks[row] = choice[row, units_left]
        units_left -= picks[row]
    powers = samples[picks]
    selection = (picks > 0).astype(np.int8)
    powers = powers.copy()
    powers.setflags(write=False)
    selection.setflags(write=False)
    return Allocation(
        selection=selection,
        powers=powers,
        objective=baseline + float(best[n]),
        algorithm="mckp",
        iterations=k,
        diagnostics=((k, baseline + float(best[n])),),
    )


def solve_mckp_network(network: Network, p_tot: float, n: int = 100, *,
                       nodes: int = DEFAULT_NODES) -> Allocation:
    """Tabulate the network's contributions on a fresh grid and run the DP."""
    grid = make_power_grid(p_tot, n)
    table = tabulate_t(network, grid.samples, nodes=nodes)
    return solve_mckp(table, grid, p_tot, baseline=network.prior.inverse_trace)


def solve_bruteforce(network: Network, p_tot: float, n_small: int, *,
                     nodes: int = DEFAULT_NODES) -> Allocation:
    """Exhaustive search over every discretized assignment; small cases only."""
    k = network.k
    if k > BRUTE_MAX_K or n_small > BRUTE_MAX_N:
        raise TooLarge(
            f"brute force handles K <= {BRUTE_MAX_K} and N <= {BRUTE_MAX_N}, "
            f"got K={k}, N={n_small}"
        )
    if n_small < 1:
        raise ValueError(f"n_small must be >= 1, got {n_small}")
    grid = make_power_grid(p_tot, n_small)
    table = tabulate_t(network, grid.samples, nodes=nodes)
    n1 = n_small + 1
    value = np.zeros((n1,) * k)
    units = np.zeros((n1,) * k, dtype=int)
    for row in range(k):
        shape = [1] * k
        shape[row] = n1
        j_axis = np.arange(n1).reshape(shape)
        value = value + table[row, j_axis]
        units = units + j_axis
    feasible = units <= n_small
    value = np.where(feasible, value, -np.inf)
    flat = int(np.argmax(value))  # C order: lexicographically smallest tie wins
    picks = np.array(np.unravel_index(flat, value.shape))
    powers = grid.samples[picks].copy()
    selection = (picks > 0).astype(np.int8)
    powers.setflags(write=False)
    selection.setflags(write=False)
    objective = network.prior.inverse_trace + float(value.flat[flat])
    return Allocation(
        selection=selection,
        powers=powers,
        objective=objective,
        algorithm="brute",
        iterations=int(np.sum(feasible)),
        diagnostics=(),
    )
