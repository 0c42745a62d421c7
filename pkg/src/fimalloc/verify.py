"""Oracle checks: simulation, finite differences, and exhaustive enumeration.

Each suite cross-validates one analytic component against an independent
route: the confusion matrix and cell probabilities against Monte Carlo
channel/quantizer simulation, the information contribution against a
Monte Carlo expectation over the unknown vector, its power-derivative
against central finite differences, the knapsack program against full
enumeration, the relaxed selection against exhaustive subsets, and the
continuous power split against a fine grid search.  The CLI's verify
command and the acceptance tests both run these.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from . import fisher, model, quantcomm, solvers

DEFAULT_SEED = 20240817


@dataclass(frozen=True)
class CheckResult:
    """One oracle comparison: measured discrepancy against its threshold."""

    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: measured={self.measured:.6g} threshold={self.threshold:.6g}"
        if self.detail:
            text += f" ({self.detail})"
        return text


def _reference_sensor() -> model.Sensor:
    prior = model.make_prior(model.DEFAULT_COVARIANCE)
    gain = np.asarray(model.DEFAULT_GAIN, dtype=float)
    return model.Sensor(
        gain=gain,
        sigma_n=model.DEFAULT_SIGMA_N,
        h_mag=model.DEFAULT_H_MAG,
        sigma_nu=model.DEFAULT_SIGMA_NU,
        bits=model.DEFAULT_BITS,
        tau=model.make_tau(gain, model.DEFAULT_SIGMA_N, prior),
    )


def _binomial_sigma(prob: np.ndarray, trials: int) -> np.ndarray:
    return np.sqrt(np.maximum(prob * (1.0 - prob), 0.0) / trials)


def check_alpha(trials: int = 100_000, seed: int = DEFAULT_SEED) -> List[CheckResult]:
    """Analytic confusion matrix within 4 binomial sigma of simulation."""
    sensor = _reference_sensor()
    results = []
    for k, power in enumerate((2.0, 3.0 / 0.49, 20.0)):
        analytic = quantcomm.alpha_matrix(power, sensor).entries
        empirical = quantcomm.mc_alpha_oracle(power, sensor, trials, seed + k)
        sigma = _binomial_sigma(analytic, trials)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(empirical - analytic) / sigma
        z = np.where(sigma == 0.0, np.where(empirical == analytic, 0.0, np.inf), z)
        worst = float(np.max(z))
        results.append(
            CheckResult(
                name=f"alpha vs simulation, power={power:.4g}",
                passed=worst <= 4.0,
                measured=worst,
                threshold=4.0,
                detail=f"{trials} trials per column",
            )
        )
    return results


def check_beta(trials: int = 1_000_000, seed: int = DEFAULT_SEED) -> List[CheckResult]:
    """Analytic cell probabilities within 4 binomial sigma of simulation."""
    sensor = _reference_sensor()
    quantizer = quantcomm.make_quantizer(sensor.bits, sensor.tau)
    results = []
    for k, s in enumerate((0.0, 1.0, -2.5)):
        analytic = quantcomm.beta(s, quantizer, sensor.sigma_n)
        empirical = quantcomm.mc_beta_oracle(s, sensor, trials, seed + 100 + k)
        sigma = _binomial_sigma(analytic, trials)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(empirical - analytic) / sigma
        z = np.where(sigma == 0.0, np.where(empirical == analytic, 0.0, np.inf), z)
        worst = float(np.max(z))
        results.append(
            CheckResult(
                name=f"beta vs simulation, s={s:.4g}",
                passed=worst <= 4.0,
                measured=worst,
                threshold=4.0,
                detail=f"{trials} draws",
            )
        )
    return results


def mc_t_oracle(power: float, sensor: model.Sensor, prior: model.Prior,
                trials: int, seed: int) -> float:
    """Monte Carlo estimate of the information contribution at one power.

    Draws the unknown vector from the prior, projects each draw through the
    sensor gain, and averages the information kernel, bypassing both the
    one-dimensional reduction and the quadrature rule used by the analytic
    path.
    """
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(prior.covariance)
    theta = rng.standard_normal((trials, prior.q)) @ chol.T
    s = theta @ sensor.gain
    quantizer = quantcomm.make_quantizer(sensor.bits, sensor.tau)
    alpha = quantcomm.alpha_matrix(power, sensor).entries
    b = quantcomm._beta_table(s, quantizer, sensor.sigma_n)
    bd = quantcomm._beta_dot_table(s, quantizer, sensor.sigma_n)
    num = bd @ alpha.T
    den = b @ alpha.T
    keep = den >= 1e-300
    safe = np.where(keep, den, 1.0)
    g = np.sum(np.where(keep, num * num / safe, 0.0), axis=1)
    prefactor = float(sensor.gain @ sensor.gain) / (2.0 * math.pi * sensor.sigma_n ** 2)
    return prefactor * float(np.mean(g))


def check_tk(trials: int = 100_000, seed: int = DEFAULT_SEED) -> List[CheckResult]:
    """Quadrature value of t within 2% of the Monte Carlo expectation."""
    prior = model.make_prior(model.DEFAULT_COVARIANCE)
    sensor = _reference_sensor()
    results = []
    for k, power in enumerate((1.0, 10.0, 30.0)):
        quad = fisher.t_k(power, sensor, prior)
        mc = mc_t_oracle(power, sensor, prior, trials, seed + 200 + k)
        rel = abs(quad - mc) / abs(mc)
        results.append(
            CheckResult(
                name=f"t quadrature vs Monte Carlo, power={power:.4g}",
                passed=rel <= 0.02,
                measured=rel,
                threshold=0.02,
                detail=f"quad={quad:.6g} mc={mc:.6g}",
            )
        )
    return results


def _random_sensor(rng: np.random.Generator, prior: model.Prior) -> model.Sensor:
    gain = rng.uniform(0.2, 2.0, size=prior.q)
    sigma_n = rng.uniform(0.5, 1.5)
    return model.Sensor(
        gain=gain,
        sigma_n=sigma_n,
        h_mag=rng.uniform(0.4, 1.0),
        sigma_nu=rng.uniform(0.6, 1.4),
        bits=int(rng.integers(1, 4)),
        tau=model.make_tau(gain, sigma_n, prior),
    )


def check_grad(count: int = 20, seed: int = DEFAULT_SEED) -> List[CheckResult]:
    """Analytic dt/dP within 1e-4 relative of central finite differences."""
    rng = np.random.default_rng(seed + 300)
    prior = model.make_prior(model.DEFAULT_COVARIANCE)
    worst = 0.0
    worst_at = ""
    for _ in range(count):
        sensor = _random_sensor(rng, prior)
        power = float(np.exp(rng.uniform(math.log(0.3), math.log(50.0))))
        analytic = fisher.t_k_derivative(power, sensor, prior)
        h = 1e-4 * power
        kernel = fisher.InfoKernel(sensor, prior, 161)
        fd = (kernel.t(power + h) - kernel.t(power - h)) / (2.0 * h)
        rel = abs(analytic - fd) / max(abs(fd), 1e-300)
        if rel > worst:
            worst = rel
            worst_at = f"power={power:.4g} bits={sensor.bits}"
    return [
        CheckResult(
            name=f"dt/dP vs finite differences ({count} points)",
            passed=worst <= 1e-4,
            measured=worst,
            threshold=1e-4,
            detail=worst_at,
        )
    ]


def enumerate_mckp(value_table: np.ndarray, n: int) -> float:
    """Best discretized objective by full enumeration (left-fold sums)."""
    k = value_table.shape[0]
    best = -math.inf
    for assignment in itertools.product(range(n + 1), repeat=k):
        if sum(assignment) > n:
            continue
        total = 0.0
        for row in range(k):
            total = total + value_table[row, assignment[row]]
        if total > best:
            best = total
    return best


def check_mckp(instances: int = 50, seed: int = DEFAULT_SEED) -> List[CheckResult]:
    """Knapsack DP exactly matches exhaustive enumeration on random tables."""
    rng = np.random.default_rng(seed + 400)
    mismatches = 0
    worst = 0.0
    for _ in range(instances):
        k = int(rng.integers(2, 6))
        n = int(rng.integers(2, 7))
        table = np.sort(rng.uniform(0.0, 1.0, size=(k, n + 1)), axis=1)
        table[:, 0] = 0.0
        p_tot = float(n)
        grid = solvers.make_power_grid(p_tot, n)
        alloc = solvers.solve_mckp(table, grid, p_tot)
        reference = enumerate_mckp(table, n)
        diff = abs(alloc.objective - reference)
        worst = max(worst, diff)
        if diff != 0.0:
            mismatches += 1
    return [
        CheckResult(
            name=f"knapsack DP vs enumeration ({instances} instances)",
            passed=mismatches == 0,
            measured=float(mismatches),
            threshold=0.0,
            detail=f"largest objective gap {worst:.3g}",
        )
    ]


def check_lp(vectors: int = 100, seed: int = DEFAULT_SEED) -> List[CheckResult]:
    """Top-i selection matches the exhaustive best subset for every i."""
    rng = np.random.default_rng(seed + 500)
    mismatches = 0
    for _ in range(vectors):
        k = int(rng.integers(2, 11))
        t = rng.uniform(0.0, 5.0, size=k)
        if rng.random() < 0.3:
            t = np.round(t, 1)  # force occasional ties
        for i in range(1, k + 1):
            w = solvers.solve_boolean_relaxation(t, i)
            achieved = float(np.sum(t[w.astype(bool)]))
            best = max(
                float(np.sum(t[list(combo)]))
                for combo in itertools.combinations(range(k), i)
            )
            if abs(achieved - best) > 1e-12 * max(best, 1.0):
                mismatches += 1
    return [
        CheckResult(
            name=f"top-i selection vs exhaustive subsets ({vectors} vectors)",
            passed=mismatches == 0,
            measured=float(mismatches),
            threshold=0.0,
        )
    ]


def check_p3(seed: int = DEFAULT_SEED, grid_steps: int = 2000) -> List[CheckResult]:
    """Continuous power split within 1e-5 relative of a fine grid search."""
    prior = model.make_prior(model.DEFAULT_COVARIANCE)
    gains = (np.array([4.0, 4.0 / 9.0]), np.array([1.0, 1.0]))
    sensors = tuple(
        model.Sensor(
            gain=g,
            sigma_n=model.DEFAULT_SIGMA_N,
            h_mag=model.DEFAULT_H_MAG,
            sigma_nu=model.DEFAULT_SIGMA_NU,
            bits=model.DEFAULT_BITS,
            tau=model.make_tau(g, model.DEFAULT_SIGMA_N, prior),
        )
        for g in gains
    )
    network = model.Network(sensors=sensors, prior=prior)
    p_tot = 10.0
    powers = solvers.solve_power_allocation([0, 1], network, p_tot)
    kern0 = fisher.InfoKernel(sensors[0], prior)
    kern1 = fisher.InfoKernel(sensors[1], prior)
    achieved = kern0.t(float(powers[0])) + kern1.t(float(powers[1]))

    grid = np.arange(grid_steps + 1) * (p_tot / grid_steps)
    t0 = np.array([kern0.t(float(p)) for p in grid])
    t1 = np.array([kern1.t(float(p)) for p in grid])
    pair_sum = t0[:, None] + t1[None, :]
    idx = np.arange(grid_steps + 1)
    pair_sum[idx[:, None] + idx[None, :] > grid_steps] = -np.inf
    best_grid = float(np.max(pair_sum))
    rel = abs(achieved - best_grid) / best_grid
    return [
        CheckResult(
            name="continuous split vs 2-D grid search",
            passed=rel <= 1e-5,
            measured=rel,
            threshold=1e-5,
            detail=f"solver={achieved:.8g} grid={best_grid:.8g}",
        )
    ]


SUITES = {
    "alpha": check_alpha,
    "beta": check_beta,
    "tk": check_tk,
    "grad": check_grad,
    "mckp": check_mckp,
    "lp": check_lp,
    "p3": check_p3,
}


def run_suite(name: str, trials: int = 0, seed: int = DEFAULT_SEED) -> List[CheckResult]:
    """Run one named suite (or 'all'); trials=0 keeps each suite's default."""
    if name == "all":
        results = []
        for suite in SUITES:
            results.extend(run_suite(suite, trials=trials, seed=seed))
        return results
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    fn = SUITES[name]
    if name in ("alpha", "beta", "tk") and trials > 0:
        return fn(trials=trials, seed=seed)
    if name in ("mckp",) and trials > 0:
        return fn(instances=trials, seed=seed)
    if name in ("lp",) and trials > 0:
        return fn(vectors=trials, seed=seed)
    if name in ("grad",) and trials > 0:
        return fn(count=trials, seed=seed)
    return fn(seed=seed)
