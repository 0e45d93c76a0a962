"""Penalized maximum-likelihood fitting with a fixed-decay grid.

For a fixed decay the likelihood separates by target node, so each node's
(mu_i, alpha[:, i]) block is maximized independently by projected gradient
ascent on the nonnegative orthant with Armijo backtracking.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ..errors import NoStableModelError
from .model import (
    HawkesParams,
    _log_likelihood_arrays,
    decayed_source_states,
    excitation_matrix,
    information_criteria,
    spectral_radius,
)

# Eight decays spanning 1/72 to 1/6 per hour.
DEFAULT_BETA_GRID = (
    1.0 / 72.0,
    1.0 / 48.0,
    1.0 / 36.0,
    1.0 / 24.0,
    1.0 / 18.0,
    1.0 / 12.0,
    1.0 / 9.0,
    1.0 / 6.0,
)

PENALTIES = ("none", "squared", "absolute")

_ARMIJO_SIGMA = 1e-4
_MIN_STEP = 1e-18


@dataclass
class FitConfig:
    beta_grid: tuple = DEFAULT_BETA_GRID
    eta: float = 0.0
    penalty: str = "squared"
    max_iterations: int = 1000
    convergence_tolerance: float = 1e-7

    def __post_init__(self):
        if len(self.beta_grid) == 0:
            raise ValueError("beta_grid must be non-empty")
        if any(b <= 0 for b in self.beta_grid):
            raise ValueError("beta_grid values must be positive")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.penalty not in PENALTIES:
            raise ValueError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")
        if self.convergence_tolerance <= 0:
            raise ValueError("convergence_tolerance must be positive")


@dataclass
class FitResult:
    params: HawkesParams
    log_likelihood: float
    aic: float
    bic: float
    spectral_radius: float
    stable: bool
    param_count: int
    converged: bool

    @property
    def beta(self):
        return self.params.beta

    def to_dict(self):
        return {
            "beta": self.params.beta,
            "mu": self.params.mu.tolist(),
            "alpha": self.params.alpha.tolist(),
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "bic": self.bic,
            "spectral_radius": self.spectral_radius,
            "stable": self.stable,
            "converged": self.converged,
            "param_count": self.param_count,
            "edge_mask": self.params.edge_mask.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        params = HawkesParams(
            mu=np.asarray(data["mu"], dtype=float),
            alpha=np.asarray(data["alpha"], dtype=float),
            beta=float(data["beta"]),
            edge_mask=(np.asarray(data["edge_mask"], dtype=bool)
                       if data.get("edge_mask") is not None else None),
        )
        return cls(
            params=params,
            log_likelihood=float(data["log_likelihood"]),
            aic=float(data["aic"]),
            bic=float(data["bic"]),
            spectral_radius=float(data["spectral_radius"]),
            stable=bool(data["stable"]),
            param_count=int(data["param_count"]),
            converged=bool(data["converged"]),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _penalty_value(a, eta, kind):
    if eta == 0.0 or kind == "none":
        return 0.0
    if kind == "squared":
        return eta * float((a * a).sum())
    return eta * float(a.sum())  # absolute magnitude; a >= 0 on the orthant


def _penalty_gradient(a, eta, kind):
    if eta == 0.0 or kind == "none":
        return np.zeros_like(a)
    if kind == "squared":
        return 2.0 * eta * a
    return np.full_like(a, eta)


def _fit_target_node(states_i, tail_mass, n_events_i, horizon, eta, penalty,
                     max_iterations, tol):
    """Maximize one node's likelihood block over (mu_i, alpha_sources).

    states_i: (M_i, A) decayed source states at this node's event times,
    restricted to allowed source columns. tail_mass: (A,) integral weight
    of each allowed source's kernel over the observation window.
    """
    n_allowed = tail_mass.shape[0]

    def objective(mu, a):
        if n_events_i:
            rates = mu + states_i @ a
            if np.any(rates <= 0.0):
                return float("-inf"), rates
            point = float(np.log(rates).sum())
        else:
            rates = np.empty(0)
            point = 0.0
        value = point - mu * horizon - float(a @ tail_mass) - _penalty_value(a, eta, penalty)
        return value, rates

    def gradient(mu, a, rates):
        inv = 1.0 / rates if n_events_i else np.empty(0)
        g_mu = float(inv.sum()) - horizon
        g_a = (states_i.T @ inv if n_events_i else np.zeros(n_allowed))
        g_a = g_a - tail_mass - _penalty_gradient(a, eta, penalty)
        return g_mu, g_a

    mu = 0.5 * n_events_i / horizon
    a = np.full(n_allowed, 0.01)
    value, rates = objective(mu, a)

    step = 1.0
    converged = False
    for _ in range(max_iterations):
        g_mu, g_a = gradient(mu, a, rates)

        # projected-gradient stationarity on the nonnegative orthant
        pg_mu = max(mu + g_mu, 0.0) - mu
        pg_a = np.maximum(a + g_a, 0.0) - a
        if max(abs(pg_mu), float(np.abs(pg_a).max(initial=0.0))) <= tol * (1.0 + abs(value)):
            converged = True
            break

        while True:
            mu_new = max(mu + step * g_mu, 0.0)
            a_new = np.maximum(a + step * g_a, 0.0)
            value_new, rates_new = objective(mu_new, a_new)
            gain_needed = _ARMIJO_SIGMA * (g_mu * (mu_new - mu) + float(g_a @ (a_new - a)))
            if value_new >= value + gain_needed and math.isfinite(value_new):
                break
            step *= 0.5
            if step < _MIN_STEP:
                # no ascent direction left at floating resolution
                return mu, a, True
        mu, a, value, rates = mu_new, a_new, value_new, rates_new
        step = min(step * 2.0, 1e8)

    return mu, a, converged


def fit(stream, beta, config=None, n_nodes=None, edge_mask=None):
    """Penalized MLE of (mu, alpha) for one fixed decay value.

    Returns a FitResult whose log_likelihood is the unpenalized value;
    non-convergence is reported through the converged flag.
    """
    config = config or FitConfig()
    if not beta > 0:
        raise ValueError("beta must be positive")
    if len(stream.events) == 0:
        raise ValueError("cannot fit an empty stream")

    taus = np.asarray([e.tau for e in stream.events], dtype=float)
    nodes0 = np.asarray([e.node - 1 for e in stream.events], dtype=int)
    n = int(n_nodes) if n_nodes is not None else int(nodes0.max()) + 1
    if nodes0.max() >= n:
        raise ValueError("stream contains node ids beyond n_nodes")
    horizon = float(stream.horizon_hours)

    mask = np.ones((n, n), dtype=bool) if edge_mask is None else np.asarray(edge_mask, dtype=bool)
    states = decayed_source_states(taus, nodes0, n, beta)
    kernel_mass = (1.0 - np.exp(-beta * (horizon - taus))) / beta
    source_mass = np.zeros(n)
    for j0 in range(n):
        source_mass[j0] = float(kernel_mass[nodes0 == j0].sum())

    mu_hat = np.zeros(n)
    alpha_hat = np.zeros((n, n))
    converged = True
    for i0 in range(n):
        rows = nodes0 == i0
        allowed = np.flatnonzero(mask[:, i0])
        mu_i, a_i, ok = _fit_target_node(
            states[rows][:, allowed],
            source_mass[allowed],
            int(rows.sum()),
            horizon,
            config.eta,
            config.penalty,
            config.max_iterations,
            config.convergence_tolerance,
        )
        mu_hat[i0] = mu_i
        alpha_hat[allowed, i0] = a_i
        converged = converged and ok

    params = HawkesParams(mu=mu_hat, alpha=alpha_hat, beta=float(beta), edge_mask=mask)
    log_lik = _log_likelihood_arrays(params, taus, nodes0, horizon)
    rho = spectral_radius(excitation_matrix(params))
    param_count = n + int(mask.sum()) + 1
    aic, bic = information_criteria(log_lik, param_count, len(stream.events))
    return FitResult(
        params=params,
        log_likelihood=log_lik,
        aic=aic,
        bic=bic,
        spectral_radius=rho,
        stable=rho < 1.0,
        param_count=param_count,
        converged=converged,
    )


def fit_grid(stream, config=None, n_nodes=None, edge_mask=None):
    """Fit every decay on the grid; select the best stable fit by likelihood.

    Raises NoStableModelError (carrying all per-decay results) when every
    fit is supercritical.
    """
    config = config or FitConfig()
    results = [
        fit(stream, beta, config, n_nodes=n_nodes, edge_mask=edge_mask)
        for beta in config.beta_grid
    ]
    stable = [r for r in results if r.stable]
    if not stable:
        raise NoStableModelError(
            f"no stable fit among {len(results)} decay values", results
        )
    best = max(stable, key=lambda r: r.log_likelihood)
    return best, results


def write_grid_csv(results, path):
    """One row per decay value: (beta, log_likelihood, spectral_radius, stable)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "log_likelihood", "spectral_radius", "stable"])
        for r in results:
            writer.writerow([r.beta, r.log_likelihood, r.spectral_radius, r.stable])
