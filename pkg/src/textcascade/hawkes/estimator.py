"""Scikit-learn style front end for the Hawkes fit, for pipeline composition."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .fitting import DEFAULT_BETA_GRID, FitConfig, fit_grid
from .model import intensity_vector, log_likelihood


class HawkesExponentialEstimator(BaseEstimator):
    """Fit a multivariate exponential-kernel Hawkes process to an event stream.

    fit(stream) runs the penalized MLE over the decay grid and keeps the best
    stable fit. Learned state lands in `params_` / `result_` / `grid_results_`;
    `score(stream)` returns the log-likelihood of a stream under the fit.

    Parameters mirror FitConfig and are plain values so that get_params /
    set_params / clone compose with the usual tooling.
    """

    def __init__(self, beta_grid=DEFAULT_BETA_GRID, eta=0.0, penalty="squared",
                 max_iterations=1000, convergence_tolerance=1e-7,
                 n_nodes=None, edge_mask=None):
        self.beta_grid = beta_grid
        self.eta = eta
        self.penalty = penalty
        self.max_iterations = max_iterations
        self.convergence_tolerance = convergence_tolerance
        self.n_nodes = n_nodes
        self.edge_mask = edge_mask

    def _config(self):
        return FitConfig(
            beta_grid=tuple(self.beta_grid),
            eta=self.eta,
            penalty=self.penalty,
            max_iterations=self.max_iterations,
            convergence_tolerance=self.convergence_tolerance,
        )

    def fit(self, stream, y=None):
        best, results = fit_grid(
            stream,
            self._config(),
            n_nodes=self.n_nodes,
            edge_mask=(np.asarray(self.edge_mask, dtype=bool)
                       if self.edge_mask is not None else None),
        )
        self.result_ = best
        self.grid_results_ = results
        self.params_ = best.params
        self.n_nodes_ = best.params.n_nodes
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before using this estimator")

    def score(self, stream, y=None):
        """Log-likelihood of a stream under the fitted parameters."""
        self._check_fitted()
        return log_likelihood(self.params_, stream)

    def predict_intensity(self, projection, times):
        """Per-node conditional rates at each time, given a (tau, node) history."""
        self._check_fitted()
        return np.stack([intensity_vector(self.params_, projection, float(s)) for s in times])
