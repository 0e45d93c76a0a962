"""Multivariate exponential-kernel Hawkes process: rates, integrals, likelihood.

Node ids are 1-based in all public signatures (matching event data); matrix
storage is 0-based with alpha[j, i] holding the directed excitation strength
from node j+1 onto node i+1.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..validation import as_float_matrix, as_float_vector, check_node_id, check_nonnegative


@dataclass
class HawkesParams:
    """Background rates mu (per hour), excitation matrix alpha, shared decay beta.

    edge_mask[j, i] marks whether node j+1 is allowed to excite node i+1;
    alpha must be zero off-mask.
    """

    mu: np.ndarray
    alpha: np.ndarray
    beta: float
    edge_mask: np.ndarray = None

    def __post_init__(self):
        self.mu = as_float_vector(self.mu, "mu")
        n = self.mu.shape[0]
        self.alpha = as_float_matrix(self.alpha, "alpha", square=True)
        if self.alpha.shape[0] != n:
            raise ValueError(f"alpha shape {self.alpha.shape} does not match mu length {n}")
        check_nonnegative(self.mu, "mu")
        check_nonnegative(self.alpha, "alpha")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.edge_mask is None:
            self.edge_mask = np.ones((n, n), dtype=bool)
        else:
            self.edge_mask = np.asarray(self.edge_mask, dtype=bool)
            if self.edge_mask.shape != (n, n):
                raise ValueError("edge_mask shape does not match alpha")
        if np.any(self.alpha[~self.edge_mask] != 0.0):
            raise ValueError("alpha has nonzero entries on disallowed edges")

    @property
    def n_nodes(self):
        return self.mu.shape[0]


def _projection_arrays(projection):
    if len(projection) == 0:
        return np.empty(0), np.empty(0, dtype=int)
    taus = np.asarray([p[0] for p in projection], dtype=float)
    nodes = np.asarray([int(p[1]) for p in projection], dtype=int)
    if np.any(np.diff(taus) < 0):
        raise ValueError("projection must be sorted by tau")
    return taus, nodes


def intensity_vector(params, projection, s, include_boundary=False):
    """Conditional rate of every node at time s given the (tau, node) history.

    Events at tau == s are excluded (left limit) unless include_boundary is
    set, which gives the right limit used as a thinning upper bound.
    """
    taus, nodes = _projection_arrays(projection)
    lam = params.mu.copy()
    if taus.size:
        keep = taus <= s if include_boundary else taus < s
        taus, nodes = taus[keep], nodes[keep]
        if taus.size:
            decay = np.exp(-params.beta * (s - taus))
            for j0 in np.unique(nodes - 1):
                weight = decay[nodes - 1 == j0].sum()
                lam += params.alpha[j0, :] * weight
    return lam


def intensity(params, projection, node, s):
    """lambda_i(s): background rate plus decayed excitation from prior events."""
    i0 = check_node_id(node, params.n_nodes) - 1
    return float(intensity_vector(params, projection, s)[i0])


def total_intensity(params, projection, s):
    """Sum of per-node conditional rates at time s."""
    return float(intensity_vector(params, projection, s).sum())


def compensator(params, projection, horizon):
    """Integral of each node's rate over [0, horizon], in closed form."""
    taus, nodes = _projection_arrays(projection)
    if taus.size and taus.max() > horizon:
        raise ValueError("projection contains events beyond the horizon")
    out = params.mu * horizon
    if taus.size:
        mass = (1.0 - np.exp(-params.beta * (horizon - taus))) / params.beta
        for j0 in np.unique(nodes - 1):
            weight = mass[nodes - 1 == j0].sum()
            out = out + params.alpha[j0, :] * weight
    return out


def decayed_source_states(taus, nodes0, n_nodes, beta):
    """Per-event decayed source-node states, excluding the event itself.

    Returns S with S[m, j] = sum over prior events l of node j+1 of
    exp(-beta * (tau_m - tau_l)). Computed by the standard single-decay
    recursion in O(M*N).
    """
    m = taus.shape[0]
    states = np.zeros((m, n_nodes))
    if m == 0:
        return states
    current = np.zeros(n_nodes)
    for idx in range(m):
        if idx > 0:
            current *= math.exp(-beta * (taus[idx] - taus[idx - 1]))
            states[idx] = current
        # register this event for successors; decay applied on the next step
        current[nodes0[idx]] += 1.0
    return states


def log_likelihood(params, stream):
    """Log-likelihood of an event stream: sum of log rates minus compensators.

    Each event's rate uses the left limit, so an event never excites itself.
    A zero rate at any event time yields -inf rather than an exception.
    """
    taus = np.asarray([e.tau for e in stream.events], dtype=float)
    nodes0 = np.asarray([e.node - 1 for e in stream.events], dtype=int)
    return _log_likelihood_arrays(params, taus, nodes0, stream.horizon_hours)


def _log_likelihood_arrays(params, taus, nodes0, horizon):
    if taus.size and taus.max() > horizon:
        raise ValueError("events beyond the horizon")
    states = decayed_source_states(taus, nodes0, params.n_nodes, params.beta)
    rates = params.mu[nodes0] + np.einsum("mj,jm->m", states, params.alpha[:, nodes0])
    if np.any(rates <= 0.0):
        return float("-inf")
    point_term = float(np.log(rates).sum())
    integral = float(params.mu.sum() * horizon)
    if taus.size:
        mass = (1.0 - np.exp(-params.beta * (horizon - taus))) / params.beta
        outgoing = params.alpha.sum(axis=1)  # total excitation leaving each source node
        integral += float((outgoing[nodes0] * mass).sum())
    return point_term - integral


def excitation_matrix(params):
    """Integrated excitation matrix: alpha / beta on allowed edges."""
    g = params.alpha / params.beta
    g[~params.edge_mask] = 0.0
    return g


def spectral_radius(matrix, n_squarings=60):
    """Perron root of a nonnegative square matrix.

    Normalized repeated squaring of the matrix: after k squarings the
    infinity-norm of the 2^k-th power, taken to the 1/2^k, converges to the
    spectral radius; nilpotent matrices are detected exactly when a power
    vanishes.
    """
    b = as_float_matrix(matrix, "matrix", square=True)
    check_nonnegative(b, "matrix")
    if b.shape[0] == 0:
        return 0.0
    norm = float(b.sum(axis=1).max())
    if norm == 0.0:
        return 0.0
    b = b / norm
    acc = math.log(norm)
    half = 0.5
    for _ in range(n_squarings):
        b = b @ b
        norm = float(b.sum(axis=1).max())
        if norm == 0.0:
            return 0.0
        b /= norm
        acc += half * math.log(norm)
        half *= 0.5
    return float(math.exp(acc))


def information_criteria(log_lik, param_count, event_count):
    """AIC and BIC from a log-likelihood, parameter count, and event count."""
    if param_count < 0:
        raise ValueError("param_count must be nonnegative")
    if not event_count >= 1:
        raise ValueError("event_count must be >= 1")
    aic = 2.0 * param_count - 2.0 * log_lik
    bic = param_count * math.log(event_count) - 2.0 * log_lik
    return aic, bic
