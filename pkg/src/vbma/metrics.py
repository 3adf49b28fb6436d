"""Model-averaged posterior machinery: mixture predictive draws, Bayes
factors, equal-tail intervals, coverage curves, RMSE, and spike-and-density
coefficient summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import families


@dataclass
class BmaPosterior:
    """Frozen averaging result: weights plus per-model variational states."""

    models: list
    weights: np.ndarray
    variational: list

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-8:
            raise ValueError("weights must sum to 1")

    @property
    def k(self):
        return len(self.models)


@dataclass
class CoefficientSummary:
    name: str
    inclusion_prob: float       # P(beta != 0 | d) = sum of q over including models
    draws: np.ndarray           # posterior draws pooled over including models
    def density(self, grid, scaled=False):
        """Gaussian-kernel density over ``grid``; plug-in bandwidth.

        With ``scaled=True`` the maximum equals the inclusion probability
        (a display convention; the stored draws are unscaled).
        """
        x = self.draws
        if len(x) == 0:
            return np.zeros_like(np.asarray(grid, dtype=float))
        bw = 1.06 * x.std(ddof=1) * len(x) ** (-0.2)
        bw = max(bw, 1e-12)
        grid = np.asarray(grid, dtype=float)
        dens = np.exp(-0.5 * ((grid[:, None] - x[None, :]) / bw) ** 2).sum(axis=1)
        dens /= len(x) * bw * np.sqrt(2.0 * np.pi)
        if scaled and dens.max() > 0:
            dens = dens * (self.inclusion_prob / dens.max())
        return dens


def bma_draw(posterior: BmaPosterior, x_new, n_draws, rng, noise=True):
    """i.i.d. draws from the variational BMA predictive mixture at ``x_new``.

    Each draw picks a model from Categorical(q), a parameter vector from its
    variational posterior, then one predictive sample.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    picks = rng.choice(posterior.k, size=n_draws, p=posterior.weights)
    out = np.empty(n_draws)
    for i, k in enumerate(picks):
        state = posterior.variational[k]
        theta = families.sample(state, rng.standard_normal(state.dim))
        out[i] = posterior.models[k].draw_predictive(theta, x_new, rng, noise=noise)
    return out


def bayes_factor(weights, prior_weights, i, j):
    """B_ij = (q_i / q_j) * (prior_j / prior_i); inf when q_j = 0."""
    weights = np.asarray(weights, dtype=float)
    prior_weights = np.asarray(prior_weights, dtype=float)
    if prior_weights[i] <= 0:
        raise ValueError("prior weight of the numerator model must be positive")
    if weights[j] == 0.0:
        return np.inf
    return (weights[i] / weights[j]) * (prior_weights[j] / prior_weights[i])


def equal_tail_interval(draws, alpha):
    """Empirical (alpha/2, 1-alpha/2) quantiles, linear interpolation."""
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise ValueError("draws must be nonempty")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    lo, hi = np.quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def coverage_curve(posterior, x_test, y_test, levels, n_draws=2000, seed=0, noise=True):
    """Empirical coverage of equal-tail predictive intervals per level.

    ``levels`` are credibility levels (e.g. 0.1 .. 0.9); returns a dict
    level -> fraction of test responses inside their interval.
    """
    y_test = np.asarray(y_test, dtype=float)
    if len(y_test) == 0:
        raise ValueError("test set must be nonempty")
    rng = np.random.default_rng(seed)
    hits = {lev: 0 for lev in levels}
    for x, y in zip(x_test, y_test):
        draws = bma_draw(posterior, x, n_draws, rng, noise=noise)
        for lev in levels:
            lo, hi = equal_tail_interval(draws, 1.0 - lev)
            hits[lev] += int(lo <= y <= hi)
    return {lev: hits[lev] / len(y_test) for lev in levels}


def predictive_means(posterior, x_test, n_draws=2000, seed=0):
    rng = np.random.default_rng(seed)
    return np.array(
        [bma_draw(posterior, x, n_draws, rng, noise=False).mean() for x in x_test]
    )


def coefficient_summary(posterior, name, n_draws=5000, seed=0):
    """Inclusion probability and pooled posterior draws for one coefficient.

    Draws come from the variational states of the including models, weighted
    by q; models without the coefficient contribute the spike at zero (via
    1 - inclusion probability), not draws.
    """
    including = [
        k for k, m in enumerate(posterior.models) if name in m.coefficient_names()
    ]
    if not including:
        raise KeyError(f"coefficient '{name}' appears in no model")
    q_inc = posterior.weights[including]
    inclusion = float(q_inc.sum())
    rng = np.random.default_rng(seed)
    draws = []
    if inclusion > 0:
        counts = rng.multinomial(n_draws, q_inc / inclusion)
        for k, c in zip(including, counts):
            model = posterior.models[k]
            state = posterior.variational[k]
            pos = model.coefficient_names().index(name)
            idx = model.layout.slice("beta").start + pos
            for _ in range(c):
                theta = families.sample(state, rng.standard_normal(state.dim))
                draws.append(theta[idx])
    return CoefficientSummary(name, inclusion, np.array(draws))


def rmse(predictions, truth):
    predictions = np.asarray(predictions, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predictions.shape != truth.shape:
        raise ValueError("length mismatch between predictions and truth")
    return float(np.sqrt(np.mean((predictions - truth) ** 2)))
