"""Concrete model specifications: linear regression under a g-prior,
logistic regression with independent normal priors, Gaussian-process
regression with a squared-exponential kernel, and a conjugate normal-mean
toy used by the test oracles.

Every model exposes the same surface: a parameter layout (named blocks with
family tags), ``log_lik``/``log_prior``/``log_joint`` that accept either a
plain array or an autodiff node, a predictive simulator, and a prior model
weight.  Instances are immutable after construction and safe to evaluate
concurrently.

The improper blocks of the g-prior models (``phi ~ 1/phi``, flat intercept)
are implemented as log-prior terms ``-log phi`` and ``0``.  Cross-model
comparison is only meaningful because every model in the subset ensemble
shares these blocks, so the arbitrary additive constants cancel in
evidence ratios.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import sq_exp_kernel
from .families import FamilyTag

LOG2PI = np.log(2.0 * np.pi)


class DecompositionError(np.linalg.LinAlgError):
    pass


class ConditioningError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ParamBlock:
    name: str
    size: int
    tag: FamilyTag


class ParamLayout:
    """Flat parameter vector split into named, family-tagged blocks."""

    def __init__(self, blocks):
        self.blocks = tuple(blocks)
        offsets = np.cumsum([0] + [b.size for b in self.blocks])
        self._slices = {
            b.name: slice(int(lo), int(hi))
            for b, lo, hi in zip(self.blocks, offsets[:-1], offsets[1:])
        }
        self.dim = int(offsets[-1])

    def slice(self, name):
        return self._slices[name]

    def tags(self):
        out = []
        for b in self.blocks:
            out.extend([b.tag] * b.size)
        return tuple(out)

    def names(self):
        out = []
        for b in self.blocks:
            if b.size == 1:
                out.append(b.name)
            else:
                out.extend([f"{b.name}[{i}]" for i in range(b.size)])
        return tuple(out)


class Model:
    """Base class; subclasses bind their data at construction."""

    name: str
    layout: ParamLayout
    prior_weight: float = 1.0

    def log_lik(self, theta):
        raise NotImplementedError

    def log_prior(self, theta):
        raise NotImplementedError

    def log_joint(self, theta):
        return self.log_lik(theta) + self.log_prior(theta)

    def draw_predictive(self, theta, x_new, rng, noise=True):
        raise NotImplementedError

    def has_proper_prior(self):
        return True

    def coefficient_names(self):
        """Names of interpretable coefficients (for inclusion summaries)."""
        return ()


class GaussianMeanModel(Model):
    """1-D normal mean with known observation sd and a normal prior.

    Conjugate, so the exact posterior and log evidence are available in
    closed form; this is the workhorse oracle for the variational machinery.
    """

    def __init__(self, y, obs_sd=1.0, prior_mean=0.0, prior_sd=1.0,
                 name="normal-mean", prior_weight=1.0):
        self.y = np.asarray(y, dtype=float)
        self.obs_sd = float(obs_sd)
        self.prior_mean = float(prior_mean)
        self.prior_sd = float(prior_sd)
        self.name = name
        self.prior_weight = prior_weight
        self.layout = ParamLayout([ParamBlock("mu", 1, FamilyTag.NORMAL)])

    def log_lik(self, theta):
        mu = theta[0]
        n = len(self.y)
        ssq = ad.vsum((self.y - mu) ** 2)
        return -0.5 * (n * (LOG2PI + 2.0 * np.log(self.obs_sd)) + ssq / self.obs_sd**2)

    def log_prior(self, theta):
        mu = theta[0]
        return -0.5 * (LOG2PI + 2.0 * np.log(self.prior_sd)
                       + (mu - self.prior_mean) ** 2 / self.prior_sd**2)

    def posterior(self):
        """Exact posterior (mean, sd)."""
        n = len(self.y)
        prec = 1.0 / self.prior_sd**2 + n / self.obs_sd**2
        mean = (self.prior_mean / self.prior_sd**2 + self.y.sum() / self.obs_sd**2) / prec
        return mean, np.sqrt(1.0 / prec)

    def log_evidence(self):
        """Exact log marginal likelihood."""
        n = len(self.y)
        cov = self.obs_sd**2 * np.eye(n) + self.prior_sd**2 * np.ones((n, n))
        resid = self.y - self.prior_mean
        out = ad.gaussian_spd_logpdf(resid, cov)
        return float(out.value)

    def sample_prior(self, rng):
        return np.array([rng.normal(self.prior_mean, self.prior_sd)])

    def draw_predictive(self, theta, x_new, rng, noise=True):
        theta = np.asarray(theta, dtype=float)
        mean = theta[0]
        return mean + (rng.normal(0.0, self.obs_sd) if noise else 0.0)


class LinRegModel(Model):
    """Linear regression on a predictor subset with Zellner's g-prior.

    Priors: phi ~ 1/phi, flat intercept, slopes ~ N(0, g (X'X)^-1 / phi).
    The design matrix must be centered (intercept handled separately).
    """

    def __init__(self, X, y, predictors=(), g=None, name=None, prior_weight=1.0):
        self.X = np.asarray(X, dtype=float) if len(predictors) else np.zeros((len(y), 0))
        self.y = np.asarray(y, dtype=float)
        self.predictors = tuple(predictors)
        self.p = len(self.predictors)
        self.n = len(self.y)
        self.g = float(self.n if g is None else g)
        self.name = name or ("lin:" + ("+".join(self.predictors) or "intercept"))
        self.prior_weight = prior_weight
        blocks = [ParamBlock("beta0", 1, FamilyTag.NORMAL)]
        if self.p:
            blocks.append(ParamBlock("beta", self.p, FamilyTag.NORMAL))
        blocks.append(ParamBlock("phi", 1, FamilyTag.LOGNORMAL))
        self.layout = ParamLayout(blocks)
        if self.p:
            self.xtx = self.X.T @ self.X
            sign, logdet = np.linalg.slogdet(self.xtx)
            if sign <= 0:
                raise DecompositionError(
                    f"singular X'X for predictor subset {self.predictors}"
                )
            self.logdet_xtx = logdet
        else:
            self.xtx = np.zeros((0, 0))
            self.logdet_xtx = 0.0

    def has_proper_prior(self):
        return False

    def coefficient_names(self):
        return self.predictors

    def _unpack(self, theta):
        beta0 = theta[self.layout.slice("beta0")][0]
        phi = theta[self.layout.slice("phi")][0]
        beta = theta[self.layout.slice("beta")] if self.p else None
        return beta0, beta, phi

    def log_lik(self, theta):
        beta0, beta, phi = self._unpack(theta)
        mean = beta0 if beta is None else beta0 + ad.dot(self.X, beta)
        resid = self.y - mean
        ssq = ad.vsum(resid**2)
        return 0.5 * self.n * (ad.log(phi) - LOG2PI) - 0.5 * phi * ssq

    def log_prior(self, theta):
        beta0, beta, phi = self._unpack(theta)
        out = -ad.log(phi)  # phi ~ 1/phi; flat intercept contributes 0
        if beta is not None:
            quad = ad.dot(beta, ad.dot(self.xtx, beta))
            out = out + (
                -0.5 * self.p * LOG2PI
                + 0.5 * self.p * ad.log(phi)
                - 0.5 * self.p * np.log(self.g)
                + 0.5 * self.logdet_xtx
                - 0.5 * phi / self.g * quad
            )
        return out

    def draw_predictive(self, theta, x_new, rng, noise=True):
        theta = np.asarray(theta, dtype=float)
        beta0, beta, phi = self._unpack(theta)
        if isinstance(x_new, dict):
            x_new = [x_new[p] for p in self.predictors]
        mean = float(beta0) if beta is None else float(beta0 + np.dot(np.asarray(x_new, dtype=float), beta))
        if not noise:
            return mean
        return mean + rng.normal(0.0, 1.0 / np.sqrt(float(phi)))


class LogisticModel(Model):
    """Bernoulli regression with logit link and independent normal priors."""

    def __init__(self, X, y, predictors=(), prior_sd=10.0, name=None, prior_weight=1.0):
        self.X = np.asarray(X, dtype=float) if len(predictors) else np.zeros((len(y), 0))
        self.y = np.asarray(y, dtype=float)
        if not set(np.unique(self.y)) <= {0.0, 1.0}:
            raise ValueError("responses must be binary 0/1")
        self.predictors = tuple(predictors)
        self.p = len(self.predictors)
        self.prior_sd = float(prior_sd)
        self.name = name or ("logit:" + ("+".join(self.predictors) or "intercept"))
        self.prior_weight = prior_weight
        blocks = [ParamBlock("beta0", 1, FamilyTag.NORMAL)]
        if self.p:
            blocks.append(ParamBlock("beta", self.p, FamilyTag.NORMAL))
        self.layout = ParamLayout(blocks)
        self._sign = 1.0 - 2.0 * self.y  # -1 where y=1, +1 where y=0

    def coefficient_names(self):
        return self.predictors

    def _logits(self, theta):
        beta0 = theta[0]
        if not self.p:
            return beta0 * np.ones(len(self.y))
        beta = theta[1:]
        return beta0 + ad.dot(self.X, beta)

    def log_lik(self, theta):
        a = self._logits(theta)
        # log p(y|a) = -softplus((1-2y) a), the stable log-sigmoid form
        return -ad.vsum(ad.softplus(self._sign * a))

    def log_lik_batch(self, thetas):
        """Vectorized log-likelihood over rows of ``thetas`` (plain numpy)."""
        thetas = np.asarray(thetas, dtype=float)
        a = thetas[:, :1] + (thetas[:, 1:] @ self.X.T if self.p else 0.0)
        s = self._sign[None, :] * a
        return -np.sum(np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s))), axis=1)

    def log_prior(self, theta):
        d = self.layout.dim
        ssq = ad.vsum(theta**2)
        return -0.5 * (d * (LOG2PI + 2.0 * np.log(self.prior_sd)) + ssq / self.prior_sd**2)

    def sample_prior(self, rng):
        return rng.normal(0.0, self.prior_sd, size=self.layout.dim)

    def success_prob(self, theta, x_new):
        theta = np.asarray(theta, dtype=float)
        if isinstance(x_new, dict):
            x_new = [x_new[p] for p in self.predictors]
        a = theta[0] + (np.dot(np.asarray(x_new, dtype=float), theta[1:]) if self.p else 0.0)
        return 1.0 / (1.0 + np.exp(-a))

    def draw_predictive(self, theta, x_new, rng, noise=True):
        p = self.success_prob(theta, x_new)
        return float(rng.random() < p) if noise else p


class GPModel(Model):
    """Constant-mean GP regression with a squared-exponential kernel on 2-d
    inputs; the latent surface is marginalized analytically.

    ``free_mean=True`` adds a mean coefficient with a normal prior; otherwise
    the mean is fixed at ``mean_offset``.  Positive parameters (scale, the two
    correlation ranges, noise sd) carry log-normal priors.
    """

    BASE_JITTER = 1e-6  # relative to eta^2

    def __init__(self, coords, y, free_mean=True, mean_offset=0.0,
                 mean_prior=(0.0, 1.0), lognormal_priors=None,
                 name="gp", prior_weight=1.0):
        self.coords = np.asarray(coords, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n = len(self.y)
        self.free_mean = bool(free_mean)
        self.mean_offset = float(mean_offset)
        self.mean_prior = mean_prior
        # (location, sd) of log-normal priors on (eta, nu1, nu2, sigma)
        defaults = {"eta": (0.0, 1.0), "nu1": (1.0, 1.0), "nu2": (1.0, 1.0), "sigma": (0.0, 1.0)}
        self.lognormal_priors = {**defaults, **(lognormal_priors or {})}
        self.name = name
        self.prior_weight = prior_weight
        blocks = []
        if self.free_mean:
            blocks.append(ParamBlock("beta", 1, FamilyTag.NORMAL))
        for pname in ("eta", "nu1", "nu2", "sigma"):
            blocks.append(ParamBlock(pname, 1, FamilyTag.LOGNORMAL))
        self.layout = ParamLayout(blocks)
        d1 = self.coords[:, 0][:, None] - self.coords[:, 0][None, :]
        d2 = self.coords[:, 1][:, None] - self.coords[:, 1][None, :]
        self._d1sq = d1**2
        self._d2sq = d2**2

    def _unpack(self, theta):
        vals = {}
        for b in self.layout.blocks:
            vals[b.name] = theta[self.layout.slice(b.name)][0]
        if not self.free_mean:
            vals["beta"] = self.mean_offset
        return vals

    def _cov(self, eta, nu1, nu2, sigma, jitter_scale=1.0):
        base = ad.exp(
            self._d1sq * (-0.5 / nu1**2) + self._d2sq * (-0.5 / nu2**2)
        )
        eye = np.eye(self.n)
        jitter = self.BASE_JITTER * jitter_scale
        return eta**2 * base + (sigma**2 + jitter * eta**2) * eye

    def log_lik(self, theta):
        v = self._unpack(theta)
        resid = -(v["beta"] - self.y)  # y - beta, keeping node broadcasting simple
        scale = 1.0
        for _ in range(4):  # base jitter, then up to 3 decades of escalation
            try:
                return ad.gaussian_spd_logpdf(resid, self._cov(
                    v["eta"], v["nu1"], v["nu2"], v["sigma"], jitter_scale=scale))
            except np.linalg.LinAlgError:
                scale *= 10.0
        eta = float(v["eta"].value if isinstance(v["eta"], ad.Node) else v["eta"])
        K = self._cov(*(float(x.value if isinstance(x, ad.Node) else x)
                        for x in (v["eta"], v["nu1"], v["nu2"], v["sigma"])))
        K = K.value if isinstance(K, ad.Node) else K
        min_eig = float(np.linalg.eigvalsh(K).min())
        raise ConditioningError(
            f"kernel matrix not positive definite after jitter escalation "
            f"(min eigenvalue ~ {min_eig:.3e}, eta={eta:.3g})"
        )

    def log_prior(self, theta):
        v = self._unpack(theta)
        out = 0.0
        if self.free_mean:
            m0, s0 = self.mean_prior
            out = out - 0.5 * (LOG2PI + 2.0 * np.log(s0) + (v["beta"] - m0) ** 2 / s0**2)
        for pname in ("eta", "nu1", "nu2", "sigma"):
            loc, sd = self.lognormal_priors[pname]
            x = v[pname]
            out = out - ad.log(x) - 0.5 * (
                LOG2PI + 2.0 * np.log(sd) + (ad.log(x) - loc) ** 2 / sd**2
            )
        return out

    def sample_prior(self, rng):
        theta = []
        if self.free_mean:
            m0, s0 = self.mean_prior
            theta.append(rng.normal(m0, s0))
        for pname in ("eta", "nu1", "nu2", "sigma"):
            loc, sd = self.lognormal_priors[pname]
            theta.append(np.exp(rng.normal(loc, sd)))
        return np.array(theta)

    def predict_dist(self, theta, coords_new):
        """Conditional mean and (diagonal) variance at new inputs."""
        theta = np.asarray(theta, dtype=float)
        v = self._unpack(theta)
        beta, eta, nu1, nu2, sigma = (float(v[k]) for k in ("beta", "eta", "nu1", "nu2", "sigma"))
        K = sq_exp_kernel(self.coords, eta, nu1, nu2) + (
            sigma**2 + self.BASE_JITTER * eta**2
        ) * np.eye(self.n)
        coords_new = np.atleast_2d(np.asarray(coords_new, dtype=float))
        d1 = self.coords[:, 0][:, None] - coords_new[:, 0][None, :]
        d2 = self.coords[:, 1][:, None] - coords_new[:, 1][None, :]
        ks = eta**2 * np.exp(-(d1**2) / (2 * nu1**2) - (d2**2) / (2 * nu2**2))
        L = np.linalg.cholesky(K)
        alpha = np.linalg.solve(L.T, np.linalg.solve(L, self.y - beta))
        mean = beta + ks.T @ alpha
        w = np.linalg.solve(L, ks)
        var = np.maximum(eta**2 - np.sum(w**2, axis=0), 0.0)
        return mean, var, sigma**2

    def draw_predictive(self, theta, x_new, rng, noise=True):
        mean, var, noise_var = self.predict_dist(theta, np.atleast_2d(x_new))
        total = var + (noise_var if noise else 0.0)
        out = mean + np.sqrt(total) * rng.standard_normal(len(mean))
        return float(out[0]) if np.asarray(x_new).ndim == 1 else out


def _normalize_prior_weights(models):
    total = sum(m.prior_weight for m in models)
    for m in models:
        m.prior_weight = m.prior_weight / total
    return models


def linreg_subset_ensemble(dataset, predictors, g=None):
    """All 2^k g-prior linear models over subsets of ``predictors``."""
    y = dataset.y("train")
    models = []
    for r in range(len(predictors) + 1):
        for subset in itertools.combinations(predictors, r):
            X = dataset.design(subset, "train") if subset else np.zeros((len(y), 0))
            models.append(LinRegModel(X, y, predictors=subset, g=g))
    return _normalize_prior_weights(models)


def logistic_subset_ensemble(dataset, predictors, prior_sd=10.0):
    """All 2^k logistic models over subsets of ``predictors``."""
    y = dataset.y("train")
    models = []
    for r in range(len(predictors) + 1):
        for subset in itertools.combinations(predictors, r):
            X = dataset.design(subset, "train") if subset else np.zeros((len(y), 0))
            models.append(LogisticModel(X, y, predictors=subset, prior_sd=prior_sd))
    return _normalize_prior_weights(models)
