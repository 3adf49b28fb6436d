"""Canonical study pipelines bundled with the package: the aggregate-crime
linear ensemble, the heart-disease-style logistic ensemble, and the synthetic
spatial Gaussian-process pair.

Each builder returns (dataset, models) with the documented preprocessing
already applied, so the command-line front end and the test suite construct
identical ensembles.
"""

from __future__ import annotations

import numpy as np

from . import data as data_io
from .models import GPModel, linreg_subset_ensemble, logistic_subset_ensemble

CRIME_PREDICTORS = ("M", "Prob", "Ed")
HEART_PREDICTORS = ("chol", "trestbps", "sex", "age", "thalach")

# drop-one-predictor comparisons exercised by the Bayes-factor front end:
# (model without the first predictor, model with it)
CRIME_BF_PAIR = ("lin:Prob", "lin:M+Prob")
HEART_BF_PAIR = (
    "logit:trestbps+sex+age+thalach",
    "logit:chol+trestbps+sex+age+thalach",
)


def crime_study(train_fraction=1.0, split_seed=0, g=None):
    """Linear g-prior subset ensemble on the bundled 47-state crime table.

    Response and the three predictors (percent young males, imprisonment
    probability, mean schooling) are log-transformed and centered; centering
    the response costs nothing under the flat intercept prior and lets the
    default optimization budget converge.
    """
    cols = data_io.load_csv(data_io.bundled_path("crime.csv"))
    n = len(next(iter(cols.values())))
    mask = data_io.split_mask(n, train_fraction, split_seed)
    named = ("y",) + CRIME_PREDICTORS
    ds = data_io.prepare(cols, "y", log_columns=named, center_columns=named,
                         train_mask=mask)
    return ds, linreg_subset_ensemble(ds, CRIME_PREDICTORS, g=g)


def heart_study(prior_sd=10.0):
    """Logistic subset ensemble on the bundled synthetic heart-style table.

    Continuous measurements are log-transformed and centered; sex stays 0/1.
    """
    cols = data_io.load_csv(data_io.bundled_path("heart.csv"))
    continuous = ("chol", "trestbps", "age", "thalach")
    ds = data_io.prepare(cols, "y", log_columns=continuous,
                         center_columns=continuous)
    return ds, logistic_subset_ensemble(ds, HEART_PREDICTORS, prior_sd=prior_sd)


def gp_study(grid_size=20, n_test=100, seed=0, offset_sds=2.0, **truth):
    """Two-model spatial selection problem on a synthetic lattice surface.

    The first candidate estimates its constant mean (matching how the data
    were generated); the second fixes the mean at an offset of ``offset_sds``
    sample standard deviations, a deliberately misspecified variant.
    """
    ds = data_io.synth_gp_dataset(grid_size=grid_size, n_test=n_test,
                                  seed=seed, **truth)
    coords = np.column_stack([ds.column("x1", "train"), ds.column("x2", "train")])
    y = ds.y("train")
    wrong_mean = float(y.mean() + offset_sds * y.std(ddof=1))
    models = [
        GPModel(coords, y, free_mean=True, name="gp:free-mean"),
        GPModel(coords, y, free_mean=False, mean_offset=wrong_mean,
                name="gp:offset-mean"),
    ]
    total = sum(m.prior_weight for m in models)
    for m in models:
        m.prior_weight /= total
    return ds, models


def gp_predictive_means(posterior, coords_new, n_theta=50, seed=0):
    """Model-averaged conditional means at new inputs.

    Unlike the generic per-point predictive sampler, this draws a modest
    number of parameter vectors per model and reuses each one's conditional
    mean for every requested input, so the kernel factorization cost is paid
    once per draw instead of once per (draw, input) pair.
    """
    from . import families

    coords_new = np.atleast_2d(np.asarray(coords_new, dtype=float))
    rng = np.random.default_rng(seed)
    out = np.zeros(len(coords_new))
    for model, state, q in zip(posterior.models, posterior.variational,
                               posterior.weights):
        if q == 0.0:
            continue
        acc = np.zeros(len(coords_new))
        for _ in range(n_theta):
            theta = families.sample(state, rng.standard_normal(state.dim))
            mean, _, _ = model.predict_dist(theta, coords_new)
            acc += mean
        out += q * acc / n_theta
    return out
