"""Variational family behavior: transform, density, jacobian, serialization.

Sampling distributions are verified with Kolmogorov-Smirnov tests against
scipy's reference distributions; densities against scipy's logpdf.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from vbma import autodiff as ad
from vbma import families
from vbma.families import FamilyTag, VariationalState


def make_state(mu, var, tags):
    mu = np.asarray(mu, dtype=float)
    raw = families.encode_scale(np.asarray(var, dtype=float))
    return VariationalState(mu, raw, tuple(tags))


@given(st.floats(min_value=1e-6, max_value=1e4))
@settings(max_examples=100, deadline=None)
def test_encode_decode_round_trip(v):
    assert float(families.decode_scale(families.encode_scale(v))) == pytest.approx(v, rel=1e-9)


def test_encode_rejects_nonpositive():
    with pytest.raises(ValueError):
        families.encode_scale(0.0)
    with pytest.raises(ValueError):
        families.encode_scale(-1.0)


def test_decoded_quantity_is_variance():
    # the softplus-decoded value is the VARIANCE; sd() is its square root
    state = make_state([0.0], [4.0], [FamilyTag.NORMAL])
    assert float(ad.softplus(state.raw_scale[0])) == pytest.approx(4.0)
    assert float(state.sd()[0]) == pytest.approx(2.0)


def test_initial_state_matches_documented_defaults():
    state = VariationalState.initial((FamilyTag.NORMAL, FamilyTag.LOGNORMAL))
    assert np.allclose(state.mu, 0.0)
    assert np.allclose(ad.softplus(state.raw_scale), 0.01)


def test_transform_values():
    state = make_state([1.0, 2.0], [4.0, 0.25], [FamilyTag.NORMAL, FamilyTag.LOGNORMAL])
    theta = families.sample(state, np.array([0.5, -1.0]))
    assert theta[0] == pytest.approx(1.0 + 0.5 * 2.0)
    assert theta[1] == pytest.approx(np.exp(2.0 - 1.0 * 0.5))


def test_normal_samples_pass_ks():
    state = make_state([1.5], [0.49], [FamilyTag.NORMAL])
    rng = np.random.default_rng(0)
    draws = np.array([families.sample(state, rng.standard_normal(1))[0] for _ in range(4000)])
    assert stats.kstest(draws, "norm", args=(1.5, 0.7)).pvalue > 0.01


def test_lognormal_samples_pass_ks():
    state = make_state([0.5], [0.25], [FamilyTag.LOGNORMAL])
    rng = np.random.default_rng(1)
    draws = np.array([families.sample(state, rng.standard_normal(1))[0] for _ in range(4000)])
    # scipy lognorm: shape = sd of log, scale = exp(mean of log)
    assert stats.kstest(draws, stats.lognorm(s=0.5, scale=np.exp(0.5)).cdf).pvalue > 0.01


def test_log_q_matches_scipy_normal():
    state = make_state([1.0], [0.36], [FamilyTag.NORMAL])
    theta = np.array([1.7])
    out = families.log_q(state, theta)
    out = float(out.value if isinstance(out, ad.Node) else out)
    assert out == pytest.approx(stats.norm(1.0, 0.6).logpdf(1.7), abs=1e-10)


def test_log_q_matches_scipy_lognormal():
    state = make_state([0.3], [0.16], [FamilyTag.LOGNORMAL])
    theta = np.array([2.2])
    out = families.log_q(state, theta)
    out = float(out.value if isinstance(out, ad.Node) else out)
    ref = stats.lognorm(s=0.4, scale=np.exp(0.3)).logpdf(2.2)
    assert out == pytest.approx(ref, abs=1e-10)


def test_log_q_mixed_factorizes():
    state = make_state([0.0, 1.0], [1.0, 0.25], [FamilyTag.NORMAL, FamilyTag.LOGNORMAL])
    theta = np.array([0.4, 3.0])
    out = families.log_q(state, theta)
    out = float(out.value if isinstance(out, ad.Node) else out)
    ref = stats.norm(0, 1).logpdf(0.4) + stats.lognorm(s=0.5, scale=np.e).logpdf(3.0)
    assert out == pytest.approx(ref, abs=1e-10)


def test_log_q_rejects_negative_lognormal_coordinate():
    state = make_state([0.0], [1.0], [FamilyTag.LOGNORMAL])
    with pytest.raises(ValueError):
        families.log_q(state, np.array([-1.0]))


def test_log_q_gradient_in_theta_matches_fd():
    state = make_state([0.2, -0.1], [0.5, 0.3], [FamilyTag.NORMAL, FamilyTag.LOGNORMAL])
    theta0 = np.array([0.7, 1.9])
    assert ad.finite_diff_check(lambda th: families.log_q(state, th), theta0, h=1e-6) < 1e-5


@given(
    st.floats(min_value=-2, max_value=2),
    st.floats(min_value=0.05, max_value=3.0),
    st.floats(min_value=-2, max_value=2),
    st.sampled_from([FamilyTag.NORMAL, FamilyTag.LOGNORMAL]),
)
@settings(max_examples=60, deadline=None)
def test_reparam_jacobian_matches_fd(mu, var, z, tag):
    state = make_state([mu], [var], [tag])
    zv = np.array([z])
    theta = families.sample(state, zv)
    d_mu, d_raw = families.reparam_jacobian(state, zv, theta)
    h = 1e-6

    def t_of(lam):
        s = VariationalState(lam[:1], lam[1:], (tag,))
        return families.sample(s, zv)[0]

    lam0 = np.concatenate([state.mu, state.raw_scale])
    for k, expected in ((0, d_mu[0]), (1, d_raw[0])):
        e = np.zeros(2)
        e[k] = h
        fd = (t_of(lam0 + e) - t_of(lam0 - e)) / (2 * h)
        assert expected == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_reparam_sample_is_differentiable_in_lambda():
    # taping mu/raw_scale through the transform must agree with the analytic
    # jacobian used by the core loop
    state = make_state([0.4, 0.1], [0.3, 0.8], [FamilyTag.NORMAL, FamilyTag.LOGNORMAL])
    z = np.array([0.7, -0.2])
    theta = families.sample(state, z)
    d_mu, d_raw = families.reparam_jacobian(state, z, theta)

    def through_tape(lam):
        out = families.reparam_sample(lam[:2], lam[2:], state.lognormal_mask, z)
        return ad.vsum(out)

    _, g = ad.grad(through_tape, np.concatenate([state.mu, state.raw_scale]))
    assert np.allclose(g, np.concatenate([d_mu, d_raw]), rtol=1e-10)


def test_checkpoint_round_trip():
    state = make_state([0.5, -1.25], [0.7, 2.0], [FamilyTag.NORMAL, FamilyTag.LOGNORMAL])
    clone = VariationalState.from_text(state.to_text())
    assert np.array_equal(clone.mu, state.mu)
    assert np.array_equal(clone.raw_scale, state.raw_scale)
    assert clone.tags == state.tags
    assert clone.names == state.names


def test_state_validates_lengths():
    with pytest.raises(ValueError):
        VariationalState(np.zeros(2), np.zeros(3), (FamilyTag.NORMAL,) * 2)


def test_sample_rejects_wrong_length_z():
    state = make_state([0.0], [1.0], [FamilyTag.NORMAL])
    with pytest.raises(ValueError):
        families.sample(state, np.zeros(3))
