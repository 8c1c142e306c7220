import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regnet import autodiff as ad
from regnet.exceptions import ContractError, DegenerateBatchError
from regnet.objective import BatchStats, TargetSpec, batch_stats, combined_loss, kl_to_target

from oracles import central_diff, max_rel_err, mc_kl


def stats(mean, var, count=10):
    return BatchStats(ad.Tensor(np.asarray(mean, float)), ad.Tensor(np.asarray(var, float)), count)


def moment_matched(mu, sigma, d=3):
    """Two rows per column at mu +- sigma: mean mu, population variance sigma^2."""
    return np.array([[mu + sigma] * d, [mu - sigma] * d])


# batch_stats


def test_stats_zeros():
    s = batch_stats(np.zeros((2, 2)))
    assert s.mean.data.tolist() == [0, 0] and s.var.data.tolist() == [0, 0] and s.count == 2


def test_stats_example():
    s = batch_stats(np.array([[1.0, 0], [3, 0]]))
    assert s.mean.data.tolist() == [2, 0] and s.var.data.tolist() == [1, 0]


def test_stats_mean_gradient():
    Z = ad.Tensor(np.random.default_rng(0).normal(size=(4, 3)), requires_grad=True)
    ad.backward(ad.sum(batch_stats(Z).mean * np.array([1.0, 0, 0])))
    expected = np.zeros((4, 3))
    expected[:, 0] = 0.25
    np.testing.assert_array_equal(Z.grad, expected)


def test_stats_degenerate():
    with pytest.raises(DegenerateBatchError):
        batch_stats(np.ones((1, 3)))


# kl_to_target


@pytest.mark.parametrize("d", [1, 3, 7])
def test_kl_zero_when_matched(d):
    assert kl_to_target(stats([2.5] * d, [4.0] * d), 2.5, 2.0).item() == 0.0


def test_kl_d1_example():
    assert kl_to_target(stats([1.0], [1.0]), 0.0, 1.0).item() == pytest.approx(0.5, abs=1e-15)


def test_kl_d3_example():
    val = kl_to_target(stats([40.0] * 3, [2.0] * 3), 40.0, 1.0).item()
    assert val == pytest.approx(0.5 * (3 - 3 * math.log(2)), abs=1e-14)
    assert abs(val - 0.46014) < 5e-4  # the quoted value is rounded


@pytest.mark.parametrize(
    "mean,var,mu,sigma",
    [([1.0], [1.0], 0.0, 1.0), ([40.0] * 3, [2.0] * 3, 40.0, 1.0), ([0.3, -1.2], [0.5, 2.0], 0.5, 1.5)],
)
def test_kl_monte_carlo(mean, var, mu, sigma):
    mc = mc_kl(mean, var, mu, sigma, 10**6, np.random.default_rng(0))
    closed = kl_to_target(stats(mean, var), mu, sigma).item()
    assert abs(closed - mc) <= 0.02 * closed


def test_kl_uses_squared_norm():
    # mean offset 2 in one dim: squared-norm term contributes 4/2
    assert kl_to_target(stats([2.0], [1.0]), 0.0, 1.0).item() == pytest.approx(2.0)


def test_kl_variance_floor():
    v = kl_to_target(stats([0.0], [0.0]), 0.0, 1.0).item()
    assert v == pytest.approx(0.5 * (-math.log(1e-6) - 1 + 1e-6))


def test_kl_bad_sigma():
    with pytest.raises(ContractError):
        kl_to_target(stats([0.0], [1.0]), 0.0, 0.0)


def test_kl_nonnegative_and_strict():
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = int(rng.integers(1, 6))
        mean, var = rng.normal(size=d) * 3, rng.uniform(0.01, 5, size=d)
        mu, sigma = rng.normal() * 3, rng.uniform(0.2, 3)
        kl = kl_to_target(stats(mean, var), mu, sigma).item()
        if np.max(np.abs(mean - mu)) > 1e-6 or np.max(np.abs(var - sigma**2)) > 1e-6:
            assert kl > 0
        else:
            assert kl >= 0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 6))
def test_kl_invariant_under_dimension_permutation(seed, d):
    rng = np.random.default_rng(seed)
    mean, var = rng.normal(size=d), rng.uniform(0.1, 3, size=d)
    perm = rng.permutation(d)
    a = kl_to_target(stats(mean, var), 0.7, 1.3).item()
    b = kl_to_target(stats(mean[perm], var[perm]), 0.7, 1.3).item()
    assert a == pytest.approx(b, rel=1e-12)


# combined_loss


def test_combined_zero_at_targets():
    assert combined_loss(moment_matched(0, 1), moment_matched(40, 1), TargetSpec()).item() == 0.0


def test_combined_swapped_classes():
    loss = combined_loss(moment_matched(40, 1), moment_matched(0, 1), TargetSpec()).item()
    # variances still match; only the mean terms remain: 2 classes * 1/2 * 1/2 * 3 * 40^2
    assert loss == pytest.approx(2400.0, rel=1e-12)


def test_combined_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    Za, Zu = rng.normal(size=(6, 3)), rng.normal(40, 1, size=(5, 3))
    t = ad.Tensor(Za, requires_grad=True)
    ad.backward(combined_loss(t, ad.Tensor(Zu), TargetSpec()))
    num = central_diff(lambda: combined_loss(Za, Zu, TargetSpec()).item(), Za)
    assert max_rel_err(t.grad, num) < 1e-4


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_combined_invariant_under_row_permutation(seed):
    rng = np.random.default_rng(seed)
    Za, Zu = rng.normal(size=(5, 3)), rng.normal(30, 2, size=(7, 3))
    a = combined_loss(Za, Zu, TargetSpec()).item()
    b = combined_loss(Za[rng.permutation(5)], Zu[rng.permutation(7)], TargetSpec()).item()
    assert a == pytest.approx(b, rel=1e-12)
    assert a >= 0


@pytest.mark.parametrize("which", ["authorized", "unauthorized"])
def test_combined_names_degenerate_class(which):
    ok, bad = np.zeros((3, 3)), np.zeros((1, 3))
    args = (bad, ok) if which == "authorized" else (ok, bad)
    with pytest.raises(DegenerateBatchError, match=f"^{which}"):
        combined_loss(*args, TargetSpec())


@pytest.mark.parametrize(
    "kwargs", [dict(latent_dim=0), dict(mu_auth=40.0, mu_unauth=0.0), dict(sigma_auth=0.0), dict(sigma_unauth=-1.0)]
)
def test_target_spec_invariants(kwargs):
    with pytest.raises(ContractError):
        TargetSpec(**kwargs)


def test_target_defaults():
    t = TargetSpec()
    assert (t.latent_dim, t.mu_auth, t.sigma_auth, t.mu_unauth, t.sigma_unauth) == (3, 0.0, 1.0, 40.0, 1.0)
