import math

import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov

from twrqcd import _mlp
from twrqcd import param_kernels as pk
from twrqcd._accel import NUMBA_ENABLED
from twrqcd.errors import InvalidArgumentError

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def fd_grad(fam, theta, state, x, h=1e-5):
    g = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (fam.log_density(theta + e, state, x) - fam.log_density(theta - e, state, x)) / (2 * h)
    return g


def stable_linear_theta(fam, rng, scale=0.3):
    k = fam.obs_dim * fam.state_dim
    theta = rng.standard_normal(fam.param_dim)
    theta[:k] *= scale / np.sqrt(k)
    return theta


class TestClosedForms:
    def test_iid_identity(self, iid1):
        c = iid1.conditional(np.zeros(1), np.array([3.0]))
        assert c.mean[0] == 0.0 and c.std[0] == 1.0

    def test_linear_zero_map(self, linear2):
        c = linear2.conditional(np.zeros(linear2.param_dim), np.array([5.0, -2.0]))
        np.testing.assert_array_equal(c.mean, 0.0)

    def test_standard_normal_mode(self, iid1):
        assert iid1.log_density(np.zeros(1), np.zeros(1), np.zeros(1)) == pytest.approx(-HALF_LOG_2PI)

    def test_factorises_over_dimensions(self):
        fam = pk.iid_gaussian(2)
        assert fam.log_density(np.zeros(2), np.zeros(2), np.zeros(2)) == pytest.approx(-2 * HALF_LOG_2PI)

    def test_iid_gradient(self, iid1):
        assert iid1.grad_log_density(np.zeros(1), np.zeros(1), np.ones(1))[0] == pytest.approx(1.0)

    def test_gradient_vanishes_at_mode(self, linear2, rng):
        theta = rng.standard_normal(linear2.param_dim)
        state = rng.standard_normal(2)
        mode = linear2.conditional(theta, state).mean
        np.testing.assert_allclose(linear2.grad_log_density(theta, state, mode), 0.0, atol=1e-12)

    def test_kl_closed_form(self, iid1):
        assert iid1.kl_conditional(np.zeros(1), np.ones(1), np.zeros(1)) == pytest.approx(0.5)
        assert iid1.kl_conditional(np.ones(1), np.ones(1), np.zeros(1)) == 0.0


class TestMlp:
    GOLD_MEAN = [0.23826088670522927, -0.04783788277888183, -0.18232522771778414, 0.00514412661074994]
    GOLD_STD = [0.6261398991796427, 0.7222145662277936, 0.7647119268727464, 0.7196197211553703]

    def test_golden_values_seed7(self, mlp4):
        m, s = mlp4.mean_std(np.zeros(4), np.zeros((1, 4)))
        np.testing.assert_allclose(m[0], self.GOLD_MEAN, rtol=1e-12)
        np.testing.assert_allclose(s[0], self.GOLD_STD, rtol=1e-12)

    def test_density_integrates_to_one(self, rng):
        fam = pk.mlp_gaussian(dim=1, param_dim=3, seed=4)
        theta, state = rng.standard_normal(3), rng.standard_normal(1)
        c = fam.conditional(theta, state)
        grid = np.linspace(c.mean[0] - 12 * c.std[0], c.mean[0] + 12 * c.std[0], 20001)
        dens = np.exp(fam.loglik(theta, np.repeat(state[None], grid.size, 0), grid[:, None]))
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)

    def test_std_respects_floor(self, rng):
        fam = pk.mlp_gaussian(dim=2, seed=1, varsigma_min=0.5)
        _, s = fam.mean_std(rng.standard_normal(fam.param_dim) * 5, rng.standard_normal((100, 2)))
        assert np.all(s >= 0.5)

    @pytest.mark.skipif(not NUMBA_ENABLED, reason="numba backend disabled")
    def test_numba_matches_numpy(self, mlp4, rng):
        theta = rng.standard_normal(4)
        states, xs = rng.standard_normal((64, 4)), rng.standard_normal((64, 4))
        a = _mlp._nb_loglik_grad_call(mlp4._mean_net, mlp4._std_net, theta, states, xs, mlp4.varsigma_min, True)
        b = _mlp._np_loglik_grad(mlp4._mean_net, mlp4._std_net, theta, states, xs, mlp4.varsigma_min, True)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(a[1], b[1], rtol=1e-8, atol=1e-10)

    def test_seed_changes_network(self):
        a, b = pk.mlp_gaussian(dim=2, seed=1), pk.mlp_gaussian(dim=2, seed=2)
        x = np.zeros((1, 2))
        assert not np.allclose(a.mean_std(np.zeros(2), x)[0], b.mean_std(np.zeros(2), x)[0])
        assert a.with_seed(2).to_dict() == b.to_dict()


class TestGradients:
    def test_finite_differences(self, family, rng):
        for _ in range(10):
            theta = rng.standard_normal(family.param_dim)
            state = rng.standard_normal(family.state_dim)
            x = family.sample(theta, state, rng)
            np.testing.assert_allclose(family.grad_log_density(theta, state, x), fd_grad(family, theta, state, x),
                                       rtol=1e-4, atol=1e-6)

    def test_batched_matches_pointwise(self, family, rng):
        theta = rng.standard_normal(family.param_dim)
        states = rng.standard_normal((5, family.state_dim))
        xs = rng.standard_normal((5, family.obs_dim))
        ll, g = family.loglik_grad(theta, states, xs)
        for i in range(5):
            assert ll[i] == pytest.approx(family.log_density(theta, states[i], xs[i]), rel=1e-12)
            np.testing.assert_allclose(g[i], family.grad_log_density(theta, states[i], xs[i]), rtol=1e-12)


class TestSampling:
    def test_degenerate_noise(self):
        fam = pk.iid_gaussian(1, sigma=1e-6)
        x = fam.sample(np.array([2.0]), np.zeros(1), np.random.default_rng(0))
        assert abs(x[0] - 2.0) < 6e-6

    def test_deterministic(self, mlp4):
        s = np.zeros(4)
        a = mlp4.sample(np.ones(4), s, np.random.default_rng(3))
        b = mlp4.sample(np.ones(4), s, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_law_of_large_numbers(self, iid1):
        rng = np.random.default_rng(9)
        xs = np.array([iid1.sample(np.zeros(1), np.zeros(1), rng)[0] for _ in range(100_000)])
        assert abs(xs.mean()) < 0.02 and abs(xs.std() - 1.0) < 0.02

    def test_warmup_zero_returns_start(self, linear2):
        x0 = np.array([1.0, -1.0])
        np.testing.assert_array_equal(linear2.stationary_warmup(np.zeros(6), x0, 0, np.random.default_rng(0)), x0)

    def test_linear_stationary_variance(self, linear2):
        rng = np.random.default_rng(5)
        theta = stable_linear_theta(linear2, rng, 0.8)
        a, b = linear2._linear_parts(theta)
        cov = solve_discrete_lyapunov(a, linear2.sigma**2 * np.eye(2))
        ends = np.array([linear2.stationary_warmup(theta, np.zeros(2), 60, rng) for _ in range(4000)])
        np.testing.assert_allclose(ends.var(axis=0), np.diag(cov), rtol=0.05)


class TestKlRate:
    def test_iid_rate_is_conditional(self, iid1, rng):
        base = rng.standard_normal((17, 1))
        assert iid1.kl_rate_estimate(np.zeros(1), np.array([0.7]), base) == pytest.approx(0.245)

    def test_equal_parameters(self, mlp4, rng):
        theta = rng.standard_normal(4)
        assert mlp4.kl_rate_estimate(theta, theta, rng.standard_normal((10, 4))) == 0.0

    def test_nonnegative(self, mlp4, rng):
        for _ in range(20):
            k = mlp4.kl_conditional(rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(4))
            assert k >= 0.0

    def test_linear_matches_analytic_stationary_rate(self, linear2):
        rng = np.random.default_rng(11)
        ta, tb = stable_linear_theta(linear2, rng), stable_linear_theta(linear2, rng)
        aa, ba = linear2._linear_parts(ta)
        ab, bb = linear2._linear_parts(tb)
        mean = np.linalg.solve(np.eye(2) - aa, ba)
        cov = solve_discrete_lyapunov(aa, np.eye(2))
        da, db = aa - ab, ba - bb
        exact = (np.sum((da @ mean + db) ** 2) + np.trace(da @ cov @ da.T)) / 2.0
        base = linear2.stationary_states(ta, 100_000, rng)
        assert linear2.kl_rate_estimate(ta, tb, base) == pytest.approx(exact, rel=0.05)


class TestSerialisation:
    @pytest.mark.parametrize("make", [lambda: pk.iid_gaussian(3), lambda: pk.linear_gaussian_ar(2, order=2),
                                      lambda: pk.mlp_gaussian(dim=3, seed=5, widths=(8,))])
    def test_json_round_trip(self, make):
        fam = make()
        back = pk.KernelFamily.from_json(fam.to_json())
        assert back == fam
        rng = np.random.default_rng(0)
        theta, states = rng.standard_normal(fam.param_dim), rng.standard_normal((3, fam.state_dim))
        np.testing.assert_array_equal(fam.mean_std(theta, states)[0], back.mean_std(theta, states)[0])

    @pytest.mark.parametrize("kw", [dict(kind="nope", obs_dim=1, param_dim=1),
                                    dict(kind=pk.IID, obs_dim=2, param_dim=3),
                                    dict(kind=pk.LINEAR, obs_dim=2, param_dim=5),
                                    dict(kind=pk.MLP, obs_dim=2, param_dim=2, widths=())])
    def test_invalid_construction(self, kw):
        with pytest.raises(InvalidArgumentError):
            pk.KernelFamily(**kw)

    def test_theta_shape_checked(self, mlp4):
        with pytest.raises(InvalidArgumentError):
            mlp4.loglik(np.zeros(3), np.zeros((1, 4)), np.zeros((1, 4)))
        with pytest.raises(InvalidArgumentError):
            mlp4.check_theta(np.array([np.nan, 0, 0, 0]))
