import math

import numpy as np
import pytest

from drcert.advscore import (
    BarronRobustScore,
    EntropyScore,
    HolderScore,
    HuberScore,
    LinearGain,
    PointwiseMax,
    SupConvLinear,
    TruncatedScore,
    activation_score,
    classification_head_score,
    compose,
    gamma_score,
    identity_score,
    linear_layer_score,
    margin_loss_score,
    mlp_feature_score,
    mlp_score,
    regression_head_score,
    score_to_curve,
)
from drcert.curves import is_concave
from drcert.errors import InvalidScoreError, UnboundedOutputError, UnknownActivationError
from drcert.nn import Layer, Mlp, forward, init_mlp, opnorm, vector_norm
from drcert.rates import CostConfig

SIGMOID = lambda x: 1.0 / (1.0 + math.exp(-x))


def dense_concavity(expr, hi=4.0, n=512):
    grid = np.linspace(0.0, hi, n)
    return is_concave(grid, expr.values(grid), tol=1e-10)


class TestActivationScores:
    def test_sigmoid_value_at_two(self):
        F = activation_score("sigmoid", width_n=1, r=math.inf)
        expected = SIGMOID(1.0) - SIGMOID(-1.0)
        assert expected == pytest.approx(0.46212, abs=5e-6)
        assert F.value(2.0) == pytest.approx(expected, rel=1e-12)

    def test_zero_at_zero(self):
        for kind in ("sigmoid", "tanh", "softmax"):
            for r in (1, 2, math.inf):
                assert activation_score(kind, 4, r).value(0.0) == 0.0

    def test_relu_is_identity(self):
        F = activation_score("relu", 8, 2)
        for t in (0.0, 0.5, 3.0):
            assert F.value(t) == t

    def test_softmax_shares_sigmoid_score(self):
        a = activation_score("softmax", 5, 2)
        b = activation_score("sigmoid", 5, 2)
        assert a.values([0.1, 1.0, 3.0]) == pytest.approx(b.values([0.1, 1.0, 3.0]))

    def test_unknown_activation(self):
        with pytest.raises(UnknownActivationError):
            activation_score("gelu")

    def test_width_scalings(self):
        t = 1.7
        n = 9
        s1 = activation_score("tanh", n, 1).value(t)
        s2 = activation_score("tanh", n, 2).value(t)
        si = activation_score("tanh", n, math.inf).value(t)
        assert s1 == pytest.approx(n * 2 * math.tanh(t / (2 * n)))
        assert s2 == pytest.approx(math.sqrt(n) * 2 * math.tanh(t / (2 * math.sqrt(n))))
        assert si == pytest.approx(2 * math.tanh(t / 2))

    def test_strictly_below_lipschitz_line(self):
        for kind in ("sigmoid", "tanh", "softmax"):
            for n, r in [(1, math.inf), (1, 2), (4, 2), (3, 1)]:
                F = activation_score(kind, n, r)
                for t in (0.25, 1.0, 4.0):
                    assert F.value(t) < F.lipschitz * t

    def test_concave(self):
        for kind in ("sigmoid", "tanh"):
            for n, r in [(1, math.inf), (6, 2), (3, 1)]:
                assert dense_concavity(activation_score(kind, n, r))

    def test_scalar_modulus_exact(self):
        # worst-case |s(x + t) - s(x)| of a scalar saturating activation sits
        # at the symmetric point x = -t/2
        for kind, sigma in (("sigmoid", SIGMOID), ("tanh", math.tanh)):
            F = activation_score(kind, 1, math.inf)
            for t in (0.3, 1.0, 2.5):
                xs = np.linspace(-10, 10, 20001)
                fx = np.array([sigma(x) for x in xs])
                fxt = np.array([sigma(x + t) for x in xs])
                assert F.value(t) == pytest.approx(float(np.max(fxt - fx)), abs=1e-7)


class TestLinearAndMargin:
    def test_identity_matrix(self):
        assert linear_layer_score(np.eye(3), 2).gain == pytest.approx(1.0)

    def test_example_matrix(self):
        W = [[1.0, -2.0], [3.0, 4.0]]
        assert linear_layer_score(W, math.inf).gain == 7.0
        assert linear_layer_score(W, 1).gain == 6.0

    def test_margin_inf_norm(self):
        F = margin_loss_score(math.inf, n_classes=10)
        assert F.gain == 2.0
        assert F.value(0.0) == 0.0

    def test_margin_one_norm_matches_explicit(self):
        m = 6
        J = np.zeros((m, m))
        for i in range(m):
            J[i, i] = -1.0
            J[i, 1 if i == 0 else 0] = 1.0
        assert margin_loss_score(1, m).gain == pytest.approx(opnorm(J, 1))
        assert margin_loss_score(1, m).gain == pytest.approx(m)


class TestCompose:
    def test_identity_neutral(self):
        F = activation_score("tanh", 2, 2)
        assert compose(identity_score(), F) is F
        assert compose(F, identity_score()) is F

    def test_linear_gains_multiply(self):
        g = compose(LinearGain(2.0), LinearGain(3.0))
        assert isinstance(g, LinearGain) and g.gain == 6.0
        assert g.value(0.5) == 3.0

    def test_sigmoid_after_gain(self):
        F = compose(activation_score("sigmoid", 1, math.inf), LinearGain(2.0))
        assert F.value(1.0) == pytest.approx(SIGMOID(1.0) - SIGMOID(-1.0), rel=1e-12)

    def test_composition_stays_concave(self):
        F = compose(activation_score("tanh", 3, 2), LinearGain(2.5))
        G = compose(activation_score("sigmoid", 2, 2), F)
        assert dense_concavity(G)


class TestClassificationHead:
    def test_kappa_inf_passthrough(self):
        F = LinearGain(3.0)
        assert classification_head_score(F, CostConfig(r=2, kappa=math.inf)) is F

    def test_finite_kappa_supconv(self):
        F = LinearGain(1.0)
        A = classification_head_score(F, CostConfig(r=2, kappa=2.0), M=1.0)
        # sup_tau (t - tau) + 0.5 tau = t, attained at tau = 0
        dense = np.linspace(0, 1, 100001)
        oracle = np.max((1.0 - dense) + 0.5 * dense)
        assert A.value(1.0) == pytest.approx(oracle, abs=1e-10)
        assert A.value(1.0) == pytest.approx(1.0)
        assert A.value(0.0) == 0.0

    def test_unbounded_output_rejected(self):
        with pytest.raises(UnboundedOutputError):
            classification_head_score(LinearGain(1.0), CostConfig(r=2, kappa=1.0))


class TestGammaScores:
    def test_huber(self):
        G = gamma_score("huber", c=3.0)
        assert G.value(2.0) == 6.0

    def test_truncated_values(self):
        G = gamma_score("truncated", c=1.0)
        assert G.value(1.0) == 0.5
        assert G.value(2.0) == 0.5
        assert dense_concavity(G)

    def test_holder(self):
        G = gamma_score("holder", c=2.0, alpha=0.5)
        assert G.value(4.0) == pytest.approx(4.0)
        assert gamma_score("holder", c=1.0, alpha=1.0).value(0.7) == pytest.approx(0.7)
        with pytest.raises(InvalidScoreError):
            gamma_score("holder", c=1.0, alpha=1.5)

    def test_entropy(self):
        G = gamma_score("entropy")
        assert G.value(0.0) == 0.0
        assert G.value(math.exp(-1)) == pytest.approx(math.exp(-1))
        assert G.value(5.0) == pytest.approx(math.exp(-1))
        assert G.value(0.1) == pytest.approx(-0.1 * math.log(0.1))

    def test_barron_matches_bruteforce_sup(self):
        for c in (1.0, 3.0):
            G = BarronRobustScore(c)
            a = 27.0 / 256.0
            gamma = lambda u: 0.5 * c * c * u * u / (a * c * c + u * u)
            for t in (0.05, 0.5, 1.0, 2.0):
                s = np.linspace(0, 20 * c + 10 * t, 400001)
                brute = float(np.max(gamma(s + t) - gamma(s)))
                assert G.value(t) == pytest.approx(brute, rel=1e-7)
                assert G.value(t) < c * t

    def test_barron_concave(self):
        assert dense_concavity(BarronRobustScore(1.0))


class TestRegressionHead:
    def test_identity_gamma_kappa_inf(self):
        F = LinearGain(2.0)
        A = regression_head_score(F, identity_score(), CostConfig(r=2))
        assert A == F

    def test_huber_of_gain(self):
        A = regression_head_score(LinearGain(2.0), gamma_score("huber", c=1.0),
                                  CostConfig(r=2))
        assert A.value(0.5) == pytest.approx(1.0)

    def test_pure_label_path(self):
        # zero feature gain, identity gamma, kappa=1: score follows the label
        A = regression_head_score(LinearGain(0.0), identity_score(),
                                  CostConfig(r=2, kappa=1.0))
        for t in (0.0, 0.3, 2.0):
            assert A.value(t) == pytest.approx(t, abs=1e-10)


class TestMlpScore:
    def test_single_relu_layer_plain_pairing(self):
        # loss <y, f(x)> on the raw network output: the score is the layer
        # composition itself
        W = np.array([[1.0, 2.0], [0.0, 3.0]])
        assert opnorm(W, math.inf) == 3.0
        net = Mlp((Layer(W, np.zeros(2), "relu"),), head="logsoftmax")
        F = mlp_feature_score(net, math.inf)
        A = classification_head_score(F, CostConfig(r=math.inf, kappa=math.inf))
        assert A.value(1.0) == pytest.approx(3.0)
        assert A.value(0.4) == pytest.approx(1.2)

    def test_log_softmax_head_doubles(self):
        W = np.array([[1.0, 2.0], [0.0, 3.0]])
        net = Mlp((Layer(W, np.zeros(2), "relu"),), head="logsoftmax")
        A = mlp_score(net, CostConfig(r=math.inf), head="classification")
        assert A.value(1.0) == pytest.approx(6.0)

    def test_zero_weights_zero_score(self):
        net = Mlp((Layer(np.zeros((2, 2)), np.ones(2), "relu"),))
        A = mlp_score(net, CostConfig(r=2), head="classification")
        assert A.value(1.0) == 0.0

    def test_tanh_net_below_loss_lipschitz_product(self):
        net = init_mlp([3, 5, 5, 2], act="tanh", seed=21)
        cost = CostConfig(r=2)
        A = mlp_score(net, cost, head="classification")
        prod = 1.0
        for layer in net.layers:
            prod *= opnorm(layer.W, 2)
        t = 1e-3
        loss_lip = 2.0 * prod  # log-softmax head factor
        assert A.value(t) < loss_lip * t
        assert A.value(t) > 0.0
        F = mlp_feature_score(net, 2)
        assert F.value(t) < prod * t

    def test_forward_difference_bounded_by_feature_score(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            net = init_mlp([4, 6, 3], act="tanh", seed=int(rng.integers(0, 2**31)))
            F = mlp_feature_score(net, 2)
            x = rng.normal(size=4)
            d = rng.normal(size=4)
            d *= rng.uniform(0, 0.5) / np.linalg.norm(d)
            lhs = vector_norm(forward(net, x + d) - forward(net, x), 2)
            assert lhs <= F.value(vector_norm(d, 2)) + 1e-12

    def test_score_concave_on_dense_grid(self):
        net = init_mlp([3, 4, 2], act="sigmoid", seed=5)
        A = mlp_score(net, CostConfig(r=2), head="classification")
        assert dense_concavity(A, hi=2.0)


class TestMisc:
    def test_pointwise_max(self):
        P = PointwiseMax((LinearGain(1.0), LinearGain(2.0)))
        assert P.value(3.0) == 6.0
        assert P.lipschitz == 2.0

    def test_supconv_concave_output(self):
        A = SupConvLinear(activation_score("tanh", 2, 2), 0.3)
        assert dense_concavity(A)

    def test_score_to_curve_roundtrip_values(self):
        A = activation_score("tanh", 1, math.inf)
        grid = np.linspace(0, 2, 17)
        c = score_to_curve(A, grid)
        assert np.allclose(c.v, A.values(grid))

    def test_every_node_zero_at_zero(self):
        nodes = [
            LinearGain(2.0), identity_score(),
            activation_score("sigmoid", 3, 2),
            HuberScore(1.0), TruncatedScore(1.0), BarronRobustScore(2.0),
            EntropyScore(), HolderScore(1.0, 0.5),
            SupConvLinear(LinearGain(1.0), 0.5),
            PointwiseMax((LinearGain(1.0),)),
            compose(activation_score("tanh", 1, 2), LinearGain(3.0)),
        ]
        for node in nodes:
            assert node.value(0.0) == 0.0
