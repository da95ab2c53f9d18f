#include <doctest.h>

#include <cmath>

#include "biasguard/errors.hpp"
#include "biasguard/fdcheck.hpp"
#include "biasguard/losses.hpp"
#include "biasguard/metric.hpp"
#include "biasguard/rng.hpp"

using namespace biasguard;

TEST_CASE("vae loss hand values") {
    // prior matches posterior, perfect reconstruction
    Tensor zero = Tensor::row({0.0});
    CHECK(vae_loss(zero, zero, zero, zero) == 0.0);
    // closed-form Gaussian KL: mu=1, logvar=0 -> 0.5
    CHECK(vae_loss(Tensor::row({1.0}), zero, zero, zero) == doctest::Approx(0.5));
    // reconstruction only: residual 2 -> 0.5 * 4
    CHECK(vae_loss(zero, zero, Tensor::row({2.0}), Tensor::row({0.0})) ==
          doctest::Approx(2.0));
}

TEST_CASE("vae loss is nonnegative for random inputs") {
    RandomStream rng(15);
    for (int i = 0; i < 50; ++i) {
        Tensor mu = rng.normal_tensor({2, 3});
        Tensor logvar = rng.normal_tensor({2, 3});
        Tensor x = rng.normal_tensor({2, 4});
        Tensor xr = rng.normal_tensor({2, 4});
        CHECK(vae_loss(mu, logvar, x, xr) >= 0.0);
    }
}

TEST_CASE("wgan losses hand values") {
    // indistinguishable critic
    WganLosses w1 = wgan_losses(Tensor::row({3.0, 3.0}), Tensor::row({3.0, 3.0}), 0.0, 10.0);
    CHECK(w1.critic_loss == 0.0);
    // real 1, fake 0
    WganLosses w2 = wgan_losses(Tensor::row({1.0}), Tensor::row({0.0}), 0.0, 10.0);
    CHECK(w2.critic_loss == -1.0);
    CHECK(w2.generator_loss == 0.0);
    // penalty only
    WganLosses w3 = wgan_losses(Tensor::row({2.0}), Tensor::row({2.0}), 0.5, 10.0);
    CHECK(w3.critic_loss == doctest::Approx(5.0));
}

TEST_CASE("gradient penalty hand cases") {
    RandomStream rng(7);
    const std::size_t n = 3;

    SUBCASE("unit-gradient critic gives zero penalty") {
        // critic(v) = sum over the single coordinate: gradient norm 1
        Tape t;
        NodeId x = t.input(rng.normal_tensor({n, 1}));
        NodeId xf = t.input(rng.normal_tensor({n, 1}));
        NodeId alpha = t.constant(rng.uniform_tensor({n, 1}));
        CriticFn critic = [](Tape& tt, NodeId v) { return tt.rowsum(v); };
        NodeId gp = gradient_penalty_node(t, critic, x, xf, alpha);
        CHECK(t.scalar_value(gp) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("critic 2*v has penalty (2-1)^2") {
        Tape t;
        NodeId x = t.input(rng.normal_tensor({n, 1}));
        NodeId xf = t.input(rng.normal_tensor({n, 1}));
        NodeId alpha = t.constant(rng.uniform_tensor({n, 1}));
        CriticFn critic = [](Tape& tt, NodeId v) { return tt.affine(v, 2.0, 0.0); };
        NodeId gp = gradient_penalty_node(t, critic, x, xf, alpha);
        CHECK(t.scalar_value(gp) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant critic has penalty 1") {
        Tape t;
        NodeId x = t.input(rng.normal_tensor({n, 2}));
        NodeId xf = t.input(rng.normal_tensor({n, 2}));
        NodeId alpha = t.constant(rng.uniform_tensor({n, 1}));
        CriticFn critic = [](Tape& tt, NodeId v) {
            return tt.add_row(tt.matmul(v, tt.constant(Tensor::zeros({2, 1}))),
                              tt.constant(Tensor::row({5.0})));
        };
        NodeId gp = gradient_penalty_node(t, critic, x, xf, alpha);
        CHECK(t.scalar_value(gp) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("penalty is nonnegative for a random MLP critic") {
        for (int trial = 0; trial < 20; ++trial) {
            Tape t;
            Tensor w1 = rng.normal_tensor({4, 6}), b1 = rng.normal_tensor({1, 6});
            Tensor w2 = rng.normal_tensor({6, 1}), b2 = rng.normal_tensor({1, 1});
            NodeId w1n = t.constant(w1), b1n = t.constant(b1);
            NodeId w2n = t.constant(w2), b2n = t.constant(b2);
            CriticFn critic = [&](Tape& tt, NodeId v) {
                return tt.add_row(
                    tt.matmul(tt.relu(tt.add_row(tt.matmul(v, w1n), b1n)), w2n), b2n);
            };
            NodeId x = t.input(rng.normal_tensor({n, 4}));
            NodeId xf = t.input(rng.normal_tensor({n, 4}));
            NodeId alpha = t.constant(rng.uniform_tensor({n, 1}));
            CHECK(t.scalar_value(gradient_penalty_node(t, critic, x, xf, alpha)) >= 0.0);
        }
    }
}

TEST_CASE("gradient penalty differentiates through the critic parameters") {
    // the penalty depends on the critic gradient, so its parameter gradient
    // needs second-order backprop; verify against finite differences
    RandomStream rng(33);
    const std::size_t n = 3, d = 4, h = 5;
    Tensor x = rng.normal_tensor({n, d});
    Tensor xf = rng.normal_tensor({n, d});
    Tensor alpha = rng.uniform_tensor({n, 1});
    std::vector<Tensor> inputs = {rng.normal_tensor({d, h}), rng.normal_tensor({1, h}),
                                  rng.normal_tensor({h, 1}), rng.normal_tensor({1, 1})};
    auto build = [&](Tape& t, const std::vector<NodeId>& leaves) {
        CriticFn critic = [&](Tape& tt, NodeId v) {
            return tt.add_row(
                tt.matmul(tt.softplus(tt.add_row(tt.matmul(v, leaves[0]), leaves[1])),
                          leaves[2]),
                leaves[3]);
        };
        return gradient_penalty_node(t, critic, t.constant(x), t.constant(xf),
                                     t.constant(alpha));
    };
    CHECK(finite_difference_check(build, inputs, 1e-5) < 1e-4);
}

TEST_CASE("mse loss hand values") {
    CHECK(mse_loss(Tensor::row({1.0, 2.0}), Tensor::row({1.0, 2.0})) == 0.0);
    CHECK(mse_loss(Tensor::row({1.0, 1.0}), Tensor::row({0.0, 0.0})) == 1.0);
    CHECK(mse_loss(Tensor::row({3.0, 0.0}), Tensor::row({0.0, 0.0})) == doctest::Approx(4.5));
}

TEST_CASE("mahalanobis loss hand values") {
    MetricMatrix id = identity_metric(1);

    SUBCASE("unit cross-branch distances with two samples") {
        Tensor x = Tensor::matrix(2, 1, {0.0, 0.0});
        Tensor y = Tensor::matrix(2, 1, {1.0, 1.0});
        CHECK(mahalanobis_loss(x, y, id) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("degenerate configuration clamps at the log floor") {
        Tensor x = Tensor::matrix(2, 1, {3.0, 3.0});
        CHECK(mahalanobis_loss(x, x, id) ==
              doctest::Approx(-std::log(1e-8)).epsilon(1e-12));
    }
    SUBCASE("hand-evaluated sum of 8") {
        Tensor x = Tensor::matrix(2, 1, {0.0, 0.0});
        Tensor y = Tensor::matrix(2, 1, {2.0, 2.0});
        CHECK(mahalanobis_loss(x, y, id) == doctest::Approx(-std::log(8.0)).epsilon(1e-12));
    }
    SUBCASE("fewer than two samples per branch is a contract violation") {
        Tensor x = Tensor::matrix(1, 1, {0.0});
        CHECK_THROWS_AS(mahalanobis_loss(x, x, id), ContractViolation);
    }
}

TEST_CASE("mahalanobis loss monotonicity under isolated perturbations") {
    MetricMatrix id = identity_metric(2);

    // growing every cross-branch distance with within-branch ones fixed
    Tensor x = Tensor::matrix(2, 2, {0.0, 0.0, 0.0, 0.0});
    double prev = mahalanobis_loss(x, Tensor::matrix(2, 2, {1.0, 0.0, 1.0, 0.0}), id);
    for (double r : {2.0, 3.0, 5.0}) {
        double cur = mahalanobis_loss(x, Tensor::matrix(2, 2, {r, 0.0, r, 0.0}), id);
        CHECK(cur < prev);
        prev = cur;
    }

    // growing one within-branch distance with all cross distances fixed:
    // x2 moves on a circle around y1 while x1, y1, y2 stay put
    Tensor y = Tensor::matrix(2, 2, {0.0, 0.0, 5.0, 5.0});
    auto loss_at_angle = [&](double theta) {
        const double r = 2.0;
        Tensor xs = Tensor::matrix(2, 2, {3.0, 0.0, r * std::cos(theta), r * std::sin(theta)});
        return mahalanobis_loss(xs, y, id);
    };
    // theta = 0 puts x2 at (2,0), distance 1 from x1; theta = pi puts it at
    // (-2,0), distance 25; cross terms are unchanged by construction
    CHECK(loss_at_angle(3.14159265358979) > loss_at_angle(0.0));
}

TEST_CASE("total loss weighting") {
    LossWeights w;
    LossBreakdown b = total_loss(1.0, 1.0, 1.0, 1.0, w);
    CHECK(b.total == 4.0);

    LossWeights wm0 = w;
    wm0.lambda_m = 0.0;
    CHECK(total_loss(1.0, 1.0, 1.0, 7.0, wm0).total ==
          total_loss(1.0, 1.0, 1.0, -3.0, wm0).total);

    LossWeights wh = w;
    wh.lambda_vae = 0.5;
    CHECK(total_loss(2.0, 2.0, 2.0, 2.0, wh).total == doctest::Approx(7.0));
}

TEST_CASE("total loss is linear in each weight") {
    RandomStream rng(44);
    const double lw = rng.normal(), lv = rng.normal(), lm = rng.normal(), lmm = rng.normal();
    for (int which = 0; which < 3; ++which) {
        double at[3];
        int slot = 0;
        for (double v : {0.5, 1.0, 1.5}) {
            LossWeights w;
            if (which == 0) w.lambda_vae = v;
            if (which == 1) w.lambda_mse = v;
            if (which == 2) w.lambda_m = v;
            at[slot++] = total_loss(lw, lv, lm, lmm, w).total;
        }
        // equal spacing in the weight produces equal spacing in the total
        CHECK(at[1] - at[0] == doctest::Approx(at[2] - at[1]).epsilon(1e-10));
    }
}
