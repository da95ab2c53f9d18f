#include <doctest.h>

#include <cmath>
#include <vector>

#include "biasguard/errors.hpp"
#include "biasguard/fdcheck.hpp"
#include "biasguard/model.hpp"
#include "biasguard/rng.hpp"

using namespace biasguard;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.d_visual = 5;
    c.k_semantic = 3;
    c.d_latent = 3;
    c.k_proj = 4;
    return c;
}

void zero_all(ModelParameters& p) {
    for (auto& [name, t] : p)
        for (auto& v : t.data()) v = 0.0;
}

// independent dense-layer oracle: y = relu?(x W + b), all plain loops
std::vector<double> oracle_linear(const std::vector<double>& x, const Tensor& w,
                                  const Tensor& b, bool relu_after) {
    std::vector<double> y(w.cols(), 0.0);
    for (std::size_t j = 0; j < w.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.rows(); ++i) acc += x[i] * w(i, j);
        acc += b[j];
        y[j] = relu_after && acc < 0.0 ? 0.0 : acc;
    }
    return y;
}

}  // namespace

TEST_CASE("atf fusion") {
    ModelConfig cfg = tiny_config();
    RandomStream rng(1);
    ModelParameters p = init_parameters(cfg, rng);
    Tensor xbar = rng.normal_tensor({1, 5});
    Tensor sbar = rng.normal_tensor({1, 3});

    SUBCASE("forced unit scale and zero offset is the identity") {
        zero_all(p);
        // softplus(b) == 1  =>  b = log(e - 1)
        p["fusion.alpha.l2.b"][0] = std::log(std::exp(1.0) - 1.0);
        Tensor out = atf_fuse(cfg, p, xbar, sbar);
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(out[j] == doctest::Approx(xbar[j]).epsilon(1e-12));
    }

    SUBCASE("vanishing scale leaves only the offset") {
        zero_all(p);
        p["fusion.alpha.l2.b"][0] = -200.0;  // softplus(-200) ~ 0
        for (std::size_t j = 0; j < 5; ++j)
            p["fusion.theta.l2.b"][j] = static_cast<double>(j) - 2.0;
        Tensor out = atf_fuse(cfg, p, xbar, sbar);
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(out[j] == doctest::Approx(static_cast<double>(j) - 2.0).epsilon(1e-12));
    }

    SUBCASE("matches a hand-composed forward pass") {
        std::vector<double> s(sbar.data());
        auto h_a = oracle_linear(s, p.at("fusion.alpha.l1.w"), p.at("fusion.alpha.l1.b"), true);
        auto a_out = oracle_linear(h_a, p.at("fusion.alpha.l2.w"), p.at("fusion.alpha.l2.b"),
                                   false);
        const double alpha = a_out[0] > 0.0 ? a_out[0] + std::log1p(std::exp(-a_out[0]))
                                            : std::log1p(std::exp(a_out[0]));
        auto h_t = oracle_linear(s, p.at("fusion.theta.l1.w"), p.at("fusion.theta.l1.b"), true);
        auto theta = oracle_linear(h_t, p.at("fusion.theta.l2.w"), p.at("fusion.theta.l2.b"),
                                   false);
        Tensor out = atf_fuse(cfg, p, xbar, sbar);
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(out[j] == doctest::Approx(alpha * xbar[j] + theta[j]).epsilon(1e-12));
    }

    SUBCASE("concat fusion preserves the visual dimension") {
        ModelConfig cc = cfg;
        cc.fusion_mode = FusionMode::Concat;
        RandomStream rng2(2);
        ModelParameters pc = init_parameters(cc, rng2);
        Tensor out = atf_fuse(cc, pc, xbar, sbar);
        CHECK(out.rows() == 1);
        CHECK(out.cols() == cfg.d_visual);
    }

    SUBCASE("dimension mismatch is a contract violation") {
        CHECK_THROWS_AS(atf_fuse(cfg, p, rng.normal_tensor({1, 4}), sbar), ContractViolation);
    }
}

TEST_CASE("encoder reparameterization") {
    ModelConfig cfg = tiny_config();
    RandomStream rng(5);
    ModelParameters p = init_parameters(cfg, rng);
    Tensor x = rng.normal_tensor({2, 5});

    SUBCASE("zero noise gives z = mu") {
        LatentSample s = encode(cfg, p, x, Tensor::zeros({2, 3}));
        CHECK(s.z == s.mu);
    }
    SUBCASE("zero logvar gives z = mu + noise") {
        for (auto& v : p["enc.logvar.w"].data()) v = 0.0;
        for (auto& v : p["enc.logvar.b"].data()) v = 0.0;
        Tensor noise = rng.normal_tensor({2, 3});
        LatentSample s = encode(cfg, p, x, noise);
        for (std::size_t i = 0; i < s.z.numel(); ++i)
            CHECK(s.z[i] == doctest::Approx(s.mu[i] + noise[i]).epsilon(1e-15));
    }
    SUBCASE("moments do not depend on the noise draw") {
        LatentSample s1 = encode(cfg, p, x, rng.normal_tensor({2, 3}));
        LatentSample s2 = encode(cfg, p, x, rng.normal_tensor({2, 3}));
        CHECK(s1.mu == s2.mu);
        CHECK(s1.logvar == s2.logvar);
        CHECK(!(s1.z == s2.z));
    }
}

TEST_CASE("generator") {
    ModelConfig cfg = tiny_config();
    RandomStream rng(8);
    ModelParameters p = init_parameters(cfg, rng);

    SUBCASE("zero weights reproduce the output bias") {
        zero_all(p);
        for (std::size_t j = 0; j < 5; ++j) p["gen.l2.b"][j] = 0.5 * static_cast<double>(j);
        Tensor out = generate(cfg, p, rng.normal_tensor({1, 3}));
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(out[j] == 0.5 * static_cast<double>(j));
    }
    SUBCASE("fixed seed reproduces the output") {
        Tensor z = RandomStream(4).normal_tensor({1, 3});
        Tensor a = generate(cfg, p, z);
        Tensor b = generate(cfg, p, RandomStream(4).normal_tensor({1, 3}));
        CHECK(a == b);
    }
    SUBCASE("gradient of sum(G(z)) with respect to z matches finite differences") {
        std::vector<Tensor> inputs = {rng.normal_tensor({1, 3})};
        auto build = [&](Tape& t, const std::vector<NodeId>& leaves) {
            ParamNodes nodes;
            for (const auto& [name, tensor] : p) nodes.id[name] = t.constant(tensor);
            return t.sum(generate_node(t, cfg, nodes, leaves[0]));
        };
        CHECK(finite_difference_check(build, inputs, 1e-5) < 1e-4);
    }
}

TEST_CASE("discriminators") {
    ModelConfig cfg = tiny_config();
    RandomStream rng(12);
    ModelParameters p = init_parameters(cfg, rng);
    Tensor v = rng.normal_tensor({1, 5});

    SUBCASE("identical inputs give identical outputs") {
        DiscAOut a1 = discriminate_a(cfg, p, v);
        DiscAOut a2 = discriminate_a(cfg, p, v);
        CHECK(a1.projection == a2.projection);
        CHECK(a1.critic == a2.critic);
        CHECK(discriminate_b(cfg, p, v) == discriminate_b(cfg, p, v));
    }
    SUBCASE("projection dimension follows the config") {
        for (std::size_t k_proj : {24u, 900u}) {
            ModelConfig big = cfg;
            big.k_proj = k_proj;
            RandomStream r2(3);
            ModelParameters pb = init_parameters(big, r2);
            CHECK(discriminate_a(big, pb, v).projection.numel() == k_proj);
            CHECK(discriminate_b(big, pb, v).numel() == k_proj);
        }
    }
    SUBCASE("zero trunk reproduces the projection-head bias") {
        zero_all(p);
        for (std::size_t j = 0; j < 4; ++j) p["disc_a.proj.b"][j] = static_cast<double>(j);
        DiscAOut out = discriminate_a(cfg, p, v);
        for (std::size_t j = 0; j < 4; ++j) CHECK(out.projection[j] == static_cast<double>(j));
    }
    SUBCASE("branch B matches a hand-composed forward pass") {
        std::vector<double> x(v.data());
        auto h = oracle_linear(x, p.at("disc_b.l1.w"), p.at("disc_b.l1.b"), true);
        auto y = oracle_linear(h, p.at("disc_b.l2.w"), p.at("disc_b.l2.b"), false);
        Tensor out = discriminate_b(cfg, p, v);
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(out[j] == doctest::Approx(y[j]).epsilon(1e-12));
    }
}

TEST_CASE("plain forwards and tape builders produce identical bytes") {
    ModelConfig cfg = tiny_config();
    RandomStream rng(19);
    ModelParameters p = init_parameters(cfg, rng);
    Tensor xbar = rng.normal_tensor({3, 5});
    Tensor sbar = rng.normal_tensor({3, 3});
    Tensor noise = rng.normal_tensor({3, 3});

    Tensor fused = atf_fuse(cfg, p, xbar, sbar);
    LatentSample lat = encode(cfg, p, fused, noise);
    Tensor gen = generate(cfg, p, lat.z);
    DiscAOut da = discriminate_a(cfg, p, gen);
    Tensor db = discriminate_b(cfg, p, xbar);

    Tape t;
    ParamNodes nodes = stage_parameters(t, p);
    NodeId fused_n = atf_fuse_node(t, cfg, nodes, t.constant(xbar), t.constant(sbar));
    LatentNodes lat_n = encode_node(t, cfg, nodes, fused_n, t.constant(noise));
    NodeId gen_n = generate_node(t, cfg, nodes, lat_n.z);
    DiscANodes da_n = discriminate_a_node(t, cfg, nodes, gen_n);
    NodeId db_n = discriminate_b_node(t, cfg, nodes, t.constant(xbar));

    CHECK(t.value(fused_n).data() == fused.data());
    CHECK(t.value(lat_n.mu).data() == lat.mu.data());
    CHECK(t.value(lat_n.z).data() == lat.z.data());
    CHECK(t.value(gen_n).data() == gen.data());
    CHECK(t.value(da_n.projection).data() == da.projection.data());
    CHECK(t.value(da_n.critic).data() == da.critic.data());
    CHECK(t.value(db_n).data() == db.data());
}

TEST_CASE("composed pipeline is differentiable end to end") {
    ModelConfig cfg = tiny_config();
    RandomStream rng(29);
    ModelParameters p = init_parameters(cfg, rng);
    Tensor xbar = rng.normal_tensor({2, 5});
    Tensor sbar = rng.normal_tensor({2, 3});
    Tensor noise = rng.normal_tensor({2, 3});

    // differentiate through one weight per component, the rest held constant
    const std::vector<std::string> probe = {"fusion.alpha.l1.w", "fusion.theta.l2.w",
                                            "enc.mu.w", "gen.l2.w", "disc_a.trunk.w",
                                            "disc_a.proj.w", "disc_b.l1.w"};
    std::vector<Tensor> inputs;
    for (const auto& name : probe) inputs.push_back(p.at(name));

    auto build = [&](Tape& t, const std::vector<NodeId>& leaves) {
        ParamNodes nodes;
        for (const auto& [name, tensor] : p) nodes.id[name] = t.constant(tensor);
        for (std::size_t i = 0; i < probe.size(); ++i) nodes.id[probe[i]] = leaves[i];
        NodeId fused = atf_fuse_node(t, cfg, nodes, t.constant(xbar), t.constant(sbar));
        LatentNodes lat = encode_node(t, cfg, nodes, fused, t.constant(noise));
        NodeId gen = generate_node(t, cfg, nodes, lat.z);
        DiscANodes da = discriminate_a_node(t, cfg, nodes, gen);
        NodeId db = discriminate_b_node(t, cfg, nodes, t.constant(xbar));
        NodeId metric = t.constant(Tensor::identity(cfg.k_proj));
        NodeId spread = t.pair_quadform(da.projection, db, metric);
        return t.add(t.add(t.mean(da.critic), t.mean(t.mul(gen, gen))),
                     t.affine(spread, 1e-2, 0.0));
    };
    CHECK(finite_difference_check(build, inputs, 1e-5) < 1e-4);
}
