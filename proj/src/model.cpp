#include "biasguard/model.hpp"

#include <cmath>
#include <cstdlib>

#include "biasguard/errors.hpp"
#include "biasguard/kernels.hpp"

namespace biasguard {

void ModelConfig::validate() const {
    if (d_visual < 1 || k_semantic < 1 || d_latent < 1 || k_proj < 1)
        throw ContractViolation("ModelConfig: all dimensions must be >= 1");
}

namespace {

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, RandomStream& rng, double gain) {
    const double sigma = gain / std::sqrt(static_cast<double>(fan_in));
    return rng.normal_tensor({fan_in, fan_out}, sigma);
}

// ReLU-gain for hidden layers, unit gain for output heads.
constexpr double kReluGain = 1.4142135623730951;

void add_linear(ModelParameters& params, const std::string& prefix, std::size_t in,
                std::size_t out, RandomStream& rng, double gain) {
    params[prefix + ".w"] = init_weight(in, out, rng, gain);
    params[prefix + ".b"] = Tensor::zeros({1, out});
}

}  // namespace

ModelParameters init_parameters(const ModelConfig& config, RandomStream& rng) {
    config.validate();
    ModelParameters p;
    const std::size_t d = config.d_visual;
    const std::size_t k = config.k_semantic;

    if (config.fusion_mode == FusionMode::Atf) {
        add_linear(p, "fusion.alpha.l1", k, config.fusion_hidden(), rng, kReluGain);
        add_linear(p, "fusion.alpha.l2", config.fusion_hidden(), 1, rng, 1.0);
        add_linear(p, "fusion.theta.l1", k, config.fusion_hidden(), rng, kReluGain);
        add_linear(p, "fusion.theta.l2", config.fusion_hidden(), d, rng, 1.0);
    } else {
        add_linear(p, "fusion.concat", d + k, d, rng, 1.0);
    }

    add_linear(p, "enc.l1", d, config.encoder_hidden(), rng, kReluGain);
    add_linear(p, "enc.mu", config.encoder_hidden(), config.d_latent, rng, 1.0);
    add_linear(p, "enc.logvar", config.encoder_hidden(), config.d_latent, rng, 1.0);

    add_linear(p, "gen.l1", config.d_latent, config.generator_hidden(), rng, kReluGain);
    add_linear(p, "gen.l2", config.generator_hidden(), d, rng, 1.0);

    add_linear(p, "disc_a.trunk", d, config.disc_a_hidden(), rng, kReluGain);
    add_linear(p, "disc_a.proj", config.disc_a_hidden(), config.k_proj, rng, 1.0);
    add_linear(p, "disc_a.critic", config.disc_a_hidden(), 1, rng, 1.0);

    if (config.branch_mode == BranchMode::Dual) {
        add_linear(p, "disc_b.l1", d, config.disc_b_hidden(), rng, kReluGain);
        add_linear(p, "disc_b.l2", config.disc_b_hidden(), config.k_proj, rng, 1.0);
        // start branch B as a copy of the A-side projection pathway when the
        // layer shapes line up; the branches then begin in a common embedding
        // and diverge only as far as their losses push them
        if (config.disc_b_hidden() == config.disc_a_hidden()) {
            p["disc_b.l1.w"] = p["disc_a.trunk.w"];
            p["disc_b.l1.b"] = p["disc_a.trunk.b"];
            p["disc_b.l2.w"] = p["disc_a.proj.w"];
            p["disc_b.l2.b"] = p["disc_a.proj.b"];
        }
    }
    return p;
}

std::vector<std::string> critic_param_names(const ModelConfig&) {
    // EXP: temporary experiment switch
    const char* exp = std::getenv("BIASGUARD_EXP_TRUNK");
    if (exp && std::string(exp) == "trunk_critic")
        return {"disc_a.trunk.w", "disc_a.trunk.b", "disc_a.critic.w", "disc_a.critic.b"};
    return {"disc_a.critic.w", "disc_a.critic.b"};
}

std::vector<std::string> generative_param_names(const ModelConfig& config) {
    std::vector<std::string> names;
    if (config.fusion_mode == FusionMode::Atf) {
        names.insert(names.end(),
                     {"fusion.alpha.l1.w", "fusion.alpha.l1.b", "fusion.alpha.l2.w",
                      "fusion.alpha.l2.b", "fusion.theta.l1.w", "fusion.theta.l1.b",
                      "fusion.theta.l2.w", "fusion.theta.l2.b"});
    } else {
        names.insert(names.end(), {"fusion.concat.w", "fusion.concat.b"});
    }
    names.insert(names.end(), {"enc.l1.w", "enc.l1.b", "enc.mu.w", "enc.mu.b", "enc.logvar.w",
                               "enc.logvar.b", "gen.l1.w", "gen.l1.b", "gen.l2.w", "gen.l2.b"});
    return names;
}

std::vector<std::string> projection_param_names(const ModelConfig& config) {
    // EXP: temporary experiment switch
    const char* exp = std::getenv("BIASGUARD_EXP_PROJGROUP");
    if (exp && std::string(exp) == "heads") {
        std::vector<std::string> names = {"disc_a.proj.w", "disc_a.proj.b"};
        if (config.branch_mode == BranchMode::Dual)
            names.insert(names.end(), {"disc_b.l2.w", "disc_b.l2.b"});
        return names;
    }
    if (exp && std::string(exp) == "none") return {};
    if (exp && std::string(exp) == "bonly") {
        if (config.branch_mode == BranchMode::Dual)
            return {"disc_b.l1.w", "disc_b.l1.b", "disc_b.l2.w", "disc_b.l2.b"};
        return {};
    }
    std::vector<std::string> names = {"disc_a.trunk.w", "disc_a.trunk.b", "disc_a.proj.w",
                                      "disc_a.proj.b"};
    if (config.branch_mode == BranchMode::Dual) {
        names.insert(names.end(), {"disc_b.l1.w", "disc_b.l1.b", "disc_b.l2.w", "disc_b.l2.b"});
    }
    return names;
}

std::vector<std::string> joint_param_names(const ModelConfig& config) {
    std::vector<std::string> names = generative_param_names(config);
    std::vector<std::string> proj = projection_param_names(config);
    names.insert(names.end(), proj.begin(), proj.end());
    return names;
}

// ---------------------------------------------------------------------------
// Plain forward passes.
// ---------------------------------------------------------------------------

namespace {

const Tensor& param(const ModelParameters& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractViolation("missing model parameter " + name);
    return it->second;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.cols() != w.rows())
        throw ContractViolation("linear: input width " + std::to_string(x.cols()) +
                                " does not match weight rows " + std::to_string(w.rows()));
    Tensor out({x.rows(), w.cols()});
    kernels::matmul(x.data().data(), w.data().data(), out.data().data(), x.rows(), x.cols(),
                    w.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
    return out;
}

Tensor relu(Tensor x) {
    kernels::map_unary(x.data().data(), x.data().data(), x.numel(),
                       [](double v) { return v > 0.0 ? v : 0.0; });
    return x;
}

Tensor softplus(Tensor x) {
    kernels::map_unary(x.data().data(), x.data().data(), x.numel(), [](double v) {
        return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    });
    return x;
}

Tensor as_matrix(const Tensor& t) {
    if (t.rank() == 2) return t;
    return Tensor({1, t.numel()}, t.data());
}

}  // namespace

Tensor atf_fuse(const ModelConfig& config, const ModelParameters& params, const Tensor& xbar_in,
                const Tensor& sbar_in) {
    Tensor xbar = as_matrix(xbar_in);
    Tensor sbar = as_matrix(sbar_in);
    if (xbar.cols() != config.d_visual)
        throw ContractViolation("atf_fuse: visual feature dimension mismatch");
    if (sbar.cols() != config.k_semantic)
        throw ContractViolation("atf_fuse: semantic feature dimension mismatch");
    if (xbar.rows() != sbar.rows())
        throw ContractViolation("atf_fuse: batch sizes differ");

    if (config.fusion_mode == FusionMode::Concat) {
        Tensor cat({xbar.rows(), xbar.cols() + sbar.cols()});
        for (std::size_t i = 0; i < xbar.rows(); ++i) {
            for (std::size_t j = 0; j < xbar.cols(); ++j) cat(i, j) = xbar(i, j);
            for (std::size_t j = 0; j < sbar.cols(); ++j) cat(i, xbar.cols() + j) = sbar(i, j);
        }
        return linear(cat, param(params, "fusion.concat.w"), param(params, "fusion.concat.b"));
    }

    Tensor alpha = softplus(linear(relu(linear(sbar, param(params, "fusion.alpha.l1.w"),
                                               param(params, "fusion.alpha.l1.b"))),
                                   param(params, "fusion.alpha.l2.w"),
                                   param(params, "fusion.alpha.l2.b")));  // n x 1
    Tensor theta = linear(relu(linear(sbar, param(params, "fusion.theta.l1.w"),
                                      param(params, "fusion.theta.l1.b"))),
                          param(params, "fusion.theta.l2.w"), param(params, "fusion.theta.l2.b"));
    Tensor out({xbar.rows(), xbar.cols()});
    for (std::size_t i = 0; i < xbar.rows(); ++i)
        for (std::size_t j = 0; j < xbar.cols(); ++j)
            out(i, j) = xbar(i, j) * alpha[i] + theta(i, j);
    return out;
}

LatentSample encode(const ModelConfig& config, const ModelParameters& params, const Tensor& x_in,
                    const Tensor& noise_in) {
    Tensor x = as_matrix(x_in);
    Tensor noise = as_matrix(noise_in);
    if (x.cols() != config.d_visual) throw ContractViolation("encode: input dimension mismatch");
    if (noise.rows() != x.rows() || noise.cols() != config.d_latent)
        throw ContractViolation("encode: noise shape mismatch");
    Tensor h = relu(linear(x, param(params, "enc.l1.w"), param(params, "enc.l1.b")));
    LatentSample s;
    s.mu = linear(h, param(params, "enc.mu.w"), param(params, "enc.mu.b"));
    s.logvar = linear(h, param(params, "enc.logvar.w"), param(params, "enc.logvar.b"));
    s.noise = noise;
    s.z = Tensor(s.mu.shape());
    for (std::size_t i = 0; i < s.z.numel(); ++i)
        s.z[i] = s.mu[i] + std::exp(0.5 * s.logvar[i]) * noise[i];
    return s;
}

Tensor generate(const ModelConfig& config, const ModelParameters& params, const Tensor& z_in) {
    Tensor z = as_matrix(z_in);
    if (z.cols() != config.d_latent) throw ContractViolation("generate: latent dimension mismatch");
    Tensor h = relu(linear(z, param(params, "gen.l1.w"), param(params, "gen.l1.b")));
    return linear(h, param(params, "gen.l2.w"), param(params, "gen.l2.b"));
}

DiscAOut discriminate_a(const ModelConfig& config, const ModelParameters& params,
                        const Tensor& v_in) {
    Tensor v = as_matrix(v_in);
    if (v.cols() != config.d_visual)
        throw ContractViolation("discriminate_a: input dimension mismatch");
    Tensor h = relu(linear(v, param(params, "disc_a.trunk.w"), param(params, "disc_a.trunk.b")));
    DiscAOut out;
    out.projection = linear(h, param(params, "disc_a.proj.w"), param(params, "disc_a.proj.b"));
    out.critic = linear(h, param(params, "disc_a.critic.w"), param(params, "disc_a.critic.b"));
    return out;
}

Tensor discriminate_b(const ModelConfig& config, const ModelParameters& params,
                      const Tensor& v_in) {
    Tensor v = as_matrix(v_in);
    if (v.cols() != config.d_visual)
        throw ContractViolation("discriminate_b: input dimension mismatch");
    Tensor h = relu(linear(v, param(params, "disc_b.l1.w"), param(params, "disc_b.l1.b")));
    return linear(h, param(params, "disc_b.l2.w"), param(params, "disc_b.l2.b"));
}

// ---------------------------------------------------------------------------
// Tape builders.
// ---------------------------------------------------------------------------

NodeId ParamNodes::at(const std::string& name) const {
    auto it = id.find(name);
    if (it == id.end()) throw ContractViolation("missing staged parameter " + name);
    return it->second;
}

ParamNodes stage_parameters(Tape& tape, const ModelParameters& params) {
    ParamNodes p;
    for (const auto& [name, tensor] : params) p.id[name] = tape.input(tensor);
    return p;
}

namespace {

NodeId linear_node(Tape& t, const ParamNodes& p, const std::string& prefix, NodeId x) {
    return t.add_row(t.matmul(x, p.at(prefix + ".w")), p.at(prefix + ".b"));
}

}  // namespace

NodeId atf_fuse_node(Tape& t, const ModelConfig& config, const ParamNodes& p, NodeId xbar,
                     NodeId sbar) {
    if (config.fusion_mode == FusionMode::Concat) {
        return linear_node(t, p, "fusion.concat", t.concat_cols(xbar, sbar));
    }
    NodeId alpha = t.softplus(
        linear_node(t, p, "fusion.alpha.l2", t.relu(linear_node(t, p, "fusion.alpha.l1", sbar))));
    NodeId theta =
        linear_node(t, p, "fusion.theta.l2", t.relu(linear_node(t, p, "fusion.theta.l1", sbar)));
    return t.add(t.row_scale(xbar, alpha), theta);
}

LatentNodes encode_node(Tape& t, const ModelConfig&, const ParamNodes& p, NodeId x,
                        NodeId noise) {
    NodeId h = t.relu(linear_node(t, p, "enc.l1", x));
    LatentNodes out;
    out.mu = linear_node(t, p, "enc.mu", h);
    out.logvar = linear_node(t, p, "enc.logvar", h);
    out.z = t.add(out.mu, t.mul(t.exp(t.affine(out.logvar, 0.5, 0.0)), noise));
    return out;
}

NodeId generate_node(Tape& t, const ModelConfig&, const ParamNodes& p, NodeId z) {
    return linear_node(t, p, "gen.l2", t.relu(linear_node(t, p, "gen.l1", z)));
}

DiscANodes discriminate_a_node(Tape& t, const ModelConfig&, const ParamNodes& p, NodeId v) {
    NodeId h = t.relu(linear_node(t, p, "disc_a.trunk", v));
    return DiscANodes{linear_node(t, p, "disc_a.proj", h), linear_node(t, p, "disc_a.critic", h)};
}

NodeId discriminate_a_critic_node(Tape& t, const ModelConfig&, const ParamNodes& p, NodeId v) {
    NodeId h = t.relu(linear_node(t, p, "disc_a.trunk", v));
    return linear_node(t, p, "disc_a.critic", h);
}

NodeId discriminate_b_node(Tape& t, const ModelConfig&, const ParamNodes& p, NodeId v) {
    return linear_node(t, p, "disc_b.l2", t.relu(linear_node(t, p, "disc_b.l1", v)));
}

}  // namespace biasguard
