#pragma once

#include <map>
#include <string>
#include <vector>

#include "biasguard/rng.hpp"
#include "biasguard/tape.hpp"
#include "biasguard/tensor.hpp"

namespace biasguard {

enum class FusionMode { Atf, Concat };
enum class BranchMode { Dual, AOnly };

struct ModelConfig {
    std::size_t d_visual = 64;
    std::size_t k_semantic = 16;
    std::size_t d_latent = 16;
    std::size_t k_proj = 24;
    // hidden widths; 0 means "twice the layer input width"
    std::size_t hidden_fusion = 0;
    std::size_t hidden_encoder = 0;
    std::size_t hidden_generator = 0;
    std::size_t hidden_disc_a = 0;
    std::size_t hidden_disc_b = 0;
    FusionMode fusion_mode = FusionMode::Atf;
    BranchMode branch_mode = BranchMode::Dual;

    std::size_t fusion_hidden() const { return hidden_fusion ? hidden_fusion : 2 * k_semantic; }
    std::size_t encoder_hidden() const { return hidden_encoder ? hidden_encoder : 2 * d_visual; }
    std::size_t generator_hidden() const {
        return hidden_generator ? hidden_generator : 2 * d_latent;
    }
    std::size_t disc_a_hidden() const { return hidden_disc_a ? hidden_disc_a : 2 * d_visual; }
    std::size_t disc_b_hidden() const { return hidden_disc_b ? hidden_disc_b : 2 * d_visual; }

    void validate() const;
};

// All trainable weights, keyed by name. std::map keeps iteration order
// deterministic for optimizer slots and serialization.
using ModelParameters = std::map<std::string, Tensor>;

ModelParameters init_parameters(const ModelConfig& config, RandomStream& rng);

// Parameter grouping for the two-phase update. The critic game owns the
// discriminator-A trunk and critic head; the metric loss additionally shapes
// the trunk, both projection heads and branch B; the remaining generative
// parameters follow the full weighted objective.
std::vector<std::string> critic_param_names(const ModelConfig& config);
std::vector<std::string> generative_param_names(const ModelConfig& config);
std::vector<std::string> projection_param_names(const ModelConfig& config);
std::vector<std::string> joint_param_names(const ModelConfig& config);

struct LatentSample {
    Tensor mu, logvar, z, noise;
};

struct DiscAOut {
    Tensor projection;  // n x k_proj
    Tensor critic;      // n x 1
};

// Plain batched forward passes (rows are samples). These mirror the tape
// builders below operation for operation, so both paths produce bitwise
// identical values.
Tensor atf_fuse(const ModelConfig& config, const ModelParameters& params, const Tensor& xbar,
                const Tensor& sbar);
LatentSample encode(const ModelConfig& config, const ModelParameters& params, const Tensor& x,
                    const Tensor& noise);
Tensor generate(const ModelConfig& config, const ModelParameters& params, const Tensor& z);
DiscAOut discriminate_a(const ModelConfig& config, const ModelParameters& params,
                        const Tensor& v);
Tensor discriminate_b(const ModelConfig& config, const ModelParameters& params,
                      const Tensor& v);

// Tape builders used during training.
struct ParamNodes {
    std::map<std::string, NodeId> id;
    NodeId at(const std::string& name) const;
};

ParamNodes stage_parameters(Tape& tape, const ModelParameters& params);

NodeId atf_fuse_node(Tape& tape, const ModelConfig& config, const ParamNodes& p, NodeId xbar,
                     NodeId sbar);

struct LatentNodes {
    NodeId mu, logvar, z;
};
LatentNodes encode_node(Tape& tape, const ModelConfig& config, const ParamNodes& p, NodeId x,
                        NodeId noise);
NodeId generate_node(Tape& tape, const ModelConfig& config, const ParamNodes& p, NodeId z);

struct DiscANodes {
    NodeId projection, critic;
};
DiscANodes discriminate_a_node(Tape& tape, const ModelConfig& config, const ParamNodes& p,
                               NodeId v);
NodeId discriminate_a_critic_node(Tape& tape, const ModelConfig& config, const ParamNodes& p,
                                  NodeId v);
NodeId discriminate_b_node(Tape& tape, const ModelConfig& config, const ParamNodes& p, NodeId v);

}  // namespace biasguard
