#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "biasguard/data.hpp"
#include "biasguard/losses.hpp"
#include "biasguard/metric.hpp"
#include "biasguard/model.hpp"

namespace biasguard {

enum class MetricMode { Mahalanobis, Euclidean };

struct TrainConfig {
    ModelConfig model;
    LossWeights weights;
    double metric_epsilon = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    bool differentiate_metric = false;
    MetricMode metric_mode = MetricMode::Mahalanobis;

    void validate() const;
};

// Key=value text form used both inside checkpoints and for CLI config files.
std::string train_config_to_text(const TrainConfig& config);
TrainConfig train_config_from_text(const std::string& text);
// Applies one key; unknown keys or unparsable values throw FormatError.
void apply_config_entry(TrainConfig& config, const std::string& key, const std::string& value);

struct Checkpoint {
    ModelParameters params;
    MetricMatrix m_star;
    TrainConfig config;
    std::size_t epoch = 0;                     // completed epochs
    std::vector<LossBreakdown> history;        // one entry per completed epoch
    std::vector<LossBreakdown> batch_history;  // per-batch values in time order
    bool nan_abort = false;
};

// Runs the full training protocol: per batch, n_critic critic updates on the
// discriminator-A trunk and critic head, then one joint update on the
// encoder, generator, fusion and projection parameters. The metric matrix is
// recomputed from the stacked branch projections every batch; the one from
// the final batch is frozen into the checkpoint. A numerical failure aborts
// training and returns the snapshot from the last completed epoch with
// nan_abort set.
Checkpoint train(const TrainConfig& config, const GzslDataset& dataset);

// Projection-space embedding of raw visual rows (branch B, or branch A\'s
// projection head when the model was trained without branch B).
Tensor query_projections(const Checkpoint& ck, const Tensor& visuals);
// Class-prototype embedding: fuse each visual row with the class semantics,
// encode deterministically (zero noise), generate, then project via branch A.
Tensor prototype_projections(const Checkpoint& ck, const Tensor& visuals,
                             const Tensor& semantic);

// Nearest class under the frozen metric; ties break toward the smaller id.
int classify(const Tensor& visual, const std::map<int, Tensor>& class_semantics,
             const Checkpoint& ck);

// Batched variant: one prediction per row of visuals.
std::vector<int> classify_batch(const Tensor& visuals,
                                const std::map<int, Tensor>& class_semantics,
                                const Checkpoint& ck);

struct EvalReport {
    std::map<int, double> per_class;  // accuracy in percent
    double u = 0.0;                   // mean per-class accuracy, unseen
    double s = 0.0;                   // mean per-class accuracy, seen
    double h = 0.0;                   // harmonic mean
};

double harmonic_mean(double u, double s);

EvalReport evaluate(const GzslDataset& dataset, const Checkpoint& ck);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct AblationAxes {
    bool metric = false;
    bool branches = false;
    bool fusion = false;
    std::vector<double> lambda_grid;  // values applied to one weight at a time
    std::vector<std::pair<std::size_t, std::size_t>> dims_grid;  // (d_latent, k_proj)
};

struct AblationRow {
    std::string config;
    EvalReport report;
};

// One train+evaluate run per configuration, all rows sharing the base seed.
std::vector<AblationRow> ablate(const TrainConfig& base, const AblationAxes& axes,
                                const GzslDataset& dataset, unsigned threads = 1);

void write_report_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace biasguard
