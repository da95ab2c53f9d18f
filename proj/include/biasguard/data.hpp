#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "biasguard/tensor.hpp"

namespace biasguard {

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct FeatureRecord {
    Tensor visual;    // [d_visual]
    Tensor semantic;  // [k_semantic], identical for all records of a class
    int label = 0;
    Split split = Split::Train;
};

struct GzslDataset {
    std::vector<FeatureRecord> records;
    std::set<int> seen_classes;
    std::set<int> unseen_classes;

    std::size_t d_visual() const { return records.empty() ? 0 : records.front().visual.numel(); }
    std::size_t k_semantic() const {
        return records.empty() ? 0 : records.front().semantic.numel();
    }

    std::vector<std::size_t> train_indices() const;
    std::vector<std::size_t> test_indices() const;
    std::map<int, Tensor> class_semantics() const;

    // Enforces the dataset invariants; throws FormatError naming the first
    // violation.
    void validate() const;
};

struct SynthConfig {
    std::size_t n_classes = 10;
    std::size_t n_unseen = 3;
    std::size_t samples_per_class = 50;
    std::size_t d_visual = 64;
    std::size_t k_semantic = 16;
    double bias_shift = 0.0;     // systematic offset of unseen-class clusters
    double cluster_scale = 1.0;  // smallest cluster axis
    double anisotropy = 1.0;     // largest/smallest axis ratio, >= 1
    std::uint64_t seed = 0;
};

// Class-conditional Gaussian clusters whose means are a fixed linear image of
// per-class semantic vectors; unseen-class means are additionally displaced by
// bias_shift along one seeded direction shared across unseen classes. Seen
// records come out tagged train, unseen ones test; apply make_splits to hold
// out seen-class test data.
GzslDataset synth_gzsl(const SynthConfig& config);

// The deterministic population quantities behind synth_gzsl for the same
// config: true cluster means (offset included for unseen classes), per-class
// semantics, the shared offset direction and the per-axis noise scales.
struct SynthGroundTruth {
    std::vector<Tensor> class_means;
    std::vector<Tensor> semantics;
    Tensor bias_direction;
    std::vector<double> axis_scales;
};
SynthGroundTruth synth_ground_truth(const SynthConfig& config);

// Tags every unseen-class record test and splits each seen class separately:
// round(test_fraction_seen * count) records go to test. Returns warnings for
// degenerate but permitted outcomes (e.g. an empty train split).
std::vector<std::string> make_splits(GzslDataset& dataset, double test_fraction_seen,
                                     std::uint64_t seed);

enum class DataFormat { Csv, Bin };

void save_dataset(const GzslDataset& dataset, const std::string& path, DataFormat format);
// For CSV, split_manifest_path may name a class_id,seen|unseen file; when
// empty, classes with train-tagged records count as seen and the rest as
// unseen. BIN files carry the class sets themselves.
GzslDataset load_dataset(const std::string& path, DataFormat format,
                         const std::string& split_manifest_path = "");

void save_split_manifest(const GzslDataset& dataset, const std::string& path);

}  // namespace biasguard
