#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biasguard/data.hpp"
#include "biasguard/errors.hpp"
#include "biasguard/manifest.hpp"
#include "biasguard/pipeline.hpp"

namespace bg = biasguard;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;      // argument / config errors
constexpr int kExitData = 3;       // data and file format errors
constexpr int kExitNumerical = 4;  // NaN abort, failed factorization

bg::DataFormat format_for(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0
               ? bg::DataFormat::Csv
               : bg::DataFormat::Bin;
}

std::map<std::string, std::string> config_as_map(const bg::TrainConfig& config) {
    std::map<std::string, std::string> out;
    std::istringstream in(bg::train_config_to_text(config));
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

// Settings shared by train and ablate. File values are applied first, then
// any flag the user actually passed.
struct TrainCli {
    std::string config_file;
    std::size_t epochs = 20, batch = 32, d_latent = 16, k_proj = 24;
    std::uint64_t seed = 0;
    double lr = 1e-3, lambda_vae = 1.0, lambda_mse = 1.0, lambda_m = 1.0, lambda_gp = 10.0;
    double epsilon = 1e-3;
    int n_critic = 5;
    std::string fusion = "atf", branches = "dual", metric = "mahalanobis";
    bool exact_metric = false;

    CLI::Option *o_epochs, *o_batch, *o_dlatent, *o_kproj, *o_seed, *o_lr, *o_lvae, *o_lmse,
        *o_lm, *o_lgp, *o_eps, *o_ncritic, *o_fusion, *o_branches, *o_metric, *o_exact;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key=value config file; flags override it");
        o_epochs = cmd->add_option("--epochs", epochs, "training epochs");
        o_batch = cmd->add_option("--batch", batch, "batch size");
        o_dlatent = cmd->add_option("--dlatent", d_latent, "latent dimension");
        o_kproj = cmd->add_option("--kproj", k_proj, "projection dimension");
        o_seed = cmd->add_option("--seed", seed, "master seed");
        o_lr = cmd->add_option("--lr", lr, "Adam learning rate");
        o_lvae = cmd->add_option("--lambda-vae", lambda_vae, "VAE loss weight");
        o_lmse = cmd->add_option("--lambda-mse", lambda_mse, "MSE loss weight");
        o_lm = cmd->add_option("--lambda-m", lambda_m, "metric loss weight");
        o_lgp = cmd->add_option("--lambda-gp", lambda_gp, "gradient penalty weight");
        o_eps = cmd->add_option("--epsilon", epsilon, "metric ridge constant");
        o_ncritic = cmd->add_option("--n-critic", n_critic, "critic steps per joint step");
        o_fusion = cmd->add_option("--fusion", fusion, "atf | concat");
        o_branches = cmd->add_option("--branches", branches, "dual | a_only");
        o_metric = cmd->add_option("--metric", metric, "mahalanobis | euclidean");
        o_exact = cmd->add_flag("--exact-metric", exact_metric,
                                "differentiate through the metric matrix");
    }

    // config-file and flag-value problems are argument errors (exit 2)
    bg::TrainConfig resolve() const {
        try {
            bg::TrainConfig c;
            if (!config_file.empty()) {
                std::ifstream in(config_file, std::ios::binary);
                if (!in) throw bg::FormatError("cannot open config file " + config_file);
                std::ostringstream ss;
                ss << in.rdbuf();
                c = bg::train_config_from_text(ss.str());
            }
            if (o_epochs->count()) c.epochs = epochs;
            if (o_batch->count()) c.batch_size = batch;
            if (o_dlatent->count()) c.model.d_latent = d_latent;
            if (o_kproj->count()) c.model.k_proj = k_proj;
            if (o_seed->count()) c.seed = seed;
            if (o_lr->count()) c.lr = lr;
            if (o_lvae->count()) c.weights.lambda_vae = lambda_vae;
            if (o_lmse->count()) c.weights.lambda_mse = lambda_mse;
            if (o_lm->count()) c.weights.lambda_m = lambda_m;
            if (o_lgp->count()) c.weights.lambda_gp = lambda_gp;
            if (o_eps->count()) c.metric_epsilon = epsilon;
            if (o_ncritic->count()) c.weights.n_critic = n_critic;
            if (o_fusion->count()) bg::apply_config_entry(c, "fusion", fusion);
            if (o_branches->count()) bg::apply_config_entry(c, "branches", branches);
            if (o_metric->count()) bg::apply_config_entry(c, "metric", metric);
            if (o_exact->count()) c.differentiate_metric = exact_metric;
            return c;
        } catch (const bg::FormatError& e) {
            throw CLI::ValidationError(e.what());
        }
    }
};

unsigned ablation_threads() {
    const char* env = std::getenv("BIASGUARD_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v < 1)
        throw CLI::ValidationError("BIASGUARD_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
}

std::vector<std::pair<std::size_t, std::size_t>> parse_dims_grid(const std::string& spec) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
            throw CLI::ValidationError("--dims-grid entries must look like dlatent:kproj");
        out.emplace_back(std::stoull(item.substr(0, colon)), std::stoull(item.substr(colon + 1)));
    }
    return out;
}

int run_synth(const bg::SynthConfig& sc, double test_fraction, const std::string& out_path) {
    bg::RunManifest manifest;
    manifest.command = "synth";
    manifest.started_at = bg::iso8601_now();
    manifest.seed = sc.seed;

    bg::GzslDataset ds = bg::synth_gzsl(sc);
    for (const auto& warning : bg::make_splits(ds, test_fraction, sc.seed))
        std::cerr << "warning: " << warning << "\n";
    bg::save_dataset(ds, out_path, format_for(out_path));

    manifest.config = {{"classes", std::to_string(sc.n_classes)},
                       {"unseen", std::to_string(sc.n_unseen)},
                       {"per_class", std::to_string(sc.samples_per_class)},
                       {"d_visual", std::to_string(sc.d_visual)},
                       {"k_semantic", std::to_string(sc.k_semantic)},
                       {"bias_shift", std::to_string(sc.bias_shift)},
                       {"cluster_scale", std::to_string(sc.cluster_scale)},
                       {"anisotropy", std::to_string(sc.anisotropy)},
                       {"test_fraction_seen", std::to_string(test_fraction)}};
    manifest.outputs = {out_path};
    manifest.engine_version = bg::kEngineVersion;
    manifest.finished_at = bg::iso8601_now();
    bg::write_manifest(manifest, out_path);

    std::cout << "wrote " << ds.records.size() << " records (" << ds.seen_classes.size()
              << " seen / " << ds.unseen_classes.size() << " unseen classes) to " << out_path
              << "\n";
    return kExitOk;
}

int run_train(const TrainCli& flags, const std::string& data_path,
              const std::string& split_manifest, const std::string& out_path) {
    bg::RunManifest manifest;
    manifest.command = "train";
    manifest.started_at = bg::iso8601_now();

    bg::GzslDataset ds = bg::load_dataset(data_path, format_for(data_path), split_manifest);
    bg::TrainConfig config = flags.resolve();
    config.model.d_visual = ds.d_visual();
    config.model.k_semantic = ds.k_semantic();
    config.validate();

    bg::Checkpoint ck = bg::train(config, ds);
    bg::save_checkpoint(ck, out_path);

    manifest.seed = config.seed;
    manifest.config = config_as_map(config);
    manifest.inputs = {data_path};
    manifest.outputs = {out_path};
    manifest.engine_version = bg::kEngineVersion;
    manifest.finished_at = bg::iso8601_now();
    bg::write_manifest(manifest, out_path);

    if (ck.nan_abort) {
        std::cerr << "error: numerical failure during training; wrote last-good checkpoint ("
                  << ck.epoch << " completed epochs) to " << out_path << "\n";
        return kExitNumerical;
    }
    std::printf("trained %zu epochs; final losses: wgan=%.4f vae=%.4f mse=%.4f m=%.4f total=%.4f\n",
                ck.epoch, ck.history.back().l_wgan, ck.history.back().l_vae,
                ck.history.back().l_mse, ck.history.back().l_m, ck.history.back().total);
    std::cout << "checkpoint written to " << out_path << "\n";
    return kExitOk;
}

int run_eval(const std::string& data_path, const std::string& split_manifest,
             const std::string& ckpt_path, const std::string& out_path) {
    bg::GzslDataset ds = bg::load_dataset(data_path, format_for(data_path), split_manifest);
    bg::Checkpoint ck = bg::load_checkpoint(ckpt_path);
    bg::EvalReport report = bg::evaluate(ds, ck);
    std::printf("U=%.4f S=%.4f H=%.4f\n", report.u, report.s, report.h);
    if (!out_path.empty()) {
        bg::RunManifest manifest;
        manifest.command = "eval";
        manifest.started_at = bg::iso8601_now();
        bg::write_report_csv({{ckpt_path, report}}, out_path);
        manifest.seed = ck.config.seed;
        manifest.config = config_as_map(ck.config);
        manifest.inputs = {data_path, ckpt_path};
        manifest.outputs = {out_path};
        manifest.engine_version = bg::kEngineVersion;
        manifest.finished_at = bg::iso8601_now();
        bg::write_manifest(manifest, out_path);
    }
    return kExitOk;
}

int run_classify(const std::string& data_path, const std::string& split_manifest,
                 const std::string& ckpt_path, const std::string& out_path, std::size_t limit) {
    bg::GzslDataset ds = bg::load_dataset(data_path, format_for(data_path), split_manifest);
    bg::Checkpoint ck = bg::load_checkpoint(ckpt_path);
    if (ds.d_visual() != ck.config.model.d_visual)
        throw bg::ContractViolation("classify: checkpoint visual dimension " +
                                    std::to_string(ck.config.model.d_visual) +
                                    " does not match dataset " +
                                    std::to_string(ds.d_visual()));
    const std::size_t n = limit == 0 ? ds.records.size() : std::min(limit, ds.records.size());
    bg::Tensor visuals({n, ds.d_visual()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ds.d_visual(); ++j)
            visuals(i, j) = ds.records[i].visual[j];
    std::vector<int> predicted = bg::classify_batch(visuals, ds.class_semantics(), ck);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::binary);
        if (!file) throw bg::FormatError("cannot open " + out_path + " for writing");
        out = &file;
    }
    (*out) << "index,label,predicted\n";
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (*out) << i << "," << ds.records[i].label << "," << predicted[i] << "\n";
        if (predicted[i] == ds.records[i].label) ++correct;
    }
    if (!out_path.empty()) {
        bg::RunManifest manifest;
        manifest.command = "classify";
        manifest.started_at = bg::iso8601_now();
        manifest.seed = ck.config.seed;
        manifest.config = config_as_map(ck.config);
        manifest.inputs = {data_path, ckpt_path};
        manifest.outputs = {out_path};
        manifest.engine_version = bg::kEngineVersion;
        manifest.finished_at = bg::iso8601_now();
        bg::write_manifest(manifest, out_path);
        std::printf("classified %zu records, %zu correct (%.2f%%); wrote %s\n", n, correct,
                    100.0 * static_cast<double>(correct) / static_cast<double>(n),
                    out_path.c_str());
    }
    return kExitOk;
}

int run_ablate(const TrainCli& flags, const std::string& data_path,
               const std::string& split_manifest, const std::vector<std::string>& axes_list,
               const std::string& lambda_grid_spec, const std::string& dims_grid_spec,
               const std::string& out_path) {
    bg::GzslDataset ds = bg::load_dataset(data_path, format_for(data_path), split_manifest);
    bg::TrainConfig base = flags.resolve();
    base.model.d_visual = ds.d_visual();
    base.model.k_semantic = ds.k_semantic();
    base.validate();

    bg::AblationAxes axes;
    for (const std::string& axis : axes_list) {
        if (axis == "metric") axes.metric = true;
        else if (axis == "branches") axes.branches = true;
        else if (axis == "fusion") axes.fusion = true;
        else if (axis == "lambda") {
            if (lambda_grid_spec.empty())
                throw CLI::ValidationError("axis 'lambda' requires --lambda-grid");
            std::istringstream in(lambda_grid_spec);
            std::string item;
            while (std::getline(in, item, ',')) axes.lambda_grid.push_back(std::stod(item));
        } else if (axis == "dims") {
            if (dims_grid_spec.empty())
                throw CLI::ValidationError("axis 'dims' requires --dims-grid");
            axes.dims_grid = parse_dims_grid(dims_grid_spec);
        } else {
            throw CLI::ValidationError("unknown ablation axis '" + axis + "'");
        }
    }

    bg::RunManifest manifest;
    manifest.command = "ablate";
    manifest.started_at = bg::iso8601_now();

    std::vector<bg::AblationRow> rows = bg::ablate(base, axes, ds, ablation_threads());
    bg::write_report_csv(rows, out_path);

    manifest.seed = base.seed;
    manifest.config = config_as_map(base);
    manifest.inputs = {data_path};
    manifest.outputs = {out_path};
    manifest.engine_version = bg::kEngineVersion;
    manifest.finished_at = bg::iso8601_now();
    bg::write_manifest(manifest, out_path);

    for (const auto& row : rows)
        std::printf("%-28s U=%.4f S=%.4f H=%.4f\n", row.config.c_str(), row.report.u,
                    row.report.s, row.report.h);
    std::cout << "table written to " << out_path << "\n";
    return kExitOk;
}

int run_inspect(const std::string& path) {
    // artifact summary first, by magic
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bg::FormatError("cannot open " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    in.close();
    if (std::memcmp(magic, "GZSL", 4) == 0) {
        bg::GzslDataset ds = bg::load_dataset(path, bg::DataFormat::Bin);
        std::cout << "dataset: " << ds.records.size() << " records, d_visual=" << ds.d_visual()
                  << ", k_semantic=" << ds.k_semantic() << ", " << ds.seen_classes.size()
                  << " seen / " << ds.unseen_classes.size() << " unseen classes, "
                  << ds.train_indices().size() << " train / " << ds.test_indices().size()
                  << " test records\n";
    } else if (std::memcmp(magic, "BGCP", 4) == 0) {
        bg::Checkpoint ck = bg::load_checkpoint(path);
        std::cout << "checkpoint: " << ck.epoch << " completed epochs, "
                  << ck.params.size() << " parameter tensors, metric dim " << ck.m_star.dim()
                  << (ck.nan_abort ? ", aborted on numerical failure" : "") << "\n";
        std::cout << bg::train_config_to_text(ck.config);
    } else {
        std::cout << "artifact: " << path << "\n";
    }

    const std::string mpath = bg::manifest_path_for(path);
    bg::RunManifest manifest = bg::read_manifest(mpath);
    std::cout << "manifest: command=" << manifest.command << " seed=" << manifest.seed
              << " started=" << manifest.started_at << " finished=" << manifest.finished_at
              << " engine=" << manifest.engine_version << "\n";
    for (const auto& [key, value] : manifest.config)
        std::cout << "  " << key << "=" << value << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-branch generative GZSL engine with a learned Mahalanobis metric"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic projection-biased dataset");
    bg::SynthConfig sc;
    double test_fraction = 0.2;
    std::string synth_out;
    synth->add_option("--classes", sc.n_classes, "total classes");
    synth->add_option("--unseen", sc.n_unseen, "unseen classes");
    synth->add_option("--per-class", sc.samples_per_class, "samples per class");
    synth->add_option("--dvis", sc.d_visual, "visual feature dimension");
    synth->add_option("--ksem", sc.k_semantic, "semantic feature dimension");
    synth->add_option("--bias", sc.bias_shift, "unseen-cluster offset magnitude");
    synth->add_option("--cluster-scale", sc.cluster_scale, "smallest cluster axis scale");
    synth->add_option("--anisotropy", sc.anisotropy, "largest/smallest axis ratio");
    synth->add_option("--test-fraction", test_fraction, "held-out fraction per seen class");
    synth->add_option("--seed", sc.seed, "master seed");
    synth->add_option("--out", synth_out, "output dataset path (.bin or .csv)")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    TrainCli train_flags;
    std::string train_data, train_split, train_out;
    train_cmd->add_option("--data", train_data, "dataset path")->required();
    train_cmd->add_option("--split-manifest", train_split, "class_id,seen|unseen file (CSV data)");
    train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
    train_flags.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string eval_data, eval_split, eval_ckpt, eval_out;
    eval_cmd->add_option("--data", eval_data, "dataset path")->required();
    eval_cmd->add_option("--split-manifest", eval_split, "split manifest for CSV data");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "CSV report path");

    // classify
    auto* cls_cmd = app.add_subcommand("classify", "predict classes for dataset records");
    std::string cls_data, cls_split, cls_ckpt, cls_out;
    std::size_t cls_limit = 0;
    cls_cmd->add_option("--data", cls_data, "dataset path")->required();
    cls_cmd->add_option("--split-manifest", cls_split, "split manifest for CSV data");
    cls_cmd->add_option("--checkpoint", cls_ckpt, "checkpoint path")->required();
    cls_cmd->add_option("--out", cls_out, "predictions CSV path");
    cls_cmd->add_option("--limit", cls_limit, "classify only the first N records");

    // ablate
    auto* abl_cmd = app.add_subcommand("ablate", "run ablation rows and emit a CSV table");
    TrainCli abl_flags;
    std::string abl_data, abl_split, abl_out, abl_lambda, abl_dims;
    std::vector<std::string> abl_axes;
    abl_cmd->add_option("--data", abl_data, "dataset path")->required();
    abl_cmd->add_option("--split-manifest", abl_split, "split manifest for CSV data");
    abl_cmd->add_option("--axes", abl_axes, "subset of metric,branches,fusion,lambda,dims")
        ->required()
        ->delimiter(',');
    abl_cmd->add_option("--lambda-grid", abl_lambda, "comma list of weight values");
    abl_cmd->add_option("--dims-grid", abl_dims, "comma list of dlatent:kproj pairs");
    abl_cmd->add_option("--out", abl_out, "output CSV path")->required();
    abl_flags.attach(abl_cmd);

    // inspect
    auto* ins_cmd = app.add_subcommand("inspect", "print an artifact's manifest and summary");
    std::string ins_path;
    ins_cmd->add_option("--path", ins_path, "artifact path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) return run_synth(sc, test_fraction, synth_out);
        if (train_cmd->parsed()) return run_train(train_flags, train_data, train_split, train_out);
        if (eval_cmd->parsed()) return run_eval(eval_data, eval_split, eval_ckpt, eval_out);
        if (cls_cmd->parsed())
            return run_classify(cls_data, cls_split, cls_ckpt, cls_out, cls_limit);
        if (abl_cmd->parsed())
            return run_ablate(abl_flags, abl_data, abl_split, abl_axes, abl_lambda, abl_dims,
                              abl_out);
        if (ins_cmd->parsed()) return run_inspect(ins_path);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const bg::NumericalFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const bg::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const bg::ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
