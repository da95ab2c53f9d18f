#include "biasguard/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "biasguard/adam.hpp"
#include "biasguard/errors.hpp"
#include "biasguard/kernels.hpp"
#include "biasguard/rng.hpp"

namespace biasguard {

void TrainConfig::validate() const {
    model.validate();
    if (batch_size < 2) throw ContractViolation("TrainConfig: batch_size must be >= 2");
    if (epochs < 1) throw ContractViolation("TrainConfig: epochs must be >= 1");
    if (lr <= 0.0) throw ContractViolation("TrainConfig: lr must be > 0");
    if (metric_epsilon < 0.0) throw ContractViolation("TrainConfig: metric ridge must be >= 0");
    if (weights.lambda_vae < 0.0 || weights.lambda_mse < 0.0 || weights.lambda_m < 0.0 ||
        weights.lambda_gp < 0.0)
        throw ContractViolation("TrainConfig: loss weights must be >= 0");
    if (weights.n_critic < 1) throw ContractViolation("TrainConfig: n_critic must be >= 1");
    if (differentiate_metric && metric_epsilon <= 0.0)
        throw ContractViolation("TrainConfig: differentiating the metric requires ridge > 0");
    if (model.branch_mode == BranchMode::AOnly && metric_mode == MetricMode::Mahalanobis)
        throw ContractViolation(
            "TrainConfig: discriminator B cannot be used alone; the Mahalanobis metric "
            "requires both branches (use the Euclidean mode with branch A only)");
}

// ---------------------------------------------------------------------------
// Config text form.
// ---------------------------------------------------------------------------

namespace {

std::string hexd(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_d(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw FormatError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

std::uint64_t parse_u(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw FormatError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

}  // namespace

std::string train_config_to_text(const TrainConfig& c) {
    std::ostringstream o;
    o << "d_visual=" << c.model.d_visual << "\n";
    o << "k_semantic=" << c.model.k_semantic << "\n";
    o << "d_latent=" << c.model.d_latent << "\n";
    o << "k_proj=" << c.model.k_proj << "\n";
    o << "hidden_fusion=" << c.model.hidden_fusion << "\n";
    o << "hidden_encoder=" << c.model.hidden_encoder << "\n";
    o << "hidden_generator=" << c.model.hidden_generator << "\n";
    o << "hidden_disc_a=" << c.model.hidden_disc_a << "\n";
    o << "hidden_disc_b=" << c.model.hidden_disc_b << "\n";
    o << "fusion=" << (c.model.fusion_mode == FusionMode::Atf ? "atf" : "concat") << "\n";
    o << "branches=" << (c.model.branch_mode == BranchMode::Dual ? "dual" : "a_only") << "\n";
    o << "lambda_vae=" << hexd(c.weights.lambda_vae) << "\n";
    o << "lambda_mse=" << hexd(c.weights.lambda_mse) << "\n";
    o << "lambda_m=" << hexd(c.weights.lambda_m) << "\n";
    o << "lambda_gp=" << hexd(c.weights.lambda_gp) << "\n";
    o << "n_critic=" << c.weights.n_critic << "\n";
    o << "metric_epsilon=" << hexd(c.metric_epsilon) << "\n";
    o << "batch_size=" << c.batch_size << "\n";
    o << "epochs=" << c.epochs << "\n";
    o << "lr=" << hexd(c.lr) << "\n";
    o << "seed=" << c.seed << "\n";
    o << "differentiate_metric=" << (c.differentiate_metric ? 1 : 0) << "\n";
    o << "metric=" << (c.metric_mode == MetricMode::Mahalanobis ? "mahalanobis" : "euclidean")
      << "\n";
    return o.str();
}

void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "d_visual") c.model.d_visual = parse_u(value, key);
    else if (key == "k_semantic") c.model.k_semantic = parse_u(value, key);
    else if (key == "d_latent") c.model.d_latent = parse_u(value, key);
    else if (key == "k_proj") c.model.k_proj = parse_u(value, key);
    else if (key == "hidden_fusion") c.model.hidden_fusion = parse_u(value, key);
    else if (key == "hidden_encoder") c.model.hidden_encoder = parse_u(value, key);
    else if (key == "hidden_generator") c.model.hidden_generator = parse_u(value, key);
    else if (key == "hidden_disc_a") c.model.hidden_disc_a = parse_u(value, key);
    else if (key == "hidden_disc_b") c.model.hidden_disc_b = parse_u(value, key);
    else if (key == "fusion") {
        if (value == "atf") c.model.fusion_mode = FusionMode::Atf;
        else if (value == "concat") c.model.fusion_mode = FusionMode::Concat;
        else throw FormatError("config: fusion must be atf or concat, got '" + value + "'");
    } else if (key == "branches") {
        if (value == "dual") c.model.branch_mode = BranchMode::Dual;
        else if (value == "a_only") c.model.branch_mode = BranchMode::AOnly;
        else throw FormatError("config: branches must be dual or a_only, got '" + value + "'");
    } else if (key == "lambda_vae") c.weights.lambda_vae = parse_d(value, key);
    else if (key == "lambda_mse") c.weights.lambda_mse = parse_d(value, key);
    else if (key == "lambda_m") c.weights.lambda_m = parse_d(value, key);
    else if (key == "lambda_gp") c.weights.lambda_gp = parse_d(value, key);
    else if (key == "n_critic") c.weights.n_critic = static_cast<int>(parse_u(value, key));
    else if (key == "metric_epsilon") c.metric_epsilon = parse_d(value, key);
    else if (key == "batch_size") c.batch_size = parse_u(value, key);
    else if (key == "epochs") c.epochs = parse_u(value, key);
    else if (key == "lr") c.lr = parse_d(value, key);
    else if (key == "seed") c.seed = parse_u(value, key);
    else if (key == "differentiate_metric") c.differentiate_metric = parse_u(value, key) != 0;
    else if (key == "metric") {
        if (value == "mahalanobis") c.metric_mode = MetricMode::Mahalanobis;
        else if (value == "euclidean") c.metric_mode = MetricMode::Euclidean;
        else throw FormatError("config: metric must be mahalanobis or euclidean, got '" + value +
                               "'");
    } else {
        throw FormatError("config: unknown key '" + key + "'");
    }
}

TrainConfig train_config_from_text(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config: line without '=': '" + line + "'");
        apply_config_entry(c, line.substr(0, eq), line.substr(eq + 1));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

namespace {

struct Batch {
    Tensor xbar, sbar;
};

Batch gather_batch(const GzslDataset& ds, const std::vector<std::size_t>& indices,
                   std::size_t first, std::size_t count) {
    const std::size_t d = ds.d_visual(), k = ds.k_semantic();
    Batch b{Tensor({count, d}), Tensor({count, k})};
    for (std::size_t i = 0; i < count; ++i) {
        const auto& r = ds.records[indices[first + i]];
        for (std::size_t j = 0; j < d; ++j) b.xbar(i, j) = r.visual[j];
        for (std::size_t j = 0; j < k; ++j) b.sbar(i, j) = r.semantic[j];
    }
    return b;
}

struct ForwardNodes {
    NodeId xbar, sbar;
    NodeId fused, mu, logvar, z, xrec;
};

ForwardNodes build_forward(Tape& t, const ModelConfig& cfg, const ParamNodes& p,
                           const Batch& batch, const Tensor& noise) {
    ForwardNodes f;
    f.xbar = t.constant(batch.xbar);
    f.sbar = t.constant(batch.sbar);
    NodeId noise_c = t.constant(noise);
    f.fused = atf_fuse_node(t, cfg, p, f.xbar, f.sbar);
    LatentNodes lat = encode_node(t, cfg, p, f.fused, noise_c);
    f.mu = lat.mu;
    f.logvar = lat.logvar;
    f.z = lat.z;
    f.xrec = generate_node(t, cfg, p, f.z);
    return f;
}

std::map<std::string, Tensor> gradient_map(Tape& t, NodeId loss,
                                           const std::vector<std::string>& names,
                                           const ParamNodes& p) {
    std::vector<NodeId> wrt;
    wrt.reserve(names.size());
    for (const auto& name : names) wrt.push_back(p.at(name));
    GradientResult res = evaluate_with_gradients(t, loss, wrt);
    std::map<std::string, Tensor> out;
    for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = std::move(res.gradients[i]);
    return out;
}

// Covariance of the stacked projections expressed in tape primitives, for the
// mode that differentiates through the metric.
NodeId covariance_node(Tape& t, NodeId stacked) {
    const std::size_t rows = t.value(stacked).rows();
    NodeId means = t.affine(t.colsum(stacked), 1.0 / static_cast<double>(rows), 0.0);
    NodeId ones = t.constant(Tensor::full({rows, 1}, 1.0));
    NodeId centered = t.sub(stacked, t.matmul(ones, means));
    return t.affine(t.matmul(t.transpose(centered), centered),
                    1.0 / static_cast<double>(rows - 1), 0.0);
}

}  // namespace

Checkpoint train(const TrainConfig& config, const GzslDataset& dataset) {
    config.validate();
    dataset.validate();
    const ModelConfig& cfg = config.model;
    if (dataset.d_visual() != cfg.d_visual || dataset.k_semantic() != cfg.k_semantic)
        throw ContractViolation("train: dataset dimensions do not match the model config");

    const std::vector<std::size_t> train_idx = dataset.train_indices();
    if (train_idx.empty()) throw ContractViolation("train: empty train split");
    const std::size_t batch_n = std::min(config.batch_size, train_idx.size());
    if (batch_n < 2) throw ContractViolation("train: need at least 2 training records");

    RandomStream root(config.seed);
    RandomStream init_rng = root.fork(1);
    RandomStream shuffle_rng = root.fork(2);
    RandomStream noise_rng = root.fork(3);
    RandomStream alpha_rng = root.fork(4);

    ModelParameters params = init_parameters(cfg, init_rng);
    AdamOptimizer critic_opt(AdamConfig{config.lr, 0.9, 0.999, 1e-8});
    AdamOptimizer joint_opt(AdamConfig{config.lr, 0.9, 0.999, 1e-8});

    const bool dual = cfg.branch_mode == BranchMode::Dual;
    const bool maha = config.metric_mode == MetricMode::Mahalanobis;
    const double lambda_m_eff = (dual && maha) ? config.weights.lambda_m : 0.0;

    Checkpoint ck;
    ck.config = config;
    ck.m_star = identity_metric(cfg.k_proj);
    ck.params = params;

    const std::vector<std::string> critic_names = critic_param_names(cfg);
    const std::vector<std::string> generative_names = generative_param_names(cfg);
    const std::vector<std::string> projection_names = projection_param_names(cfg);

    MetricMatrix current_metric = identity_metric(cfg.k_proj);
    const std::size_t n_batches = std::max<std::size_t>(1, train_idx.size() / batch_n);
    std::vector<LossBreakdown> batch_log;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = shuffle_rng.permutation(train_idx.size());
        std::vector<std::size_t> shuffled(train_idx.size());
        for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = train_idx[order[i]];

        LossBreakdown epoch_sum;
        try {
            for (std::size_t b = 0; b < n_batches; ++b) {
                Batch batch = gather_batch(dataset, shuffled, b * batch_n, batch_n);
                Tensor noise = noise_rng.normal_tensor({batch_n, cfg.d_latent});

                // critic phase: the WGAN game updates the shared trunk and
                // the critic head only
                for (int step = 0; step < config.weights.n_critic; ++step) {
                    Tape t;
                    ParamNodes p = stage_parameters(t, params);
                    ForwardNodes f = build_forward(t, cfg, p, batch, noise);
                    NodeId critic_real = discriminate_a_critic_node(t, cfg, p, f.fused);
                    NodeId critic_fake = discriminate_a_critic_node(t, cfg, p, f.xrec);
                    NodeId alpha = t.constant(alpha_rng.uniform_tensor({batch_n, 1}));
                    CriticFn critic_fn = [&cfg, &p](Tape& tt, NodeId v) {
                        return discriminate_a_critic_node(tt, cfg, p, v);
                    };
                    NodeId gp = gradient_penalty_node(t, critic_fn, f.fused, f.xrec, alpha);
                    WganLossNodes wg =
                        wgan_losses_node(t, critic_real, critic_fake, gp, config.weights.lambda_gp);
                    critic_opt.step(params, gradient_map(t, wg.critic_loss, critic_names, p));
                }

                // joint phase
                Tape t;
                ParamNodes p = stage_parameters(t, params);
                ForwardNodes f = build_forward(t, cfg, p, batch, noise);
                NodeId critic_real = discriminate_a_critic_node(t, cfg, p, f.fused);
                DiscANodes disc_a = discriminate_a_node(t, cfg, p, f.xrec);
                NodeId alpha = t.constant(alpha_rng.uniform_tensor({batch_n, 1}));
                CriticFn critic_fn = [&cfg, &p](Tape& tt, NodeId v) {
                    return discriminate_a_critic_node(tt, cfg, p, v);
                };
                NodeId gp = gradient_penalty_node(t, critic_fn, f.fused, f.xrec, alpha);
                WganLossNodes wg =
                    wgan_losses_node(t, critic_real, disc_a.critic, gp, config.weights.lambda_gp);
                NodeId l_vae = vae_loss_node(t, f.mu, f.logvar, f.fused, f.xrec);
                NodeId l_mse = mse_loss_node(t, f.fused, f.xrec);

                double l_m_value = 0.0;
                NodeId objective = wg.generator_loss;
                objective = t.add(objective, t.affine(l_vae, config.weights.lambda_vae, 0.0));
                objective = t.add(objective, t.affine(l_mse, config.weights.lambda_mse, 0.0));
                NodeId metric_term = kNoNode;
                if (dual) {
                    NodeId y_proj = discriminate_b_node(t, cfg, p, f.xbar);
                    NodeId m_node;
                    if (maha && config.differentiate_metric) {
                        NodeId stacked = t.concat_rows(disc_a.projection, y_proj);
                        NodeId ridge = t.constant([&] {
                            Tensor r = Tensor::identity(cfg.k_proj);
                            for (std::size_t i = 0; i < cfg.k_proj; ++i)
                                r(i, i) = config.metric_epsilon;
                            return r;
                        }());
                        m_node = t.spd_inverse(t.add(covariance_node(t, stacked), ridge));
                        current_metric.m = t.value(m_node);
                        current_metric.epsilon = config.metric_epsilon;
                        current_metric.source_batch_size = 2 * batch_n;
                    } else if (maha) {
                        Tensor stacked({2 * batch_n, cfg.k_proj});
                        const Tensor& xv = t.value(disc_a.projection);
                        const Tensor& yv = t.value(y_proj);
                        std::copy(xv.data().begin(), xv.data().end(), stacked.data().begin());
                        std::copy(yv.data().begin(), yv.data().end(),
                                  stacked.data().begin() + xv.numel());
                        current_metric =
                            ridge_pseudo_inverse(batch_covariance(stacked), config.metric_epsilon);
                        current_metric.source_batch_size = 2 * batch_n;
                        m_node = t.constant(current_metric.m);
                    } else {
                        current_metric = identity_metric(cfg.k_proj);
                        m_node = t.constant(current_metric.m);
                    }
                    NodeId l_m = mahalanobis_loss_node(t, disc_a.projection, y_proj, m_node);
                    l_m_value = t.scalar_value(l_m);
                    metric_term = t.affine(l_m, lambda_m_eff, 0.0);
                    objective = t.add(objective, metric_term);
                } else {
                    current_metric = identity_metric(cfg.k_proj);
                }

                // generative parameters follow the full objective; the
                // projection pathway (trunk, both heads, branch B) is driven
                // by the metric term alone
                std::map<std::string, Tensor> grads =
                    gradient_map(t, objective, generative_names, p);
                if (metric_term != kNoNode) {
                    auto proj_grads = gradient_map(t, metric_term, projection_names, p);
                    grads.merge(proj_grads);
                }
                joint_opt.step(params, grads);

                LossWeights eff = config.weights;
                eff.lambda_m = lambda_m_eff;
                LossBreakdown bd =
                    total_loss(t.scalar_value(wg.critic_loss), t.scalar_value(l_vae),
                               t.scalar_value(l_mse), l_m_value, eff);
                batch_log.push_back(bd);
                epoch_sum.l_wgan += bd.l_wgan;
                epoch_sum.l_vae += bd.l_vae;
                epoch_sum.l_mse += bd.l_mse;
                epoch_sum.l_m += bd.l_m;
                epoch_sum.total += bd.total;
            }
        } catch (const NumericalFailure&) {
            ck.nan_abort = true;
            return ck;  // snapshot from the last completed epoch
        }

        const double inv = 1.0 / static_cast<double>(n_batches);
        ck.history.push_back({epoch_sum.l_wgan * inv, epoch_sum.l_vae * inv,
                              epoch_sum.l_mse * inv, epoch_sum.l_m * inv,
                              epoch_sum.total * inv});
        ck.batch_history = batch_log;
        ck.params = params;
        ck.m_star = current_metric;
        ck.epoch = epoch + 1;
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Inference and evaluation.
// ---------------------------------------------------------------------------

Tensor query_projections(const Checkpoint& ck, const Tensor& visuals) {
    const ModelConfig& cfg = ck.config.model;
    if (visuals.cols() != cfg.d_visual)
        throw ContractViolation("query_projections: visual dimension mismatch");
    if (cfg.branch_mode == BranchMode::Dual) return discriminate_b(cfg, ck.params, visuals);
    return discriminate_a(cfg, ck.params, visuals).projection;
}

Tensor prototype_projections(const Checkpoint& ck, const Tensor& visuals,
                             const Tensor& semantic) {
    const ModelConfig& cfg = ck.config.model;
    if (visuals.cols() != cfg.d_visual)
        throw ContractViolation("prototype_projections: visual dimension mismatch");
    if (semantic.numel() != cfg.k_semantic)
        throw ContractViolation("prototype_projections: semantic dimension mismatch");
    Tensor sem_rows({visuals.rows(), cfg.k_semantic});
    for (std::size_t i = 0; i < visuals.rows(); ++i)
        for (std::size_t j = 0; j < cfg.k_semantic; ++j) sem_rows(i, j) = semantic[j];
    Tensor fused = atf_fuse(cfg, ck.params, visuals, sem_rows);
    Tensor noise = Tensor::zeros({visuals.rows(), cfg.d_latent});
    LatentSample lat = encode(cfg, ck.params, fused, noise);
    Tensor gen = generate(cfg, ck.params, lat.mu);
    return discriminate_a(cfg, ck.params, gen).projection;
}

namespace {

// distances: one column per candidate class, ascending class id.
std::vector<int> argmin_classes(const std::vector<int>& class_ids,
                                const std::vector<Tensor>& dist_cols, std::size_t n_rows) {
    std::vector<int> out(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        int best = class_ids[0];
        double best_d = dist_cols[0][r];
        for (std::size_t c = 1; c < class_ids.size(); ++c) {
            if (dist_cols[c][r] < best_d) {
                best_d = dist_cols[c][r];
                best = class_ids[c];
            }
        }
        out[r] = best;
    }
    return out;
}

std::vector<int> classify_rows(const Checkpoint& ck, const Tensor& visuals,
                               const std::map<int, Tensor>& class_semantics) {
    if (class_semantics.empty())
        throw ContractViolation("classify: no candidate classes supplied");
    const std::size_t k_proj = ck.config.model.k_proj;
    Tensor y = query_projections(ck, visuals);
    std::vector<int> ids;
    std::vector<Tensor> cols;
    for (const auto& [label, semantic] : class_semantics) {
        Tensor x = prototype_projections(ck, visuals, semantic);
        Tensor diff({visuals.rows(), k_proj});
        for (std::size_t i = 0; i < diff.numel(); ++i) diff[i] = x[i] - y[i];
        Tensor d({visuals.rows()});
        kernels::rowwise_quadform(diff.data().data(), ck.m_star.m.data().data(),
                                  d.data().data(), visuals.rows(), k_proj);
        ids.push_back(label);
        cols.push_back(std::move(d));
    }
    return argmin_classes(ids, cols, visuals.rows());
}

}  // namespace

int classify(const Tensor& visual, const std::map<int, Tensor>& class_semantics,
             const Checkpoint& ck) {
    Tensor row({1, visual.numel()}, visual.data());
    return classify_rows(ck, row, class_semantics)[0];
}

std::vector<int> classify_batch(const Tensor& visuals,
                                const std::map<int, Tensor>& class_semantics,
                                const Checkpoint& ck) {
    return classify_rows(ck, visuals, class_semantics);
}

double harmonic_mean(double u, double s) {
    if (u + s <= 0.0) return 0.0;
    return 2.0 * u * s / (u + s);
}

EvalReport evaluate(const GzslDataset& dataset, const Checkpoint& ck) {
    dataset.validate();
    if (dataset.d_visual() != ck.config.model.d_visual ||
        dataset.k_semantic() != ck.config.model.k_semantic)
        throw ContractViolation("evaluate: checkpoint dimensions (" +
                                std::to_string(ck.config.model.d_visual) + "/" +
                                std::to_string(ck.config.model.k_semantic) +
                                ") do not match the dataset (" +
                                std::to_string(dataset.d_visual()) + "/" +
                                std::to_string(dataset.k_semantic()) + ")");

    const std::vector<std::size_t> test_idx = dataset.test_indices();
    bool have_seen = false, have_unseen = false;
    for (std::size_t i : test_idx) {
        if (dataset.seen_classes.count(dataset.records[i].label)) have_seen = true;
        if (dataset.unseen_classes.count(dataset.records[i].label)) have_unseen = true;
    }
    if (!have_seen || !have_unseen)
        throw ContractViolation(std::string("evaluate: test split has no ") +
                                (!have_seen ? "seen" : "unseen") +
                                "-class records; H is undefined");

    const std::size_t d = dataset.d_visual();
    Tensor visuals({test_idx.size(), d});
    for (std::size_t r = 0; r < test_idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j)
            visuals(r, j) = dataset.records[test_idx[r]].visual[j];

    std::vector<int> predicted = classify_rows(ck, visuals, dataset.class_semantics());

    std::map<int, std::pair<std::size_t, std::size_t>> tally;  // label -> (correct, total)
    for (std::size_t r = 0; r < test_idx.size(); ++r) {
        const int truth = dataset.records[test_idx[r]].label;
        auto& t = tally[truth];
        if (predicted[r] == truth) ++t.first;
        ++t.second;
    }

    EvalReport report;
    double sum_seen = 0.0, sum_unseen = 0.0;
    std::size_t n_seen = 0, n_unseen = 0;
    for (const auto& [label, t] : tally) {
        const double acc = 100.0 * static_cast<double>(t.first) / static_cast<double>(t.second);
        report.per_class[label] = acc;
        if (dataset.seen_classes.count(label)) {
            sum_seen += acc;
            ++n_seen;
        } else {
            sum_unseen += acc;
            ++n_unseen;
        }
    }
    report.s = n_seen ? sum_seen / static_cast<double>(n_seen) : 0.0;
    report.u = n_unseen ? sum_unseen / static_cast<double>(n_unseen) : 0.0;
    report.h = harmonic_mean(report.u, report.s);
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic BGCP, u16 version, then length-prefixed
// sections (config text, named parameter tensors, frozen metric, loss
// history, meta).
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'B', 'G', 'C', 'P'};
constexpr std::uint16_t kCkptVersion = 1;

struct ByteWriter {
    std::string buf;
    void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf.append(s);
    }
    void raw(const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }
};

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit ByteReader(const std::string& b) : buf(b) {}
    void need(std::size_t n, const char* what) {
        if (pos + n > buf.size())
            throw FormatError(std::string("checkpoint: truncated while reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v;
        std::memcpy(&v, buf.data() + pos, 2);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        double v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str(const char* what) {
        std::uint32_t n = u32(what);
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    bool done() const { return pos == buf.size(); }
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    ByteWriter params;
    params.u32(static_cast<std::uint32_t>(ck.params.size()));
    for (const auto& [name, t] : ck.params) {
        params.str(name);
        params.u8(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t dim : t.shape()) params.u64(dim);
        for (double v : t.data()) params.f64(v);
    }

    ByteWriter metric;
    metric.u32(static_cast<std::uint32_t>(ck.m_star.dim()));
    metric.f64(ck.m_star.epsilon);
    metric.u64(ck.m_star.source_batch_size);
    for (double v : ck.m_star.m.data()) metric.f64(v);

    auto pack_breakdowns = [](const std::vector<LossBreakdown>& list) {
        ByteWriter w;
        w.u64(list.size());
        for (const auto& h : list) {
            w.f64(h.l_wgan);
            w.f64(h.l_vae);
            w.f64(h.l_mse);
            w.f64(h.l_m);
            w.f64(h.total);
        }
        return w;
    };
    ByteWriter history = pack_breakdowns(ck.history);
    ByteWriter batches = pack_breakdowns(ck.batch_history);

    ByteWriter meta;
    meta.u64(ck.epoch);
    meta.u8(ck.nan_abort ? 1 : 0);

    ByteWriter out;
    out.raw(kCkptMagic, 4);
    out.u16(kCkptVersion);
    std::string config_text = train_config_to_text(ck.config);
    struct Section {
        const char* name;
        const std::string* payload;
    };
    const Section list[] = {{"config", &config_text},
                            {"params", &params.buf},
                            {"metric", &metric.buf},
                            {"history", &history.buf},
                            {"batches", &batches.buf},
                            {"meta", &meta.buf}};
    out.u32(static_cast<std::uint32_t>(std::size(list)));
    for (const auto& s : list) {
        out.str(s.name);
        out.u64(s.payload->size());
        out.raw(s.payload->data(), s.payload->size());
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f.write(out.buf.data(), static_cast<std::streamsize>(out.buf.size()));
    if (!f) throw FormatError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string blob = ss.str();
    if (blob.size() < 6 || std::memcmp(blob.data(), kCkptMagic, 4) != 0)
        throw FormatError("checkpoint: " + path + " is not a checkpoint (bad magic)");
    ByteReader r(blob);
    r.pos = 4;
    const std::uint16_t version = r.u16("version");
    if (version != kCkptVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    std::map<std::string, std::string> sections;
    const std::uint32_t n_sections = r.u32("section count");
    for (std::uint32_t i = 0; i < n_sections; ++i) {
        std::string name = r.str("section name");
        const std::uint64_t len = r.u64("section length");
        r.need(len, "section payload");
        sections[name] = blob.substr(r.pos, len);
        r.pos += len;
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes after sections");
    for (const char* required : {"config", "params", "metric", "history", "batches", "meta"})
        if (!sections.count(required))
            throw FormatError(std::string("checkpoint: missing section ") + required);

    Checkpoint ck;
    ck.config = train_config_from_text(sections["config"]);

    {
        ByteReader pr(sections["params"]);
        const std::uint32_t n = pr.u32("parameter count");
        for (std::uint32_t i = 0; i < n; ++i) {
            std::string name = pr.str("parameter name");
            const std::uint8_t rank = pr.u8("parameter rank");
            if (rank < 1 || rank > 2) throw FormatError("checkpoint: bad tensor rank");
            std::vector<std::size_t> shape;
            for (std::uint8_t d = 0; d < rank; ++d)
                shape.push_back(static_cast<std::size_t>(pr.u64("parameter dim")));
            Tensor t(shape);
            for (std::size_t j = 0; j < t.numel(); ++j) t[j] = pr.f64("parameter data");
            ck.params[name] = std::move(t);
        }
    }
    {
        ByteReader mr(sections["metric"]);
        const std::uint32_t k = mr.u32("metric dim");
        ck.m_star.epsilon = mr.f64("metric epsilon");
        ck.m_star.source_batch_size = static_cast<std::size_t>(mr.u64("metric batch size"));
        ck.m_star.m = Tensor({k, k});
        for (std::size_t j = 0; j < ck.m_star.m.numel(); ++j)
            ck.m_star.m[j] = mr.f64("metric data");
    }
    auto unpack_breakdowns = [](const std::string& payload, std::vector<LossBreakdown>& out) {
        ByteReader hr(payload);
        const std::uint64_t n = hr.u64("history length");
        for (std::uint64_t i = 0; i < n; ++i) {
            LossBreakdown h;
            h.l_wgan = hr.f64("history");
            h.l_vae = hr.f64("history");
            h.l_mse = hr.f64("history");
            h.l_m = hr.f64("history");
            h.total = hr.f64("history");
            out.push_back(h);
        }
    };
    unpack_breakdowns(sections["history"], ck.history);
    unpack_breakdowns(sections["batches"], ck.batch_history);
    {
        ByteReader er(sections["meta"]);
        ck.epoch = static_cast<std::size_t>(er.u64("epoch"));
        ck.nan_abort = er.u8("nan_abort") != 0;
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Ablation harness.
// ---------------------------------------------------------------------------

namespace {

struct PendingRow {
    std::string name;
    TrainConfig config;
};

}  // namespace

std::vector<AblationRow> ablate(const TrainConfig& base, const AblationAxes& axes,
                                const GzslDataset& dataset, unsigned threads) {
    std::vector<PendingRow> pending;

    if (axes.metric) {
        TrainConfig maha = base;
        maha.metric_mode = MetricMode::Mahalanobis;
        pending.push_back({"metric=mahalanobis", maha});
        TrainConfig euclid = base;
        euclid.metric_mode = MetricMode::Euclidean;
        pending.push_back({"metric=euclidean", euclid});
    }
    if (axes.branches) {
        TrainConfig dual = base;
        dual.model.branch_mode = BranchMode::Dual;
        pending.push_back({"branches=dual", dual});
        TrainConfig a_only = base;
        a_only.model.branch_mode = BranchMode::AOnly;
        a_only.metric_mode = MetricMode::Euclidean;
        pending.push_back({"branches=a_only", a_only});
    }
    if (axes.fusion) {
        TrainConfig atf = base;
        atf.model.fusion_mode = FusionMode::Atf;
        pending.push_back({"fusion=atf", atf});
        TrainConfig concat = base;
        concat.model.fusion_mode = FusionMode::Concat;
        pending.push_back({"fusion=concat", concat});
    }
    if (!axes.lambda_grid.empty()) {
        const char* names[] = {"lambda_vae", "lambda_mse", "lambda_m"};
        for (int w = 0; w < 3; ++w) {
            for (double v : axes.lambda_grid) {
                TrainConfig c = base;
                if (w == 0) c.weights.lambda_vae = v;
                if (w == 1) c.weights.lambda_mse = v;
                if (w == 2) c.weights.lambda_m = v;
                char label[64];
                std::snprintf(label, sizeof(label), "%s=%g", names[w], v);
                pending.push_back({label, c});
            }
        }
        pending.push_back({"lambda=baseline", base});
    }
    for (const auto& [d_latent, k_proj] : axes.dims_grid) {
        TrainConfig c = base;
        c.model.d_latent = d_latent;
        c.model.k_proj = k_proj;
        pending.push_back({"dims=latent" + std::to_string(d_latent) + ",proj" +
                               std::to_string(k_proj),
                           c});
    }

    for (const auto& row : pending) row.config.validate();

    std::vector<AblationRow> rows(pending.size());
    const unsigned n_threads = std::max(1u, threads);
    if (n_threads == 1 || pending.size() <= 1) {
        for (std::size_t i = 0; i < pending.size(); ++i) {
            Checkpoint ck = train(pending[i].config, dataset);
            rows[i] = {pending[i].name, evaluate(dataset, ck)};
        }
        return rows;
    }

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (unsigned tid = 0; tid < n_threads; ++tid) {
        pool.emplace_back([&, tid] {
            try {
                for (std::size_t i = tid; i < pending.size(); i += n_threads) {
                    Checkpoint ck = train(pending[i].config, dataset);
                    rows[i] = {pending[i].name, evaluate(dataset, ck)};
                }
            } catch (...) {
                errors[tid] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

void write_report_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "config,U,S,H\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f\n", row.config.c_str(),
                      row.report.u, row.report.s, row.report.h);
        out << buf;
    }
}

}  // namespace biasguard
