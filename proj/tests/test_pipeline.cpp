#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "biasguard/errors.hpp"
#include "biasguard/metric.hpp"
#include "biasguard/pipeline.hpp"
#include "biasguard/rng.hpp"

using namespace biasguard;

namespace {

SynthConfig small_data_config(std::uint64_t seed = 3) {
    SynthConfig sc;
    sc.n_classes = 6;
    sc.n_unseen = 2;
    sc.samples_per_class = 20;
    sc.d_visual = 12;
    sc.k_semantic = 6;
    sc.cluster_scale = 0.4;
    sc.seed = seed;
    return sc;
}

TrainConfig small_train_config(const SynthConfig& sc, std::uint64_t seed = 9) {
    TrainConfig c;
    c.model.d_visual = sc.d_visual;
    c.model.k_semantic = sc.k_semantic;
    c.model.d_latent = 6;
    c.model.k_proj = 8;
    c.batch_size = 10;
    c.epochs = 2;
    c.seed = seed;
    return c;
}

GzslDataset small_dataset(std::uint64_t seed = 3) {
    GzslDataset ds = synth_gzsl(small_data_config(seed));
    make_splits(ds, 0.25, seed + 100);
    return ds;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("harmonic mean") {
    CHECK(std::abs(harmonic_mean(62.1, 74.6) - 67.8) < 0.05);
    CHECK(std::abs(harmonic_mean(67.2, 76.3) - 71.5) < 0.05);
    CHECK(std::abs(harmonic_mean(57.1, 81.6) - 67.2) < 0.05);
    CHECK(harmonic_mean(40.0, 40.0) == 40.0);
    CHECK(harmonic_mean(0.0, 80.0) == 0.0);
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ContractViolation);

    TrainConfig a_only_maha;
    a_only_maha.model.branch_mode = BranchMode::AOnly;
    a_only_maha.metric_mode = MetricMode::Mahalanobis;
    CHECK_THROWS_AS(a_only_maha.validate(), ContractViolation);

    TrainConfig exact_no_ridge;
    exact_no_ridge.differentiate_metric = true;
    exact_no_ridge.metric_epsilon = 0.0;
    CHECK_THROWS_AS(exact_no_ridge.validate(), ContractViolation);
}

TEST_CASE("config text round trip is exact") {
    TrainConfig c;
    c.weights.lambda_vae = 0.1;
    c.weights.lambda_m = 0.7351234567890123;
    c.lr = 3e-4;
    c.seed = 123456789012345ull;
    c.model.fusion_mode = FusionMode::Concat;
    c.metric_mode = MetricMode::Euclidean;
    TrainConfig back = train_config_from_text(train_config_to_text(c));
    CHECK(train_config_to_text(back) == train_config_to_text(c));
    CHECK(back.weights.lambda_m == c.weights.lambda_m);
    CHECK(back.lr == c.lr);

    CHECK_THROWS_AS(train_config_from_text("no_such_key=1\n"), FormatError);
}

TEST_CASE("training runs, improves within the first epoch, and is deterministic") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    cfg.epochs = 1;

    Checkpoint ck = train(cfg, ds);
    REQUIRE(ck.epoch == 1);
    REQUIRE(!ck.nan_abort);
    REQUIRE(ck.batch_history.size() >= 2);
    CHECK(ck.batch_history.back().total < ck.batch_history.front().total);

    // bitwise determinism, checked through the serialized container
    Checkpoint ck2 = train(cfg, ds);
    save_checkpoint(ck, "tmp_a.bgcp");
    save_checkpoint(ck2, "tmp_b.bgcp");
    CHECK(slurp("tmp_a.bgcp") == slurp("tmp_b.bgcp"));
    std::remove("tmp_a.bgcp");
    std::remove("tmp_b.bgcp");
}

TEST_CASE("all-zero loss weights reduce training to the WGAN game") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    cfg.epochs = 1;
    cfg.weights.lambda_vae = 0.0;
    cfg.weights.lambda_mse = 0.0;
    cfg.weights.lambda_m = 0.0;
    Checkpoint ck = train(cfg, ds);
    REQUIRE(!ck.history.empty());
    // the other terms are still reported
    CHECK(ck.history.back().l_vae > 0.0);
    CHECK(ck.history.back().l_mse > 0.0);
    CHECK(ck.history.back().l_m != 0.0);
    // but the weighted total only carries the WGAN part
    CHECK(ck.history.back().total == doctest::Approx(ck.history.back().l_wgan).epsilon(1e-12));
}

TEST_CASE("euclidean mode freezes the identity metric") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    cfg.metric_mode = MetricMode::Euclidean;
    Checkpoint ck = train(cfg, ds);
    CHECK(ck.m_star.m == Tensor::identity(cfg.model.k_proj));
}

TEST_CASE("exact-metric mode runs and differs from the frozen-metric mode") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    cfg.epochs = 1;
    Checkpoint frozen = train(cfg, ds);
    cfg.differentiate_metric = true;
    Checkpoint exact = train(cfg, ds);
    CHECK(!exact.nan_abort);
    CHECK(!(exact.params.at("disc_a.proj.w") == frozen.params.at("disc_a.proj.w")));
}

TEST_CASE("numerical blowup aborts with the last-good checkpoint") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    cfg.epochs = 4;
    cfg.lr = 1e14;  // drives the encoder variance into overflow
    Checkpoint ck = train(cfg, ds);
    CHECK(ck.nan_abort);
    CHECK(ck.epoch < 4);
}

TEST_CASE("empty train split is a contract violation") {
    GzslDataset ds;
    ds.unseen_classes = {0};
    for (int i = 0; i < 4; ++i) {
        FeatureRecord r;
        r.label = 0;
        r.visual = Tensor::row({0.1, 0.2});
        r.semantic = Tensor::row({1.0});
        r.split = Split::Test;
        ds.records.push_back(r);
    }
    TrainConfig cfg;
    cfg.model.d_visual = 2;
    cfg.model.k_semantic = 1;
    CHECK_THROWS_AS(train(cfg, ds), ContractViolation);
}

TEST_CASE("classification semantics") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    Checkpoint ck = train(cfg, ds);
    auto semantics = ds.class_semantics();

    SUBCASE("single candidate class is always returned") {
        std::map<int, Tensor> one = {{4, semantics.at(4)}};
        CHECK(classify(ds.records[0].visual, one, ck) == 4);
    }

    SUBCASE("classify agrees with an independent argmin over exposed projections") {
        for (std::size_t i = 0; i < 10; ++i) {
            const Tensor& v = ds.records[i * 7].visual;
            Tensor row({1, v.numel()}, v.data());
            Tensor y = query_projections(ck, row);
            int best = -1;
            double best_d = 0.0;
            for (const auto& [label, sem] : semantics) {
                Tensor x = prototype_projections(ck, row, sem);
                double d = mahalanobis_sq(x, y, ck.m_star);
                if (best == -1 || d < best_d) {
                    best = label;
                    best_d = d;
                }
            }
            CHECK(classify(v, semantics, ck) == best);
        }
    }

    SUBCASE("argmin is invariant under positive scaling of the metric") {
        for (double c : {0.1, 10.0}) {
            Checkpoint scaled = ck;
            for (auto& v : scaled.m_star.m.data()) v *= c;
            for (std::size_t i = 0; i < 20; ++i)
                CHECK(classify(ds.records[i * 5].visual, semantics, scaled) ==
                      classify(ds.records[i * 5].visual, semantics, ck));
        }
    }

    SUBCASE("identity metric equals an independently coded Euclidean rule") {
        Checkpoint euclid = ck;
        euclid.m_star = identity_metric(cfg.model.k_proj);
        for (std::size_t i = 0; i < 15; ++i) {
            const Tensor& v = ds.records[i * 8].visual;
            Tensor row({1, v.numel()}, v.data());
            Tensor y = query_projections(euclid, row);
            int best = -1;
            double best_d = 0.0;
            for (const auto& [label, sem] : semantics) {
                Tensor x = prototype_projections(euclid, row, sem);
                double d = 0.0;
                for (std::size_t j = 0; j < x.numel(); ++j)
                    d += (x[j] - y[j]) * (x[j] - y[j]);
                if (best == -1 || d < best_d) {
                    best = label;
                    best_d = d;
                }
            }
            CHECK(classify(v, semantics, euclid) == best);
        }
    }
}

TEST_CASE("well-trained model beats the chance floor on its training data") {
    SynthConfig sc = small_data_config(21);
    sc.bias_shift = 0.0;
    GzslDataset ds = synth_gzsl(sc);
    make_splits(ds, 0.25, 50);
    TrainConfig cfg = small_train_config(sc, 31);
    cfg.epochs = 12;
    Checkpoint ck = train(cfg, ds);
    REQUIRE(!ck.nan_abort);

    auto semantics = ds.class_semantics();
    std::size_t correct = 0, total = 0;
    for (std::size_t i : ds.train_indices()) {
        if (classify(ds.records[i].visual, semantics, ck) == ds.records[i].label) ++correct;
        ++total;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    CHECK(acc > 1.0 / 6.0);
}

TEST_CASE("evaluate") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    Checkpoint ck = train(cfg, ds);

    EvalReport report = evaluate(ds, ck);
    CHECK(report.u >= 0.0);
    CHECK(report.u <= 100.0);
    CHECK(report.s >= 0.0);
    CHECK(report.s <= 100.0);
    CHECK(report.h == harmonic_mean(report.u, report.s));

    SUBCASE("record order never changes the report") {
        GzslDataset shuffled = ds;
        RandomStream rng(5);
        auto perm = rng.permutation(shuffled.records.size());
        for (std::size_t i = 0; i < perm.size(); ++i)
            shuffled.records[i] = ds.records[perm[i]];
        EvalReport r2 = evaluate(shuffled, ck);
        CHECK(r2.u == report.u);
        CHECK(r2.s == report.s);
        CHECK(r2.h == report.h);
    }

    SUBCASE("missing unseen-side test data is an error") {
        GzslDataset seen_only = ds;
        std::erase_if(seen_only.records, [&](const FeatureRecord& r) {
            return seen_only.unseen_classes.count(r.label) > 0;
        });
        seen_only.unseen_classes.clear();
        // reinstate one unseen class id with no records: still no unseen rows
        CHECK_THROWS_AS(evaluate(seen_only, ck), ContractViolation);
    }

    SUBCASE("dimension mismatch names the dimensions") {
        SynthConfig other = small_data_config(8);
        other.d_visual = 7;
        GzslDataset wrong = synth_gzsl(other);
        make_splits(wrong, 0.25, 1);
        try {
            evaluate(wrong, ck);
            FAIL("expected ContractViolation");
        } catch (const ContractViolation& e) {
            CHECK(std::string(e.what()).find("dimension") != std::string::npos);
        }
    }
}

TEST_CASE("checkpoint round trip") {
    GzslDataset ds = small_dataset();
    TrainConfig cfg = small_train_config(small_data_config());
    Checkpoint ck = train(cfg, ds);

    save_checkpoint(ck, "tmp_ck.bgcp");
    Checkpoint loaded = load_checkpoint("tmp_ck.bgcp");

    SUBCASE("loaded checkpoint evaluates identically") {
        EvalReport a = evaluate(ds, ck);
        EvalReport b = evaluate(ds, loaded);
        CHECK(a.u == b.u);
        CHECK(a.s == b.s);
        CHECK(a.h == b.h);
        CHECK(a.per_class == b.per_class);
    }
    SUBCASE("resaving reproduces the bytes") {
        save_checkpoint(loaded, "tmp_ck2.bgcp");
        CHECK(slurp("tmp_ck.bgcp") == slurp("tmp_ck2.bgcp"));
        std::remove("tmp_ck2.bgcp");
    }
    SUBCASE("wrong magic is a format error") {
        std::ofstream out("tmp_bad.bgcp", std::ios::binary);
        out << "WHAT is this file";
        out.close();
        CHECK_THROWS_AS(load_checkpoint("tmp_bad.bgcp"), FormatError);
        std::remove("tmp_bad.bgcp");
    }
    SUBCASE("truncation is a format error") {
        std::string blob = slurp("tmp_ck.bgcp");
        std::ofstream out("tmp_trunc.bgcp", std::ios::binary);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size() / 2));
        out.close();
        CHECK_THROWS_AS(load_checkpoint("tmp_trunc.bgcp"), FormatError);
        std::remove("tmp_trunc.bgcp");
    }
    SUBCASE("version mismatch is a distinct format error") {
        std::string blob = slurp("tmp_ck.bgcp");
        blob[4] = 9;  // bump the version field
        std::ofstream out("tmp_ver.bgcp", std::ios::binary);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        out.close();
        try {
            load_checkpoint("tmp_ver.bgcp");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
        std::remove("tmp_ver.bgcp");
    }
    std::remove("tmp_ck.bgcp");
}

TEST_CASE("ablation harness") {
    GzslDataset ds = small_dataset();
    TrainConfig base = small_train_config(small_data_config());
    base.epochs = 1;

    SUBCASE("single-point dims axis equals a direct run") {
        AblationAxes axes;
        axes.dims_grid = {{base.model.d_latent, base.model.k_proj}};
        auto rows = ablate(base, axes, ds);
        REQUIRE(rows.size() == 1);
        Checkpoint direct = train(base, ds);
        EvalReport ref = evaluate(ds, direct);
        CHECK(rows[0].report.h == ref.h);
        CHECK(rows[0].report.u == ref.u);
    }
    SUBCASE("lambda grid mirrors the sweep structure: 9 rows plus baseline") {
        AblationAxes axes;
        axes.lambda_grid = {0.1, 0.5, 0.8};
        auto rows = ablate(base, axes, ds);
        CHECK(rows.size() == 10);
        CHECK(rows.back().config == "lambda=baseline");
    }
    SUBCASE("metric axis emits both rows and parallel execution matches serial") {
        AblationAxes axes;
        axes.metric = true;
        auto serial_rows = ablate(base, axes, ds, 1);
        auto parallel_rows = ablate(base, axes, ds, 2);
        REQUIRE(serial_rows.size() == 2);
        REQUIRE(parallel_rows.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(serial_rows[i].config == parallel_rows[i].config);
            CHECK(serial_rows[i].report.h == parallel_rows[i].report.h);
        }
    }
    SUBCASE("csv output has the documented header") {
        AblationAxes axes;
        axes.metric = true;
        auto rows = ablate(base, axes, ds);
        write_report_csv(rows, "tmp_table.csv");
        std::string text = slurp("tmp_table.csv");
        CHECK(text.rfind("config,U,S,H\n", 0) == 0);
        CHECK(text.find("metric=euclidean") != std::string::npos);
        std::remove("tmp_table.csv");
    }
}
