#include "biasguard/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "biasguard/errors.hpp"
#include "biasguard/rng.hpp"

namespace biasguard {

std::vector<std::size_t> GzslDataset::train_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == Split::Train) out.push_back(i);
    return out;
}

std::vector<std::size_t> GzslDataset::test_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].split == Split::Test) out.push_back(i);
    return out;
}

std::map<int, Tensor> GzslDataset::class_semantics() const {
    std::map<int, Tensor> out;
    for (const auto& r : records) out.emplace(r.label, r.semantic);
    return out;
}

void GzslDataset::validate() const {
    for (int c : seen_classes)
        if (unseen_classes.count(c))
            throw FormatError("dataset: class " + std::to_string(c) +
                              " listed as both seen and unseen");
    std::map<int, const Tensor*> sem;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.visual.numel() != d_visual() || r.semantic.numel() != k_semantic())
            throw FormatError("dataset: dimension mismatch at record " + std::to_string(i));
        const bool is_seen = seen_classes.count(r.label) > 0;
        const bool is_unseen = unseen_classes.count(r.label) > 0;
        if (is_seen == is_unseen)
            throw FormatError("dataset: class " + std::to_string(r.label) +
                              " is not assigned to exactly one of seen/unseen");
        if (r.split == Split::Train && !is_seen)
            throw FormatError("dataset: record " + std::to_string(i) +
                              " is train-tagged but its class " + std::to_string(r.label) +
                              " is unseen");
        auto it = sem.find(r.label);
        if (it == sem.end()) {
            sem[r.label] = &r.semantic;
        } else if (!(it->second->data() == r.semantic.data())) {
            throw FormatError("dataset: class " + std::to_string(r.label) +
                              " has differing semantic vectors");
        }
    }
}

namespace {

void check_synth_config(const SynthConfig& config) {
    if (config.n_classes < 1 || config.n_unseen >= config.n_classes)
        throw ContractViolation("synth_gzsl: need n_unseen < n_classes and n_classes >= 1");
    if (config.samples_per_class < 1)
        throw ContractViolation("synth_gzsl: samples_per_class must be >= 1");
    if (config.d_visual < 1 || config.k_semantic < 1)
        throw ContractViolation("synth_gzsl: dimensions must be >= 1");
    if (config.anisotropy < 1.0) throw ContractViolation("synth_gzsl: anisotropy must be >= 1");
    if (config.cluster_scale <= 0.0)
        throw ContractViolation("synth_gzsl: cluster_scale must be > 0");
    if (config.bias_shift < 0.0) throw ContractViolation("synth_gzsl: bias_shift must be >= 0");
}

// Draws the population quantities in a fixed order; sample noise is drawn
// from the same stream afterwards, so ground truth and dataset agree for a
// given seed.
SynthGroundTruth synth_population(const SynthConfig& config, RandomStream& rng) {
    const std::size_t d = config.d_visual;
    const std::size_t k = config.k_semantic;

    SynthGroundTruth gt;
    gt.semantics.reserve(config.n_classes);
    for (std::size_t c = 0; c < config.n_classes; ++c)
        gt.semantics.push_back(rng.normal_tensor({k}));

    // fixed linear map from semantic space to visual cluster means
    Tensor proj = rng.normal_tensor({d, k}, 1.0 / std::sqrt(static_cast<double>(k)));

    gt.bias_direction = rng.normal_tensor({d});
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm += gt.bias_direction[j] * gt.bias_direction[j];
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) gt.bias_direction[j] /= norm;

    // per-axis noise scales, geometric between the smallest and largest axis
    gt.axis_scales.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        const double t = d == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(d - 1);
        gt.axis_scales[j] = config.cluster_scale * std::pow(config.anisotropy, t);
    }

    const std::size_t first_unseen = config.n_classes - config.n_unseen;
    gt.class_means.reserve(config.n_classes);
    for (std::size_t c = 0; c < config.n_classes; ++c) {
        const bool unseen = c >= first_unseen;
        Tensor mean({d});
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < k; ++q) acc += proj(j, q) * gt.semantics[c][q];
            mean[j] = acc + (unseen ? config.bias_shift * gt.bias_direction[j] : 0.0);
        }
        gt.class_means.push_back(std::move(mean));
    }
    return gt;
}

}  // namespace

SynthGroundTruth synth_ground_truth(const SynthConfig& config) {
    check_synth_config(config);
    RandomStream rng(config.seed);
    return synth_population(config, rng);
}

GzslDataset synth_gzsl(const SynthConfig& config) {
    check_synth_config(config);
    const std::size_t d = config.d_visual;
    RandomStream rng(config.seed);
    SynthGroundTruth gt = synth_population(config, rng);

    GzslDataset ds;
    const std::size_t first_unseen = config.n_classes - config.n_unseen;
    for (std::size_t c = 0; c < config.n_classes; ++c) {
        if (c < first_unseen)
            ds.seen_classes.insert(static_cast<int>(c));
        else
            ds.unseen_classes.insert(static_cast<int>(c));
    }

    for (std::size_t c = 0; c < config.n_classes; ++c) {
        const bool unseen = c >= first_unseen;
        for (std::size_t s = 0; s < config.samples_per_class; ++s) {
            FeatureRecord r;
            r.label = static_cast<int>(c);
            r.semantic = gt.semantics[c];
            r.visual = Tensor({d});
            for (std::size_t j = 0; j < d; ++j)
                r.visual[j] = gt.class_means[c][j] + gt.axis_scales[j] * rng.normal();
            r.split = unseen ? Split::Test : Split::Train;
            ds.records.push_back(std::move(r));
        }
    }
    return ds;
}

std::vector<std::string> make_splits(GzslDataset& dataset, double test_fraction_seen,
                                     std::uint64_t seed) {
    if (!(test_fraction_seen > 0.0 && test_fraction_seen < 1.0))
        throw ContractViolation("make_splits: test_fraction_seen must lie in (0,1)");
    dataset.validate();

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        auto& r = dataset.records[i];
        if (dataset.unseen_classes.count(r.label)) {
            r.split = Split::Test;
        } else {
            by_class[r.label].push_back(i);
        }
    }

    RandomStream rng(seed);
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2)
            throw ContractViolation("make_splits: seen class " + std::to_string(label) +
                                    " has fewer than 2 records");
        RandomStream class_rng = rng.fork(static_cast<std::uint64_t>(label) + 1);
        std::vector<std::size_t> order = class_rng.permutation(idx.size());
        const std::size_t n_test = static_cast<std::size_t>(
            std::llround(test_fraction_seen * static_cast<double>(idx.size())));
        for (std::size_t p = 0; p < idx.size(); ++p)
            dataset.records[idx[order[p]]].split = p < n_test ? Split::Test : Split::Train;
    }

    std::vector<std::string> warnings;
    if (dataset.train_indices().empty())
        warnings.push_back("train split is empty (dataset has no seen-class records)");
    return warnings;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, std::size_t row) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw FormatError("csv: row " + std::to_string(row) + ": bad numeric value '" + s + "'");
    }
}

}  // namespace

static void save_csv(const GzslDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    const std::size_t d = ds.d_visual(), k = ds.k_semantic();
    out << "label,split";
    for (std::size_t j = 0; j < d; ++j) out << ",v" << j;
    for (std::size_t j = 0; j < k; ++j) out << ",s" << j;
    out << "\n";
    for (const auto& r : ds.records) {
        out << r.label << "," << (r.split == Split::Train ? "train" : "test");
        for (std::size_t j = 0; j < d; ++j) out << "," << format_double(r.visual[j]);
        for (std::size_t j = 0; j < k; ++j) out << "," << format_double(r.semantic[j]);
        out << "\n";
    }
}

static GzslDataset load_csv(const std::string& path, const std::string& manifest_path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: empty file " + path);
    std::vector<std::string> header = split_line(line);
    if (header.empty() || header[0] != "label")
        throw FormatError("csv: first header column must be 'label'");
    const bool has_split = header.size() > 1 && header[1] == "split";
    std::size_t col = has_split ? 2 : 1;
    std::size_t d = 0, k = 0;
    while (col < header.size() && header[col] == "v" + std::to_string(d)) {
        ++d;
        ++col;
    }
    while (col < header.size() && header[col] == "s" + std::to_string(k)) {
        ++k;
        ++col;
    }
    if (col != header.size() || d == 0 || k == 0)
        throw FormatError("csv: header must be label[,split],v0..,s0..");

    GzslDataset ds;
    std::size_t row = 1;
    const std::size_t expected = (has_split ? 2 : 1) + d + k;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_line(line);
        if (cells.size() != expected)
            throw FormatError("csv: row " + std::to_string(row) + ": expected " +
                              std::to_string(expected) + " columns, got " +
                              std::to_string(cells.size()));
        FeatureRecord r;
        try {
            r.label = std::stoi(cells[0]);
        } catch (const std::exception&) {
            throw FormatError("csv: row " + std::to_string(row) + ": bad label '" + cells[0] +
                              "'");
        }
        if (has_split) {
            if (cells[1] == "train")
                r.split = Split::Train;
            else if (cells[1] == "test")
                r.split = Split::Test;
            else
                throw FormatError("csv: row " + std::to_string(row) + ": bad split tag '" +
                                  cells[1] + "'");
        }
        r.visual = Tensor({d});
        for (std::size_t j = 0; j < d; ++j)
            r.visual[j] = parse_double(cells[(has_split ? 2 : 1) + j], row);
        r.semantic = Tensor({k});
        for (std::size_t j = 0; j < k; ++j)
            r.semantic[j] = parse_double(cells[(has_split ? 2 : 1) + d + j], row);
        ds.records.push_back(std::move(r));
    }

    if (!manifest_path.empty()) {
        std::ifstream mf(manifest_path, std::ios::binary);
        if (!mf) throw FormatError("cannot open split manifest " + manifest_path);
        std::set<int> present;
        for (const auto& r : ds.records) present.insert(r.label);
        std::string mline;
        std::size_t mrow = 0;
        while (std::getline(mf, mline)) {
            ++mrow;
            if (mline.empty()) continue;
            std::vector<std::string> cells = split_line(mline);
            if (cells.size() != 2)
                throw FormatError("split manifest: row " + std::to_string(mrow) +
                                  ": expected class_id,seen|unseen");
            int label = 0;
            try {
                label = std::stoi(cells[0]);
            } catch (const std::exception&) {
                throw FormatError("split manifest: row " + std::to_string(mrow) +
                                  ": bad class id '" + cells[0] + "'");
            }
            if (!present.count(label))
                throw FormatError("split manifest: unknown class " + std::to_string(label));
            if (cells[1] == "seen")
                ds.seen_classes.insert(label);
            else if (cells[1] == "unseen")
                ds.unseen_classes.insert(label);
            else
                throw FormatError("split manifest: row " + std::to_string(mrow) +
                                  ": tag must be seen or unseen");
        }
        for (int label : present)
            if (!ds.seen_classes.count(label) && !ds.unseen_classes.count(label))
                throw FormatError("split manifest: class " + std::to_string(label) +
                                  " is not covered");
    } else {
        // classes with train-tagged records are seen, the rest unseen
        for (const auto& r : ds.records)
            if (r.split == Split::Train) ds.seen_classes.insert(r.label);
        for (const auto& r : ds.records)
            if (!ds.seen_classes.count(r.label)) ds.unseen_classes.insert(r.label);
    }

    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// BIN: magic GZSL, u16 version, dims, class sets, then raw little-endian
// records.
// ---------------------------------------------------------------------------

namespace {

constexpr char kBinMagic[4] = {'G', 'Z', 'S', 'L'};
constexpr std::uint16_t kBinVersion = 1;

template <class T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("bin: truncated file while reading " + what);
    return v;
}

}  // namespace

static void save_bin(const GzslDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write(kBinMagic, 4);
    write_pod(out, kBinVersion);
    write_pod(out, static_cast<std::uint32_t>(ds.d_visual()));
    write_pod(out, static_cast<std::uint32_t>(ds.k_semantic()));
    write_pod(out, static_cast<std::uint64_t>(ds.records.size()));
    write_pod(out, static_cast<std::uint32_t>(ds.seen_classes.size()));
    write_pod(out, static_cast<std::uint32_t>(ds.unseen_classes.size()));
    for (int c : ds.seen_classes) write_pod(out, static_cast<std::int32_t>(c));
    for (int c : ds.unseen_classes) write_pod(out, static_cast<std::int32_t>(c));
    for (const auto& r : ds.records) {
        write_pod(out, static_cast<std::int32_t>(r.label));
        write_pod(out, static_cast<std::uint8_t>(r.split));
        out.write(reinterpret_cast<const char*>(r.visual.data().data()),
                  static_cast<std::streamsize>(sizeof(double) * r.visual.numel()));
        out.write(reinterpret_cast<const char*>(r.semantic.data().data()),
                  static_cast<std::streamsize>(sizeof(double) * r.semantic.numel()));
    }
    if (!out) throw FormatError("bin: write failed for " + path);
}

static GzslDataset load_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBinMagic, 4) != 0)
        throw FormatError("bin: " + path + " is not a GZSL dataset (bad magic)");
    const auto version = read_pod<std::uint16_t>(in, "version");
    if (version != kBinVersion)
        throw FormatError("bin: unsupported dataset version " + std::to_string(version));
    const auto d = read_pod<std::uint32_t>(in, "d_visual");
    const auto k = read_pod<std::uint32_t>(in, "k_semantic");
    const auto n = read_pod<std::uint64_t>(in, "record count");
    const auto n_seen = read_pod<std::uint32_t>(in, "seen class count");
    const auto n_unseen = read_pod<std::uint32_t>(in, "unseen class count");
    GzslDataset ds;
    for (std::uint32_t i = 0; i < n_seen; ++i)
        ds.seen_classes.insert(read_pod<std::int32_t>(in, "seen class id"));
    for (std::uint32_t i = 0; i < n_unseen; ++i)
        ds.unseen_classes.insert(read_pod<std::int32_t>(in, "unseen class id"));
    ds.records.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        FeatureRecord r;
        r.label = read_pod<std::int32_t>(in, "record label");
        const auto split = read_pod<std::uint8_t>(in, "record split");
        if (split > 1)
            throw FormatError("bin: record " + std::to_string(i) + " has bad split tag");
        r.split = static_cast<Split>(split);
        r.visual = Tensor({d});
        in.read(reinterpret_cast<char*>(r.visual.data().data()),
                static_cast<std::streamsize>(sizeof(double) * d));
        r.semantic = Tensor({k});
        in.read(reinterpret_cast<char*>(r.semantic.data().data()),
                static_cast<std::streamsize>(sizeof(double) * k));
        if (!in) throw FormatError("bin: truncated file while reading record " + std::to_string(i));
        ds.records.push_back(std::move(r));
    }
    ds.validate();
    return ds;
}

void save_dataset(const GzslDataset& dataset, const std::string& path, DataFormat format) {
    dataset.validate();
    if (format == DataFormat::Csv)
        save_csv(dataset, path);
    else
        save_bin(dataset, path);
}

GzslDataset load_dataset(const std::string& path, DataFormat format,
                         const std::string& split_manifest_path) {
    if (format == DataFormat::Csv) return load_csv(path, split_manifest_path);
    return load_bin(path);
}

void save_split_manifest(const GzslDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    for (int c : dataset.seen_classes) out << c << ",seen\n";
    for (int c : dataset.unseen_classes) out << c << ",unseen\n";
}

}  // namespace biasguard
