#include "inflkit/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "inflkit/rng.hpp"

namespace inflkit {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

// --- low-level file helpers ---------------------------------------------

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& text) {
    return fnv1a64(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::uint64_t hash_file(const std::filesystem::path& path) {
    return fnv1a64(read_file(path));
}

std::uint64_t hash_params(const ModelParams& params) {
    std::string buf;
    for (int dim : params.spec.layer_dims) {
        buf.append(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
    const int act = static_cast<int>(params.spec.activation);
    buf.append(reinterpret_cast<const char*>(&act), sizeof(act));
    buf.append(reinterpret_cast<const char*>(&params.l2_penalty), sizeof(double));
    buf.append(reinterpret_cast<const char*>(params.theta.data()),
               static_cast<std::size_t>(params.theta.size()) * sizeof(double));
    return fnv1a64(buf);
}

std::string hash_hex(std::uint64_t h) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// --- exact double text encoding ------------------------------------------

std::string format_double(double value) {
    if (!std::isfinite(value))
        throw UsageError("format_double: value must be finite");
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);  // shortest representation, exact round-trip
}

double parse_double(const std::string& text) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw DataError("cannot parse real number: '" + text + "'");
    return value;
}

// --- IDX -------------------------------------------------------------------

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

class ByteReader {
public:
    ByteReader(const std::string& data, std::string name)
        : data_(data), name_(std::move(name)) {}

    std::uint32_t read_u32_be() {
        need(4, "32-bit field");
        const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
        pos_ += 4;
        return (static_cast<std::uint32_t>(p[0]) << 24) |
               (static_cast<std::uint32_t>(p[1]) << 16) |
               (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
    }

    const unsigned char* read_bytes(std::size_t count, const char* what) {
        need(count, what);
        const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
        pos_ += count;
        return p;
    }

    std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::size_t count, const char* what) const {
        if (data_.size() - pos_ < count)
            throw DataError(name_ + ": truncated file, need " +
                            std::to_string(count - (data_.size() - pos_)) +
                            " more bytes for " + what);
    }

private:
    const std::string& data_;
    std::string name_;
    std::size_t pos_ = 0;
};

}  // namespace

Dataset read_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    const std::string images_raw = read_file(images_path);
    const std::string labels_raw = read_file(labels_path);
    ByteReader images(images_raw, images_path.string());
    ByteReader labels(labels_raw, labels_path.string());

    const std::uint32_t images_magic = images.read_u32_be();
    if (images_magic != kIdxImagesMagic)
        throw DataError(images_path.string() + ": bad magic " + hash_hex(images_magic) +
                        ", expected 0x0000000000000803");
    const std::uint32_t count = images.read_u32_be();
    const std::uint32_t rows = images.read_u32_be();
    const std::uint32_t cols = images.read_u32_be();

    const std::uint32_t labels_magic = labels.read_u32_be();
    if (labels_magic != kIdxLabelsMagic)
        throw DataError(labels_path.string() + ": bad magic " + hash_hex(labels_magic) +
                        ", expected 0x0000000000000801");
    const std::uint32_t label_count = labels.read_u32_be();
    if (label_count != count)
        throw DataError("IDX pair mismatch: " + std::to_string(count) + " images vs " +
                        std::to_string(label_count) + " labels");
    if (count == 0) throw DataError(images_path.string() + ": empty image set");

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    const unsigned char* pixel_data =
        images.read_bytes(pixels * count, "pixel data");
    const unsigned char* label_data = labels.read_bytes(count, "label data");

    Dataset data;
    data.feature_dim = static_cast<int>(pixels);
    int max_label = 0;
    data.examples.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Example& z = data.examples[i];
        z.features.resize(static_cast<Eigen::Index>(pixels));
        const unsigned char* src = pixel_data + static_cast<std::size_t>(i) * pixels;
        for (std::size_t k = 0; k < pixels; ++k)
            z.features(static_cast<Eigen::Index>(k)) = static_cast<double>(src[k]) / 255.0;
        z.label = static_cast<int>(label_data[i]);
        max_label = std::max(max_label, z.label);
    }
    data.class_count = max_label + 1;
    data.validate();
    return data;
}

void write_idx(const Dataset& data, int rows, int cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    if (rows * cols != data.feature_dim)
        throw UsageError("write_idx: rows*cols must equal the feature dim");
    auto put_u32_be = [](std::string& out, std::uint32_t v) {
        out.push_back(static_cast<char>((v >> 24) & 0xff));
        out.push_back(static_cast<char>((v >> 16) & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
        out.push_back(static_cast<char>(v & 0xff));
    };
    std::string images, labels;
    put_u32_be(images, kIdxImagesMagic);
    put_u32_be(images, static_cast<std::uint32_t>(data.size()));
    put_u32_be(images, static_cast<std::uint32_t>(rows));
    put_u32_be(images, static_cast<std::uint32_t>(cols));
    put_u32_be(labels, kIdxLabelsMagic);
    put_u32_be(labels, static_cast<std::uint32_t>(data.size()));
    for (const Example& z : data.examples) {
        for (Eigen::Index k = 0; k < z.features.size(); ++k) {
            double v = std::clamp(z.features(k), 0.0, 1.0);
            images.push_back(static_cast<char>(std::lround(v * 255.0)));
        }
        labels.push_back(static_cast<char>(z.label));
    }
    write_file_atomic(images_path, images);
    write_file_atomic(labels_path, labels);
}

// --- delimited text --------------------------------------------------------

Dataset read_delimited(const std::filesystem::path& path,
                       const std::string& label_column, char delimiter) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line))
        throw DataError(path.string() + ": empty file (missing header)");
    auto split = [&](const std::string& text) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream row(text);
        while (std::getline(row, field, delimiter)) fields.push_back(field);
        if (!text.empty() && text.back() == delimiter) fields.emplace_back();
        return fields;
    };
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split(line);
    int label_idx = -1;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == label_column) label_idx = static_cast<int>(c);
    if (label_idx < 0)
        throw DataError(path.string() + ": header has no column named '" +
                        label_column + "'");

    Dataset data;
    data.feature_dim = static_cast<int>(header.size()) - 1;
    if (data.feature_dim < 1)
        throw DataError(path.string() + ": no feature columns");
    int max_label = 0;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split(line);
        if (fields.size() != header.size())
            throw DataError(path.string() + ": line " + std::to_string(lineno) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        Example z;
        z.features.resize(data.feature_dim);
        int fi = 0;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (static_cast<int>(c) == label_idx) {
                try {
                    std::size_t used = 0;
                    z.label = std::stoi(fields[c], &used);
                    if (used != fields[c].size()) throw std::invalid_argument("trailing");
                } catch (const std::exception&) {
                    throw DataError(path.string() + ": line " + std::to_string(lineno) +
                                    ": bad label '" + fields[c] + "'");
                }
                if (z.label < 0)
                    throw DataError(path.string() + ": line " + std::to_string(lineno) +
                                    ": negative label");
            } else {
                try {
                    z.features(fi++) = parse_double(fields[c]);
                } catch (const DataError&) {
                    throw DataError(path.string() + ": line " + std::to_string(lineno) +
                                    ": bad feature value '" + fields[c] + "'");
                }
            }
        }
        max_label = std::max(max_label, z.label);
        data.examples.push_back(std::move(z));
    }
    if (data.examples.empty())
        throw DataError(path.string() + ": no data rows");
    data.class_count = max_label + 1;
    data.validate();
    return data;
}

// --- synthetic generators ----------------------------------------------------

namespace {

// Class means with pairwise separation 6 (unit-variance features): on a line
// for d == 1, otherwise on a circle in the first two dimensions.
std::vector<VectorXd> blob_means(int d, int classes) {
    std::vector<VectorXd> means(static_cast<std::size_t>(classes), VectorXd::Zero(d));
    if (classes == 1) return means;
    if (d == 1) {
        for (int c = 0; c < classes; ++c)
            means[static_cast<std::size_t>(c)](0) = 6.0 * c - 3.0 * (classes - 1);
        return means;
    }
    const double pi = 3.14159265358979323846;
    const double radius = classes == 2 ? 3.0 : 3.0 / std::sin(pi / classes);
    for (int c = 0; c < classes; ++c) {
        const double angle = 2.0 * pi * c / classes;
        means[static_cast<std::size_t>(c)](0) = radius * std::cos(angle);
        means[static_cast<std::size_t>(c)](1) = radius * std::sin(angle);
    }
    return means;
}

}  // namespace

Dataset generate_synthetic(const std::string& name, int n, int d, int classes,
                           std::uint64_t seed) {
    if (n < 1 || d < 1 || classes < 1)
        throw UsageError("generate_synthetic: n, d, classes must be positive");
    Dataset data;
    data.feature_dim = d;
    data.class_count = classes;
    data.examples.resize(static_cast<std::size_t>(n));

    if (name == "gaussian_blobs") {
        const std::vector<VectorXd> means = blob_means(d, classes);
        for (int i = 0; i < n; ++i) {
            Rng rng(mix_seed(seed, seed_stream::kSynthetic, static_cast<std::uint64_t>(i)));
            Example& z = data.examples[static_cast<std::size_t>(i)];
            z.label = i % classes;  // round-robin: class counts differ by at most one
            z.features = means[static_cast<std::size_t>(z.label)];
            for (int k = 0; k < d; ++k) z.features(k) += rng.normal();
        }
        return data;
    }

    if (name == "two_moons_2class") {
        if (classes != 2)
            throw UsageError("two_moons_2class: requires classes == 2");
        if (d < 2) throw UsageError("two_moons_2class: requires d >= 2");
        const double pi = 3.14159265358979323846;
        for (int i = 0; i < n; ++i) {
            Rng rng(mix_seed(seed, seed_stream::kSynthetic, static_cast<std::uint64_t>(i)));
            Example& z = data.examples[static_cast<std::size_t>(i)];
            z.label = i % 2;
            const double t = pi * rng.uniform01();
            z.features = VectorXd::Zero(d);
            if (z.label == 0) {
                z.features(0) = std::cos(t);
                z.features(1) = std::sin(t);
            } else {
                z.features(0) = 1.0 - std::cos(t);
                z.features(1) = 0.5 - std::sin(t);
            }
            z.features(0) += 0.1 * rng.normal();
            z.features(1) += 0.1 * rng.normal();
        }
        return data;
    }

    throw UsageError("generate_synthetic: unknown generator '" + name + "'");
}

// --- score records -----------------------------------------------------------

void write_scores(const std::filesystem::path& path,
                  std::span<const InfluenceRecord> records) {
    std::string out;
    for (const InfluenceRecord& r : records) {
        if (!std::isfinite(r.score))
            throw UsageError("write_scores: non-finite score for train_index " +
                             std::to_string(r.train_index));
        out += "{\"train_index\":";
        out += std::to_string(r.train_index);
        out += ",\"test_index\":";
        out += std::to_string(r.test_index);
        out += ",\"score\":";
        out += format_double(r.score);
        out += ",\"solver_id\":";
        out += nlohmann::json(r.solver_id).dump();
        out += ",\"damping\":";
        out += format_double(r.damping);
        out += "}\n";
    }
    write_file_atomic(path, out);
}

std::vector<InfluenceRecord> read_scores(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<InfluenceRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ": line " + std::to_string(lineno) +
                            ": malformed record: " + e.what());
        }
        try {
            InfluenceRecord r;
            r.train_index = j.at("train_index").get<int>();
            r.test_index = j.at("test_index").get<int>();
            r.score = j.at("score").get<double>();
            r.solver_id = j.at("solver_id").get<std::string>();
            r.damping = j.at("damping").get<double>();
            records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ": line " + std::to_string(lineno) +
                            ": missing or mistyped field: " + e.what());
        }
    }
    return records;
}

// --- binary container ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'I', 'N', 'F', 'L', 'K', 'I', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kKindCheckpoint = 1;
constexpr std::uint32_t kKindKfac = 2;
constexpr std::uint32_t kKindEkfac = 3;

class BinWriter {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
    void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
    void f64(double v) { raw(&v, sizeof(v)); }
    void bytes(const void* p, std::size_t count) { raw(p, count); }
    void matrix(const MatrixXd& m) {
        raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    }
    void vector(const VectorXd& v) {
        raw(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
    }
    std::string take() { return std::move(buf_); }

private:
    void raw(const void* p, std::size_t count) {
        buf_.append(reinterpret_cast<const char*>(p), count);
    }
    std::string buf_;
};

class BinReader {
public:
    BinReader(const std::string& data, std::string name)
        : data_(data), name_(std::move(name)) {}

    std::uint32_t u32() { return read<std::uint32_t>(); }
    std::uint64_t u64() { return read<std::uint64_t>(); }
    double f64() { return read<double>(); }

    void doubles(double* out, std::size_t count) {
        need(count * sizeof(double));
        std::memcpy(out, data_.data() + pos_, count * sizeof(double));
        pos_ += count * sizeof(double);
    }

    std::string str(std::size_t count) {
        need(count);
        std::string s = data_.substr(pos_, count);
        pos_ += count;
        return s;
    }

    void expect_magic() {
        need(sizeof(kMagic));
        if (std::memcmp(data_.data() + pos_, kMagic, sizeof(kMagic)) != 0)
            throw DataError(name_ + ": not an inflkit container (bad magic)");
        pos_ += sizeof(kMagic);
    }

    bool exhausted() const { return pos_ == data_.size(); }

private:
    template <class T>
    T read() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    void need(std::size_t count) {
        if (data_.size() - pos_ < count)
            throw DataError(name_ + ": truncated container, need " +
                            std::to_string(count - (data_.size() - pos_)) + " more bytes");
    }

    const std::string& data_;
    std::string name_;
    std::size_t pos_ = 0;
};

void write_header(BinWriter& w, std::uint32_t kind) {
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kFormatVersion);
    w.u32(kind);
}

void check_header(BinReader& r, std::uint32_t expected_kind, const std::string& name) {
    r.expect_magic();
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw DataError(name + ": unsupported format version " + std::to_string(version));
    const std::uint32_t kind = r.u32();
    if (kind != expected_kind)
        throw DataError(name + ": wrong payload kind " + std::to_string(kind) +
                        ", expected " + std::to_string(expected_kind));
}

constexpr std::uint32_t kSanityDimLimit = 1u << 24;

int checked_dim(std::uint32_t v, const std::string& name) {
    if (v == 0 || v > kSanityDimLimit)
        throw DataError(name + ": implausible dimension " + std::to_string(v));
    return static_cast<int>(v);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                      const CheckpointMeta& meta) {
    params.validate();
    BinWriter w;
    write_header(w, kKindCheckpoint);
    w.u32(static_cast<std::uint32_t>(params.spec.layer_dims.size()));
    for (int dim : params.spec.layer_dims) w.u32(static_cast<std::uint32_t>(dim));
    w.u32(params.spec.activation == Activation::kRelu ? 0 : 1);
    w.f64(params.l2_penalty);
    w.u64(meta.provenance_json.size());
    w.bytes(meta.provenance_json.data(), meta.provenance_json.size());
    w.u64(static_cast<std::uint64_t>(params.theta.size()));
    w.vector(params.theta);
    write_file_atomic(path, w.take());
}

std::pair<ModelParams, CheckpointMeta> read_checkpoint(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    BinReader r(raw, path.string());
    check_header(r, kKindCheckpoint, path.string());
    const std::uint32_t ndims = r.u32();
    if (ndims < 2 || ndims > 64)
        throw DataError(path.string() + ": implausible layer count");
    MlpSpec spec;
    for (std::uint32_t i = 0; i < ndims; ++i)
        spec.layer_dims.push_back(checked_dim(r.u32(), path.string()));
    const std::uint32_t act = r.u32();
    if (act > 1) throw DataError(path.string() + ": unknown activation code");
    spec.activation = act == 0 ? Activation::kRelu : Activation::kTanh;
    const double l2 = r.f64();
    const std::uint64_t prov_len = r.u64();
    CheckpointMeta meta;
    meta.provenance_json = r.str(prov_len);
    const std::uint64_t p = r.u64();
    if (p != static_cast<std::uint64_t>(param_count(spec)))
        throw DataError(path.string() + ": parameter count does not match the spec");
    ModelParams params = make_params(spec, l2);
    r.doubles(params.theta.data(), p);
    if (!r.exhausted())
        throw DataError(path.string() + ": trailing bytes after payload");
    params.validate();
    return {std::move(params), std::move(meta)};
}

void write_kfac_state(const std::filesystem::path& path, const KfacState& state,
                      std::uint64_t checkpoint_hash) {
    BinWriter w;
    write_header(w, kKindKfac);
    w.u64(checkpoint_hash);
    w.f64(state.l2_penalty);
    w.u64(static_cast<std::uint64_t>(state.sample_count));
    w.u32(static_cast<std::uint32_t>(state.layers.size()));
    for (const auto& layer : state.layers) {
        w.u32(static_cast<std::uint32_t>(layer.input_cov.rows()));
        w.matrix(layer.input_cov);
        w.u32(static_cast<std::uint32_t>(layer.preact_cov.rows()));
        w.matrix(layer.preact_cov);
    }
    write_file_atomic(path, w.take());
}

std::pair<KfacState, std::uint64_t> read_kfac_state(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    BinReader r(raw, path.string());
    check_header(r, kKindKfac, path.string());
    const std::uint64_t checkpoint_hash = r.u64();
    KfacState state;
    state.l2_penalty = r.f64();
    state.sample_count = static_cast<long>(r.u64());
    const std::uint32_t layers = r.u32();
    for (std::uint32_t l = 0; l < layers; ++l) {
        KfacState::Layer layer;
        const int cols = checked_dim(r.u32(), path.string());
        layer.input_cov.resize(cols, cols);
        r.doubles(layer.input_cov.data(), static_cast<std::size_t>(cols) * cols);
        const int rows = checked_dim(r.u32(), path.string());
        layer.preact_cov.resize(rows, rows);
        r.doubles(layer.preact_cov.data(), static_cast<std::size_t>(rows) * rows);
        state.layers.push_back(std::move(layer));
    }
    if (!r.exhausted())
        throw DataError(path.string() + ": trailing bytes after payload");
    return {std::move(state), checkpoint_hash};
}

void write_ekfac_state(const std::filesystem::path& path, const EkfacState& state,
                       std::uint64_t checkpoint_hash) {
    BinWriter w;
    write_header(w, kKindEkfac);
    w.u64(checkpoint_hash);
    w.f64(state.l2_penalty);
    w.u64(static_cast<std::uint64_t>(state.sample_count));
    w.u32(static_cast<std::uint32_t>(state.layers.size()));
    for (const auto& layer : state.layers) {
        w.u32(static_cast<std::uint32_t>(layer.input_basis.rows()));
        w.matrix(layer.input_basis);
        w.u32(static_cast<std::uint32_t>(layer.preact_basis.rows()));
        w.matrix(layer.preact_basis);
        w.u64(static_cast<std::uint64_t>(layer.eigenvalues.size()));
        w.vector(layer.eigenvalues);
    }
    write_file_atomic(path, w.take());
}

std::pair<EkfacState, std::uint64_t> read_ekfac_state(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    BinReader r(raw, path.string());
    check_header(r, kKindEkfac, path.string());
    const std::uint64_t checkpoint_hash = r.u64();
    EkfacState state;
    state.l2_penalty = r.f64();
    state.sample_count = static_cast<long>(r.u64());
    const std::uint32_t layers = r.u32();
    for (std::uint32_t l = 0; l < layers; ++l) {
        EkfacState::Layer layer;
        const int cols = checked_dim(r.u32(), path.string());
        layer.input_basis.resize(cols, cols);
        r.doubles(layer.input_basis.data(), static_cast<std::size_t>(cols) * cols);
        const int rows = checked_dim(r.u32(), path.string());
        layer.preact_basis.resize(rows, rows);
        r.doubles(layer.preact_basis.data(), static_cast<std::size_t>(rows) * rows);
        const std::uint64_t len = r.u64();
        if (len != static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols))
            throw DataError(path.string() + ": eigenvalue block has wrong length");
        layer.eigenvalues.resize(static_cast<Eigen::Index>(len));
        r.doubles(layer.eigenvalues.data(), len);
        state.layers.push_back(std::move(layer));
    }
    if (!r.exhausted())
        throw DataError(path.string() + ": trailing bytes after payload");
    return {std::move(state), checkpoint_hash};
}

}  // namespace inflkit
