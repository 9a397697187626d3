#include "domo/partition.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace domo::partition {

Dataset make_synthetic(int num_classes, int per_class, int dim, double class_separation,
                       double noise, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("make_synthetic: dim must be >= 1");
    if (num_classes < 1 || per_class < 1)
        throw std::invalid_argument("make_synthetic: counts must be positive");
    if (noise < 0.0) throw std::invalid_argument("make_synthetic: negative noise");

    std::vector<Vec> means(num_classes, Vec(dim, 0.0));
    if (num_classes > 1) {
        if (dim == 1) {
            for (int c = 0; c < num_classes; ++c) means[c][0] = c * class_separation;
        } else {
            // circle of chord length class_separation between neighbours
            const double pi = 3.14159265358979323846;
            const double radius = class_separation / (2.0 * std::sin(pi / num_classes));
            for (int c = 0; c < num_classes; ++c) {
                const double theta = 2.0 * pi * c / num_classes;
                means[c][0] = radius * std::cos(theta);
                means[c][1] = radius * std::sin(theta);
            }
        }
    }

    Dataset out;
    out.num_classes = num_classes;
    out.samples.reserve(static_cast<std::size_t>(num_classes) * per_class);
    RngStream rng(seed, StreamKind::Synthetic);
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            objectives::Sample s;
            s.features = means[c];
            for (int j = 0; j < dim; ++j) s.features[j] += noise * rng.normal();
            s.target = c;
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

namespace {

double parse_field(std::string_view field, int line_no, int column) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw std::runtime_error("load_csv: non-numeric field in column " + std::to_string(column) +
                                 " on line " + std::to_string(line_no));
    return value;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);

    Dataset out;
    int line_no = 1;  // header consumed
    int expected_cols = -1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string_view> fields;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (expected_cols < 0) {
            expected_cols = static_cast<int>(fields.size());
            if (expected_cols < 2)
                throw std::runtime_error("load_csv: need a label and at least one feature on line " +
                                         std::to_string(line_no));
        } else if (static_cast<int>(fields.size()) != expected_cols) {
            throw std::runtime_error("load_csv: expected " + std::to_string(expected_cols) +
                                     " columns, got " + std::to_string(fields.size()) + " on line " +
                                     std::to_string(line_no));
        }

        const double label = parse_field(fields[0], line_no, 0);
        if (label != std::floor(label) || label < 0)
            throw std::runtime_error("load_csv: label must be a nonnegative integer on line " +
                                     std::to_string(line_no));
        objectives::Sample s;
        s.target = label;
        s.features.resize(fields.size() - 1);
        for (std::size_t j = 1; j < fields.size(); ++j)
            s.features[j - 1] = parse_field(fields[j], line_no, static_cast<int>(j));
        max_label = std::max(max_label, static_cast<int>(label));
        out.samples.push_back(std::move(s));
    }
    if (out.samples.empty()) throw std::runtime_error("load_csv: no data rows in " + path);
    out.num_classes = max_label + 1;
    return out;
}

Partition partition_similarity(const Dataset& data, int K, double s, std::uint64_t seed) {
    const int n = data.size();
    if (K < 1) throw std::invalid_argument("partition_similarity: K must be >= 1");
    if (K > n) throw std::invalid_argument("partition_similarity: more clients than samples");
    if (s < 0.0 || s > 1.0) throw std::invalid_argument("partition_similarity: s outside [0, 1]");

    const int n_random = static_cast<int>(std::llround(s * n));

    // Uniform shuffle, first n_random entries are the randomly allocated part.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    RngStream rng(seed, StreamKind::Partition);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }

    Partition out;
    out.similarity = s;
    out.seed = seed;
    out.shards.assign(K, {});

    std::vector<int> target(K, n / K);
    for (int k = 0; k < n % K; ++k) ++target[k];
    for (int k = 0; k < K; ++k) out.shards[k].reserve(target[k]);

    for (int i = 0; i < n_random; ++i) out.shards[i % K].push_back(order[i]);

    std::vector<int> rest(order.begin() + n_random, order.end());
    std::sort(rest.begin(), rest.end(), [&](int a, int b) {
        const int la = data.label(a), lb = data.label(b);
        return la != lb ? la < lb : a < b;
    });
    std::size_t cursor = 0;
    for (int k = 0; k < K; ++k) {
        const int block = target[k] - static_cast<int>(out.shards[k].size());
        for (int i = 0; i < block; ++i) out.shards[k].push_back(rest[cursor++]);
    }
    return out;
}

std::vector<int> sample_batch_positions(std::size_t shard_size, int b, RngStream& rng) {
    if (shard_size == 0) throw std::invalid_argument("sample_batch: empty shard");
    if (b < 1) throw std::invalid_argument("sample_batch: batch size must be >= 1");
    std::vector<int> out(b);
    for (int i = 0; i < b; ++i) out[i] = static_cast<int>(rng.below(shard_size));
    return out;
}

std::vector<int> sample_batch(std::span<const int> shard, int b, RngStream& rng) {
    std::vector<int> pos = sample_batch_positions(shard.size(), b, rng);
    for (int& p : pos) p = shard[p];
    return pos;
}

std::vector<ShardStats> shard_stats(const Dataset& data, const Partition& p) {
    std::vector<ShardStats> out;
    out.reserve(p.shards.size());
    const int C = data.num_classes;
    for (const auto& shard : p.shards) {
        ShardStats st;
        st.label_counts.assign(C, 0);
        for (int idx : shard) ++st.label_counts[data.label(idx)];
        const double total = static_cast<double>(shard.size());
        std::int64_t top = 0;
        double tv = 0.0;
        for (int c = 0; c < C; ++c) {
            top = std::max(top, st.label_counts[c]);
            tv += std::abs(st.label_counts[c] / total - 1.0 / C);
        }
        st.purity = total > 0 ? top / total : 0.0;
        st.tv_from_uniform = 0.5 * tv;
        out.push_back(std::move(st));
    }
    return out;
}

std::uint64_t partition_digest(const Partition& p) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto absorb = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    absorb(p.shards.size());
    for (const auto& shard : p.shards) {
        absorb(shard.size());
        for (int idx : shard) absorb(static_cast<std::uint64_t>(idx) + 0x9e37ULL);
    }
    return h;
}

}  // namespace domo::partition
