#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "domo/objectives.hpp"
#include "domo/rng.hpp"

namespace domo::partition {

// Labelled dataset; targets of the stored samples are integer class labels
// in [0, num_classes).
struct Dataset {
    std::vector<objectives::Sample> samples;
    int num_classes = 0;

    int size() const { return static_cast<int>(samples.size()); }
    int feature_dim() const { return samples.empty() ? 0 : static_cast<int>(samples.front().features.size()); }
    int label(int i) const { return static_cast<int>(samples[i].target); }
};

// Disjoint per-client index lists covering the dataset, sizes within 1.
struct Partition {
    std::vector<std::vector<int>> shards;
    double similarity = 0.0;
    std::uint64_t seed = 0;
};

// Gaussian class clusters. Class means are placed deterministically with
// pairwise distance >= class_separation (a line for dim 1, a circle with
// chord = class_separation otherwise); the seed drives the noise only.
Dataset make_synthetic(int num_classes, int per_class, int dim, double class_separation,
                       double noise, std::uint64_t seed);

// CSV with a header row; data rows are `label,feat_0,...,feat_{dim-1}`.
// Malformed rows raise with the 1-based file line number.
Dataset load_csv(const std::string& path);

// Fraction s of the samples is dealt round-robin after a uniform shuffle;
// the remaining fraction is sorted by (label, original index) and dealt in
// contiguous blocks so s = 0 yields maximal label skew.
Partition partition_similarity(const Dataset& data, int K, double s, std::uint64_t seed);

// b uniform with-replacement draws. `sample_batch` returns dataset indices
// (elements of the shard); `sample_batch_positions` returns positions in
// [0, shard_size), consuming the identical stream draws.
std::vector<int> sample_batch(std::span<const int> shard, int b, RngStream& rng);
std::vector<int> sample_batch_positions(std::size_t shard_size, int b, RngStream& rng);

// Per-shard diagnostics used by partition-stats and the property tests.
struct ShardStats {
    std::vector<std::int64_t> label_counts;
    double purity = 0.0;        // fraction of the majority label
    double tv_from_uniform = 0.0;
};
std::vector<ShardStats> shard_stats(const Dataset& data, const Partition& p);

// Order-independent digest of shard contents; used to assert that paired
// runs share one partition.
std::uint64_t partition_digest(const Partition& p);

}  // namespace domo::partition
