#pragma once

// Synthetic Gaussian-blob datasets and device partitioning with a label-skew
// knob p: p = 0 is an IID equal split, larger p concentrates each class on
// fewer devices (per-class Dirichlet with concentration 1/p).

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "caesar/learner.hpp"

namespace caesar {

struct SynthSpec {
    std::size_t classes = 2;
    std::size_t dim = 2;
    std::size_t per_class = 100;
    double class_sep = 2.0;  // distance of each class mean from the origin
    double noise = 1.0;      // isotropic standard deviation
    std::uint64_t seed = 0;
};

struct PartitionSpec {
    std::size_t n_devices = 1;
    double heterogeneity = 0.0;  // p; 0 means IID
    std::size_t min_per_device = 1;
    std::uint64_t seed = 0;
};

// Class h is a blob at class_sep * u_h: coordinate axis e_h while h < dim,
// random unit directions beyond that. Roughly 90/10 train/test, stratified
// by class (at least one test sample per class).
std::pair<DatasetShard, DatasetShard> synth_dataset(const SynthSpec& spec);

// Per-device sample indices into the training shard: disjoint, covering,
// each at least min_per_device (single samples migrate from the largest
// shard to enforce the floor).
std::vector<std::vector<std::size_t>> partition_indices(const DatasetShard& train,
                                                        const PartitionSpec& ps);

DatasetShard materialize_shard(const DatasetShard& train,
                               const std::vector<std::size_t>& indices);

std::vector<DatasetShard> dirichlet_partition(const DatasetShard& train,
                                              const PartitionSpec& ps);

// e^h = count(label h) / m, length `classes`.
std::vector<double> label_distribution(const DatasetShard& shard, std::size_t classes);

// Two-column text file "device_id sample_index", one row per sample.
void save_partition(const std::vector<std::vector<std::size_t>>& parts,
                    const std::string& path);
std::vector<std::vector<std::size_t>> load_partition(const std::string& path);

}  // namespace caesar
