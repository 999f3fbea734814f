#include "caesar/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "caesar/rng.hpp"

namespace caesar {
namespace {

std::vector<double> unit_direction(std::size_t h, std::size_t dim, SeededRng& rng) {
    std::vector<double> u(dim, 0.0);
    if (h < dim) {
        u[h] = 1.0;
        return u;
    }
    double norm2 = 0.0;
    do {
        for (auto& c : u) c = rng.normal();
        norm2 = std::inner_product(u.begin(), u.end(), u.begin(), 0.0);
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& c : u) c *= inv;
    return u;
}

// Rounds fractional shares to integer counts summing to total: floor first,
// then hand the leftovers to the largest remainders (ties by lower index).
std::vector<std::size_t> largest_remainder_counts(const std::vector<double>& shares,
                                                  std::size_t total) {
    const std::size_t n = shares.size();
    std::vector<std::size_t> counts(n);
    std::vector<std::pair<double, std::size_t>> rem(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = shares[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = {exact - std::floor(exact), i};
        assigned += counts[i];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++counts[rem[j % n].second];
    return counts;
}

}  // namespace

std::pair<DatasetShard, DatasetShard> synth_dataset(const SynthSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("classes must be at least 2");
    if (spec.dim < 1) throw std::invalid_argument("dim must be at least 1");
    if (spec.per_class < 2) throw std::invalid_argument("per_class must be at least 2");
    if (spec.noise <= 0.0) throw std::invalid_argument("noise must be positive");
    if (spec.class_sep < 0.0) throw std::invalid_argument("class_sep must be non-negative");

    SeededRng rng(spec.seed);
    DatasetShard train{spec.dim, {}, {}};
    DatasetShard test{spec.dim, {}, {}};
    const std::size_t test_n = std::max<std::size_t>(1, spec.per_class / 10);

    for (std::size_t h = 0; h < spec.classes; ++h) {
        const auto u = unit_direction(h, spec.dim, rng);
        for (std::size_t s = 0; s < spec.per_class; ++s) {
            DatasetShard& dst = s < spec.per_class - test_n ? train : test;
            for (std::size_t c = 0; c < spec.dim; ++c) {
                const double v = spec.class_sep * u[c] + spec.noise * rng.normal();
                dst.features.push_back(static_cast<float>(v));
            }
            dst.labels.push_back(static_cast<std::uint32_t>(h));
        }
    }
    return {std::move(train), std::move(test)};
}

std::vector<std::vector<std::size_t>> partition_indices(const DatasetShard& train,
                                                        const PartitionSpec& ps) {
    if (ps.n_devices < 1) throw std::invalid_argument("n_devices must be at least 1");
    if (ps.heterogeneity < 0.0) throw std::invalid_argument("heterogeneity must be non-negative");
    if (ps.min_per_device < 1) throw std::invalid_argument("min_per_device must be at least 1");
    const std::size_t m = train.size();
    if (m < ps.n_devices * ps.min_per_device)
        throw std::invalid_argument("not enough samples to satisfy min_per_device");

    SeededRng rng(ps.seed);
    std::vector<std::vector<std::size_t>> parts(ps.n_devices);

    if (ps.heterogeneity == 0.0) {
        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        const std::size_t base = m / ps.n_devices;
        const std::size_t extra = m % ps.n_devices;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < ps.n_devices; ++i) {
            const std::size_t size = base + (i < extra ? 1 : 0);
            parts[i].assign(perm.begin() + pos, perm.begin() + pos + size);
            pos += size;
        }
    } else {
        const double delta_dir = 1.0 / ps.heterogeneity;
        std::size_t classes = 0;
        for (std::uint32_t y : train.labels) classes = std::max<std::size_t>(classes, y + 1);

        std::vector<std::vector<std::size_t>> by_class(classes);
        for (std::size_t s = 0; s < m; ++s) by_class[train.labels[s]].push_back(s);

        const std::vector<double> conc(ps.n_devices, delta_dir);
        for (std::size_t h = 0; h < classes; ++h) {
            if (by_class[h].empty()) continue;
            const auto shares = rng.dirichlet(conc);
            const auto counts = largest_remainder_counts(shares, by_class[h].size());
            std::size_t pos = 0;
            for (std::size_t i = 0; i < ps.n_devices; ++i) {
                parts[i].insert(parts[i].end(), by_class[h].begin() + pos,
                                by_class[h].begin() + pos + counts[i]);
                pos += counts[i];
            }
        }
    }

    // Top up devices below the floor with single samples from the largest shard.
    for (std::size_t i = 0; i < ps.n_devices; ++i) {
        while (parts[i].size() < ps.min_per_device) {
            std::size_t donor = 0;
            for (std::size_t j = 1; j < ps.n_devices; ++j)
                if (parts[j].size() > parts[donor].size()) donor = j;
            parts[i].push_back(parts[donor].back());
            parts[donor].pop_back();
        }
    }
    for (auto& part : parts) std::sort(part.begin(), part.end());
    return parts;
}

DatasetShard materialize_shard(const DatasetShard& train,
                               const std::vector<std::size_t>& indices) {
    DatasetShard shard{train.dim, {}, {}};
    shard.features.reserve(indices.size() * train.dim);
    shard.labels.reserve(indices.size());
    for (std::size_t s : indices) {
        if (s >= train.size()) throw std::invalid_argument("sample index out of range");
        const float* x = train.row(s);
        shard.features.insert(shard.features.end(), x, x + train.dim);
        shard.labels.push_back(train.labels[s]);
    }
    return shard;
}

std::vector<DatasetShard> dirichlet_partition(const DatasetShard& train,
                                              const PartitionSpec& ps) {
    const auto parts = partition_indices(train, ps);
    std::vector<DatasetShard> shards;
    shards.reserve(parts.size());
    for (const auto& part : parts) shards.push_back(materialize_shard(train, part));
    return shards;
}

std::vector<double> label_distribution(const DatasetShard& shard, std::size_t classes) {
    if (shard.size() == 0) throw std::invalid_argument("shard must be non-empty");
    std::vector<double> dist(classes, 0.0);
    for (std::uint32_t y : shard.labels) {
        if (y >= classes) throw std::invalid_argument("label out of range");
        dist[y] += 1.0;
    }
    for (double& e : dist) e /= static_cast<double>(shard.size());
    return dist;
}

void save_partition(const std::vector<std::vector<std::size_t>>& parts,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < parts.size(); ++i)
        for (std::size_t s : parts[i]) out << i << ' ' << s << '\n';
    if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<std::vector<std::size_t>> load_partition(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<std::size_t>> parts;
    std::size_t device = 0;
    std::size_t sample = 0;
    while (in >> device >> sample) {
        if (device >= parts.size()) parts.resize(device + 1);
        parts[device].push_back(sample);
    }
    return parts;
}

}  // namespace caesar
