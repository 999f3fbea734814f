#pragma once

// Per-round control decisions: staleness-driven download ratios, importance-
// driven upload ratios, and latency-balanced batch sizes.

#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace caesar {

struct DeviceProfile {
    std::uint32_t id = 0;
    std::size_t sample_volume = 0;            // A_i
    std::vector<double> label_distribution;   // e_i^h, sums to 1
    double download_bw = 0.0;                 // bits/second
    double upload_bw = 0.0;                   // bits/second
    double per_sample_time = 0.0;             // seconds per sample per iteration
    double importance = 0.0;                  // C_i, filled in at setup
};

struct StalenessRecord {
    std::uint64_t last_round = 0;  // 0 => never participated
};

struct PredictedTimes {
    double download_s = 0.0;
    double upload_s = 0.0;
    double compute_s = 0.0;
    double total() const { return download_s + upload_s + compute_s; }
};

// One participant's resolved configuration for a round.
struct ParticipantPlan {
    std::uint32_t id = 0;
    double theta_d = 0.0;
    double theta_u = 0.0;
    std::size_t batch_size = 0;
    PredictedTimes times;
};

using CompressionPlan = std::vector<ParticipantPlan>;

// Inputs to the latency model, bundled so the fastest-device and batch-size
// computations see exactly the same numbers.
struct ParticipantLink {
    DeviceProfile profile;
    double theta_d = 0.0;
    double theta_u = 0.0;
};

std::uint64_t staleness(std::uint64_t t, const StalenessRecord& rec);

// (1 - delta/t) * theta_d_max. delta == t collapses to 0, i.e. full precision.
double download_ratio(std::uint64_t delta, std::uint64_t t, double theta_d_max);

// Splits participants, sorted by staleness, into K contiguous near-equal
// groups and assigns each group the ratio of its rounded mean staleness.
// K is clamped to the participant count.
std::map<std::uint32_t, double> cluster_download_ratios(
    const std::vector<std::pair<std::uint32_t, std::uint64_t>>& participants,
    std::uint64_t t, std::size_t k, double theta_d_max);

// sum_h p[h] * ln(p[h] / q[h]), with 0 * ln(0/q) taken as 0.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// lambda * A_i / A_max + (1 - lambda) * exp(-D_i), in [0, 1].
double importance(std::size_t a_i, std::size_t a_max, double d_i, double lambda);

// Rank-based assignment over the whole device population: rank 0 (highest
// importance, ties by lower id) gets theta_u_min, each following rank adds
// (theta_u_max - theta_u_min) / |N|.
std::map<std::uint32_t, double> upload_ratios(
    const std::map<std::uint32_t, double>& importances,
    double theta_u_min, double theta_u_max);

// Transfer terms use the exact encoded payload sizes; compute is tau * b * mu.
PredictedTimes predict_times(const DeviceProfile& profile, double theta_d,
                             double theta_u, std::size_t b, std::size_t tau,
                             std::size_t n);

// Device minimizing download + upload + tau * b_max * mu, ties by lower id.
std::uint32_t pick_fastest(const std::vector<ParticipantLink>& links,
                           std::size_t b_max, std::size_t tau, std::size_t n);

// Gives the fastest device b_max and sizes everyone else so their predicted
// round time lands at or just under the fastest device's, clamped to
// [1, b_max].
std::map<std::uint32_t, std::size_t> batch_sizes(
    const std::vector<ParticipantLink>& links, std::uint32_t fastest_id,
    std::size_t b_max, std::size_t tau, std::size_t n);

}  // namespace caesar
