#include "caesar/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "caesar/codec.hpp"

namespace caesar {

std::uint64_t staleness(std::uint64_t t, const StalenessRecord& rec) {
    if (t <= rec.last_round)
        throw std::invalid_argument("round must be greater than the last participation round");
    return t - rec.last_round;
}

double download_ratio(std::uint64_t delta, std::uint64_t t, double theta_d_max) {
    if (delta < 1 || delta > t)
        throw std::invalid_argument("staleness must lie in [1, t]");
    if (!(theta_d_max >= 0.0 && theta_d_max < 1.0))
        throw std::invalid_argument("theta_d_max must lie in [0, 1)");
    return (1.0 - static_cast<double>(delta) / static_cast<double>(t)) * theta_d_max;
}

std::map<std::uint32_t, double> cluster_download_ratios(
    const std::vector<std::pair<std::uint32_t, std::uint64_t>>& participants,
    std::uint64_t t, std::size_t k, double theta_d_max) {
    if (participants.empty())
        throw std::invalid_argument("participant set must be non-empty");
    if (k < 1)
        throw std::invalid_argument("cluster count must be at least 1");

    auto sorted = participants;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) {
                  return a.second != b.second ? a.second < b.second : a.first < b.first;
              });

    const std::size_t p = sorted.size();
    const std::size_t groups = std::min(k, p);
    const std::size_t base = p / groups;
    const std::size_t extra = p % groups;  // first `extra` groups take one more

    std::map<std::uint32_t, double> out;
    std::size_t pos = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t size = base + (g < extra ? 1 : 0);
        double sum = 0.0;
        for (std::size_t j = pos; j < pos + size; ++j)
            sum += static_cast<double>(sorted[j].second);
        const auto rounded =
            static_cast<std::uint64_t>(std::floor(sum / static_cast<double>(size) + 0.5));
        const double ratio = download_ratio(rounded, t, theta_d_max);
        for (std::size_t j = pos; j < pos + size; ++j)
            out[sorted[j].first] = ratio;
        pos += size;
    }
    return out;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size())
        throw std::invalid_argument("distributions must have equal length");
    double sum = 0.0;
    for (std::size_t h = 0; h < p.size(); ++h) {
        if (p[h] == 0.0) continue;
        if (q[h] <= 0.0)
            throw std::domain_error("reference distribution is zero where the target is positive");
        sum += p[h] * std::log(p[h] / q[h]);
    }
    return sum;
}

double importance(std::size_t a_i, std::size_t a_max, double d_i, double lambda) {
    if (a_max == 0)
        throw std::invalid_argument("maximum sample volume must be positive");
    if (a_i > a_max)
        throw std::invalid_argument("sample volume exceeds the maximum threshold");
    if (d_i < 0.0)
        throw std::invalid_argument("KL divergence must be non-negative");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("lambda must lie in [0, 1]");
    return lambda * static_cast<double>(a_i) / static_cast<double>(a_max) +
           (1.0 - lambda) * std::exp(-d_i);
}

std::map<std::uint32_t, double> upload_ratios(
    const std::map<std::uint32_t, double>& importances,
    double theta_u_min, double theta_u_max) {
    if (importances.empty())
        throw std::invalid_argument("device set must be non-empty");
    if (!(theta_u_min >= 0.0 && theta_u_max < 1.0 && theta_u_min <= theta_u_max))
        throw std::invalid_argument("upload ratio bounds must satisfy 0 <= min <= max < 1");

    std::vector<std::pair<std::uint32_t, double>> ranked(importances.begin(), importances.end());
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) {
                  return a.second != b.second ? a.second > b.second : a.first < b.first;
              });

    const double step = (theta_u_max - theta_u_min) / static_cast<double>(ranked.size());
    std::map<std::uint32_t, double> out;
    for (std::size_t rank = 0; rank < ranked.size(); ++rank)
        out[ranked[rank].first] = theta_u_min + step * static_cast<double>(rank);
    return out;
}

PredictedTimes predict_times(const DeviceProfile& profile, double theta_d,
                             double theta_u, std::size_t b, std::size_t tau,
                             std::size_t n) {
    if (profile.download_bw <= 0.0 || profile.upload_bw <= 0.0)
        throw std::invalid_argument("bandwidth must be strictly positive");
    if (profile.per_sample_time <= 0.0)
        throw std::invalid_argument("per-sample time must be strictly positive");
    PredictedTimes pt;
    pt.download_s = static_cast<double>(model_payload_bits(n, theta_d)) / profile.download_bw;
    pt.upload_s = static_cast<double>(gradient_payload_bits(n, theta_u)) / profile.upload_bw;
    pt.compute_s = static_cast<double>(tau) * static_cast<double>(b) * profile.per_sample_time;
    return pt;
}

std::uint32_t pick_fastest(const std::vector<ParticipantLink>& links,
                           std::size_t b_max, std::size_t tau, std::size_t n) {
    if (links.empty())
        throw std::invalid_argument("participant set must be non-empty");
    std::uint32_t best_id = 0;
    double best_time = 0.0;
    bool first = true;
    for (const auto& link : links) {
        const double time =
            predict_times(link.profile, link.theta_d, link.theta_u, b_max, tau, n).total();
        if (first || time < best_time ||
            (time == best_time && link.profile.id < best_id)) {
            best_id = link.profile.id;
            best_time = time;
            first = false;
        }
    }
    return best_id;
}

std::map<std::uint32_t, std::size_t> batch_sizes(
    const std::vector<ParticipantLink>& links, std::uint32_t fastest_id,
    std::size_t b_max, std::size_t tau, std::size_t n) {
    const ParticipantLink* fastest = nullptr;
    for (const auto& link : links)
        if (link.profile.id == fastest_id) fastest = &link;
    if (fastest == nullptr)
        throw std::invalid_argument("fastest device is not in the participant set");

    const double m_l =
        predict_times(fastest->profile, fastest->theta_d, fastest->theta_u, b_max, tau, n)
            .total();

    std::map<std::uint32_t, std::size_t> out;
    for (const auto& link : links) {
        if (link.profile.id == fastest_id) {
            out[link.profile.id] = b_max;
            continue;
        }
        const PredictedTimes pt =
            predict_times(link.profile, link.theta_d, link.theta_u, 1, tau, n);
        const double budget = m_l - pt.download_s - pt.upload_s;
        const double raw = budget / (static_cast<double>(tau) * link.profile.per_sample_time);
        // products of times are a few ulps shy of exact integers in the
        // all-identical-profiles case; nudge before flooring
        double b = std::floor(raw + 1e-9);
        b = std::clamp(b, 1.0, static_cast<double>(b_max));
        out[link.profile.id] = static_cast<std::size_t>(b);
    }
    return out;
}

}  // namespace caesar
