#pragma once

// Synchronous round loop over simulated devices: participant selection,
// per-strategy compression planning, local training, aggregation, and
// traffic/time accounting. Per-participant work runs on a worker pool
// (capped by CAESAR_SIM_THREADS) without affecting results.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "caesar/datagen.hpp"
#include "caesar/learner.hpp"
#include "caesar/policy.hpp"
#include "caesar/rng.hpp"

namespace caesar {

// Invalid experiment configuration; the offending key or field is named in
// the message.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Strategy { caesar, fedavg, fic, cac };

Strategy strategy_from_string(const std::string& name);
std::string to_string(Strategy s);

struct ProfileGenSpec {
    double mu_min = 1e-3, mu_max = 1e-3;          // seconds per sample
    double down_bw_min = 1e6, down_bw_max = 1e6;  // bits/second
    double up_bw_min = 1e6, up_bw_max = 1e6;
    std::uint64_t seed = 0;
};

struct SimConfig {
    Strategy strategy = Strategy::caesar;
    double theta_fic = 0.35;

    ModelSpec model;
    SynthSpec dataset;
    PartitionSpec partition;  // partition.n_devices is the device count
    ProfileGenSpec profile_gen;
    std::vector<DeviceProfile> profile_table;  // when non-empty, used verbatim

    double alpha = 0.1;
    std::size_t tau = 10;
    double theta_d_max = 0.6;
    double theta_u_min = 0.1;
    double theta_u_max = 0.6;
    double lambda = 0.5;
    std::size_t k_clusters = 3;
    std::size_t b_max = 32;
    std::size_t b_fixed = 32;
    bool adaptive_batch = true;  // caesar only; false pins everyone to b_fixed
    LrSchedule lr;

    std::optional<double> target_accuracy;   // stop when reached
    std::optional<std::uint64_t> max_rounds; // stop after this many rounds
    double jitter = 0.0;
    std::uint64_t master_seed = 1;
};

void validate_config(const SimConfig& config);

struct DeviceState {
    DeviceProfile base_profile;  // as configured; jitter rescales from here
    DeviceProfile profile;       // in effect this round
    StalenessRecord staleness;
    ParamVector local_model;     // empty until first participation
    bool has_local = false;
};

struct RoundMetrics {
    std::uint64_t round = 0;
    double accuracy = 0.0;
    double round_time_s = 0.0;  // slowest participant
    double cum_time_s = 0.0;
    std::uint64_t download_bits = 0;
    std::uint64_t upload_bits = 0;
    std::uint64_t cum_download_bits = 0;
    std::uint64_t cum_upload_bits = 0;
    double avg_wait_s = 0.0;
    std::vector<ParticipantPlan> participants;

    std::uint64_t round_traffic_bits() const { return download_bits + upload_bits; }
    std::uint64_t cum_traffic_bits() const { return cum_download_bits + cum_upload_bits; }
};

// Uniform sample of max(1, round(alpha * n)) device ids, sorted ascending.
std::vector<std::uint32_t> select_participants(std::size_t n_devices, double alpha,
                                               SeededRng& rng);

// Ratio applied to both directions under a baseline strategy: fedavg 0
// everywhere, fic theta_fic everywhere, cac a linear [0.1, 0.6] span over
// capability rank (strongest device lowest).
std::map<std::uint32_t, double> baseline_ratios(Strategy strategy,
                                                const std::vector<DeviceProfile>& participants,
                                                double theta_fic);

// Rescales each device's live profile from its base by independent factors
// uniform in [1 - jitter, 1 + jitter], in device order.
void jitter_profiles(std::vector<DeviceState>& devices, SeededRng& rng, double jitter);

class Simulation {
public:
    explicit Simulation(const SimConfig& config);

    RoundMetrics run_round(std::uint64_t t);
    std::vector<RoundMetrics> run();

    const ParamVector& global_model() const { return w_; }
    const std::vector<DeviceState>& devices() const { return devices_; }
    const std::vector<DatasetShard>& shards() const { return shards_; }
    const DatasetShard& test_shard() const { return test_; }
    const std::map<std::uint32_t, double>& upload_ratio_table() const {
        return upload_ratio_;
    }

private:
    SimConfig config_;
    std::size_t n_params_ = 0;
    DatasetShard test_;
    std::vector<DatasetShard> shards_;
    std::vector<DeviceState> devices_;
    std::map<std::uint32_t, double> upload_ratio_;  // rank-based, fixed at setup
    ParamVector w_;
    double cum_time_s_ = 0.0;
    std::uint64_t cum_download_bits_ = 0;
    std::uint64_t cum_upload_bits_ = 0;
};

std::vector<RoundMetrics> run_experiment(const SimConfig& config);

}  // namespace caesar
