#include "caesar/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "caesar/codec.hpp"
#include "caesar/rng.hpp"

namespace caesar {
namespace {

// Tags for deriving independent per-purpose RNG streams from the master seed.
enum : std::uint64_t {
    tag_dataset = 1,
    tag_partition = 2,
    tag_profiles = 3,
    tag_init = 4,
    tag_select = 5,
    tag_train = 6,
    tag_jitter = 7,
};

constexpr std::uint64_t jitter_window_rounds = 20;

std::size_t thread_budget() {
    if (const char* env = std::getenv("CAESAR_SIM_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1)
            return static_cast<std::size_t>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

// Index-parallel loop; each index writes only its own slots, so the schedule
// cannot influence results.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(thread_budget(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace

Strategy strategy_from_string(const std::string& name) {
    if (name == "caesar") return Strategy::caesar;
    if (name == "fedavg") return Strategy::fedavg;
    if (name == "fic") return Strategy::fic;
    if (name == "cac") return Strategy::cac;
    throw ConfigError("unknown strategy \"" + name + "\" (expected caesar, fedavg, fic, or cac)");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::caesar: return "caesar";
        case Strategy::fedavg: return "fedavg";
        case Strategy::fic: return "fic";
        case Strategy::cac: return "cac";
    }
    throw std::logic_error("unhandled strategy");
}

void validate_config(const SimConfig& config) {
    require(config.partition.n_devices >= 1, "partition.n_devices must be at least 1");
    require(config.model.input_dim == config.dataset.dim,
            "model.input_dim must equal dataset.dim");
    require(config.model.classes == config.dataset.classes,
            "model.classes must equal dataset.classes");
    require(config.alpha > 0.0 && config.alpha <= 1.0, "alpha must lie in (0, 1]");
    require(config.tau >= 1, "tau must be at least 1");
    require(config.theta_d_max >= 0.0 && config.theta_d_max < 1.0,
            "theta_d_max must lie in [0, 1)");
    require(config.theta_u_min >= 0.0 && config.theta_u_max < 1.0 &&
                config.theta_u_min <= config.theta_u_max,
            "upload ratio bounds must satisfy 0 <= theta_u_min <= theta_u_max < 1");
    require(config.theta_fic >= 0.0 && config.theta_fic < 1.0, "fic_theta must lie in [0, 1)");
    require(config.lambda >= 0.0 && config.lambda <= 1.0, "lambda must lie in [0, 1]");
    require(config.k_clusters >= 1, "k_clusters must be at least 1");
    require(config.b_max >= 1, "b_max must be at least 1");
    require(config.b_fixed >= 1, "b_fixed must be at least 1");
    require(config.lr.base > 0.0, "lr.base must be positive");
    require(config.lr.decay > 0.0 && config.lr.decay <= 1.0, "lr.decay must lie in (0, 1]");
    require(config.target_accuracy.has_value() || config.max_rounds.has_value(),
            "at least one of target_accuracy and max_rounds must be set");
    if (config.target_accuracy)
        require(*config.target_accuracy > 0.0 && *config.target_accuracy <= 1.0,
                "target_accuracy must lie in (0, 1]");
    if (config.max_rounds) require(*config.max_rounds >= 1, "max_rounds must be at least 1");
    require(config.jitter >= 0.0 && config.jitter < 1.0, "jitter must lie in [0, 1)");

    if (!config.profile_table.empty()) {
        require(config.profile_table.size() == config.partition.n_devices,
                "profiles.table size must equal partition.n_devices");
        for (std::size_t i = 0; i < config.profile_table.size(); ++i) {
            const auto& p = config.profile_table[i];
            require(p.id == i, "profiles.table ids must be 0..n-1 in order");
            require(p.per_sample_time > 0.0, "profiles.table mu must be positive");
            require(p.download_bw > 0.0 && p.upload_bw > 0.0,
                    "profiles.table bandwidths must be positive");
        }
    } else {
        const auto& g = config.profile_gen;
        require(g.mu_min > 0.0 && g.mu_min <= g.mu_max, "profiles.mu_range must be positive and ordered");
        require(g.down_bw_min > 0.0 && g.down_bw_min <= g.down_bw_max,
                "profiles.down_bw_range must be positive and ordered");
        require(g.up_bw_min > 0.0 && g.up_bw_min <= g.up_bw_max,
                "profiles.up_bw_range must be positive and ordered");
    }
}

std::vector<std::uint32_t> select_participants(std::size_t n_devices, double alpha,
                                               SeededRng& rng) {
    if (n_devices == 0) throw std::invalid_argument("device set must be non-empty");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    auto k = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(n_devices)));
    k = std::clamp<std::size_t>(k, 1, n_devices);
    const auto sampled = rng.sample_without_replacement(n_devices, k);
    return {sampled.begin(), sampled.end()};
}

std::map<std::uint32_t, double> baseline_ratios(Strategy strategy,
                                                const std::vector<DeviceProfile>& participants,
                                                double theta_fic) {
    if (participants.empty()) throw std::invalid_argument("participant set must be non-empty");
    std::map<std::uint32_t, double> out;
    switch (strategy) {
        case Strategy::fedavg:
            for (const auto& p : participants) out[p.id] = 0.0;
            return out;
        case Strategy::fic:
            for (const auto& p : participants) out[p.id] = theta_fic;
            return out;
        case Strategy::cac: break;
        default:
            throw std::invalid_argument("baseline_ratios expects a baseline strategy");
    }

    // Capability = normalized compute speed plus normalized mean bandwidth;
    // the strongest participant gets 0.1, the weakest 0.6, linear in rank.
    double sp_min = 0.0, sp_max = 0.0, bw_min = 0.0, bw_max = 0.0;
    for (std::size_t i = 0; i < participants.size(); ++i) {
        const double sp = 1.0 / participants[i].per_sample_time;
        const double bw = 0.5 * (participants[i].download_bw + participants[i].upload_bw);
        if (i == 0 || sp < sp_min) sp_min = sp;
        if (i == 0 || sp > sp_max) sp_max = sp;
        if (i == 0 || bw < bw_min) bw_min = bw;
        if (i == 0 || bw > bw_max) bw_max = bw;
    }
    auto norm = [](double x, double lo, double hi) {
        return hi > lo ? (x - lo) / (hi - lo) : 0.0;
    };
    std::vector<std::pair<double, std::uint32_t>> scored;
    scored.reserve(participants.size());
    for (const auto& p : participants) {
        const double score = norm(1.0 / p.per_sample_time, sp_min, sp_max) +
                             norm(0.5 * (p.download_bw + p.upload_bw), bw_min, bw_max);
        scored.emplace_back(score, p.id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const std::size_t p_count = scored.size();
    for (std::size_t rank = 0; rank < p_count; ++rank) {
        const double span = p_count > 1
                                ? static_cast<double>(rank) / static_cast<double>(p_count - 1)
                                : 0.0;
        out[scored[rank].second] = 0.1 + 0.5 * span;
    }
    return out;
}

void jitter_profiles(std::vector<DeviceState>& devices, SeededRng& rng, double jitter) {
    if (!(jitter >= 0.0 && jitter < 1.0))
        throw std::invalid_argument("jitter must lie in [0, 1)");
    if (jitter == 0.0) return;
    for (auto& d : devices) {
        d.profile.per_sample_time =
            d.base_profile.per_sample_time * rng.uniform(1.0 - jitter, 1.0 + jitter);
        d.profile.download_bw =
            d.base_profile.download_bw * rng.uniform(1.0 - jitter, 1.0 + jitter);
        d.profile.upload_bw =
            d.base_profile.upload_bw * rng.uniform(1.0 - jitter, 1.0 + jitter);
    }
}

Simulation::Simulation(const SimConfig& config) : config_(config) {
    validate_config(config_);
    n_params_ = param_count(config_.model);

    SynthSpec ds = config_.dataset;
    ds.seed = SeededRng::mix(config_.master_seed, tag_dataset, ds.seed);
    auto [train, test] = synth_dataset(ds);
    test_ = std::move(test);

    PartitionSpec ps = config_.partition;
    ps.seed = SeededRng::mix(config_.master_seed, tag_partition, ps.seed);
    shards_ = dirichlet_partition(train, ps);

    const std::size_t n = config_.partition.n_devices;
    devices_.resize(n);
    SeededRng prng(SeededRng::mix(config_.master_seed, tag_profiles, config_.profile_gen.seed));
    for (std::size_t i = 0; i < n; ++i) {
        DeviceProfile p;
        if (!config_.profile_table.empty()) {
            p = config_.profile_table[i];
        } else {
            const auto& g = config_.profile_gen;
            p.id = static_cast<std::uint32_t>(i);
            p.per_sample_time = prng.uniform(g.mu_min, g.mu_max);
            p.download_bw = prng.uniform(g.down_bw_min, g.down_bw_max);
            p.upload_bw = prng.uniform(g.up_bw_min, g.up_bw_max);
        }
        p.sample_volume = shards_[i].size();
        p.label_distribution = label_distribution(shards_[i], config_.model.classes);
        devices_[i].base_profile = p;
        devices_[i].profile = p;
    }

    std::size_t a_max = 0;
    for (const auto& d : devices_) a_max = std::max(a_max, d.profile.sample_volume);
    const std::vector<double> uniform(config_.model.classes,
                                      1.0 / static_cast<double>(config_.model.classes));
    std::map<std::uint32_t, double> importances;
    for (auto& d : devices_) {
        const double div = kl_divergence(d.profile.label_distribution, uniform);
        const double c = importance(d.profile.sample_volume, a_max, div, config_.lambda);
        d.profile.importance = c;
        d.base_profile.importance = c;
        importances[d.profile.id] = c;
    }
    upload_ratio_ = upload_ratios(importances, config_.theta_u_min, config_.theta_u_max);

    w_ = init_model(config_.model, SeededRng::mix(config_.master_seed, tag_init, 0));
}

RoundMetrics Simulation::run_round(std::uint64_t t) {
    if (t < 1) throw std::invalid_argument("rounds are 1-indexed");

    if (config_.jitter > 0.0 && (t - 1) % jitter_window_rounds == 0) {
        const std::uint64_t window = (t - 1) / jitter_window_rounds;
        SeededRng jrng(SeededRng::mix(config_.master_seed, tag_jitter, window));
        jitter_profiles(devices_, jrng, config_.jitter);
    }

    SeededRng srng(SeededRng::mix(config_.master_seed, tag_select, t));
    const auto ids = select_participants(devices_.size(), config_.alpha, srng);
    const std::size_t p_count = ids.size();

    std::vector<DeviceProfile> profiles;
    profiles.reserve(p_count);
    for (auto id : ids) profiles.push_back(devices_[id].profile);

    std::map<std::uint32_t, double> theta_d;
    std::map<std::uint32_t, double> theta_u;
    if (config_.strategy == Strategy::caesar) {
        std::vector<std::pair<std::uint32_t, std::uint64_t>> with_staleness;
        with_staleness.reserve(p_count);
        for (auto id : ids)
            with_staleness.emplace_back(id, staleness(t, devices_[id].staleness));
        theta_d = cluster_download_ratios(with_staleness, t, config_.k_clusters,
                                          config_.theta_d_max);
        for (auto id : ids) theta_u[id] = upload_ratio_.at(id);
    } else {
        theta_d = baseline_ratios(config_.strategy, profiles, config_.theta_fic);
        theta_u = theta_d;
    }
    // A device that has never held a model cannot recover a sign-compressed
    // one; the protocol sends those devices full precision no matter what the
    // policy said.
    for (auto id : ids)
        if (!devices_[id].has_local) theta_d[id] = 0.0;

    std::map<std::uint32_t, std::size_t> batch;
    if (config_.strategy == Strategy::caesar && config_.adaptive_batch) {
        std::vector<ParticipantLink> links;
        links.reserve(p_count);
        for (auto id : ids)
            links.push_back({devices_[id].profile, theta_d.at(id), theta_u.at(id)});
        const std::uint32_t fastest =
            pick_fastest(links, config_.b_max, config_.tau, n_params_);
        batch = batch_sizes(links, fastest, config_.b_max, config_.tau, n_params_);
    } else {
        for (auto id : ids) batch[id] = config_.b_fixed;
    }

    // One encoding per distinct ratio; clustered downloads share them.
    std::map<double, CompressedModel> encoded;
    for (auto id : ids) {
        const double ratio = theta_d.at(id);
        if (!encoded.count(ratio)) encoded.emplace(ratio, encode_model(w_, ratio));
    }

    const double eta = lr_at(config_.lr, t - 1);
    std::vector<ParamVector> decoded(p_count);
    std::vector<ParamVector> new_local(p_count);
    std::vector<std::uint64_t> down_bits(p_count), up_bits(p_count);

    parallel_for(p_count, [&](std::size_t i) {
        const std::uint32_t id = ids[i];
        DeviceState& dev = devices_[id];
        const CompressedModel& cm = encoded.at(theta_d.at(id));
        const ParamVector* local = dev.has_local ? &dev.local_model : nullptr;
        const ParamVector recovered = recover_model(cm, local);
        auto res = local_train(recovered, config_.model, shards_[id], batch.at(id),
                               config_.tau, eta,
                               SeededRng::mix(config_.master_seed, tag_train, t, id));
        const SparseGradient sg = encode_gradient(res.update, theta_u.at(id));
        decoded[i] = decode_gradient(sg);
        new_local[i] = std::move(res.weights);
        down_bits[i] = model_payload_bits(cm);
        up_bits[i] = gradient_payload_bits(sg);
    });

    std::vector<double> sum(n_params_, 0.0);
    for (std::size_t i = 0; i < p_count; ++i)
        for (std::size_t j = 0; j < n_params_; ++j)
            sum[j] += static_cast<double>(decoded[i][j]);
    for (std::size_t j = 0; j < n_params_; ++j)
        w_[j] = static_cast<float>(static_cast<double>(w_[j]) -
                                   sum[j] / static_cast<double>(p_count));

    RoundMetrics rm;
    rm.round = t;
    for (std::size_t i = 0; i < p_count; ++i) {
        const std::uint32_t id = ids[i];
        DeviceState& dev = devices_[id];
        dev.staleness.last_round = t;
        dev.local_model = std::move(new_local[i]);
        dev.has_local = true;

        ParticipantPlan plan;
        plan.id = id;
        plan.theta_d = theta_d.at(id);
        plan.theta_u = theta_u.at(id);
        plan.batch_size = batch.at(id);
        plan.times = predict_times(dev.profile, plan.theta_d, plan.theta_u,
                                   plan.batch_size, config_.tau, n_params_);
        rm.participants.push_back(plan);
        rm.download_bits += down_bits[i];
        rm.upload_bits += up_bits[i];
    }

    double slowest = 0.0;
    for (const auto& plan : rm.participants) slowest = std::max(slowest, plan.times.total());
    double wait = 0.0;
    for (const auto& plan : rm.participants) wait += slowest - plan.times.total();
    rm.round_time_s = slowest;
    rm.avg_wait_s = wait / static_cast<double>(p_count);

    cum_time_s_ += rm.round_time_s;
    cum_download_bits_ += rm.download_bits;
    cum_upload_bits_ += rm.upload_bits;
    rm.cum_time_s = cum_time_s_;
    rm.cum_download_bits = cum_download_bits_;
    rm.cum_upload_bits = cum_upload_bits_;

    rm.accuracy = evaluate(w_, config_.model, test_);
    return rm;
}

std::vector<RoundMetrics> Simulation::run() {
    std::vector<RoundMetrics> out;
    for (std::uint64_t t = 1;; ++t) {
        if (config_.max_rounds && t > *config_.max_rounds) break;
        out.push_back(run_round(t));
        if (config_.target_accuracy && out.back().accuracy >= *config_.target_accuracy) break;
    }
    return out;
}

std::vector<RoundMetrics> run_experiment(const SimConfig& config) {
    Simulation sim(config);
    return sim.run();
}

}  // namespace caesar
