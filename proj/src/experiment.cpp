#include "caesar/experiment.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace caesar {
namespace {

using nlohmann::json;

std::string dotted(const std::string& scope, const std::string& key) {
    return scope.empty() ? key : scope + "." + key;
}

void check_keys(const json& obj, const std::string& scope,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known)
            throw ConfigError("unknown key \"" + dotted(scope, it.key()) + "\"");
    }
}

const json& require_key(const json& obj, const std::string& scope, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end())
        throw ConfigError("missing required key \"" + dotted(scope, key) + "\"");
    return *it;
}

const json& require_object(const json& v, const std::string& path) {
    if (!v.is_object()) throw ConfigError("key \"" + path + "\" must be an object");
    return v;
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError("key \"" + path + "\" must be a number");
    return v.get<double>();
}

std::uint64_t as_unsigned(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError("key \"" + path + "\" must be a non-negative integer");
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError("key \"" + path + "\" must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError("key \"" + path + "\" must be a boolean");
    return v.get<bool>();
}

std::pair<double, double> as_range(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2)
        throw ConfigError("key \"" + path + "\" must be a [low, high] pair");
    return {as_number(v[0], path), as_number(v[1], path)};
}

ModelKind model_kind_from_string(const std::string& name, const std::string& path) {
    if (name == "softmax_regression" || name == "softmax-regression")
        return ModelKind::softmax_regression;
    if (name == "mlp") return ModelKind::mlp;
    throw ConfigError("key \"" + path + "\" must be \"softmax_regression\" or \"mlp\"");
}

const char* model_kind_name(ModelKind kind) {
    return kind == ModelKind::mlp ? "mlp" : "softmax_regression";
}

void parse_model(const json& v, ModelSpec& spec) {
    require_object(v, "model");
    check_keys(v, "model", {"kind", "input_dim", "hidden_dims", "classes"});
    spec.kind = model_kind_from_string(as_string(require_key(v, "model", "kind"), "model.kind"),
                                       "model.kind");
    spec.input_dim = as_unsigned(require_key(v, "model", "input_dim"), "model.input_dim");
    spec.classes = as_unsigned(require_key(v, "model", "classes"), "model.classes");
    spec.hidden_dims.clear();
    if (v.contains("hidden_dims")) {
        const json& dims = v["hidden_dims"];
        if (!dims.is_array()) throw ConfigError("key \"model.hidden_dims\" must be an array");
        for (const auto& d : dims)
            spec.hidden_dims.push_back(as_unsigned(d, "model.hidden_dims"));
    }
}

void parse_dataset(const json& v, SynthSpec& spec) {
    require_object(v, "dataset");
    check_keys(v, "dataset", {"classes", "dim", "per_class", "class_sep", "noise", "seed"});
    spec.classes = as_unsigned(require_key(v, "dataset", "classes"), "dataset.classes");
    spec.dim = as_unsigned(require_key(v, "dataset", "dim"), "dataset.dim");
    spec.per_class = as_unsigned(require_key(v, "dataset", "per_class"), "dataset.per_class");
    spec.class_sep = as_number(require_key(v, "dataset", "class_sep"), "dataset.class_sep");
    spec.noise = as_number(require_key(v, "dataset", "noise"), "dataset.noise");
    spec.seed = v.contains("seed") ? as_unsigned(v["seed"], "dataset.seed") : 0;
}

void parse_partition(const json& v, PartitionSpec& spec) {
    require_object(v, "partition");
    check_keys(v, "partition", {"n_devices", "heterogeneity", "min_per_device", "seed"});
    spec.n_devices = as_unsigned(require_key(v, "partition", "n_devices"), "partition.n_devices");
    spec.heterogeneity =
        as_number(require_key(v, "partition", "heterogeneity"), "partition.heterogeneity");
    spec.min_per_device =
        as_unsigned(require_key(v, "partition", "min_per_device"), "partition.min_per_device");
    spec.seed = v.contains("seed") ? as_unsigned(v["seed"], "partition.seed") : 0;
}

void parse_profiles(const json& v, SimConfig& config) {
    require_object(v, "profiles");
    if (v.contains("table")) {
        check_keys(v, "profiles", {"table"});
        const json& table = v["table"];
        if (!table.is_array() || table.empty())
            throw ConfigError("key \"profiles.table\" must be a non-empty array");
        config.profile_table.clear();
        for (std::size_t i = 0; i < table.size(); ++i) {
            const std::string path = "profiles.table[" + std::to_string(i) + "]";
            require_object(table[i], path);
            check_keys(table[i], path, {"mu", "down_bw", "up_bw"});
            DeviceProfile p;
            p.id = static_cast<std::uint32_t>(i);
            p.per_sample_time = as_number(require_key(table[i], path, "mu"), path + ".mu");
            p.download_bw = as_number(require_key(table[i], path, "down_bw"), path + ".down_bw");
            p.upload_bw = as_number(require_key(table[i], path, "up_bw"), path + ".up_bw");
            config.profile_table.push_back(p);
        }
        return;
    }
    check_keys(v, "profiles", {"mu_range", "down_bw_range", "up_bw_range", "seed"});
    auto& g = config.profile_gen;
    std::tie(g.mu_min, g.mu_max) =
        as_range(require_key(v, "profiles", "mu_range"), "profiles.mu_range");
    std::tie(g.down_bw_min, g.down_bw_max) =
        as_range(require_key(v, "profiles", "down_bw_range"), "profiles.down_bw_range");
    std::tie(g.up_bw_min, g.up_bw_max) =
        as_range(require_key(v, "profiles", "up_bw_range"), "profiles.up_bw_range");
    g.seed = v.contains("seed") ? as_unsigned(v["seed"], "profiles.seed") : 0;
}

json profiles_json(const SimConfig& c) {
    json j;
    if (!c.profile_table.empty()) {
        json table = json::array();
        for (const auto& p : c.profile_table)
            table.push_back({{"mu", p.per_sample_time},
                             {"down_bw", p.download_bw},
                             {"up_bw", p.upload_bw}});
        j["table"] = std::move(table);
    } else {
        j["mu_range"] = {c.profile_gen.mu_min, c.profile_gen.mu_max};
        j["down_bw_range"] = {c.profile_gen.down_bw_min, c.profile_gen.down_bw_max};
        j["up_bw_range"] = {c.profile_gen.up_bw_min, c.profile_gen.up_bw_max};
        j["seed"] = c.profile_gen.seed;
    }
    return j;
}

json config_json(const SimConfig& c) {
    json j;
    j["strategy"] = to_string(c.strategy);
    j["fic_theta"] = c.theta_fic;
    j["model"] = {{"kind", model_kind_name(c.model.kind)},
                  {"input_dim", c.model.input_dim},
                  {"hidden_dims", c.model.hidden_dims},
                  {"classes", c.model.classes}};
    j["dataset"] = {{"classes", c.dataset.classes},
                    {"dim", c.dataset.dim},
                    {"per_class", c.dataset.per_class},
                    {"class_sep", c.dataset.class_sep},
                    {"noise", c.dataset.noise},
                    {"seed", c.dataset.seed}};
    j["partition"] = {{"n_devices", c.partition.n_devices},
                      {"heterogeneity", c.partition.heterogeneity},
                      {"min_per_device", c.partition.min_per_device},
                      {"seed", c.partition.seed}};
    j["profiles"] = profiles_json(c);
    j["alpha"] = c.alpha;
    j["tau"] = c.tau;
    j["theta_d_max"] = c.theta_d_max;
    j["theta_u_min"] = c.theta_u_min;
    j["theta_u_max"] = c.theta_u_max;
    j["lambda"] = c.lambda;
    j["k_clusters"] = c.k_clusters;
    j["b_max"] = c.b_max;
    j["b_fixed"] = c.b_fixed;
    j["adaptive_batch"] = c.adaptive_batch;
    j["lr"] = {{"base", c.lr.base}, {"decay", c.lr.decay}};
    j["target_accuracy"] = c.target_accuracy ? json(*c.target_accuracy) : json(nullptr);
    j["max_rounds"] = c.max_rounds ? json(*c.max_rounds) : json(nullptr);
    j["jitter"] = c.jitter;
    j["master_seed"] = c.master_seed;
    return j;
}

}  // namespace

ExperimentSpec parse_experiment_text(const std::string& text) {
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw ConfigError("config is not valid JSON");
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(root, "",
               {"strategy", "fic_theta", "model", "dataset", "partition", "profiles",
                "alpha", "tau", "theta_d_max", "theta_u_min", "theta_u_max", "lambda",
                "k_clusters", "b_max", "b_fixed", "adaptive_batch", "lr",
                "target_accuracy", "max_rounds", "jitter", "seeds", "output_dir"});

    ExperimentSpec spec;
    SimConfig& c = spec.base;
    c.strategy = strategy_from_string(as_string(require_key(root, "", "strategy"), "strategy"));
    if (root.contains("fic_theta")) c.theta_fic = as_number(root["fic_theta"], "fic_theta");
    parse_model(require_key(root, "", "model"), c.model);
    parse_dataset(require_key(root, "", "dataset"), c.dataset);
    parse_partition(require_key(root, "", "partition"), c.partition);
    parse_profiles(require_key(root, "", "profiles"), c);
    c.alpha = as_number(require_key(root, "", "alpha"), "alpha");
    c.tau = as_unsigned(require_key(root, "", "tau"), "tau");
    c.theta_d_max = as_number(require_key(root, "", "theta_d_max"), "theta_d_max");
    c.theta_u_min = as_number(require_key(root, "", "theta_u_min"), "theta_u_min");
    c.theta_u_max = as_number(require_key(root, "", "theta_u_max"), "theta_u_max");
    c.lambda = as_number(require_key(root, "", "lambda"), "lambda");
    c.k_clusters = as_unsigned(require_key(root, "", "k_clusters"), "k_clusters");
    c.b_max = as_unsigned(require_key(root, "", "b_max"), "b_max");
    c.b_fixed = as_unsigned(require_key(root, "", "b_fixed"), "b_fixed");
    if (root.contains("adaptive_batch"))
        c.adaptive_batch = as_bool(root["adaptive_batch"], "adaptive_batch");

    const json& lr = require_object(require_key(root, "", "lr"), "lr");
    check_keys(lr, "lr", {"base", "decay"});
    c.lr.base = as_number(require_key(lr, "lr", "base"), "lr.base");
    c.lr.decay = as_number(require_key(lr, "lr", "decay"), "lr.decay");

    if (root.contains("target_accuracy") && !root["target_accuracy"].is_null())
        c.target_accuracy = as_number(root["target_accuracy"], "target_accuracy");
    if (root.contains("max_rounds") && !root["max_rounds"].is_null())
        c.max_rounds = as_unsigned(root["max_rounds"], "max_rounds");
    if (root.contains("jitter")) c.jitter = as_number(root["jitter"], "jitter");

    const json& seeds = require_key(root, "", "seeds");
    if (!seeds.is_array() || seeds.empty())
        throw ConfigError("key \"seeds\" must be a non-empty array of integers");
    for (const auto& s : seeds) spec.seeds.push_back(as_unsigned(s, "seeds"));
    if (root.contains("output_dir"))
        spec.output_dir = as_string(root["output_dir"], "output_dir");

    validate_config(c);
    return spec;
}

ExperimentSpec parse_experiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_experiment_text(buf.str());
}

std::string resolved_config_text(const SimConfig& config) {
    return config_json(config).dump(2) + "\n";
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rounds) {
    out << "round,accuracy,round_time_s,cum_time_s,round_traffic_bits,cum_traffic_bits,"
           "avg_wait_s\n";
    for (const auto& r : rounds)
        out << r.round << ',' << format_double(r.accuracy) << ','
            << format_double(r.round_time_s) << ',' << format_double(r.cum_time_s) << ','
            << r.round_traffic_bits() << ',' << r.cum_traffic_bits() << ','
            << format_double(r.avg_wait_s) << '\n';
}

std::string run_one(const SimConfig& config, const std::string& out_root) {
    const auto rounds = run_experiment(config);

    const std::filesystem::path dir =
        std::filesystem::path(out_root) /
        (to_string(config.strategy) + "-seed" + std::to_string(config.master_seed));
    std::filesystem::create_directories(dir);

    {
        std::ofstream csv(dir / "metrics.csv", std::ios::binary);
        if (!csv) throw std::runtime_error("cannot open " + (dir / "metrics.csv").string());
        write_metrics_csv(csv, rounds);
        if (!csv) throw std::runtime_error("failed writing " + (dir / "metrics.csv").string());
    }

    const auto& last = rounds.back();
    double wait_sum = 0.0;
    for (const auto& r : rounds) wait_sum += r.avg_wait_s;
    json target_round = nullptr;
    if (config.target_accuracy) {
        for (const auto& r : rounds)
            if (r.accuracy >= *config.target_accuracy) {
                target_round = r.round;
                break;
            }
    }
    json summary;
    summary["strategy"] = to_string(config.strategy);
    summary["seed"] = config.master_seed;
    summary["rounds"] = rounds.size();
    summary["final_accuracy"] = last.accuracy;
    summary["cum_traffic_bits"] = last.cum_traffic_bits();
    summary["cum_time_s"] = last.cum_time_s;
    summary["mean_wait_s"] = wait_sum / static_cast<double>(rounds.size());
    summary["target_round"] = target_round;
    summary["config"] = json::parse(resolved_config_text(config));
    {
        std::ofstream js(dir / "summary.json", std::ios::binary);
        if (!js) throw std::runtime_error("cannot open " + (dir / "summary.json").string());
        js << summary.dump(2) << '\n';
    }
    return dir.string();
}

void run_all(const ExperimentSpec& spec, const std::string& out_root, bool quiet,
             std::ostream& log) {
    for (const std::uint64_t seed : spec.seeds) {
        SimConfig config = spec.base;
        config.master_seed = seed;
        const std::string dir = run_one(config, out_root);
        if (!quiet) {
            const auto rows = load_metrics_csv(
                (std::filesystem::path(dir) / "metrics.csv").string());
            log << dir << ": rounds=" << rows.size()
                << " final_accuracy=" << format_double(rows.back().accuracy)
                << " cum_traffic_bits=" << rows.back().cum_traffic_bits << '\n';
        }
    }
}

std::vector<MetricsRow> load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics file " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line != "round,accuracy,round_time_s,cum_time_s,round_traffic_bits,cum_traffic_bits,"
                "avg_wait_s")
        throw std::runtime_error("unexpected metrics header in " + path);

    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t pos = 0; pos <= line.size(); ++pos) {
            if (pos == line.size() || line[pos] == ',') {
                fields.push_back(line.substr(start, pos - start));
                start = pos + 1;
            }
        }
        if (fields.size() != 7)
            throw std::runtime_error("malformed metrics row in " + path);
        MetricsRow r;
        r.round = std::stoull(fields[0]);
        r.accuracy = std::stod(fields[1]);
        r.round_time_s = std::stod(fields[2]);
        r.cum_time_s = std::stod(fields[3]);
        r.round_traffic_bits = std::stoull(fields[4]);
        r.cum_traffic_bits = std::stoull(fields[5]);
        r.avg_wait_s = std::stod(fields[6]);
        rows.push_back(r);
    }
    if (rows.empty()) throw std::runtime_error("metrics file " + path + " has no rows");
    return rows;
}

RunReport report_run(const std::string& dir, double target_acc) {
    const auto rows =
        load_metrics_csv((std::filesystem::path(dir) / "metrics.csv").string());
    RunReport rep;
    rep.dir = dir;
    double wait_sum = 0.0;
    for (const auto& r : rows) {
        wait_sum += r.avg_wait_s;
        rep.best_accuracy = std::max(rep.best_accuracy, r.accuracy);
        if (!rep.reached && r.accuracy >= target_acc) {
            rep.reached = true;
            rep.round = r.round;
            rep.traffic_bits = r.cum_traffic_bits;
            rep.time_s = r.cum_time_s;
        }
    }
    rep.mean_wait_s = wait_sum / static_cast<double>(rows.size());
    return rep;
}

void print_report_table(std::ostream& out, const std::vector<RunReport>& reports,
                        double target_acc) {
    std::size_t width = 4;
    for (const auto& r : reports) width = std::max(width, r.dir.size());
    out << "target accuracy: " << format_double(target_acc) << '\n';
    out << std::left << std::setw(static_cast<int>(width + 2)) << "run"
        << std::setw(12) << "round" << std::setw(16) << "traffic_bits"
        << std::setw(14) << "traffic_MB" << std::setw(12) << "time_s"
        << std::setw(14) << "mean_wait_s" << "best_acc" << '\n';
    for (const auto& r : reports) {
        out << std::left << std::setw(static_cast<int>(width + 2)) << r.dir;
        if (r.reached) {
            std::ostringstream mb, ts;
            mb << std::fixed << std::setprecision(3)
               << static_cast<double>(r.traffic_bits) / 8e6;
            ts << std::fixed << std::setprecision(3) << r.time_s;
            out << std::setw(12) << r.round << std::setw(16) << r.traffic_bits
                << std::setw(14) << mb.str() << std::setw(12) << ts.str();
        } else {
            out << std::setw(12) << "unreached" << std::setw(16) << "-"
                << std::setw(14) << "-" << std::setw(12) << "-";
        }
        std::ostringstream ws, ba;
        ws << std::fixed << std::setprecision(3) << r.mean_wait_s;
        ba << std::fixed << std::setprecision(4) << r.best_accuracy;
        out << std::setw(14) << ws.str() << ba.str() << '\n';
    }
}

std::string reports_json_text(const std::vector<RunReport>& reports, double target_acc) {
    json j;
    j["target_accuracy"] = target_acc;
    j["runs"] = json::array();
    for (const auto& r : reports) {
        json e;
        e["dir"] = r.dir;
        e["reached"] = r.reached;
        e["round"] = r.reached ? json(r.round) : json(nullptr);
        e["cum_traffic_bits"] = r.reached ? json(r.traffic_bits) : json(nullptr);
        e["cum_time_s"] = r.reached ? json(r.time_s) : json(nullptr);
        e["mean_wait_s"] = r.mean_wait_s;
        e["best_accuracy"] = r.best_accuracy;
        j["runs"].push_back(e);
    }
    return j.dump(2) + "\n";
}

}  // namespace caesar
