#pragma once

// Structured-text persistence: run configurations (JSON), run logs (JSON
// lines, one record per line) and atomic file output.
//
// Run log layout, schema_version 1:
//   {"type":"header","schema_version":1,"config":{...}}
//   {"type":"init","index":i,"theta":[...],"return":r}                  x init_observations
//   {"type":"episode","episode":e,"theta":[...],"return":r,"best_so_far":b,
//    "interacted":bool,"timed_out":bool,"x_best":[...]?,"input":{"delta":[...],"preferred":[...]}?,
//    "proposal_mean":[...],"proposal_variances":[...],
//    "hyperparams":{"signal_variance":..,"length_scale":..,"noise_variance":..},
//    "acquisition_score":s,"wall_seconds":t}                              x episodes
//   {"type":"footer","aborted":bool,"abort_reason":"...","episodes":n}

#include "ibo/optimizer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace ibo {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline json vec_to_json(const Vector& v)
{
    return json(to_std(v));
}

inline Vector vec_from_json(const json& j)
{
    return to_eigen(j.get<std::vector<double>>());
}

inline json to_json(const KernelHyperparams& h)
{
    return {{"signal_variance", h.signal_variance}, {"length_scale", h.length_scale}, {"noise_variance", h.noise_variance}};
}

inline KernelHyperparams hyperparams_from_json(const json& j)
{
    return {j.at("signal_variance").get<double>(), j.at("length_scale").get<double>(),
            j.at("noise_variance").get<double>()};
}

inline json to_json(const PreferenceInput& in)
{
    return {{"delta", vec_to_json(in.delta)}, {"preferred", in.preferred}};
}

inline PreferenceInput preference_input_from_json(const json& j)
{
    PreferenceInput in;
    in.delta = vec_from_json(j.at("delta"));
    in.preferred = j.at("preferred").get<std::vector<bool>>();
    return in;
}

inline json to_json(const ProposalDistribution& p)
{
    return {{"mean", vec_to_json(p.mean)}, {"variances", vec_to_json(p.variances)}};
}

// ---------------------------------------------------------------------------
// RunConfig

inline json to_json(const RunConfig& c)
{
    json j;
    j["schema_version"] = kSchemaVersion;
    j["env"] = {{"name", std::string(to_string(c.env.name))},
                {"horizon", c.env.horizon},
                {"num_centers", c.env.num_centers},
                {"sphere_dim", c.env.sphere_dim},
                {"width_factor", c.env.width_factor}};
    j["acquisition"] = {{"kind", std::string(to_string(c.acquisition.kind))},
                        {"kappa", c.acquisition.kappa},
                        {"lambda", c.acquisition.lambda},
                        {"n_candidates", c.acquisition.n_candidates}};
    if (c.metric) {
        j["metric"] = {{"kind", std::string(to_string(c.metric->kind))},
                       {"epsilon", c.metric->epsilon},
                       {"interval", c.metric->interval},
                       {"window", c.metric->window},
                       {"threshold", c.metric->threshold}};
    } else {
        j["metric"] = nullptr;
    }
    j["preference"] = {{"sigma0_scale", c.preference.sigma0_scale}, {"sigma_pref_scale", c.preference.sigma_pref_scale}};
    j["episodes"] = c.episodes;
    j["init_observations"] = c.init_observations;
    j["seed"] = c.seed;
    j["user_source"] = std::string(to_string(c.user_source));
    j["variant"] = std::string(to_string(c.variant));
    j["simulated_user"] = {{"target", vec_to_json(c.simulated_user.target)},
                           {"step_fraction", c.simulated_user.step_fraction},
                           {"prefer_rule", std::string(to_string(c.simulated_user.prefer_rule))},
                           {"tolerance", c.simulated_user.tolerance},
                           {"max_dims_per_interaction", c.simulated_user.max_dims_per_interaction},
                           {"target_search_evals", c.target_search_evals},
                           {"target_search_seed", c.target_search_seed}};
    j["gp"] = {{"min_length_scale", c.gp.min_length_scale},     {"max_length_scale", c.gp.max_length_scale},
               {"min_signal_variance", c.gp.min_signal_variance}, {"max_signal_variance", c.gp.max_signal_variance},
               {"min_noise_variance", c.gp.min_noise_variance},   {"max_noise_variance", c.gp.max_noise_variance},
               {"starts", c.gp.starts},                           {"max_evals_per_start", c.gp.max_evals_per_start}};
    j["user_timeout_s"] = c.user_timeout_s;
    return j;
}

namespace detail {

inline void reject_unknown_keys(const json& j, const std::string& path, std::initializer_list<const char*> known)
{
    if (!j.is_object()) {
        throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    }
    const std::set<std::string> k(known.begin(), known.end());
    for (const auto& [key, _] : j.items()) {
        if (!k.contains(key)) {
            throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
        }
    }
}

template <class T>
void read_field(const json& j, const char* key, const std::string& path, T& out)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path.empty() ? key : path + "." + key, std::string("wrong type: ") + e.what());
    }
}

template <class Parse>
void read_enum(const json& j, const char* key, const std::string& path, Parse parse)
{
    if (!j.contains(key)) {
        return;
    }
    const std::string field = path.empty() ? key : path + "." + key;
    if (!j.at(key).is_string()) {
        throw ConfigError(field, "expected a string");
    }
    try {
        parse(j.at(key).get<std::string>());
    } catch (const ConfigError&) {
        throw;
    } catch (const ContractViolation& e) {
        throw ConfigError(field, e.what());
    }
}

} // namespace detail

/// Strict parse: every key must be known; absent keys keep their defaults.
/// Validates the result (ConfigError names the offending field).
inline RunConfig run_config_from_json(const json& j)
{
    using detail::read_enum;
    using detail::read_field;
    detail::reject_unknown_keys(j, "", {"schema_version", "env", "acquisition", "metric", "preference", "episodes",
                                        "init_observations", "seed", "user_source", "variant", "simulated_user", "gp",
                                        "user_timeout_s"});
    if (j.contains("schema_version") && j.at("schema_version") != kSchemaVersion) {
        throw ConfigError("schema_version", "unsupported version " + j.at("schema_version").dump());
    }

    RunConfig c;
    if (j.contains("env")) {
        const json& e = j.at("env");
        detail::reject_unknown_keys(e, "env", {"name", "horizon", "num_centers", "sphere_dim", "width_factor"});
        EnvName name = EnvName::Cartpole;
        read_enum(e, "name", "env", [&](const std::string& s) { name = env_name_from_string(s); });
        int sphere_dim = 5;
        read_field(e, "sphere_dim", "env", sphere_dim);
        if (sphere_dim < 1) {
            throw ConfigError("env.sphere_dim", "must be >= 1");
        }
        c.env = name == EnvName::Sphere ? make_sphere_spec(sphere_dim) : make_env_spec(name);
        read_field(e, "horizon", "env", c.env.horizon);
        read_field(e, "num_centers", "env", c.env.num_centers);
        read_field(e, "width_factor", "env", c.env.width_factor);
    }
    if (j.contains("acquisition")) {
        const json& a = j.at("acquisition");
        detail::reject_unknown_keys(a, "acquisition", {"kind", "kappa", "lambda", "n_candidates"});
        read_enum(a, "kind", "acquisition", [&](const std::string& s) { c.acquisition.kind = acquisition_kind_from_string(s); });
        read_field(a, "kappa", "acquisition", c.acquisition.kappa);
        read_field(a, "lambda", "acquisition", c.acquisition.lambda);
        read_field(a, "n_candidates", "acquisition", c.acquisition.n_candidates);
    }
    if (j.contains("metric") && !j.at("metric").is_null()) {
        const json& m = j.at("metric");
        detail::reject_unknown_keys(m, "metric", {"kind", "epsilon", "interval", "window", "threshold"});
        MetricConfig mc;
        read_enum(m, "kind", "metric", [&](const std::string& s) { mc.kind = metric_kind_from_string(s); });
        read_field(m, "epsilon", "metric", mc.epsilon);
        read_field(m, "interval", "metric", mc.interval);
        read_field(m, "window", "metric", mc.window);
        read_field(m, "threshold", "metric", mc.threshold);
        c.metric = mc;
    }
    if (j.contains("preference")) {
        const json& p = j.at("preference");
        detail::reject_unknown_keys(p, "preference", {"sigma0_scale", "sigma_pref_scale"});
        read_field(p, "sigma0_scale", "preference", c.preference.sigma0_scale);
        read_field(p, "sigma_pref_scale", "preference", c.preference.sigma_pref_scale);
    }
    read_field(j, "episodes", "", c.episodes);
    read_field(j, "init_observations", "", c.init_observations);
    read_field(j, "seed", "", c.seed);
    read_enum(j, "user_source", "", [&](const std::string& s) { c.user_source = user_source_from_string(s); });
    read_enum(j, "variant", "", [&](const std::string& s) { c.variant = variant_from_string(s); });
    if (j.contains("simulated_user")) {
        const json& u = j.at("simulated_user");
        detail::reject_unknown_keys(u, "simulated_user", {"target", "step_fraction", "prefer_rule", "tolerance",
                                                          "max_dims_per_interaction", "target_search_evals",
                                                          "target_search_seed"});
        std::vector<double> target;
        read_field(u, "target", "simulated_user", target);
        c.simulated_user.target = to_eigen(target);
        read_field(u, "step_fraction", "simulated_user", c.simulated_user.step_fraction);
        read_enum(u, "prefer_rule", "simulated_user",
                  [&](const std::string& s) { c.simulated_user.prefer_rule = prefer_rule_from_string(s); });
        read_field(u, "tolerance", "simulated_user", c.simulated_user.tolerance);
        read_field(u, "max_dims_per_interaction", "simulated_user", c.simulated_user.max_dims_per_interaction);
        read_field(u, "target_search_evals", "simulated_user", c.target_search_evals);
        read_field(u, "target_search_seed", "simulated_user", c.target_search_seed);
    }
    if (j.contains("gp")) {
        const json& g = j.at("gp");
        detail::reject_unknown_keys(g, "gp", {"min_length_scale", "max_length_scale", "min_signal_variance",
                                              "max_signal_variance", "min_noise_variance", "max_noise_variance",
                                              "starts", "max_evals_per_start"});
        read_field(g, "min_length_scale", "gp", c.gp.min_length_scale);
        read_field(g, "max_length_scale", "gp", c.gp.max_length_scale);
        read_field(g, "min_signal_variance", "gp", c.gp.min_signal_variance);
        read_field(g, "max_signal_variance", "gp", c.gp.max_signal_variance);
        read_field(g, "min_noise_variance", "gp", c.gp.min_noise_variance);
        read_field(g, "max_noise_variance", "gp", c.gp.max_noise_variance);
        read_field(g, "starts", "gp", c.gp.starts);
        read_field(g, "max_evals_per_start", "gp", c.gp.max_evals_per_start);
    }
    read_field(j, "user_timeout_s", "", c.user_timeout_s);
    c.validate();
    return c;
}

/// Applies a dotted-path override such as `acquisition.kappa=0.05`. The value
/// is parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(json& j, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError(assignment, "override must look like key=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) {
            throw ConfigError(path, "empty path component");
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || (*node)[key].is_null()) {
            (*node)[key] = json::object();
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

/// FNV-1a over the canonical JSON of the config with the seed removed, so
/// every seed of one experiment shares a hash.
inline std::string config_hash(const RunConfig& c)
{
    json j = to_json(c);
    j.erase("seed");
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// RunLog

inline json header_json(const RunConfig& c)
{
    return {{"type", "header"}, {"schema_version", kSchemaVersion}, {"config", to_json(c)}};
}

inline json init_json(std::size_t index, const Observation& o)
{
    return {{"type", "init"}, {"index", index}, {"theta", vec_to_json(o.theta)}, {"return", o.value}};
}

inline json episode_json(const EpisodeRecord& r)
{
    json j = {{"type", "episode"},
              {"episode", r.episode},
              {"theta", vec_to_json(r.theta)},
              {"return", r.value},
              {"best_so_far", r.best_so_far},
              {"interacted", r.interacted},
              {"timed_out", r.timed_out},
              {"proposal_mean", vec_to_json(r.proposal.mean)},
              {"proposal_variances", vec_to_json(r.proposal.variances)},
              {"hyperparams", to_json(r.hyperparams)},
              {"acquisition_score", r.acquisition_score},
              {"wall_seconds", r.wall_seconds}};
    if (r.interacted) {
        j["x_best"] = vec_to_json(r.x_best);
        j["input"] = to_json(*r.input);
    }
    return j;
}

inline json footer_json(const RunLog& log)
{
    return {{"type", "footer"}, {"aborted", log.aborted}, {"abort_reason", log.abort_reason}, {"episodes", log.records.size()}};
}

inline std::string runlog_to_jsonl(const RunLog& log)
{
    std::ostringstream os;
    os << header_json(log.config).dump() << '\n';
    for (std::size_t i = 0; i < log.initial.size(); ++i) {
        os << init_json(i, log.initial[i]).dump() << '\n';
    }
    for (const auto& r : log.records) {
        os << episode_json(r).dump() << '\n';
    }
    os << footer_json(log).dump() << '\n';
    return os.str();
}

inline RunLog runlog_from_jsonl(std::istream& in)
{
    RunLog log;
    std::string line;
    bool header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw SchemaError("run log line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string type = j.value("type", "");
        try {
            if (type == "header") {
                const int version = j.at("schema_version").get<int>();
                if (version != kSchemaVersion) {
                    throw SchemaError("run log schema_version " + std::to_string(version) + " is not supported (expected " +
                                      std::to_string(kSchemaVersion) + ")");
                }
                log.config = run_config_from_json(j.at("config"));
                header = true;
            } else if (type == "init") {
                log.initial.push_back({vec_from_json(j.at("theta")), j.at("return").get<double>()});
            } else if (type == "episode") {
                EpisodeRecord r;
                r.episode = j.at("episode").get<int>();
                r.theta = vec_from_json(j.at("theta"));
                r.value = j.at("return").get<double>();
                r.best_so_far = j.at("best_so_far").get<double>();
                r.interacted = j.at("interacted").get<bool>();
                r.timed_out = j.value("timed_out", false);
                r.proposal.mean = vec_from_json(j.at("proposal_mean"));
                r.proposal.variances = vec_from_json(j.at("proposal_variances"));
                r.hyperparams = hyperparams_from_json(j.at("hyperparams"));
                r.acquisition_score = j.value("acquisition_score", 0.0);
                r.wall_seconds = j.value("wall_seconds", 0.0);
                if (r.interacted) {
                    r.x_best = vec_from_json(j.at("x_best"));
                    r.input = preference_input_from_json(j.at("input"));
                }
                log.records.push_back(std::move(r));
            } else if (type == "footer") {
                log.aborted = j.at("aborted").get<bool>();
                log.abort_reason = j.value("abort_reason", "");
            } else {
                throw SchemaError("run log line " + std::to_string(line_no) + ": unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw SchemaError("run log line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!header) {
            throw SchemaError("run log does not start with a header record");
        }
    }
    if (!header) {
        throw SchemaError("run log is empty");
    }
    return log;
}

inline RunLog read_runlog(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open run log " + path.string());
    }
    return runlog_from_jsonl(in);
}

/// Writes via a sibling temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        out << content;
        if (!out) {
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline void write_runlog(const std::filesystem::path& path, const RunLog& log)
{
    write_file_atomic(path, runlog_to_jsonl(log));
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayVerdict {
    bool identical = true;
    std::optional<int> divergent_episode;  // -1 = initial design
    std::string message;
};

/// Re-runs a logged configuration, answering interaction requests with the
/// recorded inputs, and compares every evaluated theta and return bit for bit.
inline ReplayVerdict replay(const RunLog& recorded)
{
    std::map<int, PreferenceInput> inputs;
    for (const auto& r : recorded.records) {
        if (r.interacted) {
            inputs.emplace(r.episode, *r.input);
        }
    }
    ScriptedUserChannel channel(std::move(inputs));
    const bool needs_channel = recorded.config.user_source != UserSource::None;
    const RunLog fresh = run(recorded.config, needs_channel ? &channel : nullptr);

    ReplayVerdict v;
    auto diverge = [&](int episode, const std::string& why) {
        v.identical = false;
        v.divergent_episode = episode;
        v.message = why;
        return v;
    };
    if (fresh.initial.size() != recorded.initial.size()) {
        return diverge(-1, "initial design size differs");
    }
    for (std::size_t i = 0; i < fresh.initial.size(); ++i) {
        if (fresh.initial[i].theta != recorded.initial[i].theta || fresh.initial[i].value != recorded.initial[i].value) {
            return diverge(-1, "initial observation " + std::to_string(i) + " differs");
        }
    }
    const std::size_t n = std::max(fresh.records.size(), recorded.records.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= fresh.records.size() || i >= recorded.records.size()) {
            return diverge(static_cast<int>(i), "episode count differs");
        }
        const auto& a = fresh.records[i];
        const auto& b = recorded.records[i];
        if (a.theta != b.theta) {
            return diverge(b.episode, "theta differs at episode " + std::to_string(b.episode));
        }
        if (a.value != b.value) {
            std::ostringstream os;
            os.precision(17);
            os << "return differs at episode " << b.episode << ": recorded " << b.value << ", replayed " << a.value;
            return diverge(b.episode, os.str());
        }
        if (a.interacted != b.interacted) {
            return diverge(b.episode, "interaction flag differs at episode " + std::to_string(b.episode));
        }
    }
    if (fresh.aborted != recorded.aborted) {
        return diverge(static_cast<int>(n), "abort status differs");
    }
    v.message = "replay identical over " + std::to_string(n) + " episodes";
    return v;
}

} // namespace ibo
