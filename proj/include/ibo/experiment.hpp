#pragma once

// Batches of seeded runs: mean best-so-far curve with a normal-approximation
// 95% confidence band, final-return distribution and on-disk artifacts.

#include "ibo/io.hpp"

#include <atomic>
#include <mutex>
#include <thread>

namespace ibo {

struct ExperimentSummary {
    std::string config_hash;
    std::vector<std::uint64_t> seeds;          // completed runs, in seed order
    std::vector<std::uint64_t> aborted_seeds;
    std::vector<std::string> abort_reasons;
    std::vector<double> mean;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    std::vector<double> final_returns;         // aligned with `seeds`

    [[nodiscard]] std::size_t completed() const { return seeds.size(); }
};

struct ExperimentResult {
    ExperimentSummary summary;
    std::vector<RunLog> logs;  // one per seed, including aborted runs
};

inline double sample_mean(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Unbiased (n - 1) sample variance.
inline double sample_variance(const std::vector<double>& v)
{
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = sample_mean(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return s / static_cast<double>(v.size() - 1);
}

/// Per-episode mean and mean +/- 1.96 sd / sqrt(n) over equally long curves.
inline ExperimentSummary summarize(const std::vector<RunLog>& logs)
{
    ExperimentSummary s;
    std::vector<const RunLog*> ok;
    for (const auto& log : logs) {
        if (log.aborted) {
            s.aborted_seeds.push_back(log.config.seed);
            s.abort_reasons.push_back(log.abort_reason);
        } else {
            ok.push_back(&log);
            s.seeds.push_back(log.config.seed);
            s.final_returns.push_back(log.records.empty() ? 0.0 : log.records.back().best_so_far);
        }
    }
    if (!logs.empty()) {
        s.config_hash = config_hash(logs.front().config);
    }
    if (ok.empty()) {
        return s;
    }
    const std::size_t episodes = ok.front()->records.size();
    const auto n = static_cast<double>(ok.size());
    for (std::size_t e = 0; e < episodes; ++e) {
        std::vector<double> column;
        column.reserve(ok.size());
        for (const RunLog* log : ok) {
            column.push_back(log->records.at(e).best_so_far);
        }
        const double m = sample_mean(column);
        const double half = 1.96 * std::sqrt(sample_variance(column)) / std::sqrt(n);
        s.mean.push_back(m);
        s.ci_low.push_back(m - half);
        s.ci_high.push_back(m + half);
    }
    return s;
}

/// Runs seeds cfg.seed .. cfg.seed + n_runs - 1 on up to `jobs` threads.
/// Results are independent of `jobs`.
inline ExperimentResult run_experiment(const RunConfig& cfg, int n_runs, int jobs = 1)
{
    require(n_runs >= 2, "run_experiment: n_runs must be >= 2");
    require(jobs >= 1, "run_experiment: jobs must be >= 1");
    cfg.validate();
    // Resolve the simulated-user target once; every seed shares it.
    const RunConfig base = resolve_config(cfg);

    ExperimentResult out;
    out.logs.resize(static_cast<std::size_t>(n_runs));
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (int i = next++; i < n_runs; i = next++) {
            try {
                RunConfig c = base;
                c.seed = base.seed + static_cast<std::uint64_t>(i);
                out.logs[static_cast<std::size_t>(i)] = run(c);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    const int threads = std::min(jobs, n_runs);
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
    out.summary = summarize(out.logs);
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts

/// `<hash>_s<seed>`: the directory naming shared by `run` and `experiment`.
inline std::string run_directory_name(const RunConfig& c)
{
    return config_hash(c) + "_s" + std::to_string(c.seed);
}

inline json to_json(const ExperimentSummary& s)
{
    json aborted = json::array();
    for (std::size_t i = 0; i < s.aborted_seeds.size(); ++i) {
        aborted.push_back({{"seed", s.aborted_seeds[i]}, {"reason", s.abort_reasons[i]}});
    }
    return {{"schema_version", kSchemaVersion},
            {"config_hash", s.config_hash},
            {"runs_completed", s.completed()},
            {"seeds", s.seeds},
            {"aborted", aborted},
            {"mean", s.mean},
            {"ci_low", s.ci_low},
            {"ci_high", s.ci_high},
            {"final_returns", s.final_returns},
            {"final_mean", sample_mean(s.final_returns)},
            {"final_variance", sample_variance(s.final_returns)}};
}

/// Plot-ready table: episode,mean,ci_low,ci_high.
inline std::string curve_csv(const ExperimentSummary& s)
{
    std::ostringstream os;
    os.precision(17);
    os << "episode,mean,ci_low,ci_high\n";
    for (std::size_t e = 0; e < s.mean.size(); ++e) {
        os << e << ',' << s.mean[e] << ',' << s.ci_low[e] << ',' << s.ci_high[e] << '\n';
    }
    return os.str();
}

/// Layout under `dir`: runs/seed_<k>.jsonl, summary.json, curve.csv.
inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& r)
{
    for (const auto& log : r.logs) {
        write_runlog(dir / "runs" / ("seed_" + std::to_string(log.config.seed) + ".jsonl"), log);
    }
    json summary = to_json(r.summary);
    if (!r.logs.empty()) {
        summary["config"] = to_json(r.logs.front().config);
    }
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    write_file_atomic(dir / "curve.csv", curve_csv(r.summary));
}

} // namespace ibo
