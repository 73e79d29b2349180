// ibo: headless runs, seeded experiments, live service and replay.

#include "ibo/experiment.hpp"
#include "ibo/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

namespace {

using ibo::json;

struct ErrorList {
    json errors = json::array();

    void add(const std::string& kind, const std::string& message, const std::string& field = {})
    {
        json e = {{"kind", kind}, {"message", message}};
        if (!field.empty()) {
            e["field"] = field;
        }
        errors.push_back(e);
    }

    int report(int code) const
    {
        std::cerr << json{{"errors", errors}}.dump() << '\n';
        return code;
    }
};

std::filesystem::path default_output_root()
{
    if (const char* root = std::getenv("IBO_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
        return root;
    }
    return "ibo_runs";
}

ibo::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path);
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ibo::ConfigError("<file>", std::string("not valid JSON: ") + e.what());
    }
    for (const auto& o : overrides) {
        ibo::apply_override(j, o);
    }
    return ibo::run_config_from_json(j);
}

int handle(const std::function<int(ErrorList&)>& body)
{
    ErrorList errs;
    try {
        return body(errs);
    } catch (const ibo::ConfigError& e) {
        errs.add("config", e.what(), e.field());
    } catch (const ibo::SchemaError& e) {
        errs.add("schema", e.what());
    } catch (const std::exception& e) {
        errs.add("error", e.what());
    }
    return errs.report(2);
}

int cmd_run(const std::string& config, const std::vector<std::string>& overrides, const std::string& out)
{
    return handle([&](ErrorList& errs) {
        const ibo::RunConfig cfg = load_config(config, overrides);
        const std::filesystem::path root = out.empty() ? default_output_root() : std::filesystem::path(out);
        const ibo::RunLog log = ibo::run(cfg);
        const auto path = root / ibo::run_directory_name(log.config) / "runlog.jsonl";
        ibo::write_runlog(path, log);
        std::cout << json{{"runlog", path.string()},
                          {"episodes", log.records.size()},
                          {"best_so_far", log.records.empty() ? 0.0 : log.records.back().best_so_far},
                          {"aborted", log.aborted}}
                         .dump()
                  << '\n';
        if (log.aborted) {
            errs.add("aborted", log.abort_reason);
            return errs.report(1);
        }
        return 0;
    });
}

int cmd_experiment(const std::string& config, const std::vector<std::string>& overrides, int runs, int jobs,
                   const std::string& out)
{
    return handle([&](ErrorList& errs) {
        const ibo::RunConfig cfg = load_config(config, overrides);
        const std::filesystem::path root = out.empty() ? default_output_root() : std::filesystem::path(out);
        const ibo::ExperimentResult r = ibo::run_experiment(cfg, runs, jobs);
        const auto dir = root / ibo::run_directory_name(r.logs.front().config);
        ibo::write_experiment(dir, r);
        std::cout << json{{"directory", dir.string()},
                          {"runs_completed", r.summary.completed()},
                          {"final_mean", ibo::sample_mean(r.summary.final_returns)}}
                         .dump()
                  << '\n';
        for (std::size_t i = 0; i < r.summary.aborted_seeds.size(); ++i) {
            errs.add("aborted", "seed " + std::to_string(r.summary.aborted_seeds[i]) + ": " + r.summary.abort_reasons[i]);
        }
        return errs.errors.empty() ? 0 : errs.report(1);
    });
}

ibo::Service* g_service = nullptr;

int cmd_serve(const std::string& host, int port, std::size_t max_sessions)
{
    return handle([&](ErrorList& errs) {
        ibo::Service service(max_sessions);
        g_service = &service;
        std::signal(SIGINT, [](int) {
            if (g_service != nullptr) {
                g_service->server().stop();
            }
        });
        const bool ok = service.listen(host, port, [&](int bound) {
            std::cout << json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
        });
        g_service = nullptr;
        if (!ok) {
            errs.add("serve", "cannot listen on " + host + ":" + std::to_string(port));
            return errs.report(1);
        }
        return 0;
    });
}

int cmd_replay(const std::string& path)
{
    return handle([&](ErrorList& errs) {
        const ibo::RunLog log = ibo::read_runlog(path);
        const ibo::ReplayVerdict v = ibo::replay(log);
        if (!v.identical) {
            errs.add("divergence", v.message, v.divergent_episode ? "episode " + std::to_string(*v.divergent_episode) : "");
            return errs.report(1);
        }
        std::cout << json{{"identical", true}, {"message", v.message}}.dump() << '\n';
        return 0;
    });
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Interactive Bayesian optimization for policy search"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;
    std::string out;

    auto* run = app.add_subcommand("run", "single run from a config file");
    run->add_option("-c,--config", config, "run config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--set", overrides, "dotted-path override key=value (repeatable)");
    run->add_option("-o,--output", out, "output root (default $IBO_OUTPUT_ROOT or ./ibo_runs)");

    int runs = 25;
    int jobs = 1;
    auto* experiment = app.add_subcommand("experiment", "seeded batch with mean and 95% CI curves");
    experiment->add_option("-c,--config", config, "run config (JSON)")->required()->check(CLI::ExistingFile);
    experiment->add_option("--set", overrides, "dotted-path override key=value (repeatable)");
    experiment->add_option("--runs", runs, "number of seeds")->check(CLI::Range(2, 100000));
    experiment->add_option("--jobs", jobs, "parallel runs")->check(CLI::Range(1, 1024));
    experiment->add_option("-o,--output", out, "output root (default $IBO_OUTPUT_ROOT or ./ibo_runs)");

    int port = 8080;
    std::string host = "127.0.0.1";
    std::size_t max_sessions = 16;
    auto* serve = app.add_subcommand("serve", "live session service");
    serve->add_option("--port", port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "bind address");
    serve->add_option("--max-sessions", max_sessions, "concurrent session limit");

    std::string runlog;
    auto* replay = app.add_subcommand("replay", "re-execute a run log and compare returns bit for bit");
    replay->add_option("runlog", runlog, "run log (.jsonl)")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (*run) {
        return cmd_run(config, overrides, out);
    }
    if (*experiment) {
        return cmd_experiment(config, overrides, runs, jobs, out);
    }
    if (*serve) {
        return cmd_serve(host, port, max_sessions);
    }
    return cmd_replay(runlog);
}
