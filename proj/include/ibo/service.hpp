#pragma once

// Live sessions: a registry of optimizer runs, each on its own thread, that
// hand InteractionRequests to a remote UI through a one-slot rendezvous. The
// HTTP surface is a thin JSON layer over SessionRegistry.

#include "ibo/io.hpp"

#include <httplib.h>

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>

namespace ibo {

enum class SessionState { Initializing, Optimizing, AwaitingUser, Finished, Aborted };

inline std::string_view to_string(SessionState s)
{
    switch (s) {
    case SessionState::Initializing: return "Initializing";
    case SessionState::Optimizing: return "Optimizing";
    case SessionState::AwaitingUser: return "AwaitingUser";
    case SessionState::Finished: return "Finished";
    case SessionState::Aborted: return "Aborted";
    }
    return "?";
}

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Submission outside AwaitingUser, or a second submission for one request.
class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string field, const std::string& msg) : std::runtime_error(msg), field_(std::move(field)) {}
    [[nodiscard]] const std::string& field() const { return field_; }

private:
    std::string field_;
};

class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SubmitAck {
    int episode = 0;
    Vector x_user;            // the vector that will be evaluated, after clipping
    std::vector<bool> clipped;
    PreferenceInput used;     // what the optimizer receives
};

struct SessionEvent {
    std::uint64_t seq = 0;
    std::string type;  // episode-completed | awaiting-user | finished
    json data;
};

/// State shared between the optimizer thread and request handlers. Every
/// member is guarded by `mutex`.
struct SessionShared {
    mutable std::mutex mutex;
    std::condition_variable changed;
    SessionState state = SessionState::Initializing;
    std::optional<InteractionRequest> pending;
    std::optional<PreferenceInput> answer;
    bool cancelled = false;
    std::vector<EpisodeRecord> records;
    std::vector<Observation> initial;
    Vector x_best;
    double best_return = -std::numeric_limits<double>::infinity();
    std::vector<TraceStep> best_trace;
    ProposalDistribution proposal;
    std::string abort_reason;
    std::optional<RunLog> final_log;
    std::deque<SessionEvent> events;
    std::uint64_t next_seq = 1;

    void push_event(std::string type, json data)
    {
        events.push_back({next_seq++, std::move(type), std::move(data)});
        while (events.size() > 1024) {
            events.pop_front();
        }
        changed.notify_all();
    }
};

/// UserChannel backed by the one-slot rendezvous. request() parks the
/// optimizer until submit() fills the slot, the timeout elapses, or the
/// session is cancelled.
class LiveUserChannel final : public UserChannel {
public:
    LiveUserChannel(std::shared_ptr<SessionShared> shared, double timeout_s)
        : shared_(std::move(shared)), timeout_(timeout_s)
    {
    }

    std::optional<PreferenceInput> request(const InteractionRequest& req) override
    {
        std::unique_lock lock(shared_->mutex);
        if (shared_->cancelled) {
            return std::nullopt;
        }
        shared_->pending = req;
        shared_->answer.reset();
        shared_->state = SessionState::AwaitingUser;
        shared_->push_event("awaiting-user", {{"episode", req.episode}});
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout_);
        shared_->changed.wait_until(lock, deadline, [&] { return shared_->answer.has_value() || shared_->cancelled; });
        std::optional<PreferenceInput> out = std::move(shared_->answer);
        shared_->answer.reset();
        shared_->pending.reset();
        shared_->state = SessionState::Optimizing;
        shared_->changed.notify_all();
        return out;
    }

private:
    std::shared_ptr<SessionShared> shared_;
    std::chrono::duration<double> timeout_;
};

struct SessionCancelled : std::runtime_error {
    SessionCancelled() : std::runtime_error("session cancelled") {}
};

class Session {
public:
    Session(std::string id, RunConfig cfg) : id_(std::move(id)), config_(std::move(cfg)), shared_(std::make_shared<SessionShared>())
    {
        shared_->proposal = init_proposal(param_bounds(config_.env), config_.preference.sigma0_scale);
    }

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    ~Session()
    {
        cancel();
        if (thread_.joinable()) {
            thread_.join();
        }
    }

    void start()
    {
        thread_ = std::thread([this] { body(); });
    }

    void cancel()
    {
        std::lock_guard lock(shared_->mutex);
        shared_->cancelled = true;
        shared_->changed.notify_all();
    }

    [[nodiscard]] const std::string& id() const { return id_; }
    [[nodiscard]] const RunConfig& config() const { return config_; }

    [[nodiscard]] SessionState state() const
    {
        std::lock_guard lock(shared_->mutex);
        return shared_->state;
    }

    [[nodiscard]] bool active() const
    {
        const SessionState s = state();
        return s != SessionState::Finished && s != SessionState::Aborted;
    }

    /// Blocks until the state satisfies `pred` or the timeout passes.
    template <class Pred>
    bool wait_for(Pred pred, std::chrono::duration<double> timeout) const
    {
        std::unique_lock lock(shared_->mutex);
        return shared_->changed.wait_for(lock, timeout, [&] { return pred(shared_->state); });
    }

    bool wait_for_state(SessionState s, std::chrono::duration<double> timeout) const
    {
        return wait_for([s](SessionState cur) { return cur == s; }, timeout);
    }

    SubmitAck submit(const PreferenceInput& input)
    {
        std::lock_guard lock(shared_->mutex);
        if (shared_->state != SessionState::AwaitingUser || !shared_->pending) {
            throw ConflictError("session " + id_ + " is " + std::string(to_string(shared_->state)) +
                                ", not AwaitingUser");
        }
        if (shared_->answer) {
            throw ConflictError("session " + id_ + ": an interaction was already submitted for episode " +
                                std::to_string(shared_->pending->episode));
        }
        const InteractionRequest& req = *shared_->pending;
        const auto d = req.bounds.dim();
        if (input.dim() != d) {
            throw ValidationError("delta", "delta has " + std::to_string(input.dim()) + " entries, expected " +
                                               std::to_string(d));
        }
        if (input.preferred.size() != d) {
            throw ValidationError("preferred", "preferred has " + std::to_string(input.preferred.size()) +
                                                   " entries, expected " + std::to_string(d));
        }
        if (!input.delta.allFinite()) {
            throw ValidationError("delta", "delta must be finite");
        }
        SubmitAck ack;
        ack.episode = req.episode;
        const Vector raw = req.x_best + input.delta;
        ack.x_user = req.bounds.clip(raw);
        ack.clipped.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            ack.clipped[i] = ack.x_user[k] != raw[k];
        }
        // the optimizer recomputes clip(x_best + delta), so the submitted delta
        // reproduces x_user bit for bit; x_user - x_best might not
        ack.used = input;
        shared_->answer = ack.used;
        shared_->changed.notify_all();
        return ack;
    }

    /// Consistent copy of everything the UI needs.
    [[nodiscard]] json snapshot() const
    {
        std::lock_guard lock(shared_->mutex);
        const SessionShared& s = *shared_;
        std::vector<double> curve;
        std::vector<double> returns;
        std::vector<bool> interacted;
        for (const auto& r : s.records) {
            curve.push_back(r.best_so_far);
            returns.push_back(r.value);
            interacted.push_back(r.interacted);
        }
        json j = {{"schema_version", kSchemaVersion},
                  {"id", id_},
                  {"state", to_string(s.state)},
                  {"env", to_string(config_.env.name)},
                  {"episode", s.records.size()},
                  {"episodes", config_.episodes},
                  {"best_so_far", curve},
                  {"returns", returns},
                  {"interacted", interacted},
                  {"proposal", to_json(s.proposal)},
                  {"bounds", bounds_json(param_bounds(config_.env))}};
        if (s.x_best.size() > 0) {
            j["x_best"] = vec_to_json(s.x_best);
            j["best_return"] = s.best_return;
            j["best_trace"] = trace_json(s.best_trace);
        } else {
            j["x_best"] = nullptr;
            j["best_return"] = nullptr;
            j["best_trace"] = json::array();
        }
        if (s.pending) {
            j["request"] = request_json(*s.pending);
        } else {
            j["request"] = nullptr;
        }
        if (s.state == SessionState::Aborted) {
            j["abort_reason"] = s.abort_reason;
        }
        return j;
    }

    /// Current run log: the final one once finished, otherwise the records so far.
    [[nodiscard]] RunLog run_log() const
    {
        std::lock_guard lock(shared_->mutex);
        if (shared_->final_log) {
            return *shared_->final_log;
        }
        RunLog log;
        log.config = config_;
        log.initial = shared_->initial;
        log.records = shared_->records;
        return log;
    }

    /// Events with seq > after, waiting up to `timeout` if there are none yet.
    std::vector<SessionEvent> events_after(std::uint64_t after, std::chrono::duration<double> timeout) const
    {
        std::unique_lock lock(shared_->mutex);
        auto ready = [&] { return !shared_->events.empty() && shared_->events.back().seq > after; };
        shared_->changed.wait_for(lock, timeout, ready);
        std::vector<SessionEvent> out;
        for (const auto& e : shared_->events) {
            if (e.seq > after) {
                out.push_back(e);
            }
        }
        return out;
    }

    static json bounds_json(const Bounds& b) { return {{"lower", vec_to_json(b.lower)}, {"upper", vec_to_json(b.upper)}}; }

    static json trace_json(const std::vector<TraceStep>& trace)
    {
        json a = json::array();
        for (const auto& t : trace) {
            a.push_back({{"state", t.state}, {"action", t.action}, {"reward", t.reward}});
        }
        return a;
    }

    static json request_json(const InteractionRequest& r)
    {
        return {{"episode", r.episode},
                {"x_best", vec_to_json(r.x_best)},
                {"best_return", r.best_return},
                {"bounds", bounds_json(r.bounds)},
                {"rollout_trace", trace_json(r.rollout_trace)},
                {"proposal", to_json(r.proposal)}};
    }

private:
    void body()
    {
        {
            std::lock_guard lock(shared_->mutex);
            if (shared_->cancelled) {
                shared_->state = SessionState::Aborted;
                shared_->abort_reason = "cancelled";
                shared_->changed.notify_all();
                return;
            }
            shared_->state = SessionState::Optimizing;
            shared_->changed.notify_all();
        }
        EnvSpec env = config_.env;
        env.seed = config_.seed;
        LiveUserChannel channel(shared_, config_.user_timeout_s);
        RunObserver obs;
        obs.on_initial = [&](const std::vector<Observation>& initial) {
            std::size_t ib = 0;
            for (std::size_t i = 1; i < initial.size(); ++i) {
                if (initial[i].value > initial[ib].value) {
                    ib = i;
                }
            }
            auto trace = evaluate_episode(env, initial[ib].theta).trace;
            std::lock_guard lock(shared_->mutex);
            shared_->initial = initial;
            shared_->x_best = initial[ib].theta;
            shared_->best_return = initial[ib].value;
            shared_->best_trace = std::move(trace);
        };
        obs.on_episode = [&](const EpisodeRecord& r) {
            std::optional<std::vector<TraceStep>> trace;
            bool improved = false;
            {
                std::lock_guard lock(shared_->mutex);
                improved = r.value > shared_->best_return;
            }
            if (improved) {
                trace = evaluate_episode(env, r.theta).trace;
            }
            std::lock_guard lock(shared_->mutex);
            if (shared_->cancelled) {
                throw SessionCancelled();
            }
            shared_->records.push_back(r);
            shared_->proposal = r.proposal;
            if (trace) {
                shared_->x_best = r.theta;
                shared_->best_return = r.value;
                shared_->best_trace = std::move(*trace);
            }
            shared_->push_event("episode-completed", {{"episode", r.episode},
                                                      {"return", r.value},
                                                      {"best_so_far", r.best_so_far},
                                                      {"interacted", r.interacted},
                                                      {"timed_out", r.timed_out}});
        };
        try {
            RunLog log = run(config_, &channel, obs);
            std::lock_guard lock(shared_->mutex);
            shared_->initial = log.initial;
            shared_->state = log.aborted ? SessionState::Aborted : SessionState::Finished;
            shared_->abort_reason = log.abort_reason;
            shared_->final_log = std::move(log);
            shared_->push_event("finished", {{"state", to_string(shared_->state)}, {"episodes", shared_->records.size()}});
        } catch (const std::exception& e) {
            std::lock_guard lock(shared_->mutex);
            shared_->state = SessionState::Aborted;
            shared_->abort_reason = e.what();
            shared_->push_event("finished", {{"state", "Aborted"}, {"reason", e.what()}});
        }
    }

    std::string id_;
    RunConfig config_;
    std::shared_ptr<SessionShared> shared_;
    std::thread thread_;
};

class SessionRegistry {
public:
    explicit SessionRegistry(std::size_t max_active = 16) : max_active_(max_active) {}

    SessionRegistry(const SessionRegistry&) = delete;
    SessionRegistry& operator=(const SessionRegistry&) = delete;

    ~SessionRegistry() { shutdown(); }

    /// Validates, registers and starts a live session; returns its id.
    std::string create(const RunConfig& cfg)
    {
        cfg.validate();
        if (cfg.user_source != UserSource::Live) {
            throw ConfigError("user_source", "live sessions need user_source Live");
        }
        std::lock_guard lock(mutex_);
        std::size_t active = 0;
        for (const auto& [id, s] : sessions_) {
            active += s->active() ? 1 : 0;
        }
        if (active >= max_active_) {
            throw CapacityError("session limit reached (" + std::to_string(max_active_) + " active)");
        }
        std::ostringstream os;
        os << "s" << std::setw(6) << std::setfill('0') << ++counter_ << '-' << std::hex << (id_rng_() & 0xffffffULL);
        auto session = std::make_shared<Session>(os.str(), cfg);
        sessions_.emplace(session->id(), session);
        order_.push_back(session->id());
        session->start();
        return session->id();
    }

    std::shared_ptr<Session> get(const std::string& id) const
    {
        std::lock_guard lock(mutex_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            throw NotFoundError("no session '" + id + "'");
        }
        return it->second;
    }

    /// Sessions in creation order.
    std::vector<std::shared_ptr<Session>> list() const
    {
        std::lock_guard lock(mutex_);
        std::vector<std::shared_ptr<Session>> out;
        for (const auto& id : order_) {
            out.push_back(sessions_.at(id));
        }
        return out;
    }

    void shutdown()
    {
        std::map<std::string, std::shared_ptr<Session>> drained;
        {
            std::lock_guard lock(mutex_);
            drained.swap(sessions_);
            order_.clear();
        }
        for (auto& [id, s] : drained) {
            s->cancel();
        }
        drained.clear();  // joins threads
    }

    [[nodiscard]] std::size_t max_active() const { return max_active_; }

private:
    std::size_t max_active_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::vector<std::string> order_;
    std::uint64_t counter_ = 0;
    std::mt19937_64 id_rng_{std::random_device{}()};
};

// ---------------------------------------------------------------------------
// HTTP

inline json error_body(const std::string& kind, const std::string& message, const std::string& field = {})
{
    json e = {{"kind", kind}, {"message", message}};
    if (!field.empty()) {
        e["field"] = field;
    }
    return {{"errors", json::array({e})}};
}

/// Registers the protocol routes on `server`. See docs/protocol.md.
inline void install_routes(httplib::Server& server, SessionRegistry& registry)
{
    auto reply = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    auto guarded = [reply](auto handler) {
        return [reply, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const NotFoundError& e) {
                reply(res, 404, error_body("not_found", e.what()));
            } catch (const ConflictError& e) {
                reply(res, 409, error_body("conflict", e.what()));
            } catch (const ValidationError& e) {
                reply(res, 400, error_body("validation", e.what(), e.field()));
            } catch (const ConfigError& e) {
                reply(res, 400, error_body("config", e.what(), e.field()));
            } catch (const CapacityError& e) {
                reply(res, 503, error_body("capacity", e.what()));
            } catch (const json::exception& e) {
                reply(res, 400, error_body("malformed", e.what()));
            } catch (const std::exception& e) {
                reply(res, 500, error_body("internal", e.what()));
            }
        };
    };

    server.Get("/api/health", [reply](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, {{"status", "ok"}, {"schema_version", kSchemaVersion}});
    });

    server.Post("/api/sessions", guarded([&registry, reply](const httplib::Request& req, httplib::Response& res) {
                    const RunConfig cfg = run_config_from_json(json::parse(req.body));
                    const std::string id = registry.create(cfg);
                    reply(res, 201, {{"id", id}});
                }));

    server.Get("/api/sessions", guarded([&registry, reply](const httplib::Request&, httplib::Response& res) {
                   json a = json::array();
                   for (const auto& s : registry.list()) {
                       a.push_back({{"id", s->id()},
                                    {"state", to_string(s->state())},
                                    {"env", to_string(s->config().env.name)}});
                   }
                   reply(res, 200, {{"sessions", a}});
               }));

    server.Get(R"(/api/sessions/([^/]+))", guarded([&registry, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, registry.get(req.matches[1])->snapshot());
               }));

    server.Post(R"(/api/sessions/([^/]+)/interaction)",
                guarded([&registry, reply](const httplib::Request& req, httplib::Response& res) {
                    const auto session = registry.get(req.matches[1]);
                    const json body = json::parse(req.body);
                    if (!body.contains("delta") || !body.contains("preferred")) {
                        throw ValidationError(body.contains("delta") ? "preferred" : "delta", "missing field");
                    }
                    const SubmitAck ack = session->submit(preference_input_from_json(body));
                    reply(res, 200, {{"accepted", true},
                                     {"episode", ack.episode},
                                     {"x_user", vec_to_json(ack.x_user)},
                                     {"clipped", ack.clipped},
                                     {"input", to_json(ack.used)}});
                }));

    server.Get(R"(/api/sessions/([^/]+)/log)", guarded([&registry](const httplib::Request& req, httplib::Response& res) {
                   const auto session = registry.get(req.matches[1]);
                   res.set_content(runlog_to_jsonl(session->run_log()), "application/x-ndjson");
               }));

    server.Get(R"(/api/sessions/([^/]+)/events)",
               guarded([&registry](const httplib::Request& req, httplib::Response& res) {
                   const auto session = registry.get(req.matches[1]);
                   std::uint64_t after = 0;
                   if (req.has_header("Last-Event-ID")) {
                       after = std::stoull(req.get_header_value("Last-Event-ID"));
                   }
                   auto cursor = std::make_shared<std::uint64_t>(after);
                   res.set_chunked_content_provider(
                       "text/event-stream", [session, cursor](std::size_t, httplib::DataSink& sink) {
                           const auto events = session->events_after(*cursor, std::chrono::milliseconds(500));
                           for (const auto& e : events) {
                               const std::string chunk = "id: " + std::to_string(e.seq) + "\nevent: " + e.type +
                                                         "\ndata: " + e.data.dump() + "\n\n";
                               if (!sink.write(chunk.data(), chunk.size())) {
                                   return false;
                               }
                               *cursor = e.seq;
                               if (e.type == "finished") {
                                   sink.done();
                                   return true;
                               }
                           }
                           if (events.empty() && !session->active()) {
                               sink.done();
                           }
                           return sink.is_writable();
                       });
               }));
}

/// Blocking server on `port` (0 = pick a free port, reported via `on_bound`).
class Service {
public:
    explicit Service(std::size_t max_sessions = 16) : registry_(max_sessions) { install_routes(server_, registry_); }

    ~Service() { stop(); }

    /// Binds and serves until stop(); returns false if the port cannot be bound.
    bool listen(const std::string& host, int port, const std::function<void(int)>& on_bound = {})
    {
        int bound = port;
        if (port == 0) {
            bound = server_.bind_to_any_port(host);
        } else if (!server_.bind_to_port(host, port)) {
            return false;
        }
        if (bound < 0) {
            return false;
        }
        if (on_bound) {
            on_bound(bound);
        }
        return server_.listen_after_bind();
    }

    void stop()
    {
        registry_.shutdown();
        server_.stop();
    }

    SessionRegistry& registry() { return registry_; }
    httplib::Server& server() { return server_; }

private:
    SessionRegistry registry_;
    httplib::Server server_;
};

} // namespace ibo
