#include "uavvln/interface.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "httplib.h"

#include "uavvln/eval.hpp"
#include "uavvln/format.hpp"
#include "uavvln/rng.hpp"

namespace uavvln::interface {

namespace {

constexpr std::size_t kFrameHistory = 1024;
constexpr std::chrono::milliseconds kHeartbeat{200};

} // namespace

std::optional<language::ObjectRef> final_target(const language::SubGoalPlan& plan) {
    for (auto it = plan.subgoals.rbegin(); it != plan.subgoals.rend(); ++it)
        if (it->target) return it->target;
    return std::nullopt;
}

executive::EpisodeSpec make_episode_spec(world::Scene scene, const std::string& instruction,
                                         const executive::PipelineConfig& config, const SpecOptions& options) {
    executive::EpisodeSpec spec;
    spec.scene = std::move(scene);
    spec.instruction = {instruction};
    spec.seed = options.seed;
    spec.success_radius = options.success_radius;
    spec.max_steps = options.max_steps;
    // The goal is what the operator asked for, so it is read from the clean plan.
    auto clean = config;
    clean.parser.corruption_rate = 0.0;
    try {
        spec.goal = final_target(executive::decompose(spec, clean));
    } catch (const Error&) {
        return spec;
    }
    if (spec.goal) {
        try {
            spec.optimal_length = eval::optimal_length(spec.scene, *spec.goal, spec.success_radius, config.planner);
        } catch (const Error&) {
            spec.optimal_length = 0.0;
        }
    }
    return spec;
}

std::string_view to_string(Status s) {
    switch (s) {
    case Status::idle: return "idle";
    case Status::awaiting_instruction: return "awaiting_instruction";
    case Status::running: return "running";
    case Status::paused: return "paused";
    case Status::finished: return "finished";
    }
    return "unknown";
}

Status status_from_string(std::string_view s) {
    for (auto st : {Status::idle, Status::awaiting_instruction, Status::running, Status::paused, Status::finished})
        if (to_string(st) == s) return st;
    throw SchemaViolation("unknown status '" + std::string(s) + "'");
}

std::string_view to_string(Command c) {
    switch (c) {
    case Command::pause: return "pause";
    case Command::resume: return "resume";
    case Command::step: return "step";
    case Command::abort: return "abort";
    case Command::reset: return "reset";
    }
    return "unknown";
}

std::optional<Command> command_from_string(std::string_view s) {
    for (auto c : {Command::pause, Command::resume, Command::step, Command::abort, Command::reset})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

nlohmann::json to_json(const SessionState& s) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : s.detections) dets.push_back(perception::to_json(d));
    return {{"schema", "state/1"},
            {"session_id", s.session_id},
            {"scene_digest", s.scene_digest},
            {"status", to_string(s.status)},
            {"outcome", s.status == Status::finished ? nlohmann::json(s.outcome) : nlohmann::json()},
            {"pose", world::to_json(s.pose)},
            {"active_subgoal", s.active_subgoal},
            {"plan", s.plan},
            {"completed_subgoals", s.completed_subgoals},
            {"total_subgoals", s.plan.size()},
            {"detections", dets},
            {"steps", s.steps},
            {"tick", s.tick}};
}

std::vector<std::string> state_violations(const nlohmann::json& doc) {
    std::vector<std::string> v;
    if (!doc.is_object()) return {"frame is not an object"};
    auto need = [&](const char* key, auto pred, const char* what) {
        if (!doc.contains(key) || !pred(doc.at(key))) {
            v.push_back(std::string(key) + " must be " + what);
            return false;
        }
        return true;
    };
    const auto is_string = [](const nlohmann::json& j) { return j.is_string(); };
    const auto is_count = [](const nlohmann::json& j) { return j.is_number_unsigned(); };
    if (!doc.contains("schema") || doc.at("schema") != "state/1") v.push_back("schema must be \"state/1\"");
    need("session_id", [](const auto& j) { return j.is_string() && !j.template get<std::string>().empty(); },
         "a non-empty string");
    need("scene_digest", is_string, "a string");
    std::optional<Status> status;
    if (need("status", is_string, "a string")) {
        try {
            status = status_from_string(doc.at("status").get<std::string>());
        } catch (const SchemaViolation& e) {
            v.push_back(e.what());
        }
    }
    if (status) {
        const bool finished = *status == Status::finished;
        if (finished) need("outcome", is_string, "a string when finished");
        else need("outcome", [](const auto& j) { return j.is_null(); }, "null unless finished");
    }
    if (need("pose", [](const auto& j) { return j.is_object(); }, "an object")) {
        try {
            world::pose_from_json(doc.at("pose"));
        } catch (const Error& e) {
            v.push_back(std::string("pose: ") + e.what());
        }
    }
    const bool plan_ok = need(
        "plan",
        [](const auto& j) {
            return j.is_array() && std::all_of(j.begin(), j.end(), [](const auto& e) { return e.is_string(); });
        },
        "an array of strings");
    const bool total_ok = need("total_subgoals", is_count, "a non-negative integer");
    const bool done_ok = need("completed_subgoals", is_count, "a non-negative integer");
    const bool active_ok = need("active_subgoal", [](const auto& j) { return j.is_number_integer(); }, "an integer");
    if (plan_ok && total_ok && doc.at("total_subgoals").get<std::size_t>() != doc.at("plan").size())
        v.push_back("total_subgoals must equal the plan length");
    if (total_ok && done_ok && doc.at("completed_subgoals").get<std::size_t>() > doc.at("total_subgoals").get<std::size_t>())
        v.push_back("completed_subgoals exceeds total_subgoals");
    if (total_ok && active_ok) {
        const auto a = doc.at("active_subgoal").get<long long>();
        const auto total = static_cast<long long>(doc.at("total_subgoals").get<std::size_t>());
        if (a < -1 || (a >= 0 && a >= total)) v.push_back("active_subgoal out of range");
    }
    if (need("detections", [](const auto& j) { return j.is_array(); }, "an array")) {
        for (const auto& d : doc.at("detections")) {
            const bool ok = d.is_object() && d.contains("label") && d.at("label").is_string() &&
                            d.contains("object_id") && d.at("object_id").is_string() && d.contains("confidence") &&
                            d.at("confidence").is_number() && d.at("confidence").template get<double>() >= 0.0 &&
                            d.at("confidence").template get<double>() <= 1.0 && d.contains("bearing") &&
                            d.at("bearing").is_number() && d.contains("elevation") && d.at("elevation").is_number() &&
                            d.contains("range") && d.at("range").is_number();
            if (!ok) {
                v.push_back("malformed detection");
                break;
            }
        }
    }
    need("steps", is_count, "a non-negative integer");
    need("tick", is_count, "a non-negative integer");
    return v;
}

SessionState state_from_json(const nlohmann::json& doc) {
    const auto problems = state_violations(doc);
    if (!problems.empty()) throw SchemaViolation("invalid state/1 frame: " + problems.front());
    SessionState s;
    s.session_id = doc.at("session_id").get<std::string>();
    s.scene_digest = doc.at("scene_digest").get<std::string>();
    s.status = status_from_string(doc.at("status").get<std::string>());
    if (s.status == Status::finished) s.outcome = doc.at("outcome").get<std::string>();
    s.pose = world::pose_from_json(doc.at("pose"));
    s.active_subgoal = doc.at("active_subgoal").get<int>();
    s.plan = doc.at("plan").get<std::vector<std::string>>();
    s.completed_subgoals = doc.at("completed_subgoals").get<std::size_t>();
    for (const auto& d : doc.at("detections")) {
        perception::Detection det;
        det.object_id = d.at("object_id").get<std::string>();
        det.label = d.at("label").get<std::string>();
        det.bearing = d.at("bearing").get<double>();
        det.elevation = d.at("elevation").get<double>();
        det.range = d.at("range").get<double>();
        det.confidence = d.at("confidence").get<double>();
        s.detections.push_back(std::move(det));
    }
    s.steps = doc.at("steps").get<std::size_t>();
    s.tick = doc.at("tick").get<std::uint64_t>();
    return s;
}

// ---------------------------------------------------------------- Session

Session::Session(std::string id, world::Scene scene, SessionOptions options)
    : id_(std::move(id)), scene_(std::move(scene)), options_(std::move(options)) {
    state_.session_id = id_;
    state_.scene_digest = hex_digest(world::to_json(scene_).dump());
    state_.pose = scene_.start_pose;
    publish();
    thread_ = std::thread([this] { worker(); });
}

Session::~Session() {
    {
        std::lock_guard lk(mutex_);
        auto r = std::make_unique<Request>();
        r->op = Op::shutdown;
        queue_.push_back(std::move(r));
    }
    queue_cv_.notify_all();
    thread_.join();
}

SessionState Session::snapshot() const {
    std::lock_guard lk(mutex_);
    return state_;
}

void Session::publish() {
    ++state_.tick;
    frames_.emplace_back(state_.tick, to_json(state_).dump());
    if (frames_.size() > kFrameHistory) frames_.pop_front();
    frame_cv_.notify_all();
}

std::vector<std::pair<std::uint64_t, std::string>> Session::frames_after(std::uint64_t after,
                                                                       std::chrono::milliseconds timeout) const {
    std::unique_lock lk(mutex_);
    frame_cv_.wait_for(lk, timeout, [&] { return state_.tick > after; });
    std::vector<std::pair<std::uint64_t, std::string>> out;
    for (const auto& f : frames_)
        if (f.first > after) out.push_back(f);
    return out;
}

std::optional<std::string> Session::log_jsonl() const {
    std::lock_guard lk(mutex_);
    return log_;
}

void Session::fail(Request& r, const std::string& why) { r.done.set_exception(std::make_exception_ptr(Conflict(why))); }

SessionState Session::enqueue(Op op, std::optional<executive::EpisodeSpec> spec) {
    auto r = std::make_unique<Request>();
    r->op = op;
    r->spec = std::move(spec);
    auto done = r->done.get_future();
    {
        std::lock_guard lk(mutex_);
        queue_.push_back(std::move(r));
    }
    queue_cv_.notify_all();
    return done.get();
}

language::SubGoalPlan Session::submit(const std::string& text) {
    world::Scene scene;
    std::uint64_t seed = 0;
    {
        std::lock_guard lk(mutex_);
        if (state_.status != Status::awaiting_instruction && state_.status != Status::finished)
            throw Conflict("instruction rejected while " + std::string(to_string(state_.status)));
        scene = scene_;
        scene.start_pose = state_.pose;
        seed = mix_seed(options_.seed, episodes_);
    }
    auto spec = make_episode_spec(std::move(scene), text, options_.pipeline,
                                  {seed, options_.success_radius, options_.max_steps});
    auto plan = executive::decompose(spec, options_.pipeline);
    enqueue(Op::start, std::move(spec));
    return plan;
}

SessionState Session::command(Command c) {
    switch (c) {
    case Command::pause: return enqueue(Op::pause);
    case Command::resume: return enqueue(Op::resume);
    case Command::step: return enqueue(Op::step);
    case Command::abort: return enqueue(Op::abort);
    case Command::reset: return enqueue(Op::reset);
    }
    throw Conflict("unknown command");
}

void Session::reset_state() {
    state_.status = Status::awaiting_instruction;
    state_.outcome.clear();
    state_.pose = scene_.start_pose;
    state_.active_subgoal = -1;
    state_.plan.clear();
    state_.completed_subgoals = 0;
    state_.detections.clear();
    state_.steps = 0;
    log_.reset();
    publish();
}

void Session::settle_pending() {
    for (auto& r : pending_) r->done.set_value(state_);
    pending_.clear();
}

void Session::worker() {
    auto grid = planner::rasterize(scene_, options_.pipeline.planner.resolution, options_.pipeline.planner.clearance);
    std::unique_lock lk(mutex_);
    grid_ = std::move(grid);
    state_.status = Status::awaiting_instruction;
    publish();
    for (;;) {
        queue_cv_.wait(lk, [&] { return !queue_.empty(); });
        auto r = std::move(queue_.front());
        queue_.pop_front();
        const auto status = std::string(to_string(state_.status));
        switch (r->op) {
        case Op::shutdown: shutdown_ = true; break;
        case Op::start:
            if (state_.status != Status::awaiting_instruction && state_.status != Status::finished)
                fail(*r, "instruction rejected while " + status);
            else if (r->spec->scene.start_pose != state_.pose)
                fail(*r, "session moved since the instruction was decomposed");
            else
                run_episode(*r, lk);
            break;
        case Op::reset:
            reset_state();
            r->done.set_value(state_);
            break;
        case Op::pause: fail(*r, "cannot pause while " + status); break;
        case Op::resume: fail(*r, "cannot resume while " + status); break;
        case Op::step: fail(*r, "cannot step while " + status); break;
        case Op::abort: fail(*r, "cannot abort while " + status); break;
        }
        if (shutdown_) break;
    }
    for (auto& q : queue_)
        if (q->op != Op::shutdown) fail(*q, "session closed");
    queue_.clear();
}

void Session::run_episode(Request& start, std::unique_lock<std::mutex>& lk) {
    const auto spec = std::move(*start.spec);
    const auto n = ++episodes_;
    state_.status = Status::running;
    state_.outcome.clear();
    state_.active_subgoal = -1;
    state_.plan.clear();
    state_.completed_subgoals = 0;
    state_.detections.clear();
    state_.steps = 0;
    log_.reset();
    stepping_ = reset_ = false;
    publish();
    start.done.set_value(state_);

    executive::EpisodeHooks hooks;
    hooks.on_plan = [this](const language::SubGoalPlan& plan) {
        std::lock_guard g(mutex_);
        for (const auto& sg : plan.subgoals) state_.plan.push_back(language::to_string(sg));
        publish();
    };
    hooks.on_step = [this](const executive::Progress& p) { return on_step(p); };

    lk.unlock();
    const auto log = executive::run_episode(spec, options_.pipeline, *grid_, hooks);
    const auto jsonl = executive::to_jsonl(log);
    if (!options_.log_dir.empty()) {
        const auto path = std::filesystem::path(options_.log_dir) / (id_ + "-" + std::to_string(n) + ".jsonl");
        std::ofstream out(path, std::ios::binary);
        out << jsonl;
        if (!out) std::cerr << "cannot write log " << path << "\n";
    }
    lk.lock();

    if (reset_) {
        reset_state();
    } else {
        state_.status = Status::finished;
        state_.outcome = log.outcome.label();
        state_.pose = log.steps.empty() ? spec.scene.start_pose : log.steps.back().pose;
        log_ = jsonl;
        publish();
    }
    settle_pending();
}

bool Session::on_step(const executive::Progress& p) {
    using clock = std::chrono::steady_clock;
    std::unique_lock lk(mutex_);
    state_.pose = p.pose;
    state_.active_subgoal = p.active_subgoal;
    state_.completed_subgoals = p.completed_subgoals;
    state_.detections = p.detections ? *p.detections : std::vector<perception::Detection>{};
    state_.steps = p.steps_taken;
    publish();
    if (stepping_) {
        stepping_ = false;
        state_.status = Status::paused;
        publish();
        settle_pending();
    }
    auto deadline = clock::now() + options_.pace;
    for (;;) {
        while (!queue_.empty()) {
            auto r = std::move(queue_.front());
            queue_.pop_front();
            const auto status = std::string(to_string(state_.status));
            switch (r->op) {
            case Op::pause:
                if (state_.status != Status::running) {
                    fail(*r, "cannot pause while " + status);
                    break;
                }
                state_.status = Status::paused;
                publish();
                r->done.set_value(state_);
                break;
            case Op::resume:
                if (state_.status != Status::paused) {
                    fail(*r, "cannot resume while " + status);
                    break;
                }
                state_.status = Status::running;
                publish();
                r->done.set_value(state_);
                deadline = clock::now() + options_.pace;
                break;
            case Op::step:
                if (state_.status != Status::paused) {
                    fail(*r, "cannot step while " + status);
                    break;
                }
                // Runs exactly one action, then pauses again.
                stepping_ = true;
                state_.status = Status::running;
                publish();
                pending_.push_back(std::move(r));
                return true;
            case Op::abort:
                pending_.push_back(std::move(r));
                return false;
            case Op::reset:
                reset_ = true;
                pending_.push_back(std::move(r));
                return false;
            case Op::shutdown:
                shutdown_ = true;
                return false;
            case Op::start: fail(*r, "instruction rejected while " + status); break;
            }
        }
        if (state_.status == Status::paused) {
            queue_cv_.wait(lk, [&] { return !queue_.empty(); });
            continue;
        }
        if (options_.pace.count() <= 0 || clock::now() >= deadline) return true;
        queue_cv_.wait_until(lk, deadline, [&] { return !queue_.empty(); });
    }
}

// ---------------------------------------------------------------- Service

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                nlohmann::json extra = nlohmann::json::object()) {
    extra["schema"] = "error/1";
    extra["error"] = code;
    extra["message"] = message;
    send_json(res, status, extra);
}

class BadRequest : public Error {
public:
    using Error::Error;
};

// Request bodies are strict: unknown fields and a wrong schema tag are rejected.
nlohmann::json request_body(const httplib::Request& req, const std::string& schema,
                            const std::set<std::string>& allowed, bool may_be_empty) {
    if (req.body.empty()) {
        if (may_be_empty) return nlohmann::json::object();
        throw BadRequest("request body is required");
    }
    auto doc = nlohmann::json::parse(req.body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw BadRequest("request body must be a JSON object");
    for (const auto& [key, _] : doc.items())
        if (key != "schema" && !allowed.contains(key)) throw BadRequest("unknown field '" + key + "'");
    if (doc.contains("schema") ? doc.at("schema") != schema : !may_be_empty)
        throw BadRequest("schema must be \"" + schema + "\"");
    return doc;
}

} // namespace

struct Service::Impl {
    ServiceOptions options;
    httplib::Server server;
    std::thread listener;
    std::atomic<bool> stopping{false};
    mutable std::mutex mutex;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    std::uint64_t next_id = 1;

    std::shared_ptr<Session> session_or_404(const httplib::Request& req, httplib::Response& res) const {
        const auto id = req.matches[1].str();
        std::lock_guard lk(mutex);
        auto it = sessions.find(id);
        if (it == sessions.end()) {
            send_error(res, 404, "not_found", "unknown session '" + id + "'");
            return nullptr;
        }
        return it->second;
    }

    void create(const httplib::Request& req, httplib::Response& res, Service& service) {
        const auto doc = request_body(
            req, "session_create/1",
            {"archetype", "scene_seed", "scene", "profile", "seed", "pace_ms", "success_radius", "max_steps"}, false);
        if (doc.contains("scene") == doc.contains("archetype"))
            throw BadRequest("exactly one of 'scene' and 'archetype' is required");
        world::Scene scene;
        try {
            if (doc.contains("scene")) {
                scene = world::scene_from_json(doc.at("scene"));
            } else {
                scene = eval::generate_scene(world::archetype_from_string(doc.at("archetype").get<std::string>()),
                                             doc.value("scene_seed", std::uint64_t{0}));
            }
            const auto problems = world::validate_scene(scene);
            if (!problems.empty()) throw BadRequest("invalid scene: " + problems.front());
            SessionOptions so;
            so.pipeline = options.pipeline;
            so.pace = options.pace;
            so.log_dir = options.log_dir;
            if (doc.contains("profile")) so.pipeline.profile = perception::profile_by_name(doc.at("profile").get<std::string>());
            so.seed = doc.value("seed", std::uint64_t{0});
            if (doc.contains("pace_ms")) so.pace = std::chrono::milliseconds(doc.at("pace_ms").get<std::int64_t>());
            so.success_radius = doc.value("success_radius", so.success_radius);
            so.max_steps = doc.value("max_steps", so.max_steps);
            if (so.pace.count() < 0 || !(so.success_radius > 0.0) || so.max_steps <= 0)
                throw BadRequest("pace_ms must be non-negative, success_radius and max_steps positive");
            auto session = service.create_session(std::move(scene), std::move(so));
            send_json(res, 201, to_json(session->snapshot()));
        } catch (const nlohmann::json::exception& e) {
            throw BadRequest(e.what());
        } catch (const SchemaViolation& e) {
            throw BadRequest(e.what());
        } catch (const ConfigError& e) {
            throw BadRequest(e.what());
        }
    }

    void instruction(const httplib::Request& req, httplib::Response& res) {
        auto session = session_or_404(req, res);
        if (!session) return;
        const auto doc = request_body(req, "instruction/1", {"text"}, false);
        if (!doc.contains("text") || !doc.at("text").is_string()) throw BadRequest("text must be a string");
        try {
            const auto plan = session->submit(doc.at("text").get<std::string>());
            nlohmann::json subgoals = nlohmann::json::array();
            for (const auto& sg : plan.subgoals) subgoals.push_back(language::to_json(sg));
            send_json(res, 200,
                      {{"schema", "plan/1"},
                       {"session_id", session->id()},
                       {"subgoals", subgoals},
                       {"summary", language::to_string(plan)}});
        } catch (const language::UnparsableClause& e) {
            send_error(res, 422, "parse_error", e.what(), {{"clause", e.clause()}});
        } catch (const BackendUnavailable& e) {
            send_error(res, 502, "backend_unavailable", e.what());
        } catch (const Conflict&) {
            throw;
        } catch (const Error& e) {
            send_error(res, 422, "parse_error", e.what());
        }
    }

    void command(const httplib::Request& req, httplib::Response& res) {
        auto session = session_or_404(req, res);
        if (!session) return;
        request_body(req, "command/1", {}, true);
        const auto c = command_from_string(req.matches[2].str());
        send_json(res, 200, to_json(session->command(*c)));
    }

    void stream(const httplib::Request& req, httplib::Response& res) {
        auto session = session_or_404(req, res);
        if (!session) return;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, session, last = std::uint64_t{0}, started = false](std::size_t, httplib::DataSink& sink) mutable {
                if (stopping) {
                    sink.done();
                    return true;
                }
                auto event = [&](const std::string& frame) {
                    const std::string chunk = "event: state\ndata: " + frame + "\n\n";
                    return sink.write(chunk.data(), chunk.size());
                };
                if (!started) {
                    // Late joiners start from the current state, not the history.
                    started = true;
                    const auto s = session->snapshot();
                    last = s.tick;
                    return event(to_json(s).dump());
                }
                auto frames = session->frames_after(last, kHeartbeat);
                if (frames.empty()) {
                    const auto s = session->snapshot();
                    last = s.tick;
                    return event(to_json(s).dump());
                }
                for (const auto& [tick, frame] : frames) {
                    if (!event(frame)) return false;
                    last = tick;
                }
                return true;
            });
    }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
    impl_->options = std::move(options);
    auto& srv = impl_->server;
    Impl* impl = impl_.get();

    auto guarded = [impl](auto handler) {
        return [impl, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const BadRequest& e) {
                send_error(res, 400, "bad_request", e.what());
            } catch (const Conflict& e) {
                send_error(res, 409, "conflict", e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            }
        };
    };

    srv.Post("/sessions", guarded([this, impl](const auto& req, auto& res) { impl->create(req, res, *this); }));
    srv.Get(R"(/sessions/([^/]+))", guarded([impl](const auto& req, auto& res) {
                if (auto s = impl->session_or_404(req, res)) send_json(res, 200, to_json(s->snapshot()));
            }));
    srv.Post(R"(/sessions/([^/]+)/instruction)",
             guarded([impl](const auto& req, auto& res) { impl->instruction(req, res); }));
    srv.Post(R"(/sessions/([^/]+)/(pause|resume|step|abort|reset))",
             guarded([impl](const auto& req, auto& res) { impl->command(req, res); }));
    srv.Get(R"(/sessions/([^/]+)/log)", guarded([impl](const auto& req, auto& res) {
                auto s = impl->session_or_404(req, res);
                if (!s) return;
                const auto log = s->log_jsonl();
                if (!log) throw Conflict("no finished episode");
                res.set_content(*log, "application/x-ndjson");
            }));
    srv.Get(R"(/sessions/([^/]+)/stream)", guarded([impl](const auto& req, auto& res) { impl->stream(req, res); }));
}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
    auto& srv = impl_->server;
    const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    return bound;
}

void Service::wait() {
    if (impl_->listener.joinable()) impl_->listener.join();
}

void Service::stop() {
    impl_->stopping = true;
    impl_->server.stop();
    wait();
    std::lock_guard lk(impl_->mutex);
    impl_->sessions.clear();
}

std::shared_ptr<Session> Service::create_session(world::Scene scene, SessionOptions options) {
    std::lock_guard lk(impl_->mutex);
    const auto id = "s" + std::to_string(impl_->next_id++);
    auto session = std::make_shared<Session>(id, std::move(scene), std::move(options));
    impl_->sessions.emplace(id, session);
    return session;
}

std::shared_ptr<Session> Service::find(const std::string& id) const {
    std::lock_guard lk(impl_->mutex);
    auto it = impl_->sessions.find(id);
    return it == impl_->sessions.end() ? nullptr : it->second;
}

} // namespace uavvln::interface
