#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "uavvln/errors.hpp"
#include "uavvln/executive.hpp"
#include "uavvln/world.hpp"

namespace uavvln::interface {

inline constexpr std::chrono::milliseconds kLivePace{200};

// Target of the last target-bearing sub-goal, the goal a free-form
// instruction is judged against.
std::optional<language::ObjectRef> final_target(const language::SubGoalPlan& plan);

struct SpecOptions {
    std::uint64_t seed = 0;
    double success_radius = executive::kDefaultSuccessRadius;
    int max_steps = 400;
};

// Episode for a free-form instruction. The goal comes from the decomposed
// plan; an undecomposable instruction yields a goal-less spec whose run
// records the decompose error.
executive::EpisodeSpec make_episode_spec(world::Scene scene, const std::string& instruction,
                                         const executive::PipelineConfig& config, const SpecOptions& options = {});

enum class Status { idle, awaiting_instruction, running, paused, finished };

std::string_view to_string(Status s);
Status status_from_string(std::string_view s);

struct SessionState {
    std::string session_id;
    std::string scene_digest;
    Status status = Status::idle;
    std::string outcome;  // Outcome::label() once finished, empty otherwise
    world::Pose pose;
    int active_subgoal = -1;  // -1 before the first sub-goal
    std::vector<std::string> plan;
    std::size_t completed_subgoals = 0;
    std::vector<perception::Detection> detections;
    std::size_t steps = 0;
    std::uint64_t tick = 0;  // bumped on every published change
};

// state/1 frame.
nlohmann::json to_json(const SessionState& state);
// Ignores unknown fields. Throws SchemaViolation.
SessionState state_from_json(const nlohmann::json& doc);
// Empty when `doc` is a well-formed state/1 frame.
std::vector<std::string> state_violations(const nlohmann::json& doc);

// Illegal command for the current status.
class Conflict : public Error {
public:
    using Error::Error;
};

enum class Command { pause, resume, step, abort, reset };

std::string_view to_string(Command c);
std::optional<Command> command_from_string(std::string_view s);

struct SessionOptions {
    executive::PipelineConfig pipeline;
    std::chrono::milliseconds pace = kLivePace;  // zero runs unpaced
    std::uint64_t seed = 0;
    double success_radius = executive::kDefaultSuccessRadius;
    int max_steps = 400;
    std::string log_dir;  // finished logs are written here when set
};

// One live episode at a time, owned by a single executor thread that drains
// a command queue between steps. Readers get copies of published snapshots.
class Session {
public:
    Session(std::string id, world::Scene scene, SessionOptions options);
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const { return id_; }
    SessionState snapshot() const;

    // Decomposes `text` and starts the episode from the current pose. Throws
    // Conflict unless awaiting an instruction or finished; decomposition
    // errors propagate and leave the session unchanged.
    language::SubGoalPlan submit(const std::string& text);

    // Applies a command between steps and returns the resulting state. Throws Conflict.
    SessionState command(Command c);

    // (tick, state/1 frame) pairs with tick > `after`, oldest first; blocks up
    // to `timeout` for one.
    std::vector<std::pair<std::uint64_t, std::string>> frames_after(std::uint64_t after, std::chrono::milliseconds timeout) const;

    // JSONL log of the last finished episode.
    std::optional<std::string> log_jsonl() const;

private:
    enum class Op { start, pause, resume, step, abort, reset, shutdown };
    struct Request {
        Op op;
        std::optional<executive::EpisodeSpec> spec;  // start only
        std::promise<SessionState> done;
    };

    void worker();
    void run_episode(Request& start, std::unique_lock<std::mutex>& lk);
    void settle_pending();
    bool on_step(const executive::Progress& p);
    void publish();
    void reset_state();
    SessionState enqueue(Op op, std::optional<executive::EpisodeSpec> spec = std::nullopt);
    static void fail(Request& r, const std::string& why);

    std::string id_;
    world::Scene scene_;
    SessionOptions options_;
    std::optional<planner::OccupancyGrid> grid_;

    mutable std::mutex mutex_;
    std::condition_variable queue_cv_;
    mutable std::condition_variable frame_cv_;
    std::deque<std::unique_ptr<Request>> queue_;
    SessionState state_;
    std::deque<std::pair<std::uint64_t, std::string>> frames_;
    std::optional<std::string> log_;
    std::uint64_t episodes_ = 0;

    // Executor-only bookkeeping while an episode runs.
    std::vector<std::unique_ptr<Request>> pending_;
    bool stepping_ = false;
    bool reset_ = false;
    bool shutdown_ = false;

    std::thread thread_;
};

struct ServiceOptions {
    executive::PipelineConfig pipeline;
    std::chrono::milliseconds pace = kLivePace;
    std::string log_dir;
};

// HTTP front end: JSON requests, server-sent state/1 frames on /sessions/{id}/stream.
class Service {
public:
    explicit Service(ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and serves on a background thread; port 0 picks a free port.
    // Returns the bound port. Throws ConfigError if binding fails.
    int start(const std::string& host, int port);
    // Blocks until stop() is called or the listener exits.
    void wait();
    void stop();

    std::shared_ptr<Session> create_session(world::Scene scene, SessionOptions options);
    std::shared_ptr<Session> find(const std::string& id) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace uavvln::interface
