#include "uavvln/executive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "uavvln/format.hpp"
#include "uavvln/rng.hpp"

namespace uavvln::executive {

using language::SubGoal;
using language::SubGoalKind;
using perception::Detection;
using world::Action;

namespace {

constexpr std::uint64_t kCorruptionSalt = 0x636f7272;
constexpr std::uint64_t kTerminationSalt = 0xfff0;
constexpr std::uint64_t kFinalSalt = 0xfff1;
constexpr int kArrivalRefinements = 3;
constexpr int kArrivalRescans = 2;

struct EpisodeFailure {
    FailureReason reason;
    std::string detail;
};

} // namespace

std::vector<std::string> validate_spec(const EpisodeSpec& spec) {
    auto out = world::validate_scene(spec.scene);
    if (spec.instruction.text.empty()) out.push_back("instruction is empty");
    if (!(spec.success_radius > 0.0)) out.push_back("success_radius must be positive");
    if (!(spec.optimal_length >= 0.0)) out.push_back("optimal_length must be non-negative");
    if (spec.max_steps <= 0) out.push_back("max_steps must be positive");
    if (spec.goal) {
        if (!(spec.optimal_length > 0.0)) out.push_back("optimal_length must be positive when a goal is set");
        const bool present = std::any_of(spec.scene.objects.begin(), spec.scene.objects.end(), [&](const auto& o) {
            return perception::matches_noun(o, spec.goal->label, spec.goal->attributes);
        });
        if (!present) out.push_back("goal '" + language::to_string(*spec.goal) + "' matches no scene object");
    }
    return out;
}

nlohmann::json to_json(const EpisodeSpec& spec) {
    return {{"scene", world::to_json(spec.scene)},
            {"instruction", spec.instruction.text},
            {"goal", spec.goal ? language::to_json(*spec.goal) : nlohmann::json()},
            {"success_radius", spec.success_radius},
            {"optimal_length", spec.optimal_length},
            {"seed", spec.seed},
            {"max_steps", spec.max_steps}};
}

std::string spec_digest(const EpisodeSpec& spec) { return hex_digest(to_json(spec).dump()); }

TerminationReport check_termination(const world::Pose& pose, std::span<const Detection> detections,
                                    const PlanProgress& progress, const EpisodeSpec& spec,
                                    double acceptance_threshold) {
    TerminationReport r;
    r.subgoals_done = progress.completed >= progress.total;
    if (!spec.goal) {
        r.goal_detected = true;
        r.within_threshold = true;
        return r;
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& d : detections) {
        if (d.confidence < acceptance_threshold || d.label != spec.goal->label) continue;
        const auto* obj = spec.scene.find(d.object_id);
        if (!obj || !perception::matches_ref(*obj, *spec.goal, spec.scene, pose)) continue;
        r.goal_detected = true;
        const double dist = world::distance(pose.position, obj->aabb.center());
        if (dist < best || (dist == best && obj->id < r.matched_object)) {
            best = dist;
            r.matched_object = obj->id;
        }
    }
    if (!r.goal_detected) {
        // Proximity is judged on its own: nearest goal-matching object in the scene.
        for (const auto& obj : spec.scene.objects)
            if (perception::matches_ref(obj, *spec.goal, spec.scene, pose))
                best = std::min(best, world::distance(pose.position, obj.aabb.center()));
    }
    r.within_threshold = best <= spec.success_radius;
    return r;
}

std::string_view to_string(FailureReason r) {
    switch (r) {
    case FailureReason::search_exhausted: return "search_exhausted";
    case FailureReason::unreachable: return "unreachable";
    case FailureReason::step_budget: return "step_budget";
    case FailureReason::decompose_error: return "decompose_error";
    case FailureReason::termination_unmet: return "termination_unmet";
    case FailureReason::aborted: return "aborted";
    }
    return "unknown";
}

FailureReason failure_reason_from_string(std::string_view s) {
    for (auto r : {FailureReason::search_exhausted, FailureReason::unreachable, FailureReason::step_budget,
                   FailureReason::decompose_error, FailureReason::termination_unmet, FailureReason::aborted})
        if (to_string(r) == s) return r;
    throw SchemaViolation("unknown failure reason '" + std::string(s) + "'");
}

std::string Outcome::label() const {
    if (success) return "success";
    return "failure(" + std::string(reason ? to_string(*reason) : "unknown") + ")";
}

language::SubGoalPlan decompose(const EpisodeSpec& spec, const PipelineConfig& config) {
    const bool landed = world::is_landed(spec.scene.start_pose, spec.scene);
    const auto actions = language::full_action_space();
    const auto vocab = spec.scene.vocabulary();
    language::SubGoalPlan plan;
    if (config.parser.kind == ParserVariant::Kind::external_llm) {
        if (!config.parser.endpoint) throw ConfigError("external parser needs an endpoint");
        plan = language::remote_decompose(spec.instruction, actions, vocab, *config.parser.endpoint, landed);
    } else {
        language::ParserOptions opts;
        opts.starts_landed = landed;
        plan = language::parse_instruction(spec.instruction, actions, opts);
    }
    if (config.parser.corruption_rate > 0.0)
        plan = language::corrupt_plan(plan, config.parser.corruption_rate, mix_seed(spec.seed, kCorruptionSalt), vocab);
    return plan;
}

namespace {

class Runner {
public:
    Runner(const EpisodeSpec& spec, const PipelineConfig& config, const planner::OccupancyGrid& grid,
           const EpisodeHooks& hooks)
        : spec_(spec), config_(config), hooks_(hooks),
          ctx_{spec.scene, grid, config.camera, config.planner}, pose_(spec.scene.start_pose) {}

    EpisodeLog run() {
        log_.spec_digest = spec_digest(spec_);
        log_.spec_summary = {{"scene", spec_.scene.name},
                             {"archetype", world::to_string(spec_.scene.archetype)},
                             {"instruction", spec_.instruction.text},
                             {"goal", spec_.goal ? language::to_json(*spec_.goal) : nlohmann::json()},
                             {"seed", spec_.seed},
                             {"success_radius", spec_.success_radius},
                             {"optimal_length", spec_.optimal_length},
                             {"max_steps", spec_.max_steps}};
        try {
            decompose();
            if (hooks_.on_plan) hooks_.on_plan(log_.plan);
            execute_plan();
            terminate();
        } catch (const EpisodeFailure& f) {
            log_.outcome = {false, f.reason, f.detail};
            if (f.reason != FailureReason::decompose_error && f.reason != FailureReason::termination_unmet) {
                const auto dets = observe(spec_.goal, kFinalSalt);
                log_.termination = check_termination(pose_, dets, progress(), spec_,
                                                     config_.planner.acceptance_threshold);
            }
        }
        log_.path_length = path_length_;
        return std::move(log_);
    }

private:
    PlanProgress progress() const { return {log_.plan.subgoals.size(), completed_}; }

    void decompose() {
        try {
            log_.plan = executive::decompose(spec_, config_);
        } catch (const Error& e) {
            throw EpisodeFailure{FailureReason::decompose_error, e.what()};
        }
    }

    std::vector<Detection> observe(const std::optional<language::ObjectRef>& ref, std::uint64_t salt) const {
        if (!ref) return {};
        const perception::DetectionQuery q{*ref};
        const std::uint64_t seed = mix_seed(mix_seed(spec_.seed, log_.steps.size()), salt);
        return perception::detect(pose_, config_.camera, spec_.scene, std::span(&q, 1), config_.profile, seed);
    }

    // Query for the active sub-goal, falling back to the episode goal.
    std::optional<language::ObjectRef> query_for(int subgoal) const {
        if (subgoal >= 0 && static_cast<std::size_t>(subgoal) < log_.plan.subgoals.size()) {
            const auto& t = log_.plan.subgoals[static_cast<std::size_t>(subgoal)].target;
            if (t) return t;
        }
        return spec_.goal;
    }

    bool can_apply(const Action& a) const {
        try {
            world::apply_action(pose_, a, spec_.scene, config_.planner.clearance);
            return true;
        } catch (const Error&) {
            return false;
        }
    }

    std::vector<Detection> execute(const Action& action, int subgoal) {
        if (static_cast<int>(log_.steps.size()) >= spec_.max_steps)
            throw EpisodeFailure{FailureReason::step_budget, "step budget of " + std::to_string(spec_.max_steps) +
                                                                 " actions exhausted"};
        world::Pose next;
        try {
            next = world::apply_action(pose_, action, spec_.scene, config_.planner.clearance);
        } catch (const Error& e) {
            throw EpisodeFailure{FailureReason::unreachable, world::describe(action) + ": " + e.what()};
        }
        path_length_ += world::distance(pose_.position, next.position);
        pose_ = next;
        StepRecord rec;
        rec.index = static_cast<int>(log_.steps.size());
        rec.action = action;
        rec.pose = pose_;
        rec.subgoal = subgoal;
        rec.detections = observe(query_for(subgoal), static_cast<std::uint64_t>(subgoal) + 1);
        log_.steps.push_back(rec);
        if (hooks_.on_step) {
            Progress p;
            p.plan = &log_.plan;
            p.pose = pose_;
            p.active_subgoal = subgoal;
            p.completed_subgoals = completed_;
            p.detections = &log_.steps.back().detections;
            p.steps_taken = log_.steps.size();
            if (!hooks_.on_step(p)) throw EpisodeFailure{FailureReason::aborted, "aborted by operator"};
        }
        return log_.steps.back().detections;
    }

    // Rotate in place, then climb and rotate again, until the target shows up.
    std::vector<Detection> scan(const language::ObjectRef& ref, int subgoal) {
        const double threshold = config_.planner.acceptance_threshold;
        for (int ascent = 0; ascent <= kScanAscents; ++ascent) {
            if (ascent > 0) {
                const Action up = Action::ascend(kScanAscent);
                if (!can_apply(up)) break;
                auto dets = execute(up, subgoal);
                if (planner::best_detection(ref, dets, threshold)) return dets;
            }
            for (int t = 0; t < kScanTurns; ++t) {
                auto dets = execute(Action::turn_left(2.0 * std::numbers::pi / kScanTurns), subgoal);
                if (planner::best_detection(ref, dets, threshold)) return dets;
            }
        }
        throw EpisodeFailure{FailureReason::search_exhausted, "'" + language::to_string(ref) + "' not found"};
    }

    static bool far_apart(planner::Cell a, planner::Cell b) {
        return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)}) > 1;
    }

    void navigate(const SubGoal& goal, int idx, bool terminal) {
        auto dets = observe(goal.target, static_cast<std::uint64_t>(idx) + 1);
        int refinements = 0;
        int rescans = 0;
        for (;;) {
            planner::SubgoalResult result;
            try {
                result = planner::plan_subgoal(goal, idx, pose_, dets, ctx_);
            } catch (const planner::Unreachable& e) {
                throw EpisodeFailure{FailureReason::unreachable, e.what()};
            }
            if (std::holds_alternative<planner::NeedsSearch>(result)) {
                dets = scan(*goal.target, idx);
                continue;
            }
            auto& seg = std::get<planner::Segment>(result);
            auto& steps = seg.plan.steps;
            // The final touchdown is left to the termination routine.
            if (terminal && !steps.empty() && steps.back().action.kind == world::ActionKind::land) steps.pop_back();
            bool replan = false;
            for (const auto& s : steps) {
                dets = execute(s.action, idx);
                if (!seg.target) continue;
                const auto fresh = planner::grounded_target(goal, pose_, dets, ctx_);
                if (fresh && far_apart(*fresh, *seg.target)) {
                    replan = true;
                    break;
                }
            }
            // On arrival, settle onto the latest estimate a few times at most.
            if (!replan && seg.target && refinements < kArrivalRefinements) {
                const auto fresh = planner::grounded_target(goal, pose_, dets, ctx_);
                if (fresh && *fresh != *seg.target) {
                    ++refinements;
                    replan = true;
                }
            }
            // Not in view on arrival: look around and head for the fresh sighting.
            if (!replan && seg.target && rescans < kArrivalRescans &&
                !planner::best_detection(*goal.target, dets, config_.planner.acceptance_threshold)) {
                ++rescans;
                dets = scan(*goal.target, idx);
                continue;
            }
            if (!replan) return;
        }
    }

    void run_direct(const SubGoal& goal, int idx) {
        planner::SubgoalResult result;
        try {
            result = planner::plan_subgoal(goal, idx, pose_, {}, ctx_);
        } catch (const planner::Unreachable& e) {
            throw EpisodeFailure{FailureReason::unreachable, e.what()};
        }
        for (const auto& s : std::get<planner::Segment>(result).plan.steps) execute(s.action, idx);
    }

    void execute_plan() {
        const auto& goals = log_.plan.subgoals;
        const double threshold = config_.planner.acceptance_threshold;
        for (std::size_t i = 0; i < goals.size(); ++i) {
            const SubGoal& g = goals[i];
            const int idx = static_cast<int>(i);
            const bool terminal = i + 1 == goals.size();
            switch (g.kind) {
            case SubGoalKind::land:
                if (!terminal) run_direct(g, idx);
                break;
            case SubGoalKind::takeoff:
            case SubGoalKind::ascend_to:
            case SubGoalKind::descend_to:
            case SubGoalKind::hover: run_direct(g, idx); break;
            case SubGoalKind::search: {
                const auto dets = observe(g.target, static_cast<std::uint64_t>(idx) + 1);
                if (!planner::best_detection(*g.target, dets, threshold)) scan(*g.target, idx);
                break;
            }
            case SubGoalKind::navigate_to:
            case SubGoalKind::fly_over:
            case SubGoalKind::land_at: navigate(g, idx, terminal); break;
            }
            ++completed_;
        }
    }

    void terminate() {
        const int last = static_cast<int>(log_.plan.subgoals.size()) - 1;
        TerminationReport report;
        std::vector<Detection> dets;
        for (int attempt = 0;; ++attempt) {
            dets = observe(spec_.goal, kTerminationSalt);
            report = check_termination(pose_, dets, progress(), spec_, config_.planner.acceptance_threshold);
            if (report.satisfied()) break;
            if (attempt >= config_.termination_retries) {
                log_.termination = report;
                std::string why;
                if (!report.goal_detected) why = "goal not detected";
                else if (!report.within_threshold) why = "goal farther than the success radius";
                else why = "sub-goals incomplete";
                throw EpisodeFailure{FailureReason::termination_unmet, why};
            }
            // Turning in place brings a goal beside or behind the drone into view.
            execute(report.goal_detected ? Action::hover(1) : Action::turn_left(2.0 * std::numbers::pi / kScanTurns),
                    last);
        }
        log_.termination = report;

        // Touch down only where the goal, as estimated, stays in reach and in view; hover otherwise.
        if (!world::is_landed(pose_, spec_.scene) && static_cast<int>(log_.steps.size()) < spec_.max_steps)
            execute(keeps_goal_after_landing(dets, report.matched_object) ? Action::land() : Action::hover(1), last);
        log_.outcome = {true, std::nullopt, ""};
    }

    bool keeps_goal_after_landing(std::span<const Detection> dets, const std::string& matched) const {
        if (!spec_.goal) return can_apply(Action::land());
        world::Pose landed;
        try {
            landed = world::apply_action(pose_, Action::land(), spec_.scene, config_.planner.clearance);
        } catch (const Error&) {
            return false;
        }
        const auto it = std::find_if(dets.begin(), dets.end(), [&](const Detection& d) { return d.object_id == matched; });
        if (it == dets.end()) return false;
        const world::Vec3 estimate = perception::detection_position(*it, pose_, config_.camera);
        const auto s = world::camera_angles(landed, config_.camera, estimate);
        return s && s->range <= spec_.success_radius && s->range <= config_.camera.max_range &&
               std::abs(s->bearing) <= config_.camera.horizontal_fov / 2.0 &&
               std::abs(s->elevation) <= config_.camera.vertical_fov / 2.0;
    }

    const EpisodeSpec& spec_;
    const PipelineConfig& config_;
    const EpisodeHooks& hooks_;
    planner::PlanningContext ctx_;
    world::Pose pose_;
    EpisodeLog log_;
    double path_length_ = 0.0;
    std::size_t completed_ = 0;
};

} // namespace

EpisodeLog run_episode(const EpisodeSpec& spec, const PipelineConfig& config) {
    const auto grid = planner::rasterize(spec.scene, config.planner.resolution, config.planner.clearance);
    return run_episode(spec, config, grid);
}

EpisodeLog run_episode(const EpisodeSpec& spec, const PipelineConfig& config, const planner::OccupancyGrid& grid,
                       const EpisodeHooks& hooks) {
    return Runner(spec, config, grid, hooks).run();
}

namespace {

nlohmann::json termination_json(const TerminationReport& r) {
    return {{"goal_detected", r.goal_detected},
            {"within_threshold", r.within_threshold},
            {"subgoals_done", r.subgoals_done},
            {"matched_object", r.matched_object}};
}

Detection detection_from_json(const nlohmann::json& j) {
    Detection d;
    d.object_id = j.at("object_id").get<std::string>();
    d.label = j.at("label").get<std::string>();
    d.bearing = j.at("bearing").get<double>();
    d.elevation = j.at("elevation").get<double>();
    d.range = j.at("range").get<double>();
    d.confidence = j.at("confidence").get<double>();
    return d;
}

} // namespace

std::string to_jsonl(const EpisodeLog& log) {
    std::ostringstream out;
    nlohmann::json head = {{"schema", "log/1"}, {"type", "spec"}, {"digest", log.spec_digest},
                           {"spec", log.spec_summary}};
    nlohmann::json subgoals = nlohmann::json::array();
    for (const auto& g : log.plan.subgoals) subgoals.push_back(language::to_json(g));
    head["plan"] = subgoals;
    head["plan_source"] =
        log.plan.source == language::PlanSource::external_llm ? "external_llm" : "reference_parser";
    out << head.dump() << '\n';
    for (const auto& s : log.steps) {
        nlohmann::json dets = nlohmann::json::array();
        for (const auto& d : s.detections) dets.push_back(perception::to_json(d));
        nlohmann::json line = {{"type", "step"},
                               {"index", s.index},
                               {"action", world::to_json(s.action)},
                               {"pose", world::to_json(s.pose)},
                               {"subgoal", s.subgoal},
                               {"detections", dets}};
        out << line.dump() << '\n';
    }
    nlohmann::json tail = {{"type", "outcome"},
                           {"outcome", log.outcome.label()},
                           {"reason", log.outcome.reason ? nlohmann::json(to_string(*log.outcome.reason))
                                                         : nlohmann::json()},
                           {"detail", log.outcome.detail},
                           {"path_length", log.path_length},
                           {"steps", log.steps.size()},
                           {"termination", termination_json(log.termination)}};
    out << tail.dump() << '\n';
    return out.str();
}

EpisodeLog log_from_jsonl(const std::string& text) {
    EpisodeLog log;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_head = false;
    bool have_tail = false;
    try {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "spec") {
                if (j.at("schema") != "log/1") throw SchemaViolation("log must carry \"schema\": \"log/1\"");
                log.spec_digest = j.at("digest").get<std::string>();
                log.spec_summary = j.at("spec");
                log.plan.subgoals.clear();
                for (const auto& g : j.at("plan")) log.plan.subgoals.push_back(language::subgoal_from_json(g));
                log.plan.source = j.at("plan_source") == "external_llm" ? language::PlanSource::external_llm
                                                                         : language::PlanSource::reference_parser;
                have_head = true;
            } else if (type == "step") {
                StepRecord s;
                s.index = j.at("index").get<int>();
                s.action = world::action_from_json(j.at("action"));
                s.pose = world::pose_from_json(j.at("pose"));
                s.subgoal = j.at("subgoal").get<int>();
                for (const auto& d : j.at("detections")) s.detections.push_back(detection_from_json(d));
                log.steps.push_back(std::move(s));
            } else if (type == "outcome") {
                log.outcome.success = j.at("outcome") == "success";
                if (!j.at("reason").is_null())
                    log.outcome.reason = failure_reason_from_string(j.at("reason").get<std::string>());
                log.outcome.detail = j.at("detail").get<std::string>();
                log.path_length = j.at("path_length").get<double>();
                const auto& t = j.at("termination");
                log.termination.goal_detected = t.at("goal_detected").get<bool>();
                log.termination.within_threshold = t.at("within_threshold").get<bool>();
                log.termination.subgoals_done = t.at("subgoals_done").get<bool>();
                log.termination.matched_object = t.at("matched_object").get<std::string>();
                have_tail = true;
            } else {
                throw SchemaViolation("unknown log line type '" + type + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("log line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_head || !have_tail) throw SchemaViolation("log lacks its spec or outcome line");
    return log;
}

void write_log(const EpisodeLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write log file '" + path + "'");
    out << to_jsonl(log);
}

} // namespace uavvln::executive
