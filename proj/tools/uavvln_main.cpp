#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "uavvln/eval.hpp"
#include "uavvln/interface.hpp"

using namespace uavvln;

namespace {

constexpr int kExitSuccess = 0;
constexpr int kExitConfig = 1;
constexpr int kExitFailure = 2;

struct RunArgs {
    std::string scene_file;
    std::string archetype;
    std::uint64_t scene_seed = 0;
    std::string instruction;
    std::string profile = "ORACLE";
    std::uint64_t seed = 0;
    std::string out = "episode.jsonl";
    int max_steps = 400;
    double radius = executive::kDefaultSuccessRadius;
    std::string parser_endpoint;
    double corruption = 0.0;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
}

executive::PipelineConfig pipeline_for(const RunArgs& a) {
    executive::PipelineConfig c;
    c.profile = perception::profile_by_name(a.profile);
    c.parser.corruption_rate = a.corruption;
    if (!(a.corruption >= 0.0 && a.corruption <= 1.0)) throw ConfigError("corruption must be in [0, 1]");
    if (!a.parser_endpoint.empty()) {
        c.parser.kind = executive::ParserVariant::Kind::external_llm;
        c.parser.endpoint = remote::parse_endpoint(a.parser_endpoint);
    }
    return c;
}

int cmd_run(const RunArgs& a) {
    world::Scene scene;
    if (!a.scene_file.empty()) {
        scene = world::load_scene(a.scene_file);
    } else if (!a.archetype.empty()) {
        scene = eval::generate_scene(world::archetype_from_string(a.archetype), a.scene_seed);
    } else {
        throw ConfigError("one of --scene or --archetype is required");
    }
    const auto problems = world::validate_scene(scene);
    if (!problems.empty()) throw ConfigError("invalid scene: " + problems.front());
    const auto config = pipeline_for(a);
    if (a.max_steps <= 0 || !(a.radius > 0.0)) throw ConfigError("--max-steps and --radius must be positive");
    const auto spec =
        interface::make_episode_spec(std::move(scene), a.instruction, config, {a.seed, a.radius, a.max_steps});
    const auto log = executive::run_episode(spec, config);
    write_file(a.out, executive::to_jsonl(log));
    std::cout << log.outcome.label() << " steps=" << log.steps.size() << " path_length=" << log.path_length
              << " log=" << a.out << "\n";
    return log.outcome.success ? kExitSuccess : kExitFailure;
}

void write_results(const std::vector<eval::SuiteResult>& results, const std::string& out_dir, const std::string& name) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : results) doc.push_back(eval::to_json(r));
    const std::filesystem::path dir(out_dir);
    write_file(dir / (name + ".json"), doc.dump(2) + "\n");
    write_file(dir / (name + ".txt"), eval::format_table(results));
    write_file(dir / (name + ".csv"), eval::to_csv(results));
    std::cout << eval::format_table(results);
}

int cmd_suite(const std::string& config_path, const std::string& out_dir, bool ablate) {
    const auto cfg = eval::load_suite_config(config_path);
    if (ablate && !cfg.rows_given) throw ConfigError("ablation config needs a \"rows\" list");
    const auto bench = eval::make_benchmark(cfg.archetypes, cfg.episodes_per_scene, cfg.seed, cfg.episode);
    std::vector<eval::RowConfig> rows = cfg.rows_given ? cfg.rows : std::vector<eval::RowConfig>{cfg.base};
    write_results(eval::ablation_matrix(bench, rows), out_dir, cfg.name);
    return kExitSuccess;
}

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

int cmd_serve(const std::string& host, int port, int pace_ms, const std::string& profile, const std::string& log_dir) {
    interface::ServiceOptions o;
    o.pipeline.profile = perception::profile_by_name(profile);
    if (pace_ms < 0) throw ConfigError("--pace-ms must be non-negative");
    o.pace = std::chrono::milliseconds(pace_ms);
    if (!log_dir.empty()) std::filesystem::create_directories(log_dir);
    o.log_dir = log_dir;
    interface::Service service(o);
    const int bound = service.start(host, port);
    std::cout << "listening on " << host << ":" << bound << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    return kExitSuccess;
}

int cmd_parse(const std::string& text) {
    const auto actions = language::full_action_space();
    const auto plan = language::parse_instruction({text}, actions);
    std::cout << language::to_string(plan) << "\n";
    return kExitSuccess;
}

int cmd_scene(const std::string& archetype, std::uint64_t seed, const std::string& out) {
    const auto scene = eval::generate_scene(world::archetype_from_string(archetype), seed);
    if (out.empty()) std::cout << world::to_json(scene).dump(2) << "\n";
    else write_file(out, world::to_json(scene).dump(2) + "\n");
    return kExitSuccess;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"UAV vision-language navigation simulator"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run one episode and write its JSONL log");
    auto* scene_opt = run_cmd->add_option("--scene", run.scene_file, "scene/1 JSON file");
    auto* arch_opt = run_cmd->add_option("--archetype", run.archetype, "warehouse, park, neighborhood or office");
    scene_opt->excludes(arch_opt);
    run_cmd->add_option("--scene-seed", run.scene_seed, "Seed for the generated scene");
    run_cmd->add_option("--instruction,-i", run.instruction, "Natural-language instruction")->required();
    run_cmd->add_option("--profile", run.profile, "Perception profile");
    run_cmd->add_option("--seed", run.seed, "Episode seed");
    run_cmd->add_option("--out,-o", run.out, "Log path");
    run_cmd->add_option("--max-steps", run.max_steps, "Step budget");
    run_cmd->add_option("--radius", run.radius, "Success radius in metres");
    run_cmd->add_option("--parser-endpoint", run.parser_endpoint, "decompose/1 endpoint URL");
    run_cmd->add_option("--corruption", run.corruption, "Plan corruption rate");

    std::string suite_config, suite_out = "results";
    auto* suite_cmd = app.add_subcommand("suite", "Run a suite/1 config and write results");
    suite_cmd->add_option("config", suite_config, "suite/1 JSON file")->required();
    suite_cmd->add_option("--out-dir", suite_out, "Output directory");

    std::string ablate_config, ablate_out = "results";
    auto* ablate_cmd = app.add_subcommand("ablate", "Run every row of a suite/1 config");
    ablate_cmd->add_option("config", ablate_config, "suite/1 JSON file with rows")->required();
    ablate_cmd->add_option("--out-dir", ablate_out, "Output directory");

    std::string host = "127.0.0.1", serve_profile = "ORACLE", log_dir;
    int port = 8080, pace_ms = static_cast<int>(interface::kLivePace.count());
    auto* serve_cmd = app.add_subcommand("serve", "Serve live sessions over HTTP");
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--port", port, "Port, 0 for any");
    serve_cmd->add_option("--pace-ms", pace_ms, "Wall-clock milliseconds per step");
    serve_cmd->add_option("--profile", serve_profile, "Default perception profile");
    serve_cmd->add_option("--log-dir", log_dir, "Directory for finished episode logs");

    std::string parse_text;
    auto* parse_cmd = app.add_subcommand("parse", "Decompose an instruction with the reference parser");
    parse_cmd->add_option("instruction", parse_text, "Instruction text")->required();

    std::string scene_arch, scene_out;
    std::uint64_t scene_seed = 0;
    auto* gen_cmd = app.add_subcommand("scene", "Write a generated scene as scene/1 JSON");
    gen_cmd->add_option("archetype", scene_arch, "Archetype")->required();
    gen_cmd->add_option("--seed", scene_seed, "Scene seed");
    gen_cmd->add_option("--out,-o", scene_out, "Output path, stdout when empty");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitSuccess : kExitConfig;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*suite_cmd) return cmd_suite(suite_config, suite_out, false);
        if (*ablate_cmd) return cmd_suite(ablate_config, ablate_out, true);
        if (*serve_cmd) return cmd_serve(host, port, pace_ms, serve_profile, log_dir);
        if (*parse_cmd) return cmd_parse(parse_text);
        if (*gen_cmd) return cmd_scene(scene_arch, scene_seed, scene_out);
    } catch (const language::UnparsableClause& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
