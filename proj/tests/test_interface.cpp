#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "fixtures.hpp"
#include "uavvln/eval.hpp"
#include "uavvln/interface.hpp"
#include "uavvln/rng.hpp"

using namespace uavvln;
using namespace uavvln::interface;
using namespace std::chrono_literals;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Live {
    Service service;
    int port = 0;
    httplib::Client client;

    explicit Live(ServiceOptions o = {}) : service(std::move(o)), port(service.start("127.0.0.1", 0)), client("127.0.0.1", port) {
        client.set_read_timeout(30s);
    }

    httplib::Result post(const std::string& path, const json& body) {
        return client.Post(path, body.dump(), "application/json");
    }
    httplib::Result post(const std::string& path) { return client.Post(path, "", "application/json"); }
    json state(const std::string& id) {
        auto r = client.Get("/sessions/" + id);
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return json::parse(r->body);
    }
    std::string create(json body) {
        body["schema"] = "session_create/1";
        auto r = post("/sessions", body);
        REQUIRE(r);
        REQUIRE(r->status == 201);
        const auto doc = json::parse(r->body);
        CHECK(state_violations(doc).empty());
        return doc.at("session_id").get<std::string>();
    }
    httplib::Result instruct(const std::string& id, const std::string& text) {
        return post("/sessions/" + id + "/instruction", json{{"schema", "instruction/1"}, {"text", text}});
    }
    // Reads the SSE stream, handing each state frame to `keep_going` until it returns false.
    void stream(const std::string& id, const std::function<bool(const json&)>& keep_going) {
        httplib::Client sse("127.0.0.1", port);
        sse.set_read_timeout(30s);
        std::string buffer;
        sse.Get("/sessions/" + id + "/stream", [&](const char* data, std::size_t n) {
            buffer.append(data, n);
            for (auto end = buffer.find("\n\n"); end != std::string::npos; end = buffer.find("\n\n")) {
                const auto event = buffer.substr(0, end);
                buffer.erase(0, end + 2);
                CHECK(event.rfind("event: state\n", 0) == 0);
                const auto at = event.find("data: ");
                REQUIRE(at != std::string::npos);
                if (!keep_going(json::parse(event.substr(at + 6)))) return false;
            }
            return true;
        });
    }
    json wait_for(const std::string& id, const std::string& status) {
        for (int i = 0; i < 600; ++i) {
            auto s = state(id);
            if (s["status"] == status) return s;
            std::this_thread::sleep_for(10ms);
        }
        FAIL("session never reached " << status);
        return {};
    }
};

int exit_code(const std::string& command) {
    const int rc = std::system((command + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string cli() { return UAVVLN_CLI; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("uavvln-interface-" + std::to_string(::getpid()) + "-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& p, const json& doc) {
    std::ofstream out(p);
    out << doc.dump(2);
}

} // namespace

TEST_CASE("state frames round trip and validate") {
    SessionState s;
    s.session_id = "s1";
    s.scene_digest = "abc";
    s.status = Status::running;
    s.pose = {{1, 2, 3}, 0.5};
    s.active_subgoal = 1;
    s.plan = {"TAKEOFF(2)", "NAVIGATE_TO(fountain)"};
    s.completed_subgoals = 1;
    s.steps = 4;
    s.tick = 9;
    const auto doc = to_json(s);
    CHECK(state_violations(doc).empty());
    CHECK(to_json(state_from_json(doc)) == doc);

    auto bad = doc;
    bad["status"] = "flying";
    CHECK_FALSE(state_violations(bad).empty());
    bad = doc;
    bad.erase("pose");
    CHECK_FALSE(state_violations(bad).empty());
    bad = doc;
    bad["schema"] = "state/2";
    CHECK_FALSE(state_violations(bad).empty());
    for (const auto st : {Status::idle, Status::awaiting_instruction, Status::running, Status::paused, Status::finished})
        CHECK(status_from_string(to_string(st)) == st);
}

TEST_CASE("a live oracle session streams to a successful finish") {
    Live live;
    const auto id = live.create({{"archetype", "park"}, {"scene_seed", 0}, {"profile", "ORACLE"}, {"pace_ms", 5}});
    live.wait_for(id, "awaiting_instruction");

    std::vector<json> frames;
    std::atomic<bool> listening{false};
    std::thread reader([&] {
        live.stream(id, [&](const json& f) {
            frames.push_back(f);
            listening = true;
            return f["status"] != "finished";
        });
    });
    while (!listening) std::this_thread::sleep_for(1ms);

    auto r = live.instruct(id, "fly to the fountain");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto plan = json::parse(r->body);
    CHECK(plan["schema"] == "plan/1");
    CHECK(plan["summary"] == "TAKEOFF(2) ; NAVIGATE_TO(fountain)");
    reader.join();

    REQUIRE_FALSE(frames.empty());
    std::size_t running = frames.size(), finished = frames.size();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(state_violations(frames[i]).empty());
        if (frames[i]["status"] == "running" && running == frames.size()) running = i;
        if (frames[i]["status"] == "finished") finished = i;
        if (i > 0) CHECK(frames[i]["tick"].get<std::uint64_t>() > frames[i - 1]["tick"].get<std::uint64_t>());
    }
    CHECK(running < finished);
    REQUIRE(finished == frames.size() - 1);
    CHECK(frames.back()["outcome"] == "success");

    // The live run matches the batch episode for the same instruction and seed.
    auto log = live.client.Get("/sessions/" + id + "/log");
    REQUIRE(log);
    CHECK(log->status == 200);
    executive::PipelineConfig oracle;
    oracle.profile = perception::oracle_profile();
    // The first episode of a session with seed 0.
    const auto spec = make_episode_spec(eval::generate_scene(world::Archetype::park, 0), "fly to the fountain", oracle,
                                        SpecOptions{mix_seed(0, 0)});
    const auto batch = executive::run_episode(spec, oracle);
    CHECK(log->body == executive::to_jsonl(batch));
    CHECK(frames.back()["steps"] == batch.steps.size());
}

TEST_CASE("gibberish is rejected with the offending clause") {
    Live live;
    const auto id = live.create({{"archetype", "park"}, {"pace_ms", 0}});
    live.wait_for(id, "awaiting_instruction");
    auto r = live.instruct(id, "fly to the fountain and then do a barrel roll");
    REQUIRE(r);
    CHECK(r->status == 422);
    const auto err = json::parse(r->body);
    CHECK(err["schema"] == "error/1");
    CHECK(err["error"] == "parse_error");
    CHECK(err["clause"] == "do a barrel roll");
    const auto s = live.state(id);
    CHECK(s["status"] == "awaiting_instruction");
    CHECK(s["plan"].empty());
}

TEST_CASE("a paused session holds its pose") {
    Live live;
    const auto id = live.create({{"archetype", "park"}, {"profile", "ORACLE"}, {"pace_ms", 40}});
    live.wait_for(id, "awaiting_instruction");
    REQUIRE(live.instruct(id, "fly to the fountain")->status == 200);
    for (int i = 0; i < 500 && live.state(id)["steps"].get<int>() < 2; ++i) std::this_thread::sleep_for(5ms);

    auto r = live.post("/sessions/" + id + "/pause");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    CHECK(json::parse(r->body)["status"] == "paused");

    // Three stream ticks while paused all carry the same pose.
    std::vector<json> frames;
    live.stream(id, [&](const json& f) {
        frames.push_back(f);
        return frames.size() < 3;
    });
    REQUIRE(frames.size() == 3);
    for (const auto& f : frames) {
        CHECK(state_violations(f).empty());
        CHECK(f["status"] == "paused");
        CHECK(f["pose"] == frames.front()["pose"]);
        CHECK(f["steps"] == frames.front()["steps"]);
    }

    const auto before = live.state(id)["steps"].get<int>();
    r = live.post("/sessions/" + id + "/step", json{{"schema", "command/1"}});
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto after = json::parse(r->body);
    CHECK(after["status"] == "paused");
    CHECK(after["steps"] == before + 1);

    CHECK(live.instruct(id, "fly to the bench")->status == 409);
    CHECK(live.post("/sessions/" + id + "/pause")->status == 409);
    CHECK(live.client.Get("/sessions/" + id + "/log")->status == 409);

    r = live.post("/sessions/" + id + "/abort");
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto done = json::parse(r->body);
    CHECK(done["status"] == "finished");
    CHECK(done["outcome"] == "failure(aborted)");
    CHECK(live.post("/sessions/" + id + "/resume")->status == 409);

    r = live.post("/sessions/" + id + "/reset");
    REQUIRE(r);
    const auto fresh = json::parse(r->body);
    CHECK(fresh["status"] == "awaiting_instruction");
    CHECK(fresh["steps"] == 0);
}

TEST_CASE("malformed requests and unknown sessions") {
    Live live;
    auto r = live.post("/sessions", json{{"schema", "session_create/1"}, {"archetype", "park"}, {"colour", "red"}});
    REQUIRE(r);
    CHECK(r->status == 400);
    CHECK(json::parse(r->body)["error"] == "bad_request");
    CHECK(live.post("/sessions", json{{"archetype", "park"}})->status == 400);
    CHECK(live.post("/sessions", json{{"schema", "session_create/1"}})->status == 400);
    CHECK(live.post("/sessions", json{{"schema", "session_create/1"}, {"archetype", "moon"}})->status == 400);
    CHECK(live.post("/sessions", json{{"schema", "session_create/1"}, {"archetype", "park"}, {"profile", "X"}})->status ==
          400);
    CHECK(live.post("/sessions", json{{"schema", "session_create/1"}, {"archetype", "park"}, {"pace_ms", -1}})->status ==
          400);
    CHECK(live.client.Post("/sessions", "{not json", "application/json")->status == 400);

    CHECK(live.client.Get("/sessions/nope")->status == 404);
    CHECK(live.instruct("nope", "fly to the fountain")->status == 404);
    CHECK(live.post("/sessions/nope/pause")->status == 404);

    const auto id = live.create({{"scene", world::to_json(fixtures::car_field())}, {"pace_ms", 0}});
    live.wait_for(id, "awaiting_instruction");
    CHECK(live.post("/sessions/" + id + "/instruction", json{{"text", "fly to the red car"}})->status == 400);
    CHECK(live.post("/sessions/" + id + "/instruction", json{{"schema", "instruction/1"}, {"text", 3}})->status == 400);
    CHECK(live.post("/sessions/" + id + "/pause", json{{"schema", "command/1"}, {"now", true}})->status == 400);
    CHECK(live.post("/sessions/" + id + "/pause")->status == 409);
}

TEST_CASE("inline scenes run to completion and logs are NDJSON") {
    const auto logs = scratch_dir("logs");
    ServiceOptions o;
    o.log_dir = logs.string();
    o.pace = 0ms;
    Live live(o);
    // The car is 2 m long, so its centre is out of reach of the default radius.
    const auto id = live.create(
        {{"scene", world::to_json(fixtures::car_field())}, {"profile", "ORACLE"}, {"success_radius", 2.5}});
    live.wait_for(id, "awaiting_instruction");
    CHECK(live.client.Get("/sessions/" + id + "/log")->status == 409);
    REQUIRE(live.instruct(id, "fly to the red car")->status == 200);
    const auto s = live.wait_for(id, "finished");
    CHECK(s["outcome"] == "success");
    auto r = live.client.Get("/sessions/" + id + "/log");
    REQUIRE(r);
    CHECK(r->status == 200);
    std::istringstream lines(r->body);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const auto doc = json::parse(line);
        if (n++ == 0) CHECK(doc["schema"] == "log/1");
    }
    CHECK(n == s["steps"].get<std::size_t>() + 2);
    CHECK(slurp(logs / (id + "-1.jsonl")) == r->body);
    fs::remove_all(logs);
}

TEST_CASE("cli run exit codes") {
    const auto dir = scratch_dir("run");
    const auto out = (dir / "fountain.jsonl").string();
    CHECK(exit_code(cli() + " run --archetype park --scene-seed 0 --profile ORACLE -i 'fly to the fountain' -o " + out) ==
          0);
    CHECK(executive::log_from_jsonl(slurp(out)).outcome.label() == "success");

    CHECK(exit_code(cli() + " run --scene " + (dir / "missing.json").string() + " -i 'fly to the fountain'") == 1);
    CHECK(exit_code(cli() + " run --archetype park --profile NOPE -i 'fly to the fountain'") == 1);
    CHECK(exit_code(cli() + " bogus") == 1);

    const auto scene = dir / "fenced.json";
    world::save_scene(fixtures::fenced_statue(), scene.string());
    const auto fenced = (dir / "fenced.jsonl").string();
    CHECK(exit_code(cli() + " run --scene " + scene.string() + " --profile ORACLE -i 'fly to the statue' -o " + fenced) ==
          2);
    CHECK(executive::log_from_jsonl(slurp(fenced)).outcome.label() == "failure(unreachable)");
    fs::remove_all(dir);
}

TEST_CASE("cli suite and ablate") {
    const auto dir = scratch_dir("suite");
    const json base = {{"schema", "suite/1"},
                       {"name", "mini"},
                       {"seed", 7},
                       {"archetypes", {"park"}},
                       {"episodes_per_scene", 3},
                       {"pipeline", {{"profile", "ORACLE"}}}};
    write_json(dir / "suite.json", base);
    CHECK(exit_code(cli() + " suite " + (dir / "suite.json").string() + " --out-dir " + dir.string()) == 0);
    const auto csv = slurp(dir / "mini.csv");
    CHECK(csv.rfind("row,scene,episodes,successes,sr,spl\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const auto results = json::parse(slurp(dir / "mini.json"));
    REQUIRE(results.size() == 1);
    CHECK(results[0]["schema"] == "suite_result/1");

    auto ablate = base;
    ablate["rows"] = {{{"name", "oracle"}, {"profile", "ORACLE"}}, {{"name", "closed"}, {"profile", "CLOSED_VOCAB_80"}}};
    write_json(dir / "ablate.json", ablate);
    CHECK(exit_code(cli() + " ablate " + (dir / "ablate.json").string() + " --out-dir " + dir.string()) == 0);
    const auto rows = slurp(dir / "mini.csv");
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 5);

    auto empty = base;
    empty["rows"] = json::array();
    write_json(dir / "empty.json", empty);
    CHECK(exit_code(cli() + " ablate " + (dir / "empty.json").string() + " --out-dir " + dir.string()) == 1);
    CHECK(exit_code(cli() + " suite " + (dir / "empty.json").string() + " --out-dir " + dir.string()) == 1);
    CHECK(exit_code(cli() + " ablate " + (dir / "suite.json").string() + " --out-dir " + dir.string()) == 1);
    CHECK(exit_code(cli() + " suite " + (dir / "nowhere.json").string()) == 1);

    auto unknown = base;
    unknown["verbose"] = true;
    write_json(dir / "unknown.json", unknown);
    CHECK(exit_code(cli() + " suite " + (dir / "unknown.json").string() + " --out-dir " + dir.string()) == 1);
    fs::remove_all(dir);
}

TEST_CASE("cli parse and scene") {
    const auto dir = scratch_dir("parse");
    CHECK(exit_code(cli() + " parse 'take off, fly to the red car and land'") == 0);
    CHECK(exit_code(cli() + " parse 'do a barrel roll'") == 2);
    const auto path = dir / "park.json";
    CHECK(exit_code(cli() + " scene park --seed 3 -o " + path.string()) == 0);
    CHECK(world::to_json(world::load_scene(path.string())) == world::to_json(eval::generate_scene(world::Archetype::park, 3)));
    fs::remove_all(dir);
}
