#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

// Exit-code and wiring tests for the ethinego binary; everything runs the
// real executable.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>
#include <sys/wait.h>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "ethinego/transport.hpp"
#include "helpers.hpp"

using namespace std::chrono_literals;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    std::string command = std::string(ETHINEGO_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    char chunk[512];
    while (std::fgets(chunk, sizeof chunk, pipe)) result.output += chunk;
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::uint16_t free_port() {
    ethinego::transport::TcpListener probe({"127.0.0.1", 0});
    std::uint16_t port = probe.port();
    probe.close();
    return port;
}

struct NodeProcess {
    pid_t pid = -1;
    std::uint16_t http_port = 0;
    std::uint16_t peer_port = 0;

    void stop(int signal = SIGTERM) {
        if (pid > 0) {
            kill(pid, signal);
            int status = 0;
            waitpid(pid, &status, 0);
            pid = -1;
        }
    }
    int wait_exit() {
        int status = 0;
        waitpid(pid, &status, 0);
        pid = -1;
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    ~NodeProcess() { stop(SIGKILL); }
};

NodeProcess spawn_node(const std::string& agent_id, int timeout_ms = 2000,
                       bool bind_via_env = false) {
    NodeProcess node;
    node.http_port = free_port();
    node.peer_port = free_port();
    std::string http = "127.0.0.1:" + std::to_string(node.http_port);
    std::string peer = "127.0.0.1:" + std::to_string(node.peer_port);
    std::string timeout = std::to_string(timeout_ms);
    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        if (!std::freopen("/dev/null", "w", stdout)) _exit(126);
        if (bind_via_env) {
            setenv("ETHINEGO_HTTP_BIND", http.c_str(), 1);
            setenv("ETHINEGO_PEER_BIND", peer.c_str(), 1);
            setenv("ETHINEGO_TIMEOUT_MS", timeout.c_str(), 1);
            execl(ETHINEGO_CLI_PATH, ETHINEGO_CLI_PATH, "node", "--agent-id", agent_id.c_str(),
                  static_cast<char*>(nullptr));
        } else {
            execl(ETHINEGO_CLI_PATH, ETHINEGO_CLI_PATH, "node", "--agent-id", agent_id.c_str(),
                  "--http", http.c_str(), "--peer", peer.c_str(), "--timeout-ms", timeout.c_str(),
                  static_cast<char*>(nullptr));
        }
        _exit(127);
    }
    node.pid = pid;
    return node;
}

bool wait_ready(std::uint16_t port, int attempts = 50) {
    for (int i = 0; i < attempts; ++i) {
        httplib::Client client("127.0.0.1", port);
        client.set_connection_timeout(0, 200000);
        if (auto res = client.Get("/state"); res && res->status == 200) return true;
        std::this_thread::sleep_for(100ms);
    }
    return false;
}

} // namespace

TEST_CASE("run exits 0 on the airport fixture and prints the summary line") {
    auto result = run_cli("run " + testutil::fixture_path("scenario_airport.json") + " --reps 2");
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("winner=Bob rounds=2") != std::string::npos);
}

TEST_CASE("run exits 0 on every checked-in scenario fixture") {
    for (const char* name : {"scenario_airport.json", "scenario_hospital.json"}) {
        auto result = run_cli("run " + testutil::fixture_path(name));
        CHECK_MESSAGE(result.exit_code == 0, name, ": ", result.output);
    }
}

TEST_CASE("a perturbed oracle is an observable failure") {
    auto result =
        run_cli("run " + testutil::fixture_path("scenario_airport.json") + " --perturb-oracle");
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("MISMATCH") != std::string::npos);
}

TEST_CASE("run exits 2 on unreadable or corrupt scenario files") {
    CHECK(run_cli("run /nonexistent/scenario.json").exit_code == 2);
    auto path = std::filesystem::temp_directory_path() / "corrupt_scenario.json";
    std::ofstream(path) << "{\"context\": 12";
    CHECK(run_cli("run " + path.string()).exit_code == 2);
    std::filesystem::remove(path);
}

TEST_CASE("run writes the report file") {
    auto path = std::filesystem::temp_directory_path() / "cli_run_report.csv";
    auto result = run_cli("run " + testutil::fixture_path("scenario_airport.json") + " --reps 3 --out " +
                          path.string());
    CHECK(result.exit_code == 0);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("scenario_id,", 0) == 0);
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
    CHECK(rows == 3);
    std::filesystem::remove(path);
}

TEST_CASE("bench runs a small grid and prints the fits") {
    auto path = std::filesystem::temp_directory_path() / "cli_bench.json";
    auto result = run_cli("bench --n-list 4,6 --p-list 50,100 --count 2 --seed 7 --out " +
                          path.string() + " --format json");
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("linear fit:") != std::string::npos);
    CHECK(result.output.find("cell n=4 p=50%") != std::string::npos);
    auto report = nlohmann::json::parse(std::ifstream(path));
    CHECK(report.at("cells").size() == 4);
    CHECK(report.at("records").size() == 16);
    std::filesystem::remove(path);

    CHECK(run_cli("bench --p-list 0").exit_code == 2);
    CHECK(run_cli("bench --no-such-flag").exit_code == 2);
}

TEST_CASE("bench rounds are reproducible under a fixed seed") {
    auto once = run_cli("bench --n-list 5 --p-list 100 --count 2 --seed 11");
    auto twice = run_cli("bench --n-list 5 --p-list 100 --count 2 --seed 11");
    auto rounds_of = [](const std::string& output) {
        auto pos = output.find("mean_rounds=");
        REQUIRE(pos != std::string::npos);
        return output.substr(pos, output.find(' ', pos) - pos);
    };
    CHECK(rounds_of(once.output) == rounds_of(twice.output));
}

TEST_CASE("validate reports findings and clean documents") {
    CHECK(run_cli("validate " + testutil::fixture_path("alice_airport.json") + " --kind persona --rules " +
                  testutil::fixture_path("rules.json"))
              .exit_code == 0);
    CHECK(run_cli("validate " + testutil::fixture_path("scenario_airport.json") + " --kind scenario")
              .exit_code == 0);

    auto path = std::filesystem::temp_directory_path() / "bad_persona.json";
    std::ofstream(path) << R"({"name":"x","profile":{"dispositions":[{"id":"d_1","description":""}],
        "per_context":{"airport":{"d_1":0}}},"status":{"injured":true}})";
    auto result = run_cli("validate " + path.string() + " --kind persona");
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("rank") != std::string::npos);
    std::filesystem::remove(path);

    CHECK(run_cli("validate /nonexistent.json --kind persona").exit_code == 2);
}

TEST_CASE("negotiate runs one ad-hoc session between two processes") {
    std::uint16_t port = free_port();
    std::string common = " --context " + testutil::fixture_path("context_airport.json") + " --rules " +
                         testutil::fixture_path("rules.json") +
                         " --tasks t_4 --timeout-ms 5000 --log-level error";
    RunResult listener;
    std::thread listen_thread([&] {
        listener = run_cli("negotiate --listen 127.0.0.1:" + std::to_string(port) + " --persona " +
                           testutil::fixture_path("alice_airport.json") + common);
    });
    std::this_thread::sleep_for(300ms);
    auto connector = run_cli("negotiate --connect 127.0.0.1:" + std::to_string(port) + " --persona " +
                             testutil::fixture_path("bob_airport.json") + common);
    listen_thread.join();

    CHECK(listener.exit_code == 0);
    CHECK(connector.exit_code == 0);
    auto bob = nlohmann::json::parse(connector.output);
    auto alice = nlohmann::json::parse(listener.output);
    CHECK(bob.at("result") == "winner");
    CHECK(alice.at("result") == "loser");
}

TEST_CASE("node exits 3 when its port is taken and 2 on bad config") {
    ethinego::transport::TcpListener squatter({"127.0.0.1", 0});
    auto result = run_cli("node --http 127.0.0.1:0 --peer 127.0.0.1:" +
                          std::to_string(squatter.port()));
    CHECK(result.exit_code == 3);

    CHECK(run_cli("node --http nonsense --peer 127.0.0.1:0").exit_code == 2);
    CHECK(run_cli("node --http 127.0.0.1:0 --peer 127.0.0.1:0 --fallback bogus").exit_code == 2);
    CHECK(run_cli("node --http 127.0.0.1:0 --peer 127.0.0.1:0 --timeout-ms 0").exit_code == 2);
}

TEST_CASE("node picks its binds from the environment") {
    NodeProcess node = spawn_node("envy", 2000, true);
    REQUIRE(wait_ready(node.http_port));
    httplib::Client client("127.0.0.1", node.http_port);
    auto res = client.Get("/state");
    REQUIRE(res);
    auto state = nlohmann::json::parse(res->body);
    CHECK(state.at("agent_id") == "envy");
    node.stop();
}

TEST_CASE("SIGINT mid-negotiation shuts the node down cleanly") {
    NodeProcess node = spawn_node("alice", 1500);
    REQUIRE(wait_ready(node.http_port));

    httplib::Client client("127.0.0.1", node.http_port);
    client.set_read_timeout(10, 0);
    auto persona = testutil::load_persona("alice_airport.json");
    REQUIRE(client.Post("/ethic_profile", ethinego::model::serialize(persona.profile), "application/json")->status == 204);
    REQUIRE(client.Post("/user_status", ethinego::model::serialize(persona.status), "application/json")->status == 204);
    REQUIRE(client.Post("/context", testutil::read_fixture("context_airport.json"), "application/json")->status == 204);
    REQUIRE(client.Post("/rules", testutil::read_fixture("rules.json"), "application/json")->status == 204);

    // park a responder goal so the node is mid-session, then interrupt
    std::thread goal_thread([&] {
        httplib::Client goal_client("127.0.0.1", node.http_port);
        goal_client.set_read_timeout(10, 0);
        goal_client.Post("/goal", R"({"tasks":["t_4"],"peer":null,"role":"responder"})",
                         "application/json");
    });
    std::this_thread::sleep_for(200ms);
    kill(node.pid, SIGINT);
    int exit_code = node.wait_exit();
    goal_thread.join();
    CHECK(exit_code == 0);
}
