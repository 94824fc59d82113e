#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "ethinego/engine.hpp"
#include "ethinego/lab.hpp"
#include "ethinego/model.hpp"
#include "ethinego/node.hpp"
#include "ethinego/protocol.hpp"
#include "ethinego/strategy.hpp"
#include "ethinego/transport.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBind = 3;

int log_level = 2; // 0=error 1=warn 2=info 3=debug

void info(const std::string& msg) {
    if (log_level >= 2) std::cerr << "[info] " << msg << "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ethinego::Error("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string format_ms(double ms) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(3);
    out << ms;
    return out.str();
}

ethinego::lab::TransportChoice parse_transport(const std::string& text) {
    if (text == "loopback") return ethinego::lab::TransportChoice::loopback;
    if (text == "tcp") return ethinego::lab::TransportChoice::tcp;
    throw CLI::ValidationError("--transport", "must be loopback or tcp");
}

ethinego::lab::ReportFormat parse_format(const std::string& text) {
    if (text == "csv") return ethinego::lab::ReportFormat::csv;
    if (text == "json") return ethinego::lab::ReportFormat::json;
    throw CLI::ValidationError("--format", "must be csv or json");
}

volatile std::sig_atomic_t interrupted = 0;

void on_signal(int) {
    interrupted = 1;
}

// ---------------------------------------------------------------------------

int cmd_node(const std::string& agent_id, const std::string& http_bind, const std::string& peer_bind,
             int timeout_ms, std::size_t disclosure_step, const std::string& fallback) {
    ethinego::node::AgentConfig config;
    config.agent_id = agent_id;
    config.http_bind = http_bind;
    config.peer_bind = peer_bind;
    config.timeout_ms = timeout_ms;
    config.disclosure_step = disclosure_step;
    if (fallback == "initiator_wins") {
        config.fallback = ethinego::node::FallbackPolicy::initiator_wins;
    } else if (fallback == "none") {
        config.fallback = ethinego::node::FallbackPolicy::none;
    } else {
        std::cerr << "error: --fallback must be initiator_wins or none\n";
        return kExitUsage;
    }

    std::unique_ptr<ethinego::node::AgentNode> node;
    try {
        node = std::make_unique<ethinego::node::AgentNode>(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        node->start();
    } catch (const ethinego::transport::BindError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBind;
    } catch (const ethinego::transport::TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBind;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "agent " << config.agent_id << " serving http=" << config.http_bind << " (port "
              << node->http_port() << ") peer=" << config.peer_bind << " (port " << node->peer_port()
              << ")" << std::endl;
    while (!interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    info("shutting down");
    node->stop();
    return kExitOk;
}

int cmd_run(const std::string& scenario_path, const std::string& transport_name, int reps,
            const std::string& out_path, const std::string& format_name, int timeout_ms,
            bool perturb_oracle) {
    ethinego::model::Scenario scenario;
    try {
        scenario = ethinego::model::parse_scenario(read_file(scenario_path));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (scenario.id.empty()) scenario.id = scenario_path;

    std::vector<ethinego::lab::ScenarioRecord> records;
    try {
        records = ethinego::lab::run_scenario(scenario, parse_transport(transport_name), reps,
                                              std::chrono::milliseconds(timeout_ms));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (perturb_oracle) {
        for (auto& record : records) {
            record.oracle_winner = "__perturbed__";
            record.oracle_match = false;
        }
    }

    bool all_match = true;
    for (const auto& record : records) {
        all_match = all_match && record.oracle_match;
        std::cout << "winner=" << (record.winner ? *record.winner : "none")
                  << " rounds=" << record.rounds << " duration_ms=" << format_ms(record.duration_ms)
                  << " oracle=" << (record.oracle_match ? "ok" : "MISMATCH") << "\n";
    }
    if (scenario.expected) {
        auto expected = scenario.expected->winner;
        for (const auto& record : records) {
            if (record.winner != expected) {
                std::cout << "expected winner=" << (expected ? *expected : "none")
                          << " but observed " << (record.winner ? *record.winner : "none") << "\n";
                all_match = false;
            }
            if (scenario.expected->rounds && record.rounds != *scenario.expected->rounds) {
                std::cout << "expected rounds=" << *scenario.expected->rounds << " but observed "
                          << record.rounds << "\n";
                all_match = false;
            }
        }
    }
    if (!out_path.empty()) {
        try {
            ethinego::lab::emit_report(records, out_path, parse_format(format_name));
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitUsage;
        }
    }
    return all_match ? kExitOk : kExitFailure;
}

int cmd_bench(const std::vector<std::size_t>& n_list, const std::vector<int>& p_list,
              std::size_t count, std::uint64_t seed, const std::string& transport_name,
              const std::string& out_path, const std::string& format_name, int timeout_ms) {
    ethinego::lab::ScalingConfig config;
    config.n_list = n_list;
    for (int p : p_list) {
        if (p < 1 || p > 100) {
            std::cerr << "error: --p-list entries must be percentages in 1..100\n";
            return kExitUsage;
        }
        config.p_list.push_back(static_cast<double>(p) / 100.0);
    }
    config.count = count;
    config.seed = seed;
    config.transport = parse_transport(transport_name);
    config.timeout = std::chrono::milliseconds(timeout_ms);

    ethinego::lab::ScalingReport report = ethinego::lab::run_scaling(config);
    for (const auto& cell : report.cells) {
        std::cout << "cell n=" << cell.n << " p=" << static_cast<int>(cell.p_fraction * 100)
                  << "% runs=" << cell.runs << " mean_rounds=" << format_ms(cell.mean_rounds)
                  << " mean_duration_ms=" << format_ms(cell.mean_duration_ms)
                  << " p50=" << format_ms(cell.p50_duration_ms)
                  << " p90=" << format_ms(cell.p90_duration_ms) << "\n";
    }
    std::cout << "linear fit: duration_ms = " << report.linear.slope << "*rounds + "
              << report.linear.intercept << " (R2=" << report.linear.r2
              << ", mse=" << report.linear.mse << ")\n";
    std::cout << "quadratic fit: duration_ms = " << report.quadratic.a2 << "*rounds^2 + "
              << report.quadratic.a1 << "*rounds + " << report.quadratic.a0
              << " (R2=" << report.quadratic.r2 << ", mse=" << report.quadratic.mse << ")\n";
    std::cout << "cell-mean linear fit: duration_ms = " << report.cell_linear.slope << "*rounds + "
              << report.cell_linear.intercept << " (R2=" << report.cell_linear.r2
              << ", mse=" << report.cell_linear.mse << ")\n";
    if (!out_path.empty()) {
        try {
            ethinego::lab::emit_report(report, out_path, parse_format(format_name));
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitUsage;
        }
    }
    return kExitOk;
}

int cmd_negotiate(const std::string& listen_addr, const std::string& connect_addr,
                  const std::string& persona_path, const std::string& context_path,
                  const std::string& rules_path, const std::vector<std::string>& tasks,
                  int timeout_ms) {
    ethinego::model::Persona persona;
    ethinego::model::ContextModel context;
    ethinego::model::ActivationRuleSet rules;
    try {
        persona = ethinego::model::parse_persona(read_file(persona_path));
        context = ethinego::model::parse_context(read_file(context_path));
        rules = ethinego::model::parse_rules(read_file(rules_path));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const auto& active = ethinego::engine::select_active_profile(persona.profile, context);
        auto offers = ethinego::strategy::generate_offer_set(
            std::set<std::string>(tasks.begin(), tasks.end()), persona.status, active, rules);
        std::chrono::milliseconds timeout(timeout_ms);
        std::shared_ptr<ethinego::transport::Endpoint> endpoint;
        ethinego::protocol::StartRole role;
        if (!connect_addr.empty()) {
            endpoint = ethinego::transport::tcp_connect(
                ethinego::transport::TcpAddress::parse(connect_addr), persona.name, tasks, timeout);
            role = ethinego::protocol::StartRole::initiator_sender;
        } else {
            ethinego::transport::TcpListener listener(
                ethinego::transport::TcpAddress::parse(listen_addr));
            info("listening on port " + std::to_string(listener.port()));
            auto incoming = listener.accept(timeout);
            if (!incoming) {
                std::cerr << "error: no peer connected within the timeout\n";
                return kExitFailure;
            }
            endpoint = incoming->complete(persona.name, tasks);
            role = ethinego::protocol::StartRole::responder_receiver;
        }
        auto outcome = ethinego::protocol::negotiate(role, std::move(offers), active, rules,
                                                     *endpoint, timeout);
        std::cout << ethinego::node::to_json_string(outcome) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_validate(const std::string& file, const std::string& kind, const std::string& rules_path,
                 const std::vector<std::string>& context_paths) {
    using ethinego::model::DocumentKind;
    DocumentKind doc_kind;
    if (kind == "persona") {
        doc_kind = DocumentKind::persona;
    } else if (kind == "context") {
        doc_kind = DocumentKind::context;
    } else if (kind == "rules") {
        doc_kind = DocumentKind::rules;
    } else if (kind == "scenario") {
        doc_kind = DocumentKind::scenario;
    } else {
        std::cerr << "error: --kind must be persona, context, rules, or scenario\n";
        return kExitUsage;
    }
    try {
        std::string bytes = read_file(file);
        if (doc_kind == DocumentKind::persona) {
            ethinego::model::ActivationRuleSet rules;
            std::vector<ethinego::model::ContextModel> contexts;
            if (!rules_path.empty()) rules = ethinego::model::parse_rules(read_file(rules_path));
            for (const auto& path : context_paths)
                contexts.push_back(ethinego::model::parse_context(read_file(path)));
            auto persona = ethinego::model::parse_persona(bytes);
            auto findings = ethinego::model::validate_persona(persona, rules, contexts);
            for (const auto& f : findings) std::cout << f.field << ": " << f.message << "\n";
            if (findings.empty()) std::cout << "ok\n";
            return findings.empty() ? kExitOk : kExitFailure;
        }
        ethinego::model::parse_document(bytes, doc_kind);
        std::cout << "ok\n";
        return kExitOk;
    } catch (const ethinego::model::ParseError& e) {
        if (e.kind() == ethinego::model::ParseErrorKind::invariant) {
            std::cout << e.what() << "\n";
            return kExitFailure;
        }
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"context-aware ethics-based bilateral negotiation engine and lab"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::string log_level_name = "info";
    int timeout_ms = 5000;
    app.add_option("--log-level", log_level_name, "error, warn, info, or debug")
        ->capture_default_str();
    app.add_option("--timeout-ms", timeout_ms, "message-wait timeout in milliseconds")
        ->envname("ETHINEGO_TIMEOUT_MS")
        ->capture_default_str();

    // node
    auto* node_cmd = app.add_subcommand("node", "run a long-lived agent node");
    std::string agent_id = "agent";
    std::string http_bind = "127.0.0.1:8080";
    std::string peer_bind = "127.0.0.1:9090";
    std::size_t disclosure_step = 1;
    std::string fallback = "initiator_wins";
    node_cmd->add_option("--agent-id", agent_id, "agent identifier used in handshakes")
        ->capture_default_str();
    node_cmd->add_option("--http", http_bind, "HTTP bind address host:port")
        ->envname("ETHINEGO_HTTP_BIND")
        ->capture_default_str();
    node_cmd->add_option("--peer", peer_bind, "peer negotiation bind address host:port")
        ->envname("ETHINEGO_PEER_BIND")
        ->capture_default_str();
    node_cmd->add_option("--disclosure-step", disclosure_step, "conditions disclosed per round")
        ->capture_default_str();
    node_cmd->add_option("--fallback", fallback, "no-agreement policy: initiator_wins or none")
        ->capture_default_str();

    // run
    auto* run_cmd = app.add_subcommand("run", "run a scenario file against the oracle");
    std::string scenario_path;
    std::string run_transport = "loopback";
    int reps = 1;
    std::string run_out;
    std::string run_format = "csv";
    bool perturb_oracle = false;
    run_cmd->add_option("scenario", scenario_path, "scenario JSON file")->required();
    run_cmd->add_option("--transport", run_transport, "loopback or tcp")->capture_default_str();
    run_cmd->add_option("--reps", reps, "repetitions")->capture_default_str();
    run_cmd->add_option("--out", run_out, "report file path");
    run_cmd->add_option("--format", run_format, "csv or json")->capture_default_str();
    run_cmd->add_flag("--perturb-oracle", perturb_oracle, "test hook: falsify the oracle prediction")
        ->group("");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "scalability benchmark over generated workloads");
    std::vector<std::size_t> n_list = {25, 50, 100};
    std::vector<int> p_list = {10, 25, 50, 75, 100};
    std::size_t count = 10;
    std::uint64_t seed = 1;
    std::string bench_transport = "loopback";
    std::string bench_out;
    std::string bench_format = "csv";
    bench_cmd->add_option("--n-list", n_list, "disposition counts")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--p-list", p_list, "active-condition percentages")
        ->delimiter(',')
        ->capture_default_str();
    bench_cmd->add_option("--count", count, "personas per cell")->capture_default_str();
    bench_cmd->add_option("--seed", seed, "workload seed")->capture_default_str();
    bench_cmd->add_option("--transport", bench_transport, "loopback or tcp")->capture_default_str();
    bench_cmd->add_option("--out", bench_out, "report file path");
    bench_cmd->add_option("--format", bench_format, "csv or json")->capture_default_str();

    // negotiate
    auto* neg_cmd = app.add_subcommand("negotiate", "run one ad-hoc negotiation over TCP");
    std::string listen_addr;
    std::string connect_addr;
    std::string persona_path;
    std::string context_path;
    std::string rules_path;
    std::vector<std::string> tasks;
    auto* listen_opt = neg_cmd->add_option("--listen", listen_addr, "bind address to await a peer");
    auto* connect_opt = neg_cmd->add_option("--connect", connect_addr, "peer address to connect to");
    listen_opt->excludes(connect_opt);
    neg_cmd->add_option("--persona", persona_path, "persona JSON file")->required();
    neg_cmd->add_option("--context", context_path, "context JSON file")->required();
    neg_cmd->add_option("--rules", rules_path, "rules JSON file")->required();
    neg_cmd->add_option("--tasks", tasks, "contended task ids")->delimiter(',')->required();

    // validate
    auto* val_cmd = app.add_subcommand("validate", "validate a document file");
    std::string val_file;
    std::string val_kind = "persona";
    std::string val_rules;
    std::vector<std::string> val_contexts;
    val_cmd->add_option("file", val_file, "document to validate")->required();
    val_cmd->add_option("--kind", val_kind, "persona, context, rules, or scenario")
        ->capture_default_str();
    val_cmd->add_option("--rules", val_rules, "rules file checked against a persona");
    val_cmd->add_option("--contexts", val_contexts, "context files checked alongside")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitUsage;
    }

    if (log_level_name == "error") {
        log_level = 0;
    } else if (log_level_name == "warn") {
        log_level = 1;
    } else if (log_level_name == "info") {
        log_level = 2;
    } else if (log_level_name == "debug") {
        log_level = 3;
    } else {
        std::cerr << "error: unknown log level " << log_level_name << "\n";
        return kExitUsage;
    }

    try {
        if (node_cmd->parsed())
            return cmd_node(agent_id, http_bind, peer_bind, timeout_ms, disclosure_step, fallback);
        if (run_cmd->parsed())
            return cmd_run(scenario_path, run_transport, reps, run_out, run_format, timeout_ms,
                           perturb_oracle);
        if (bench_cmd->parsed())
            return cmd_bench(n_list, p_list, count, seed, bench_transport, bench_out, bench_format,
                             timeout_ms);
        if (neg_cmd->parsed()) {
            if (listen_addr.empty() && connect_addr.empty()) {
                std::cerr << "error: negotiate needs --listen or --connect\n";
                return kExitUsage;
            }
            return cmd_negotiate(listen_addr, connect_addr, persona_path, context_path, rules_path,
                                 tasks, timeout_ms);
        }
        if (val_cmd->parsed()) return cmd_validate(val_file, val_kind, val_rules, val_contexts);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
