#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ethinego/model.hpp"
#include "ethinego/protocol.hpp"

namespace ethinego::lab {

/// Ground-truth prediction computed by the brute-force oracle.
struct OraclePrediction {
    std::optional<std::size_t> winner;
    int rounds = 0;
};

/// Simulates the decision function directly, recomputing every impact from
/// first principles by enumerating (task, disposition, rule) triples. Shares
/// only the data types with the engine, so it independently checks it.
OraclePrediction oracle_outcome(const model::Scenario& scenario);

enum class TransportChoice { loopback, tcp };

std::string_view to_string(TransportChoice transport);

struct ScenarioRecord {
    std::string scenario_id;
    std::string context_id;
    std::string persona_a;
    std::string persona_b;
    std::string initial_sender;
    TransportChoice transport = TransportChoice::loopback;
    protocol::Result result_a = protocol::Result::no_agreement;
    protocol::Result result_b = protocol::Result::no_agreement;
    std::optional<std::string> winner;
    int rounds = 0;
    double duration_ms = 0.0;
    std::optional<std::string> oracle_winner;
    bool oracle_match = false;
    // not part of any report; kept for tests and debugging
    protocol::NegotiationOutcome outcome_a;
    protocol::NegotiationOutcome outcome_b;
    std::optional<std::string> error;
};

/// Runs the real engine `repetitions` times over the chosen transport.
/// Transport failures are recorded on the repetition's record, not thrown.
std::vector<ScenarioRecord> run_scenario(const model::Scenario& scenario, TransportChoice transport,
                                         int repetitions,
                                         std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

struct PairCell {
    std::string context_id;
    std::string persona_a;
    std::string persona_b;
    std::optional<std::string> winner;
    bool role_sensitive = false;
};

struct SuiteReport {
    std::vector<ScenarioRecord> records;
    std::size_t pair_count = 0;
    std::size_t run_count = 0;
    double agreement_rate = 0.0;
    double oracle_agreement_rate = 0.0;
    std::size_t role_sensitive_pairs = 0;
    std::vector<PairCell> matrix;
};

/// Every unordered persona pair, in every context, with both initial-sender
/// assignments, `repetitions` times each.
SuiteReport run_pairwise_suite(const std::vector<model::Persona>& personas,
                               const std::vector<model::ContextModel>& contexts, int repetitions,
                               const model::ActivationRuleSet& rules, const std::set<std::string>& tasks,
                               TransportChoice transport = TransportChoice::loopback,
                               std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

struct Workload {
    std::vector<model::Persona> personas;
    model::ActivationRuleSet rules;
    model::ContextModel context;
    std::vector<model::Task> tasks;
};

/// Random scalability workload: `count` personas over n dispositions graded
/// uniformly in 1..5, with ceil(p_fraction*n) conditions held true, each
/// condition activating exactly one disposition, all rules positive.
/// Identical seeds produce identical workloads.
Workload generate_workload(std::size_t n, double p_fraction, std::size_t count, std::uint64_t seed);

/// Two-persona scenario over a workload; `a` is the initial sender.
model::Scenario make_scenario(const Workload& workload, std::size_t a, std::size_t b, std::string id);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double mse = 0.0;
};

struct QuadraticFit {
    double a2 = 0.0;
    double a1 = 0.0;
    double a0 = 0.0;
    double r2 = 0.0;
    double mse = 0.0;
};

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);
QuadraticFit fit_quadratic(const std::vector<double>& x, const std::vector<double>& y);

struct ScalingCell {
    std::size_t n = 0;
    double p_fraction = 0.0;
    std::size_t runs = 0;
    double mean_duration_ms = 0.0;
    double p50_duration_ms = 0.0;
    double p90_duration_ms = 0.0;
    double mean_rounds = 0.0;
};

struct ScalingConfig {
    std::vector<std::size_t> n_list;
    std::vector<double> p_list;
    std::size_t count = 10;
    std::uint64_t seed = 1;
    TransportChoice transport = TransportChoice::loopback;
    std::chrono::milliseconds timeout = std::chrono::milliseconds(5000);
};

struct ScalingReport {
    std::vector<ScalingCell> cells;
    std::vector<ScenarioRecord> records;
    // per-run scatter fit; scheduler noise on shared hosts lands here
    LinearFit linear;
    QuadraticFit quadratic;
    // fit over (mean rounds, mean duration) per cell
    LinearFit cell_linear;
    QuadraticFit cell_quadratic;
};

/// For each (n, p) cell runs all count*count ordered persona pairs once
/// (self-pairs included) and fits duration against rounds over everything.
ScalingReport run_scaling(const ScalingConfig& config);

enum class ReportFormat { csv, json };

std::string records_to_csv(const std::vector<ScenarioRecord>& records);
std::string records_to_json(const std::vector<ScenarioRecord>& records);
std::vector<ScenarioRecord> records_from_json(std::string_view bytes);

void emit_report(const std::vector<ScenarioRecord>& records, const std::filesystem::path& path,
                 ReportFormat format);
void emit_report(const SuiteReport& report, const std::filesystem::path& path, ReportFormat format);
void emit_report(const ScalingReport& report, const std::filesystem::path& path, ReportFormat format);

} // namespace ethinego::lab
