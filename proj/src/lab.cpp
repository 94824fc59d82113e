#include "ethinego/lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "ethinego/engine.hpp"
#include "ethinego/strategy.hpp"
#include "ethinego/transport.hpp"

namespace ethinego::lab {

using nlohmann::json;
using protocol::Result;

std::string_view to_string(TransportChoice transport) {
    return transport == TransportChoice::loopback ? "loopback" : "tcp";
}

// ---------------------------------------------------------------------------
// Oracle: a deliberately naive re-implementation of the whole decision path.
// It never calls into engine/strategy/protocol so that it independently
// checks them; impacts are recomputed from scratch on every message.

namespace {

int naive_impact(const model::Persona& persona, const std::string& context_id,
                 const model::ActivationRuleSet& rules, const std::vector<model::Task>& tasks,
                 const std::set<std::string>& disclosed) {
    int total = 0;
    for (const auto& task : tasks) {
        for (const auto& disposition : persona.profile.dispositions) {
            bool positive = false;
            bool negative = false;
            for (const auto& rule : rules.rules()) {
                if (rule.task_id != task.id) continue;
                if (rule.disposition_id != disposition.id) continue;
                if (!disclosed.count(rule.condition_name)) continue;
                if (rule.polarity == model::Polarity::positive) {
                    positive = true;
                } else {
                    negative = true;
                }
            }
            if (!positive && !negative) continue;
            auto ctx = persona.profile.per_context.find(context_id);
            if (ctx == persona.profile.per_context.end()) continue;
            auto grade = ctx->second.grades.find(disposition.id);
            if (grade == ctx->second.grades.end()) continue;
            total += positive ? grade->second : -grade->second;
        }
    }
    return total;
}

std::vector<std::string> naive_order(const model::Persona& persona, const std::string& context_id,
                                     const model::ActivationRuleSet& rules,
                                     const std::vector<model::Task>& tasks,
                                     const std::vector<std::string>* override_order) {
    std::vector<std::string> held;
    for (const auto& [name, value] : persona.status.conditions) {
        if (value) held.push_back(name);
    }
    auto key_of = [&](const std::string& condition) {
        int key = 0;
        for (const auto& rule : rules.rules()) {
            if (rule.condition_name != condition) continue;
            bool in_tasks = false;
            for (const auto& task : tasks) {
                if (task.id == rule.task_id) in_tasks = true;
            }
            if (!in_tasks) continue;
            auto ctx = persona.profile.per_context.find(context_id);
            if (ctx == persona.profile.per_context.end()) continue;
            auto grade = ctx->second.grades.find(rule.disposition_id);
            if (grade != ctx->second.grades.end()) key = std::max(key, grade->second);
        }
        return key;
    };
    std::sort(held.begin(), held.end(), [&](const std::string& a, const std::string& b) {
        int ka = key_of(a);
        int kb = key_of(b);
        if (ka != kb) return ka > kb;
        return a < b;
    });
    if (!override_order) return held;
    std::vector<std::string> merged = *override_order;
    for (const auto& condition : held) {
        if (std::find(merged.begin(), merged.end(), condition) == merged.end())
            merged.push_back(condition);
    }
    return merged;
}

} // namespace

OraclePrediction oracle_outcome(const model::Scenario& scenario) {
    const std::string& ctx = scenario.context.context_id;
    std::vector<std::vector<std::string>> order(2);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& persona = scenario.personas[i];
        auto it = scenario.order_overrides.find(persona.name);
        const std::vector<std::string>* override_order =
            it == scenario.order_overrides.end() ? nullptr : &it->second;
        order[i] = naive_order(persona, ctx, scenario.rules, scenario.tasks, override_order);
    }
    std::size_t n[2] = {order[0].size(), order[1].size()};

    std::size_t cur = scenario.initial_sender;
    std::size_t other = 1 - cur;
    std::size_t index[2] = {1, 1};
    bool has_received[2] = {false, false};
    bool received_empty[2] = {false, false};

    const std::size_t iteration_cap = std::max(n[0], n[1]) + 2;
    for (std::size_t guard = 0; guard < 2 * iteration_cap + 4; ++guard) {
        bool concrete = false;
        std::set<std::string> disclosed;
        if (index[cur] <= n[cur]) {
            concrete = true;
            for (std::size_t k = 0; k < index[cur]; ++k) disclosed.insert(order[cur][k]);
        } else if (has_received[cur] && received_empty[cur]) {
            // quit: both parties exhausted
            return OraclePrediction{std::nullopt, static_cast<int>(std::max(n[0], n[1])) + 1};
        }
        if (concrete) {
            std::set<std::string> full;
            for (const auto& [name, value] : scenario.personas[other].status.conditions) {
                if (value) full.insert(name);
            }
            int received = naive_impact(scenario.personas[other], ctx, scenario.rules, scenario.tasks, disclosed);
            int baseline = naive_impact(scenario.personas[other], ctx, scenario.rules, scenario.tasks, full);
            if (received - baseline > 0)
                return OraclePrediction{cur, static_cast<int>(index[cur])};
        }
        has_received[other] = true;
        received_empty[other] = !concrete;
        index[cur] = std::min(index[cur] + 1, n[cur] + 1);
        std::swap(cur, other);
    }
    throw Error("oracle failed to terminate within the theoretical bound");
}

// ---------------------------------------------------------------------------
// Engine runs

namespace {

struct PartyInputs {
    const model::Persona* persona = nullptr;
    model::ContextProfile active;
    strategy::OfferSet offers;
};

PartyInputs prepare_party(const model::Scenario& scenario, std::size_t idx) {
    PartyInputs in;
    in.persona = &scenario.personas[idx];
    in.active = engine::select_active_profile(in.persona->profile, scenario.context);
    std::optional<std::vector<std::string>> override_order;
    auto it = scenario.order_overrides.find(in.persona->name);
    if (it != scenario.order_overrides.end()) override_order = it->second;
    in.offers = strategy::generate_offer_set(scenario.task_ids(), in.persona->status, in.active,
                                             scenario.rules, override_order);
    return in;
}

struct PartyRun {
    protocol::NegotiationOutcome outcome;
    double duration_ms = 0.0;
    std::optional<std::string> error;
};

PartyRun run_party(protocol::StartRole role, const PartyInputs& inputs,
                   const model::ActivationRuleSet& rules, transport::Endpoint& ep,
                   std::chrono::milliseconds timeout) {
    PartyRun run;
    auto start = std::chrono::steady_clock::now();
    try {
        run.outcome = protocol::negotiate(role, inputs.offers, inputs.active, rules, ep, timeout);
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    run.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return run;
}

ScenarioRecord execute_once(const model::Scenario& scenario, TransportChoice transport,
                            std::chrono::milliseconds timeout, const OraclePrediction& oracle) {
    const std::size_t init = scenario.initial_sender;
    const std::size_t resp = 1 - init;
    PartyInputs inputs[2] = {prepare_party(scenario, 0), prepare_party(scenario, 1)};

    PartyRun runs[2];
    if (transport == TransportChoice::loopback) {
        std::string session = scenario.id.empty() ? "loopback" : scenario.id;
        auto [ep_init, ep_resp] = transport::loopback_pair(session);
        std::thread responder([&] {
            runs[resp] = run_party(protocol::StartRole::responder_receiver, inputs[resp],
                                   scenario.rules, *ep_resp, timeout);
        });
        runs[init] = run_party(protocol::StartRole::initiator_sender, inputs[init], scenario.rules,
                               *ep_init, timeout);
        responder.join();
    } else {
        std::vector<std::string> task_list;
        for (const auto& t : scenario.tasks) task_list.push_back(t.id);
        transport::TcpListener listener(transport::TcpAddress{"127.0.0.1", 0});
        std::thread responder([&] {
            try {
                auto incoming = listener.accept(timeout);
                if (!incoming) {
                    runs[resp].error = "no incoming connection";
                    return;
                }
                auto ep = incoming->complete(scenario.personas[resp].name, task_list);
                runs[resp] = run_party(protocol::StartRole::responder_receiver, inputs[resp],
                                       scenario.rules, *ep, timeout);
            } catch (const std::exception& e) {
                runs[resp].error = e.what();
            }
        });
        try {
            auto ep = transport::tcp_connect(transport::TcpAddress{"127.0.0.1", listener.port()},
                                             scenario.personas[init].name, task_list, timeout);
            runs[init] = run_party(protocol::StartRole::initiator_sender, inputs[init],
                                   scenario.rules, *ep, timeout);
        } catch (const std::exception& e) {
            runs[init].error = e.what();
        }
        responder.join();
    }

    ScenarioRecord record;
    record.scenario_id = scenario.id;
    record.context_id = scenario.context.context_id;
    record.persona_a = scenario.personas[0].name;
    record.persona_b = scenario.personas[1].name;
    record.initial_sender = scenario.personas[init].name;
    record.transport = transport;
    record.outcome_a = runs[0].outcome;
    record.outcome_b = runs[1].outcome;
    record.result_a = runs[0].outcome.result;
    record.result_b = runs[1].outcome.result;
    if (runs[0].error) {
        record.error = runs[0].error;
    } else if (runs[1].error) {
        record.error = runs[1].error;
    }
    if (record.result_a == Result::winner) record.winner = record.persona_a;
    if (record.result_b == Result::winner) record.winner = record.persona_b;
    record.rounds = std::max(runs[0].outcome.rounds, runs[1].outcome.rounds);
    record.duration_ms = std::max(runs[0].duration_ms, runs[1].duration_ms);
    if (oracle.winner) record.oracle_winner = scenario.personas[*oracle.winner].name;
    record.oracle_match = !record.error && record.winner == record.oracle_winner &&
                          record.rounds == oracle.rounds;
    return record;
}

} // namespace

std::vector<ScenarioRecord> run_scenario(const model::Scenario& scenario, TransportChoice transport,
                                         int repetitions, std::chrono::milliseconds timeout) {
    auto findings = model::validate(scenario);
    if (!findings.empty())
        throw Error("invalid scenario " + scenario.id + ": [" + findings.front().field + "] " +
                    findings.front().message);
    OraclePrediction oracle = oracle_outcome(scenario);
    std::vector<ScenarioRecord> records;
    records.reserve(static_cast<std::size_t>(repetitions));
    for (int rep = 0; rep < repetitions; ++rep) {
        records.push_back(execute_once(scenario, transport, timeout, oracle));
    }
    return records;
}

SuiteReport run_pairwise_suite(const std::vector<model::Persona>& personas,
                               const std::vector<model::ContextModel>& contexts, int repetitions,
                               const model::ActivationRuleSet& rules, const std::set<std::string>& tasks,
                               TransportChoice transport, std::chrono::milliseconds timeout) {
    if (personas.size() < 2) throw Error("pairwise suite needs at least two personas");
    SuiteReport report;
    std::size_t agreements = 0;
    std::size_t matches = 0;
    for (const auto& context : contexts) {
        for (std::size_t i = 0; i < personas.size(); ++i) {
            for (std::size_t j = i + 1; j < personas.size(); ++j) {
                report.pair_count += 1;
                std::optional<std::string> winner_first;
                std::optional<std::string> winner_second;
                for (std::size_t sender : {std::size_t{0}, std::size_t{1}}) {
                    model::Scenario scenario;
                    scenario.id = context.context_id + "_" + personas[i].name + "_" +
                                  personas[j].name + "_s" + std::to_string(sender);
                    scenario.context = context;
                    for (const auto& t : tasks) scenario.tasks.push_back(model::Task{t, ""});
                    scenario.rules = rules;
                    scenario.personas = {personas[i], personas[j]};
                    scenario.initial_sender = sender;
                    auto records = run_scenario(scenario, transport, repetitions, timeout);
                    for (auto& record : records) {
                        if (record.winner) agreements += 1;
                        if (record.oracle_match) matches += 1;
                        if (sender == 0) {
                            winner_first = record.winner;
                        } else {
                            winner_second = record.winner;
                        }
                        report.records.push_back(std::move(record));
                    }
                }
                bool sensitive = winner_first != winner_second;
                if (sensitive) report.role_sensitive_pairs += 1;
                report.matrix.push_back(PairCell{context.context_id, personas[i].name,
                                                 personas[j].name, winner_first, sensitive});
            }
        }
    }
    report.run_count = report.records.size();
    if (report.run_count > 0) {
        report.agreement_rate = static_cast<double>(agreements) / static_cast<double>(report.run_count);
        report.oracle_agreement_rate =
            static_cast<double>(matches) / static_cast<double>(report.run_count);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Workload generation

namespace {

std::string padded(const char* prefix, std::size_t value, int width) {
    std::ostringstream out;
    out << prefix;
    std::string digits = std::to_string(value);
    for (int i = static_cast<int>(digits.size()); i < width; ++i) out << '0';
    out << digits;
    return out.str();
}

} // namespace

Workload generate_workload(std::size_t n, double p_fraction, std::size_t count, std::uint64_t seed) {
    if (n < 1) throw Error("generate_workload: n must be >= 1");
    Workload workload;
    workload.context.context_id = "bench";
    workload.context.attributes["location"] = std::string("bench");
    workload.tasks = {model::Task{"t_0", "contended task"}};

    std::vector<std::string> condition_names;
    std::vector<std::string> disposition_names;
    std::vector<model::ActivationRule> rules;
    for (std::size_t k = 1; k <= n; ++k) {
        condition_names.push_back(padded("c_", k, 3));
        disposition_names.push_back(padded("d_", k, 3));
        rules.push_back(model::ActivationRule{"t_0", condition_names.back(), disposition_names.back(),
                                              model::Polarity::positive});
    }
    workload.rules = model::ActivationRuleSet(std::move(rules));

    const auto active_count =
        std::min(n, static_cast<std::size_t>(std::ceil(p_fraction * static_cast<double>(n))));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> grade(1, 5);
    for (std::size_t u = 0; u < count; ++u) {
        model::Persona persona;
        persona.name = padded("u", u, 2);
        model::ContextProfile profile;
        profile.context_id = "bench";
        for (std::size_t k = 0; k < n; ++k) {
            persona.profile.dispositions.push_back(
                model::Disposition{disposition_names[k], "generated disposition"});
            profile.grades[disposition_names[k]] = grade(rng);
        }
        persona.profile.per_context["bench"] = std::move(profile);
        std::vector<std::size_t> order(n);
        for (std::size_t k = 0; k < n; ++k) order[k] = k;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t k = 0; k < n; ++k)
            persona.status.conditions[condition_names[k]] = false;
        for (std::size_t k = 0; k < active_count; ++k)
            persona.status.conditions[condition_names[order[k]]] = true;
        workload.personas.push_back(std::move(persona));
    }
    return workload;
}

model::Scenario make_scenario(const Workload& workload, std::size_t a, std::size_t b, std::string id) {
    model::Scenario scenario;
    scenario.id = std::move(id);
    scenario.context = workload.context;
    scenario.tasks = workload.tasks;
    scenario.rules = workload.rules;
    scenario.personas = {workload.personas.at(a), workload.personas.at(b)};
    if (a == b) scenario.personas[1].name += "_twin";
    scenario.initial_sender = 0;
    return scenario;
}

// ---------------------------------------------------------------------------
// Regression fits

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
    LinearFit fit;
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) return fit;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double dn = static_cast<double>(n);
    double denom = dn * sxx - sx * sx;
    if (denom == 0) return fit;
    fit.slope = (dn * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / dn;
    double mean = sy / dn;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = y[i] - (fit.slope * x[i] + fit.intercept);
        ss_res += e * e;
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    fit.mse = ss_res / dn;
    fit.r2 = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return fit;
}

QuadraticFit fit_quadratic(const std::vector<double>& x, const std::vector<double>& y) {
    QuadraticFit fit;
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n) return fit;
    // Normal equations for [a2 a1 a0] over powers of x.
    double s[5] = {0, 0, 0, 0, 0};
    double t[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        double xi = x[i];
        double p = 1;
        for (int k = 0; k <= 4; ++k) {
            s[k] += p;
            p *= xi;
        }
        t[0] += y[i];
        t[1] += y[i] * xi;
        t[2] += y[i] * xi * xi;
    }
    double m[3][4] = {{s[4], s[3], s[2], t[2]}, {s[3], s[2], s[1], t[1]}, {s[2], s[1], s[0], t[0]}};
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
        if (std::abs(m[pivot][col]) < 1e-12) return fit;
        std::swap(m[pivot], m[col]);
        for (int row = 0; row < 3; ++row) {
            if (row == col) continue;
            double f = m[row][col] / m[col][col];
            for (int k = col; k < 4; ++k) m[row][k] -= f * m[col][k];
        }
    }
    fit.a2 = m[0][3] / m[0][0];
    fit.a1 = m[1][3] / m[1][1];
    fit.a0 = m[2][3] / m[2][2];
    double mean = t[0] / static_cast<double>(n);
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = y[i] - (fit.a2 * x[i] * x[i] + fit.a1 * x[i] + fit.a0);
        ss_res += e * e;
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    fit.mse = ss_res / static_cast<double>(n);
    fit.r2 = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return fit;
}

ScalingReport run_scaling(const ScalingConfig& config) {
    ScalingReport report;
    for (std::size_t n : config.n_list) {
        for (double p : config.p_list) {
            std::uint64_t cell_seed =
                config.seed ^ (n * 1000003ull) ^ (static_cast<std::uint64_t>(p * 100.0) * 7919ull);
            Workload workload = generate_workload(n, p, config.count, cell_seed);
            ScalingCell cell;
            cell.n = n;
            cell.p_fraction = p;
            std::vector<double> durations;
            double rounds_sum = 0;
            for (std::size_t a = 0; a < config.count; ++a) {
                for (std::size_t b = 0; b < config.count; ++b) {
                    std::string id = "n" + std::to_string(n) + "_p" +
                                     std::to_string(static_cast<int>(p * 100)) + "_" +
                                     workload.personas[a].name + "_" + workload.personas[b].name;
                    model::Scenario scenario = make_scenario(workload, a, b, id);
                    auto records = run_scenario(scenario, config.transport, 1, config.timeout);
                    for (auto& record : records) {
                        durations.push_back(record.duration_ms);
                        rounds_sum += record.rounds;
                        // transcripts of a full grid run into hundreds of MB
                        record.outcome_a.transcript.clear();
                        record.outcome_a.transcript.shrink_to_fit();
                        record.outcome_b.transcript.clear();
                        record.outcome_b.transcript.shrink_to_fit();
                        report.records.push_back(std::move(record));
                    }
                }
            }
            cell.runs = durations.size();
            if (!durations.empty()) {
                double total = 0;
                for (double d : durations) total += d;
                cell.mean_duration_ms = total / static_cast<double>(durations.size());
                std::sort(durations.begin(), durations.end());
                cell.p50_duration_ms = durations[durations.size() / 2];
                cell.p90_duration_ms = durations[(durations.size() * 9) / 10];
                cell.mean_rounds = rounds_sum / static_cast<double>(durations.size());
            }
            report.cells.push_back(cell);
        }
    }
    std::vector<double> x, y;
    for (const auto& record : report.records) {
        x.push_back(static_cast<double>(record.rounds));
        y.push_back(record.duration_ms);
    }
    report.linear = fit_linear(x, y);
    report.quadratic = fit_quadratic(x, y);
    std::vector<double> cx, cy;
    for (const auto& cell : report.cells) {
        cx.push_back(cell.mean_rounds);
        cy.push_back(cell.mean_duration_ms);
    }
    report.cell_linear = fit_linear(cx, cy);
    report.cell_quadratic = fit_quadratic(cx, cy);
    return report;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string format_duration(double ms) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(3);
    out << ms;
    return out.str();
}

json record_to_json(const ScenarioRecord& record) {
    json j;
    j["scenario_id"] = record.scenario_id;
    j["context_id"] = record.context_id;
    j["persona_a"] = record.persona_a;
    j["persona_b"] = record.persona_b;
    j["initial_sender"] = record.initial_sender;
    j["transport"] = std::string(to_string(record.transport));
    j["result_a"] = std::string(protocol::to_string(record.result_a));
    j["result_b"] = std::string(protocol::to_string(record.result_b));
    j["winner"] = record.winner ? json(*record.winner) : json(nullptr);
    j["rounds"] = record.rounds;
    j["duration_ms"] = record.duration_ms;
    j["oracle_winner"] = record.oracle_winner ? json(*record.oracle_winner) : json(nullptr);
    j["oracle_match"] = record.oracle_match;
    return j;
}

protocol::Result result_from_string(const std::string& text) {
    if (text == "winner") return Result::winner;
    if (text == "loser") return Result::loser;
    if (text == "no_agreement") return Result::no_agreement;
    throw model::ParseError(model::ParseErrorKind::schema, "unknown result \"" + text + "\"");
}

json suite_to_json(const SuiteReport& report) {
    json j;
    j["pair_count"] = report.pair_count;
    j["run_count"] = report.run_count;
    j["agreement_rate"] = report.agreement_rate;
    j["oracle_agreement_rate"] = report.oracle_agreement_rate;
    j["role_sensitive_pairs"] = report.role_sensitive_pairs;
    json matrix = json::array();
    for (const auto& cell : report.matrix) {
        matrix.push_back(json{{"context_id", cell.context_id},
                              {"persona_a", cell.persona_a},
                              {"persona_b", cell.persona_b},
                              {"winner", cell.winner ? json(*cell.winner) : json(nullptr)},
                              {"role_sensitive", cell.role_sensitive}});
    }
    j["matrix"] = matrix;
    json records = json::array();
    for (const auto& record : report.records) records.push_back(record_to_json(record));
    j["records"] = records;
    return j;
}

json scaling_to_json(const ScalingReport& report) {
    json j;
    json cells = json::array();
    for (const auto& cell : report.cells) {
        cells.push_back(json{{"n", cell.n},
                             {"p_fraction", cell.p_fraction},
                             {"runs", cell.runs},
                             {"mean_duration_ms", cell.mean_duration_ms},
                             {"p50_duration_ms", cell.p50_duration_ms},
                             {"p90_duration_ms", cell.p90_duration_ms},
                             {"mean_rounds", cell.mean_rounds}});
    }
    j["cells"] = cells;
    j["linear_fit"] = json{{"slope", report.linear.slope},
                           {"intercept", report.linear.intercept},
                           {"r2", report.linear.r2},
                           {"mse", report.linear.mse}};
    j["quadratic_fit"] = json{{"a2", report.quadratic.a2},
                              {"a1", report.quadratic.a1},
                              {"a0", report.quadratic.a0},
                              {"r2", report.quadratic.r2},
                              {"mse", report.quadratic.mse}};
    j["cell_linear_fit"] = json{{"slope", report.cell_linear.slope},
                                {"intercept", report.cell_linear.intercept},
                                {"r2", report.cell_linear.r2},
                                {"mse", report.cell_linear.mse}};
    j["cell_quadratic_fit"] = json{{"a2", report.cell_quadratic.a2},
                                   {"a1", report.cell_quadratic.a1},
                                   {"a0", report.cell_quadratic.a0},
                                   {"r2", report.cell_quadratic.r2},
                                   {"mse", report.cell_quadratic.mse}};
    json records = json::array();
    for (const auto& record : report.records) records.push_back(record_to_json(record));
    j["records"] = records;
    return j;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw Error("write to " + path.string() + " failed");
}

} // namespace

std::string records_to_csv(const std::vector<ScenarioRecord>& records) {
    std::ostringstream out;
    out << "scenario_id,context_id,persona_a,persona_b,initial_sender,transport,result_a,result_b,"
           "winner,rounds,duration_ms,oracle_winner,oracle_match\n";
    for (const auto& record : records) {
        out << record.scenario_id << ',' << record.context_id << ',' << record.persona_a << ','
            << record.persona_b << ',' << record.initial_sender << ','
            << to_string(record.transport) << ',' << protocol::to_string(record.result_a) << ','
            << protocol::to_string(record.result_b) << ','
            << (record.winner ? *record.winner : "none") << ',' << record.rounds << ','
            << format_duration(record.duration_ms) << ','
            << (record.oracle_winner ? *record.oracle_winner : "none") << ','
            << (record.oracle_match ? "true" : "false") << '\n';
    }
    return out.str();
}

std::string records_to_json(const std::vector<ScenarioRecord>& records) {
    json out = json::array();
    for (const auto& record : records) out.push_back(record_to_json(record));
    return out.dump(2) + "\n";
}

std::vector<ScenarioRecord> records_from_json(std::string_view bytes) {
    json parsed;
    try {
        parsed = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw model::ParseError(model::ParseErrorKind::syntax, e.what(), e.byte);
    }
    if (!parsed.is_array())
        throw model::ParseError(model::ParseErrorKind::schema, "records document must be an array");
    std::vector<ScenarioRecord> records;
    for (const auto& j : parsed) {
        ScenarioRecord record;
        record.scenario_id = j.at("scenario_id").get<std::string>();
        record.context_id = j.at("context_id").get<std::string>();
        record.persona_a = j.at("persona_a").get<std::string>();
        record.persona_b = j.at("persona_b").get<std::string>();
        record.initial_sender = j.at("initial_sender").get<std::string>();
        record.transport = j.at("transport").get<std::string>() == "tcp" ? TransportChoice::tcp
                                                                         : TransportChoice::loopback;
        record.result_a = result_from_string(j.at("result_a").get<std::string>());
        record.result_b = result_from_string(j.at("result_b").get<std::string>());
        if (!j.at("winner").is_null()) record.winner = j.at("winner").get<std::string>();
        record.rounds = j.at("rounds").get<int>();
        record.duration_ms = j.at("duration_ms").get<double>();
        if (!j.at("oracle_winner").is_null())
            record.oracle_winner = j.at("oracle_winner").get<std::string>();
        record.oracle_match = j.at("oracle_match").get<bool>();
        records.push_back(std::move(record));
    }
    return records;
}

void emit_report(const std::vector<ScenarioRecord>& records, const std::filesystem::path& path,
                 ReportFormat format) {
    write_file(path, format == ReportFormat::csv ? records_to_csv(records) : records_to_json(records));
}

void emit_report(const SuiteReport& report, const std::filesystem::path& path, ReportFormat format) {
    if (format == ReportFormat::csv) {
        write_file(path, records_to_csv(report.records));
    } else {
        write_file(path, suite_to_json(report).dump(2) + "\n");
    }
}

void emit_report(const ScalingReport& report, const std::filesystem::path& path, ReportFormat format) {
    if (format == ReportFormat::csv) {
        write_file(path, records_to_csv(report.records));
    } else {
        write_file(path, scaling_to_json(report).dump(2) + "\n");
    }
}

} // namespace ethinego::lab
