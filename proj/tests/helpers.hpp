#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ethinego/model.hpp"

namespace testutil {

inline std::string fixture_path(const std::string& name) {
    return std::string(ETHINEGO_FIXTURE_DIR) + "/" + name;
}

inline std::string read_fixture(const std::string& name) {
    std::ifstream in(fixture_path(name), std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing fixture ", name);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline ethinego::model::Persona load_persona(const std::string& name) {
    return ethinego::model::parse_persona(read_fixture(name));
}

inline ethinego::model::ContextModel load_context(const std::string& name) {
    return ethinego::model::parse_context(read_fixture(name));
}

inline ethinego::model::ActivationRuleSet load_rules(const std::string& name) {
    return ethinego::model::parse_rules(read_fixture(name));
}

inline ethinego::model::Scenario load_scenario(const std::string& name) {
    return ethinego::model::parse_scenario(read_fixture(name));
}

// ---------------------------------------------------------------------------
// Hand-rolled generators for property-style tests. Fixed seeds keep runs
// reproducible.

struct Rng {
    std::mt19937_64 g;

    explicit Rng(std::uint64_t seed) : g(seed) {}

    int below(int n) { return static_cast<int>(g() % static_cast<std::uint64_t>(n)); }
    int between(int lo, int hi) { return lo + below(hi - lo + 1); }
    bool coin() { return (g() & 1) != 0; }
};

struct RandomSetup {
    ethinego::model::ContextProfile active;
    ethinego::model::ActivationRuleSet rules;
    ethinego::model::UserStatus status;
    std::set<std::string> tasks;
};

// Random grades, rules (condition -> disposition, many-to-many), and status.
// Some dispositions stay ungraded (N/A) and some conditions activate nothing.
inline RandomSetup make_random_setup(Rng& rng, bool positive_only) {
    RandomSetup setup;
    setup.active.context_id = "ctx";
    const int n_disp = rng.between(1, 8);
    const int n_cond = rng.between(1, 8);
    const int n_tasks = rng.between(1, 3);
    std::vector<std::string> dispositions;
    for (int i = 0; i < n_disp; ++i) {
        std::string id = "d" + std::to_string(i);
        dispositions.push_back(id);
        if (rng.below(4) != 0) setup.active.grades[id] = rng.between(1, 5);
    }
    std::vector<std::string> tasks;
    for (int i = 0; i < n_tasks; ++i) {
        tasks.push_back("t" + std::to_string(i));
        setup.tasks.insert(tasks.back());
    }
    for (int i = 0; i < n_cond; ++i) {
        std::string name = "c" + std::to_string(i);
        setup.status.conditions[name] = rng.coin();
        const int n_links = rng.below(3);
        for (int k = 0; k < n_links; ++k) {
            ethinego::model::ActivationRule rule;
            rule.task_id = tasks[static_cast<std::size_t>(rng.below(n_tasks))];
            rule.condition_name = name;
            rule.disposition_id = dispositions[static_cast<std::size_t>(rng.below(n_disp))];
            rule.polarity = positive_only || rng.coin() ? ethinego::model::Polarity::positive
                                                        : ethinego::model::Polarity::negative;
            bool duplicate = false;
            for (const auto& existing : setup.rules.rules()) {
                if (existing.task_id == rule.task_id && existing.condition_name == rule.condition_name &&
                    existing.disposition_id == rule.disposition_id)
                    duplicate = true;
            }
            if (!duplicate) setup.rules.add(rule);
        }
    }
    return setup;
}

inline ethinego::model::Persona make_random_persona(Rng& rng) {
    ethinego::model::Persona persona;
    persona.name = "persona" + std::to_string(rng.below(1000));
    const int n_disp = rng.between(1, 6);
    for (int i = 0; i < n_disp; ++i) {
        persona.profile.dispositions.push_back(
            {"d" + std::to_string(i), "disposition " + std::to_string(i)});
    }
    const int n_ctx = rng.between(1, 3);
    for (int c = 0; c < n_ctx; ++c) {
        ethinego::model::ContextProfile profile;
        profile.context_id = "ctx" + std::to_string(c);
        for (int i = 0; i < n_disp; ++i) {
            if (rng.coin()) profile.grades["d" + std::to_string(i)] = rng.between(1, 5);
        }
        persona.profile.per_context[profile.context_id] = profile;
    }
    const int n_cond = rng.between(1, 6);
    for (int i = 0; i < n_cond; ++i) {
        persona.status.conditions["c" + std::to_string(i)] = rng.coin();
    }
    return persona;
}

} // namespace testutil
