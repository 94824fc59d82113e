#include "ethinego/strategy.hpp"

#include <algorithm>

namespace ethinego::strategy {

std::vector<std::string> order_conditions(const model::UserStatus& status,
                                          const model::ContextProfile& active,
                                          const model::ActivationRuleSet& rules,
                                          const std::set<std::string>& tasks) {
    struct Keyed {
        std::string name;
        int key = 0;
    };
    std::vector<Keyed> keyed;
    for (const auto& [name, holds] : status.conditions) {
        if (!holds) continue;
        int key = 0;
        for (const auto& r : rules.rules()) {
            if (r.condition_name != name) continue;
            if (!tasks.count(r.task_id)) continue;
            if (auto rank = active.rank(r.disposition_id)) key = std::max(key, *rank);
        }
        keyed.push_back({name, key});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key > b.key;
        return a.name < b.name;
    });
    std::vector<std::string> out;
    out.reserve(keyed.size());
    for (auto& k : keyed) out.push_back(std::move(k.name));
    return out;
}

OfferSet generate_offer_set(const std::set<std::string>& tasks, const model::UserStatus& status,
                            const model::ContextProfile& active, const model::ActivationRuleSet& rules,
                            const std::optional<std::vector<std::string>>& order_override,
                            std::size_t disclosure_step) {
    if (tasks.empty()) throw Error("generate_offer_set: task set must be nonempty");
    if (disclosure_step < 1) throw Error("generate_offer_set: disclosure_step must be >= 1");

    std::vector<std::string> order = order_conditions(status, active, rules, tasks);
    if (order_override) {
        std::set<std::string> held = status.true_conditions();
        std::set<std::string> used;
        std::vector<std::string> merged;
        for (const auto& cond : *order_override) {
            if (!held.count(cond))
                throw UnknownOverrideConditionError("order override names condition \"" + cond +
                                                    "\" which does not hold in the status");
            if (!used.insert(cond).second)
                throw UnknownOverrideConditionError("order override repeats condition \"" + cond + "\"");
            merged.push_back(cond);
        }
        for (const auto& cond : order) {
            if (!used.count(cond)) merged.push_back(cond);
        }
        order = std::move(merged);
    }

    OfferSet set;
    std::set<std::string> disclosed;
    std::size_t covered = 0;
    while (covered < order.size()) {
        std::size_t next = std::min(covered + disclosure_step, order.size());
        for (std::size_t k = covered; k < next; ++k) disclosed.insert(order[k]);
        covered = next;
        set.offers.push_back(model::Offer::concrete(tasks, disclosed));
    }
    set.baseline = model::Offer::concrete(tasks, disclosed);
    return set;
}

} // namespace ethinego::strategy
