#include "ethinego/engine.hpp"

#include <algorithm>
#include <string_view>
#include <vector>

namespace ethinego::engine {

namespace {

// Total-only impact without the per-disposition breakdown maps; the sums
// here sit on the per-message path of every negotiation.
int task_impact_total(const std::string& task_id, const model::ContextProfile& active,
                      const model::ActivationRuleSet& rules,
                      const std::set<std::string>& conditions) {
    std::vector<std::pair<std::string_view, bool>> fired;
    for (const auto& r : rules.rules()) {
        if (r.task_id != task_id) continue;
        if (!conditions.count(r.condition_name)) continue;
        fired.emplace_back(r.disposition_id, r.polarity == model::Polarity::positive);
    }
    std::sort(fired.begin(), fired.end());
    int total = 0;
    for (std::size_t i = 0; i < fired.size();) {
        std::string_view disposition = fired[i].first;
        bool has_positive = false;
        for (; i < fired.size() && fired[i].first == disposition; ++i) {
            has_positive = has_positive || fired[i].second;
        }
        auto it = active.grades.find(disposition);
        if (it == active.grades.end()) continue;
        total += has_positive ? it->second : -it->second;
    }
    return total;
}

} // namespace

const model::ContextProfile& select_active_profile(const model::EthicalProfile& profile,
                                                   const model::ContextModel& context) {
    auto it = profile.per_context.find(context.context_id);
    if (it == profile.per_context.end()) throw NoProfileForContextError(context.context_id);
    return it->second;
}

std::set<std::string> ethical_implication(const std::string& task_id,
                                          const model::ContextProfile& active,
                                          const model::ActivationRuleSet& rules,
                                          const std::set<std::string>& conditions) {
    std::set<std::string> out;
    for (const auto& r : rules.rules()) {
        if (r.task_id != task_id) continue;
        if (!conditions.count(r.condition_name)) continue;
        if (!active.rank(r.disposition_id)) continue;
        out.insert(r.disposition_id);
    }
    return out;
}

ImpactBreakdown task_ethical_impact(const std::string& task_id,
                                    const model::ContextProfile& active,
                                    const model::ActivationRuleSet& rules,
                                    const std::set<std::string>& conditions) {
    // Per disposition: positive wins over negative when both polarities fire.
    std::map<std::string, bool> has_positive;
    for (const auto& r : rules.rules()) {
        if (r.task_id != task_id) continue;
        if (!conditions.count(r.condition_name)) continue;
        if (!active.rank(r.disposition_id)) continue;
        bool positive = r.polarity == model::Polarity::positive;
        auto [it, inserted] = has_positive.emplace(r.disposition_id, positive);
        if (!inserted) it->second = it->second || positive;
    }
    ImpactBreakdown breakdown;
    for (const auto& [disposition, positive] : has_positive) {
        int rank = *active.rank(disposition);
        int contribution = positive ? rank : -rank;
        breakdown.per_disposition[disposition] = contribution;
        breakdown.total += contribution;
    }
    return breakdown;
}

int offer_ethical_impact(const model::Offer& offer, const model::ContextProfile& active,
                         const model::ActivationRuleSet& rules) {
    if (offer.is_empty()) throw EmptyOfferError();
    int total = 0;
    for (const auto& task : offer.tasks) {
        total += task_impact_total(task, active, rules, offer.disclosed_conditions);
    }
    return total;
}

int utility(const model::Offer& received, const model::Offer& baseline,
            const model::ContextProfile& active, const model::ActivationRuleSet& rules) {
    if (received.is_empty() || baseline.is_empty())
        throw EmptyOfferError();
    if (received.tasks != baseline.tasks)
        throw TaskSetMismatchError("utility requires both offers to share the same task set");
    return offer_ethical_impact(received, active, rules) -
           offer_ethical_impact(baseline, active, rules);
}

} // namespace ethinego::engine
