#pragma once

#include <map>
#include <set>
#include <string>

#include "ethinego/model.hpp"

namespace ethinego::engine {

/// Signed impact of one task, with the contribution of each implicated
/// disposition. `total` is the sum of the per-disposition values.
struct ImpactBreakdown {
    int total = 0;
    std::map<std::string, int> per_disposition;

    bool operator==(const ImpactBreakdown&) const = default;
};

class NoProfileForContextError : public Error {
public:
    explicit NoProfileForContextError(const std::string& context_id)
        : Error("no profile for context " + context_id), context_id_(context_id) {}
    const std::string& context_id() const { return context_id_; }

private:
    std::string context_id_;
};

class EmptyOfferError : public Error {
public:
    EmptyOfferError() : Error("the empty offer has no ethical impact") {}
};

class TaskSetMismatchError : public Error {
public:
    using Error::Error;
};

/// Picks the grades that apply in the given context. Throws
/// NoProfileForContextError when the profile has no entry for it, which
/// signals that the agent cannot negotiate here.
const model::ContextProfile& select_active_profile(const model::EthicalProfile& profile,
                                                   const model::ContextModel& context);

/// Dispositions touched by the task: activated by at least one of the given
/// (true) conditions and graded in the active context. N/A dispositions are
/// excluded.
std::set<std::string> ethical_implication(const std::string& task_id,
                                          const model::ContextProfile& active,
                                          const model::ActivationRuleSet& rules,
                                          const std::set<std::string>& conditions);

/// Signed sum of ranks over the task's implicated dispositions. A disposition
/// counts positive if any of its activating rules is positive, negative only
/// if all of them are.
ImpactBreakdown task_ethical_impact(const std::string& task_id,
                                    const model::ContextProfile& active,
                                    const model::ActivationRuleSet& rules,
                                    const std::set<std::string>& conditions);

/// Sum of task impacts over the offer's task set, under the offer's disclosed
/// conditions. Throws EmptyOfferError for the empty offer.
int offer_ethical_impact(const model::Offer& offer, const model::ContextProfile& active,
                         const model::ActivationRuleSet& rules);

/// Receiver-side utility: impact of the received offer minus impact of the
/// receiver's own baseline offer, both under the receiver's profile and
/// rules. The two offers must share the same task set.
int utility(const model::Offer& received, const model::Offer& baseline,
            const model::ContextProfile& active, const model::ActivationRuleSet& rules);

} // namespace ethinego::engine
