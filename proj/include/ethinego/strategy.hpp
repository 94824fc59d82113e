#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ethinego/model.hpp"

namespace ethinego::strategy {

/// The nested offer sequence a party discloses during negotiation, plus the
/// full-status baseline it scores received offers against.
struct OfferSet {
    std::vector<model::Offer> offers;
    model::Offer baseline;

    std::size_t size() const { return offers.size(); }

    bool operator==(const OfferSet&) const = default;
};

class UnknownOverrideConditionError : public Error {
public:
    using Error::Error;
};

/// Orders the status conditions that hold, highest activated grade first.
/// The key of a condition is the largest rank among the in-context
/// dispositions it activates for any of the given tasks (0 when it activates
/// none); ties break by ascending condition name.
std::vector<std::string> order_conditions(const model::UserStatus& status,
                                          const model::ContextProfile& active,
                                          const model::ActivationRuleSet& rules,
                                          const std::set<std::string>& tasks);

/// Builds the minimalist gradual-disclosure offer set: offer i discloses the
/// first i ordered conditions (in steps of `disclosure_step`), and the
/// baseline discloses every condition that holds. An explicit override
/// replaces the computed order; conditions it omits keep their computed
/// order at the tail.
OfferSet generate_offer_set(const std::set<std::string>& tasks, const model::UserStatus& status,
                            const model::ContextProfile& active, const model::ActivationRuleSet& rules,
                            const std::optional<std::vector<std::string>>& order_override = std::nullopt,
                            std::size_t disclosure_step = 1);

} // namespace ethinego::strategy
