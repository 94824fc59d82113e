#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "ethinego/model.hpp"
#include "ethinego/strategy.hpp"
#include "ethinego/transport.hpp"

namespace ethinego::protocol {

enum class Role { sender, receiver };
enum class Result { winner, loser, no_agreement };

std::string_view to_string(Result result);

/// Per-party negotiation state. `index` is the index of this party's own
/// next offer; it starts at 1 for both start roles and advances (clamped at
/// |offers|+1) each time one of our offers or empties gets rejected.
struct NegotiationState {
    strategy::OfferSet offer_set;
    std::size_t index = 1;
    std::optional<model::Offer> last_received;
    Role role = Role::sender;
    std::string session_id;
};

enum class ActionKind { accept, counter_offer, empty_offer, quit };

struct Action {
    ActionKind kind = ActionKind::quit;
    std::optional<model::Offer> offer;
};

/// The receiver's decision over a just-received offer:
/// accept when the offer is concrete and its utility is strictly positive;
/// otherwise counter with our next offer while we still have one; otherwise
/// keep the session alive with the empty offer unless the received offer was
/// itself empty, in which case quit.
Action decide(const model::Offer& received, const NegotiationState& state,
              const model::ContextProfile& active, const model::ActivationRuleSet& rules);

enum class Direction { sent, received, marker };

struct TranscriptEntry {
    Direction direction = Direction::marker;
    transport::NegotiationMessage message;
    std::string note;

    bool operator==(const TranscriptEntry&) const = default;
};

struct NegotiationOutcome {
    Result result = Result::no_agreement;
    int rounds = 0;
    std::vector<TranscriptEntry> transcript;
    double duration_ms = 0.0;
    bool timed_out = false;
    std::optional<std::string> fallback_user;
    std::string session_id;
};

struct PartyDeps {
    const model::ContextProfile& active;
    const model::ActivationRuleSet& rules;
    std::chrono::milliseconds timeout{5000};
};

/// Runs the session starting with a sender move (Algorithm-1 entry).
NegotiationOutcome run_sender(NegotiationState state, transport::Endpoint& transport,
                              const PartyDeps& deps);

/// Runs the session starting by awaiting the peer's offer (Algorithm-2
/// entry).
NegotiationOutcome run_receiver(NegotiationState state, transport::Endpoint& transport,
                                const PartyDeps& deps);

enum class StartRole { initiator_sender, responder_receiver };

/// Drives a full negotiation over a connected transport. A receive timeout
/// ends the session as no_agreement with a TIMEOUT marker in the transcript.
NegotiationOutcome negotiate(StartRole role, strategy::OfferSet offer_set,
                             const model::ContextProfile& active,
                             const model::ActivationRuleSet& rules,
                             transport::Endpoint& transport, std::chrono::milliseconds timeout);

} // namespace ethinego::protocol
