#include "ethinego/protocol.hpp"

#include <algorithm>

#include "ethinego/engine.hpp"

namespace ethinego::protocol {

using transport::MessageType;
using transport::NegotiationMessage;

std::string_view to_string(Result result) {
    switch (result) {
        case Result::winner: return "winner";
        case Result::loser: return "loser";
        case Result::no_agreement: return "no_agreement";
    }
    return "?";
}

namespace {

// Same decision with the baseline impact supplied by the caller; the
// baseline never changes within a session, so the driver computes it once.
Action decide_against_baseline(const model::Offer& received, const NegotiationState& state,
                               const model::ContextProfile& active,
                               const model::ActivationRuleSet& rules, int baseline_impact) {
    if (!received.is_empty()) {
        if (received.tasks != state.offer_set.baseline.tasks)
            throw engine::TaskSetMismatchError("received offer names a different task set");
        if (engine::offer_ethical_impact(received, active, rules) - baseline_impact > 0)
            return Action{ActionKind::accept, std::nullopt};
    }
    if (state.index <= state.offer_set.offers.size())
        return Action{ActionKind::counter_offer, state.offer_set.offers[state.index - 1]};
    if (!received.is_empty()) return Action{ActionKind::empty_offer, std::nullopt};
    return Action{ActionKind::quit, std::nullopt};
}

} // namespace

Action decide(const model::Offer& received, const NegotiationState& state,
              const model::ContextProfile& active, const model::ActivationRuleSet& rules) {
    return decide_against_baseline(
        received, state, active, rules,
        engine::offer_ethical_impact(state.offer_set.baseline, active, rules));
}

namespace {

class Driver {
public:
    Driver(NegotiationState state, transport::Endpoint& transport, const PartyDeps& deps)
        : st_(std::move(state)), ep_(transport), deps_(deps) {}

    NegotiationOutcome run(Role initial) {
        start_ = std::chrono::steady_clock::now();
        baseline_impact_ =
            engine::offer_ethical_impact(st_.offer_set.baseline, deps_.active, deps_.rules);
        enum class Phase { sender_move, await_response, receive };
        Phase phase = initial == Role::sender ? Phase::sender_move : Phase::receive;
        st_.role = initial;
        try {
            for (;;) {
                switch (phase) {
                    case Phase::sender_move: {
                        st_.role = Role::sender;
                        if (st_.index <= offers().size()) {
                            const model::Offer& o = offers()[st_.index - 1];
                            send(NegotiationMessage::offer(
                                st_.session_id, st_.index,
                                {o.disclosed_conditions.begin(), o.disclosed_conditions.end()}));
                        } else if (!last_received_is_empty()) {
                            send(NegotiationMessage::empty(st_.session_id));
                        } else {
                            send(NegotiationMessage::quit(st_.session_id));
                            return finish(Result::no_agreement, exhaustion_rounds());
                        }
                        phase = Phase::await_response;
                        break;
                    }
                    case Phase::await_response: {
                        NegotiationMessage msg = receive();
                        if (msg.type == MessageType::accept)
                            return finish(Result::winner, static_cast<int>(st_.index));
                        if (msg.type != MessageType::reject)
                            throw transport::ProtocolError("expected ACCEPT or REJECT, got " +
                                                           std::string(transport::to_string(msg.type)));
                        st_.index = std::min(st_.index + 1, offers().size() + 1);
                        phase = Phase::receive;
                        break;
                    }
                    case Phase::receive: {
                        st_.role = Role::receiver;
                        const NegotiationMessage& msg = receive();
                        if (msg.type == MessageType::quit)
                            return finish(Result::no_agreement, exhaustion_rounds());
                        model::Offer received = to_offer(msg);
                        std::size_t received_index = msg.index;
                        if (msg.type == MessageType::offer)
                            largest_received_index_ = std::max(largest_received_index_, received_index);
                        st_.last_received = received;
                        Action action = decide_against_baseline(received, st_, deps_.active,
                                                                deps_.rules, baseline_impact_);
                        if (action.kind == ActionKind::accept) {
                            send(NegotiationMessage::accept(st_.session_id));
                            return finish(Result::loser, static_cast<int>(received_index));
                        }
                        send(NegotiationMessage::reject(st_.session_id));
                        phase = Phase::sender_move;
                        break;
                    }
                }
            }
        } catch (const transport::TimeoutError&) {
            transcript_.push_back(TranscriptEntry{Direction::marker, {}, "TIMEOUT"});
            NegotiationOutcome out = finish(Result::no_agreement, static_cast<int>(st_.index));
            out.timed_out = true;
            return out;
        }
    }

private:
    const std::vector<model::Offer>& offers() const { return st_.offer_set.offers; }

    bool last_received_is_empty() const {
        // `none` (nothing received yet) is distinct from the empty offer.
        return st_.last_received.has_value() && st_.last_received->is_empty();
    }

    model::Offer to_offer(const NegotiationMessage& msg) const {
        if (msg.type == MessageType::empty) return model::Offer::empty_offer();
        if (msg.type == MessageType::offer)
            return model::Offer::concrete(st_.offer_set.baseline.tasks,
                                          {msg.conditions.begin(), msg.conditions.end()});
        throw transport::ProtocolError("expected OFFER, EMPTY, or QUIT, got " +
                                       std::string(transport::to_string(msg.type)));
    }

    void send(NegotiationMessage msg) {
        NegotiationMessage sent = ep_.send(std::move(msg));
        transcript_.push_back(TranscriptEntry{Direction::sent, std::move(sent), {}});
    }

    // the returned reference lives in the transcript; it is invalidated by
    // the next send/receive
    const NegotiationMessage& receive() {
        NegotiationMessage msg = ep_.receive(deps_.timeout);
        transcript_.push_back(TranscriptEntry{Direction::received, std::move(msg), {}});
        return transcript_.back().message;
    }

    // Mutual exhaustion always ends after max(|O_A|, |O_B|) + 1 iterations;
    // the opponent's offer count equals the largest index it ever sent.
    int exhaustion_rounds() const {
        return static_cast<int>(std::max(offers().size(), largest_received_index_)) + 1;
    }

    NegotiationOutcome finish(Result result, int rounds) {
        NegotiationOutcome out;
        out.result = result;
        out.rounds = rounds;
        out.transcript = std::move(transcript_);
        out.session_id = st_.session_id;
        out.duration_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start_)
                              .count();
        return out;
    }

    NegotiationState st_;
    transport::Endpoint& ep_;
    const PartyDeps& deps_;
    std::vector<TranscriptEntry> transcript_;
    std::size_t largest_received_index_ = 0;
    int baseline_impact_ = 0;
    std::chrono::steady_clock::time_point start_;
};

} // namespace

NegotiationOutcome run_sender(NegotiationState state, transport::Endpoint& transport,
                              const PartyDeps& deps) {
    if (state.session_id.empty()) state.session_id = transport.session_id();
    return Driver(std::move(state), transport, deps).run(Role::sender);
}

NegotiationOutcome run_receiver(NegotiationState state, transport::Endpoint& transport,
                                const PartyDeps& deps) {
    if (state.session_id.empty()) state.session_id = transport.session_id();
    return Driver(std::move(state), transport, deps).run(Role::receiver);
}

NegotiationOutcome negotiate(StartRole role, strategy::OfferSet offer_set,
                             const model::ContextProfile& active,
                             const model::ActivationRuleSet& rules,
                             transport::Endpoint& transport, std::chrono::milliseconds timeout) {
    NegotiationState state;
    state.offer_set = std::move(offer_set);
    state.session_id = transport.session_id();
    PartyDeps deps{active, rules, timeout};
    return role == StartRole::initiator_sender ? run_sender(std::move(state), transport, deps)
                                               : run_receiver(std::move(state), transport, deps);
}

} // namespace ethinego::protocol
