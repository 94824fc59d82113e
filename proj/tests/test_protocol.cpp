#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ethinego/protocol.hpp"

#include <thread>

#include "ethinego/engine.hpp"
#include "helpers.hpp"

using namespace ethinego;
using namespace std::chrono_literals;
using protocol::Result;
using transport::MessageType;

namespace {

struct Party {
    model::ContextProfile active;
    model::UserStatus status;
    strategy::OfferSet offers;
};

Party make_fixture_party(const std::string& persona_file, const std::string& context_file,
                         const model::ActivationRuleSet& rules, const std::set<std::string>& tasks,
                         std::optional<std::vector<std::string>> override_order = std::nullopt) {
    auto persona = testutil::load_persona(persona_file);
    auto context = testutil::load_context(context_file);
    Party party;
    party.active = engine::select_active_profile(persona.profile, context);
    party.status = persona.status;
    party.offers = strategy::generate_offer_set(tasks, party.status, party.active, rules,
                                                std::move(override_order));
    return party;
}

Party make_random_party(testutil::Rng& rng, const testutil::RandomSetup& shared) {
    Party party;
    party.active.context_id = shared.active.context_id;
    std::set<std::string> dispositions;
    for (const auto& rule : shared.rules.rules()) dispositions.insert(rule.disposition_id);
    for (const auto& d : dispositions) {
        if (rng.below(4) != 0) party.active.grades[d] = rng.between(1, 5);
    }
    for (const auto& [name, _] : shared.status.conditions) {
        party.status.conditions[name] = rng.coin();
    }
    party.offers =
        strategy::generate_offer_set(shared.tasks, party.status, party.active, shared.rules);
    return party;
}

struct PairOutcome {
    protocol::NegotiationOutcome initiator;
    protocol::NegotiationOutcome responder;
};

PairOutcome run_pair(const Party& initiator, const Party& responder,
                     const model::ActivationRuleSet& rules, const std::string& session = "init/1") {
    auto [ep_init, ep_resp] = transport::loopback_pair(session);
    PairOutcome out;
    std::thread thread([&] {
        out.responder = protocol::negotiate(protocol::StartRole::responder_receiver,
                                            responder.offers, responder.active, rules, *ep_resp,
                                            2000ms);
    });
    out.initiator = protocol::negotiate(protocol::StartRole::initiator_sender, initiator.offers,
                                        initiator.active, rules, *ep_init, 2000ms);
    thread.join();
    return out;
}

std::size_t sent_count(const protocol::NegotiationOutcome& outcome) {
    std::size_t n = 0;
    for (const auto& entry : outcome.transcript) {
        if (entry.direction == protocol::Direction::sent) ++n;
    }
    return n;
}

} // namespace

TEST_CASE("decide follows the four decision cases") {
    auto rules = testutil::load_rules("rules.json");
    Party alice = make_fixture_party("alice_airport.json", "context_airport.json", rules, {"t_4"});

    protocol::NegotiationState state;
    state.offer_set = alice.offers;
    state.index = 1;

    SUBCASE("negative utility counters with the own next offer") {
        auto received = model::Offer::concrete({"t_4"}, {"elderly"});
        auto action = protocol::decide(received, state, alice.active, rules);
        CHECK(action.kind == protocol::ActionKind::counter_offer);
        REQUIRE(action.offer.has_value());
        CHECK(action.offer->disclosed_conditions == std::set<std::string>{"injured"});
    }
    SUBCASE("positive utility accepts") {
        auto received = model::Offer::concrete({"t_4"}, {"elderly", "boarding_emergency"});
        auto action = protocol::decide(received, state, alice.active, rules);
        CHECK(action.kind == protocol::ActionKind::accept);
    }
    SUBCASE("zero utility rejects (strict inequality)") {
        auto received = model::Offer::concrete({"t_4"}, {"injured", "flight_anxiety"});
        auto action = protocol::decide(received, state, alice.active, rules);
        CHECK(action.kind != protocol::ActionKind::accept);
    }
    SUBCASE("empty offers are never accepted") {
        auto action = protocol::decide(model::Offer::empty_offer(), state, alice.active, rules);
        CHECK(action.kind == protocol::ActionKind::counter_offer);
    }
    SUBCASE("exhausted receiver keeps alive on a concrete offer") {
        state.index = alice.offers.offers.size() + 1;
        auto received = model::Offer::concrete({"t_4"}, {"elderly"});
        auto action = protocol::decide(received, state, alice.active, rules);
        CHECK(action.kind == protocol::ActionKind::empty_offer);
    }
    SUBCASE("exhausted receiver quits on the empty offer") {
        state.index = alice.offers.offers.size() + 1;
        auto action = protocol::decide(model::Offer::empty_offer(), state, alice.active, rules);
        CHECK(action.kind == protocol::ActionKind::quit);
    }
}

TEST_CASE("the airport trace reproduces the canonical exchange") {
    auto rules = testutil::load_rules("rules.json");
    Party alice = make_fixture_party("alice_airport.json", "context_airport.json", rules, {"t_4"});
    Party bob = make_fixture_party("bob_airport.json", "context_airport.json", rules, {"t_4"},
                                   std::vector<std::string>{"elderly", "boarding_emergency"});

    auto outcome = run_pair(bob, alice, rules, "Bob/1");
    CHECK(outcome.initiator.result == Result::winner);
    CHECK(outcome.responder.result == Result::loser);
    CHECK(outcome.initiator.rounds == 2);
    CHECK(outcome.responder.rounds == 2);

    const auto& t = outcome.initiator.transcript;
    REQUIRE(t.size() == 6);
    CHECK(t[0].direction == protocol::Direction::sent);
    CHECK(t[0].message.type == MessageType::offer);
    CHECK(t[0].message.conditions == std::vector<std::string>{"elderly"});
    CHECK(t[1].direction == protocol::Direction::received);
    CHECK(t[1].message.type == MessageType::reject);
    CHECK(t[2].direction == protocol::Direction::received);
    CHECK(t[2].message.type == MessageType::offer);
    CHECK(t[2].message.conditions == std::vector<std::string>{"injured"});
    CHECK(t[3].direction == protocol::Direction::sent);
    CHECK(t[3].message.type == MessageType::reject);
    CHECK(t[4].direction == protocol::Direction::sent);
    CHECK(t[4].message.type == MessageType::offer);
    CHECK(t[4].message.conditions ==
          std::vector<std::string>{"boarding_emergency", "elderly"});
    CHECK(t[4].message.index == 2);
    CHECK(t[5].direction == protocol::Direction::received);
    CHECK(t[5].message.type == MessageType::accept);
}

TEST_CASE("hospital fixture ends with alice winning") {
    auto rules = testutil::load_rules("rules.json");
    Party alice =
        make_fixture_party("alice_hospital.json", "context_hospital.json", rules, {"t_corridor"});
    Party bob =
        make_fixture_party("bob_hospital.json", "context_hospital.json", rules, {"t_corridor"});

    auto bob_starts = run_pair(bob, alice, rules, "Bob/2");
    CHECK(bob_starts.initiator.result == Result::loser);
    CHECK(bob_starts.responder.result == Result::winner);
    CHECK(bob_starts.initiator.rounds == 1);

    auto alice_starts = run_pair(alice, bob, rules, "Alice/1");
    CHECK(alice_starts.initiator.result == Result::winner);
    CHECK(alice_starts.responder.result == Result::loser);
}

TEST_CASE("both parties without offers part in three messages") {
    model::ActivationRuleSet rules;
    rules.add({"t", "c", "d", model::Polarity::positive});
    Party a;
    a.active.context_id = "ctx";
    a.status.conditions = {{"c", false}};
    a.offers = strategy::generate_offer_set({"t"}, a.status, a.active, rules);
    Party b = a;

    auto outcome = run_pair(a, b, rules, "a/1");
    CHECK(outcome.initiator.result == Result::no_agreement);
    CHECK(outcome.responder.result == Result::no_agreement);
    CHECK(outcome.initiator.rounds == 1);
    CHECK(outcome.responder.rounds == 1);
    // EMPTY, REJECT, QUIT — the initiator sends one message, the responder two
    CHECK(sent_count(outcome.initiator) + sent_count(outcome.responder) == 3);
    CHECK(outcome.initiator.transcript.front().message.type == MessageType::empty);
    CHECK(outcome.responder.transcript.back().message.type == MessageType::quit);
}

TEST_CASE("identical twins never agree and exhaust both offer sets") {
    auto rules = testutil::load_rules("rules.json");
    Party alice = make_fixture_party("alice_airport.json", "context_airport.json", rules, {"t_4"});
    Party twin = alice;

    auto outcome = run_pair(alice, twin, rules, "alice/1");
    CHECK(outcome.initiator.result == Result::no_agreement);
    CHECK(outcome.responder.result == Result::no_agreement);
    CHECK(outcome.initiator.rounds == 3); // max(2,2) + 1
    CHECK(outcome.responder.rounds == 3);
    CHECK_FALSE(outcome.initiator.timed_out);
    bool initiator_quit = outcome.initiator.transcript.back().message.type == MessageType::quit &&
                          outcome.initiator.transcript.back().direction == protocol::Direction::sent;
    bool responder_quit = outcome.responder.transcript.back().message.type == MessageType::quit &&
                          outcome.responder.transcript.back().direction == protocol::Direction::sent;
    CHECK(initiator_quit != responder_quit);
}

TEST_CASE("asymmetric exhaustion keeps the session alive with empty offers") {
    // initiator has one offer, responder three, none acceptable: the
    // initiator grades only d1, so extra disclosure buys the responder
    // nothing
    model::ActivationRuleSet rules;
    rules.add({"t", "c1", "d1", model::Polarity::positive});
    rules.add({"t", "c2", "d2", model::Polarity::positive});
    rules.add({"t", "c3", "d3", model::Polarity::positive});
    Party small;
    small.active.context_id = "ctx";
    small.active.grades = {{"d1", 3}};
    small.status.conditions = {{"c1", true}, {"c2", false}, {"c3", false}};
    small.offers = strategy::generate_offer_set({"t"}, small.status, small.active, rules);
    Party large;
    large.active.context_id = "ctx";
    large.active.grades = {{"d1", 3}, {"d2", 2}, {"d3", 1}};
    large.status.conditions = {{"c1", true}, {"c2", true}, {"c3", true}};
    large.offers = strategy::generate_offer_set({"t"}, large.status, large.active, rules);

    auto outcome = run_pair(small, large, rules, "small/1");
    CHECK(outcome.initiator.result == Result::no_agreement);
    CHECK(outcome.responder.result == Result::no_agreement);
    CHECK(outcome.initiator.rounds == 4); // max(1,3) + 1
    CHECK(outcome.responder.rounds == 4);
    bool small_sent_empty = false;
    for (const auto& entry : outcome.initiator.transcript) {
        if (entry.direction == protocol::Direction::sent &&
            entry.message.type == MessageType::empty)
            small_sent_empty = true;
    }
    CHECK(small_sent_empty);
}

TEST_CASE("run_receiver returns no_agreement on an immediate QUIT") {
    auto rules = testutil::load_rules("rules.json");
    Party alice = make_fixture_party("alice_airport.json", "context_airport.json", rules, {"t_4"});
    auto [mine, theirs] = transport::loopback_pair("peer/1");
    theirs->send(transport::NegotiationMessage::quit("peer/1"));

    protocol::NegotiationState state;
    state.offer_set = alice.offers;
    protocol::PartyDeps deps{alice.active, rules, 500ms};
    auto outcome = protocol::run_receiver(std::move(state), *mine, deps);
    CHECK(outcome.result == Result::no_agreement);
    CHECK(outcome.transcript.back().message.type == MessageType::quit);
    CHECK(outcome.session_id == "peer/1");
}

TEST_CASE("run_sender opens with the first offer and wins on ACCEPT") {
    auto rules = testutil::load_rules("rules.json");
    Party bob = make_fixture_party("bob_airport.json", "context_airport.json", rules, {"t_4"},
                                   std::vector<std::string>{"elderly", "boarding_emergency"});
    auto [mine, theirs] = transport::loopback_pair("Bob/7");
    std::thread peer([&] {
        auto opening = theirs->receive(500ms);
        REQUIRE(opening.type == MessageType::offer);
        REQUIRE(opening.index == 1);
        REQUIRE(opening.conditions == std::vector<std::string>{"elderly"});
        theirs->send(transport::NegotiationMessage::accept("Bob/7"));
    });
    protocol::NegotiationState state;
    state.offer_set = bob.offers;
    protocol::PartyDeps deps{bob.active, rules, 500ms};
    auto outcome = protocol::run_sender(std::move(state), *mine, deps);
    peer.join();
    CHECK(outcome.result == Result::winner);
    CHECK(outcome.rounds == 1);
}

TEST_CASE("a silent peer yields a timeout marker and no agreement") {
    auto rules = testutil::load_rules("rules.json");
    Party alice = make_fixture_party("alice_airport.json", "context_airport.json", rules, {"t_4"});
    auto [ep, silent] = transport::loopback_pair("alice/9");
    auto outcome = protocol::negotiate(protocol::StartRole::initiator_sender, alice.offers,
                                       alice.active, rules, *ep, 30ms);
    CHECK(outcome.result == Result::no_agreement);
    CHECK(outcome.timed_out);
    REQUIRE_FALSE(outcome.transcript.empty());
    CHECK(outcome.transcript.back().direction == protocol::Direction::marker);
    CHECK(outcome.transcript.back().note == "TIMEOUT");
    (void)silent;
}

TEST_CASE("property: termination, complementarity, mirrored transcripts, determinism") {
    for (std::uint64_t seed = 0; seed < 250; ++seed) {
        testutil::Rng rng(seed);
        auto shared = testutil::make_random_setup(rng, true);
        Party initiator = make_random_party(rng, shared);
        Party responder = make_random_party(rng, shared);

        auto first = run_pair(initiator, responder, shared.rules, "p/1");
        auto second = run_pair(initiator, responder, shared.rules, "p/1");

        const std::size_t max_offers = std::max(initiator.offers.size(), responder.offers.size());

        // termination bound on rounds and on per-party sent messages
        CHECK(first.initiator.rounds <= static_cast<int>(max_offers) + 1);
        CHECK(first.responder.rounds <= static_cast<int>(max_offers) + 1);
        CHECK(sent_count(first.initiator) <= 2 * max_offers + 4);
        CHECK(sent_count(first.responder) <= 2 * max_offers + 4);
        CHECK_FALSE(first.initiator.timed_out);
        CHECK_FALSE(first.responder.timed_out);

        // both parties agree on the session round count
        CHECK(first.initiator.rounds == first.responder.rounds);

        // complementarity
        bool agreement = first.initiator.result == Result::winner ||
                         first.responder.result == Result::winner;
        if (agreement) {
            CHECK(((first.initiator.result == Result::winner &&
                    first.responder.result == Result::loser) ||
                   (first.initiator.result == Result::loser &&
                    first.responder.result == Result::winner)));
        } else {
            CHECK(first.initiator.result == Result::no_agreement);
            CHECK(first.responder.result == Result::no_agreement);
        }

        // mirrored transcripts
        REQUIRE(first.initiator.transcript.size() == first.responder.transcript.size());
        for (std::size_t i = 0; i < first.initiator.transcript.size(); ++i) {
            const auto& mine = first.initiator.transcript[i];
            const auto& theirs = first.responder.transcript[i];
            CHECK(mine.message == theirs.message);
            CHECK(mine.direction != theirs.direction);
        }

        // determinism
        CHECK(first.initiator.result == second.initiator.result);
        CHECK(first.initiator.rounds == second.initiator.rounds);
        REQUIRE(first.initiator.transcript.size() == second.initiator.transcript.size());
        for (std::size_t i = 0; i < first.initiator.transcript.size(); ++i) {
            CHECK(first.initiator.transcript[i].message == second.initiator.transcript[i].message);
        }
    }
}
