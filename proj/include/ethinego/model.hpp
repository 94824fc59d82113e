#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ethinego {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace model {

/// Scalar context attribute value: string, integer, or boolean.
using AttributeValue = std::variant<std::string, std::int64_t, bool>;

/// Key-value snapshot of the environment the agent currently operates in.
struct ContextModel {
    std::string context_id;
    std::map<std::string, AttributeValue> attributes;

    bool operator==(const ContextModel&) const = default;
};

/// Boolean conditions currently holding for the user (injured, elderly, ...).
struct UserStatus {
    std::map<std::string, bool> conditions;

    std::set<std::string> true_conditions() const;

    bool operator==(const UserStatus&) const = default;
};

/// A gradable ethical tendency, e.g. "give precedence to elderly people".
struct Disposition {
    std::string id;
    std::string description;

    bool operator==(const Disposition&) const = default;
};

/// Grades a user assigned to dispositions within one context. A disposition
/// absent from `grades` is not applicable in that context and never
/// contributes to any impact.
struct ContextProfile {
    std::string context_id;
    std::map<std::string, int, std::less<>> grades;

    std::optional<int> rank(const std::string& disposition_id) const;

    bool operator==(const ContextProfile&) const = default;
};

/// Per-user disposition set plus per-context grades.
struct EthicalProfile {
    std::vector<Disposition> dispositions;
    std::map<std::string, ContextProfile> per_context;

    bool has_disposition(const std::string& id) const;

    bool operator==(const EthicalProfile&) const = default;
};

struct Task {
    std::string id;
    std::string description;

    bool operator==(const Task&) const = default;
};

enum class Polarity { positive, negative };

/// Links a user status condition to the disposition it activates for a task,
/// carrying the sign of that disposition's manifestation.
struct ActivationRule {
    std::string task_id;
    std::string condition_name;
    std::string disposition_id;
    Polarity polarity = Polarity::positive;

    bool operator==(const ActivationRule&) const = default;
};

class ActivationRuleSet {
public:
    ActivationRuleSet() = default;
    explicit ActivationRuleSet(std::vector<ActivationRule> rules) : rules_(std::move(rules)) {}

    const std::vector<ActivationRule>& rules() const { return rules_; }
    bool empty() const { return rules_.empty(); }
    std::size_t size() const { return rules_.size(); }
    void add(ActivationRule rule) { rules_.push_back(std::move(rule)); }

    bool operator==(const ActivationRuleSet&) const = default;

private:
    std::vector<ActivationRule> rules_;
};

enum class OfferKind { concrete, empty };

/// A task set plus the status conditions disclosed so far, or the empty
/// keep-alive offer.
struct Offer {
    OfferKind kind = OfferKind::empty;
    std::set<std::string> tasks;
    std::set<std::string> disclosed_conditions;

    static Offer concrete(std::set<std::string> tasks, std::set<std::string> conditions);
    static Offer empty_offer();

    bool is_empty() const { return kind == OfferKind::empty; }

    bool operator==(const Offer&) const = default;
};

/// Named fixture bundling a profile with a status snapshot.
struct Persona {
    std::string name;
    EthicalProfile profile;
    UserStatus status;

    bool operator==(const Persona&) const = default;
};

/// Optional ground-truth record attached to a scenario. A missing winner
/// means no agreement is expected.
struct ExpectedOutcome {
    std::optional<std::string> winner;
    std::optional<int> rounds;

    bool operator==(const ExpectedOutcome&) const = default;
};

/// A complete two-party negotiation setup.
struct Scenario {
    std::string id;
    ContextModel context;
    std::vector<Task> tasks;
    ActivationRuleSet rules;
    std::vector<Persona> personas;
    std::size_t initial_sender = 0;
    std::map<std::string, std::vector<std::string>> order_overrides;
    std::optional<ExpectedOutcome> expected;

    std::set<std::string> task_ids() const;

    bool operator==(const Scenario&) const = default;
};

/// One validation problem: the offending field plus a human-readable message.
struct Finding {
    std::string field;
    std::string message;

    bool operator==(const Finding&) const = default;
};

std::vector<Finding> validate(const ContextModel& context);
std::vector<Finding> validate(const UserStatus& status);
std::vector<Finding> validate(const EthicalProfile& profile);
std::vector<Finding> validate(const ActivationRuleSet& rules);
std::vector<Finding> validate(const Offer& offer, const UserStatus* origin = nullptr);
std::vector<Finding> validate(const Scenario& scenario);

/// Full persona check: type invariants plus referential integrity of the
/// rule set against the persona's declared dispositions.
std::vector<Finding> validate_persona(const Persona& persona, const ActivationRuleSet& rules,
                                      const std::vector<ContextModel>& contexts);

enum class ParseErrorKind { syntax, schema, invariant };

class ParseError : public Error {
public:
    ParseError(ParseErrorKind kind, const std::string& message, std::size_t byte_offset = 0);

    ParseErrorKind kind() const { return kind_; }
    std::size_t byte_offset() const { return byte_offset_; }

private:
    ParseErrorKind kind_;
    std::size_t byte_offset_;
};

enum class DocumentKind { persona, context, rules, scenario };

using Document = std::variant<Persona, ContextModel, ActivationRuleSet, Scenario>;

/// Parses a UTF-8 JSON document, then validates it. Throws ParseError with
/// kind syntax (position-bearing), schema (missing/extra/mistyped field), or
/// invariant (well-formed JSON violating a type invariant).
Document parse_document(std::string_view bytes, DocumentKind kind);
std::string serialize_document(const Document& doc);

Persona parse_persona(std::string_view bytes);
ContextModel parse_context(std::string_view bytes);
ActivationRuleSet parse_rules(std::string_view bytes);
Scenario parse_scenario(std::string_view bytes);
EthicalProfile parse_profile(std::string_view bytes);
UserStatus parse_status(std::string_view bytes);

std::string serialize(const Persona& persona);
std::string serialize(const ContextModel& context);
std::string serialize(const ActivationRuleSet& rules);
std::string serialize(const Scenario& scenario);
std::string serialize(const EthicalProfile& profile);
std::string serialize(const UserStatus& status);

std::string_view to_string(Polarity polarity);

} // namespace model
} // namespace ethinego
