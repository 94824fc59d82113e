#include "ethinego/model.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ethinego::model {

using nlohmann::json;

std::set<std::string> UserStatus::true_conditions() const {
    std::set<std::string> out;
    for (const auto& [name, value] : conditions) {
        if (value) out.insert(name);
    }
    return out;
}

std::optional<int> ContextProfile::rank(const std::string& disposition_id) const {
    auto it = grades.find(disposition_id);
    if (it == grades.end()) return std::nullopt;
    return it->second;
}

bool EthicalProfile::has_disposition(const std::string& id) const {
    return std::any_of(dispositions.begin(), dispositions.end(),
                       [&](const Disposition& d) { return d.id == id; });
}

Offer Offer::concrete(std::set<std::string> tasks, std::set<std::string> conditions) {
    Offer o;
    o.kind = OfferKind::concrete;
    o.tasks = std::move(tasks);
    o.disclosed_conditions = std::move(conditions);
    return o;
}

Offer Offer::empty_offer() {
    return Offer{};
}

std::set<std::string> Scenario::task_ids() const {
    std::set<std::string> out;
    for (const auto& t : tasks) out.insert(t.id);
    return out;
}

std::string_view to_string(Polarity polarity) {
    return polarity == Polarity::positive ? "positive" : "negative";
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void finding(std::vector<Finding>& out, std::string field, std::string message) {
    out.push_back(Finding{std::move(field), std::move(message)});
}

} // namespace

std::vector<Finding> validate(const ContextModel& context) {
    std::vector<Finding> out;
    if (context.context_id.empty()) finding(out, "context_id", "context_id must be nonempty");
    if (context.attributes.empty()) finding(out, "attributes", "context must carry at least one attribute");
    for (const auto& [name, _] : context.attributes) {
        if (name.empty()) finding(out, "attributes", "attribute names must be nonempty");
    }
    return out;
}

std::vector<Finding> validate(const UserStatus& status) {
    std::vector<Finding> out;
    if (status.conditions.empty()) finding(out, "conditions", "status must carry at least one condition");
    for (const auto& [name, _] : status.conditions) {
        if (name.empty()) finding(out, "conditions", "condition names must be nonempty");
    }
    return out;
}

std::vector<Finding> validate(const EthicalProfile& profile) {
    std::vector<Finding> out;
    std::set<std::string> ids;
    for (const auto& d : profile.dispositions) {
        if (d.id.empty()) finding(out, "dispositions", "disposition id must be nonempty");
        if (!ids.insert(d.id).second)
            finding(out, "dispositions", "duplicate disposition id " + d.id);
    }
    if (profile.per_context.empty())
        finding(out, "per_context", "profile must grade at least one context");
    for (const auto& [ctx, cp] : profile.per_context) {
        if (cp.context_id != ctx)
            finding(out, "per_context." + ctx, "context_id mismatch: " + cp.context_id);
        for (const auto& [disp, rank] : cp.grades) {
            if (rank < 1)
                finding(out, "per_context." + ctx + "." + disp, "rank must be >= 1");
            if (!ids.count(disp))
                finding(out, "per_context." + ctx + "." + disp,
                        "grade references undeclared disposition " + disp);
        }
    }
    return out;
}

std::vector<Finding> validate(const ActivationRuleSet& rules) {
    std::vector<Finding> out;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& r : rules.rules()) {
        if (r.task_id.empty()) finding(out, "rules.task", "task id must be nonempty");
        if (r.condition_name.empty()) finding(out, "rules.condition", "condition name must be nonempty");
        if (r.disposition_id.empty()) finding(out, "rules.disposition", "disposition id must be nonempty");
        if (!seen.insert({r.task_id, r.condition_name, r.disposition_id}).second)
            finding(out, "rules",
                    "duplicate rule (" + r.task_id + ", " + r.condition_name + ", " + r.disposition_id + ")");
    }
    return out;
}

std::vector<Finding> validate(const Offer& offer, const UserStatus* origin) {
    std::vector<Finding> out;
    if (offer.kind == OfferKind::empty) {
        if (!offer.tasks.empty() || !offer.disclosed_conditions.empty())
            finding(out, "offer", "empty offer must carry no tasks and no conditions");
        return out;
    }
    if (offer.tasks.empty()) finding(out, "offer.tasks", "concrete offer must carry at least one task");
    if (origin) {
        for (const auto& c : offer.disclosed_conditions) {
            auto it = origin->conditions.find(c);
            if (it == origin->conditions.end() || !it->second)
                finding(out, "offer.conditions", "disclosed condition " + c + " does not hold in the originating status");
        }
    }
    return out;
}

namespace {

std::vector<Finding> persona_findings(const Persona& persona) {
    std::vector<Finding> out;
    if (persona.name.empty()) finding(out, "name", "persona name must be nonempty");
    for (auto& f : validate(persona.profile)) {
        f.field = "profile." + f.field;
        out.push_back(std::move(f));
    }
    for (auto& f : validate(persona.status)) {
        f.field = "status." + f.field;
        out.push_back(std::move(f));
    }
    return out;
}

// referential integrity of a rule set against a persona's declared dispositions
std::vector<Finding> reference_findings(const Persona& persona, const ActivationRuleSet& rules) {
    std::vector<Finding> out;
    for (const auto& r : rules.rules()) {
        if (!r.disposition_id.empty() && !persona.profile.has_disposition(r.disposition_id))
            finding(out, "rules.disposition",
                    "rule references unknown disposition " + r.disposition_id);
    }
    return out;
}

} // namespace

std::vector<Finding> validate_persona(const Persona& persona, const ActivationRuleSet& rules,
                                      const std::vector<ContextModel>& contexts) {
    std::vector<Finding> out = persona_findings(persona);
    for (auto& f : validate(rules)) out.push_back(std::move(f));
    for (auto& f : reference_findings(persona, rules)) out.push_back(std::move(f));
    for (const auto& ctx : contexts) {
        for (auto& f : validate(ctx)) {
            f.field = "context." + ctx.context_id + "." + f.field;
            out.push_back(std::move(f));
        }
    }
    return out;
}

std::vector<Finding> validate(const Scenario& scenario) {
    std::vector<Finding> out;
    for (auto& f : validate(scenario.context)) {
        f.field = "context." + f.field;
        out.push_back(std::move(f));
    }
    if (scenario.tasks.empty()) finding(out, "tasks", "scenario must declare at least one task");
    std::set<std::string> task_ids;
    for (const auto& t : scenario.tasks) {
        if (t.id.empty()) finding(out, "tasks", "task id must be nonempty");
        if (!task_ids.insert(t.id).second) finding(out, "tasks", "duplicate task id " + t.id);
    }
    for (auto& f : validate(scenario.rules)) out.push_back(std::move(f));
    if (scenario.personas.size() != 2)
        finding(out, "personas", "negotiation scenario needs exactly two personas");
    if (scenario.initial_sender >= scenario.personas.size())
        finding(out, "initial_sender", "initial_sender index out of range");
    std::set<std::string> names;
    for (const auto& p : scenario.personas) {
        std::vector<Finding> per_persona = persona_findings(p);
        for (auto& f : reference_findings(p, scenario.rules)) per_persona.push_back(std::move(f));
        for (auto& f : per_persona) {
            f.field = "personas." + p.name + "." + f.field;
            out.push_back(std::move(f));
        }
        if (!names.insert(p.name).second)
            finding(out, "personas", "duplicate persona name " + p.name);
        if (!p.profile.per_context.count(scenario.context.context_id))
            finding(out, "personas." + p.name,
                    "profile has no grades for context " + scenario.context.context_id);
    }
    for (const auto& [name, order] : scenario.order_overrides) {
        if (!names.count(name)) {
            finding(out, "order_overrides", "override for unknown persona " + name);
            continue;
        }
        const auto persona = std::find_if(scenario.personas.begin(), scenario.personas.end(),
                                          [&](const Persona& p) { return p.name == name; });
        for (const auto& cond : order) {
            auto it = persona->status.conditions.find(cond);
            if (it == persona->status.conditions.end() || !it->second)
                finding(out, "order_overrides." + name,
                        "override condition " + cond + " does not hold for " + name);
        }
    }
    if (scenario.expected && scenario.expected->winner && !names.count(*scenario.expected->winner))
        finding(out, "expected.winner", "expected winner " + *scenario.expected->winner + " is not a scenario persona");
    return out;
}

// ---------------------------------------------------------------------------
// JSON parsing / serialization

ParseError::ParseError(ParseErrorKind kind, const std::string& message, std::size_t byte_offset)
    : Error(message), kind_(kind), byte_offset_(byte_offset) {}

namespace {

[[noreturn]] void schema_error(const std::string& message) {
    throw ParseError(ParseErrorKind::schema, message);
}

void require_object(const json& j, std::initializer_list<const char*> required,
                    std::initializer_list<const char*> optional, const std::string& where) {
    if (!j.is_object()) schema_error(where + ": expected a JSON object");
    for (const char* key : required) {
        if (!j.contains(key)) schema_error(where + ": missing field \"" + key + "\"");
    }
    for (const auto& [key, _] : j.items()) {
        bool known = std::any_of(required.begin(), required.end(),
                                 [&](const char* k) { return key == k; }) ||
                     std::any_of(optional.begin(), optional.end(),
                                 [&](const char* k) { return key == k; });
        if (!known) schema_error(where + ": unknown field \"" + key + "\"");
    }
}

std::string get_string(const json& j, const char* key, const std::string& where) {
    if (!j.at(key).is_string()) schema_error(where + "." + key + ": expected a string");
    return j.at(key).get<std::string>();
}

AttributeValue attribute_from_json(const json& j, const std::string& where) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    schema_error(where + ": attribute values must be string, integer, or boolean");
}

json attribute_to_json(const AttributeValue& v) {
    return std::visit([](const auto& x) { return json(x); }, v);
}

ContextModel context_from_json(const json& j) {
    require_object(j, {"context_id", "attributes"}, {}, "context");
    ContextModel ctx;
    ctx.context_id = get_string(j, "context_id", "context");
    if (!j.at("attributes").is_object()) schema_error("context.attributes: expected an object");
    for (const auto& [name, value] : j.at("attributes").items()) {
        ctx.attributes[name] = attribute_from_json(value, "context.attributes." + name);
    }
    return ctx;
}

json context_to_json(const ContextModel& ctx) {
    json attrs = json::object();
    for (const auto& [name, value] : ctx.attributes) attrs[name] = attribute_to_json(value);
    return json{{"context_id", ctx.context_id}, {"attributes", attrs}};
}

UserStatus status_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) schema_error(where + ": expected an object of booleans");
    UserStatus st;
    for (const auto& [name, value] : j.items()) {
        if (!value.is_boolean()) schema_error(where + "." + name + ": condition values must be boolean");
        st.conditions[name] = value.get<bool>();
    }
    return st;
}

json status_to_json(const UserStatus& st) {
    json j = json::object();
    for (const auto& [name, value] : st.conditions) j[name] = value;
    return j;
}

EthicalProfile profile_from_json(const json& j) {
    require_object(j, {"dispositions", "per_context"}, {}, "profile");
    EthicalProfile profile;
    if (!j.at("dispositions").is_array()) schema_error("profile.dispositions: expected an array");
    for (const auto& dj : j.at("dispositions")) {
        require_object(dj, {"id", "description"}, {}, "profile.dispositions[]");
        profile.dispositions.push_back(
            Disposition{get_string(dj, "id", "disposition"), get_string(dj, "description", "disposition")});
    }
    if (!j.at("per_context").is_object()) schema_error("profile.per_context: expected an object");
    for (const auto& [ctx, grades] : j.at("per_context").items()) {
        ContextProfile cp;
        cp.context_id = ctx;
        if (!grades.is_object()) schema_error("profile.per_context." + ctx + ": expected an object");
        for (const auto& [disp, rank] : grades.items()) {
            if (!rank.is_number_integer())
                schema_error("profile.per_context." + ctx + "." + disp + ": rank must be an integer");
            cp.grades[disp] = rank.get<int>();
        }
        profile.per_context[ctx] = std::move(cp);
    }
    return profile;
}

json profile_to_json(const EthicalProfile& profile) {
    json dispositions = json::array();
    for (const auto& d : profile.dispositions)
        dispositions.push_back(json{{"id", d.id}, {"description", d.description}});
    json per_context = json::object();
    for (const auto& [ctx, cp] : profile.per_context) {
        json grades = json::object();
        for (const auto& [disp, rank] : cp.grades) grades[disp] = rank;
        per_context[ctx] = grades;
    }
    return json{{"dispositions", dispositions}, {"per_context", per_context}};
}

Persona persona_from_json(const json& j) {
    require_object(j, {"name", "profile", "status"}, {}, "persona");
    Persona p;
    p.name = get_string(j, "name", "persona");
    p.profile = profile_from_json(j.at("profile"));
    p.status = status_from_json(j.at("status"), "persona.status");
    return p;
}

json persona_to_json(const Persona& p) {
    return json{{"name", p.name}, {"profile", profile_to_json(p.profile)}, {"status", status_to_json(p.status)}};
}

ActivationRuleSet rules_from_json(const json& j) {
    if (!j.is_array()) schema_error("rules: expected an array");
    std::vector<ActivationRule> rules;
    for (const auto& rj : j) {
        require_object(rj, {"task", "condition", "disposition", "polarity"}, {}, "rules[]");
        ActivationRule r;
        r.task_id = get_string(rj, "task", "rule");
        r.condition_name = get_string(rj, "condition", "rule");
        r.disposition_id = get_string(rj, "disposition", "rule");
        std::string pol = get_string(rj, "polarity", "rule");
        if (pol == "positive") {
            r.polarity = Polarity::positive;
        } else if (pol == "negative") {
            r.polarity = Polarity::negative;
        } else {
            schema_error("rule.polarity: expected \"positive\" or \"negative\", got \"" + pol + "\"");
        }
        rules.push_back(std::move(r));
    }
    return ActivationRuleSet(std::move(rules));
}

json rules_to_json(const ActivationRuleSet& rules) {
    json out = json::array();
    for (const auto& r : rules.rules()) {
        out.push_back(json{{"task", r.task_id},
                           {"condition", r.condition_name},
                           {"disposition", r.disposition_id},
                           {"polarity", std::string(to_string(r.polarity))}});
    }
    return out;
}

Task task_from_json(const json& j) {
    if (j.is_string()) return Task{j.get<std::string>(), ""};
    require_object(j, {"id"}, {"description"}, "tasks[]");
    Task t;
    t.id = get_string(j, "id", "task");
    if (j.contains("description")) t.description = get_string(j, "description", "task");
    return t;
}

ExpectedOutcome expected_from_json(const json& j) {
    require_object(j, {"winner"}, {"rounds"}, "expected");
    ExpectedOutcome e;
    if (!j.at("winner").is_null()) e.winner = get_string(j, "winner", "expected");
    if (j.contains("rounds")) {
        if (!j.at("rounds").is_number_integer()) schema_error("expected.rounds: expected an integer");
        e.rounds = j.at("rounds").get<int>();
    }
    return e;
}

Scenario scenario_from_json(const json& j) {
    require_object(j, {"context", "tasks", "rules", "personas"},
                   {"id", "initial_sender", "order_overrides", "expected"}, "scenario");
    Scenario s;
    if (j.contains("id")) s.id = get_string(j, "id", "scenario");
    s.context = context_from_json(j.at("context"));
    if (!j.at("tasks").is_array()) schema_error("scenario.tasks: expected an array");
    for (const auto& tj : j.at("tasks")) s.tasks.push_back(task_from_json(tj));
    s.rules = rules_from_json(j.at("rules"));
    if (!j.at("personas").is_array()) schema_error("scenario.personas: expected an array");
    for (const auto& pj : j.at("personas")) s.personas.push_back(persona_from_json(pj));
    if (j.contains("initial_sender")) {
        if (!j.at("initial_sender").is_number_unsigned())
            schema_error("scenario.initial_sender: expected a non-negative integer");
        s.initial_sender = j.at("initial_sender").get<std::size_t>();
    }
    if (j.contains("order_overrides")) {
        if (!j.at("order_overrides").is_object()) schema_error("scenario.order_overrides: expected an object");
        for (const auto& [name, order] : j.at("order_overrides").items()) {
            if (!order.is_array()) schema_error("scenario.order_overrides." + name + ": expected an array");
            std::vector<std::string> list;
            for (const auto& c : order) {
                if (!c.is_string()) schema_error("scenario.order_overrides." + name + ": expected strings");
                list.push_back(c.get<std::string>());
            }
            s.order_overrides[name] = std::move(list);
        }
    }
    if (j.contains("expected")) s.expected = expected_from_json(j.at("expected"));
    return s;
}

json scenario_to_json(const Scenario& s) {
    json j;
    if (!s.id.empty()) j["id"] = s.id;
    j["context"] = context_to_json(s.context);
    json tasks = json::array();
    for (const auto& t : s.tasks) tasks.push_back(json{{"id", t.id}, {"description", t.description}});
    j["tasks"] = tasks;
    j["rules"] = rules_to_json(s.rules);
    json personas = json::array();
    for (const auto& p : s.personas) personas.push_back(persona_to_json(p));
    j["personas"] = personas;
    j["initial_sender"] = s.initial_sender;
    if (!s.order_overrides.empty()) {
        json overrides = json::object();
        for (const auto& [name, order] : s.order_overrides) overrides[name] = order;
        j["order_overrides"] = overrides;
    }
    if (s.expected) {
        json e;
        e["winner"] = s.expected->winner ? json(*s.expected->winner) : json(nullptr);
        if (s.expected->rounds) e["rounds"] = *s.expected->rounds;
        j["expected"] = e;
    }
    return j;
}

json parse_json(std::string_view bytes) {
    try {
        return json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseErrorKind::syntax, e.what(), e.byte);
    }
}

void throw_on_findings(const std::vector<Finding>& findings) {
    if (findings.empty()) return;
    std::ostringstream msg;
    msg << "invariant violation:";
    for (const auto& f : findings) msg << " [" << f.field << "] " << f.message << ";";
    throw ParseError(ParseErrorKind::invariant, msg.str());
}

} // namespace

Persona parse_persona(std::string_view bytes) {
    Persona p = persona_from_json(parse_json(bytes));
    throw_on_findings(validate_persona(p, {}, {}));
    return p;
}

ContextModel parse_context(std::string_view bytes) {
    ContextModel c = context_from_json(parse_json(bytes));
    throw_on_findings(validate(c));
    return c;
}

ActivationRuleSet parse_rules(std::string_view bytes) {
    ActivationRuleSet r = rules_from_json(parse_json(bytes));
    throw_on_findings(validate(r));
    return r;
}

Scenario parse_scenario(std::string_view bytes) {
    Scenario s = scenario_from_json(parse_json(bytes));
    throw_on_findings(validate(s));
    return s;
}

EthicalProfile parse_profile(std::string_view bytes) {
    EthicalProfile p = profile_from_json(parse_json(bytes));
    throw_on_findings(validate(p));
    return p;
}

UserStatus parse_status(std::string_view bytes) {
    UserStatus s = status_from_json(parse_json(bytes), "status");
    throw_on_findings(validate(s));
    return s;
}

Document parse_document(std::string_view bytes, DocumentKind kind) {
    switch (kind) {
        case DocumentKind::persona: return parse_persona(bytes);
        case DocumentKind::context: return parse_context(bytes);
        case DocumentKind::rules: return parse_rules(bytes);
        case DocumentKind::scenario: return parse_scenario(bytes);
    }
    throw Error("unreachable document kind");
}

std::string serialize(const Persona& persona) { return persona_to_json(persona).dump(2) + "\n"; }
std::string serialize(const EthicalProfile& profile) { return profile_to_json(profile).dump(2) + "\n"; }
std::string serialize(const UserStatus& status) { return status_to_json(status).dump(2) + "\n"; }
std::string serialize(const ContextModel& context) { return context_to_json(context).dump(2) + "\n"; }
std::string serialize(const ActivationRuleSet& rules) { return rules_to_json(rules).dump(2) + "\n"; }
std::string serialize(const Scenario& scenario) { return scenario_to_json(scenario).dump(2) + "\n"; }

std::string serialize_document(const Document& doc) {
    return std::visit([](const auto& value) { return serialize(value); }, doc);
}

} // namespace ethinego::model
