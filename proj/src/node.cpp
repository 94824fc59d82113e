#include "ethinego/node.hpp"

#include <future>

#include "httplib.h"
#include "json.hpp"

#include "ethinego/engine.hpp"
#include "ethinego/strategy.hpp"

namespace ethinego::node {

using nlohmann::json;

Update Update::of(model::EthicalProfile profile) {
    Update u;
    u.kind = UpdateKind::profile;
    u.profile = std::move(profile);
    return u;
}

Update Update::of(model::UserStatus status) {
    Update u;
    u.kind = UpdateKind::status;
    u.status = std::move(status);
    return u;
}

Update Update::of(model::ContextModel context) {
    Update u;
    u.kind = UpdateKind::context;
    u.context = std::move(context);
    return u;
}

Update Update::of(model::ActivationRuleSet rules) {
    Update u;
    u.kind = UpdateKind::rules;
    u.rules = std::move(rules);
    return u;
}

Update Update::of_goal(std::vector<std::string> tasks) {
    Update u;
    u.kind = UpdateKind::goal;
    u.goal = std::move(tasks);
    return u;
}

ValidationFailure::ValidationFailure(std::vector<model::Finding> findings)
    : Error(findings.empty() ? "validation failed"
                             : "validation failed: [" + findings.front().field + "] " +
                                   findings.front().message),
      findings_(std::move(findings)) {}

namespace {

void require_valid(std::vector<model::Finding> findings) {
    if (!findings.empty()) throw ValidationFailure(std::move(findings));
}

void push_event(AgentState& state, std::vector<AgentEvent>& out, AgentEvent event) {
    state.events.push_back(event);
    if (state.events.size() > 64) state.events.erase(state.events.begin());
    out.push_back(std::move(event));
}

// Plan/Execute half of the loop: recompute the active profile from the
// stored profile and context.
void reselect_active(AgentState& state, std::vector<AgentEvent>& out) {
    std::optional<model::ContextProfile> previous = state.active;
    state.active.reset();
    if (state.profile && state.context) {
        try {
            state.active = engine::select_active_profile(*state.profile, *state.context);
        } catch (const engine::NoProfileForContextError& e) {
            push_event(state, out, AgentEvent{"no_profile_for_context", e.context_id()});
            return;
        }
    }
    if (state.active && state.active != previous)
        push_event(state, out, AgentEvent{"profile_activated", state.active->context_id});
}

} // namespace

std::vector<AgentEvent> apply_update(AgentState& state, const Update& update) {
    std::vector<AgentEvent> events;
    switch (update.kind) {
        case UpdateKind::profile:
            require_valid(model::validate(*update.profile));
            state.profile = *update.profile;
            reselect_active(state, events);
            break;
        case UpdateKind::status:
            require_valid(model::validate(*update.status));
            state.status = *update.status;
            break;
        case UpdateKind::context:
            require_valid(model::validate(*update.context));
            if (state.context && *state.context == *update.context) break;
            state.context = *update.context;
            reselect_active(state, events);
            break;
        case UpdateKind::rules:
            require_valid(model::validate(*update.rules));
            state.rules = *update.rules;
            break;
        case UpdateKind::goal:
            if (update.goal->empty())
                throw ValidationFailure({model::Finding{"goal.tasks", "goal must name at least one task"}});
            state.goal = *update.goal;
            break;
    }
    return events;
}

// ---------------------------------------------------------------------------
// Outcome serialization

namespace {

json transcript_to_json(const std::vector<protocol::TranscriptEntry>& transcript) {
    json out = json::array();
    for (const auto& entry : transcript) {
        json e;
        switch (entry.direction) {
            case protocol::Direction::sent: e["dir"] = "sent"; break;
            case protocol::Direction::received: e["dir"] = "received"; break;
            case protocol::Direction::marker: e["dir"] = "marker"; break;
        }
        if (entry.direction == protocol::Direction::marker) {
            e["note"] = entry.note;
        } else {
            const auto& m = entry.message;
            e["type"] = std::string(transport::to_string(m.type));
            e["seq"] = m.seq;
            if (m.type == transport::MessageType::offer) {
                e["index"] = m.index;
                e["conditions"] = m.conditions;
            }
            if (m.type == transport::MessageType::hello) {
                e["agent"] = m.agent;
                e["tasks"] = m.tasks;
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

json outcome_to_json(const protocol::NegotiationOutcome& outcome) {
    json j;
    j["result"] = std::string(protocol::to_string(outcome.result));
    j["rounds"] = outcome.rounds;
    j["duration_ms"] = outcome.duration_ms;
    j["timed_out"] = outcome.timed_out;
    j["session"] = outcome.session_id;
    j["transcript"] = transcript_to_json(outcome.transcript);
    if (outcome.fallback_user) j["fallback_user"] = *outcome.fallback_user;
    return j;
}

} // namespace

std::string to_json_string(const protocol::NegotiationOutcome& outcome) {
    return outcome_to_json(outcome).dump();
}

// ---------------------------------------------------------------------------
// AgentNode

struct AgentNode::PendingGoal {
    std::vector<std::string> tasks;
    std::promise<std::shared_ptr<transport::Endpoint>> promise;
};

AgentNode::AgentNode(AgentConfig config) : config_(std::move(config)) {
    if (config_.timeout_ms <= 0) throw Error("timeout_ms must be positive");
    if (config_.disclosure_step < 1) throw Error("disclosure_step must be >= 1");
    if (config_.agent_id.empty()) throw Error("agent_id must be nonempty");
    try {
        transport::TcpAddress::parse(config_.http_bind);
        transport::TcpAddress::parse(config_.peer_bind);
    } catch (const transport::TransportError& e) {
        throw Error(e.what());
    }
}

AgentNode::~AgentNode() { stop(); }

void AgentNode::start() {
    auto peer_addr = transport::TcpAddress::parse(config_.peer_bind);
    listener_ = std::make_unique<transport::TcpListener>(peer_addr);
    peer_port_ = listener_->port();
    listener_thread_ = std::thread([this] { listener_loop(); });

    http_ = std::make_unique<httplib::Server>();
    setup_routes();
    auto http_addr = transport::TcpAddress::parse(config_.http_bind);
    const std::string host = http_addr.host.empty() ? "127.0.0.1" : http_addr.host;
    if (http_addr.port == 0) {
        int port = http_->bind_to_any_port(host);
        if (port <= 0) throw transport::BindError("cannot bind HTTP on " + config_.http_bind);
        http_port_ = static_cast<std::uint16_t>(port);
    } else {
        if (!http_->bind_to_port(host, http_addr.port))
            throw transport::BindError("cannot bind HTTP on " + config_.http_bind);
        http_port_ = http_addr.port;
    }
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

void AgentNode::stop() {
    std::shared_ptr<PendingGoal> orphaned;
    {
        std::lock_guard lk(mu_);
        if (stopping_) return;
        stopping_ = true;
        orphaned = std::move(pending_);
        pending_.reset();
    }
    if (orphaned) {
        orphaned->promise.set_exception(
            std::make_exception_ptr(transport::ChannelClosedError()));
    }
    pending_cv_.notify_all();
    if (http_) http_->stop();
    if (listener_) listener_->close();
    if (http_thread_.joinable()) http_thread_.join();
    if (listener_thread_.joinable()) listener_thread_.join();
}

std::vector<AgentEvent> AgentNode::apply(const Update& update) {
    std::lock_guard lk(mu_);
    if (negotiating_) throw BusyError();
    return apply_update(state_, update);
}

AgentNode::Snapshot AgentNode::begin_session(const std::vector<std::string>& tasks) {
    std::lock_guard lk(mu_);
    if (!state_.profile || !state_.status || !state_.context)
        throw NotConfiguredError("profile, status, and context must be uploaded before negotiating");
    if (!state_.active)
        throw NotConfiguredError("no active profile for context " + state_.context->context_id);
    if (tasks.empty()) throw NotConfiguredError("no contended tasks given");
    if (negotiating_) throw BusyError();
    negotiating_ = true;
    return Snapshot{*state_.active, *state_.status, state_.rules};
}

void AgentNode::end_session(const protocol::NegotiationOutcome& outcome) {
    std::lock_guard lk(mu_);
    negotiating_ = false;
    last_outcome_ = outcome;
}

protocol::NegotiationOutcome AgentNode::run_session(const Snapshot& snapshot,
                                                    const std::vector<std::string>& tasks,
                                                    transport::Endpoint& endpoint,
                                                    protocol::StartRole role) {
    strategy::OfferSet offers =
        strategy::generate_offer_set(std::set<std::string>(tasks.begin(), tasks.end()),
                                     snapshot.status, snapshot.active, snapshot.rules, std::nullopt,
                                     config_.disclosure_step);
    protocol::NegotiationOutcome outcome =
        protocol::negotiate(role, std::move(offers), snapshot.active, snapshot.rules, endpoint,
                            std::chrono::milliseconds(config_.timeout_ms));
    if (outcome.result == protocol::Result::no_agreement &&
        config_.fallback == FallbackPolicy::initiator_wins) {
        // The session is named "<initiator agent>/<counter>" by the connector.
        auto slash = outcome.session_id.find('/');
        outcome.fallback_user =
            slash == std::string::npos ? outcome.session_id : outcome.session_id.substr(0, slash);
    }
    return outcome;
}

std::shared_ptr<transport::Endpoint> AgentNode::await_incoming(const std::vector<std::string>& tasks) {
    std::shared_ptr<PendingGoal> goal = std::make_shared<PendingGoal>();
    goal->tasks = tasks;
    auto future = goal->promise.get_future();
    {
        std::lock_guard lk(mu_);
        pending_ = goal;
    }
    pending_cv_.notify_all();
    auto status = future.wait_for(std::chrono::milliseconds(config_.timeout_ms));
    if (status != std::future_status::ready) {
        std::lock_guard lk(mu_);
        if (pending_ == goal) {
            pending_.reset();
            throw transport::TimeoutError();
        }
        // the listener grabbed the goal concurrently; the handshake is imminent
    }
    return future.get();
}

protocol::NegotiationOutcome AgentNode::start_negotiation(
    const std::vector<std::string>& tasks, const std::optional<transport::TcpAddress>& peer,
    protocol::StartRole role) {
    Snapshot snapshot = begin_session(tasks);
    try {
        std::shared_ptr<transport::Endpoint> endpoint;
        if (role == protocol::StartRole::initiator_sender) {
            if (!peer) throw NotConfiguredError("initiator goal needs a peer address");
            endpoint = transport::tcp_connect(*peer, config_.agent_id, tasks,
                                              std::chrono::milliseconds(config_.timeout_ms));
        } else {
            try {
                endpoint = await_incoming(tasks);
            } catch (const transport::TimeoutError&) {
                protocol::NegotiationOutcome outcome;
                outcome.result = protocol::Result::no_agreement;
                outcome.timed_out = true;
                outcome.transcript.push_back(
                    protocol::TranscriptEntry{protocol::Direction::marker, {}, "TIMEOUT"});
                end_session(outcome);
                return outcome;
            }
        }
        protocol::NegotiationOutcome outcome = run_session(snapshot, tasks, *endpoint, role);
        end_session(outcome);
        return outcome;
    } catch (...) {
        std::lock_guard lk(mu_);
        negotiating_ = false;
        throw;
    }
}

protocol::NegotiationOutcome AgentNode::start_negotiation_on(
    const std::vector<std::string>& tasks, std::shared_ptr<transport::Endpoint> endpoint,
    protocol::StartRole role) {
    Snapshot snapshot = begin_session(tasks);
    try {
        protocol::NegotiationOutcome outcome = run_session(snapshot, tasks, *endpoint, role);
        end_session(outcome);
        return outcome;
    } catch (...) {
        std::lock_guard lk(mu_);
        negotiating_ = false;
        throw;
    }
}

void AgentNode::listener_loop() {
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
        }
        std::optional<transport::IncomingSession> incoming;
        try {
            incoming = listener_->accept(std::chrono::milliseconds(250));
        } catch (const transport::ChannelClosedError&) {
            return;
        } catch (const std::exception&) {
            continue; // bad handshake from a peer; keep serving
        }
        if (!incoming) continue;

        std::shared_ptr<PendingGoal> goal;
        {
            std::unique_lock lk(mu_);
            pending_cv_.wait_for(lk, std::chrono::milliseconds(config_.timeout_ms),
                                 [&] { return pending_ != nullptr || stopping_; });
            if (stopping_) {
                incoming->refuse();
                return;
            }
            if (!pending_) {
                incoming->refuse();
                continue;
            }
            goal = std::move(pending_);
            pending_.reset();
        }
        try {
            auto endpoint = incoming->complete(config_.agent_id, goal->tasks);
            goal->promise.set_value(std::move(endpoint));
        } catch (...) {
            goal->promise.set_exception(std::current_exception());
        }
    }
}

std::string AgentNode::state_summary_json() const {
    std::lock_guard lk(mu_);
    json j;
    j["agent_id"] = config_.agent_id;
    j["negotiating"] = negotiating_;
    j["active_context"] = state_.active ? json(state_.active->context_id) : json(nullptr);
    j["configured"] = json{{"profile", state_.profile.has_value()},
                           {"status", state_.status.has_value()},
                           {"context", state_.context.has_value()},
                           {"rules", state_.rules.size()}};
    j["goal"] = state_.goal ? json(*state_.goal) : json(nullptr);
    json events = json::array();
    for (const auto& e : state_.events) events.push_back(json{{"name", e.name}, {"detail", e.detail}});
    j["events"] = events;
    j["last_outcome"] = last_outcome_ ? outcome_to_json(*last_outcome_) : json(nullptr);
    return j.dump();
}

// ---------------------------------------------------------------------------
// HTTP surface

namespace {

json findings_to_json(const std::vector<model::Finding>& findings) {
    json out = json::array();
    for (const auto& f : findings) out.push_back(json{{"field", f.field}, {"message", f.message}});
    return json{{"findings", out}};
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", message}}.dump(), "application/json");
}

} // namespace

void AgentNode::setup_routes() {
    auto post_update = [this](const httplib::Request& req, httplib::Response& res,
                              auto parse_to_update) {
        try {
            Update update = parse_to_update(req.body);
            apply(update);
            res.status = 204;
        } catch (const model::ParseError& e) {
            res.status = 400;
            res.set_content(findings_to_json({model::Finding{"body", e.what()}}).dump(),
                            "application/json");
        } catch (const ValidationFailure& e) {
            res.status = 400;
            res.set_content(findings_to_json(e.findings()).dump(), "application/json");
        } catch (const BusyError& e) {
            reply_error(res, 409, e.what());
        }
    };

    http_->Post("/ethic_profile", [=](const httplib::Request& req, httplib::Response& res) {
        post_update(req, res, [](const std::string& body) {
            return Update::of(model::parse_profile(body));
        });
    });
    http_->Post("/user_status", [=](const httplib::Request& req, httplib::Response& res) {
        post_update(req, res, [](const std::string& body) {
            return Update::of(model::parse_status(body));
        });
    });
    http_->Post("/context", [=](const httplib::Request& req, httplib::Response& res) {
        post_update(req, res, [](const std::string& body) {
            return Update::of(model::parse_context(body));
        });
    });
    http_->Post("/rules", [=](const httplib::Request& req, httplib::Response& res) {
        post_update(req, res, [](const std::string& body) {
            return Update::of(model::parse_rules(body));
        });
    });

    http_->Post("/goal", [this](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            reply_error(res, 400, e.what());
            return;
        }
        try {
            if (!body.is_object() || !body.contains("tasks") || !body.at("tasks").is_array())
                throw model::ParseError(model::ParseErrorKind::schema, "goal needs a \"tasks\" array");
            std::vector<std::string> tasks;
            for (const auto& t : body.at("tasks")) tasks.push_back(t.get<std::string>());
            std::optional<transport::TcpAddress> peer;
            if (body.contains("peer") && !body.at("peer").is_null())
                peer = transport::TcpAddress::parse(body.at("peer").get<std::string>());
            protocol::StartRole role = peer ? protocol::StartRole::initiator_sender
                                            : protocol::StartRole::responder_receiver;
            if (body.contains("role")) {
                std::string r = body.at("role").get<std::string>();
                if (r == "initiator") {
                    role = protocol::StartRole::initiator_sender;
                } else if (r == "responder") {
                    role = protocol::StartRole::responder_receiver;
                } else {
                    throw model::ParseError(model::ParseErrorKind::schema,
                                            "role must be \"initiator\" or \"responder\"");
                }
            }
            apply(Update::of_goal(tasks));
            protocol::NegotiationOutcome outcome = start_negotiation(tasks, peer, role);
            res.status = 200;
            res.set_content(outcome_to_json(outcome).dump(), "application/json");
        } catch (const model::ParseError& e) {
            reply_error(res, 400, e.what());
        } catch (const ValidationFailure& e) {
            res.status = 400;
            res.set_content(findings_to_json(e.findings()).dump(), "application/json");
        } catch (const BusyError& e) {
            reply_error(res, 409, e.what());
        } catch (const NotConfiguredError& e) {
            reply_error(res, 422, e.what());
        } catch (const transport::TransportError& e) {
            reply_error(res, 502, e.what());
        }
    });

    http_->Get("/state", [this](const httplib::Request&, httplib::Response& res) {
        res.status = 200;
        res.set_content(state_summary_json(), "application/json");
    });
}

} // namespace ethinego::node
