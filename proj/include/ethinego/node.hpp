#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ethinego/model.hpp"
#include "ethinego/protocol.hpp"
#include "ethinego/transport.hpp"

namespace httplib {
class Server;
}

namespace ethinego::node {

enum class FallbackPolicy { initiator_wins, none };

struct AgentConfig {
    std::string agent_id = "agent";
    std::string http_bind = "127.0.0.1:8080";
    std::string peer_bind = "127.0.0.1:9090";
    int timeout_ms = 5000;
    std::size_t disclosure_step = 1;
    FallbackPolicy fallback = FallbackPolicy::initiator_wins;
};

struct AgentEvent {
    std::string name;
    std::string detail;

    bool operator==(const AgentEvent&) const = default;
};

/// The node's negotiation-relevant state. `active` is present exactly when
/// profile and context are both present and the profile grades the context.
struct AgentState {
    std::optional<model::EthicalProfile> profile;
    std::optional<model::UserStatus> status;
    std::optional<model::ContextModel> context;
    std::optional<model::ContextProfile> active;
    model::ActivationRuleSet rules;
    std::optional<std::vector<std::string>> goal;
    std::vector<AgentEvent> events;
};

enum class UpdateKind { profile, status, context, rules, goal };

struct Update {
    UpdateKind kind = UpdateKind::status;
    std::optional<model::EthicalProfile> profile;
    std::optional<model::UserStatus> status;
    std::optional<model::ContextModel> context;
    std::optional<model::ActivationRuleSet> rules;
    std::optional<std::vector<std::string>> goal;

    static Update of(model::EthicalProfile profile);
    static Update of(model::UserStatus status);
    static Update of(model::ContextModel context);
    static Update of(model::ActivationRuleSet rules);
    static Update of_goal(std::vector<std::string> tasks);
};

class ValidationFailure : public Error {
public:
    explicit ValidationFailure(std::vector<model::Finding> findings);
    const std::vector<model::Finding>& findings() const { return findings_; }

private:
    std::vector<model::Finding> findings_;
};

class NotConfiguredError : public Error {
public:
    using Error::Error;
};

class BusyError : public Error {
public:
    BusyError() : Error("a negotiation session is active") {}
};

/// Applies one update to the state. Context updates re-select the active
/// profile only when the context actually changed; profile updates re-select
/// unconditionally. Emits profile_activated / no_profile_for_context events;
/// a context without grades is an event, not a failure.
std::vector<AgentEvent> apply_update(AgentState& state, const Update& update);

std::string to_json_string(const protocol::NegotiationOutcome& outcome);

/// The per-agent runtime: holds the state, serves the HTTP configuration
/// API, listens for peer sessions, and snapshots state when a negotiation
/// starts so later updates cannot affect a running session.
class AgentNode {
public:
    explicit AgentNode(AgentConfig config);
    ~AgentNode();
    AgentNode(const AgentNode&) = delete;
    AgentNode& operator=(const AgentNode&) = delete;

    /// Binds the peer listener and the HTTP server. Throws
    /// transport::BindError when either address is taken.
    void start();
    void stop();

    std::uint16_t http_port() const { return http_port_; }
    std::uint16_t peer_port() const { return peer_port_; }
    const AgentConfig& config() const { return config_; }

    /// Rejected with BusyError while a negotiation session is active.
    std::vector<AgentEvent> apply(const Update& update);

    /// Snapshots (active, status, rules) and runs one session. Initiators
    /// connect to `peer`; responders wait for an incoming session matching
    /// the goal's task list.
    protocol::NegotiationOutcome start_negotiation(const std::vector<std::string>& tasks,
                                                   const std::optional<transport::TcpAddress>& peer,
                                                   protocol::StartRole role);

    /// Same, over an already-connected endpoint.
    protocol::NegotiationOutcome start_negotiation_on(const std::vector<std::string>& tasks,
                                                      std::shared_ptr<transport::Endpoint> endpoint,
                                                      protocol::StartRole role);

    std::string state_summary_json() const;

private:
    struct Snapshot {
        model::ContextProfile active;
        model::UserStatus status;
        model::ActivationRuleSet rules;
    };
    struct PendingGoal;

    Snapshot begin_session(const std::vector<std::string>& tasks);
    void end_session(const protocol::NegotiationOutcome& outcome);
    protocol::NegotiationOutcome run_session(const Snapshot& snapshot,
                                             const std::vector<std::string>& tasks,
                                             transport::Endpoint& endpoint, protocol::StartRole role);
    std::shared_ptr<transport::Endpoint> await_incoming(const std::vector<std::string>& tasks);
    void listener_loop();
    void setup_routes();

    AgentConfig config_;
    mutable std::mutex mu_;
    std::condition_variable pending_cv_;
    AgentState state_;
    bool negotiating_ = false;
    bool stopping_ = false;
    std::shared_ptr<PendingGoal> pending_;
    std::optional<protocol::NegotiationOutcome> last_outcome_;

    std::unique_ptr<transport::TcpListener> listener_;
    std::thread listener_thread_;
    std::unique_ptr<httplib::Server> http_;
    std::thread http_thread_;
    std::uint16_t http_port_ = 0;
    std::uint16_t peer_port_ = 0;
};

} // namespace ethinego::node
