#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ethinego/model.hpp"

namespace ethinego::transport {

enum class MessageType { hello, offer, empty, accept, reject, quit };

std::string_view to_string(MessageType type);

/// One wire message. seq is assigned by the endpoint on send when left at 0
/// and must increase by exactly one per direction within a session.
struct NegotiationMessage {
    MessageType type = MessageType::offer;
    std::string session;
    std::uint64_t seq = 0;
    // HELLO payload
    std::string agent;
    std::vector<std::string> tasks;
    // OFFER payload
    std::size_t index = 0;
    std::vector<std::string> conditions;

    static NegotiationMessage hello(std::string session, std::string agent, std::vector<std::string> tasks);
    static NegotiationMessage offer(std::string session, std::size_t index, std::vector<std::string> conditions);
    static NegotiationMessage empty(std::string session);
    static NegotiationMessage accept(std::string session);
    static NegotiationMessage reject(std::string session);
    static NegotiationMessage quit(std::string session);

    bool operator==(const NegotiationMessage&) const = default;
};

/// LF-terminated single-line JSON rendering of a message.
std::string encode_frame(const NegotiationMessage& msg);
/// Parses one frame (with or without the trailing LF). Malformed input
/// raises ProtocolError naming the byte offset.
NegotiationMessage decode_frame(std::string_view line);

class TransportError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public TransportError {
public:
    TimeoutError() : TransportError("timed out waiting for a message") {}
};

class ChannelClosedError : public TransportError {
public:
    ChannelClosedError() : TransportError("channel closed") {}
};

class ProtocolError : public TransportError {
public:
    explicit ProtocolError(const std::string& message, std::size_t byte_offset = 0)
        : TransportError(message), byte_offset_(byte_offset) {}
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_ = 0;
};

class ConnectError : public TransportError {
public:
    using TransportError::TransportError;
};

class BindError : public TransportError {
public:
    using TransportError::TransportError;
};

class HandshakeError : public TransportError {
public:
    using TransportError::TransportError;
};

/// Reliable ordered duplex channel between exactly two parties. send stamps
/// the per-direction sequence number and returns the message as put on the
/// wire; receive enforces the sequence is gap-free.
class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual NegotiationMessage send(NegotiationMessage msg) = 0;
    virtual NegotiationMessage receive(std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
    virtual bool is_open() const = 0;
    virtual const std::string& session_id() const = 0;
};

/// Two connected in-process endpoints with FIFO no-loss delivery.
std::pair<std::shared_ptr<Endpoint>, std::shared_ptr<Endpoint>> loopback_pair(std::string session_id);

struct TcpAddress {
    std::string host;
    std::uint16_t port = 0;

    static TcpAddress parse(const std::string& text);
    std::string to_string() const;
};

/// An accepted connection whose HELLO has been read but not yet answered.
class IncomingSession {
public:
    IncomingSession(IncomingSession&&) noexcept;
    IncomingSession& operator=(IncomingSession&&) noexcept;
    ~IncomingSession();

    const NegotiationMessage& hello() const { return hello_; }

    /// Replies HELLO with our task list and checks both lists agree.
    /// Mismatch closes the connection and raises HandshakeError; the peer
    /// sees the same mismatch from the reply it already received.
    std::shared_ptr<Endpoint> complete(const std::string& agent_id, const std::vector<std::string>& tasks);
    void refuse();

private:
    friend class TcpListener;
    IncomingSession(int fd, NegotiationMessage hello, std::string buffered);

    int fd_ = -1;
    NegotiationMessage hello_;
    std::string buffered_;
};

class TcpListener {
public:
    explicit TcpListener(const TcpAddress& bind_addr);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    /// Waits for a connection and its HELLO. Returns nullopt on timeout.
    std::optional<IncomingSession> accept(std::chrono::milliseconds timeout);
    std::uint16_t port() const { return port_; }
    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// Connects, sends HELLO first, and waits for the listener's HELLO reply.
/// The connecting party names the session "<agent_id>/<counter>" and becomes
/// the initial sender. Task lists must agree or both sides abort.
std::shared_ptr<Endpoint> tcp_connect(const TcpAddress& peer, const std::string& agent_id,
                                      const std::vector<std::string>& tasks,
                                      std::chrono::milliseconds timeout);

} // namespace ethinego::transport
