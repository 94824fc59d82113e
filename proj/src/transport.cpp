#include "ethinego/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "json.hpp"

namespace ethinego::transport {

using nlohmann::ordered_json;
using std::chrono::milliseconds;
using std::chrono::steady_clock;

std::string_view to_string(MessageType type) {
    switch (type) {
        case MessageType::hello: return "HELLO";
        case MessageType::offer: return "OFFER";
        case MessageType::empty: return "EMPTY";
        case MessageType::accept: return "ACCEPT";
        case MessageType::reject: return "REJECT";
        case MessageType::quit: return "QUIT";
    }
    return "?";
}

NegotiationMessage NegotiationMessage::hello(std::string session, std::string agent,
                                             std::vector<std::string> tasks) {
    NegotiationMessage m;
    m.type = MessageType::hello;
    m.session = std::move(session);
    m.agent = std::move(agent);
    m.tasks = std::move(tasks);
    return m;
}

NegotiationMessage NegotiationMessage::offer(std::string session, std::size_t index,
                                             std::vector<std::string> conditions) {
    NegotiationMessage m;
    m.type = MessageType::offer;
    m.session = std::move(session);
    m.index = index;
    m.conditions = std::move(conditions);
    return m;
}

namespace {

NegotiationMessage control(MessageType type, std::string session) {
    NegotiationMessage m;
    m.type = type;
    m.session = std::move(session);
    return m;
}

} // namespace

NegotiationMessage NegotiationMessage::empty(std::string session) {
    return control(MessageType::empty, std::move(session));
}
NegotiationMessage NegotiationMessage::accept(std::string session) {
    return control(MessageType::accept, std::move(session));
}
NegotiationMessage NegotiationMessage::reject(std::string session) {
    return control(MessageType::reject, std::move(session));
}
NegotiationMessage NegotiationMessage::quit(std::string session) {
    return control(MessageType::quit, std::move(session));
}

std::string encode_frame(const NegotiationMessage& msg) {
    ordered_json j;
    j["type"] = std::string(to_string(msg.type));
    j["session"] = msg.session;
    j["seq"] = msg.seq;
    switch (msg.type) {
        case MessageType::hello:
            j["agent"] = msg.agent;
            j["tasks"] = msg.tasks;
            break;
        case MessageType::offer:
            j["index"] = msg.index;
            j["conditions"] = msg.conditions;
            break;
        default:
            break;
    }
    return j.dump() + "\n";
}

NegotiationMessage decode_frame(std::string_view line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
        throw ProtocolError("malformed frame at byte " + std::to_string(e.byte) + ": " + e.what(), e.byte);
    }
    if (!j.is_object()) throw ProtocolError("frame is not a JSON object");
    auto require = [&](const char* key) -> const ordered_json& {
        if (!j.contains(key)) throw ProtocolError(std::string("frame misses field \"") + key + "\"");
        return j.at(key);
    };
    NegotiationMessage m;
    const std::string type = require("type").is_string() ? j.at("type").get<std::string>() : "";
    if (type == "HELLO") {
        m.type = MessageType::hello;
    } else if (type == "OFFER") {
        m.type = MessageType::offer;
    } else if (type == "EMPTY") {
        m.type = MessageType::empty;
    } else if (type == "ACCEPT") {
        m.type = MessageType::accept;
    } else if (type == "REJECT") {
        m.type = MessageType::reject;
    } else if (type == "QUIT") {
        m.type = MessageType::quit;
    } else {
        throw ProtocolError("unknown frame type \"" + type + "\"");
    }
    if (!require("session").is_string()) throw ProtocolError("frame field \"session\" must be a string");
    m.session = j.at("session").get<std::string>();
    if (!require("seq").is_number_unsigned()) throw ProtocolError("frame field \"seq\" must be an unsigned integer");
    m.seq = j.at("seq").get<std::uint64_t>();

    std::vector<std::string> known = {"type", "session", "seq"};
    if (m.type == MessageType::hello) {
        if (!require("agent").is_string()) throw ProtocolError("HELLO field \"agent\" must be a string");
        m.agent = j.at("agent").get<std::string>();
        if (!require("tasks").is_array()) throw ProtocolError("HELLO field \"tasks\" must be an array");
        for (const auto& t : j.at("tasks")) {
            if (!t.is_string()) throw ProtocolError("HELLO tasks must be strings");
            m.tasks.push_back(t.get<std::string>());
        }
        known.insert(known.end(), {"agent", "tasks"});
    } else if (m.type == MessageType::offer) {
        if (!require("index").is_number_unsigned()) throw ProtocolError("OFFER field \"index\" must be an unsigned integer");
        m.index = j.at("index").get<std::size_t>();
        if (!require("conditions").is_array()) throw ProtocolError("OFFER field \"conditions\" must be an array");
        for (const auto& c : j.at("conditions")) {
            if (!c.is_string()) throw ProtocolError("OFFER conditions must be strings");
            m.conditions.push_back(c.get<std::string>());
        }
        if (m.conditions.empty()) throw ProtocolError("OFFER must disclose at least one condition");
        known.insert(known.end(), {"index", "conditions"});
    }
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ProtocolError("frame carries unknown field \"" + key + "\"");
    }
    return m;
}

// ---------------------------------------------------------------------------
// Sequence bookkeeping shared by all endpoint kinds

namespace {

class SeqTracker {
public:
    void stamp(NegotiationMessage& msg) {
        if (msg.seq == 0) {
            msg.seq = ++send_seq_;
        } else {
            send_seq_ = msg.seq;
        }
    }

    void check(const NegotiationMessage& msg) {
        if (msg.seq != recv_seq_ + 1)
            throw ProtocolError("out-of-order seq: expected " + std::to_string(recv_seq_ + 1) +
                                ", got " + std::to_string(msg.seq));
        recv_seq_ = msg.seq;
    }

    void start_after_handshake() {
        send_seq_ = 1;
        recv_seq_ = 1;
    }

private:
    std::uint64_t send_seq_ = 0;
    std::uint64_t recv_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Loopback

struct LoopbackChannel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> queue;
    bool closed = false;

    void push(const std::string& frame) {
        {
            std::lock_guard lk(mu);
            if (closed) throw ChannelClosedError();
            queue.push_back(frame);
        }
        cv.notify_one();
    }

    std::string pop(milliseconds timeout) {
        std::unique_lock lk(mu);
        if (!cv.wait_for(lk, timeout, [&] { return !queue.empty() || closed; })) throw TimeoutError();
        if (queue.empty()) throw ChannelClosedError();
        std::string frame = std::move(queue.front());
        queue.pop_front();
        return frame;
    }

    void close() {
        {
            std::lock_guard lk(mu);
            closed = true;
        }
        cv.notify_all();
    }
};

class LoopbackEndpoint final : public Endpoint {
public:
    LoopbackEndpoint(std::string session, std::shared_ptr<LoopbackChannel> out,
                     std::shared_ptr<LoopbackChannel> in)
        : session_(std::move(session)), out_(std::move(out)), in_(std::move(in)) {}

    NegotiationMessage send(NegotiationMessage msg) override {
        if (!open_) throw ChannelClosedError();
        msg.session = msg.session.empty() ? session_ : msg.session;
        seq_.stamp(msg);
        out_->push(encode_frame(msg));
        return msg;
    }

    NegotiationMessage receive(milliseconds timeout) override {
        if (!open_) throw ChannelClosedError();
        NegotiationMessage msg = decode_frame(in_->pop(timeout));
        seq_.check(msg);
        return msg;
    }

    void close() override {
        open_ = false;
        out_->close();
        in_->close();
    }

    bool is_open() const override { return open_; }
    const std::string& session_id() const override { return session_; }

private:
    std::string session_;
    std::shared_ptr<LoopbackChannel> out_;
    std::shared_ptr<LoopbackChannel> in_;
    SeqTracker seq_;
    bool open_ = true;
};

// ---------------------------------------------------------------------------
// TCP plumbing

milliseconds remaining(steady_clock::time_point deadline) {
    auto left = std::chrono::duration_cast<milliseconds>(deadline - steady_clock::now());
    return left.count() > 0 ? left : milliseconds(0);
}

void poll_readable(int fd, steady_clock::time_point deadline) {
    pollfd p{fd, POLLIN, 0};
    int rc = ::poll(&p, 1, static_cast<int>(remaining(deadline).count()));
    if (rc == 0) throw TimeoutError();
    if (rc < 0) throw TransportError(std::string("poll failed: ") + std::strerror(errno));
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

void write_all(int fd, const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EPIPE || errno == ECONNRESET) throw ChannelClosedError();
            throw TransportError(std::string("send failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

// Reads one LF-terminated line, keeping surplus bytes in `buffer`.
std::string read_line(int fd, std::string& buffer, milliseconds timeout) {
    auto deadline = steady_clock::now() + timeout;
    for (;;) {
        auto pos = buffer.find('\n');
        if (pos != std::string::npos) {
            std::string line = buffer.substr(0, pos + 1);
            buffer.erase(0, pos + 1);
            return line;
        }
        char chunk[4096];
        ssize_t n = ::recv(fd, chunk, sizeof chunk, MSG_DONTWAIT);
        if (n > 0) {
            buffer.append(chunk, static_cast<std::size_t>(n));
            continue;
        }
        if (n == 0) throw ChannelClosedError();
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) {
            poll_readable(fd, deadline);
            continue;
        }
        if (errno == ECONNRESET) throw ChannelClosedError();
        throw TransportError(std::string("recv failed: ") + std::strerror(errno));
    }
}

void close_fd(int& fd) {
    if (fd >= 0) {
        ::shutdown(fd, SHUT_RDWR);
        ::close(fd);
        fd = -1;
    }
}

sockaddr_in resolve(const TcpAddress& addr) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(addr.port);
    const char* host = addr.host.empty() || addr.host == "localhost" ? "127.0.0.1" : addr.host.c_str();
    if (::inet_pton(AF_INET, host, &sa.sin_addr) != 1)
        throw TransportError("cannot parse IPv4 address \"" + addr.host + "\"");
    return sa;
}

class TcpEndpoint final : public Endpoint {
public:
    TcpEndpoint(int fd, std::string session, std::string buffered)
        : fd_(fd), session_(std::move(session)), buffer_(std::move(buffered)) {
        seq_.start_after_handshake();
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    ~TcpEndpoint() override { close_fd(fd_); }

    NegotiationMessage send(NegotiationMessage msg) override {
        if (fd_ < 0) throw ChannelClosedError();
        msg.session = msg.session.empty() ? session_ : msg.session;
        seq_.stamp(msg);
        write_all(fd_, encode_frame(msg));
        return msg;
    }

    NegotiationMessage receive(milliseconds timeout) override {
        if (fd_ < 0) throw ChannelClosedError();
        std::string line = read_line(fd_, buffer_, timeout);
        NegotiationMessage msg = decode_frame(line);
        seq_.check(msg);
        return msg;
    }

    void close() override { close_fd(fd_); }
    bool is_open() const override { return fd_ >= 0; }
    const std::string& session_id() const override { return session_; }

private:
    int fd_ = -1;
    std::string session_;
    std::string buffer_;
    SeqTracker seq_;
};

std::atomic<std::uint64_t> session_counter{0};

bool same_task_set(std::vector<std::string> a, std::vector<std::string> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

std::string task_list(const std::vector<std::string>& tasks) {
    std::string out = "{";
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (i) out += ", ";
        out += tasks[i];
    }
    return out + "}";
}

} // namespace

std::pair<std::shared_ptr<Endpoint>, std::shared_ptr<Endpoint>> loopback_pair(std::string session_id) {
    auto ab = std::make_shared<LoopbackChannel>();
    auto ba = std::make_shared<LoopbackChannel>();
    auto a = std::make_shared<LoopbackEndpoint>(session_id, ab, ba);
    auto b = std::make_shared<LoopbackEndpoint>(std::move(session_id), ba, ab);
    return {a, b};
}

TcpAddress TcpAddress::parse(const std::string& text) {
    auto pos = text.rfind(':');
    if (pos == std::string::npos || pos + 1 >= text.size())
        throw TransportError("address must look like host:port, got \"" + text + "\"");
    TcpAddress addr;
    addr.host = text.substr(0, pos);
    try {
        unsigned long port = std::stoul(text.substr(pos + 1));
        if (port > 65535) throw std::out_of_range("port");
        addr.port = static_cast<std::uint16_t>(port);
    } catch (const std::exception&) {
        throw TransportError("invalid port in address \"" + text + "\"");
    }
    return addr;
}

std::string TcpAddress::to_string() const {
    return host + ":" + std::to_string(port);
}

// ---------------------------------------------------------------------------
// IncomingSession / TcpListener

IncomingSession::IncomingSession(int fd, NegotiationMessage hello, std::string buffered)
    : fd_(fd), hello_(std::move(hello)), buffered_(std::move(buffered)) {}

IncomingSession::IncomingSession(IncomingSession&& other) noexcept
    : fd_(other.fd_), hello_(std::move(other.hello_)), buffered_(std::move(other.buffered_)) {
    other.fd_ = -1;
}

IncomingSession& IncomingSession::operator=(IncomingSession&& other) noexcept {
    if (this != &other) {
        close_fd(fd_);
        fd_ = other.fd_;
        hello_ = std::move(other.hello_);
        buffered_ = std::move(other.buffered_);
        other.fd_ = -1;
    }
    return *this;
}

IncomingSession::~IncomingSession() { close_fd(fd_); }

std::shared_ptr<Endpoint> IncomingSession::complete(const std::string& agent_id,
                                                    const std::vector<std::string>& tasks) {
    if (fd_ < 0) throw ChannelClosedError();
    NegotiationMessage reply = NegotiationMessage::hello(hello_.session, agent_id, tasks);
    reply.seq = 1;
    write_all(fd_, encode_frame(reply));
    if (!same_task_set(hello_.tasks, tasks)) {
        close_fd(fd_);
        throw HandshakeError("task-set mismatch: peer negotiates about " + task_list(hello_.tasks) +
                             ", we negotiate about " + task_list(tasks));
    }
    int fd = fd_;
    fd_ = -1;
    return std::make_shared<TcpEndpoint>(fd, hello_.session, std::move(buffered_));
}

void IncomingSession::refuse() { close_fd(fd_); }

TcpListener::TcpListener(const TcpAddress& bind_addr) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw BindError(std::string("socket failed: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa = resolve(bind_addr);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
        int err = errno;
        close_fd(fd_);
        throw BindError("cannot bind " + bind_addr.to_string() + ": " + std::strerror(err));
    }
    if (::listen(fd_, 16) < 0) {
        int err = errno;
        close_fd(fd_);
        throw BindError(std::string("listen failed: ") + std::strerror(err));
    }
    sockaddr_in actual{};
    socklen_t len = sizeof actual;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&actual), &len);
    port_ = ntohs(actual.sin_port);
}

TcpListener::~TcpListener() { close_fd(fd_); }

void TcpListener::close() { close_fd(fd_); }

std::optional<IncomingSession> TcpListener::accept(std::chrono::milliseconds timeout) {
    if (fd_ < 0) throw ChannelClosedError();
    auto deadline = steady_clock::now() + timeout;
    try {
        poll_readable(fd_, deadline);
    } catch (const TimeoutError&) {
        return std::nullopt;
    }
    int conn = ::accept(fd_, nullptr, nullptr);
    if (conn < 0) {
        if (fd_ < 0 || errno == EBADF || errno == EINVAL) throw ChannelClosedError();
        throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    }
    set_nodelay(conn);
    std::string buffer;
    NegotiationMessage hello;
    try {
        std::string line = read_line(conn, buffer, remaining(deadline));
        hello = decode_frame(line);
    } catch (...) {
        close_fd(conn);
        throw;
    }
    if (hello.type != MessageType::hello || hello.seq != 1) {
        close_fd(conn);
        throw ProtocolError("handshake must start with a HELLO frame at seq 1");
    }
    return IncomingSession(conn, std::move(hello), std::move(buffer));
}

std::shared_ptr<Endpoint> tcp_connect(const TcpAddress& peer, const std::string& agent_id,
                                      const std::vector<std::string>& tasks,
                                      std::chrono::milliseconds timeout) {
    auto deadline = steady_clock::now() + timeout;
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConnectError(std::string("socket failed: ") + std::strerror(errno));
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    sockaddr_in sa = resolve(peer);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    if (rc < 0 && errno != EINPROGRESS) {
        int err = errno;
        close_fd(fd);
        throw ConnectError("cannot connect to " + peer.to_string() + ": " + std::strerror(err));
    }
    if (rc < 0) {
        pollfd p{fd, POLLOUT, 0};
        int ready = ::poll(&p, 1, static_cast<int>(remaining(deadline).count()));
        if (ready <= 0) {
            close_fd(fd);
            throw ConnectError("connect to " + peer.to_string() + " timed out");
        }
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            close_fd(fd);
            throw ConnectError("cannot connect to " + peer.to_string() + ": " + std::strerror(err));
        }
    }
    ::fcntl(fd, F_SETFL, flags);
    set_nodelay(fd);

    std::string session = agent_id + "/" + std::to_string(++session_counter);
    NegotiationMessage hello = NegotiationMessage::hello(session, agent_id, tasks);
    hello.seq = 1;
    std::string buffer;
    try {
        write_all(fd, encode_frame(hello));
        std::string line = read_line(fd, buffer, remaining(deadline));
        NegotiationMessage reply = decode_frame(line);
        if (reply.type != MessageType::hello || reply.seq != 1)
            throw ProtocolError("expected a HELLO reply at seq 1");
        if (reply.session != session)
            throw ProtocolError("HELLO reply names session \"" + reply.session + "\", expected \"" + session + "\"");
        if (!same_task_set(reply.tasks, tasks))
            throw HandshakeError("task-set mismatch: peer negotiates about " + task_list(reply.tasks) +
                                 ", we negotiate about " + task_list(tasks));
    } catch (...) {
        close_fd(fd);
        throw;
    }
    return std::make_shared<TcpEndpoint>(fd, std::move(session), std::move(buffer));
}

} // namespace ethinego::transport
