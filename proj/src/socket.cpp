// TCP stream channel: frames over a connected socket.

#include "tpmkex/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace tpmkex {

namespace {

struct HostPort {
    std::string host;
    std::string port;
};

HostPort split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 ||
        colon + 1 == address.size())
        throw ConfigError("address must be host:port, got '" + address + "'");
    return {address.substr(0, colon), address.substr(colon + 1)};
}

[[noreturn]] void throw_errno(const std::string& what) {
    throw TransportError(what + ": " + std::strerror(errno));
}

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
    while (len > 0) {
        const ssize_t n = ::write(fd, data, len);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("socket write failed");
        }
        data += n;
        len -= static_cast<std::size_t>(n);
    }
}

void read_all(int fd, std::uint8_t* data, std::size_t len) {
    while (len > 0) {
        const ssize_t n = ::read(fd, data, len);
        if (n == 0) throw ChannelClosed("peer closed the connection");
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("socket read failed");
        }
        data += n;
        len -= static_cast<std::size_t>(n);
    }
}

class SocketChannel : public Channel {
public:
    explicit SocketChannel(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    ~SocketChannel() override { close(); }

    void send(const Frame& frame) override {
        if (fd_ < 0) throw TransportError("send on closed channel");
        const auto bytes = encode_frame(frame);
        write_all(fd_, bytes.data(), bytes.size());
    }

    Frame receive() override {
        if (fd_ < 0) throw ChannelClosed("channel closed locally");
        std::vector<std::uint8_t> bytes(7);
        read_all(fd_, bytes.data(), 7);
        const std::size_t len =
            (static_cast<std::size_t>(bytes[5]) << 8) | bytes[6];
        if (len > max_payload_bytes)
            throw FramingError("payload length out of range: " +
                               std::to_string(len));
        bytes.resize(frame_overhead_bytes + len);
        read_all(fd_, bytes.data() + 7, len + 4);
        return decode_frame(bytes);
    }

    void close() override {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_;
};

int resolve_and_bind(const HostPort& hp) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (::getaddrinfo(hp.host.c_str(), hp.port.c_str(), &hints, &res) != 0)
        throw TransportError("cannot resolve '" + hp.host + ":" + hp.port + "'");
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw_errno("cannot bind " + hp.host + ":" + hp.port);
    return fd;
}

}  // namespace

std::unique_ptr<Channel> connect_channel(const std::string& address) {
    const HostPort hp = split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(hp.host.c_str(), hp.port.c_str(), &hints, &res) != 0)
        throw TransportError("cannot resolve '" + address + "'");
    int fd = -1;
    int saved = 0;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        saved = errno;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) {
        errno = saved;
        throw_errno("connect to " + address + " failed");
    }
    return std::make_unique<SocketChannel>(fd);
}

Listener::Listener(const std::string& address) {
    fd_ = resolve_and_bind(split_address(address));
    if (::listen(fd_, 1) != 0) throw_errno("listen failed");
    sockaddr_storage ss{};
    socklen_t slen = sizeof ss;
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &slen) == 0) {
        if (ss.ss_family == AF_INET)
            port_ = ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
        else if (ss.ss_family == AF_INET6)
            port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
    }
}

Listener::~Listener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> Listener::accept_one() {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw_errno("accept failed");
    return std::make_unique<SocketChannel>(fd);
}

}  // namespace tpmkex
