#include "dqkd/session.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

namespace dqkd {

namespace {

struct TransportError : Error {
    using Error::Error;
};

std::pair<std::string, std::string> split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon + 1 == address.size()) {
        throw TransportError("address must be host:port, got '" + address + "'");
    }
    std::string host = address.substr(0, colon);
    if (host.empty()) host = "127.0.0.1";
    return {host, address.substr(colon + 1)};
}

addrinfo* resolve(const std::string& address, bool passive) {
    const auto [host, port] = split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    if (const int rc = getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
        throw TransportError("cannot resolve " + address + ": " + gai_strerror(rc));
    }
    return res;
}

class SocketTransport final : public Transport {
public:
    explicit SocketTransport(int fd) : fd_(fd) {
        int one = 1;
        setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    ~SocketTransport() override { ::close(fd_); }

    void send(std::span<const std::uint8_t> bytes) override {
        std::size_t sent = 0;
        while (sent < bytes.size()) {
            const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("socket send failed: ") + std::strerror(errno));
            }
            sent += static_cast<std::size_t>(n);
        }
    }

    std::vector<std::uint8_t> receive_frame() override {
        std::vector<std::uint8_t> buf(4);
        read_exact(buf.data(), 4);
        const std::uint32_t len = buf[0] | (buf[1] << 8) | (buf[2] << 16) |
                                  (static_cast<std::uint32_t>(buf[3]) << 24);
        if (len > kMaxPayloadBytes) throw TransportError("incoming frame exceeds 2^24 bytes");
        buf.resize(kFrameHeaderBytes + len + kFrameTrailerBytes);
        read_exact(buf.data() + 4, buf.size() - 4);
        return buf;
    }

private:
    void read_exact(std::uint8_t* dst, std::size_t n) {
        std::size_t got = 0;
        while (got < n) {
            const ssize_t r = ::recv(fd_, dst + got, n - got, 0);
            if (r == 0) throw TransportError("peer closed the connection");
            if (r < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("socket receive failed: ") + std::strerror(errno));
            }
            got += static_cast<std::size_t>(r);
        }
    }

    int fd_;
};

} // namespace

std::unique_ptr<Transport> listen_transport(const std::string& address) {
    addrinfo* res = resolve(address, true);
    int listener = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        listener = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (listener < 0) continue;
        int one = 1;
        setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(listener, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(listener, 1) == 0) break;
        ::close(listener);
        listener = -1;
    }
    freeaddrinfo(res);
    if (listener < 0) throw TransportError("cannot listen on " + address);
    const int fd = ::accept(listener, nullptr, nullptr);
    ::close(listener);
    if (fd < 0) throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    return std::make_unique<SocketTransport>(fd);
}

std::unique_ptr<Transport> connect_transport(const std::string& address, double timeout_s) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    for (;;) {
        addrinfo* res = resolve(address, false);
        for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
            const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
                freeaddrinfo(res);
                return std::make_unique<SocketTransport>(fd);
            }
            ::close(fd);
        }
        freeaddrinfo(res);
        if (std::chrono::steady_clock::now() > deadline) {
            throw TransportError("cannot connect to " + address);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

} // namespace dqkd
