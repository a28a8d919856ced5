// Copyright 2026 The qshard Authors.

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     http://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <thread>

#include "qshard/comm.hpp"

namespace qshard {

namespace {

class Socket {
  public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket &&other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket &operator=(Socket &&other) noexcept {
        if (this != &other) {
            close();
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    ~Socket() { close(); }

    int fd() const { return fd_; }
    explicit operator bool() const { return fd_ >= 0; }

    void close() {
        if (fd_ >= 0)
            ::close(fd_);
        fd_ = -1;
    }

    void send_all(const void *data, std::size_t size) const {
        const char *p = static_cast<const char *>(data);
        while (size > 0) {
            ssize_t n = ::send(fd_, p, size, MSG_NOSIGNAL);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                throw CommError("tcp send failed");
            p += n;
            size -= static_cast<std::size_t>(n);
        }
    }

    void recv_all(void *data, std::size_t size) const {
        char *p = static_cast<char *>(data);
        while (size > 0) {
            ssize_t n = ::recv(fd_, p, size, 0);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                throw CommError("tcp peer closed the connection");
            p += n;
            size -= static_cast<std::size_t>(n);
        }
    }

    // Frame: u8 status, u64 length, payload.
    void send_frame(std::span<const std::byte> payload, std::uint8_t status = 0) const {
        const std::uint64_t len = payload.size();
        send_all(&status, 1);
        send_all(&len, sizeof len);
        if (len)
            send_all(payload.data(), len);
    }

    Bytes recv_frame(std::uint8_t *status = nullptr) const {
        std::uint8_t st = 0;
        std::uint64_t len = 0;
        recv_all(&st, 1);
        recv_all(&len, sizeof len);
        Bytes out(len);
        if (len)
            recv_all(out.data(), len);
        if (status)
            *status = st;
        else if (st != 0)
            throw CommError(std::string(reinterpret_cast<const char *>(out.data()), out.size()));
        return out;
    }

  private:
    int fd_ = -1;
};

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Bytes message(const std::string &text) {
    Bytes out(text.size());
    std::memcpy(out.data(), text.data(), text.size());
    return out;
}

class TcpCommunicator final : public Communicator {
  public:
    // Root: peers_[r] is the connection to rank r (peers_[0] unused).
    TcpCommunicator(int rank, int world, std::vector<Socket> peers)
        : Communicator(rank, world, Transport::Tcp), peers_(std::move(peers)) {}

    void barrier() override { do_all_gather({}); }

  protected:
    Bytes do_all_gather(std::span<const std::byte> local) override {
        if (rank() != 0) {
            upstream().send_frame(local);
            return upstream().recv_frame();
        }
        std::vector<Bytes> parts(world());
        parts[0] = Bytes(local.begin(), local.end());
        bool mismatch = false;
        for (int r = 1; r < world(); ++r) {
            parts[r] = peers_[r].recv_frame();
            mismatch = mismatch || parts[r].size() != local.size();
        }
        if (mismatch) {
            const auto err = message("all_gather: contribution lengths differ across ranks");
            for (int r = 1; r < world(); ++r)
                peers_[r].send_frame(err, 1);
            throw CommError("all_gather: contribution lengths differ across ranks");
        }
        Bytes all;
        for (auto &p : parts)
            all.insert(all.end(), p.begin(), p.end());
        for (int r = 1; r < world(); ++r)
            peers_[r].send_frame(all);
        return all;
    }

    std::vector<Bytes> do_all_to_all(std::vector<Bytes> blocks) override {
        if (rank() != 0) {
            for (const auto &b : blocks)
                upstream().send_frame(b);
            std::vector<Bytes> out(world());
            for (auto &b : out)
                b = upstream().recv_frame();
            return out;
        }
        std::vector<std::vector<Bytes>> grid(world());
        grid[0] = std::move(blocks);
        for (int r = 1; r < world(); ++r) {
            grid[r].resize(world());
            for (auto &b : grid[r])
                b = peers_[r].recv_frame();
        }
        for (int dst = 1; dst < world(); ++dst)
            for (int src = 0; src < world(); ++src)
                peers_[dst].send_frame(grid[src][dst]);
        std::vector<Bytes> out(world());
        for (int src = 0; src < world(); ++src)
            out[src] = std::move(grid[src][0]);
        return out;
    }

    void do_broadcast(Bytes &data, int root) override {
        if (rank() == 0) {
            if (root != 0)
                data = peers_[root].recv_frame();
            for (int r = 1; r < world(); ++r)
                if (r != root)
                    peers_[r].send_frame(data);
        } else if (rank() == root) {
            upstream().send_frame(data);
        } else {
            data = upstream().recv_frame();
        }
    }

  private:
    const Socket &upstream() const { return peers_[0]; }

    std::vector<Socket> peers_;
};

struct Hello {
    std::int32_t rank;
    std::int32_t world;
};

Socket connect_with_retry(const TcpEndpoint &endpoint) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo *res = nullptr;
    const std::string port = std::to_string(endpoint.port);
    if (::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
        throw CommError("cannot resolve " + endpoint.host);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
    while (true) {
        Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
        if (s && ::connect(s.fd(), res->ai_addr, res->ai_addrlen) == 0) {
            ::freeaddrinfo(res);
            set_nodelay(s.fd());
            return s;
        }
        if (std::chrono::steady_clock::now() > deadline) {
            ::freeaddrinfo(res);
            throw CommError("cannot connect to " + endpoint.host + ":" + port);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

} // namespace

std::unique_ptr<Communicator> connect_tcp(int rank, int world, const TcpEndpoint &endpoint,
                                          const std::function<void(int)> &on_listen) {
    if (!is_power_of_two(world))
        throw CommError("world size must be a power of two, got " + std::to_string(world));
    if (rank < 0 || rank >= world)
        throw CommError("rank " + std::to_string(rank) + " outside world of size " +
                        std::to_string(world));

    std::vector<Socket> peers(world);
    if (rank != 0) {
        peers[0] = connect_with_retry(endpoint);
        const Hello hello{rank, world};
        peers[0].send_all(&hello, sizeof hello);
        peers[0].recv_frame(); // ready or error
        return std::make_unique<TcpCommunicator>(rank, world, std::move(peers));
    }

    Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener)
        throw CommError("cannot create listening socket");
    int one = 1;
    ::setsockopt(listener.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(static_cast<std::uint16_t>(endpoint.port));
    if (::bind(listener.fd(), reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0)
        throw CommError("cannot bind port " + std::to_string(endpoint.port));
    if (::listen(listener.fd(), world) != 0)
        throw CommError("listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(listener.fd(), reinterpret_cast<sockaddr *>(&addr), &len);
    if (on_listen)
        on_listen(ntohs(addr.sin_port));

    std::vector<Socket> pending;
    std::string failure;
    for (int joined = 1; joined < world; ++joined) {
        Socket s(::accept(listener.fd(), nullptr, nullptr));
        if (!s)
            throw CommError("accept failed");
        set_nodelay(s.fd());
        Hello hello{};
        s.recv_all(&hello, sizeof hello);
        if (hello.world != world) {
            failure = "world size mismatch: rank " + std::to_string(hello.rank) + " reports " +
                      std::to_string(hello.world);
        } else if (hello.rank <= 0 || hello.rank >= world) {
            failure = "invalid rank " + std::to_string(hello.rank);
        } else if (peers[hello.rank]) {
            failure = "rank collision: rank " + std::to_string(hello.rank) + " joined twice";
        }
        if (!failure.empty()) {
            pending.push_back(std::move(s));
            break;
        }
        peers[hello.rank] = std::move(s);
    }
    if (!failure.empty()) {
        for (auto &s : pending)
            s.send_frame(message(failure), 1);
        for (int r = 1; r < world; ++r)
            if (peers[r])
                peers[r].send_frame(message(failure), 1);
        throw CommError(failure);
    }
    for (int r = 1; r < world; ++r)
        peers[r].send_frame({});
    return std::make_unique<TcpCommunicator>(0, world, std::move(peers));
}

} // namespace qshard
