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
/**
 * @file comm.hpp
 * Rank/world abstraction: collectives, shared-seed randomness and
 * communication metrics.
 *
 * Every collective must be called by all ranks in the same order with
 * compatible arguments. Ranks share nothing outside collectives.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <algorithm>
#include <string>
#include <random>
#include <span>
#include <vector>

#include "qshard/common.hpp"
#include "qshard/memory.hpp"

namespace qshard {

using Bytes = std::vector<std::byte>;

struct CommMetrics {
    double all_to_all_seconds = 0.0;
    std::uint64_t all_to_all_bytes = 0;
    std::uint64_t peak_local_bytes = 0;
};

enum class Transport { InProcess, Tcp };

class Communicator {
  public:
    Communicator(int rank, int world, Transport transport);
    virtual ~Communicator() = default;

    Communicator(const Communicator &) = delete;
    Communicator &operator=(const Communicator &) = delete;

    int rank() const { return rank_; }
    int world() const { return world_; }
    Transport transport() const { return transport_; }

    virtual void barrier() = 0;

    /// Rank-ordered concatenation; all contributions must have equal length.
    Bytes all_gather(std::span<const std::byte> local);

    /// blocks[d] goes to rank d; result[s] came from rank s. Timed and counted.
    std::vector<Bytes> all_to_all(std::vector<Bytes> blocks);

    void broadcast(Bytes &data, int root);

    CommMetrics read_metrics() const;

    /// Tracker shared by every amplitude buffer living on this rank.
    const std::shared_ptr<MemoryTracker> &memory() const { return memory_; }

  protected:
    virtual Bytes do_all_gather(std::span<const std::byte> local) = 0;
    virtual std::vector<Bytes> do_all_to_all(std::vector<Bytes> blocks) = 0;
    virtual void do_broadcast(Bytes &data, int root) = 0;

  private:
    int rank_;
    int world_;
    Transport transport_;
    double a2a_seconds_ = 0.0;
    std::uint64_t a2a_bytes_ = 0;
    std::shared_ptr<MemoryTracker> memory_ = std::make_shared<MemoryTracker>();
};

template <typename T> std::span<const std::byte> as_bytes_span(std::span<const T> values) {
    return std::as_bytes(values);
}

template <typename T> Bytes to_bytes(std::span<const T> values) {
    static_assert(std::is_trivially_copyable_v<T>);
    Bytes out(values.size_bytes());
    if (!out.empty())
        std::memcpy(out.data(), values.data(), out.size());
    return out;
}

template <typename T> std::vector<T> from_bytes(std::span<const std::byte> bytes) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!out.empty())
        std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
    return out;
}

/// Identical rank-ordered concatenation on every rank.
template <typename T> std::vector<T> all_gather_vec(Communicator &comm, std::span<const T> local) {
    if (comm.world() == 1)
        return std::vector<T>(local.begin(), local.end());
    return from_bytes<T>(comm.all_gather(std::as_bytes(local)));
}

/// Element-wise sum across ranks, accumulated in rank order so every rank gets the same bits.
template <typename T> void all_reduce_sum(Communicator &comm, std::span<T> values) {
    if (comm.world() == 1)
        return;
    const auto all = all_gather_vec<T>(comm, std::span<const T>(values.data(), values.size()));
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < n; ++i) {
        T acc = all[i];
        for (int r = 1; r < comm.world(); ++r)
            acc += all[r * n + i];
        values[i] = acc;
    }
}

template <typename T> T all_reduce_max(Communicator &comm, T value) {
    const auto all = all_gather_vec<T>(comm, std::span<const T>(&value, 1));
    return *std::max_element(all.begin(), all.end());
}

/// splitmix64 finaliser used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t value);
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

/// Same stream on every rank for the same seed.
std::mt19937_64 shared_seed_rng(const Communicator &comm, std::uint64_t seed);

/// Stream seeded from hash(seed, rank); differs between ranks.
std::mt19937_64 rank_rng(const Communicator &comm, std::uint64_t seed);

// ---------------------------------------------------------------------------
// In-process transport

class InProcessHub;

/**
 * @brief A world of cooperating ranks hosted as threads of one process.
 *
 * Collectives are rendezvous points on a shared hub; a failure on one rank
 * aborts the hub so the others raise CommAborted instead of blocking.
 */
class InProcessWorld {
  public:
    explicit InProcessWorld(int world);
    ~InProcessWorld();

    int world() const { return world_; }

    /// Claims `rank`; claiming a rank twice is an error.
    std::unique_ptr<Communicator> communicator(int rank);

    void abort();

  private:
    int world_;
    std::shared_ptr<InProcessHub> hub_;
};

/// Run `body` on `world` in-process ranks; rethrows the first genuine failure.
void run_in_process(int world, const std::function<void(Communicator &)> &body);

/// Collects one value per rank from an in-process run, indexed by rank.
template <typename Result>
std::vector<Result> run_in_process_collect(int world,
                                           const std::function<Result(Communicator &)> &body) {
    std::vector<Result> results(world);
    run_in_process(world, [&](Communicator &comm) { results[comm.rank()] = body(comm); });
    return results;
}

/// init_comm for the in-process harness with a single rank.
std::unique_ptr<Communicator> make_single_rank_comm();

// ---------------------------------------------------------------------------
// TCP transport: rank 0 listens, every collective is relayed through it.

struct TcpEndpoint {
    std::string host = "127.0.0.1";
    int port = 29500;
};

/// Connects this process as `rank` of `world`. Rank 0 may pass port 0 together with
/// `on_listen` to learn the ephemeral port before peers connect.
std::unique_ptr<Communicator> connect_tcp(int rank, int world, const TcpEndpoint &endpoint,
                                          const std::function<void(int)> &on_listen = {});

/// Reads RANK, WORLD_SIZE, MASTER_ADDR and MASTER_PORT; empty when RANK/WORLD_SIZE are unset.
struct LaunchEnv {
    int rank;
    int world;
    TcpEndpoint endpoint;
};
std::optional<LaunchEnv> launch_env_from_environment();

} // namespace qshard
