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
#include "qshard/comm.hpp"

#include <chrono>
#include <cstdlib>

namespace qshard {

Communicator::Communicator(int rank, int world, Transport transport)
    : rank_(rank), world_(world), transport_(transport) {
    if (!is_power_of_two(world))
        throw CommError("world size must be a power of two, got " + std::to_string(world));
    if (rank < 0 || rank >= world)
        throw CommError("rank " + std::to_string(rank) + " outside world of size " +
                        std::to_string(world));
}

Bytes Communicator::all_gather(std::span<const std::byte> local) {
    if (world_ == 1)
        return Bytes(local.begin(), local.end());
    return do_all_gather(local);
}

std::vector<Bytes> Communicator::all_to_all(std::vector<Bytes> blocks) {
    if (static_cast<int>(blocks.size()) != world_)
        throw CommError("all_to_all needs one block per rank");
    if (world_ == 1)
        return blocks;
    std::uint64_t sent = 0;
    for (const auto &b : blocks)
        sent += b.size();
    const auto start = std::chrono::steady_clock::now();
    auto received = do_all_to_all(std::move(blocks));
    a2a_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::uint64_t got = 0;
    for (const auto &b : received)
        got += b.size();
    a2a_bytes_ += sent + got;
    return received;
}

void Communicator::broadcast(Bytes &data, int root) {
    if (world_ == 1)
        return;
    do_broadcast(data, root);
}

CommMetrics Communicator::read_metrics() const {
    CommMetrics m;
    m.all_to_all_seconds = a2a_seconds_;
    m.all_to_all_bytes = a2a_bytes_;
    m.peak_local_bytes = memory_->peak_bytes();
    return m;
}

std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix_seed(seed);
    for (auto k : keys)
        h = mix_seed(h ^ mix_seed(k + 0x632be59bd9b4e019ULL));
    return h;
}

std::mt19937_64 shared_seed_rng(const Communicator &, std::uint64_t seed) {
    return std::mt19937_64(derive_seed(seed, {0}));
}

std::mt19937_64 rank_rng(const Communicator &comm, std::uint64_t seed) {
    return std::mt19937_64(derive_seed(seed, {static_cast<std::uint64_t>(comm.rank()) + 1}));
}

std::optional<LaunchEnv> launch_env_from_environment() {
    const char *rank = std::getenv("RANK");
    const char *world = std::getenv("WORLD_SIZE");
    if (!rank || !world)
        return std::nullopt;
    LaunchEnv env{std::atoi(rank), std::atoi(world), TcpEndpoint{}};
    if (const char *addr = std::getenv("MASTER_ADDR"))
        env.endpoint.host = addr;
    if (const char *port = std::getenv("MASTER_PORT"))
        env.endpoint.port = std::atoi(port);
    return env;
}

} // namespace qshard
