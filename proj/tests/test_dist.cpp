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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <atomic>
#include <future>
#include <thread>

#include "qshard/gates.hpp"
#include "test_support.hpp"

using namespace qshard;
using namespace qshard::testing;

TEST_CASE("in-process worlds") {
    CHECK_NOTHROW(run_in_process(1, [](Communicator &comm) { CHECK(comm.world() == 1); }));
    std::atomic<int> passed{0};
    run_in_process(4, [&](Communicator &comm) {
        comm.barrier();
        ++passed;
    });
    CHECK(passed == 4);
    CHECK_THROWS_AS(run_in_process(3, [](Communicator &) {}), CommError);

    InProcessWorld world(2);
    auto first = world.communicator(1);
    CHECK_THROWS_AS(world.communicator(1), CommError);
}

TEST_CASE("a failing rank aborts its peers") {
    CHECK_THROWS_WITH_AS(run_in_process(4,
                                        [](Communicator &comm) {
                                            if (comm.rank() == 2)
                                                throw LayoutError("boom");
                                            comm.barrier();
                                        }),
                         "boom", LayoutError);
}

TEST_CASE("all_gather_vec") {
    run_in_process(2, [](Communicator &comm) {
        const double mine = comm.rank() == 0 ? 0.3 : 0.7;
        auto all = all_gather_vec<double>(comm, std::span<const double>(&mine, 1));
        CHECK(all == std::vector<double>{0.3, 0.7});
    });
    auto single = make_single_rank_comm();
    const std::vector<double> v{1, 2, 3};
    CHECK(all_gather_vec<double>(*single, v) == v);
    CHECK_THROWS_AS(run_in_process(2,
                                   [](Communicator &comm) {
                                       std::vector<double> v(comm.rank() + 1, 1.0);
                                       all_gather_vec<double>(comm, v);
                                   }),
                    CommError);
}

TEST_CASE("broadcast and reductions") {
    run_in_process(4, [](Communicator &comm) {
        Bytes data;
        if (comm.rank() == 1)
            data = to_bytes<int>(std::vector<int>{4, 5, 6});
        comm.broadcast(data, 1);
        CHECK(from_bytes<int>(data) == std::vector<int>{4, 5, 6});
        std::vector<double> v{double(comm.rank()), 1.0};
        all_reduce_sum<double>(comm, v);
        CHECK(v == std::vector<double>{6.0, 4.0});
        CHECK(all_reduce_max(comm, comm.rank()) == 3);
    });
}

TEST_CASE("shared and per-rank random streams") {
    auto draws = run_in_process_collect<std::vector<std::uint64_t>>(2, [](Communicator &comm) {
        auto shared = shared_seed_rng(comm, 42);
        auto own = rank_rng(comm, 42);
        std::vector<std::uint64_t> out;
        for (int i = 0; i < 1000; ++i)
            out.push_back(shared());
        out.push_back(own());
        return out;
    });
    CHECK(std::equal(draws[0].begin(), draws[0].end() - 1, draws[1].begin()));
    CHECK(draws[0].back() != draws[1].back());
}

TEST_CASE("exchange_sharded keeps the state") {
    std::mt19937_64 rng(31);
    auto ops = random_circuit(3, 20, rng);
    const auto reference = simulate(ops, 3, 1);
    run_in_process(2, [&](Communicator &comm) {
        auto state = init_state<double>(3, 1, comm);
        run_ops(state, ops, comm);
        state.reshape(state.layout().split_all());
        const QubitLayout start = state.layout();
        const int sharded = start.sharded()[0];
        const int local = start.local_order().back();
        exchange_sharded(state, sharded, local, comm);
        CHECK(state.layout().sharded()[0] == local);
        CHECK(max_abs_diff(to_dense(state, comm), reference) < 1e-15);
        exchange_sharded(state, local, sharded, comm);
        CHECK(state.layout() == start);
        CHECK(max_abs_diff(to_dense(state, comm), reference) < 1e-15);
        CHECK_THROWS_AS(exchange_sharded(state, local, sharded, comm), LayoutError);
    });
    auto single = make_single_rank_comm();
    auto state = init_state<double>(3, 1, *single);
    CHECK_THROWS_AS(exchange_sharded(state, 0, 1, *single), LayoutError);
}

TEST_CASE("random exchange sequences are data preserving") {
    std::mt19937_64 rng(32);
    auto ops = random_circuit(6, 20, rng);
    const auto reference = simulate(ops, 6, 1, 2);
    run_in_process(4, [&](Communicator &comm) {
        auto state = init_state<double>(6, 2, comm);
        run_ops(state, ops, comm);
        std::mt19937_64 shared = shared_seed_rng(comm, 5);
        for (int step = 0; step < 12; ++step) {
            state.reshape(state.layout().split_all());
            const auto &layout = state.layout();
            const int sharded = layout.sharded()[shared() % layout.num_sharded()];
            const int local = layout.local_order()[shared() % layout.num_local_qubits()];
            exchange_sharded(state, sharded, local, comm);
            CHECK(max_abs_diff(to_dense(state, comm), reference) == 0.0);
        }
    });
}

TEST_CASE("relayout reaches any target layout") {
    std::mt19937_64 rng(33);
    auto ops = random_circuit(6, 25, rng);
    const auto reference = simulate(ops, 6, 1);
    run_in_process(4, [&](Communicator &comm) {
        auto state = init_state<double>(6, 1, comm);
        const QubitLayout home = state.layout();
        run_ops(state, ops, comm);
        const QubitLayout target({5, 0, 3, 1}, {1, 1, 2}, {4, 2});
        relayout(state, target, comm);
        CHECK(state.layout() == target);
        CHECK(to_dense(state, comm) == reference);
        relayout(state, home, comm);
        CHECK(state.layout() == home);
        CHECK(to_dense(state, comm) == reference);
    });
}

TEST_CASE("distribution transparency") {
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 6; ++trial) {
        const int q = 5 + trial;
        auto ops = random_circuit(q, 60, rng);
        const auto reference = simulate(ops, q, 1, 2);
        for (int world : {2, 4, 8})
            CHECK(max_abs_diff(simulate(ops, q, world, 2), reference) <= 1e-12);
    }
}

TEST_CASE("all-to-all accounting") {
    run_in_process(2, [](Communicator &comm) {
        const int q = 5;
        auto state = init_state<double>(q, 1, comm);
        auto m0 = comm.read_metrics();
        CHECK(m0.all_to_all_bytes == 0);
        CHECK(m0.all_to_all_seconds == 0.0);
        state.reshape(state.layout().split_all());
        exchange_sharded(state, state.layout().sharded()[0], 0, comm);
        auto m1 = comm.read_metrics();
        CHECK(m1.all_to_all_bytes == (std::uint64_t{1} << q) * 16);
        CHECK(m1.all_to_all_seconds >= 0.0);
        CHECK(m1.peak_local_bytes >= (std::uint64_t{1} << (q - 1)) * 16);
    });
    auto single = make_single_rank_comm();
    auto state = init_state<double>(4, 1, *single);
    run_ops(state, {{"h", {3}, std::nullopt}, {"cx", {3, 0}, std::nullopt}}, *single);
    CHECK(single->read_metrics().all_to_all_bytes == 0);
}

TEST_CASE("tcp transport over localhost") {
    constexpr int world = 4;
    std::mt19937_64 rng(35);
    auto ops = random_circuit(6, 30, rng);
    const auto reference = simulate(ops, 6, 1);

    std::promise<int> port_promise;
    auto port_future = port_promise.get_future().share();
    std::vector<DenseStates<double>> results(world);
    std::vector<std::uint64_t> bytes(world);
    std::vector<std::thread> threads;
    for (int r = 0; r < world; ++r)
        threads.emplace_back([&, r] {
            TcpEndpoint endpoint{"127.0.0.1", 0};
            std::unique_ptr<Communicator> comm;
            if (r == 0) {
                comm = connect_tcp(0, world, endpoint, [&](int port) { port_promise.set_value(port); });
            } else {
                endpoint.port = port_future.get();
                comm = connect_tcp(r, world, endpoint);
            }
            auto state = init_state<double>(6, 1, *comm);
            run_ops(state, ops, *comm);
            results[r] = to_dense(state, *comm);
            bytes[r] = comm->read_metrics().all_to_all_bytes;
            comm->barrier();
        });
    for (auto &t : threads)
        t.join();
    for (int r = 0; r < world; ++r) {
        CHECK(max_abs_diff(results[r], reference) <= 1e-12);
        CHECK(bytes[r] > 0);
    }
}

TEST_CASE("tcp transport rejects a rank collision") {
    std::promise<int> port_promise;
    auto port_future = port_promise.get_future().share();
    std::atomic<int> failures{0};
    std::vector<std::thread> threads;
    for (int r : {0, 1, 1})
        threads.emplace_back([&, r] {
            try {
                if (r == 0)
                    connect_tcp(0, 4, {"127.0.0.1", 0}, [&](int port) { port_promise.set_value(port); });
                else
                    connect_tcp(r, 4, {"127.0.0.1", port_future.get()});
            } catch (const CommError &) {
                ++failures;
            }
        });
    for (auto &t : threads)
        t.join();
    CHECK(failures == 3);
}
