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

#include <cmath>
#include <numbers>

#include "qshard/gates.hpp"
#include "test_support.hpp"

using namespace qshard;
using namespace qshard::testing;

namespace {

GateMatrix swap_matrix() {
    GateMatrix m = GateMatrix::Zero(4, 4);
    m(0, 0) = m(1, 2) = m(2, 1) = m(3, 3) = 1;
    return m;
}

GateDef constant_gate(const std::string &name, GateMatrix m) {
    GateDef def;
    def.name = name;
    def.arity = m.rows() == 4 ? 2 : 1;
    def.matrix = [m](double) { return m; };
    return def;
}

DenseStates<double> random_states(int q, int batch, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal;
    DenseStates<double> out(batch, Index{1} << q);
    for (Index b = 0; b < batch; ++b) {
        for (Index i = 0; i < out.cols(); ++i)
            out(b, i) = {normal(rng), normal(rng)};
        out.row(b) /= out.row(b).norm();
    }
    return out;
}

/// A batch of arbitrary states prepared by applying per-element random unitaries.
StateVector<double> load_states(const DenseStates<double> &dense, int q, Communicator &comm) {
    auto state = init_state<double>(q, static_cast<int>(dense.rows()), comm);
    state.reshape(state.layout().split_all());
    const auto to_phys = canonical_to_physical(state.layout());
    for (int b = 0; b < state.batch_size(); ++b)
        for (Index i = 0; i < dense.cols(); ++i) {
            const Index p = to_phys(i);
            if ((p >> state.layout().num_local_qubits()) != comm.rank())
                continue;
            const Index l = p & (state.local_size() - 1);
            state.batch_data(b)[2 * l] = dense(b, i).real();
            state.batch_data(b)[2 * l + 1] = dense(b, i).imag();
        }
    regroup(state);
    return state;
}

} // namespace

TEST_CASE("builtin registry contents") {
    const auto &r = default_registry();
    CHECK(r.names() == std::vector<std::string>{"cx", "h", "rx", "ry", "rz", "s", "t", "x", "y", "z"});
    GateMatrix z(2, 2);
    z << 1, 0, 0, -1;
    CHECK(r.find("z")->matrix(0) == z);
    CHECK(r.find("ry")->matrix(0).isApprox(GateMatrix::Identity(2, 2)));
    const double th = 0.7;
    GateMatrix ry(2, 2);
    ry << std::cos(th / 2), -std::sin(th / 2), std::sin(th / 2), std::cos(th / 2);
    CHECK((r.find("ry")->matrix(th) - ry).cwiseAbs().maxCoeff() < 1e-15);
    for (const auto &name : {"rx", "ry", "rz"}) {
        CHECK(r.find(name)->differentiable());
        for (double t : registration_grid())
            CHECK(unitarity_deviation(r.find(name)->matrix(t)) < 1e-10);
    }
    CHECK_FALSE(r.find("cx")->differentiable());
    CHECK_THROWS_AS(r.find("foo"), GateError);
}

TEST_CASE("register_custom accepts and rejects") {
    GateRegistry r = builtin_registry();
    CHECK_NOTHROW(r.register_custom(constant_gate("swap", swap_matrix())));
    CHECK(r.contains("swap"));
    CHECK_THROWS_AS(r.register_custom(constant_gate("swap", swap_matrix())), GateError);

    GateMatrix zero_row = GateMatrix::Identity(2, 2);
    zero_row.row(1).setZero();
    CHECK_THROWS_AS(r.register_custom(constant_gate("bad", zero_row)), GateError);

    try {
        r.register_custom(constant_gate("twice", 2.0 * GateMatrix::Identity(2, 2)));
        FAIL("2I must be rejected");
    } catch (const GateError &e) {
        const std::string msg = e.what();
        CHECK(msg.find("= 3") != std::string::npos);
    }
    CHECK_FALSE(r.contains("twice"));

    GateDef wrong;
    wrong.name = "bad_derivative";
    wrong.parametric = true;
    wrong.matrix = default_registry().find("ry")->matrix;
    wrong.derivative = default_registry().find("rx")->derivative;
    CHECK_THROWS_AS(r.register_custom(wrong), GateError);

    CHECK_NOTHROW(r.register_custom(constant_gate("loose", GateMatrix::Identity(2, 2) * (1 + 1e-6)),
                                    Precision::Float32));
}

TEST_CASE("functional and stateful forms agree") {
    auto comm = make_single_rank_comm();
    SUBCASE("z on |0>") {
        auto state = init_state<double>(3, 1, *comm);
        const auto before = to_dense(state, *comm);
        as_functional(default_registry(), "z")(state, *comm, {0});
        CHECK(to_dense(state, *comm) == before);
    }
    SUBCASE("ry(pi/3) over 100 random states") {
        std::mt19937_64 rng(11);
        const auto states = random_states(4, 100, rng);
        auto a = load_states(states, 4, *comm);
        auto b = load_states(states, 4, *comm);
        as_functional(default_registry(), "ry")(a, *comm, {2}, std::numbers::pi / 3);
        StatefulGate(default_registry().find("ry"), {2}, std::numbers::pi / 3)(b, *comm);
        CHECK(to_dense(a, *comm) == to_dense(b, *comm));
    }
    SUBCASE("arity is checked") {
        auto state = init_state<double>(3, 1, *comm);
        CHECK_THROWS_AS(as_functional(default_registry(), "cx")(state, *comm, {0, 1, 2}), GateError);
        CHECK_THROWS_AS(StatefulGate(default_registry().find("x"), {0}, 1.0), GateError);
        CHECK_THROWS_AS(as_functional(default_registry(), "nope"), GateError);
    }
}

TEST_CASE("gate algebra") {
    auto comm = make_single_rank_comm();
    std::mt19937_64 rng(4);
    const auto states = random_states(3, 4, rng);
    for (const auto &name : {"x", "y", "z", "h"}) {
        auto s = load_states(states, 3, *comm);
        auto g = as_functional(default_registry(), name);
        g(s, *comm, {1});
        g(s, *comm, {1});
        CHECK(max_abs_diff(to_dense(s, *comm), states) < 1e-12);
    }
    auto s = load_states(states, 3, *comm);
    auto cx = as_functional(default_registry(), "cx");
    cx(s, *comm, {0, 2});
    cx(s, *comm, {0, 2});
    CHECK(to_dense(s, *comm) == states);

    auto ry = as_functional(default_registry(), "ry");
    auto ab = load_states(states, 3, *comm);
    ry(ab, *comm, {0}, 0.4);
    ry(ab, *comm, {0}, 1.1);
    auto sum = load_states(states, 3, *comm);
    ry(sum, *comm, {0}, 1.5);
    CHECK(max_abs_diff(to_dense(ab, *comm), to_dense(sum, *comm)) < 1e-10);
}

TEST_CASE("h on one qubit") {
    auto comm = make_single_rank_comm();
    auto state = init_state<double>(2, 1, *comm);
    as_functional(default_registry(), "h")(state, *comm, {0});
    auto dense = to_dense(state, *comm);
    CHECK(std::abs(dense(0, 0).real() - std::numbers::sqrt2 / 2) < 1e-15);
    CHECK(std::abs(dense(0, 2).real() - std::numbers::sqrt2 / 2) < 1e-15);
}

TEST_CASE("gates keep the norm") {
    auto comm = make_single_rank_comm();
    std::mt19937_64 rng(12);
    const auto states = random_states(4, 2, rng);
    std::uniform_real_distribution<double> angle(-4, 4);
    for (const auto &name : default_registry().names()) {
        auto s = load_states(states, 4, *comm);
        const auto def = default_registry().find(name);
        std::vector<int> wires{3, 1};
        wires.resize(def->arity);
        std::optional<double> theta;
        if (def->parametric)
            theta = angle(rng);
        apply(s, StatefulGate(def, wires, theta), *comm);
        auto dense = to_dense(s, *comm);
        for (Index b = 0; b < dense.rows(); ++b)
            CHECK(std::abs(dense.row(b).norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("per-batch matrices") {
    auto comm = make_single_rank_comm();
    auto state = init_state<double>(3, 2, *comm);
    const auto ry = default_registry().find("ry");
    const std::vector<GateMatrix> ms{ry->matrix(0.3), ry->matrix(1.9)};
    const std::vector<int> wires{1};
    apply_matrices(state, std::span<const int>(wires), std::span<const GateMatrix>(ms), *comm);
    auto dense = to_dense(state, *comm);
    CHECK(std::abs(dense(0, 2).real() - std::sin(0.15)) < 1e-15);
    CHECK(std::abs(dense(1, 2).real() - std::sin(0.95)) < 1e-15);
}

TEST_CASE("sharded-wire gates match a single rank") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        auto ops = random_circuit(4, 30, rng);
        ops.push_back({"h", {3}, std::nullopt});
        CHECK(max_abs_diff(simulate(ops, 4, 2), simulate(ops, 4, 1)) < 1e-12);
    }
}
