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
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "qshard/commands.hpp"
#include "test_support.hpp"

using namespace qshard;
using namespace qshard::testing;

namespace {

const char *kBasic = R"(# basic
qubits 6
measure analytic
op z 0
op ry 0 theta=1.0471975511965976
op cx 0 1
)";

const char *kEncoderLadder = R"(qubits 6
batch 16
encoder ry
ladder 3
)";

std::vector<OpInstance> instances(const std::vector<OpSpec> &ops) {
    std::vector<OpInstance> out;
    for (const auto &op : ops)
        out.push_back({op.gate, op.wires, op.value});
    return out;
}

CircuitSpec random_spec(std::mt19937_64 &rng) {
    std::uniform_int_distribution<int> qd(2, 7), depth(0, 20), kind(0, 3), feat(0, 3);
    std::uniform_real_distribution<double> angle(-10.0, 10.0);
    CircuitSpec spec;
    spec.num_qubits = qd(rng);
    spec.batch = 1 + kind(rng);
    spec.features = 4;
    const int m = kind(rng) % 3;
    spec.mode = m == 0 ? MeasureMode::Analytic : m == 1 ? MeasureMode::Exact : MeasureMode::Approx;
    spec.shots = m == 0 ? 0 : 1 + depth(rng) * 1000;
    for (const auto &inst : random_circuit(spec.num_qubits, depth(rng), rng)) {
        OpSpec op{inst.name, inst.wires, OpSpec::Param::None, std::nullopt, -1};
        if (inst.theta) {
            switch (kind(rng)) {
            case 0:
                op.param = OpSpec::Param::Fixed;
                op.value = angle(rng);
                break;
            case 1:
                op.param = OpSpec::Param::Input;
                op.input = feat(rng);
                break;
            case 2:
                op.param = OpSpec::Param::Trainable;
                break;
            default:
                op.param = OpSpec::Param::Trainable;
                op.value = angle(rng) / 3.0;
            }
        }
        spec.ops.push_back(op);
    }
    return spec;
}

std::string temp_dir(const std::string &name) {
    const auto dir = std::filesystem::temp_directory_path() / ("qshard_test_" + name);
    std::filesystem::remove_all(dir);
    return dir.string();
}

} // namespace

TEST_CASE("parse the basic example") {
    const auto spec = parse_circuit(kBasic);
    CHECK(spec.num_qubits == 6);
    CHECK(spec.batch == 1);
    CHECK(spec.features == 0);
    REQUIRE(spec.ops.size() == 3);
    CHECK(spec.ops[0].gate == "z");
    CHECK(spec.ops[1].param == OpSpec::Param::Fixed);
    CHECK(*spec.ops[1].value == doctest::Approx(std::numbers::pi / 3));
    CHECK(spec.ops[2].wires == std::vector<int>{0, 1});
}

TEST_CASE("encoder and ladder statements expand") {
    const auto spec = parse_circuit(kEncoderLadder);
    CHECK(spec.features == 6);
    CHECK(spec.batch == 16);
    CHECK(spec.ops.size() == 6 + 3 * 12);
    CHECK(spec.ops[0].param == OpSpec::Param::Input);
    CHECK(spec.ops[5].input == 5);
}

TEST_CASE("parse errors name the line and field") {
    auto fails = [](const char *text, const std::string &needle) {
        try {
            parse_circuit(text);
        } catch (const ParseError &e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
            return;
        }
        FAIL("no ParseError for: " << text);
    };
    fails("qubits 2\nop foo 0\n", "foo");
    fails("qubits 2\nop foo 0\n", "line 2");
    fails("qubits 2\nop x 2\n", "out of range");
    fails("op x 0\nqubits 2\n", "qubits");
    fails("qubits 2\nop cx 0\n", "wires");
    fails("qubits 2\nop x 0 theta=1\n", "no parameter");
    fails("qubits 2\nop rx 0 theta=abc\n", "theta");
    fails("qubits 2\nmeasure exact\n", "shots");
    fails("qubits 2\nmeasure sometimes\n", "measure");
    fails("qubits 2\nfeatures 1\nop rx 0 input=1\n", "input");
    fails("qubits 2\nwibble\n", "wibble");
}

TEST_CASE("emit then parse round-trips") {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100; ++i) {
        const auto spec = random_spec(rng);
        const auto text = emit_circuit(spec);
        CHECK_MESSAGE(parse_circuit(text) == spec, text);
    }
}

TEST_CASE("encoder with zero inputs is the identity") {
    std::vector<EncoderEntry> entries;
    for (int i = 0; i < 6; ++i)
        entries.push_back({"ry", {i}, i});
    CircuitSpec spec{6, 2, 6, MeasureMode::Analytic, 0, build_encoder(entries, 6)};
    const Program prog = compile(spec, 1);
    const RowMatrix<double> zeros = RowMatrix<double>::Zero(2, 6);
    const auto dense = run_in_process_collect<DenseStates<double>>(2, [&](Communicator &comm) {
        Tape<double> tape;
        run_forward(tape, prog.ops, prog.params, zeros, 6, 2, comm);
        return to_dense(tape.final_state(), comm);
    })[0];
    CHECK(max_abs_diff(dense, simulate({}, 6, 1, 2)) < 1e-15);
}

TEST_CASE("encoder matches a hand-built sequence") {
    std::vector<EncoderEntry> entries;
    for (int i = 0; i < 6; ++i)
        entries.push_back({i % 2 ? "rx" : "ry", {i}, 5 - i});
    CircuitSpec spec{6, 1, 6, MeasureMode::Analytic, 0, build_encoder(entries, 6)};
    const Program prog = compile(spec, 1);
    RowMatrix<double> x(1, 6);
    x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
    std::vector<OpInstance> hand;
    for (int i = 0; i < 6; ++i)
        hand.push_back({i % 2 ? "rx" : "ry", {i}, x(0, 5 - i)});
    const auto dense = run_in_process_collect<DenseStates<double>>(4, [&](Communicator &comm) {
        Tape<double> tape;
        run_forward(tape, prog.ops, prog.params, x, 6, 1, comm);
        return to_dense(tape.final_state(), comm);
    })[0];
    CHECK(max_abs_diff(dense, simulate(hand, 6, 1)) < 1e-14);

    CHECK_THROWS_AS(build_encoder({{"ry", {0}, 6}}, 6), GateError);
}

TEST_CASE("ladder with zero angles is the CX ring") {
    const std::vector<double> zeros(3, 0.0);
    const auto ladder = build_ladder_ansatz(3, 1, zeros);
    const std::vector<OpInstance> ring{{"cx", {0, 1}, {}}, {"cx", {1, 2}, {}}, {"cx", {2, 0}, {}}};
    CHECK((circuit_unitary(instances(ladder), 3) - circuit_unitary(ring, 3)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("ladder structure and norm") {
    std::vector<double> thetas(18);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3, 3);
    for (auto &t : thetas)
        t = u(rng);
    const auto ops = build_ladder_ansatz(6, 3, thetas);
    REQUIRE(ops.size() == 36);
    int cx = 0, ry = 0;
    for (int d = 0; d < 3; ++d) {
        for (int i = 0; i < 6; ++i) {
            const auto &c = ops[d * 12 + i];
            cx += c.gate == "cx";
            CHECK(c.wires == std::vector<int>{i, (i + 1) % 6});
            const auto &r = ops[d * 12 + 6 + i];
            ry += r.gate == "ry";
            CHECK(r.wires == std::vector<int>{i});
            CHECK(*r.value == thetas[d * 6 + i]);
        }
    }
    CHECK(cx == 18);
    CHECK(ry == 18);
    CHECK(simulate(instances(ops), 6, 2).squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(build_ladder_ansatz(6, 3, std::span<const double>(thetas).first(17)), GateError);
}

TEST_CASE("compile draws unset weights from the seed") {
    const auto spec = parse_circuit(kEncoderLadder);
    const auto a = compile(spec, 5), b = compile(spec, 5), c = compile(spec, 6);
    REQUIRE(a.params.size() == 18);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);
    for (double v : a.params) {
        CHECK(v >= 0.0);
        CHECK(v <= std::numbers::pi);
    }
}

TEST_CASE("run the basic circuit") {
    const auto spec = parse_circuit(kBasic);
    for (int ranks : {1, 2}) {
        RunOptions opts;
        opts.ranks = ranks;
        const auto dir = temp_dir("run" + std::to_string(ranks));
        opts.out_dir = dir;
        const auto r = run_command(spec, opts);
        REQUIRE(r.expectations.cols() == 6);
        CHECK(r.expectations(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r.expectations(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
        for (int i = 2; i < 6; ++i)
            CHECK(r.expectations(0, i) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.metrics.size() == static_cast<std::size_t>(ranks));

        std::ifstream m(dir + "/measurements.csv");
        std::string header;
        std::getline(m, header);
        CHECK(header == "batch_index,qubit,expectation");
        std::ifstream js(dir + "/metrics.jsonl");
        std::string line;
        int lines = 0;
        while (std::getline(js, line)) {
            const auto j = nlohmann::json::parse(line);
            for (const char *key : {"rank", "step", "walltime_s", "a2a_s", "a2a_bytes", "peak_bytes", "loss"})
                CHECK(j.contains(key));
            CHECK((j["a2a_bytes"].get<std::uint64_t>() > 0) == (ranks > 1));
            ++lines;
        }
        CHECK(lines == ranks);
    }
}

TEST_CASE("exact runs are deterministic across world sizes") {
    const auto spec = parse_circuit(kBasic);
    RunOptions opts;
    opts.seed = 11;
    opts.measure.mode = MeasureMode::Exact;
    opts.measure.shots = 500;
    opts.out_dir = temp_dir("exact");
    const auto a = run_command(spec, opts);
    opts.ranks = 4;
    const auto b = run_command(spec, opts);
    REQUIRE(a.counts);
    REQUIRE(b.counts);
    CHECK(a.counts->counts == b.counts->counts);
    CHECK(a.counts->counts.sum() == doctest::Approx(500));
    CHECK(std::filesystem::exists(opts.out_dir + "/counts.csv"));
}

TEST_CASE("run rejects a non power-of-two world") {
    RunOptions opts;
    opts.ranks = 3;
    CHECK_THROWS_WITH_AS(run_command(parse_circuit(kBasic), opts), doctest::Contains("power of two"), CommError);
}

TEST_CASE("dense dump round-trips") {
    RunOptions opts;
    opts.ranks = 2;
    opts.dump_path = (std::filesystem::temp_directory_path() / "qshard_test_dump.bin").string();
    run_command(parse_circuit(kBasic), opts);
    std::ifstream is(opts.dump_path, std::ios::binary);
    int q = 0;
    const auto dense = read_dense_dump(is, &q);
    CHECK(q == 6);
    const std::vector<OpInstance> ops{{"z", {0}, {}}, {"ry", {0}, std::numbers::pi / 3}, {"cx", {0, 1}, {}}};
    CHECK(max_abs_diff(dense, simulate(ops, 6, 1)) < 1e-15);
}

TEST_CASE("train lowers the loss") {
    const auto spec = parse_circuit(kEncoderLadder);
    TrainOptions opts;
    opts.out_dir = temp_dir("train");
    opts.seed = 2;
    const auto r = train_command(spec, opts);
    REQUIRE(r.losses.size() == 10);
    CHECK(r.losses.back() < r.losses.front());
    CHECK(std::filesystem::exists(opts.out_dir + "/loss.csv"));

    opts.ranks = 2;
    const auto r2 = train_command(spec, opts);
    for (std::size_t i = 0; i < r.losses.size(); ++i)
        CHECK(std::abs(r.losses[i] - r2.losses[i]) < 1e-8);
}

TEST_CASE("train with zero iterations evaluates once") {
    TrainOptions opts;
    opts.iters = 0;
    const auto r = train_command(parse_circuit(kEncoderLadder), opts);
    CHECK(r.losses.size() == 1);
    CHECK(r.inputs == initial_inputs(16, 6, 0));
}

TEST_CASE("train refuses exact sampling") {
    TrainOptions opts;
    opts.measure.mode = MeasureMode::Exact;
    opts.measure.shots = 100;
    CHECK_THROWS_AS(train_command(parse_circuit(kEncoderLadder), opts), GradientPathError);
}

TEST_CASE("profile emits one record per point") {
    ProfileOptions opts;
    opts.qubits_min = opts.qubits_max = 10;
    opts.ranks = {1, 2, 4};
    opts.out_dir = temp_dir("profile");
    const auto records = profile_command(opts);
    REQUIRE(records.size() == 3);
    for (const auto &r : records) {
        CHECK((r.metrics.a2a_bytes > 0) == (r.world > 1));
        for (std::size_t i = 0; i < r.expectations.size(); ++i)
            CHECK(std::abs(r.expectations[i] - records[0].expectations[i]) < 1e-12);
    }
    std::ifstream is(opts.out_dir + "/profile.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j["qubits"] == 10);
        ++lines;
    }
    CHECK(lines == 3);
}

TEST_CASE("weak scaling adds a qubit per doubling") {
    ProfileOptions opts;
    opts.mode = ScalingMode::Weak;
    opts.qubits_min = 8;
    opts.ranks = {1, 2, 4, 8};
    const auto pts = profile_points(opts);
    CHECK(pts == std::vector<std::pair<int, int>>{{8, 1}, {9, 2}, {10, 4}, {11, 8}});
}

TEST_CASE("profile refuses oversized problems") {
    ProfileOptions opts;
    opts.qubits_min = opts.qubits_max = 34;
    CHECK_THROWS_WITH_AS(profile_command(opts), doctest::Contains("824633720832 bytes"), Error);
    opts.qubits_min = opts.qubits_max = 23;
    CHECK_THROWS_WITH_AS(profile_command(opts), doctest::Contains("max-qubits"), Error);
}
