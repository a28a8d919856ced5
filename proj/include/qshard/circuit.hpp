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
 * @file circuit.hpp
 * Line-oriented circuit description format and circuit builders.
 *
 * Grammar (one statement per line, '#' starts a comment):
 *
 *     qubits <n>
 *     batch <n>
 *     features <n>
 *     measure analytic | measure exact shots=<n> | measure approx shots=<n>
 *     op <gate> <wire>... [theta=<real> | input=<feature> | param | param=<real>]
 *     encoder <gate>        one <gate> per qubit i reading input feature i
 *     ladder <depth>        depth x (cx ring i -> (i+1) mod n, then a trainable ry per qubit)
 *
 * `qubits` must precede any op. `encoder` and `ladder` expand into plain ops
 * at parse time. A `param` without a value is initialised from the run seed.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qshard/autodiff.hpp"
#include "qshard/gates.hpp"
#include "qshard/sampling.hpp"

namespace qshard {

struct OpSpec {
    enum class Param { None, Fixed, Input, Trainable };

    std::string gate;
    std::vector<int> wires;
    Param param = Param::None;
    /// Fixed angle, or initial value of a trainable angle.
    std::optional<double> value;
    int input = -1;

    bool operator==(const OpSpec &) const = default;
};

struct CircuitSpec {
    int num_qubits = 0;
    int batch = 1;
    int features = 0;
    MeasureMode mode = MeasureMode::Analytic;
    Index shots = 0;
    std::vector<OpSpec> ops;

    bool operator==(const CircuitSpec &) const = default;
};

/// Throws ParseError naming the first offending line and field.
CircuitSpec parse_circuit(std::string_view text, const GateRegistry &registry = default_registry());

/// Canonical text: header lines, then one `op` line per op.
std::string emit_circuit(const CircuitSpec &spec);

CircuitSpec load_circuit(const std::string &path, const GateRegistry &registry = default_registry());

struct EncoderEntry {
    std::string gate;
    std::vector<int> wires;
    int input_idx;
};

/// One input-bound gate per entry.
std::vector<OpSpec> build_encoder(const std::vector<EncoderEntry> &func_list, int features);

/// `depth` x [cx(i, (i+1) mod n) for each i, then ry(theta) on each qubit]; thetas are depth * n trainable angles.
std::vector<OpSpec> build_ladder_ansatz(int num_qubits, int depth, std::span<const double> thetas);

/// Same structure with angles left to the seed.
std::vector<OpSpec> build_ladder_ansatz(int num_qubits, int depth);

struct Program {
    int num_qubits = 0;
    int batch = 1;
    int features = 0;
    std::vector<Op> ops;
    std::vector<double> params;
};

/**
 * @brief Resolve gate names and assign trainable slots.
 *
 * Trainable angles without a value draw from uniform(0, pi) with `seed`.
 */
Program compile(const CircuitSpec &spec, std::uint64_t seed, const GateRegistry &registry = default_registry());

/// Encoder inputs for a run: uniform(0, pi/3) from `seed`, batch x features.
RowMatrix<double> initial_inputs(int batch, int features, std::uint64_t seed);

/// Shortest round-trip decimal form.
std::string format_real(double value);

} // namespace qshard
