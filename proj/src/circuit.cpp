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
#include "qshard/circuit.hpp"

#include <charconv>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace qshard {

namespace {

std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
            ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r')
            ++j;
        if (j > i)
            out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <typename T> T parse_number(std::string_view text, int line, const std::string &field) {
    T value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ParseError(line, field, "expected a number, got '" + std::string(text) + "'");
    return value;
}

int parse_count(std::string_view text, int line, const std::string &field, int minimum) {
    const int value = parse_number<int>(text, line, field);
    if (value < minimum)
        throw ParseError(line, field, "must be at least " + std::to_string(minimum));
    return value;
}

void expect_args(const std::vector<std::string_view> &tok, std::size_t count, int line) {
    if (tok.size() != count)
        throw ParseError(line, std::string(tok[0]),
                         "expected " + std::to_string(count - 1) + " argument(s), got " + std::to_string(tok.size() - 1));
}

} // namespace

std::string format_real(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

CircuitSpec parse_circuit(std::string_view text, const GateRegistry &registry) {
    CircuitSpec spec;
    bool have_qubits = false, have_features = false;
    int max_input = -1;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        const auto tok = tokenize(line);
        if (tok.empty())
            continue;
        const std::string_view key = tok[0];

        if (key == "qubits") {
            expect_args(tok, 2, line_no);
            if (have_qubits)
                throw ParseError(line_no, "qubits", "declared twice");
            spec.num_qubits = parse_count(tok[1], line_no, "qubits", 1);
            have_qubits = true;
        } else if (key == "batch") {
            expect_args(tok, 2, line_no);
            spec.batch = parse_count(tok[1], line_no, "batch", 1);
        } else if (key == "features") {
            expect_args(tok, 2, line_no);
            spec.features = parse_count(tok[1], line_no, "features", 0);
            have_features = true;
        } else if (key == "measure") {
            if (tok.size() < 2 || tok.size() > 3)
                throw ParseError(line_no, "measure", "expected 'measure <mode> [shots=<n>]'");
            try {
                spec.mode = parse_measure_mode(tok[1]);
            } catch (const SamplingError &e) {
                throw ParseError(line_no, "measure", e.what());
            }
            spec.shots = 0;
            if (tok.size() == 3) {
                if (tok[2].substr(0, 6) != "shots=")
                    throw ParseError(line_no, "measure", "expected shots=<n>, got '" + std::string(tok[2]) + "'");
                spec.shots = parse_number<Index>(tok[2].substr(6), line_no, "shots");
            }
            if (spec.mode == MeasureMode::Analytic && spec.shots != 0)
                throw ParseError(line_no, "shots", "analytic measurement takes no shots");
            if (spec.mode != MeasureMode::Analytic && spec.shots < 1)
                throw ParseError(line_no, "shots", std::string(to_string(spec.mode)) + " measurement needs shots >= 1");
        } else if (key == "op" || key == "encoder" || key == "ladder") {
            if (!have_qubits)
                throw ParseError(line_no, std::string(key), "'qubits' must be declared before any op");
            if (key == "encoder") {
                expect_args(tok, 2, line_no);
                if (!registry.contains(tok[1]))
                    throw ParseError(line_no, "gate", "unknown gate '" + std::string(tok[1]) + "'");
                const auto def = registry.find(tok[1]);
                if (def->arity != 1 || !def->parametric)
                    throw ParseError(line_no, "gate", "encoder needs a parametric single-qubit gate");
                std::vector<EncoderEntry> entries;
                for (int i = 0; i < spec.num_qubits; ++i)
                    entries.push_back({std::string(tok[1]), {i}, i});
                const auto ops = build_encoder(entries, spec.num_qubits);
                spec.ops.insert(spec.ops.end(), ops.begin(), ops.end());
                max_input = std::max(max_input, spec.num_qubits - 1);
            } else if (key == "ladder") {
                expect_args(tok, 2, line_no);
                const int depth = parse_count(tok[1], line_no, "ladder", 1);
                const auto ops = build_ladder_ansatz(spec.num_qubits, depth);
                spec.ops.insert(spec.ops.end(), ops.begin(), ops.end());
            } else {
                if (tok.size() < 2)
                    throw ParseError(line_no, "op", "missing gate name");
                const std::string name(tok[1]);
                if (!registry.contains(name))
                    throw ParseError(line_no, "gate", "unknown gate '" + name + "'");
                const auto def = registry.find(name);
                OpSpec op;
                op.gate = name;
                std::size_t i = 2;
                for (; i < tok.size() && tok[i].find('=') == std::string_view::npos && tok[i] != "param"; ++i) {
                    const int w = parse_number<int>(tok[i], line_no, "wires");
                    if (w < 0 || w >= spec.num_qubits)
                        throw ParseError(line_no, "wires",
                                         "wire " + std::to_string(w) + " out of range for " +
                                             std::to_string(spec.num_qubits) + " qubits");
                    if (std::find(op.wires.begin(), op.wires.end(), w) != op.wires.end())
                        throw ParseError(line_no, "wires", "duplicate wire " + std::to_string(w));
                    op.wires.push_back(w);
                }
                if (static_cast<int>(op.wires.size()) != def->arity)
                    throw ParseError(line_no, "wires",
                                     "gate '" + name + "' takes " + std::to_string(def->arity) + " wire(s), got " +
                                         std::to_string(op.wires.size()));
                if (i < tok.size()) {
                    if (i + 1 != tok.size())
                        throw ParseError(line_no, "op", "unexpected trailing text '" + std::string(tok[i + 1]) + "'");
                    if (!def->parametric)
                        throw ParseError(line_no, "param", "gate '" + name + "' takes no parameter");
                    const std::string_view arg = tok[i];
                    if (arg.substr(0, 6) == "theta=") {
                        op.param = OpSpec::Param::Fixed;
                        op.value = parse_number<double>(arg.substr(6), line_no, "theta");
                    } else if (arg.substr(0, 6) == "input=") {
                        op.param = OpSpec::Param::Input;
                        op.input = parse_count(arg.substr(6), line_no, "input", 0);
                        max_input = std::max(max_input, op.input);
                    } else if (arg == "param") {
                        op.param = OpSpec::Param::Trainable;
                    } else if (arg.substr(0, 6) == "param=") {
                        op.param = OpSpec::Param::Trainable;
                        op.value = parse_number<double>(arg.substr(6), line_no, "param");
                    } else {
                        throw ParseError(line_no, "param", "unknown parameter binding '" + std::string(arg) + "'");
                    }
                } else if (def->parametric) {
                    op.param = OpSpec::Param::Fixed;
                    op.value = 0.0;
                }
                spec.ops.push_back(std::move(op));
            }
            if (have_features && max_input >= spec.features)
                throw ParseError(line_no, "input",
                                 "input index " + std::to_string(max_input) + " out of range for " +
                                     std::to_string(spec.features) + " features");
        } else {
            throw ParseError(line_no, std::string(key), "unknown statement '" + std::string(key) + "'");
        }
    }
    if (!have_qubits)
        throw ParseError(line_no, "qubits", "missing 'qubits' declaration");
    if (!have_features)
        spec.features = max_input + 1;
    return spec;
}

std::string emit_circuit(const CircuitSpec &spec) {
    std::ostringstream os;
    os << "qubits " << spec.num_qubits << "\n";
    os << "batch " << spec.batch << "\n";
    os << "features " << spec.features << "\n";
    os << "measure " << to_string(spec.mode);
    if (spec.mode != MeasureMode::Analytic)
        os << " shots=" << spec.shots;
    os << "\n";
    for (const auto &op : spec.ops) {
        os << "op " << op.gate;
        for (int w : op.wires)
            os << " " << w;
        switch (op.param) {
        case OpSpec::Param::None:
            break;
        case OpSpec::Param::Fixed:
            os << " theta=" << format_real(op.value.value_or(0.0));
            break;
        case OpSpec::Param::Input:
            os << " input=" << op.input;
            break;
        case OpSpec::Param::Trainable:
            os << " param";
            if (op.value)
                os << "=" << format_real(*op.value);
            break;
        }
        os << "\n";
    }
    return os.str();
}

CircuitSpec load_circuit(const std::string &path, const GateRegistry &registry) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open circuit file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_circuit(buf.str(), registry);
}

std::vector<OpSpec> build_encoder(const std::vector<EncoderEntry> &func_list, int features) {
    std::vector<OpSpec> out;
    for (const auto &entry : func_list) {
        if (entry.input_idx < 0 || entry.input_idx >= features)
            throw GateError("encoder input index " + std::to_string(entry.input_idx) + " out of range for " +
                            std::to_string(features) + " features");
        out.push_back(OpSpec{entry.gate, entry.wires, OpSpec::Param::Input, std::nullopt, entry.input_idx});
    }
    return out;
}

std::vector<OpSpec> build_ladder_ansatz(int num_qubits, int depth, std::span<const double> thetas) {
    if (static_cast<Index>(thetas.size()) != Index{depth} * num_qubits)
        throw GateError("ladder ansatz needs depth * qubits = " + std::to_string(depth * num_qubits) +
                        " angles, got " + std::to_string(thetas.size()));
    auto ops = build_ladder_ansatz(num_qubits, depth);
    std::size_t k = 0;
    for (auto &op : ops)
        if (op.param == OpSpec::Param::Trainable)
            op.value = thetas[k++];
    return ops;
}

std::vector<OpSpec> build_ladder_ansatz(int num_qubits, int depth) {
    if (num_qubits < 2)
        throw GateError("ladder ansatz needs at least two qubits");
    std::vector<OpSpec> ops;
    for (int d = 0; d < depth; ++d) {
        for (int i = 0; i < num_qubits; ++i)
            ops.push_back(OpSpec{"cx", {i, (i + 1) % num_qubits}, OpSpec::Param::None, std::nullopt, -1});
        for (int i = 0; i < num_qubits; ++i)
            ops.push_back(OpSpec{"ry", {i}, OpSpec::Param::Trainable, std::nullopt, -1});
    }
    return ops;
}

Program compile(const CircuitSpec &spec, std::uint64_t seed, const GateRegistry &registry) {
    Program prog{spec.num_qubits, spec.batch, spec.features, {}, {}};
    std::mt19937_64 rng(derive_seed(seed, {0x70617261}));
    std::uniform_real_distribution<double> init(0.0, std::numbers::pi);
    for (const auto &op : spec.ops) {
        Op out{registry.find(op.gate), op.wires, ParamRef::none()};
        switch (op.param) {
        case OpSpec::Param::None:
            break;
        case OpSpec::Param::Fixed:
            out.param = ParamRef::fixed(op.value.value_or(0.0));
            break;
        case OpSpec::Param::Input:
            if (op.input >= spec.features)
                throw GateError("input index " + std::to_string(op.input) + " out of range");
            out.param = ParamRef::input(op.input);
            break;
        case OpSpec::Param::Trainable: {
            const double drawn = init(rng);
            out.param = ParamRef::trainable(static_cast<int>(prog.params.size()));
            prog.params.push_back(op.value.value_or(drawn));
            break;
        }
        }
        prog.ops.push_back(std::move(out));
    }
    return prog;
}

RowMatrix<double> initial_inputs(int batch, int features, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, {0x696e70}));
    std::uniform_real_distribution<double> u(0.0, std::numbers::pi / 3);
    RowMatrix<double> x(batch, features);
    for (Index i = 0; i < x.size(); ++i)
        x.data()[i] = u(rng);
    return x;
}

} // namespace qshard
