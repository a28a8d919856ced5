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
 * @file commands.hpp
 * The run, train and profile commands behind the command-line tool.
 *
 * Each command runs on every rank of a world. When RANK and WORLD_SIZE are
 * set in the environment the process joins a TCP world as that rank;
 * otherwise `ranks` in-process ranks are started. Rank 0 writes the outputs.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qshard/circuit.hpp"
#include "qshard/report.hpp"

namespace qshard {

/// Runs `body` on every rank of the launched world.
void launch(int ranks, const std::function<void(Communicator &)> &body);

struct MeasureOverride {
    std::optional<MeasureMode> mode;
    std::optional<Index> shots;
};

/// Command-line measurement settings take precedence over the circuit's own.
MeasureOptions effective_measure(const CircuitSpec &spec, const MeasureOverride &over, std::uint64_t seed);

struct RunOptions {
    int ranks = 1;
    std::uint64_t seed = 0;
    MeasureOverride measure;
    Precision precision = Precision::Float64;
    /// Directory for measurements.csv, counts.csv and metrics.jsonl; empty writes nothing.
    std::string out_dir;
    /// Optional dense statevector dump.
    std::string dump_path;
};

struct RunResult {
    MeasureOptions measure;
    RowMatrix<double> expectations;
    std::optional<ShotCounts> counts;
    std::vector<MetricRecord> metrics;
};

RunResult run_command(const CircuitSpec &spec, const RunOptions &options);

struct TrainOptions {
    int ranks = 1;
    std::uint64_t seed = 0;
    int iters = 10;
    AdamOptions adam;
    std::optional<int> batch;
    MeasureOverride measure;
    Precision precision = Precision::Float64;
    /// Directory for loss.csv and metrics.jsonl.
    std::string out_dir;
};

struct TrainResult {
    /// Loss before each update; a single evaluation when iters is 0.
    std::vector<double> losses;
    RowMatrix<double> inputs;
    std::vector<MetricRecord> metrics;
};

/// Adam on the encoder inputs with loss sum |<Z>|; the circuit weights stay fixed.
TrainResult train_command(const CircuitSpec &spec, const TrainOptions &options);

enum class ScalingMode { Strong, Weak };

struct ProfileOptions {
    int qubits_min = 12;
    int qubits_max = 12;
    std::vector<int> ranks{1, 2, 4};
    ScalingMode mode = ScalingMode::Strong;
    int depth = 2;
    int batch = 1;
    int warmup = 1;
    int max_qubits = 22;
    std::uint64_t memory_budget = std::uint64_t{16} << 30;
    std::uint64_t seed = 0;
    Precision precision = Precision::Float64;
    /// Directory for profile.jsonl.
    std::string out_dir;
};

/// Bytes for the state, its adjoint and one scratch copy of a batch at `num_qubits`.
std::uint64_t estimate_memory(int num_qubits, int batch, Precision precision);

/// Strong: every q in [min, max] at every world size. Weak: q = min + log2(world).
std::vector<std::pair<int, int>> profile_points(const ProfileOptions &options);

/// Refuses oversized problems before doing any work.
std::vector<ProfileRecord> profile_command(const ProfileOptions &options);

} // namespace qshard
