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
 * @file report.hpp
 * Per-rank step metrics and their JSON Lines form.
 */
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qshard/comm.hpp"

namespace qshard {

struct MetricRecord {
    int rank = 0;
    int step = 0;
    double walltime_s = 0.0;
    double a2a_s = 0.0;
    std::uint64_t a2a_bytes = 0;
    std::uint64_t peak_bytes = 0;
    std::optional<double> loss;
};

/// Aggregate over the ranks of one profile point.
struct ProfileRecord {
    int qubits = 0;
    int world = 1;
    std::string mode;
    /// walltime and a2a seconds are the slowest rank, bytes are summed, peak is the largest rank.
    MetricRecord metrics;
    /// <Z_i> of batch row 0.
    std::vector<double> expectations;
};

/**
 * @brief Measures one step on one rank.
 *
 * Seconds and bytes are deltas over the step; peak bytes is the rank's
 * lifetime high-water mark at the end of the step.
 */
class StepMeter {
  public:
    explicit StepMeter(const Communicator &comm);
    MetricRecord finish(int step, std::optional<double> loss = std::nullopt) const;

  private:
    const Communicator &comm_;
    CommMetrics start_;
    std::chrono::steady_clock::time_point t0_;
};

/// Every rank's record, in rank order, on every rank.
std::vector<MetricRecord> gather_records(Communicator &comm, const MetricRecord &local);

MetricRecord aggregate(const std::vector<MetricRecord> &records);

std::string to_jsonl(const MetricRecord &record);
std::string to_jsonl(const ProfileRecord &record);

template <typename Record> void write_jsonl(std::ostream &os, const std::vector<Record> &records) {
    for (const auto &r : records)
        os << to_jsonl(r) << "\n";
}

} // namespace qshard
