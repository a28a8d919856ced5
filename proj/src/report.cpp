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
#include "qshard/report.hpp"

#include <array>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace qshard {

namespace {

using Json = nlohmann::ordered_json;

Json record_json(const MetricRecord &r) {
    Json j;
    j["rank"] = r.rank;
    j["step"] = r.step;
    j["walltime_s"] = r.walltime_s;
    j["a2a_s"] = r.a2a_s;
    j["a2a_bytes"] = r.a2a_bytes;
    j["peak_bytes"] = r.peak_bytes;
    j["loss"] = r.loss ? Json(*r.loss) : Json(nullptr);
    return j;
}

} // namespace

StepMeter::StepMeter(const Communicator &comm)
    : comm_(comm), start_(comm.read_metrics()), t0_(std::chrono::steady_clock::now()) {}

MetricRecord StepMeter::finish(int step, std::optional<double> loss) const {
    const auto now = comm_.read_metrics();
    MetricRecord r;
    r.rank = comm_.rank();
    r.step = step;
    r.walltime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    r.a2a_s = now.all_to_all_seconds - start_.all_to_all_seconds;
    r.a2a_bytes = now.all_to_all_bytes - start_.all_to_all_bytes;
    r.peak_bytes = now.peak_local_bytes;
    r.loss = loss;
    return r;
}

std::vector<MetricRecord> gather_records(Communicator &comm, const MetricRecord &local) {
    const std::array<double, 7> packed{double(local.rank),
                                       double(local.step),
                                       local.walltime_s,
                                       local.a2a_s,
                                       double(local.a2a_bytes),
                                       double(local.peak_bytes),
                                       local.loss.value_or(std::numeric_limits<double>::quiet_NaN())};
    const auto all = all_gather_vec<double>(comm, std::span<const double>(packed));
    std::vector<MetricRecord> out;
    for (std::size_t i = 0; i + 7 <= all.size(); i += 7) {
        MetricRecord r;
        r.rank = static_cast<int>(all[i]);
        r.step = static_cast<int>(all[i + 1]);
        r.walltime_s = all[i + 2];
        r.a2a_s = all[i + 3];
        r.a2a_bytes = static_cast<std::uint64_t>(all[i + 4]);
        r.peak_bytes = static_cast<std::uint64_t>(all[i + 5]);
        if (!std::isnan(all[i + 6]))
            r.loss = all[i + 6];
        out.push_back(r);
    }
    return out;
}

MetricRecord aggregate(const std::vector<MetricRecord> &records) {
    MetricRecord out;
    if (records.empty())
        return out;
    out.step = records.front().step;
    out.loss = records.front().loss;
    for (const auto &r : records) {
        out.walltime_s = std::max(out.walltime_s, r.walltime_s);
        out.a2a_s = std::max(out.a2a_s, r.a2a_s);
        out.a2a_bytes += r.a2a_bytes;
        out.peak_bytes = std::max(out.peak_bytes, r.peak_bytes);
    }
    return out;
}

std::string to_jsonl(const MetricRecord &record) { return record_json(record).dump(); }

std::string to_jsonl(const ProfileRecord &record) {
    Json j = record_json(record.metrics);
    j["qubits"] = record.qubits;
    j["world"] = record.world;
    j["mode"] = record.mode;
    j["expectations"] = record.expectations;
    return j.dump();
}

} // namespace qshard
