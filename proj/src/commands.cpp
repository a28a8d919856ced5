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
#include "qshard/commands.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <limits>

namespace qshard {

namespace {

std::ofstream open_output(const std::string &dir, const std::string &name) {
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::path(dir) / name;
    std::ofstream os(path);
    if (!os)
        throw Error("cannot write '" + path.string() + "'");
    return os;
}

void write_measurements_csv(std::ostream &os, const RowMatrix<double> &expect) {
    os << "batch_index,qubit,expectation\n";
    for (Index b = 0; b < expect.rows(); ++b)
        for (Index i = 0; i < expect.cols(); ++i)
            os << b << "," << i << "," << format_real(expect(b, i)) << "\n";
}

RowMatrix<double> program_inputs(const Program &prog, std::uint64_t seed) {
    return initial_inputs(prog.batch, prog.features, seed);
}

template <typename Scalar>
void run_rank(const Program &prog, const MeasureOptions &measure, const RunOptions &options, Communicator &comm,
              RunResult &result) {
    StepMeter meter(comm);
    const RowMatrix<double> inputs = program_inputs(prog, options.seed);
    Tape<Scalar> tape(true);
    run_forward(tape, prog.ops, prog.params, inputs, prog.num_qubits, prog.batch, comm);
    const Measurement m = measure_allZ(tape.final_state(), measure, comm);
    std::optional<ShotCounts> counts;
    if (measure.mode == MeasureMode::Exact)
        counts = gather_counts(m.counts, measure.shots, comm);
    std::optional<DenseStates<double>> dense;
    if (!options.dump_path.empty())
        {
        const DenseStates<Scalar> local = to_dense(tape.final_state(), comm);
        dense = DenseStates<double>(local.template cast<std::complex<double>>());
    }
    const auto records = gather_records(comm, meter.finish(0));
    if (comm.rank() != 0)
        return;
    result.measure = measure;
    result.expectations = m.expectations;
    result.counts = std::move(counts);
    result.metrics = records;
    if (dense) {
        std::ofstream os(options.dump_path, std::ios::binary);
        if (!os)
            throw Error("cannot write '" + options.dump_path + "'");
        write_dense_dump(os, *dense, prog.num_qubits);
    }
}

template <typename Scalar>
void train_rank(const Program &prog, const MeasureOptions &measure, const TrainOptions &options, Communicator &comm,
                TrainResult &result) {
    RowMatrix<double> inputs = program_inputs(prog, options.seed);
    AdamState adam(static_cast<std::size_t>(inputs.size()), options.adam);
    std::vector<double> losses;
    std::vector<MetricRecord> records;
    const int evaluations = std::max(options.iters, 1);
    for (int it = 0; it < evaluations; ++it) {
        StepMeter meter(comm);
        const bool update = options.iters > 0;
        const auto eval = evaluate_loss<Scalar>(prog.ops, prog.params, inputs, prog.num_qubits, prog.batch, measure,
                                                comm, update);
        losses.push_back(eval.loss);
        if (update)
            adam_step(std::span<double>(inputs.data(), inputs.size()),
                      std::span<const double>(eval.grads.d_input.data(), eval.grads.d_input.size()), adam);
        const auto step = gather_records(comm, meter.finish(it, eval.loss));
        records.insert(records.end(), step.begin(), step.end());
    }
    if (comm.rank() != 0)
        return;
    result.losses = std::move(losses);
    result.inputs = std::move(inputs);
    result.metrics = std::move(records);
}

template <typename Scalar>
ProfileRecord profile_rank(const Program &prog, const ProfileOptions &options, Communicator &comm) {
    const RowMatrix<double> inputs = program_inputs(prog, options.seed);
    const MeasureOptions measure{MeasureMode::Analytic, 0, options.seed};
    for (int w = 0; w < options.warmup; ++w)
        evaluate_loss<Scalar>(prog.ops, prog.params, inputs, prog.num_qubits, prog.batch, measure, comm, true);
    StepMeter meter(comm);
    const auto eval =
        evaluate_loss<Scalar>(prog.ops, prog.params, inputs, prog.num_qubits, prog.batch, measure, comm, true);
    const auto records = gather_records(comm, meter.finish(1, eval.loss));
    ProfileRecord out;
    out.qubits = prog.num_qubits;
    out.world = comm.world();
    out.mode = options.mode == ScalingMode::Strong ? "strong" : "weak";
    out.metrics = aggregate(records);
    out.expectations.assign(eval.expectations.row(0).begin(), eval.expectations.row(0).end());
    return out;
}

CircuitSpec profile_circuit(int num_qubits, int depth, int batch) {
    CircuitSpec spec;
    spec.num_qubits = num_qubits;
    spec.batch = batch;
    spec.features = num_qubits;
    std::vector<EncoderEntry> entries;
    for (int i = 0; i < num_qubits; ++i)
        entries.push_back({"ry", {i}, i});
    spec.ops = build_encoder(entries, num_qubits);
    const auto ladder = build_ladder_ansatz(num_qubits, depth);
    spec.ops.insert(spec.ops.end(), ladder.begin(), ladder.end());
    return spec;
}

} // namespace

void launch(int ranks, const std::function<void(Communicator &)> &body) {
    if (const auto env = launch_env_from_environment()) {
        auto comm = connect_tcp(env->rank, env->world, env->endpoint);
        body(*comm);
        return;
    }
    if (ranks < 1 || !std::has_single_bit(static_cast<unsigned>(ranks)))
        throw CommError("world size must be a power of two, got " + std::to_string(ranks));
    run_in_process(ranks, body);
}

MeasureOptions effective_measure(const CircuitSpec &spec, const MeasureOverride &over, std::uint64_t seed) {
    if (over.mode)
        return resolve_measure(over.mode, over.shots.value_or(spec.shots), seed);
    if (over.shots)
        return resolve_measure(std::nullopt, *over.shots, seed);
    return resolve_measure(spec.mode, spec.shots, seed);
}

RunResult run_command(const CircuitSpec &spec, const RunOptions &options) {
    const Program prog = compile(spec, options.seed);
    const MeasureOptions measure = effective_measure(spec, options.measure, options.seed);
    RunResult result;
    bool wrote = false;
    launch(options.ranks, [&](Communicator &comm) {
        if (options.precision == Precision::Float32)
            run_rank<float>(prog, measure, options, comm, result);
        else
            run_rank<double>(prog, measure, options, comm, result);
        if (comm.rank() == 0)
            wrote = true;
    });
    if (wrote && !options.out_dir.empty()) {
        auto os = open_output(options.out_dir, "measurements.csv");
        write_measurements_csv(os, result.expectations);
        if (result.counts) {
            auto cs = open_output(options.out_dir, "counts.csv");
            write_counts_csv(cs, *result.counts);
        }
        auto ms = open_output(options.out_dir, "metrics.jsonl");
        write_jsonl(ms, result.metrics);
    }
    return result;
}

TrainResult train_command(const CircuitSpec &spec_in, const TrainOptions &options) {
    CircuitSpec spec = spec_in;
    if (options.batch) {
        if (*options.batch < 1)
            throw Error("batch must be at least 1");
        spec.batch = *options.batch;
    }
    if (options.iters < 0)
        throw Error("iters must be non-negative");
    if (spec.features == 0)
        throw Error("circuit has no encoder inputs to train");
    const MeasureOptions measure = effective_measure(spec, options.measure, options.seed);
    if (measure.mode == MeasureMode::Exact && options.iters > 0)
        throw GradientPathError("no gradient path: exact shot sampling is not differentiable; "
                                "use --measure-mode analytic or approx");
    const Program prog = compile(spec, options.seed);
    TrainResult result;
    bool wrote = false;
    launch(options.ranks, [&](Communicator &comm) {
        if (options.precision == Precision::Float32)
            train_rank<float>(prog, measure, options, comm, result);
        else
            train_rank<double>(prog, measure, options, comm, result);
        if (comm.rank() == 0)
            wrote = true;
    });
    if (wrote && !options.out_dir.empty()) {
        auto os = open_output(options.out_dir, "loss.csv");
        os << "iteration,loss\n";
        for (std::size_t i = 0; i < result.losses.size(); ++i)
            os << i << "," << format_real(result.losses[i]) << "\n";
        auto ms = open_output(options.out_dir, "metrics.jsonl");
        write_jsonl(ms, result.metrics);
    }
    return result;
}

std::uint64_t estimate_memory(int num_qubits, int batch, Precision precision) {
    const std::uint64_t amp = precision == Precision::Float32 ? 8 : 16;
    if (num_qubits >= 58)
        return std::numeric_limits<std::uint64_t>::max();
    return (std::uint64_t{1} << num_qubits) * amp * static_cast<std::uint64_t>(batch) * 3;
}

std::vector<std::pair<int, int>> profile_points(const ProfileOptions &options) {
    std::vector<int> worlds = options.ranks;
    if (const auto env = launch_env_from_environment())
        worlds = {env->world};
    std::vector<std::pair<int, int>> points;
    if (options.mode == ScalingMode::Strong) {
        for (int q = options.qubits_min; q <= options.qubits_max; ++q)
            for (int w : worlds)
                points.emplace_back(q, w);
    } else {
        for (int w : worlds) {
            if (w < 1 || !std::has_single_bit(static_cast<unsigned>(w)))
                throw CommError("world size must be a power of two, got " + std::to_string(w));
            points.emplace_back(options.qubits_min + std::countr_zero(static_cast<unsigned>(w)), w);
        }
    }
    return points;
}

std::vector<ProfileRecord> profile_command(const ProfileOptions &options) {
    if (options.qubits_min < 2 || options.qubits_max < options.qubits_min)
        throw Error("need 2 <= qubits-min <= qubits-max");
    const auto points = profile_points(options);
    for (const auto &[q, w] : points) {
        const auto bytes = estimate_memory(q, options.batch, options.precision);
        if (bytes > options.memory_budget)
            throw Error("refusing q=" + std::to_string(q) + ": estimated " + std::to_string(bytes) +
                        " bytes exceeds the memory budget of " + std::to_string(options.memory_budget) + " bytes");
        if (q > options.max_qubits)
            throw Error("refusing q=" + std::to_string(q) + ": above the limit of " +
                        std::to_string(options.max_qubits) + " qubits (raise --max-qubits)");
    }
    std::vector<ProfileRecord> records;
    for (const auto &[q, w] : points) {
        const Program prog = compile(profile_circuit(q, options.depth, options.batch), options.seed);
        ProfileRecord record;
        bool wrote = false;
        launch(w, [&](Communicator &comm) {
            auto r = options.precision == Precision::Float32 ? profile_rank<float>(prog, options, comm)
                                                             : profile_rank<double>(prog, options, comm);
            if (comm.rank() == 0) {
                record = std::move(r);
                wrote = true;
            }
        });
        if (wrote)
            records.push_back(std::move(record));
    }
    if (!options.out_dir.empty() && !records.empty()) {
        auto os = open_output(options.out_dir, "profile.jsonl");
        write_jsonl(os, records);
    }
    return records;
}

} // namespace qshard
