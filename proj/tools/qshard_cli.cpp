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
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "qshard/commands.hpp"

using namespace qshard;

namespace {

bool is_output_rank() {
    const auto env = launch_env_from_environment();
    return !env || env->rank == 0;
}

Precision parse_precision(const std::string &text) {
    if (text == "float64")
        return Precision::Float64;
    if (text == "float32")
        return Precision::Float32;
    throw Error("unknown precision '" + text + "' (expected float32 or float64)");
}

struct CommonFlags {
    int ranks = 1;
    std::uint64_t seed = 0;
    std::optional<Index> shots;
    std::string measure_mode;
    std::string precision = "float64";
    std::string out;
};

void add_common(CLI::App *cmd, CommonFlags &flags) {
    cmd->add_option("--ranks", flags.ranks, "In-process world size (power of two)");
    cmd->add_option("--seed", flags.seed, "Seed for sampling and initial values");
    cmd->add_option("--shots", flags.shots, "Shot count; 0 means analytic");
    cmd->add_option("--measure-mode", flags.measure_mode, "analytic, exact or approx");
    cmd->add_option("--precision", flags.precision, "float32 or float64");
    cmd->add_option("--out", flags.out, "Output directory");
}

MeasureOverride measure_override(const CommonFlags &flags) {
    MeasureOverride over;
    if (!flags.measure_mode.empty())
        over.mode = parse_measure_mode(flags.measure_mode);
    over.shots = flags.shots;
    return over;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Distributed state-vector simulator"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    std::string run_circuit, dump_path;
    auto *run = app.add_subcommand("run", "Simulate a circuit and measure <Z> on every qubit");
    run->add_option("circuit", run_circuit, "Circuit file")->required();
    add_common(run, run_flags);
    run->add_option("--dump", dump_path, "Write the final dense statevector to this file");

    CommonFlags train_flags;
    std::string train_circuit;
    TrainOptions train_opts;
    int train_batch = 0;
    auto *train = app.add_subcommand("train", "Optimise encoder inputs with Adam on sum |<Z>|");
    train->add_option("circuit", train_circuit, "Circuit file")->required();
    add_common(train, train_flags);
    train->add_option("--iters", train_opts.iters, "Optimiser iterations; 0 evaluates once");
    train->add_option("--lr", train_opts.adam.lr, "Adam learning rate");
    train->add_option("--batch", train_batch, "Override the circuit batch size");

    ProfileOptions prof;
    std::string prof_mode = "strong", prof_precision = "float64";
    double budget_gb = 16.0;
    auto *profile = app.add_subcommand("profile", "Time one forward-backward step across sizes and world sizes");
    profile->add_option("--qubits-min", prof.qubits_min, "Smallest register");
    profile->add_option("--qubits-max", prof.qubits_max, "Largest register (strong mode)");
    profile->add_option("--ranks", prof.ranks, "World sizes to sweep")->delimiter(',');
    profile->add_option("--mode", prof_mode, "strong or weak")->check(CLI::IsMember({"strong", "weak"}));
    profile->add_option("--depth", prof.depth, "Ladder depth of the profiled circuit");
    profile->add_option("--batch", prof.batch, "Batch size");
    profile->add_option("--warmup", prof.warmup, "Unmeasured steps before the measured one");
    profile->add_option("--max-qubits", prof.max_qubits, "Largest register allowed");
    profile->add_option("--memory-budget-gb", budget_gb, "Memory budget in GiB");
    profile->add_option("--seed", prof.seed, "Seed for inputs and weights");
    profile->add_option("--precision", prof_precision, "float32 or float64");
    profile->add_option("--out", prof.out_dir, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            RunOptions opts;
            opts.ranks = run_flags.ranks;
            opts.seed = run_flags.seed;
            opts.measure = measure_override(run_flags);
            opts.precision = parse_precision(run_flags.precision);
            opts.out_dir = run_flags.out;
            opts.dump_path = dump_path;
            const auto result = run_command(load_circuit(run_circuit), opts);
            if (is_output_rank()) {
                for (Index b = 0; b < result.expectations.rows(); ++b) {
                    std::cout << "batch " << b << ":";
                    for (Index i = 0; i < result.expectations.cols(); ++i)
                        std::cout << " " << format_real(result.expectations(b, i));
                    std::cout << "\n";
                }
            }
        } else if (*train) {
            train_opts.ranks = train_flags.ranks;
            train_opts.seed = train_flags.seed;
            train_opts.measure = measure_override(train_flags);
            train_opts.precision = parse_precision(train_flags.precision);
            train_opts.out_dir = train_flags.out;
            if (train_batch > 0)
                train_opts.batch = train_batch;
            const auto result = train_command(load_circuit(train_circuit), train_opts);
            if (is_output_rank())
                for (std::size_t i = 0; i < result.losses.size(); ++i)
                    std::cout << "iter " << i << " loss " << format_real(result.losses[i]) << "\n";
        } else if (*profile) {
            prof.mode = prof_mode == "weak" ? ScalingMode::Weak : ScalingMode::Strong;
            prof.precision = parse_precision(prof_precision);
            prof.memory_budget = static_cast<std::uint64_t>(budget_gb * double(std::uint64_t{1} << 30));
            const auto records = profile_command(prof);
            if (is_output_rank())
                write_jsonl(std::cout, records);
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
