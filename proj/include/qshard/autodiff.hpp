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
 * @file autodiff.hpp
 * Reverse-mode differentiation of circuits with invertible recomputation.
 *
 * In invertible mode the tape keeps only gate metadata and the final
 * state; the backward pass walks the nodes in reverse and recovers each
 * layer input as x = U^dagger y. Adjoints use g = dL/dRe + i dL/dIm, so
 * dx = U^dagger dy and dtheta = Re sum conj(dy) (dM/dtheta x).
 */
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "qshard/comm.hpp"
#include "qshard/exchange.hpp"
#include "qshard/gates.hpp"
#include "qshard/sampling.hpp"
#include "qshard/state_vector.hpp"

namespace qshard {

/// Where a gate's angle comes from.
struct ParamRef {
    enum class Kind { None, Fixed, Trainable, Input };

    Kind kind = Kind::None;
    double value = 0.0;
    int index = -1;

    static ParamRef none() { return {}; }
    static ParamRef fixed(double theta) { return {Kind::Fixed, theta, -1}; }
    static ParamRef trainable(int slot) { return {Kind::Trainable, 0.0, slot}; }
    static ParamRef input(int feature) { return {Kind::Input, 0.0, feature}; }

    bool differentiable() const { return kind == Kind::Trainable || kind == Kind::Input; }
    bool operator==(const ParamRef &) const = default;
};

struct Op {
    GatePtr gate;
    std::vector<int> wires;
    ParamRef param;
};

/// One angle shared by the batch, or one per batch element for input-bound gates.
std::vector<double> resolve_thetas(const Op &op, std::span<const double> params, const RowMatrix<double> &inputs,
                                   int batch);

std::vector<GateMatrix> gate_matrices(const Op &op, const std::vector<double> &thetas);

template <typename Scalar> struct TapeNode {
    Op op;
    std::vector<double> thetas;
    QubitLayout before;
    /// Layout at the contraction: wires leading.
    QubitLayout mid;
    /// Stored-activation mode only: the input in the `mid` layout.
    std::optional<StateVector<Scalar>> input;
};

template <typename Scalar> class Tape {
  public:
    explicit Tape(bool invertible = true) : invertible_(invertible) {}

    bool invertible() const { return invertible_; }
    void set_invertible(bool flag) {
        if (!nodes_.empty())
            throw GradientPathError("cannot switch activation mode on a recorded tape");
        invertible_ = flag;
    }

    const std::vector<TapeNode<Scalar>> &nodes() const { return nodes_; }
    std::vector<TapeNode<Scalar>> &nodes() { return nodes_; }
    const QubitLayout &initial_layout() const { return initial_; }

    /// Gradients cannot flow to nodes recorded before a break.
    void mark_break(std::string reason) { breaks_.emplace_back(nodes_.size(), std::move(reason)); }
    const std::vector<std::pair<std::size_t, std::string>> &breaks() const { return breaks_; }

    bool has_final_state() const { return final_.has_value(); }
    const StateVector<Scalar> &final_state() const { return final_.value(); }
    StateVector<Scalar> take_final_state() {
        StateVector<Scalar> out = std::move(final_.value());
        final_.reset();
        return out;
    }

    void begin(QubitLayout initial) {
        nodes_.clear();
        breaks_.clear();
        final_.reset();
        initial_ = std::move(initial);
    }
    void record(TapeNode<Scalar> node) { nodes_.push_back(std::move(node)); }
    void finish(StateVector<Scalar> state) { final_ = std::move(state); }

  private:
    bool invertible_;
    std::vector<TapeNode<Scalar>> nodes_;
    std::vector<std::pair<std::size_t, std::string>> breaks_;
    QubitLayout initial_;
    std::optional<StateVector<Scalar>> final_;
};

template <typename Scalar> Tape<Scalar> &enable_invertible(Tape<Scalar> &tape, bool flag) {
    tape.set_invertible(flag);
    return tape;
}

struct GradientSet {
    std::vector<double> d_params;
    /// batch x features
    RowMatrix<double> d_input;
    /// Amplitude buffers alive at once during the backward pass on this rank.
    std::size_t peak_buffers = 0;
    std::size_t peak_bytes = 0;
};

/**
 * @brief Run `ops` from |0...0> and record them on `tape`.
 *
 * `inputs` is batch x features; it may be empty when no op reads inputs.
 */
template <typename Scalar>
void run_forward(Tape<Scalar> &tape, const std::vector<Op> &ops, std::span<const double> params,
                 const RowMatrix<double> &inputs, int num_qubits, int batch, Communicator &comm,
                 int rank_cap = kDefaultRankCap) {
    StateVector<Scalar> state = init_state<Scalar>(num_qubits, batch, comm, rank_cap);
    tape.begin(state.layout());
    for (const Op &op : ops) {
        TapeNode<Scalar> node{op, resolve_thetas(op, params, inputs, batch), state.layout(), {}, std::nullopt};
        const auto matrices = gate_matrices(op, node.thetas);
        prepare_wires(state, op.wires, comm);
        node.mid = state.layout();
        if (!tape.invertible())
            node.input = state;
        apply_matrix(state, op.wires, std::span<const GateMatrix>(matrices));
        regroup(state, rank_cap);
        tape.record(std::move(node));
    }
    tape.finish(std::move(state));
}

/// Re-run the recorded nodes from |0...0>.
template <typename Scalar>
StateVector<Scalar> replay(const Tape<Scalar> &tape, int num_qubits, int batch, Communicator &comm,
                           int rank_cap = kDefaultRankCap) {
    StateVector<Scalar> state = init_state<Scalar>(num_qubits, batch, comm, rank_cap);
    for (const auto &node : tape.nodes()) {
        const auto matrices = gate_matrices(node.op, node.thetas);
        apply_matrices(state, node.op.wires, std::span<const GateMatrix>(matrices), comm, rank_cap);
    }
    return state;
}

/// Allowed drift of the recomputed initial state.
template <typename Scalar> constexpr double replay_tolerance() {
    return std::is_same_v<Scalar, double> ? 1e-8 : 1e-3;
}

namespace detail {

template <typename Scalar> double distance_from_zero_state(const StateVector<Scalar> &state) {
    double worst = 0.0;
    for (int b = 0; b < state.batch_size(); ++b) {
        const Scalar *x = state.batch_data(b);
        for (Index l = 0; l < 2 * state.local_size(); ++l) {
            const double expect = (state.rank() == 0 && l == 0) ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(static_cast<double>(x[l]) - expect));
        }
    }
    return worst;
}

} // namespace detail

/// Called with (node index, recovered input in the node's `mid` layout).
template <typename Scalar> using RecomputeHook = std::function<void(std::size_t, const StateVector<Scalar> &)>;

/**
 * @brief Reverse pass from dL/d(final state).
 *
 * Consumes the tape's final state. `d_final` must be in the final state's
 * layout. When `d_initial` is given it receives dL/d(initial state). Partial sums are reduced over ranks once at the end; parameter
 * gradients are summed over the batch.
 */
template <typename Scalar>
GradientSet backward(Tape<Scalar> &tape, StateVector<Scalar> d_final, int num_params, int num_features,
                     Communicator &comm, const std::type_identity_t<RecomputeHook<Scalar>> &hook = {},
                     StateVector<Scalar> *d_initial = nullptr) {
    const auto &nodes = tape.nodes();
    for (const auto &[pos, reason] : tape.breaks())
        for (std::size_t i = 0; i < pos && i < nodes.size(); ++i)
            if (nodes[i].op.param.differentiable())
                throw GradientPathError("no gradient path to parameters: " + reason);
    if (!tape.has_final_state())
        throw GradientPathError("tape has no final state; run the forward pass first");

    const int batch = d_final.batch_size();
    GradientSet grads;
    grads.d_params.assign(num_params, 0.0);
    grads.d_input = RowMatrix<double>::Zero(batch, num_features);

    std::optional<StateVector<Scalar>> y;
    {
        StateVector<Scalar> final_state = tape.take_final_state();
        if (!(final_state.layout() == d_final.layout()))
            throw LayoutError("adjoint layout differs from the final state layout");
        if (tape.invertible())
            y = std::move(final_state);
    }
    auto &tracker = *d_final.tracker();
    tracker.begin_window();

    StateVector<Scalar> &g = d_final;
    for (std::size_t i = nodes.size(); i-- > 0;) {
        auto &node = tape.nodes()[i];
        const auto &wires = node.op.wires;
        relayout(g, node.mid, comm);
        std::vector<GateMatrix> adjoints = gate_matrices(node.op, node.thetas);
        for (auto &m : adjoints)
            m.adjointInPlace();
        if (y) {
            relayout(*y, node.mid, comm);
            apply_matrix(*y, wires, std::span<const GateMatrix>(adjoints));
        }
        const StateVector<Scalar> &x = y ? *y : node.input.value();
        if (hook)
            hook(i, x);

        if (node.op.param.differentiable()) {
            if (!node.op.gate->differentiable())
                throw GateError("gate '" + node.op.gate->name + "' has no derivative");
            const Index dim = Index{1} << wires.size();
            const Index cols = x.local_size() / dim;
            for (int b = 0; b < batch; ++b) {
                const double theta = node.thetas.size() == 1 ? node.thetas[0] : node.thetas[b];
                const detail::SplitMatrix<Scalar> dm(node.op.gate->derivative(theta));
                const double part = detail::contract_dot(x.batch_data(b), g.batch_data(b), dim, cols, dm);
                if (node.op.param.kind == ParamRef::Kind::Trainable)
                    grads.d_params.at(node.op.param.index) += part;
                else
                    grads.d_input(b, node.op.param.index) += part;
            }
        }
        apply_matrix(g, wires, std::span<const GateMatrix>(adjoints));
        node.input.reset();
    }

    if (y) {
        relayout(*y, tape.initial_layout(), comm);
        const double drift = all_reduce_max(comm, detail::distance_from_zero_state(*y));
        if (drift > replay_tolerance<Scalar>())
            throw ReplayDivergence("recomputed initial state drifted by " + std::to_string(drift) +
                                   " from |0...0>; the circuit is not unitary to working precision");
    }
    if (d_initial) {
        relayout(g, tape.initial_layout(), comm);
        *d_initial = std::move(g);
    }
    all_reduce_sum<double>(comm, grads.d_params);
    all_reduce_sum<double>(comm, std::span<double>(grads.d_input.data(), grads.d_input.size()));
    grads.peak_buffers = tracker.window_peak_buffers();
    grads.peak_bytes = tracker.window_peak_bytes();
    return grads;
}

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamState(std::size_t size, AdamOptions options = {})
        : options(options), m(size, 0.0), v(size, 0.0) {}

    AdamOptions options;
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state);

/// Central differences of `loss` at `values`, one coordinate at a time.
std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)> &loss,
                                         std::span<const double> values, double eps = 1e-5);

double relative_error(double a, double b);

/**
 * @brief Largest relative error between `grad` and central differences of `loss`.
 *
 * Relative error uses max(|a|, |b|, 1e-8) as the denominator.
 */
double finite_diff_check(const std::function<double(std::span<const double>)> &loss, std::span<const double> values,
                         std::span<const double> grad, double eps = 1e-5);

/// Loss = sum |<Z_i>| over batch and qubits.
struct LossEvaluation {
    double loss = 0.0;
    RowMatrix<double> expectations;
    GradientSet grads;
};

double sum_abs_loss(const RowMatrix<double> &expectations);

/**
 * @brief Forward, measure, loss and (optionally) backward in one call.
 *
 * Requesting gradients through exact sampling raises GradientPathError.
 */
template <typename Scalar>
LossEvaluation evaluate_loss(const std::vector<Op> &ops, std::span<const double> params,
                             const RowMatrix<double> &inputs, int num_qubits, int batch,
                             const MeasureOptions &measure, Communicator &comm, bool with_grad,
                             bool invertible = true, int rank_cap = kDefaultRankCap) {
    Tape<Scalar> tape(invertible);
    run_forward(tape, ops, params, inputs, num_qubits, batch, comm, rank_cap);
    const Measurement m = measure_allZ(tape.final_state(), measure, comm);
    if (!m.differentiable())
        tape.mark_break("exact shot sampling is not differentiable");
    LossEvaluation out;
    out.expectations = m.expectations;
    out.loss = sum_abs_loss(m.expectations);
    if (!with_grad)
        return out;
    if (!m.differentiable())
        throw GradientPathError("no gradient path: exact shot sampling is not differentiable");
    const RowMatrix<double> d_expect = m.expectations.unaryExpr([](double e) { return double((e > 0) - (e < 0)); });
    StateVector<Scalar> d_final = measure_backward(m, d_expect, tape.final_state(), comm);
    out.grads = backward(tape, std::move(d_final), static_cast<int>(params.size()),
                         static_cast<int>(inputs.cols()), comm);
    return out;
}

} // namespace qshard
