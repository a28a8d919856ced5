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
 * @file gates.hpp
 * Central gate registry. Each gate is defined once as a GateDef; the
 * functional form (`as_functional`) and the stateful form (`StatefulGate`)
 * are both generated from that single definition.
 */
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qshard/comm.hpp"
#include "qshard/common.hpp"
#include "qshard/exchange.hpp"
#include "qshard/state_vector.hpp"

namespace qshard {

struct GateDef {
    std::string name;
    int arity = 1;
    /// Whether the matrix depends on an angle.
    bool parametric = false;
    std::function<GateMatrix(double)> matrix;
    /// dM/dtheta; empty for non-differentiable gates.
    std::function<GateMatrix(double)> derivative;

    bool differentiable() const { return static_cast<bool>(derivative); }
};

using GatePtr = std::shared_ptr<const GateDef>;

/// max |(M M^dagger - I)_ij|
double unitarity_deviation(const GateMatrix &m);

/// Angles used for registration-time checks.
std::vector<double> registration_grid();

class GateRegistry {
  public:
    /**
     * @brief Add a gate after checking it on the registration grid.
     *
     * Rejects duplicate names, wrong matrix sizes, matrices that are not
     * unitary within the precision's tolerance (the message names the
     * deviation), and derivatives that disagree with central differences
     * by more than 1e-6.
     */
    GatePtr register_custom(GateDef def, Precision precision = Precision::Float64);

    GatePtr find(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;

  private:
    std::map<std::string, GatePtr, std::less<>> gates_;
};

/// x, y, z, h, s, t, rx, ry, rz, cx.
GateRegistry builtin_registry();

/// Shared immutable instance of builtin_registry().
const GateRegistry &default_registry();

/// Where a gate application left the layout: before de-sharding and at the contraction.
struct ApplyTrace {
    QubitLayout before;
    QubitLayout mid;
};

/**
 * @brief De-shard, move the wires to the front, contract, regroup.
 *
 * `matrices` holds one matrix shared by the batch or one per batch element.
 */
template <typename Scalar>
ApplyTrace apply_matrices(StateVector<Scalar> &state, std::span<const int> wires,
                          std::span<const GateMatrix> matrices, Communicator &comm,
                          int rank_cap = kDefaultRankCap) {
    ApplyTrace trace{state.layout(), {}};
    prepare_wires(state, wires, comm);
    trace.mid = state.layout();
    apply_matrix(state, wires, matrices);
    regroup(state, rank_cap);
    return trace;
}

/// Object form: a gate bound to wires and (for parametric gates) an angle.
class StatefulGate {
  public:
    StatefulGate(GatePtr def, std::vector<int> wires, std::optional<double> param = std::nullopt);

    const GateDef &def() const { return *def_; }
    const GatePtr &def_ptr() const { return def_; }
    const std::vector<int> &wires() const { return wires_; }
    std::optional<double> param() const { return param_; }
    void set_param(double theta);

    GateMatrix matrix() const;

    template <typename Scalar>
    ApplyTrace operator()(StateVector<Scalar> &state, Communicator &comm, int rank_cap = kDefaultRankCap) const {
        const GateMatrix m = matrix();
        return apply_matrices(state, wires_, std::span<const GateMatrix>(&m, 1), comm, rank_cap);
    }

  private:
    GatePtr def_;
    std::vector<int> wires_;
    std::optional<double> param_;
};

template <typename Scalar>
ApplyTrace apply(StateVector<Scalar> &state, const StatefulGate &gate, Communicator &comm,
                 int rank_cap = kDefaultRankCap) {
    return gate(state, comm, rank_cap);
}

/// Function form: applies the gate to whatever wires it is called with.
class FunctionalGate {
  public:
    explicit FunctionalGate(GatePtr def) : def_(std::move(def)) {}

    const GateDef &def() const { return *def_; }

    template <typename Scalar>
    ApplyTrace operator()(StateVector<Scalar> &state, Communicator &comm, std::vector<int> wires,
                          std::optional<double> theta = std::nullopt, int rank_cap = kDefaultRankCap) const {
        return apply(state, StatefulGate(def_, std::move(wires), theta), comm, rank_cap);
    }

  private:
    GatePtr def_;
};

FunctionalGate as_functional(const GateRegistry &registry, std::string_view name);

} // namespace qshard
