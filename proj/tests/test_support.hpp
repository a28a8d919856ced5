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
#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "qshard/autodiff.hpp"
#include "qshard/gates.hpp"
#include "qshard/sampling.hpp"

namespace qshard::testing {

struct OpInstance {
    std::string name;
    std::vector<int> wires;
    std::optional<double> theta;
};

inline std::vector<OpInstance> random_circuit(int q, int depth, std::mt19937_64 &rng,
                                              const GateRegistry &registry = default_registry()) {
    const auto names = registry.names();
    std::uniform_int_distribution<std::size_t> pick_gate(0, names.size() - 1);
    std::uniform_real_distribution<double> angle(-3.2, 3.2);
    std::vector<OpInstance> ops;
    while (static_cast<int>(ops.size()) < depth) {
        const auto def = registry.find(names[pick_gate(rng)]);
        if (def->arity > q)
            continue;
        std::vector<int> all(q);
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        OpInstance op{def->name, std::vector<int>(all.begin(), all.begin() + def->arity), std::nullopt};
        if (def->parametric)
            op.theta = angle(rng);
        ops.push_back(std::move(op));
    }
    return ops;
}

/// The 2^q x 2^q matrix of `m` acting on `wires`, qubit 0 the most significant bit.
inline GateMatrix embed(const GateMatrix &m, const std::vector<int> &wires, int q) {
    const Index dim = Index{1} << q;
    const int k = static_cast<int>(wires.size());
    Index wire_mask = 0;
    for (int w : wires)
        wire_mask |= Index{1} << (q - 1 - w);
    auto sub = [&](Index i) {
        Index s = 0;
        for (int t = 0; t < k; ++t)
            s = (s << 1) | ((i >> (q - 1 - wires[t])) & 1);
        return s;
    };
    GateMatrix full = GateMatrix::Zero(dim, dim);
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < dim; ++j)
            if ((i & ~wire_mask) == (j & ~wire_mask))
                full(i, j) = m(sub(i), sub(j));
    return full;
}

/// Kronecker product of single-qubit factors, factor 0 acting on qubit 0.
inline GateMatrix kron_all(const std::vector<GateMatrix> &factors) {
    GateMatrix out = GateMatrix::Identity(1, 1);
    for (const auto &f : factors) {
        GateMatrix next(out.rows() * f.rows(), out.cols() * f.cols());
        for (Index i = 0; i < out.rows(); ++i)
            for (Index j = 0; j < out.cols(); ++j)
                next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = out(i, j) * f;
        out = std::move(next);
    }
    return out;
}

inline GateMatrix circuit_unitary(const std::vector<OpInstance> &ops, int q,
                                  const GateRegistry &registry = default_registry()) {
    GateMatrix u = GateMatrix::Identity(Index{1} << q, Index{1} << q);
    for (const auto &op : ops) {
        const GateMatrix m = registry.find(op.name)->matrix(op.theta.value_or(0.0));
        GateMatrix full;
        if (op.wires.size() == 1) {
            std::vector<GateMatrix> factors(q, GateMatrix::Identity(2, 2));
            factors[op.wires[0]] = m;
            full = kron_all(factors);
        } else {
            full = embed(m, op.wires, q);
        }
        u = full * u;
    }
    return u;
}

template <typename Scalar = double>
void run_ops(StateVector<Scalar> &state, const std::vector<OpInstance> &ops, Communicator &comm,
             int rank_cap = kDefaultRankCap, const GateRegistry &registry = default_registry()) {
    for (const auto &op : ops)
        apply(state, StatefulGate(registry.find(op.name), op.wires, op.theta), comm, rank_cap);
}

/// Dense output of `ops` on |0...0> simulated over `world` in-process ranks (rank 0's copy).
inline DenseStates<double> simulate(const std::vector<OpInstance> &ops, int q, int world, int batch = 1,
                                    int rank_cap = kDefaultRankCap) {
    auto all = run_in_process_collect<DenseStates<double>>(world, [&](Communicator &comm) {
        auto state = init_state<double>(q, batch, comm, rank_cap);
        run_ops(state, ops, comm, rank_cap);
        return to_dense(state, comm);
    });
    return all[0];
}

inline double max_abs_diff(const DenseStates<double> &a, const DenseStates<double> &b) {
    return (a - b).cwiseAbs().maxCoeff();
}

/// Direct single-node multinomial draw by sequential conditional binomials.
inline std::vector<Index> direct_multinomial(Index n, const std::vector<double> &p, std::mt19937_64 &rng) {
    std::vector<Index> x(p.size(), 0);
    double rest = 1.0;
    Index left = n;
    for (std::size_t i = 0; i + 1 < p.size() && left > 0; ++i) {
        const double prob = rest > 0.0 ? std::clamp(p[i] / rest, 0.0, 1.0) : 0.0;
        x[i] = std::binomial_distribution<Index>(left, prob)(rng);
        left -= x[i];
        rest -= p[i];
    }
    x.back() += left;
    return x;
}

/// Pearson statistic against expected cell counts; cells with expectation 0 must be empty.
inline double pearson(const std::vector<double> &observed, const std::vector<double> &expected) {
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i)
        if (expected[i] > 0.0)
            stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    return stat;
}

inline double chi2_critical(double dof, double alpha) {
    return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

/// Two-sample homogeneity statistic over shared bins; bins with few entries are merged.
inline std::pair<double, int> homogeneity(const std::vector<Index> &a, const std::vector<Index> &b) {
    std::map<Index, std::pair<double, double>> bins;
    for (Index v : a)
        bins[v].first += 1;
    for (Index v : b)
        bins[v].second += 1;
    std::vector<std::pair<double, double>> merged;
    std::pair<double, double> acc{0, 0};
    for (const auto &[_, cell] : bins) {
        acc.first += cell.first;
        acc.second += cell.second;
        if (acc.first + acc.second >= 20) {
            merged.push_back(acc);
            acc = {0, 0};
        }
    }
    if (!merged.empty()) {
        merged.back().first += acc.first;
        merged.back().second += acc.second;
    }
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double stat = 0.0;
    for (const auto &[x, y] : merged) {
        const double total = x + y;
        const double ea = total * na / (na + nb), eb = total * nb / (na + nb);
        stat += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
    }
    return {stat, static_cast<int>(merged.size()) - 1};
}

/// A state whose canonical probabilities equal `p` (real non-negative amplitudes).
template <typename Scalar = double>
StateVector<Scalar> state_from_probs(const std::vector<std::vector<double>> &p, int q, Communicator &comm) {
    auto state = init_state<Scalar>(q, static_cast<int>(p.size()), comm);
    const auto to_phys = canonical_to_physical(state.layout());
    const int n = state.layout().num_local_qubits();
    for (int b = 0; b < state.batch_size(); ++b) {
        std::fill(state.batch_data(b), state.batch_data(b) + 2 * state.local_size(), Scalar{0});
        for (Index c = 0; c < static_cast<Index>(p[b].size()); ++c) {
            const Index phys = to_phys(c);
            if ((phys >> n) == comm.rank())
                state.batch_data(b)[2 * (phys & (state.local_size() - 1))] = static_cast<Scalar>(std::sqrt(p[b][c]));
        }
    }
    return state;
}

/// Parametric gates become trainable slots; every `input_every`-th one reads an input feature instead.
inline std::vector<Op> to_program(const std::vector<OpInstance> &ops, std::vector<double> &params, int features = 0,
                                  int input_every = 0) {
    std::vector<Op> out;
    int count = 0;
    for (const auto &op : ops) {
        Op o{default_registry().find(op.name), op.wires, ParamRef::none()};
        if (op.theta) {
            if (features > 0 && input_every > 0 && count % input_every == 0) {
                o.param = ParamRef::input(count / input_every % features);
            } else {
                o.param = ParamRef::trainable(static_cast<int>(params.size()));
                params.push_back(*op.theta);
            }
            ++count;
        }
        out.push_back(std::move(o));
    }
    return out;
}

} // namespace qshard::testing
