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
 * @file sampling.hpp
 * Probabilities, exact and Gaussian shot sampling, all-Z measurement.
 *
 * Probabilities are redistributed so that rank j owns the contiguous
 * canonical index range I_j = [j L, (j + 1) L).
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string_view>

#include "qshard/comm.hpp"
#include "qshard/common.hpp"
#include "qshard/state_vector.hpp"

namespace qshard {

struct ProbShard {
    int num_qubits = 0;
    int world = 1;
    int rank = 0;
    /// batch x local_size(), canonical order within I_rank
    RowMatrix<double> p;

    int batch_size() const { return static_cast<int>(p.rows()); }
    Index local_size() const { return p.cols(); }
    Index offset() const { return rank * local_size(); }
};

/// Move per-amplitude values (batch x local, physical order) to canonical shards.
RowMatrix<double> layout_to_shard(const RowMatrix<double> &values, const QubitLayout &layout,
                                  Communicator &comm);

/// Inverse of layout_to_shard.
RowMatrix<double> shard_to_layout(const RowMatrix<double> &values, const QubitLayout &layout,
                                  Communicator &comm);

template <typename Scalar> ProbShard probabilities(const StateVector<Scalar> &state, Communicator &comm) {
    RowMatrix<double> local(state.batch_size(), state.local_size());
    for (int b = 0; b < state.batch_size(); ++b) {
        const Scalar *x = state.batch_data(b);
        for (Index l = 0; l < state.local_size(); ++l) {
            const double re = x[2 * l], im = x[2 * l + 1];
            local(b, l) = re * re + im * im;
        }
    }
    return ProbShard{state.num_qubits(), comm.world(), comm.rank(), layout_to_shard(local, state.layout(), comm)};
}

/// Pairwise sum of a range; the same tree the exact sampler uses.
double pairwise_sum(std::span<const double> values);

/// q_j = sum over I_j, batch x world, identical on all ranks.
RowMatrix<double> group_probs(const ProbShard &shard, Communicator &comm);

double multinomial_log_pmf(std::span<const Index> x, Index n, std::span<const double> p);
double multinomial_pmf(std::span<const Index> x, Index n, std::span<const double> p);

struct ShotCounts {
    Index shots = 0;
    bool exact = true;
    /// batch x 2^q; integral when exact.
    RowMatrix<double> counts;
};

/**
 * @brief Exact multinomial counts for this rank's I_j (batch x L).
 *
 * The draw is a binary tree of conditional binomials over the canonical
 * index. The top log2(world) levels split n into group totals y ~ M(n, q)
 * and are computed redundantly on every rank from shared seeds; each rank
 * then splits its own y_j within I_j. Every node draws from a stream keyed
 * by (seed, batch, node), so counts do not depend on the world size.
 * Groups with q_j = 0 receive nothing and are skipped.
 */
RowMatrix<Index> sample_exact_local(const ProbShard &shard, Index n, std::uint64_t seed, Communicator &comm);

/// Global counts assembled on every rank.
ShotCounts gather_counts(const RowMatrix<Index> &local, Index n, Communicator &comm);

inline ShotCounts sample_exact(const ProbShard &shard, Index n, std::uint64_t seed, Communicator &comm) {
    return gather_counts(sample_exact_local(shard, n, seed, comm), n, comm);
}

template <typename Scalar>
ShotCounts sample_exact(const StateVector<Scalar> &state, Index n, std::uint64_t seed, Communicator &comm) {
    return sample_exact(probabilities(state, comm), n, seed, comm);
}

/**
 * @brief Factor of the multinomial covariance, Sigma = D (I - u u^T) D.
 *
 * D = diag(sqrt(p)), u = sqrt(p), v = (e_k - u) / |e_k - u| with e_k the
 * last basis vector, or v = 0 when u = e_k. S = I - 2 v v^T maps every z
 * with z_k = 0 into the complement of u, so S z has covariance I - u u^T.
 */
struct GaussianFactor {
    Eigen::VectorXd d;
    Eigen::VectorXd u;
    Eigen::VectorXd v;

    bool degenerate() const { return v.isZero(0.0); }
    Eigen::MatrixXd S() const;
    /// D S z
    Eigen::VectorXd apply(const Eigen::VectorXd &z) const;
};

GaussianFactor gaussian_factor(const Eigen::VectorXd &p);

/// k standard normals with the last one set to 0.
Eigen::VectorXd gaussian_noise(Index k, std::mt19937_64 &rng);

/// y = n p + sqrt(n) D S z
Eigen::VectorXd gaussian_counts(const Eigen::VectorXd &p, Index n, const Eigen::VectorXd &z);

/// dL/dp of L(gaussian_counts(p, n, z)) given dL/dy, z held fixed.
Eigen::VectorXd gaussian_counts_backward(const Eigen::VectorXd &p, Index n, const Eigen::VectorXd &z,
                                         const Eigen::VectorXd &dy);

ShotCounts sample_gaussian(const Eigen::VectorXd &p, Index n, std::mt19937_64 &rng);

enum class MeasureMode { Analytic, Exact, Approx };

MeasureMode parse_measure_mode(std::string_view text);
std::string_view to_string(MeasureMode mode);

struct MeasureOptions {
    MeasureMode mode = MeasureMode::Analytic;
    Index shots = 0;
    std::uint64_t seed = 0;
};

/// No mode: shots = 0 selects analytic and shots > 0 exact. Sampled modes need shots >= 1.
MeasureOptions resolve_measure(std::optional<MeasureMode> mode, Index shots, std::uint64_t seed);

struct Measurement {
    MeasureOptions options;
    /// batch x q, <Z_i>
    RowMatrix<double> expectations;
    ProbShard probs;
    /// Frequencies on this rank's shard.
    RowMatrix<double> freqs;
    /// exact mode
    RowMatrix<Index> counts;
    /// approx mode
    RowMatrix<double> noise;
    std::vector<double> s, t, u_last;

    bool differentiable() const { return options.mode != MeasureMode::Exact; }
};

/// sum_c sign_i(c) f_c, reduced over ranks.
RowMatrix<double> allz_expectations(const RowMatrix<double> &freqs, int num_qubits, int rank, Communicator &comm);

Measurement measure_probs(ProbShard probs, const MeasureOptions &options, Communicator &comm);

template <typename Scalar>
Measurement measure_allZ(const StateVector<Scalar> &state, const MeasureOptions &options, Communicator &comm) {
    return measure_probs(probabilities(state, comm), options, comm);
}

/// dL/dp on the canonical shard, given dL/d<Z> (batch x q).
RowMatrix<double> measure_backward_probs(const Measurement &m, const RowMatrix<double> &d_expect,
                                         Communicator &comm);

/**
 * @brief dL/dpsi in the state's layout.
 *
 * Gradients use the convention g = dL/dRe + i dL/dIm. Throws
 * GradientPathError for exact sampling.
 */
template <typename Scalar>
StateVector<Scalar> measure_backward(const Measurement &m, const RowMatrix<double> &d_expect,
                                     const StateVector<Scalar> &state, Communicator &comm) {
    const RowMatrix<double> dp = shard_to_layout(measure_backward_probs(m, d_expect, comm), state.layout(), comm);
    StateVector<Scalar> grad = state.zeros_like();
    for (int b = 0; b < state.batch_size(); ++b) {
        const Scalar *x = state.batch_data(b);
        Scalar *g = grad.batch_data(b);
        for (Index l = 0; l < state.local_size(); ++l) {
            g[2 * l] = static_cast<Scalar>(2.0 * x[2 * l] * dp(b, l));
            g[2 * l + 1] = static_cast<Scalar>(2.0 * x[2 * l + 1] * dp(b, l));
        }
    }
    return grad;
}

/// batch_index,basis_index,count; exact counts list nonzero cells only.
void write_counts_csv(std::ostream &os, const ShotCounts &counts);

} // namespace qshard
