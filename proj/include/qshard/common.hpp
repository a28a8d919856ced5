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
 * @file common.hpp
 * Shared scalar aliases and the exception hierarchy.
 */
#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qshard {

using Index = std::int64_t;

/// Gate matrices are always built in double precision and cast at apply time.
using GateMatrix = Eigen::MatrixXcd;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Batch-major dense amplitudes: one row per batch element, 2^q columns.
template <typename Scalar>
using DenseStates = RowMatrix<std::complex<Scalar>>;

enum class Precision { Float32, Float64 };

inline constexpr int kDefaultRankCap = 16;

/// Unitarity tolerance scaled to the working precision.
inline constexpr double unitarity_tolerance(Precision precision) {
    return precision == Precision::Float64 ? 1e-10 : 1e-4;
}

template <typename Scalar> inline constexpr Precision precision_of() {
    static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
    return std::is_same_v<Scalar, double> ? Precision::Float64 : Precision::Float32;
}

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid qubit/dimension bookkeeping request.
class LayoutError : public Error {
  public:
    using Error::Error;
};

/// Unknown gate, arity mismatch, non-unitary matrix.
class GateError : public Error {
  public:
    using Error::Error;
};

/// Collective misuse or transport failure.
class CommError : public Error {
  public:
    using Error::Error;
};

/// Raised on ranks whose peers failed, so no rank blocks forever.
class CommAborted : public CommError {
  public:
    using CommError::CommError;
};

class SamplingError : public Error {
  public:
    using Error::Error;
};

/// Gradient requested through a non-differentiable operation.
class GradientPathError : public Error {
  public:
    using Error::Error;
};

/// Invertible recompute drifted away from the recorded start state.
class ReplayDivergence : public Error {
  public:
    using Error::Error;
};

class ParseError : public Error {
  public:
    ParseError(int line, std::string field, const std::string &message)
        : Error("line " + std::to_string(line) + (field.empty() ? "" : " [" + field + "]") +
                ": " + message),
          line_(line), field_(std::move(field)) {}

    int line() const { return line_; }
    const std::string &field() const { return field_; }

  private:
    int line_;
    std::string field_;
};

inline bool is_power_of_two(Index value) { return value > 0 && (value & (value - 1)) == 0; }

inline int log2_exact(Index value) {
    int bits = 0;
    while ((Index{1} << bits) < value)
        ++bits;
    return bits;
}

} // namespace qshard
