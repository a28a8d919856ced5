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
 * @file layout.hpp
 * Bookkeeping of how qubits map onto tensor dimensions and the rank grid.
 *
 * A local amplitude buffer is a row-major tensor
 *     [batch, dim_0, ..., dim_{m-1}, 2]
 * where dim_i holds the qubits of group i (extent 2^{|group i|}) and the
 * trailing axis holds real and imaginary parts. Concatenating the groups
 * gives `local_order`, the live index order: local_order[0] is the most
 * significant bit of the local index. Sharded qubits are encoded in the
 * rank id, sharded[0] being the most significant rank bit; in the full
 * tensor view they occupy extent-1 dimensions just before the component
 * axis.
 */
#pragma once

#include <span>
#include <string>
#include <vector>

#include "qshard/common.hpp"

namespace qshard {

class QubitLayout {
  public:
    QubitLayout() = default;
    QubitLayout(std::vector<int> local_order, std::vector<int> group_sizes,
                std::vector<int> sharded);

    /// All local qubits ungrouped, the last log2(world) qubits sharded.
    static QubitLayout initial(int num_qubits, int world_size);

    int num_qubits() const { return static_cast<int>(local_order_.size() + sharded_.size()); }
    int num_local_qubits() const { return static_cast<int>(local_order_.size()); }
    int num_sharded() const { return static_cast<int>(sharded_.size()); }
    int num_local_dims() const { return static_cast<int>(group_sizes_.size()); }
    int num_single_dims() const;

    /// batch + sharded + local dims + component
    int tensor_rank() const { return 2 + num_sharded() + num_local_dims(); }

    const std::vector<int> &local_order() const { return local_order_; }
    const std::vector<int> &group_sizes() const { return group_sizes_; }
    const std::vector<int> &sharded() const { return sharded_; }
    std::vector<std::vector<int>> groups() const;

    bool is_sharded(int qubit) const { return shard_slot(qubit) >= 0; }
    int shard_slot(int qubit) const;
    int local_position(int qubit) const;
    int dim_of(int qubit) const;
    bool is_single(int qubit) const;

    /// Split every group that contains one of `qubits` into single dims.
    QubitLayout split(std::span<const int> qubits) const;
    QubitLayout split_all() const;
    QubitLayout with_group_sizes(std::vector<int> group_sizes) const;

    /// J = [Q, I \ Q]: wires become the leading single dims, other dims keep their order.
    QubitLayout moved_front(std::span<const int> wires) const;

    /// The sharded qubit takes the local qubit's single dim and vice versa.
    QubitLayout exchanged(int sharded_qubit, int local_qubit) const;

    /// Merge adjacent local dims until tensor_rank() <= rank_cap.
    QubitLayout regrouped(int rank_cap) const;

    /// Throws LayoutError when an invariant is broken.
    void validate(int rank_cap) const;

    std::string to_string() const;

    bool operator==(const QubitLayout &) const = default;

  private:
    std::vector<int> local_order_;
    std::vector<int> group_sizes_;
    std::vector<int> sharded_;
};

/// Smallest reachable tensor rank for `num_qubits` spread over `world_size` ranks.
int min_tensor_rank(int num_qubits, int world_size);

} // namespace qshard
