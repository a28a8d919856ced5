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
#include "qshard/layout.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace qshard {

namespace {

void check_distinct(std::span<const int> qubits) {
    std::vector<int> sorted(qubits.begin(), qubits.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw LayoutError("duplicate wire in wire list");
}

} // namespace

QubitLayout::QubitLayout(std::vector<int> local_order, std::vector<int> group_sizes,
                         std::vector<int> sharded)
    : local_order_(std::move(local_order)), group_sizes_(std::move(group_sizes)),
      sharded_(std::move(sharded)) {}

QubitLayout QubitLayout::initial(int num_qubits, int world_size) {
    if (!is_power_of_two(world_size))
        throw LayoutError("world size must be a power of two, got " + std::to_string(world_size));
    const int num_sharded = log2_exact(world_size);
    if (num_qubits < 2 + num_sharded)
        throw LayoutError("need at least " + std::to_string(2 + num_sharded) + " qubits for world size " +
                          std::to_string(world_size) + ", got " + std::to_string(num_qubits));
    std::vector<int> local(num_qubits - num_sharded);
    std::iota(local.begin(), local.end(), 0);
    std::vector<int> sharded(num_sharded);
    std::iota(sharded.begin(), sharded.end(), num_qubits - num_sharded);
    std::vector<int> sizes(local.size(), 1);
    return QubitLayout(std::move(local), std::move(sizes), std::move(sharded));
}

int QubitLayout::num_single_dims() const {
    return static_cast<int>(std::count(group_sizes_.begin(), group_sizes_.end(), 1));
}

std::vector<std::vector<int>> QubitLayout::groups() const {
    std::vector<std::vector<int>> out;
    auto it = local_order_.begin();
    for (int size : group_sizes_) {
        out.emplace_back(it, it + size);
        it += size;
    }
    return out;
}

int QubitLayout::shard_slot(int qubit) const {
    auto it = std::find(sharded_.begin(), sharded_.end(), qubit);
    return it == sharded_.end() ? -1 : static_cast<int>(it - sharded_.begin());
}

int QubitLayout::local_position(int qubit) const {
    auto it = std::find(local_order_.begin(), local_order_.end(), qubit);
    return it == local_order_.end() ? -1 : static_cast<int>(it - local_order_.begin());
}

int QubitLayout::dim_of(int qubit) const {
    int pos = local_position(qubit);
    if (pos < 0)
        return -1;
    int start = 0;
    for (int dim = 0; dim < num_local_dims(); ++dim) {
        start += group_sizes_[dim];
        if (pos < start)
            return dim;
    }
    return -1;
}

bool QubitLayout::is_single(int qubit) const {
    int dim = dim_of(qubit);
    return dim >= 0 && group_sizes_[dim] == 1;
}

QubitLayout QubitLayout::split(std::span<const int> qubits) const {
    std::vector<int> sizes;
    sizes.reserve(local_order_.size());
    int start = 0;
    for (int size : group_sizes_) {
        bool hit = false;
        for (int k = start; k < start + size; ++k)
            hit = hit || std::find(qubits.begin(), qubits.end(), local_order_[k]) != qubits.end();
        if (hit && size > 1)
            sizes.insert(sizes.end(), size, 1);
        else
            sizes.push_back(size);
        start += size;
    }
    return with_group_sizes(std::move(sizes));
}

QubitLayout QubitLayout::split_all() const {
    return with_group_sizes(std::vector<int>(local_order_.size(), 1));
}

QubitLayout QubitLayout::with_group_sizes(std::vector<int> group_sizes) const {
    return QubitLayout(local_order_, std::move(group_sizes), sharded_);
}

QubitLayout QubitLayout::moved_front(std::span<const int> wires) const {
    check_distinct(wires);
    for (int w : wires) {
        if (w < 0 || w >= num_qubits())
            throw LayoutError("wire " + std::to_string(w) + " out of range");
        if (is_sharded(w))
            throw LayoutError("wire " + std::to_string(w) + " is sharded; exchange it to a local dim first");
    }
    const QubitLayout unsplit = split(wires);
    const auto dims = unsplit.groups();

    std::vector<int> order(wires.begin(), wires.end());
    std::vector<int> sizes(wires.size(), 1);
    for (const auto &group : dims) {
        if (group.size() == 1 && std::find(wires.begin(), wires.end(), group[0]) != wires.end())
            continue;
        order.insert(order.end(), group.begin(), group.end());
        sizes.push_back(static_cast<int>(group.size()));
    }
    return QubitLayout(std::move(order), std::move(sizes), sharded_);
}

QubitLayout QubitLayout::exchanged(int sharded_qubit, int local_qubit) const {
    const int slot = shard_slot(sharded_qubit);
    if (slot < 0)
        throw LayoutError("qubit " + std::to_string(sharded_qubit) + " is not sharded");
    if (!is_single(local_qubit))
        throw LayoutError("qubit " + std::to_string(local_qubit) + " is not a local ungrouped qubit");
    QubitLayout out = *this;
    out.sharded_[slot] = local_qubit;
    out.local_order_[local_position(local_qubit)] = sharded_qubit;
    return out;
}

QubitLayout QubitLayout::regrouped(int rank_cap) const {
    const int min_rank = 2 + num_sharded() + std::min(num_local_qubits(), 3);
    if (rank_cap < min_rank)
        throw LayoutError("rank cap " + std::to_string(rank_cap) + " below minimum feasible rank " +
                          std::to_string(min_rank));

    std::vector<int> sizes = group_sizes_;
    // Guarantee two single-qubit dims by splitting groups from the left.
    auto singles = [&] { return std::count(sizes.begin(), sizes.end(), 1); };
    while (singles() < 2) {
        auto it = std::find_if(sizes.begin(), sizes.end(), [](int s) { return s > 1; });
        const int n = *it;
        it = sizes.erase(it);
        sizes.insert(it, n, 1);
    }

    const int fixed_rank = 2 + num_sharded();
    bool fallback = false;
    while (fixed_rank + static_cast<int>(sizes.size()) > rank_cap) {
        // The two leftmost single dims are never merged.
        std::vector<bool> protect(sizes.size(), false);
        int seen = 0;
        for (std::size_t d = 0; d < sizes.size() && seen < 2; ++d)
            if (sizes[d] == 1) {
                protect[d] = true;
                ++seen;
            }
        int best = -1;
        int best_size = 0;
        for (int d = static_cast<int>(sizes.size()) - 2; d >= 0; --d) {
            if (protect[d] || protect[d + 1])
                continue;
            const int combined = sizes[d] + sizes[d + 1];
            if (best < 0 || combined < best_size) {
                best = d;
                best_size = combined;
            }
        }
        if (best < 0) {
            if (fallback)
                throw LayoutError("regroup cannot reach rank cap " + std::to_string(rank_cap));
            sizes.assign(local_order_.size(), 1);
            fallback = true;
            continue;
        }
        sizes[best] = best_size;
        sizes.erase(sizes.begin() + best + 1);
    }
    return with_group_sizes(std::move(sizes));
}

void QubitLayout::validate(int rank_cap) const {
    std::vector<int> all = local_order_;
    all.insert(all.end(), sharded_.begin(), sharded_.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < static_cast<int>(all.size()); ++i)
        if (all[i] != i)
            throw LayoutError("layout is not a permutation of the qubits: " + to_string());
    if (std::accumulate(group_sizes_.begin(), group_sizes_.end(), 0) != num_local_qubits())
        throw LayoutError("group sizes do not cover the local qubits: " + to_string());
    if (std::any_of(group_sizes_.begin(), group_sizes_.end(), [](int s) { return s < 1; }))
        throw LayoutError("empty group: " + to_string());
    if (num_single_dims() < 2)
        throw LayoutError("fewer than two ungrouped local qubits: " + to_string());
    if (tensor_rank() > rank_cap)
        throw LayoutError("tensor rank " + std::to_string(tensor_rank()) + " exceeds cap " +
                          std::to_string(rank_cap) + ": " + to_string());
}

std::string QubitLayout::to_string() const {
    std::ostringstream os;
    os << "[";
    bool first = true;
    for (const auto &group : groups()) {
        os << (first ? "" : " ") << "(";
        for (std::size_t k = 0; k < group.size(); ++k)
            os << (k ? "," : "") << group[k];
        os << ")";
        first = false;
    }
    os << " | sharded";
    for (int q : sharded_)
        os << " " << q;
    os << "]";
    return os.str();
}

int min_tensor_rank(int num_qubits, int world_size) {
    const int sharded = log2_exact(world_size);
    return 2 + sharded + std::min(num_qubits - sharded, 3);
}

} // namespace qshard
