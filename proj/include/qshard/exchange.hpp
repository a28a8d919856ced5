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
 * @file exchange.hpp
 * Shard/local qubit exchanges and the layout moves built on them.
 */
#pragma once

#include <algorithm>
#include <array>
#include <span>

#include "qshard/comm.hpp"
#include "qshard/state_vector.hpp"

namespace qshard {

namespace detail {

/// Visit the contiguous runs of local indices whose bit `sig` equals `value`.
template <typename Fn> void for_each_half_run(Index local_size, int sig, int value, Fn &&fn) {
    const Index run = Index{1} << sig;
    for (Index hi = 0; hi < (local_size >> (sig + 1)); ++hi)
        fn(((hi << 1) | value) << sig, run);
}

} // namespace detail

/**
 * @brief Swap the roles of a sharded qubit and a local ungrouped qubit.
 *
 * One all-to-all over the two-rank subgrid spanned by the shard slot: the
 * half of the local buffer whose local-qubit bit differs from this rank's
 * shard bit goes to the partner rank, and the partner's matching half
 * comes back into the same positions.
 */
template <typename Scalar>
void exchange_sharded(StateVector<Scalar> &state, int sharded_qubit, int local_qubit, Communicator &comm) {
    const QubitLayout next = state.layout().exchanged(sharded_qubit, local_qubit);
    const int s = state.layout().num_sharded();
    const int n = state.layout().num_local_qubits();
    const int rank_sig = s - 1 - state.layout().shard_slot(sharded_qubit);
    const int own_bit = (comm.rank() >> rank_sig) & 1;
    const int partner = comm.rank() ^ (1 << rank_sig);
    const int local_sig = n - 1 - state.layout().local_position(local_qubit);
    const Index local = state.local_size();
    const std::size_t half_bytes = sizeof(Scalar) * state.batch_size() * local; // L/2 complex per batch

    auto pack = [&](int bit) {
        Bytes block(half_bytes);
        auto *out = reinterpret_cast<Scalar *>(block.data());
        for (int b = 0; b < state.batch_size(); ++b) {
            const Scalar *src = state.batch_data(b);
            detail::for_each_half_run(local, local_sig, bit, [&](Index start, Index run) {
                std::memcpy(out, src + 2 * start, sizeof(Scalar) * 2 * run);
                out += 2 * run;
            });
        }
        return block;
    };
    auto unpack = [&](const Bytes &block, int bit) {
        if (block.size() != half_bytes)
            throw CommError("exchange_sharded: unexpected block size from partner");
        const auto *in = reinterpret_cast<const Scalar *>(block.data());
        for (int b = 0; b < state.batch_size(); ++b) {
            Scalar *dst = state.batch_data(b);
            detail::for_each_half_run(local, local_sig, bit, [&](Index start, Index run) {
                std::memcpy(dst + 2 * start, in, sizeof(Scalar) * 2 * run);
                in += 2 * run;
            });
        }
    };

    std::vector<Bytes> blocks(comm.world());
    blocks[comm.rank()] = pack(own_bit);
    blocks[partner] = pack(1 - own_bit);
    auto received = comm.all_to_all(std::move(blocks));
    unpack(received[comm.rank()], own_bit);
    unpack(received[partner], 1 - own_bit);
    state.relabel(next);
}

/**
 * @brief Bring `wires` to the leading local dims, de-sharding as needed.
 *
 * Each sharded wire is exchanged with the lowest-numbered local ungrouped
 * qubit that is not itself a wire.
 */
template <typename Scalar>
void prepare_wires(StateVector<Scalar> &state, std::span<const int> wires, Communicator &comm) {
    const int q = state.num_qubits();
    for (std::size_t i = 0; i < wires.size(); ++i) {
        if (wires[i] < 0 || wires[i] >= q)
            throw LayoutError("wire " + std::to_string(wires[i]) + " out of range for " +
                              std::to_string(q) + " qubits");
        for (std::size_t j = 0; j < i; ++j)
            if (wires[i] == wires[j])
                throw LayoutError("duplicate wire " + std::to_string(wires[i]));
    }
    state.reshape(state.layout().split(wires));
    for (int w : wires) {
        if (!state.layout().is_sharded(w))
            continue;
        auto pick = [&]() -> int {
            int best = -1;
            for (int qubit : state.layout().local_order())
                if (state.layout().is_single(qubit) &&
                    std::find(wires.begin(), wires.end(), qubit) == wires.end() && (best < 0 || qubit < best))
                    best = qubit;
            return best;
        };
        int partner = pick();
        if (partner < 0) {
            state.reshape(state.layout().split_all());
            partner = pick();
        }
        if (partner < 0)
            throw LayoutError("no local qubit available to de-shard wire " + std::to_string(w));
        exchange_sharded(state, w, partner, comm);
    }
    move_dims_front(state, wires);
}

/// Move to an arbitrary layout over the same qubits (exchanges, then a local permutation).
template <typename Scalar>
void relayout(StateVector<Scalar> &state, const QubitLayout &target, Communicator &comm) {
    if (state.layout() == target)
        return;
    if (target.num_sharded() != state.layout().num_sharded() ||
        target.num_qubits() != state.layout().num_qubits())
        throw LayoutError("relayout target has a different shape: " + target.to_string());
    for (int slot = 0; slot < target.num_sharded(); ++slot) {
        const int want = target.sharded()[slot];
        if (state.layout().sharded()[slot] == want)
            continue;
        if (state.layout().is_sharded(want)) {
            // Park it on a local qubit that the target wants local.
            int parking = -1;
            for (int qubit : state.layout().local_order())
                if (!target.is_sharded(qubit)) {
                    parking = qubit;
                    break;
                }
            if (parking < 0)
                throw LayoutError("relayout: no local qubit free to park qubit " + std::to_string(want));
            const std::array<int, 1> one{parking};
            state.reshape(state.layout().split(one));
            exchange_sharded(state, want, parking, comm);
        }
        const std::array<int, 1> one{want};
        state.reshape(state.layout().split(one));
        exchange_sharded(state, state.layout().sharded()[slot], want, comm);
    }
    permute_local(state, target);
}

} // namespace qshard
