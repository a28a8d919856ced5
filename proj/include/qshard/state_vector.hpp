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
 * @file state_vector.hpp
 * Sharded, batched statevector storage and the gate contraction kernel.
 *
 * Amplitudes are stored interleaved (re, im) with the trailing component
 * axis of size 2. Complex products are expanded into four real
 * contractions over that axis.
 *
 * Basis convention: qubit 0 is the most significant bit of the canonical
 * dense index.
 */
#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "qshard/comm.hpp"
#include "qshard/common.hpp"
#include "qshard/layout.hpp"
#include "qshard/memory.hpp"

namespace qshard {

/// Bit permutation of an index, evaluated with one lookup table per byte.
class IndexPermutation {
  public:
    IndexPermutation() = default;

    /// dest_bit[s] is where source bit `s` (significance) lands.
    explicit IndexPermutation(const std::vector<int> &dest_bit) {
        const int bits = static_cast<int>(dest_bit.size());
        const int chunks = (bits + 7) / 8;
        tables_.assign(chunks, std::vector<Index>(256, 0));
        for (int c = 0; c < chunks; ++c)
            for (int v = 0; v < 256; ++v) {
                Index out = 0;
                for (int k = 0; k < 8 && 8 * c + k < bits; ++k)
                    if (v & (1 << k))
                        out |= Index{1} << dest_bit[8 * c + k];
                tables_[c][v] = out;
            }
    }

    Index operator()(Index x) const {
        Index out = 0;
        for (std::size_t c = 0; c < tables_.size(); ++c)
            out |= tables_[c][(x >> (8 * c)) & 255];
        return out;
    }

  private:
    std::vector<std::vector<Index>> tables_;
};

/**
 * Physical index = (rank << num_local_qubits) | local index.
 * Maps physical -> canonical (qubit 0 as MSB).
 */
inline IndexPermutation physical_to_canonical(const QubitLayout &layout) {
    const int q = layout.num_qubits();
    const int n = layout.num_local_qubits();
    const int s = layout.num_sharded();
    std::vector<int> dest(q);
    for (int i = 0; i < n; ++i)
        dest[n - 1 - i] = q - 1 - layout.local_order()[i];
    for (int j = 0; j < s; ++j)
        dest[n + s - 1 - j] = q - 1 - layout.sharded()[j];
    return IndexPermutation(dest);
}

inline IndexPermutation canonical_to_physical(const QubitLayout &layout) {
    const int q = layout.num_qubits();
    const int n = layout.num_local_qubits();
    const int s = layout.num_sharded();
    std::vector<int> dest(q);
    for (int i = 0; i < n; ++i)
        dest[q - 1 - layout.local_order()[i]] = n - 1 - i;
    for (int j = 0; j < s; ++j)
        dest[q - 1 - layout.sharded()[j]] = n + s - 1 - j;
    return IndexPermutation(dest);
}

template <typename Scalar> class StateVector {
  public:
    StateVector() = default;

    StateVector(int batch, QubitLayout layout, int rank, std::shared_ptr<MemoryTracker> tracker)
        : batch_(batch), rank_(rank), layout_(std::move(layout)),
          data_(static_cast<std::size_t>(batch) * (std::size_t{2} << layout_.num_local_qubits()),
                std::move(tracker)) {}

    int num_qubits() const { return layout_.num_qubits(); }
    int batch_size() const { return batch_; }
    int rank() const { return rank_; }
    int world() const { return 1 << layout_.num_sharded(); }
    const QubitLayout &layout() const { return layout_; }

    /// Complex amplitudes per batch element held by this rank.
    Index local_size() const { return Index{1} << layout_.num_local_qubits(); }

    Scalar *data() { return data_.data(); }
    const Scalar *data() const { return data_.data(); }
    std::size_t data_size() const { return data_.size(); }

    Scalar *batch_data(int b) { return data_.data() + 2 * b * local_size(); }
    const Scalar *batch_data(int b) const { return data_.data() + 2 * b * local_size(); }

    const std::shared_ptr<MemoryTracker> &tracker() const { return data_.tracker(); }

    /// Local tensor shape [batch, dims..., 2].
    std::vector<Index> shape() const {
        std::vector<Index> out{batch_};
        for (int size : layout_.group_sizes())
            out.push_back(Index{1} << size);
        out.push_back(2);
        return out;
    }

    /// Layout change that keeps the memory order (merge/split of adjacent dims).
    void reshape(QubitLayout layout) {
        if (layout.local_order() != layout_.local_order() || layout.sharded() != layout_.sharded())
            throw LayoutError("reshape must keep qubit order and sharding");
        layout_ = std::move(layout);
    }

    /// Install data that is already arranged according to `layout`.
    void assign(QubitLayout layout, AmplitudeBuffer<Scalar> data) {
        if (data.size() != data_.size())
            throw LayoutError("replacement buffer has the wrong size");
        layout_ = std::move(layout);
        data_ = std::move(data);
    }

    /// Adopt a new layout for data the caller has already rearranged in place.
    void relabel(QubitLayout layout) {
        if (layout.num_local_qubits() != layout_.num_local_qubits() ||
            layout.num_sharded() != layout_.num_sharded())
            throw LayoutError("relabel must keep the local/sharded split");
        layout_ = std::move(layout);
    }

    /// A zero-filled buffer with the same size and tracker, e.g. for gradients.
    StateVector zeros_like() const {
        return StateVector(batch_, layout_, rank_, data_.tracker());
    }

  private:
    int batch_ = 0;
    int rank_ = 0;
    QubitLayout layout_;
    AmplitudeBuffer<Scalar> data_;
};

/// All batch elements start in |0...0>.
template <typename Scalar>
StateVector<Scalar> init_state(int num_qubits, int batch, const Communicator &comm,
                               int rank_cap = kDefaultRankCap) {
    if (batch < 1)
        throw LayoutError("batch size must be positive");
    QubitLayout layout = QubitLayout::initial(num_qubits, comm.world()).regrouped(rank_cap);
    layout.validate(rank_cap);
    StateVector<Scalar> state(batch, std::move(layout), comm.rank(), comm.memory());
    if (comm.rank() == 0)
        for (int b = 0; b < batch; ++b)
            state.batch_data(b)[0] = Scalar{1};
    return state;
}

/**
 * @brief Reorder the local qubits to `target.local_order()`.
 *
 * This is the only kernel that moves amplitudes between local positions.
 * The largest common tail of the two orders is copied as contiguous runs.
 */
template <typename Scalar> void permute_local(StateVector<Scalar> &state, const QubitLayout &target) {
    const QubitLayout &from = state.layout();
    if (target.sharded() != from.sharded())
        throw LayoutError("local permutation cannot change sharding");
    if (from.local_order() == target.local_order()) {
        state.reshape(target);
        return;
    }
    const int n = from.num_local_qubits();
    std::vector<int> src_pos(from.num_qubits(), -1);
    for (int i = 0; i < n; ++i)
        src_pos[from.local_order()[i]] = i;

    int tail = 0;
    while (tail < n && target.local_order()[n - 1 - tail] == from.local_order()[n - 1 - tail])
        ++tail;
    const int outer = n - tail;
    const Index run = Index{2} << tail; // scalars per contiguous run

    // Source offset (in scalars) for each outer bit of the destination index.
    std::vector<Index> stride(outer);
    for (int k = 0; k < outer; ++k) {
        const int dest_sig = tail + k;
        const int qubit = target.local_order()[n - 1 - dest_sig];
        const int src_sig = n - 1 - src_pos[qubit];
        stride[k] = Index{2} << src_sig;
    }
    const int lo_bits = outer / 2;
    const int hi_bits = outer - lo_bits;
    std::vector<Index> lo(Index{1} << lo_bits, 0), hi(Index{1} << hi_bits, 0);
    for (Index v = 1; v < static_cast<Index>(lo.size()); ++v)
        lo[v] = lo[v & (v - 1)] + stride[std::countr_zero(static_cast<std::uint64_t>(v))];
    for (Index v = 1; v < static_cast<Index>(hi.size()); ++v)
        hi[v] = hi[v & (v - 1)] + stride[lo_bits + std::countr_zero(static_cast<std::uint64_t>(v))];

    AmplitudeBuffer<Scalar> out(state.data_size(), state.tracker());
    const Index per_batch = 2 * state.local_size();
    const Index lo_mask = (Index{1} << lo_bits) - 1;
    for (int b = 0; b < state.batch_size(); ++b) {
        const Scalar *src = state.batch_data(b);
        Scalar *dst = out.data() + b * per_batch;
        for (Index o = 0; o < (Index{1} << outer); ++o) {
            const Index offset = lo[o & lo_mask] + hi[o >> lo_bits];
            std::memcpy(dst + o * run, src + offset, sizeof(Scalar) * run);
        }
    }
    state.assign(target, std::move(out));
}

/// MoveDim with the J = [Q, I \ Q] bookkeeping; amplitudes are only relabelled.
template <typename Scalar> void move_dims_front(StateVector<Scalar> &state, std::span<const int> wires) {
    permute_local(state, state.layout().moved_front(wires));
}

/// Merge adjacent local dims until the tensor rank fits under the cap.
template <typename Scalar> void regroup(StateVector<Scalar> &state, int rank_cap = kDefaultRankCap) {
    state.reshape(state.layout().regrouped(rank_cap));
}

namespace detail {

template <typename Scalar>
using StridedMap = Eigen::Map<RowMatrix<Scalar>, Eigen::Unaligned, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

inline constexpr Index kColumnChunk = 2048;

template <typename Scalar> struct SplitMatrix {
    RowMatrix<Scalar> re;
    RowMatrix<Scalar> im;

    SplitMatrix() = default;
    explicit SplitMatrix(const GateMatrix &m)
        : re(m.real().template cast<Scalar>()), im(m.imag().template cast<Scalar>()) {}
};

/// block <- M block, block being `rows` x `cols` complex values with row stride `cols`.
template <typename Scalar>
void contract_block(Scalar *base, Index rows, Index cols, const SplitMatrix<Scalar> &m) {
    const Index chunk = std::min(cols, kColumnChunk);
    RowMatrix<Scalar> yr(rows, chunk), yi(rows, chunk);
    for (Index c0 = 0; c0 < cols; c0 += chunk) {
        const Index n = std::min(chunk, cols - c0);
        const Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic> stride(2 * cols, 2);
        StridedMap<Scalar> xr(base + 2 * c0, rows, n, stride);
        StridedMap<Scalar> xi(base + 2 * c0 + 1, rows, n, stride);
        yr.leftCols(n) = m.re.lazyProduct(xr) - m.im.lazyProduct(xi);
        yi.leftCols(n) = m.re.lazyProduct(xi) + m.im.lazyProduct(xr);
        xr = yr.leftCols(n);
        xi = yi.leftCols(n);
    }
}

/// Re sum(conj(g) . (M x)) over one block, i.e. the real inner product of the split arrays.
template <typename Scalar>
double contract_dot(const Scalar *x, const Scalar *g, Index rows, Index cols, const SplitMatrix<Scalar> &m) {
    const Index chunk = std::min(cols, kColumnChunk);
    RowMatrix<Scalar> yr(rows, chunk), yi(rows, chunk);
    double acc = 0.0;
    for (Index c0 = 0; c0 < cols; c0 += chunk) {
        const Index n = std::min(chunk, cols - c0);
        const Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic> stride(2 * cols, 2);
        using ConstMap = Eigen::Map<const RowMatrix<Scalar>, Eigen::Unaligned,
                                    Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
        ConstMap xr(x + 2 * c0, rows, n, stride), xi(x + 2 * c0 + 1, rows, n, stride);
        ConstMap gr(g + 2 * c0, rows, n, stride), gi(g + 2 * c0 + 1, rows, n, stride);
        yr.leftCols(n) = m.re.lazyProduct(xr) - m.im.lazyProduct(xi);
        yi.leftCols(n) = m.re.lazyProduct(xi) + m.im.lazyProduct(xr);
        acc += static_cast<double>(yr.leftCols(n).cwiseProduct(gr).sum()) +
               static_cast<double>(yi.leftCols(n).cwiseProduct(gi).sum());
    }
    return acc;
}

inline void check_front(const QubitLayout &layout, std::span<const int> wires) {
    if (static_cast<int>(wires.size()) > layout.num_local_dims())
        throw LayoutError("more wires than local dims");
    for (std::size_t k = 0; k < wires.size(); ++k)
        if (layout.group_sizes()[k] != 1 || layout.local_order()[k] != wires[k])
            throw LayoutError("gate wires are not at the front; call move_dims_front first (layout " +
                              layout.to_string() + ")");
}

} // namespace detail

/**
 * @brief Y <- mm(M, X) with the wires already moved to the leading dims.
 *
 * `matrices` holds either one matrix shared by the batch or one per batch
 * element.
 */
template <typename Scalar>
void apply_matrix(StateVector<Scalar> &state, std::span<const int> wires,
                  std::span<const GateMatrix> matrices) {
    const Index dim = Index{1} << wires.size();
    for (const auto &m : matrices)
        if (m.rows() != dim || m.cols() != dim)
            throw GateError("matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            " but " + std::to_string(wires.size()) + " wires need " +
                            std::to_string(dim) + "x" + std::to_string(dim));
    if (matrices.size() != 1 && static_cast<int>(matrices.size()) != state.batch_size())
        throw GateError("expected 1 or batch-many matrices");
    detail::check_front(state.layout(), wires);

    const Index cols = state.local_size() / dim;
    detail::SplitMatrix<Scalar> shared;
    if (matrices.size() == 1)
        shared = detail::SplitMatrix<Scalar>(matrices[0]);
    for (int b = 0; b < state.batch_size(); ++b) {
        if (matrices.size() == 1) {
            detail::contract_block(state.batch_data(b), dim, cols, shared);
        } else {
            detail::contract_block(state.batch_data(b), dim, cols, detail::SplitMatrix<Scalar>(matrices[b]));
        }
    }
}

template <typename Scalar>
void apply_matrix(StateVector<Scalar> &state, std::span<const int> wires, const GateMatrix &matrix) {
    apply_matrix(state, wires, std::span<const GateMatrix>(&matrix, 1));
}

/// Full dense amplitudes in canonical order on every rank (collective).
template <typename Scalar> DenseStates<Scalar> to_dense(const StateVector<Scalar> &state, Communicator &comm) {
    const auto all = all_gather_vec<Scalar>(comm, std::span<const Scalar>(state.data(), state.data_size()));
    const int n = state.layout().num_local_qubits();
    const Index local = state.local_size();
    const auto to_canonical = physical_to_canonical(state.layout());
    DenseStates<Scalar> dense(state.batch_size(), Index{1} << state.num_qubits());
    const std::size_t per_rank = state.data_size();
    for (int r = 0; r < comm.world(); ++r)
        for (int b = 0; b < state.batch_size(); ++b) {
            const Scalar *src = all.data() + r * per_rank + 2 * b * local;
            for (Index l = 0; l < local; ++l)
                dense(b, to_canonical((Index{r} << n) | l)) = {src[2 * l], src[2 * l + 1]};
        }
    return dense;
}

/// Debug dump: "SVEC", u32 q, u32 batch, then little-endian float64 (re, im) pairs.
template <typename Scalar>
void write_dense_dump(std::ostream &os, const DenseStates<Scalar> &dense, int num_qubits) {
    static_assert(std::endian::native == std::endian::little, "dump writer assumes a little-endian host");
    // magic, q, batch, reserved: 16 bytes
    const std::uint32_t header[3] = {static_cast<std::uint32_t>(num_qubits),
                                     static_cast<std::uint32_t>(dense.rows()), 0};
    os.write("SVEC", 4);
    os.write(reinterpret_cast<const char *>(header), sizeof header);
    for (Index b = 0; b < dense.rows(); ++b)
        for (Index i = 0; i < dense.cols(); ++i) {
            const double pair[2] = {static_cast<double>(dense(b, i).real()),
                                    static_cast<double>(dense(b, i).imag())};
            os.write(reinterpret_cast<const char *>(pair), sizeof pair);
        }
}

inline DenseStates<double> read_dense_dump(std::istream &is, int *num_qubits = nullptr) {
    char magic[4];
    std::uint32_t header[3];
    if (!is.read(magic, 4) || std::memcmp(magic, "SVEC", 4) != 0)
        throw Error("not a statevector dump (bad magic)");
    if (!is.read(reinterpret_cast<char *>(header), sizeof header))
        throw Error("truncated statevector dump header");
    if (num_qubits)
        *num_qubits = static_cast<int>(header[0]);
    DenseStates<double> dense(header[1], Index{1} << header[0]);
    for (Index b = 0; b < dense.rows(); ++b)
        for (Index i = 0; i < dense.cols(); ++i) {
            double pair[2];
            if (!is.read(reinterpret_cast<char *>(pair), sizeof pair))
                throw Error("truncated statevector dump body");
            dense(b, i) = {pair[0], pair[1]};
        }
    return dense;
}

} // namespace qshard
