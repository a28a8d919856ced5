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
#include "qshard/sampling.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace qshard {

namespace {

constexpr std::uint64_t kExactTag = 1;
constexpr std::uint64_t kNoiseTag = 2;
constexpr Index kNoiseBlock = 1024;

/// Send column i of `values` to dest(i) = (rank, column); the receiver stores it there.
template <typename Dest>
RowMatrix<double> route(const RowMatrix<double> &values, Communicator &comm, Dest &&dest) {
    const Index rows = values.rows(), cols = values.cols();
    const std::size_t entry = sizeof(std::uint32_t) + rows * sizeof(double);
    std::vector<std::size_t> fill(comm.world(), 0);
    for (Index i = 0; i < cols; ++i)
        ++fill[dest(i).first];
    std::vector<Bytes> blocks(comm.world());
    for (int r = 0; r < comm.world(); ++r) {
        blocks[r].resize(fill[r] * entry);
        fill[r] = 0;
    }
    std::vector<double> column(rows);
    for (Index i = 0; i < cols; ++i) {
        const auto [rank, offset] = dest(i);
        std::byte *out = blocks[rank].data() + fill[rank];
        const auto off32 = static_cast<std::uint32_t>(offset);
        std::memcpy(out, &off32, sizeof off32);
        for (Index b = 0; b < rows; ++b)
            column[b] = values(b, i);
        std::memcpy(out + sizeof off32, column.data(), rows * sizeof(double));
        fill[rank] += entry;
    }
    const auto received = comm.all_to_all(std::move(blocks));
    RowMatrix<double> out = RowMatrix<double>::Zero(rows, cols);
    for (const auto &block : received)
        for (std::size_t pos = 0; pos + entry <= block.size(); pos += entry) {
            std::uint32_t offset;
            std::memcpy(&offset, block.data() + pos, sizeof offset);
            std::memcpy(column.data(), block.data() + pos + sizeof offset, rows * sizeof(double));
            for (Index b = 0; b < rows; ++b)
                out(b, offset) = column[b];
        }
    return out;
}

Index split_count(Index count, double left, double right, std::uint64_t seed, int batch, Index node) {
    if (!(right > 0.0))
        return count;
    if (!(left > 0.0))
        return 0;
    std::mt19937_64 rng(derive_seed(seed, {kExactTag, static_cast<std::uint64_t>(batch), static_cast<std::uint64_t>(node)}));
    std::binomial_distribution<Index> draw(count, std::min(1.0, left / (left + right)));
    return draw(rng);
}

std::vector<double> sum_tree(std::span<const double> leaves) {
    const std::size_t n = leaves.size();
    std::vector<double> tree(2 * n);
    std::copy(leaves.begin(), leaves.end(), tree.begin() + n);
    for (std::size_t h = n - 1; h >= 1; --h)
        tree[h] = tree[2 * h] + tree[2 * h + 1];
    return tree;
}

using Reduce = std::function<void(std::span<double>)>;

/**
 * w = z - (2/t) vt (vt . z), vt = e_last - u, t = vt . vt; w = z when t < 1e-24.
 * Columns are one rank's slice; `owns_last` marks the slice holding e_last.
 */
RowMatrix<double> reflect_noise(const RowMatrix<double> &u, const RowMatrix<double> &z,
                                const std::vector<double> &u_last, bool owns_last, std::vector<double> &s,
                                std::vector<double> &t, const Reduce &reduce) {
    const Index rows = u.rows(), cols = u.cols();
    std::vector<double> sums(2 * rows, 0.0);
    for (Index b = 0; b < rows; ++b) {
        sums[b] = -(u.row(b).cwiseProduct(z.row(b))).sum();
        sums[rows + b] = u.row(b).squaredNorm();
    }
    reduce(sums);
    s.assign(sums.begin(), sums.begin() + rows);
    t.resize(rows);
    for (Index b = 0; b < rows; ++b)
        t[b] = sums[rows + b] - 2.0 * u_last[b] + 1.0;
    RowMatrix<double> w = z;
    for (Index b = 0; b < rows; ++b) {
        if (t[b] < 1e-24)
            continue;
        const double k = 2.0 / t[b] * s[b];
        for (Index c = 0; c < cols; ++c) {
            const double vt = (owns_last && c == cols - 1 ? 1.0 : 0.0) - u(b, c);
            w(b, c) -= k * vt;
        }
    }
    return w;
}

/// dL/dp of f = p + scale * u (.) w(u, z), given a = dL/df.
RowMatrix<double> reflect_noise_backward(const RowMatrix<double> &u, const RowMatrix<double> &z,
                                         const RowMatrix<double> &a, double scale, bool owns_last,
                                         const std::vector<double> &s, const std::vector<double> &t,
                                         const Reduce &reduce) {
    const Index rows = u.rows(), cols = u.cols();
    auto vt = [&](Index b, Index c) { return (owns_last && c == cols - 1 ? 1.0 : 0.0) - u(b, c); };
    std::vector<double> av(rows, 0.0);
    for (Index b = 0; b < rows; ++b)
        for (Index c = 0; c < cols; ++c)
            av[b] += scale * a(b, c) * u(b, c) * vt(b, c);
    reduce(av);
    RowMatrix<double> dp = a;
    for (Index b = 0; b < rows; ++b) {
        const bool degenerate = t[b] < 1e-24;
        for (Index c = 0; c < cols; ++c) {
            double du;
            if (degenerate) {
                du = scale * a(b, c) * z(b, c);
            } else {
                const double abar = scale * a(b, c) * u(b, c);
                const double w = z(b, c) - 2.0 / t[b] * vt(b, c) * s[b];
                const double dv = -2.0 / t[b] * (s[b] * abar + av[b] * z(b, c) - 2.0 * s[b] * av[b] / t[b] * vt(b, c));
                du = scale * a(b, c) * w - dv;
            }
            if (u(b, c) > 0.0)
                dp(b, c) += du / (2.0 * u(b, c));
        }
    }
    return dp;
}

void no_reduce(std::span<double>) {}

Reduce comm_reduce(Communicator &comm) {
    return [&comm](std::span<double> values) { all_reduce_sum<double>(comm, values); };
}

RowMatrix<double> shard_noise(const ProbShard &shard, std::uint64_t seed) {
    const Index L = shard.local_size();
    const Index first = shard.offset();
    const Index total = Index{1} << shard.num_qubits;
    RowMatrix<double> z(shard.batch_size(), L);
    std::vector<double> block(kNoiseBlock);
    for (int b = 0; b < shard.batch_size(); ++b)
        for (Index start = first - first % kNoiseBlock; start < first + L; start += kNoiseBlock) {
            std::mt19937_64 rng(derive_seed(seed, {kNoiseTag, static_cast<std::uint64_t>(b),
                                                   static_cast<std::uint64_t>(start / kNoiseBlock)}));
            std::normal_distribution<double> normal;
            for (auto &x : block)
                x = normal(rng);
            for (Index c = std::max(start, first); c < std::min(start + kNoiseBlock, first + L); ++c)
                z(b, c - first) = c == total - 1 ? 0.0 : block[c - start];
        }
    return z;
}

/// +1 where qubit i reads 0 in canonical index c, else -1.
RowMatrix<double> expand_signs(const RowMatrix<double> &d_expect, int num_qubits, Index offset, Index L) {
    RowMatrix<double> a(d_expect.rows(), L);
    for (Index b = 0; b < a.rows(); ++b)
        for (Index l = 0; l < L; ++l) {
            const Index c = offset + l;
            double acc = 0.0;
            for (int i = 0; i < num_qubits; ++i)
                acc += ((c >> (num_qubits - 1 - i)) & 1) ? -d_expect(b, i) : d_expect(b, i);
            a(b, l) = acc;
        }
    return a;
}

void write_number(std::ostream &os, double value) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    os.write(buf, res.ptr - buf);
}

} // namespace

RowMatrix<double> layout_to_shard(const RowMatrix<double> &values, const QubitLayout &layout, Communicator &comm) {
    const int n = layout.num_local_qubits();
    const Index mask = (Index{1} << n) - 1;
    const auto to_canonical = physical_to_canonical(layout);
    const Index base = Index{comm.rank()} << n;
    if (comm.world() == 1) {
        RowMatrix<double> out(values.rows(), values.cols());
        for (Index l = 0; l < values.cols(); ++l)
            out.col(to_canonical(l)) = values.col(l);
        return out;
    }
    return route(values, comm, [&](Index l) {
        const Index c = to_canonical(base | l);
        return std::pair<int, Index>(static_cast<int>(c >> n), c & mask);
    });
}

RowMatrix<double> shard_to_layout(const RowMatrix<double> &values, const QubitLayout &layout, Communicator &comm) {
    const int n = layout.num_local_qubits();
    const Index mask = (Index{1} << n) - 1;
    const auto to_physical = canonical_to_physical(layout);
    const Index base = Index{comm.rank()} << n;
    if (comm.world() == 1) {
        RowMatrix<double> out(values.rows(), values.cols());
        for (Index c = 0; c < values.cols(); ++c)
            out.col(to_physical(c)) = values.col(c);
        return out;
    }
    return route(values, comm, [&](Index c) {
        const Index p = to_physical(base | c);
        return std::pair<int, Index>(static_cast<int>(p >> n), p & mask);
    });
}

double pairwise_sum(std::span<const double> values) {
    if (values.empty())
        return 0.0;
    if (values.size() == 1)
        return values[0];
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

RowMatrix<double> group_probs(const ProbShard &shard, Communicator &comm) {
    const int B = shard.batch_size();
    std::vector<double> local(B);
    for (int b = 0; b < B; ++b)
        local[b] = pairwise_sum(std::span<const double>(shard.p.row(b).data(), shard.local_size()));
    const auto all = all_gather_vec<double>(comm, local);
    RowMatrix<double> q(B, comm.world());
    for (int j = 0; j < comm.world(); ++j)
        for (int b = 0; b < B; ++b)
            q(b, j) = all[j * B + b];
    return q;
}

double multinomial_log_pmf(std::span<const Index> x, Index n, std::span<const double> p) {
    if (x.size() != p.size())
        throw SamplingError("counts and probabilities differ in length");
    Index total = 0;
    for (Index xi : x) {
        if (xi < 0)
            throw SamplingError("negative count");
        total += xi;
    }
    if (total != n)
        throw SamplingError("counts sum to " + std::to_string(total) + ", expected n = " + std::to_string(n));
    double log_pmf = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == 0)
            continue;
        if (!(p[i] > 0.0))
            return -std::numeric_limits<double>::infinity();
        log_pmf += static_cast<double>(x[i]) * std::log(p[i]) - std::lgamma(static_cast<double>(x[i]) + 1.0);
    }
    return log_pmf;
}

double multinomial_pmf(std::span<const Index> x, Index n, std::span<const double> p) {
    return std::exp(multinomial_log_pmf(x, n, p));
}

RowMatrix<Index> sample_exact_local(const ProbShard &shard, Index n, std::uint64_t seed, Communicator &comm) {
    if (n < 1)
        throw SamplingError("exact sampling needs at least one shot, got " + std::to_string(n));
    const int world = comm.world();
    const int s = log2_exact(world);
    const Index L = shard.local_size();
    const RowMatrix<double> groups = group_probs(shard, comm);
    RowMatrix<Index> out = RowMatrix<Index>::Zero(shard.batch_size(), L);

    struct Pending {
        Index node;
        Index count;
        int depth;
    };
    std::vector<Pending> stack;
    for (int b = 0; b < shard.batch_size(); ++b) {
        const auto top = sum_tree(std::span<const double>(groups.row(b).data(), world));
        Index count = n;
        Index node = 1;
        for (int level = 0; level < s; ++level) {
            const int bit = (comm.rank() >> (s - 1 - level)) & 1;
            const Index left = split_count(count, top[2 * node], top[2 * node + 1], seed, b, node);
            count = bit ? count - left : left;
            node = 2 * node + bit;
        }
        if (count == 0)
            continue;

        const auto tree = sum_tree(std::span<const double>(shard.p.row(b).data(), L));
        const Index root = (Index{1} << s) | comm.rank();
        stack.assign(1, Pending{1, count, 0});
        while (!stack.empty()) {
            const Pending cur = stack.back();
            stack.pop_back();
            if (cur.node >= L) {
                out(b, cur.node - L) = cur.count;
                continue;
            }
            const Index global = (root << cur.depth) | (cur.node - (Index{1} << cur.depth));
            const Index left = split_count(cur.count, tree[2 * cur.node], tree[2 * cur.node + 1], seed, b, global);
            if (cur.count - left > 0)
                stack.push_back({2 * cur.node + 1, cur.count - left, cur.depth + 1});
            if (left > 0)
                stack.push_back({2 * cur.node, left, cur.depth + 1});
        }
    }
    return out;
}

ShotCounts gather_counts(const RowMatrix<Index> &local, Index n, Communicator &comm) {
    const auto all = all_gather_vec<Index>(comm, std::span<const Index>(local.data(), local.size()));
    const Index L = local.cols();
    ShotCounts out{n, true, RowMatrix<double>(local.rows(), L * comm.world())};
    for (int r = 0; r < comm.world(); ++r)
        for (Index b = 0; b < local.rows(); ++b)
            for (Index l = 0; l < L; ++l)
                out.counts(b, r * L + l) = static_cast<double>(all[(r * local.rows() + b) * L + l]);
    return out;
}

Eigen::MatrixXd GaussianFactor::S() const {
    return Eigen::MatrixXd::Identity(v.size(), v.size()) - 2.0 * v * v.transpose();
}

Eigen::VectorXd GaussianFactor::apply(const Eigen::VectorXd &z) const {
    return d.cwiseProduct(z - 2.0 * v * v.dot(z));
}

GaussianFactor gaussian_factor(const Eigen::VectorXd &p) {
    if (p.size() == 0)
        throw SamplingError("empty probability vector");
    if ((p.array() < 0.0).any())
        throw SamplingError("negative probability");
    if (std::abs(p.sum() - 1.0) > 1e-9)
        throw SamplingError("probabilities sum to " + std::to_string(p.sum()) + ", not 1");
    GaussianFactor f;
    f.d = p.cwiseSqrt();
    f.u = f.d;
    Eigen::VectorXd vt = -f.u;
    vt(vt.size() - 1) += 1.0;
    const double norm = vt.norm();
    f.v = norm < 1e-12 ? Eigen::VectorXd::Zero(p.size()) : Eigen::VectorXd(vt / norm);
    return f;
}

Eigen::VectorXd gaussian_noise(Index k, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(k);
    for (Index i = 0; i + 1 < k; ++i)
        z(i) = normal(rng);
    z(k - 1) = 0.0;
    return z;
}

Eigen::VectorXd gaussian_counts(const Eigen::VectorXd &p, Index n, const Eigen::VectorXd &z) {
    if (n < 1)
        throw SamplingError("gaussian sampling needs at least one shot");
    const RowMatrix<double> u = p.cwiseSqrt().transpose();
    std::vector<double> s, t;
    const RowMatrix<double> w = reflect_noise(u, z.transpose(), {u(0, u.cols() - 1)}, true, s, t, no_reduce);
    const double nn = static_cast<double>(n);
    return nn * p + std::sqrt(nn) * u.cwiseProduct(w).transpose();
}

Eigen::VectorXd gaussian_counts_backward(const Eigen::VectorXd &p, Index n, const Eigen::VectorXd &z,
                                         const Eigen::VectorXd &dy) {
    const RowMatrix<double> u = p.cwiseSqrt().transpose();
    std::vector<double> s, t;
    reflect_noise(u, z.transpose(), {u(0, u.cols() - 1)}, true, s, t, no_reduce);
    const double nn = static_cast<double>(n);
    const RowMatrix<double> a = nn * dy.transpose();
    return reflect_noise_backward(u, z.transpose(), a, 1.0 / std::sqrt(nn), true, s, t, no_reduce).transpose();
}

ShotCounts sample_gaussian(const Eigen::VectorXd &p, Index n, std::mt19937_64 &rng) {
    const Eigen::VectorXd z = gaussian_noise(p.size(), rng);
    return ShotCounts{n, false, gaussian_counts(p, n, z).transpose()};
}

MeasureMode parse_measure_mode(std::string_view text) {
    if (text == "analytic")
        return MeasureMode::Analytic;
    if (text == "exact")
        return MeasureMode::Exact;
    if (text == "approx")
        return MeasureMode::Approx;
    throw SamplingError("unknown measurement mode '" + std::string(text) + "' (analytic, exact, approx)");
}

std::string_view to_string(MeasureMode mode) {
    switch (mode) {
    case MeasureMode::Analytic:
        return "analytic";
    case MeasureMode::Exact:
        return "exact";
    default:
        return "approx";
    }
}

MeasureOptions resolve_measure(std::optional<MeasureMode> mode, Index shots, std::uint64_t seed) {
    if (shots < 0)
        throw SamplingError("shots must be non-negative");
    if (!mode)
        mode = shots == 0 ? MeasureMode::Analytic : MeasureMode::Exact;
    if (*mode != MeasureMode::Analytic && shots < 1)
        throw SamplingError(std::string(to_string(*mode)) + " measurement needs shots >= 1");
    return MeasureOptions{*mode, *mode == MeasureMode::Analytic ? 0 : shots, seed};
}

RowMatrix<double> allz_expectations(const RowMatrix<double> &freqs, int num_qubits, int rank, Communicator &comm) {
    const Index L = freqs.cols();
    const int n = log2_exact(L);
    const int s = num_qubits - n;
    RowMatrix<double> e = RowMatrix<double>::Zero(freqs.rows(), num_qubits);
    for (Index b = 0; b < freqs.rows(); ++b) {
        double total = 0.0;
        for (Index l = 0; l < L; ++l) {
            const double f = freqs(b, l);
            total += f;
            for (int k = 0; k < n; ++k)
                e(b, num_qubits - 1 - k) += ((l >> k) & 1) ? -f : f;
        }
        for (int i = 0; i < s; ++i)
            e(b, i) = ((rank >> (s - 1 - i)) & 1) ? -total : total;
    }
    all_reduce_sum<double>(comm, std::span<double>(e.data(), e.size()));
    return e;
}

Measurement measure_probs(ProbShard probs, const MeasureOptions &options, Communicator &comm) {
    Measurement m;
    m.options = options;
    const Index L = probs.local_size();
    const bool owns_last = comm.rank() == comm.world() - 1;
    switch (options.mode) {
    case MeasureMode::Analytic:
        m.freqs = probs.p;
        break;
    case MeasureMode::Exact:
        m.counts = sample_exact_local(probs, options.shots, options.seed, comm);
        m.freqs = m.counts.cast<double>() / static_cast<double>(options.shots);
        break;
    case MeasureMode::Approx: {
        if (options.shots < 1)
            throw SamplingError("approx measurement needs shots >= 1");
        const RowMatrix<double> u = probs.p.cwiseSqrt();
        m.u_last.assign(probs.batch_size(), 0.0);
        if (owns_last)
            for (int b = 0; b < probs.batch_size(); ++b)
                m.u_last[b] = u(b, L - 1);
        Bytes data = to_bytes<double>(m.u_last);
        comm.broadcast(data, comm.world() - 1);
        m.u_last = from_bytes<double>(data);
        m.noise = shard_noise(probs, options.seed);
        const RowMatrix<double> w = reflect_noise(u, m.noise, m.u_last, owns_last, m.s, m.t, comm_reduce(comm));
        m.freqs = probs.p + u.cwiseProduct(w) / std::sqrt(static_cast<double>(options.shots));
        break;
    }
    }
    m.expectations = allz_expectations(m.freqs, probs.num_qubits, comm.rank(), comm);
    m.probs = std::move(probs);
    return m;
}

RowMatrix<double> measure_backward_probs(const Measurement &m, const RowMatrix<double> &d_expect, Communicator &comm) {
    if (!m.differentiable())
        throw GradientPathError("no gradient path: exact shot sampling is not differentiable; use analytic or "
                                "approx measurement");
    if (d_expect.rows() != m.expectations.rows() || d_expect.cols() != m.expectations.cols())
        throw GradientPathError("gradient shape does not match the measurement");
    const RowMatrix<double> a =
        expand_signs(d_expect, m.probs.num_qubits, m.probs.offset(), m.probs.local_size());
    if (m.options.mode == MeasureMode::Analytic)
        return a;
    const RowMatrix<double> u = m.probs.p.cwiseSqrt();
    const bool owns_last = comm.rank() == comm.world() - 1;
    return reflect_noise_backward(u, m.noise, a, 1.0 / std::sqrt(static_cast<double>(m.options.shots)), owns_last,
                                  m.s, m.t, comm_reduce(comm));
}

void write_counts_csv(std::ostream &os, const ShotCounts &counts) {
    os << "batch_index,basis_index,count\n";
    for (Index b = 0; b < counts.counts.rows(); ++b)
        for (Index i = 0; i < counts.counts.cols(); ++i) {
            const double c = counts.counts(b, i);
            if (counts.exact && c == 0.0)
                continue;
            os << b << ',' << i << ',';
            if (counts.exact)
                os << static_cast<Index>(c);
            else
                write_number(os, c);
            os << '\n';
        }
}

} // namespace qshard
