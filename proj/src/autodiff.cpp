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
#include "qshard/autodiff.hpp"

#include <cmath>

namespace qshard {

std::vector<double> resolve_thetas(const Op &op, std::span<const double> params, const RowMatrix<double> &inputs,
                                   int batch) {
    switch (op.param.kind) {
    case ParamRef::Kind::None:
        return {0.0};
    case ParamRef::Kind::Fixed:
        return {op.param.value};
    case ParamRef::Kind::Trainable:
        if (op.param.index < 0 || op.param.index >= static_cast<int>(params.size()))
            throw GateError("parameter slot " + std::to_string(op.param.index) + " out of range");
        return {params[op.param.index]};
    case ParamRef::Kind::Input: {
        if (op.param.index < 0 || op.param.index >= inputs.cols())
            throw GateError("input feature " + std::to_string(op.param.index) + " out of range for width " +
                            std::to_string(inputs.cols()));
        if (inputs.rows() != batch)
            throw GateError("inputs have " + std::to_string(inputs.rows()) + " rows for batch " +
                            std::to_string(batch));
        std::vector<double> out(batch);
        for (int b = 0; b < batch; ++b)
            out[b] = inputs(b, op.param.index);
        return out;
    }
    }
    return {0.0};
}

std::vector<GateMatrix> gate_matrices(const Op &op, const std::vector<double> &thetas) {
    if (static_cast<int>(op.wires.size()) != op.gate->arity)
        throw GateError("gate '" + op.gate->name + "' takes " + std::to_string(op.gate->arity) + " wire(s), got " +
                        std::to_string(op.wires.size()));
    if (!op.gate->parametric)
        return {op.gate->matrix(0.0)};
    std::vector<GateMatrix> out;
    out.reserve(thetas.size());
    for (double theta : thetas)
        out.push_back(op.gate->matrix(theta));
    return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState &state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw Error("adam_step: parameter, gradient and state sizes differ (" + std::to_string(params.size()) +
                    ", " + std::to_string(grads.size()) + ", " + std::to_string(state.m.size()) + ")");
    const auto &o = state.options;
    ++state.step;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * grads[i];
        state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * grads[i] * grads[i];
        params[i] -= o.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + o.eps);
    }
}

std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)> &loss,
                                         std::span<const double> values, double eps) {
    std::vector<double> x(values.begin(), values.end());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double hi = loss(x);
        x[i] = keep - eps;
        const double lo = loss(x);
        x[i] = keep;
        out[i] = (hi - lo) / (2.0 * eps);
    }
    return out;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

double finite_diff_check(const std::function<double(std::span<const double>)> &loss, std::span<const double> values,
                         std::span<const double> grad, double eps) {
    if (values.size() != grad.size())
        throw Error("finite_diff_check: gradient size differs from value size");
    const auto fd = finite_diff_gradient(loss, values, eps);
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i)
        worst = std::max(worst, relative_error(fd[i], grad[i]));
    return worst;
}

double sum_abs_loss(const RowMatrix<double> &expectations) { return expectations.cwiseAbs().sum(); }

} // namespace qshard
