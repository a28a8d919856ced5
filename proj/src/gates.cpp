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
#include "qshard/gates.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace qshard {

namespace {

using C = std::complex<double>;
constexpr C kI{0.0, 1.0};

GateMatrix mat2(C a, C b, C c, C d) {
    GateMatrix m(2, 2);
    m << a, b, c, d;
    return m;
}

GateMatrix pauli(char p) {
    switch (p) {
    case 'x':
        return mat2(0, 1, 1, 0);
    case 'y':
        return mat2(0, -kI, kI, 0);
    default:
        return mat2(1, 0, 0, -1);
    }
}

// exp(-i theta P / 2)
GateDef rotation(const std::string &name, char p) {
    GateDef def;
    def.name = name;
    def.arity = 1;
    def.parametric = true;
    const GateMatrix sigma = pauli(p);
    def.matrix = [sigma](double theta) -> GateMatrix {
        return std::cos(theta / 2) * GateMatrix::Identity(2, 2) - kI * std::sin(theta / 2) * sigma;
    };
    def.derivative = [sigma](double theta) -> GateMatrix {
        return -0.5 * std::sin(theta / 2) * GateMatrix::Identity(2, 2) - 0.5 * kI * std::cos(theta / 2) * sigma;
    };
    return def;
}

GateDef fixed(const std::string &name, GateMatrix m) {
    GateDef def;
    def.name = name;
    def.arity = static_cast<int>(std::log2(static_cast<double>(m.rows())) + 0.5);
    def.matrix = [m = std::move(m)](double) { return m; };
    return def;
}

} // namespace

double unitarity_deviation(const GateMatrix &m) {
    if (m.rows() != m.cols())
        return std::numeric_limits<double>::infinity();
    return (m * m.adjoint() - GateMatrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
}

std::vector<double> registration_grid() {
    std::vector<double> grid(16);
    for (int j = 0; j < 16; ++j)
        grid[j] = -std::numbers::pi + 2.0 * std::numbers::pi * (j + 0.5) / 16.0;
    return grid;
}

GatePtr GateRegistry::register_custom(GateDef def, Precision precision) {
    if (def.name.empty())
        throw GateError("gate name must not be empty");
    if (contains(def.name))
        throw GateError("gate '" + def.name + "' is already registered");
    if (def.arity < 1)
        throw GateError("gate '" + def.name + "' must act on at least one qubit");
    if (!def.matrix)
        throw GateError("gate '" + def.name + "' has no matrix function");
    const Index dim = Index{1} << def.arity;
    const double tol = unitarity_tolerance(precision);

    const std::vector<double> grid = def.parametric ? registration_grid() : std::vector<double>{0.0};
    for (double theta : grid) {
        const GateMatrix m = def.matrix(theta);
        if (m.rows() != dim || m.cols() != dim)
            throw GateError("gate '" + def.name + "' has arity " + std::to_string(def.arity) +
                            " but its matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        const double dev = unitarity_deviation(m);
        if (!(dev < tol)) {
            std::ostringstream os;
            os << "gate '" << def.name << "' is not unitary: max |M M^dagger - I| = " << dev << " at theta = " << theta;
            throw GateError(os.str());
        }
        if (def.differentiable()) {
            constexpr double h = 1e-6;
            const GateMatrix fd = (def.matrix(theta + h) - def.matrix(theta - h)) / (2 * h);
            const double err = (fd - def.derivative(theta)).cwiseAbs().maxCoeff();
            if (!(err < 1e-6)) {
                std::ostringstream os;
                os << "gate '" << def.name << "' derivative disagrees with finite differences by " << err
                   << " at theta = " << theta;
                throw GateError(os.str());
            }
        }
    }
    auto ptr = std::make_shared<const GateDef>(std::move(def));
    gates_.emplace(ptr->name, ptr);
    return ptr;
}

GatePtr GateRegistry::find(std::string_view name) const {
    auto it = gates_.find(name);
    if (it == gates_.end())
        throw GateError("unknown gate '" + std::string(name) + "'");
    return it->second;
}

bool GateRegistry::contains(std::string_view name) const { return gates_.find(name) != gates_.end(); }

std::vector<std::string> GateRegistry::names() const {
    std::vector<std::string> out;
    for (const auto &[name, _] : gates_)
        out.push_back(name);
    return out;
}

GateRegistry builtin_registry() {
    GateRegistry r;
    const double s = 1.0 / std::sqrt(2.0);
    r.register_custom(fixed("x", pauli('x')));
    r.register_custom(fixed("y", pauli('y')));
    r.register_custom(fixed("z", pauli('z')));
    r.register_custom(fixed("h", mat2(s, s, s, -s)));
    r.register_custom(fixed("s", mat2(1, 0, 0, kI)));
    r.register_custom(fixed("t", mat2(1, 0, 0, std::polar(1.0, std::numbers::pi / 4))));
    r.register_custom(rotation("rx", 'x'));
    r.register_custom(rotation("ry", 'y'));
    r.register_custom(rotation("rz", 'z'));
    // wires[0] = control, wires[1] = target
    GateMatrix cx = GateMatrix::Zero(4, 4);
    cx(0, 0) = cx(1, 1) = cx(2, 3) = cx(3, 2) = 1;
    r.register_custom(fixed("cx", cx));
    return r;
}

const GateRegistry &default_registry() {
    static const GateRegistry registry = builtin_registry();
    return registry;
}

StatefulGate::StatefulGate(GatePtr def, std::vector<int> wires, std::optional<double> param)
    : def_(std::move(def)), wires_(std::move(wires)), param_(param) {
    if (!def_)
        throw GateError("null gate definition");
    if (static_cast<int>(wires_.size()) != def_->arity)
        throw GateError("gate '" + def_->name + "' takes " + std::to_string(def_->arity) + " wire(s), got " +
                        std::to_string(wires_.size()));
    if (param_ && !def_->parametric)
        throw GateError("gate '" + def_->name + "' takes no parameter");
    if (def_->parametric && !param_)
        param_ = 0.0;
}

void StatefulGate::set_param(double theta) {
    if (!def_->parametric)
        throw GateError("gate '" + def_->name + "' takes no parameter");
    param_ = theta;
}

GateMatrix StatefulGate::matrix() const { return def_->matrix(param_.value_or(0.0)); }

FunctionalGate as_functional(const GateRegistry &registry, std::string_view name) {
    return FunctionalGate(registry.find(name));
}

} // namespace qshard
