// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>
#include <gridformer/tensor.hpp>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>

namespace gridformer {

std::string
shape_string(const Shape& shape) {
    return fmt::format("[{}]", fmt::join(shape, "x"));
}

std::size_t
shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) {
        n *= e;
    }
    return n;
}

Tensor
Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.storage_ = std::make_shared<Storage>();
    const auto n = shape_numel(shape);
    t.storage_->shape = std::move(shape);
    t.storage_->values.assign(n, 0.0);
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor
Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_numel(shape)) {
        throw DimensionError(fmt::format("{} values do not fill shape {}", values.size(),
                                         shape_string(shape)));
    }
    Tensor t;
    t.storage_ = std::make_shared<Storage>();
    t.storage_->shape = std::move(shape);
    t.storage_->values = std::move(values);
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor
Tensor::scalar(double value, bool requires_grad) {
    return from_values({}, {value}, requires_grad);
}

const Shape&
Tensor::shape() const {
    if (!storage_) {
        throw ContractError("use of an undefined tensor");
    }
    return storage_->shape;
}

std::size_t
Tensor::extent(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError(fmt::format("axis {} out of range for shape {}", axis, shape_string(s)));
    }
    return s[axis];
}

std::size_t
Tensor::numel() const {
    return shape_numel(shape());
}

std::span<double>
Tensor::values() {
    shape();
    return storage_->values;
}

std::span<const double>
Tensor::values() const {
    shape();
    return storage_->values;
}

double
Tensor::item() const {
    if (numel() != 1) {
        throw ContractError(fmt::format("item() on a tensor of shape {}", shape_string(shape())));
    }
    return storage_->values[0];
}

bool
Tensor::requires_grad() const {
    return storage_ && storage_->requires_grad;
}

void
Tensor::set_requires_grad(bool flag) {
    shape();
    storage_->requires_grad = flag;
    if (flag) {
        storage_->grad.assign(storage_->values.size(), 0.0);
    } else {
        storage_->grad.clear();
        storage_->grad.shrink_to_fit();
    }
}

std::span<double>
Tensor::grad() const {
    if (!requires_grad()) {
        throw ContractError("gradient requested for a tensor that does not require it");
    }
    return storage_->grad;
}

void
Tensor::zero_grad() {
    if (requires_grad()) {
        std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
    }
}

Tensor
Tensor::clone() const {
    return from_values(shape(), storage_->values, false);
}

void
Tape::record(std::string_view primitive, std::function<void()> backward) {
    if (!recording_) {
        return;
    }
    entries_.push_back(Entry{std::string(primitive), std::move(backward)});
}

std::vector<std::string>
Tape::primitives() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) {
        names.push_back(e.primitive);
    }
    return names;
}

void
Tape::backward(Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError(fmt::format("backward() needs a scalar loss, got shape {}",
                                        shape_string(loss.shape())));
    }
    if (!loss.requires_grad()) {
        throw ContractError("loss does not depend on any tensor that requires a gradient");
    }
    loss.grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        it->backward();
    }
}

void
Tape::clear() {
    entries_.clear();
    entries_.shrink_to_fit();
}

namespace testing {
namespace {
std::string g_corrupted;
}

void
corrupt_backward(std::string_view primitive) {
    g_corrupted = std::string(primitive);
}

void
clear_backward_corruption() {
    g_corrupted.clear();
}

double
backward_scale(std::string_view primitive) {
    return (!g_corrupted.empty() && g_corrupted == primitive) ? 1.0 + 1e-2 : 1.0;
}

} // namespace testing

} // namespace gridformer
