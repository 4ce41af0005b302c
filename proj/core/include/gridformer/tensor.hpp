// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
// Dense real-valued tensors and the tape that records differentiable
// operations on them.
//
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gridformer {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Shared handle to row-major storage. Copies alias the same storage, the
/// way parameters and activations are passed around during a forward pass.
/// The gradient buffer exists only when requires_grad is set and is only
/// ever accumulated into by the tape.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(storage_); }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t numel() const;

    std::span<double> values();
    std::span<const double> values() const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    /// Gradient accumulator; shared by every handle to the same storage.
    std::span<double> grad() const;
    void zero_grad();

    /// Deep copy without gradient tracking.
    Tensor clone() const;

    bool aliases(const Tensor& other) const noexcept { return storage_ == other.storage_; }

private:
    struct Storage {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> storage_;
};

/// Ordered record of executed primitives. backward() replays the recorded
/// closures in exact reverse order; clear() drops them together with every
/// intermediate they keep alive.
class Tape {
public:
    Tape() = default;
    explicit Tape(bool recording) : recording_(recording) {}

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return entries_.size(); }

    void record(std::string_view primitive, std::function<void()> backward);
    std::vector<std::string> primitives() const;

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every leaf
    /// that requires them. loss must be a scalar.
    void backward(Tensor& loss);
    void clear();

private:
    struct Entry {
        std::string primitive;
        std::function<void()> backward;
    };
    bool recording_ = true;
    std::vector<Entry> entries_;
};

namespace testing {

/// Negative-control hook for the gradient checker: scales the input
/// gradients produced by the named primitive's backward pass by (1 + 1e-2).
void corrupt_backward(std::string_view primitive);
void clear_backward_corruption();
double backward_scale(std::string_view primitive);

} // namespace testing

} // namespace gridformer
