// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include "op_support.hpp"

#include <gridformer/ops.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridformer::ops {

using detail::require_rank;
using detail::tracks;

Tensor
linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "linear input");
    require_rank(weight, 2, "linear weight");
    require_rank(bias, 1, "linear bias");
    const auto n = x.extent(0);
    const auto cin = x.extent(1);
    const auto cout = weight.extent(1);
    if (weight.extent(0) != cin || bias.extent(0) != cout) {
        throw DimensionError(fmt::format("linear: input {} incompatible with weight {} / bias {}",
                                         shape_string(x.shape()), shape_string(weight.shape()),
                                         shape_string(bias.shape())));
    }
    const bool grad = tracks(tape, {&x, &weight, &bias});
    Tensor y = Tensor::zeros({n, cout}, grad);
    {
        const auto xv = x.values();
        const auto wv = weight.values();
        const auto bv = bias.values();
        auto yv = y.values();
        for (std::size_t r = 0; r < n; ++r) {
            double* yr = yv.data() + r * cout;
            std::copy(bv.begin(), bv.end(), yr);
            for (std::size_t i = 0; i < cin; ++i) {
                const double a = xv[r * cin + i];
                if (a == 0.0) {
                    continue;
                }
                const double* wr = wv.data() + i * cout;
                for (std::size_t o = 0; o < cout; ++o) {
                    yr[o] += a * wr[o];
                }
            }
        }
    }
    if (grad) {
        tape.record("linear", [x, weight, bias, y, n, cin, cout]() mutable {
            const double s = testing::backward_scale("linear");
            const auto gy = std::as_const(y).grad();
            if (x.requires_grad()) {
                auto gx = x.grad();
                const auto wv = weight.values();
                for (std::size_t r = 0; r < n; ++r) {
                    const double* gr = gy.data() + r * cout;
                    for (std::size_t i = 0; i < cin; ++i) {
                        const double* wr = wv.data() + i * cout;
                        double acc = 0.0;
                        for (std::size_t o = 0; o < cout; ++o) {
                            acc += gr[o] * wr[o];
                        }
                        gx[r * cin + i] += s * acc;
                    }
                }
            }
            if (weight.requires_grad()) {
                auto gw = weight.grad();
                const auto xv = x.values();
                for (std::size_t r = 0; r < n; ++r) {
                    const double* gr = gy.data() + r * cout;
                    for (std::size_t i = 0; i < cin; ++i) {
                        const double a = xv[r * cin + i];
                        if (a == 0.0) {
                            continue;
                        }
                        double* gwr = gw.data() + i * cout;
                        for (std::size_t o = 0; o < cout; ++o) {
                            gwr[o] += a * gr[o];
                        }
                    }
                }
            }
            if (bias.requires_grad()) {
                auto gb = bias.grad();
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t o = 0; o < cout; ++o) {
                        gb[o] += gy[r * cout + o];
                    }
                }
            }
        });
    }
    return y;
}

namespace {

double
stable_sigmoid(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

void
require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(fmt::format("{}: shapes {} and {} differ", op, shape_string(a.shape()),
                                         shape_string(b.shape())));
    }
}

} // namespace

Tensor
pointwise(Tape& tape, const Tensor& x, Pointwise kind) {
    const bool grad = tracks(tape, {&x});
    Tensor y = Tensor::zeros(x.shape(), grad);
    const auto xv = x.values();
    auto yv = y.values();
    if (kind == Pointwise::Relu) {
        for (std::size_t i = 0; i < xv.size(); ++i) {
            yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
        }
    } else {
        for (std::size_t i = 0; i < xv.size(); ++i) {
            yv[i] = stable_sigmoid(xv[i]);
        }
    }
    if (grad) {
        const char* name = kind == Pointwise::Relu ? "relu" : "sigmoid";
        tape.record(name, [x, y, kind, name]() mutable {
            const double s = testing::backward_scale(name);
            auto gx = x.grad();
            const auto gy = std::as_const(y).grad();
            const auto xv = x.values();
            const auto yv = std::as_const(y).values();
            if (kind == Pointwise::Relu) {
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    if (xv[i] > 0.0) {
                        gx[i] += s * gy[i];
                    }
                }
            } else {
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    gx[i] += s * gy[i] * yv[i] * (1.0 - yv[i]);
                }
            }
        });
    }
    return y;
}

namespace {

enum class Binary { Add, Sub, Mul };

Tensor
binary(Tape& tape, const Tensor& a, const Tensor& b, Binary op) {
    static constexpr const char* names[] = {"add", "sub", "mul"};
    const char* name = names[static_cast<int>(op)];
    require_same_shape(a, b, name);
    const bool grad = tracks(tape, {&a, &b});
    Tensor y = Tensor::zeros(a.shape(), grad);
    const auto av = a.values();
    const auto bv = b.values();
    auto yv = y.values();
    for (std::size_t i = 0; i < yv.size(); ++i) {
        switch (op) {
        case Binary::Add: yv[i] = av[i] + bv[i]; break;
        case Binary::Sub: yv[i] = av[i] - bv[i]; break;
        case Binary::Mul: yv[i] = av[i] * bv[i]; break;
        }
    }
    if (grad) {
        tape.record(name, [a, b, y, op, name]() mutable {
            const double s = testing::backward_scale(name);
            const auto gy = std::as_const(y).grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                if (op == Binary::Mul) {
                    const auto bv = b.values();
                    for (std::size_t i = 0; i < ga.size(); ++i) {
                        ga[i] += s * gy[i] * bv[i];
                    }
                } else {
                    for (std::size_t i = 0; i < ga.size(); ++i) {
                        ga[i] += s * gy[i];
                    }
                }
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                if (op == Binary::Mul) {
                    const auto av = a.values();
                    for (std::size_t i = 0; i < gb.size(); ++i) {
                        gb[i] += s * gy[i] * av[i];
                    }
                } else {
                    const double sign = op == Binary::Sub ? -1.0 : 1.0;
                    for (std::size_t i = 0; i < gb.size(); ++i) {
                        gb[i] += s * sign * gy[i];
                    }
                }
            }
        });
    }
    return y;
}

} // namespace

Tensor
add(Tape& tape, const Tensor& a, const Tensor& b) {
    return binary(tape, a, b, Binary::Add);
}

Tensor
sub(Tape& tape, const Tensor& a, const Tensor& b) {
    return binary(tape, a, b, Binary::Sub);
}

Tensor
mul(Tape& tape, const Tensor& a, const Tensor& b) {
    return binary(tape, a, b, Binary::Mul);
}

Tensor
gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows) {
    require_rank(x, 2, "gather_rows input");
    const auto nrows = x.extent(0);
    const auto c = x.extent(1);
    for (auto r : rows) {
        if (r >= nrows) {
            throw IndexError(fmt::format("gather_rows: row {} out of range for {} rows", r, nrows));
        }
    }
    const bool grad = tracks(tape, {&x});
    Tensor y = Tensor::zeros({rows.size(), c}, grad);
    const auto xv = x.values();
    auto yv = y.values();
    for (std::size_t n = 0; n < rows.size(); ++n) {
        std::copy_n(xv.data() + rows[n] * c, c, yv.data() + n * c);
    }
    if (grad) {
        std::vector<std::size_t> idx(rows.begin(), rows.end());
        tape.record("gather_rows", [x, y, idx = std::move(idx), c]() mutable {
            const double s = testing::backward_scale("gather_rows");
            auto gx = x.grad();
            const auto gy = std::as_const(y).grad();
            for (std::size_t n = 0; n < idx.size(); ++n) {
                double* dst = gx.data() + idx[n] * c;
                const double* src = gy.data() + n * c;
                for (std::size_t k = 0; k < c; ++k) {
                    dst[k] += s * src[k];
                }
            }
        });
    }
    return y;
}

Tensor
broadcast_cols(Tape& tape, const Tensor& x, std::size_t columns) {
    require_rank(x, 2, "broadcast_cols input");
    if (x.extent(1) != 1) {
        throw DimensionError(fmt::format("broadcast_cols expects [N x 1], got {}",
                                         shape_string(x.shape())));
    }
    const auto n = x.extent(0);
    const bool grad = tracks(tape, {&x});
    Tensor y = Tensor::zeros({n, columns}, grad);
    const auto xv = x.values();
    auto yv = y.values();
    for (std::size_t r = 0; r < n; ++r) {
        std::fill_n(yv.data() + r * columns, columns, xv[r]);
    }
    if (grad) {
        tape.record("broadcast_cols", [x, y, n, columns]() mutable {
            const double s = testing::backward_scale("broadcast_cols");
            auto gx = x.grad();
            const auto gy = std::as_const(y).grad();
            for (std::size_t r = 0; r < n; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < columns; ++k) {
                    acc += gy[r * columns + k];
                }
                gx[r] += s * acc;
            }
        });
    }
    return y;
}

Tensor
concat_cols(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw ContractError("concat_cols needs at least one input");
    }
    const auto n = parts.front().extent(0);
    std::size_t total = 0;
    bool grad = false;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_cols input");
        if (p.extent(0) != n) {
            throw DimensionError(fmt::format("concat_cols: {} rows vs {} rows", p.extent(0), n));
        }
        total += p.extent(1);
        grad = grad || tracks(tape, {&p});
    }
    Tensor y = Tensor::zeros({n, total}, grad);
    auto yv = y.values();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const auto c = p.extent(1);
        const auto pv = p.values();
        for (std::size_t r = 0; r < n; ++r) {
            std::copy_n(pv.data() + r * c, c, yv.data() + r * total + offset);
        }
        offset += c;
    }
    if (grad) {
        std::vector<Tensor> inputs(parts.begin(), parts.end());
        tape.record("concat_cols", [inputs, y, n, total]() mutable {
            const double s = testing::backward_scale("concat_cols");
            const auto gy = std::as_const(y).grad();
            std::size_t off = 0;
            for (auto& p : inputs) {
                const auto c = p.extent(1);
                if (p.requires_grad()) {
                    auto gp = p.grad();
                    for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t k = 0; k < c; ++k) {
                            gp[r * c + k] += s * gy[r * total + off + k];
                        }
                    }
                }
                off += c;
            }
        });
    }
    return y;
}

namespace {

std::size_t
group_count(std::span<const std::size_t> ids) {
    std::size_t g = 0;
    for (auto id : ids) {
        g = std::max(g, id + 1);
    }
    return g;
}

} // namespace

Tensor
group_softmax(Tape& tape, const Tensor& logits, std::span<const std::size_t> group_id) {
    require_rank(logits, 2, "group_softmax logits");
    const auto n = logits.extent(0);
    const auto c = logits.extent(1);
    if (group_id.size() != n) {
        throw DimensionError(fmt::format("group_softmax: {} group ids for {} rows", group_id.size(), n));
    }
    const bool grad = tracks(tape, {&logits});
    Tensor y = Tensor::zeros({n, c}, grad);
    if (n == 0) {
        return y;
    }
    const auto groups = group_count(group_id);
    std::vector<double> maxv(groups * c, -std::numeric_limits<double>::infinity());
    std::vector<double> denom(groups * c, 0.0);
    const auto xv = logits.values();
    auto yv = y.values();
    for (std::size_t r = 0; r < n; ++r) {
        double* m = maxv.data() + group_id[r] * c;
        for (std::size_t k = 0; k < c; ++k) {
            m[k] = std::max(m[k], xv[r * c + k]);
        }
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double* m = maxv.data() + group_id[r] * c;
        double* d = denom.data() + group_id[r] * c;
        for (std::size_t k = 0; k < c; ++k) {
            const double e = std::exp(xv[r * c + k] - m[k]);
            yv[r * c + k] = e;
            d[k] += e;
        }
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double* d = denom.data() + group_id[r] * c;
        for (std::size_t k = 0; k < c; ++k) {
            yv[r * c + k] /= d[k];
        }
    }
    if (grad) {
        std::vector<std::size_t> ids(group_id.begin(), group_id.end());
        tape.record("group_softmax", [logits, y, ids = std::move(ids), groups, n, c]() mutable {
            const double s = testing::backward_scale("group_softmax");
            const auto gy = std::as_const(y).grad();
            const auto yv = std::as_const(y).values();
            auto gx = logits.grad();
            std::vector<double> dot(groups * c, 0.0);
            for (std::size_t r = 0; r < n; ++r) {
                double* d = dot.data() + ids[r] * c;
                for (std::size_t k = 0; k < c; ++k) {
                    d[k] += yv[r * c + k] * gy[r * c + k];
                }
            }
            for (std::size_t r = 0; r < n; ++r) {
                const double* d = dot.data() + ids[r] * c;
                for (std::size_t k = 0; k < c; ++k) {
                    gx[r * c + k] += s * yv[r * c + k] * (gy[r * c + k] - d[k]);
                }
            }
        });
    }
    return y;
}

Tensor
scatter_reduce(Tape& tape, const Tensor& values, std::span<const std::size_t> cell_id,
               std::size_t num_cells, ReduceMode mode) {
    require_rank(values, 2, "scatter_reduce values");
    const auto n = values.extent(0);
    const auto c = values.extent(1);
    if (cell_id.size() != n) {
        throw DimensionError(fmt::format("scatter_reduce: {} cell ids for {} rows", cell_id.size(), n));
    }
    for (auto id : cell_id) {
        if (id >= num_cells) {
            throw IndexError(fmt::format("scatter_reduce: cell {} out of range for {} cells", id,
                                         num_cells));
        }
    }
    const bool grad = tracks(tape, {&values});
    Tensor y = Tensor::zeros({num_cells, c}, grad);
    std::vector<double> count(num_cells, 0.0);
    const auto xv = values.values();
    auto yv = y.values();
    for (std::size_t r = 0; r < n; ++r) {
        double* dst = yv.data() + cell_id[r] * c;
        const double* src = xv.data() + r * c;
        for (std::size_t k = 0; k < c; ++k) {
            dst[k] += src[k];
        }
        count[cell_id[r]] += 1.0;
    }
    if (mode == ReduceMode::Mean) {
        for (std::size_t cell = 0; cell < num_cells; ++cell) {
            if (count[cell] > 1.0) {
                for (std::size_t k = 0; k < c; ++k) {
                    yv[cell * c + k] /= count[cell];
                }
            }
        }
    }
    if (grad) {
        std::vector<std::size_t> ids(cell_id.begin(), cell_id.end());
        tape.record("scatter_reduce",
                    [values, y, ids = std::move(ids), count = std::move(count), mode, n, c]() mutable {
                        const double s = testing::backward_scale("scatter_reduce");
                        const auto gy = std::as_const(y).grad();
                        auto gx = values.grad();
                        for (std::size_t r = 0; r < n; ++r) {
                            const double scale =
                                mode == ReduceMode::Mean ? s / count[ids[r]] : s;
                            const double* src = gy.data() + ids[r] * c;
                            for (std::size_t k = 0; k < c; ++k) {
                                gx[r * c + k] += scale * src[k];
                            }
                        }
                    });
    }
    return y;
}

Tensor
sum(Tape& tape, const Tensor& x) {
    const bool grad = tracks(tape, {&x});
    double acc = 0.0;
    for (double v : x.values()) {
        acc += v;
    }
    Tensor y = Tensor::scalar(acc, grad);
    if (grad) {
        tape.record("sum", [x, y]() mutable {
            const double g = testing::backward_scale("sum") * std::as_const(y).grad()[0];
            for (auto& gx : x.grad()) {
                gx += g;
            }
        });
    }
    return y;
}

Tensor
mean(Tape& tape, const Tensor& x) {
    const auto n = x.numel();
    if (n == 0) {
        throw ContractError("mean of an empty tensor");
    }
    const bool grad = tracks(tape, {&x});
    double acc = 0.0;
    for (double v : x.values()) {
        acc += v;
    }
    Tensor y = Tensor::scalar(acc / static_cast<double>(n), grad);
    if (grad) {
        tape.record("mean", [x, y, n]() mutable {
            const double g = testing::backward_scale("mean") * std::as_const(y).grad()[0] /
                             static_cast<double>(n);
            for (auto& gx : x.grad()) {
                gx += g;
            }
        });
    }
    return y;
}

} // namespace gridformer::ops
