// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include "op_support.hpp"

#include <gridformer/ops.hpp>

#include <algorithm>
#include <cmath>

namespace gridformer {

namespace {

void
check_point(const Vec3& p) {
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DomainError(fmt::format("point ({}, {}, {}) outside the unit cube", p[0], p[1], p[2]));
        }
    }
}

void
check_grid(const FeatureGrid& grid, const char* what) {
    if (grid.resolution < 1) {
        throw DimensionError(fmt::format("{}: resolution {} < 1", what, grid.resolution));
    }
    detail::require_rank(grid.features, 2, what);
    if (grid.features.extent(0) != grid.num_cells()) {
        throw DimensionError(fmt::format("{}: {} feature rows for a {}^3 grid", what,
                                         grid.features.extent(0), grid.resolution));
    }
    if (grid.support && grid.support->size() != grid.num_cells()) {
        throw DimensionError(fmt::format("{}: support of {} flags for {} cells", what, grid.support->size(),
                                         grid.num_cells()));
    }
}

struct AxisStencil {
    int lo;
    int hi;
    double t;
};

AxisStencil
axis_stencil(double p, int res) {
    if (res == 1) {
        return {0, 0, 0.0};
    }
    double u = p * res - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(res - 1));
    int lo = std::min(static_cast<int>(std::floor(u)), res - 2);
    return {lo, lo + 1, u - lo};
}

} // namespace

std::size_t
locate_cell(const Vec3& p, int resolution) {
    check_point(p);
    int idx[3];
    for (int a = 0; a < 3; ++a) {
        idx[a] = std::min(static_cast<int>(std::floor(p[a] * resolution)), resolution - 1);
    }
    return cell_index(idx[0], idx[1], idx[2], resolution);
}

InterpolationStencil
interpolation_stencil(const Vec3& p, int resolution) {
    check_point(p);
    const AxisStencil ax = axis_stencil(p[0], resolution);
    const AxisStencil ay = axis_stencil(p[1], resolution);
    const AxisStencil az = axis_stencil(p[2], resolution);
    InterpolationStencil s;
    int n = 0;
    for (int a = 0; a < 2; ++a) {
        const int i = a ? ax.hi : ax.lo;
        const double wx = a ? ax.t : 1.0 - ax.t;
        for (int b = 0; b < 2; ++b) {
            const int j = b ? ay.hi : ay.lo;
            const double wy = b ? ay.t : 1.0 - ay.t;
            for (int c = 0; c < 2; ++c) {
                const int k = c ? az.hi : az.lo;
                const double wz = c ? az.t : 1.0 - az.t;
                s.cells[n] = cell_index(i, j, k, resolution);
                s.weights[n] = wx * wy * wz;
                ++n;
            }
        }
    }
    return s;
}

namespace ops {

Tensor
grid_interpolate(Tape& tape, const FeatureGrid& grid, std::span<const Vec3> points) {
    check_grid(grid, "grid_interpolate");
    const auto m = points.size();
    const auto c = grid.channels();
    std::vector<InterpolationStencil> stencils;
    stencils.reserve(m);
    for (const auto& p : points) {
        stencils.push_back(interpolation_stencil(p, grid.resolution));
    }
    const bool grad = detail::tracks(tape, {&grid.features});
    Tensor y = Tensor::zeros({m, c}, grad);
    const auto gv = grid.features.values();
    auto yv = y.values();
    for (std::size_t q = 0; q < m; ++q) {
        double* dst = yv.data() + q * c;
        for (int n = 0; n < 8; ++n) {
            const double w = stencils[q].weights[n];
            if (w == 0.0) {
                continue;
            }
            const double* src = gv.data() + stencils[q].cells[n] * c;
            for (std::size_t k = 0; k < c; ++k) {
                dst[k] += w * src[k];
            }
        }
    }
    if (grad) {
        Tensor features = grid.features;
        tape.record("grid_interpolate", [features, y, stencils = std::move(stencils), m, c]() mutable {
            const double s = testing::backward_scale("grid_interpolate");
            auto gg = features.grad();
            const auto gy = std::as_const(y).grad();
            for (std::size_t q = 0; q < m; ++q) {
                const double* src = gy.data() + q * c;
                for (int n = 0; n < 8; ++n) {
                    const double w = s * stencils[q].weights[n];
                    if (w == 0.0) {
                        continue;
                    }
                    double* dst = gg.data() + stencils[q].cells[n] * c;
                    for (std::size_t k = 0; k < c; ++k) {
                        dst[k] += w * src[k];
                    }
                }
            }
        });
    }
    return y;
}

namespace {

struct ConvShape {
    std::size_t cin;
    std::size_t cout;
};

ConvShape
conv_shape(const FeatureGrid& grid, const Tensor& kernel, ConvMode mode) {
    const auto c = grid.channels();
    if (mode == ConvMode::Full) {
        detail::require_rank(kernel, 3, "full conv kernel");
        if (kernel.extent(0) != 27 || kernel.extent(1) != c) {
            throw DimensionError(fmt::format("conv3: kernel {} does not match {} input channels",
                                             shape_string(kernel.shape()), c));
        }
        return {c, kernel.extent(2)};
    }
    detail::require_rank(kernel, 2, "depthwise conv kernel");
    if (kernel.extent(0) != 27 || kernel.extent(1) != c) {
        throw DimensionError(fmt::format("conv3: depthwise kernel {} does not match {} channels",
                                         shape_string(kernel.shape()), c));
    }
    return {c, c};
}

std::vector<unsigned char>
nonzero_rows(std::span<const double> v, std::size_t rows, std::size_t c) {
    std::vector<unsigned char> nz(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = v.data() + r * c;
        for (std::size_t k = 0; k < c; ++k) {
            if (row[k] != 0.0) {
                nz[r] = 1;
                break;
            }
        }
    }
    return nz;
}

/// Input cell read by tap t of output cell o, or -1 outside the grid.
inline long
tap_source(int i, int j, int k, int t, int res) {
    const int si = i + t / 9 - 1;
    const int sj = j + (t / 3) % 3 - 1;
    const int sk = k + t % 3 - 1;
    if (si < 0 || sj < 0 || sk < 0 || si >= res || sj >= res || sk >= res) {
        return -1;
    }
    return static_cast<long>(cell_index(si, sj, sk, res));
}

/// Accumulates one output row from its 27 taps.
inline void
conv_forward_row(const double* in, const unsigned char* nz, const double* kernel, ConvMode mode,
                 const ConvShape& cs, int i, int j, int k, int res, double* out) {
    for (int t = 0; t < 27; ++t) {
        const long src = tap_source(i, j, k, t, res);
        if (src < 0 || !nz[src]) {
            continue;
        }
        const double* x = in + src * cs.cin;
        if (mode == ConvMode::Full) {
            const double* w = kernel + static_cast<std::size_t>(t) * cs.cin * cs.cout;
            for (std::size_t ci = 0; ci < cs.cin; ++ci) {
                const double a = x[ci];
                if (a == 0.0) {
                    continue;
                }
                const double* wr = w + ci * cs.cout;
                for (std::size_t co = 0; co < cs.cout; ++co) {
                    out[co] += a * wr[co];
                }
            }
        } else {
            const double* w = kernel + static_cast<std::size_t>(t) * cs.cin;
            for (std::size_t ch = 0; ch < cs.cin; ++ch) {
                out[ch] += x[ch] * w[ch];
            }
        }
    }
}

/// Backward of one output row: scatters into the input gradient and the
/// kernel gradient. kernel_t is the [27 x Cout x Cin] transpose for full mode.
inline void
conv_backward_row(const double* gout, const double* in, const unsigned char* nz, const double* kernel,
                  const double* kernel_t, ConvMode mode, const ConvShape& cs, int i, int j, int k,
                  int res, double scale, double* gin, double* gkernel) {
    for (int t = 0; t < 27; ++t) {
        const long src = tap_source(i, j, k, t, res);
        if (src < 0) {
            continue;
        }
        if (mode == ConvMode::Full) {
            if (gin) {
                double* gx = gin + src * cs.cin;
                const double* wt = kernel_t + static_cast<std::size_t>(t) * cs.cout * cs.cin;
                for (std::size_t co = 0; co < cs.cout; ++co) {
                    const double g = scale * gout[co];
                    if (g == 0.0) {
                        continue;
                    }
                    const double* wr = wt + co * cs.cin;
                    for (std::size_t ci = 0; ci < cs.cin; ++ci) {
                        gx[ci] += g * wr[ci];
                    }
                }
            }
            if (gkernel && nz[src]) {
                const double* x = in + src * cs.cin;
                double* gw = gkernel + static_cast<std::size_t>(t) * cs.cin * cs.cout;
                for (std::size_t ci = 0; ci < cs.cin; ++ci) {
                    const double a = scale * x[ci];
                    if (a == 0.0) {
                        continue;
                    }
                    double* gwr = gw + ci * cs.cout;
                    for (std::size_t co = 0; co < cs.cout; ++co) {
                        gwr[co] += a * gout[co];
                    }
                }
            }
        } else {
            const double* w = kernel + static_cast<std::size_t>(t) * cs.cin;
            if (gin) {
                double* gx = gin + src * cs.cin;
                for (std::size_t ch = 0; ch < cs.cin; ++ch) {
                    gx[ch] += scale * gout[ch] * w[ch];
                }
            }
            if (gkernel && nz[src]) {
                const double* x = in + src * cs.cin;
                double* gw = gkernel + static_cast<std::size_t>(t) * cs.cin;
                for (std::size_t ch = 0; ch < cs.cin; ++ch) {
                    gw[ch] += scale * gout[ch] * x[ch];
                }
            }
        }
    }
}

/// Input-gradient row of input cell (i, j, k): gathers the output gradient
/// of every cell that reads it. Tap t of output o reads o + d_t, so input
/// cell c is read by output c - d_t.
inline void
conv_input_grad_row(const double* gout, const unsigned char* gnz, const double* kernel, const double* kernel_t,
                    ConvMode mode, const ConvShape& cs, int i, int j, int k, int res, double scale,
                    double* gin) {
    for (int t = 0; t < 27; ++t) {
        const long dst = tap_source(i, j, k, 26 - t, res);
        if (dst < 0 || !gnz[dst]) {
            continue;
        }
        const double* g = gout + dst * cs.cout;
        if (mode == ConvMode::Full) {
            const double* wt = kernel_t + static_cast<std::size_t>(t) * cs.cout * cs.cin;
            for (std::size_t co = 0; co < cs.cout; ++co) {
                const double a = scale * g[co];
                const double* wr = wt + co * cs.cin;
                for (std::size_t ci = 0; ci < cs.cin; ++ci) {
                    gin[ci] += a * wr[ci];
                }
            }
        } else {
            const double* w = kernel + static_cast<std::size_t>(t) * cs.cin;
            for (std::size_t ch = 0; ch < cs.cin; ++ch) {
                gin[ch] += scale * g[ch] * w[ch];
            }
        }
    }
}

std::shared_ptr<const std::vector<std::uint8_t>>
dilate_support(const std::shared_ptr<const std::vector<std::uint8_t>>& support, int res) {
    if (!support) {
        return nullptr;
    }
    auto out = std::make_shared<std::vector<std::uint8_t>>(support->size(), 0);
    for (int i = 0; i < res; ++i) {
        for (int j = 0; j < res; ++j) {
            for (int k = 0; k < res; ++k) {
                for (int t = 0; t < 27; ++t) {
                    const long src = tap_source(i, j, k, t, res);
                    if (src >= 0 && (*support)[src]) {
                        (*out)[cell_index(i, j, k, res)] = 1;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

std::vector<double>
transpose_kernel(const Tensor& kernel, const ConvShape& cs) {
    std::vector<double> kt(27 * cs.cin * cs.cout);
    const auto kv = kernel.values();
    for (std::size_t t = 0; t < 27; ++t) {
        for (std::size_t ci = 0; ci < cs.cin; ++ci) {
            for (std::size_t co = 0; co < cs.cout; ++co) {
                kt[(t * cs.cout + co) * cs.cin + ci] = kv[(t * cs.cin + ci) * cs.cout + co];
            }
        }
    }
    return kt;
}

void
decode_cell(std::size_t cell, int res, int& i, int& j, int& k) {
    const auto r = static_cast<std::size_t>(res);
    k = static_cast<int>(cell % r);
    j = static_cast<int>((cell / r) % r);
    i = static_cast<int>(cell / (r * r));
}

} // namespace

FeatureGrid
conv3(Tape& tape, const FeatureGrid& grid, const Tensor& kernel, ConvMode mode) {
    check_grid(grid, "conv3");
    const ConvShape cs = conv_shape(grid, kernel, mode);
    const int res = grid.resolution;
    const auto cells = grid.num_cells();
    const bool grad = detail::tracks(tape, {&grid.features, &kernel});
    FeatureGrid out{res, Tensor::zeros({cells, cs.cout}, grad), dilate_support(grid.support, res)};
    const auto in = grid.features.values();
    auto nz = nonzero_rows(in, cells, cs.cin);
    const auto kv = kernel.values();
    auto ov = out.features.values();
    for (int i = 0; i < res; ++i) {
        for (int j = 0; j < res; ++j) {
            for (int k = 0; k < res; ++k) {
                const auto o = cell_index(i, j, k, res);
                conv_forward_row(in.data(), nz.data(), kv.data(), mode, cs, i, j, k, res,
                                 ov.data() + o * cs.cout);
            }
        }
    }
    if (grad) {
        Tensor input = grid.features;
        Tensor kern = kernel;
        Tensor output = out.features;
        tape.record("conv3", [input, kern, output, nz = std::move(nz), support = grid.support, mode, cs, res,
                              cells]() mutable {
            const double s = testing::backward_scale("conv3");
            const auto gout = std::as_const(output).grad();
            const auto gnz = nonzero_rows(gout, cells, cs.cout);
            const auto in = input.values();
            const auto kv = kern.values();
            if (kern.requires_grad()) {
                double* gk = kern.grad().data();
                for (int i = 0; i < res; ++i) {
                    for (int j = 0; j < res; ++j) {
                        for (int k = 0; k < res; ++k) {
                            const auto o = cell_index(i, j, k, res);
                            if (!gnz[o]) {
                                continue;
                            }
                            conv_backward_row(gout.data() + o * cs.cout, in.data(), nz.data(), kv.data(), nullptr,
                                              mode, cs, i, j, k, res, s, nullptr, gk);
                        }
                    }
                }
            }
            if (input.requires_grad()) {
                std::vector<double> kt;
                if (mode == ConvMode::Full) {
                    kt = transpose_kernel(kern, cs);
                }
                double* gin = input.grad().data();
                for (int i = 0; i < res; ++i) {
                    for (int j = 0; j < res; ++j) {
                        for (int k = 0; k < res; ++k) {
                            const auto src = cell_index(i, j, k, res);
                            if (support && !(*support)[src]) {
                                continue;
                            }
                            conv_input_grad_row(gout.data(), gnz.data(), kv.data(), kt.data(), mode, cs, i, j, k,
                                                res, s, gin + src * cs.cin);
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor
conv3_at(Tape& tape, const FeatureGrid& grid, const Tensor& kernel, ConvMode mode,
         std::span<const std::size_t> cells) {
    check_grid(grid, "conv3_at");
    const ConvShape cs = conv_shape(grid, kernel, mode);
    const int res = grid.resolution;
    const auto ncells = grid.num_cells();
    for (auto c : cells) {
        if (c >= ncells) {
            throw IndexError(fmt::format("conv3_at: cell {} out of range for a {}^3 grid", c, res));
        }
    }
    const bool grad = detail::tracks(tape, {&grid.features, &kernel});
    Tensor out = Tensor::zeros({cells.size(), cs.cout}, grad);
    const auto in = grid.features.values();
    auto nz = nonzero_rows(in, ncells, cs.cin);
    const auto kv = kernel.values();
    auto ov = out.values();
    for (std::size_t n = 0; n < cells.size(); ++n) {
        int i, j, k;
        decode_cell(cells[n], res, i, j, k);
        conv_forward_row(in.data(), nz.data(), kv.data(), mode, cs, i, j, k, res,
                         ov.data() + n * cs.cout);
    }
    if (grad) {
        Tensor input = grid.features;
        Tensor kern = kernel;
        std::vector<std::size_t> where(cells.begin(), cells.end());
        tape.record("conv3", [input, kern, out, nz = std::move(nz), where = std::move(where), mode, cs,
                              res]() mutable {
            const double s = testing::backward_scale("conv3");
            const auto gout = std::as_const(out).grad();
            std::vector<double> kt;
            if (mode == ConvMode::Full && input.requires_grad()) {
                kt = transpose_kernel(kern, cs);
            }
            double* gin = input.requires_grad() ? input.grad().data() : nullptr;
            double* gk = kern.requires_grad() ? kern.grad().data() : nullptr;
            const auto in = input.values();
            const auto kv = kern.values();
            for (std::size_t n = 0; n < where.size(); ++n) {
                int i, j, k;
                decode_cell(where[n], res, i, j, k);
                conv_backward_row(gout.data() + n * cs.cout, in.data(), nz.data(), kv.data(),
                                  kt.data(), mode, cs, i, j, k, res, s, gin, gk);
            }
        });
    }
    return out;
}

FeatureGrid
resample_grid(Tape& tape, const FeatureGrid& grid, ResampleFactor factor) {
    check_grid(grid, "resample_grid");
    const int res = grid.resolution;
    const auto c = grid.channels();
    if (factor == ResampleFactor::Down2 && res % 2 != 0) {
        throw DimensionError(fmt::format("down2 needs an even resolution, got {}", res));
    }
    const int out_res = factor == ResampleFactor::Down2 ? res / 2 : res * 2;
    const bool grad = detail::tracks(tape, {&grid.features});
    FeatureGrid out{out_res, Tensor::zeros({static_cast<std::size_t>(out_res) * out_res * out_res, c},
                                           grad), nullptr};
    const auto in = grid.features.values();
    auto ov = out.features.values();
    const int fine = std::max(res, out_res);
    const double weight = factor == ResampleFactor::Down2 ? 0.125 : 1.0;
    if (grid.support) {
        auto support = std::make_shared<std::vector<std::uint8_t>>(out.num_cells(), 0);
        for (int i = 0; i < fine; ++i) {
            for (int j = 0; j < fine; ++j) {
                for (int k = 0; k < fine; ++k) {
                    const auto f = cell_index(i, j, k, fine);
                    const auto coarse = cell_index(i / 2, j / 2, k / 2, fine / 2);
                    if (factor == ResampleFactor::Down2) {
                        (*support)[coarse] |= (*grid.support)[f];
                    } else {
                        (*support)[f] = (*grid.support)[coarse];
                    }
                }
            }
        }
        out.support = std::move(support);
    }
    if (factor == ResampleFactor::Down2) {
        // Pairwise tree sum so that pooling repeated values is exact.
        std::array<const double*, 8> child{};
        for (int i = 0; i < out_res; ++i) {
            for (int j = 0; j < out_res; ++j) {
                for (int k = 0; k < out_res; ++k) {
                    int n = 0;
                    for (int a = 0; a < 2; ++a) {
                        for (int b = 0; b < 2; ++b) {
                            for (int d = 0; d < 2; ++d) {
                                child[n++] = in.data() + cell_index(2 * i + a, 2 * j + b, 2 * k + d, res) * c;
                            }
                        }
                    }
                    double* dst = ov.data() + cell_index(i, j, k, out_res) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const double s01 = child[0][ch] + child[1][ch];
                        const double s23 = child[2][ch] + child[3][ch];
                        const double s45 = child[4][ch] + child[5][ch];
                        const double s67 = child[6][ch] + child[7][ch];
                        dst[ch] = ((s01 + s23) + (s45 + s67)) * weight;
                    }
                }
            }
        }
    } else {
        for (int i = 0; i < fine; ++i) {
            for (int j = 0; j < fine; ++j) {
                for (int k = 0; k < fine; ++k) {
                    std::copy_n(in.data() + cell_index(i / 2, j / 2, k / 2, res) * c, c,
                                ov.data() + cell_index(i, j, k, fine) * c);
                }
            }
        }
    }
    if (grad) {
        Tensor input = grid.features;
        Tensor output = out.features;
        tape.record("resample_grid", [input, output, factor, fine, c, weight]() mutable {
            const double s = testing::backward_scale("resample_grid") * weight;
            auto gin = input.grad();
            const auto gout = std::as_const(output).grad();
            for (int i = 0; i < fine; ++i) {
                for (int j = 0; j < fine; ++j) {
                    for (int k = 0; k < fine; ++k) {
                        const auto f = cell_index(i, j, k, fine);
                        const auto coarse = cell_index(i / 2, j / 2, k / 2, fine / 2);
                        const auto src = factor == ResampleFactor::Down2 ? coarse : f;
                        const auto dst = factor == ResampleFactor::Down2 ? f : coarse;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            gin[dst * c + ch] += s * gout[src * c + ch];
                        }
                    }
                }
            }
        });
    }
    return out;
}

} // namespace ops

} // namespace gridformer
