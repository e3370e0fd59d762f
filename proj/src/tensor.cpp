#include "vigil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vigil {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

using Impl = detail::TensorImpl;
using ImplPtr = std::shared_ptr<Impl>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw std::invalid_argument("tensor: " + op + ": incompatible shapes " + shape_str(a) +
                                " and " + shape_str(b));
}

void check_positive(const Shape& s, const std::string& op) {
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor: " + op + ": non-positive extent in " + shape_str(s));
    }
}

ImplPtr make_impl(Shape shape, std::vector<double> value, Tape* tape, bool requires_grad) {
    auto p = std::make_shared<Impl>();
    p->shape = std::move(shape);
    p->value = std::move(value);
    p->requires_grad = requires_grad;
    p->tape = tape;
    if (requires_grad) p->grad.assign(p->value.size(), 0.0);
    return p;
}

// Output inherits the tape of whichever input carries one.
Tape* joint_tape(const Tensor& a, const Tensor& b) {
    if (a.tape()) return a.tape();
    return b.tape();
}

Tensor result(Shape shape, std::vector<double> value, Tape* tape, bool requires_grad) {
    return Tensor::from_impl(make_impl(std::move(shape), std::move(value), requires_grad ? tape : nullptr,
                                       requires_grad && tape != nullptr));
}

// b broadcastable onto a: equal shapes, scalar, or trailing suffix.
enum class Bcast { Same, Scalar, Suffix, No };

Bcast bcast_kind(const Shape& a, const Shape& b) {
    if (a == b) return Bcast::Same;
    if (shape_numel(b) == 1) return Bcast::Scalar;
    if (b.size() < a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<long>(b.size())))
        return Bcast::Suffix;
    return Bcast::No;
}

struct AxisSplit {
    int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisSplit r{1, s[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
    check_positive(shape, "constant");
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor: constant: " + std::to_string(data.size()) +
                                    " values for shape " + shape_str(shape));
    return from_impl(make_impl(std::move(shape), std::move(data), nullptr, false));
}

Tensor Tensor::zeros(Shape shape) {
    check_positive(shape, "zeros");
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
    return from_impl(make_impl(std::move(shape), std::move(v), nullptr, false));
}

Tensor Tensor::full(Shape shape, double x) {
    check_positive(shape, "full");
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), x);
    return from_impl(make_impl(std::move(shape), std::move(v), nullptr, false));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

double Tensor::item() const {
    if (!p_ || p_->value.size() != 1) throw std::logic_error("tensor: item() on non-scalar");
    return p_->value[0];
}

void Tensor::zero_grad() {
    if (p_) std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
}

Tensor Tensor::from_impl(std::shared_ptr<detail::TensorImpl> p) {
    Tensor t;
    t.p_ = std::move(p);
    return t;
}

Tensor Tape::parameter(Shape shape, std::vector<double> init) {
    check_positive(shape, "parameter");
    if (shape_numel(shape) != static_cast<int64_t>(init.size()))
        throw std::invalid_argument("tensor: parameter: data/shape mismatch for " + shape_str(shape));
    return Tensor::from_impl(make_impl(std::move(shape), std::move(init), this, true));
}

Tensor Tape::watch(Shape shape, std::vector<double> data) { return parameter(std::move(shape), std::move(data)); }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) throw std::invalid_argument("tensor: backward: loss must be scalar");
    if (!loss.requires_grad()) throw std::invalid_argument("tensor: backward: loss does not require grad");
    auto impl = loss.handle();
    std::fill(impl->grad.begin(), impl->grad.end(), 0.0);
    impl->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---- elementwise -------------------------------------------------------

namespace {

template <class Fwd>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                          void (*bwd)(const ImplPtr&, const ImplPtr&, const ImplPtr&, Bcast)) {
    Bcast k = bcast_kind(a.shape(), b.shape());
    if (k == Bcast::No) shape_error(name, a.shape(), b.shape());
    const auto av = a.value();
    const auto bv = b.value();
    std::vector<double> out(av.size());
    const int64_t bn = static_cast<int64_t>(bv.size());
    for (int64_t i = 0; i < static_cast<int64_t>(av.size()); ++i) {
        double rhs = (k == Bcast::Same) ? bv[static_cast<size_t>(i)]
                     : (k == Bcast::Scalar) ? bv[0]
                                            : bv[static_cast<size_t>(i % bn)];
        out[static_cast<size_t>(i)] = fwd(av[static_cast<size_t>(i)], rhs);
    }
    Tape* tape = joint_tape(a, b);
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor r = result(a.shape(), std::move(out), tape, rg);
    if (r.requires_grad()) {
        auto pa = a.handle(), pb = b.handle(), po = r.handle();
        tape->record([pa, pb, po, k, bwd] { bwd(pa, pb, po, k); });
    }
    return r;
}

void accumulate_rhs(const ImplPtr& pb, const ImplPtr& po, Bcast k, double sign, const ImplPtr& pa_for_mul,
                    bool use_a) {
    const int64_t bn = static_cast<int64_t>(pb->value.size());
    for (int64_t i = 0; i < static_cast<int64_t>(po->grad.size()); ++i) {
        double g = po->grad[static_cast<size_t>(i)] * sign;
        if (use_a) g *= pa_for_mul->value[static_cast<size_t>(i)];
        int64_t j = (k == Bcast::Same) ? i : (k == Bcast::Scalar) ? 0 : (i % bn);
        pb->grad[static_cast<size_t>(j)] += g;
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; },
        [](const ImplPtr& pa, const ImplPtr& pb, const ImplPtr& po, Bcast k) {
            if (pa->requires_grad)
                for (size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i];
            if (pb->requires_grad) accumulate_rhs(pb, po, k, 1.0, nullptr, false);
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](const ImplPtr& pa, const ImplPtr& pb, const ImplPtr& po, Bcast k) {
            if (pa->requires_grad)
                for (size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i];
            if (pb->requires_grad) accumulate_rhs(pb, po, k, -1.0, nullptr, false);
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](const ImplPtr& pa, const ImplPtr& pb, const ImplPtr& po, Bcast k) {
            const int64_t bn = static_cast<int64_t>(pb->value.size());
            if (pa->requires_grad) {
                for (int64_t i = 0; i < static_cast<int64_t>(po->grad.size()); ++i) {
                    int64_t j = (k == Bcast::Same) ? i : (k == Bcast::Scalar) ? 0 : (i % bn);
                    pa->grad[static_cast<size_t>(i)] +=
                        po->grad[static_cast<size_t>(i)] * pb->value[static_cast<size_t>(j)];
                }
            }
            if (pb->requires_grad) accumulate_rhs(pb, po, k, 1.0, pa, true);
        });
}

Tensor scale(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }

// ---- matmul ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2) shape_error("matmul", sa, sb);

    const bool batched = sb.size() == 3;
    if (batched) {
        if (sa.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1]) shape_error("matmul", sa, sb);
    } else {
        if (sb.size() != 2 || sa.back() != sb[0]) shape_error("matmul", sa, sb);
    }

    const int64_t K = sa.back();
    const int64_t M = sa[sa.size() - 2];
    const int64_t N = batched ? sb[2] : sb[1];
    int64_t B = 1;
    for (size_t i = 0; i + 2 < sa.size(); ++i) B *= sa[i];

    Shape out_shape(sa.begin(), sa.end() - 2);
    out_shape.push_back(static_cast<int>(M));
    out_shape.push_back(static_cast<int>(N));

    const auto av = a.value();
    const auto bv = b.value();
    std::vector<double> out(static_cast<size_t>(B * M * N), 0.0);
    for (int64_t bi = 0; bi < B; ++bi) {
        const double* A = av.data() + bi * M * K;
        const double* Bm = bv.data() + (batched ? bi * K * N : 0);
        double* O = out.data() + bi * M * N;
        for (int64_t i = 0; i < M; ++i) {
            for (int64_t k = 0; k < K; ++k) {
                const double aik = A[i * K + k];
                if (aik == 0.0) continue;
                const double* Brow = Bm + k * N;
                double* Orow = O + i * N;
                for (int64_t j = 0; j < N; ++j) Orow[j] += aik * Brow[j];
            }
        }
    }

    Tape* tape = joint_tape(a, b);
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor r = result(std::move(out_shape), std::move(out), tape, rg);
    if (r.requires_grad()) {
        auto pa = a.handle(), pb = b.handle(), po = r.handle();
        tape->record([pa, pb, po, B, M, N, K, batched] {
            for (int64_t bi = 0; bi < B; ++bi) {
                const double* G = po->grad.data() + bi * M * N;
                const double* A = pa->value.data() + bi * M * K;
                const double* Bm = pb->value.data() + (batched ? bi * K * N : 0);
                if (pa->requires_grad) {
                    double* dA = pa->grad.data() + bi * M * K;
                    for (int64_t i = 0; i < M; ++i)
                        for (int64_t j = 0; j < N; ++j) {
                            const double g = G[i * N + j];
                            if (g == 0.0) continue;
                            const double* Bcol = Bm + j;
                            double* dArow = dA + i * K;
                            for (int64_t k = 0; k < K; ++k) dArow[k] += g * Bcol[k * N];
                        }
                }
                if (pb->requires_grad) {
                    double* dB = pb->grad.data() + (batched ? bi * K * N : 0);
                    for (int64_t i = 0; i < M; ++i)
                        for (int64_t k = 0; k < K; ++k) {
                            const double aik = A[i * K + k];
                            if (aik == 0.0) continue;
                            const double* Grow = G + i * N;
                            double* dBrow = dB + k * N;
                            for (int64_t j = 0; j < N; ++j) dBrow[j] += aik * Grow[j];
                        }
                }
            }
        });
    }
    return r;
}

// ---- layout ops --------------------------------------------------------

namespace {

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
    return st;
}

}  // namespace

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
    const Shape& s = a.shape();
    if (perm.size() != s.size()) throw std::invalid_argument("tensor: transpose: perm rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    Shape out_shape(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        int p = perm[i];
        if (p < 0 || p >= static_cast<int>(s.size()) || seen[static_cast<size_t>(p)])
            throw std::invalid_argument("tensor: transpose: invalid permutation");
        seen[static_cast<size_t>(p)] = true;
        out_shape[i] = s[static_cast<size_t>(p)];
    }

    auto in_strides = row_major_strides(s);
    auto out_strides = row_major_strides(out_shape);
    const int rank = static_cast<int>(s.size());
    const int64_t n = a.size();
    const auto av = a.value();
    std::vector<double> out(static_cast<size_t>(n));
    // out[idx] = in[map(idx)] where out axis i reads input axis perm[i]
    std::vector<int64_t> src_stride_for_out(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) src_stride_for_out[i] = in_strides[static_cast<size_t>(perm[i])];
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o, src = 0;
        for (int i = 0; i < rank; ++i) {
            int64_t idx = rem / out_strides[static_cast<size_t>(i)];
            rem %= out_strides[static_cast<size_t>(i)];
            src += idx * src_stride_for_out[static_cast<size_t>(i)];
        }
        out[static_cast<size_t>(o)] = av[static_cast<size_t>(src)];
    }

    Tape* tape = a.tape();
    Tensor r = result(std::move(out_shape), std::move(out), tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        auto ostr = row_major_strides(po->shape);
        tape->record([pa, po, src_stride_for_out, ostr, rank, n] {
            for (int64_t o = 0; o < n; ++o) {
                int64_t rem = o, src = 0;
                for (int i = 0; i < rank; ++i) {
                    int64_t idx = rem / ostr[static_cast<size_t>(i)];
                    rem %= ostr[static_cast<size_t>(i)];
                    src += idx * src_stride_for_out[static_cast<size_t>(i)];
                }
                pa->grad[static_cast<size_t>(src)] += po->grad[static_cast<size_t>(o)];
            }
        });
    }
    return r;
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    check_positive(new_shape, "reshape");
    if (shape_numel(new_shape) != a.size())
        shape_error("reshape", a.shape(), new_shape);
    std::vector<double> out(a.value().begin(), a.value().end());
    Tape* tape = a.tape();
    Tensor r = result(std::move(new_shape), std::move(out), tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        tape->record([pa, po] {
            for (size_t i = 0; i < po->grad.size(); ++i) pa->grad[i] += po->grad[i];
        });
    }
    return r;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("tensor: concat: no inputs");
    const Shape& s0 = parts[0].shape();
    Shape out_shape = s0;
    int total = 0;
    for (const Tensor& t : parts) {
        const Shape& s = t.shape();
        if (s.size() != s0.size()) shape_error("concat", s0, s);
        for (size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis && s[i] != s0[i]) shape_error("concat", s0, s);
        total += s[static_cast<size_t>(axis)];
    }
    out_shape[static_cast<size_t>(axis)] = total;

    AxisSplit os = split_axis(out_shape, axis);
    std::vector<double> out(static_cast<size_t>(os.outer * os.len * os.inner));
    int64_t offset = 0;
    for (const Tensor& t : parts) {
        AxisSplit ts = split_axis(t.shape(), axis);
        const auto tv = t.value();
        for (int64_t o = 0; o < ts.outer; ++o)
            for (int64_t i = 0; i < ts.len; ++i)
                std::copy_n(tv.data() + (o * ts.len + i) * ts.inner, ts.inner,
                            out.data() + (o * os.len + offset + i) * os.inner);
        offset += ts.len;
    }

    Tape* tape = nullptr;
    bool rg = false;
    for (const Tensor& t : parts) {
        if (!tape) tape = t.tape();
        rg = rg || t.requires_grad();
    }
    Tensor r = result(std::move(out_shape), std::move(out), tape, rg);
    if (r.requires_grad()) {
        std::vector<ImplPtr> srcs;
        for (const Tensor& t : parts) srcs.push_back(t.handle());
        auto po = r.handle();
        tape->record([srcs, po, os, axis] {
            int64_t off = 0;
            for (const auto& src : srcs) {
                AxisSplit ts = split_axis(src->shape, axis);
                if (src->requires_grad) {
                    for (int64_t o = 0; o < ts.outer; ++o)
                        for (int64_t i = 0; i < ts.len; ++i) {
                            const double* g = po->grad.data() + (o * os.len + off + i) * os.inner;
                            double* dst = src->grad.data() + (o * ts.len + i) * ts.inner;
                            for (int64_t j = 0; j < ts.inner; ++j) dst[j] += g[j];
                        }
                }
                off += ts.len;
            }
        });
    }
    return r;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    const Shape& s = a.shape();
    AxisSplit as = split_axis(s, axis);
    if (start < 0 || len <= 0 || start + len > as.len)
        throw std::invalid_argument("tensor: slice: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") outside axis of extent " +
                                    std::to_string(as.len));
    Shape out_shape = s;
    out_shape[static_cast<size_t>(axis)] = len;
    const auto av = a.value();
    std::vector<double> out(static_cast<size_t>(as.outer * len * as.inner));
    for (int64_t o = 0; o < as.outer; ++o)
        for (int64_t i = 0; i < len; ++i)
            std::copy_n(av.data() + (o * as.len + start + i) * as.inner, as.inner,
                        out.data() + (o * len + i) * as.inner);

    Tape* tape = a.tape();
    Tensor r = result(std::move(out_shape), std::move(out), tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        tape->record([pa, po, as, start, len] {
            for (int64_t o = 0; o < as.outer; ++o)
                for (int64_t i = 0; i < len; ++i) {
                    const double* g = po->grad.data() + (o * len + i) * as.inner;
                    double* dst = pa->grad.data() + (o * as.len + start + i) * as.inner;
                    for (int64_t j = 0; j < as.inner; ++j) dst[j] += g[j];
                }
        });
    }
    return r;
}

// ---- nonlinearities ----------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
    AxisSplit as = split_axis(a.shape(), axis);
    const auto av = a.value();
    std::vector<double> out(av.size());
    for (int64_t o = 0; o < as.outer; ++o)
        for (int64_t j = 0; j < as.inner; ++j) {
            const int64_t base = o * as.len * as.inner + j;
            double mx = -1e300;
            for (int64_t i = 0; i < as.len; ++i) mx = std::max(mx, av[static_cast<size_t>(base + i * as.inner)]);
            double sum = 0.0;
            for (int64_t i = 0; i < as.len; ++i) {
                double e = std::exp(av[static_cast<size_t>(base + i * as.inner)] - mx);
                out[static_cast<size_t>(base + i * as.inner)] = e;
                sum += e;
            }
            for (int64_t i = 0; i < as.len; ++i) out[static_cast<size_t>(base + i * as.inner)] /= sum;
        }

    Tape* tape = a.tape();
    Tensor r = result(a.shape(), std::move(out), tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        tape->record([pa, po, as] {
            for (int64_t o = 0; o < as.outer; ++o)
                for (int64_t j = 0; j < as.inner; ++j) {
                    const int64_t base = o * as.len * as.inner + j;
                    double dot = 0.0;
                    for (int64_t i = 0; i < as.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * as.inner);
                        dot += po->grad[idx] * po->value[idx];
                    }
                    for (int64_t i = 0; i < as.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * as.inner);
                        pa->grad[idx] += po->value[idx] * (po->grad[idx] - dot);
                    }
                }
        });
    }
    return r;
}

Tensor layer_norm(const Tensor& a, int axis, double eps) {
    AxisSplit as = split_axis(a.shape(), axis);
    const auto av = a.value();
    std::vector<double> out(av.size());
    std::vector<double> inv_std(static_cast<size_t>(as.outer * as.inner));
    for (int64_t o = 0; o < as.outer; ++o)
        for (int64_t j = 0; j < as.inner; ++j) {
            const int64_t base = o * as.len * as.inner + j;
            double mean = 0.0;
            for (int64_t i = 0; i < as.len; ++i) mean += av[static_cast<size_t>(base + i * as.inner)];
            mean /= static_cast<double>(as.len);
            double var = 0.0;
            for (int64_t i = 0; i < as.len; ++i) {
                double d = av[static_cast<size_t>(base + i * as.inner)] - mean;
                var += d * d;
            }
            var /= static_cast<double>(as.len);
            double is = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(o * as.inner + j)] = is;
            for (int64_t i = 0; i < as.len; ++i) {
                size_t idx = static_cast<size_t>(base + i * as.inner);
                out[idx] = (av[idx] - mean) * is;
            }
        }

    Tape* tape = a.tape();
    Tensor r = result(a.shape(), std::move(out), tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        auto istd = std::make_shared<std::vector<double>>(std::move(inv_std));
        tape->record([pa, po, as, istd] {
            for (int64_t o = 0; o < as.outer; ++o)
                for (int64_t j = 0; j < as.inner; ++j) {
                    const int64_t base = o * as.len * as.inner + j;
                    const double is = (*istd)[static_cast<size_t>(o * as.inner + j)];
                    double gmean = 0.0, gymean = 0.0;
                    for (int64_t i = 0; i < as.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * as.inner);
                        gmean += po->grad[idx];
                        gymean += po->grad[idx] * po->value[idx];
                    }
                    gmean /= static_cast<double>(as.len);
                    gymean /= static_cast<double>(as.len);
                    for (int64_t i = 0; i < as.len; ++i) {
                        size_t idx = static_cast<size_t>(base + i * as.inner);
                        pa->grad[idx] += is * (po->grad[idx] - gmean - po->value[idx] * gymean);
                    }
                }
        });
    }
    return r;
}

namespace {

template <class Fwd, class Deriv>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Deriv deriv) {
    const auto av = a.value();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    Tape* tape = a.tape();
    Tensor r = result(a.shape(), std::move(out), tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        tape->record([pa, po, deriv] {
            for (size_t i = 0; i < po->grad.size(); ++i)
                pa->grad[i] += po->grad[i] * deriv(pa->value[i], po->value[i]);
        });
    }
    return r;
}

}  // namespace

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary_elementwise(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) {
            double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        });
}

Tensor sigmoid(const Tensor& a) {
    return unary_elementwise(
        a,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor linear_interp_resize(const Tensor& a, int axis, int new_len) {
    if (new_len <= 0) throw std::invalid_argument("tensor: linear_interp_resize: new_len must be positive");
    AxisSplit as = split_axis(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = new_len;

    // Source coordinate per output index; endpoints map to endpoints.
    struct Tap {
        int64_t i0, i1;
        double w0, w1;
    };
    std::vector<Tap> taps(static_cast<size_t>(new_len));
    for (int j = 0; j < new_len; ++j) {
        double src = (new_len == 1) ? (static_cast<double>(as.len) - 1.0) / 2.0
                                    : static_cast<double>(j) * (static_cast<double>(as.len) - 1.0) /
                                          (static_cast<double>(new_len) - 1.0);
        int64_t i0 = static_cast<int64_t>(std::floor(src));
        i0 = std::min(i0, as.len - 1);
        int64_t i1 = std::min(i0 + 1, as.len - 1);
        double w1 = src - static_cast<double>(i0);
        taps[static_cast<size_t>(j)] = {i0, i1, 1.0 - w1, w1};
    }

    const auto av = a.value();
    std::vector<double> out(static_cast<size_t>(as.outer * new_len * as.inner));
    for (int64_t o = 0; o < as.outer; ++o)
        for (int j = 0; j < new_len; ++j) {
            const Tap& t = taps[static_cast<size_t>(j)];
            const double* s0 = av.data() + (o * as.len + t.i0) * as.inner;
            const double* s1 = av.data() + (o * as.len + t.i1) * as.inner;
            double* dst = out.data() + (o * new_len + j) * as.inner;
            for (int64_t q = 0; q < as.inner; ++q) dst[q] = t.w0 * s0[q] + t.w1 * s1[q];
        }

    Tape* tape = a.tape();
    Tensor r = result(std::move(out_shape), std::move(out), tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        auto taps_p = std::make_shared<std::vector<Tap>>(std::move(taps));
        tape->record([pa, po, as, new_len, taps_p] {
            for (int64_t o = 0; o < as.outer; ++o)
                for (int j = 0; j < new_len; ++j) {
                    const Tap& t = (*taps_p)[static_cast<size_t>(j)];
                    const double* g = po->grad.data() + (o * new_len + j) * as.inner;
                    double* d0 = pa->grad.data() + (o * as.len + t.i0) * as.inner;
                    double* d1 = pa->grad.data() + (o * as.len + t.i1) * as.inner;
                    for (int64_t q = 0; q < as.inner; ++q) {
                        d0[q] += t.w0 * g[q];
                        d1[q] += t.w1 * g[q];
                    }
                }
        });
    }
    return r;
}

// ---- reductions --------------------------------------------------------

Tensor reduce_sum(const Tensor& a) {
    const auto av = a.value();
    double s = 0.0;
    for (double v : av) s += v;
    Tape* tape = a.tape();
    Tensor r = result({1}, {s}, tape, a.requires_grad());
    if (r.requires_grad()) {
        auto pa = a.handle();
        auto po = r.handle();
        tape->record([pa, po] {
            const double g = po->grad[0];
            for (size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
        });
    }
    return r;
}

Tensor reduce_mean(const Tensor& a) {
    return scale(reduce_sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("mse_loss", a.shape(), b.shape());
    const auto av = a.value();
    const auto bv = b.value();
    double s = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        s += d * d;
    }
    s /= static_cast<double>(av.size());
    Tape* tape = joint_tape(a, b);
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor r = result({1}, {s}, tape, rg);
    if (r.requires_grad()) {
        auto pa = a.handle(), pb = b.handle(), po = r.handle();
        tape->record([pa, pb, po] {
            const double g = po->grad[0] * 2.0 / static_cast<double>(pa->value.size());
            for (size_t i = 0; i < pa->value.size(); ++i) {
                double d = g * (pa->value[i] - pb->value[i]);
                if (pa->requires_grad) pa->grad[i] += d;
                if (pb->requires_grad) pb->grad[i] -= d;
            }
        });
    }
    return r;
}

// ---- optimizer ---------------------------------------------------------

bool adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg, double lr) {
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (size_t p = 0; p < params.size(); ++p) {
            state.m[p].assign(static_cast<size_t>(params[p].size()), 0.0);
            state.v[p].assign(static_cast<size_t>(params[p].size()), 0.0);
        }
    }
    for (auto& t : params)
        for (double g : t.grad())
            if (!std::isfinite(g)) return false;

    state.step += 1;
    const double b1c = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double b2c = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t p = 0; p < params.size(); ++p) {
        auto val = params[p].raw_value();
        auto grd = params[p].grad();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (size_t i = 0; i < val.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grd[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grd[i] * grd[i];
            const double mhat = m[i] / b1c;
            const double vhat = v[i] / b2c;
            val[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    return true;
}

}  // namespace vigil
