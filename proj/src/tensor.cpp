#include "txgnn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "txgnn/errors.hpp"

namespace txgnn::ad {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenRowMajor>;
using ConstMatMap = Eigen::Map<const EigenRowMajor>;

const char* reduce_name(Reduce r) {
    switch (r) {
        case Reduce::sum: return "sum";
        case Reduce::mean: return "mean";
        case Reduce::max: return "max";
        case Reduce::min: return "min";
    }
    return "?";
}

Reduce reduce_from_name(const std::string& s) {
    if (s == "sum") return Reduce::sum;
    if (s == "mean") return Reduce::mean;
    if (s == "max") return Reduce::max;
    if (s == "min") return Reduce::min;
    throw ConfigError("unknown reducer '" + s + "' (expected sum|mean|min|max)");
}

std::string shape_str(const std::vector<std::int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

namespace {

std::int64_t shape_size(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d < 0) throw DimensionError("negative extent in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

NodePtr make_leaf(std::vector<std::int64_t> shape, std::vector<double> values, bool rg) {
    if (shape_size(shape) != static_cast<std::int64_t>(values.size()))
        throw DimensionError("shape " + shape_str(shape) + " does not match value count " +
                             std::to_string(values.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = rg;
    n->is_leaf = true;
    return n;
}

NodePtr make_op(const char* op, std::vector<std::int64_t> shape, std::vector<double> values,
                std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->op = op;
    n->is_leaf = false;
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

const Node& deref(const Tensor& t) {
    if (!t.valid()) throw ContractError("operation on a null tensor");
    return *t.node();
}

void check_same_shape(const char* op, const Node& a, const Node& b) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
}

void check_rank2(const char* op, const Node& a) {
    if (a.shape.size() != 2)
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape));
}

void ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

void check_finite(const char* op, const Node& n) {
    for (double v : n.value)
        if (!std::isfinite(v))
            throw DomainError(std::string(op) + ": produced a non-finite value");
}

} // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::param(std::vector<std::int64_t> shape, std::vector<double> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::constant(std::vector<std::int64_t> shape, std::vector<double> values) {
    return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    const auto n = shape_size(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(make_leaf({1}, {v}, requires_grad));
}

const std::vector<std::int64_t>& Tensor::shape() const { return deref(*this).shape; }

std::int64_t Tensor::size() const { return deref(*this).size(); }

std::int64_t Tensor::rows() const {
    const auto& n = deref(*this);
    if (n.shape.size() != 2) throw DimensionError("rows(): tensor is " + shape_str(n.shape));
    return n.shape[0];
}

std::int64_t Tensor::cols() const {
    const auto& n = deref(*this);
    if (n.shape.size() != 2) throw DimensionError("cols(): tensor is " + shape_str(n.shape));
    return n.shape[1];
}

std::span<const double> Tensor::values() const { return deref(*this).value; }

std::span<double> Tensor::values_mut() {
    if (!valid()) throw ContractError("values_mut on a null tensor");
    if (!node_->is_leaf) throw ContractError("values_mut: only leaf tensors are mutable");
    return node_->value;
}

bool Tensor::requires_grad() const { return deref(*this).requires_grad; }

bool Tensor::has_grad() const { return valid() && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad(): no gradient present; call backward() first");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (valid()) node_->grad.clear();
}

double Tensor::item() const {
    const auto& n = deref(*this);
    if (n.size() != 1) throw ContractError("item(): tensor is not scalar, shape " + shape_str(n.shape));
    return n.value[0];
}

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& at, const Tensor& bt) {
    const auto& a = deref(at);
    const auto& b = deref(bt);
    check_rank2("matmul", a);
    check_rank2("matmul", b);
    if (a.shape[1] != b.shape[0])
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    std::vector<double> out(static_cast<std::size_t>(m * n));
    {
        ConstMatMap ma(a.value.data(), m, k), mb(b.value.data(), k, n);
        MatMap mc(out.data(), m, n);
        mc.noalias() = ma * mb;
    }
    auto node = make_op("matmul", {m, n}, std::move(out), {at.node(), bt.node()});
    check_finite("matmul", *node);
    if (node->requires_grad) {
        auto pa = at.node(), pb = bt.node();
        node->backward = [pa, pb, m, k, n](Node& self) {
            ConstMatMap dc(self.grad.data(), m, n);
            ConstMatMap ma(pa->value.data(), m, k), mb(pb->value.data(), k, n);
            if (pa->requires_grad) {
                ensure_grad(*pa);
                MatMap da(pa->grad.data(), m, k);
                da.noalias() += dc * mb.transpose();
            }
            if (pb->requires_grad) {
                ensure_grad(*pb);
                MatMap db(pb->grad.data(), k, n);
                db.noalias() += ma.transpose() * dc;
            }
        };
    }
    return Tensor(node);
}

// ---- elementwise binary ----------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& at, const Tensor& bt, Fwd fwd, Bwd bwd) {
    const auto& a = deref(at);
    const auto& b = deref(bt);
    check_same_shape(name, a, b);
    std::vector<double> out(a.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.value[i], b.value[i]);
    auto node = make_op(name, a.shape, std::move(out), {at.node(), bt.node()});
    if (node->requires_grad) {
        auto pa = at.node(), pb = bt.node();
        node->backward = [pa, pb, bwd](Node& self) {
            const bool ga = pa->requires_grad, gb = pb->requires_grad;
            if (ga) ensure_grad(*pa);
            if (gb) ensure_grad(*pb);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bwd(self.grad[i], pa->value[i], pb->value[i], ga ? &pa->grad[i] : nullptr,
                    gb ? &pb->grad[i] : nullptr);
        };
    }
    return Tensor(node);
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double g, double, double, double* gx, double* gy) {
            if (gx) *gx += g;
            if (gy) *gy += g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double g, double, double, double* gx, double* gy) {
            if (gx) *gx += g;
            if (gy) *gy -= g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double g, double x, double y, double* gx, double* gy) {
            if (gx) *gx += g * y;
            if (gy) *gy += g * x;
        });
}

Tensor add_row_bias(const Tensor& tt, const Tensor& bt) {
    const auto& t = deref(tt);
    const auto& b = deref(bt);
    check_rank2("add_row_bias", t);
    if (b.shape.size() != 1 || b.shape[0] != t.shape[1])
        throw DimensionError("add_row_bias: bias " + shape_str(b.shape) + " incompatible with " +
                             shape_str(t.shape));
    const std::int64_t m = t.shape[0], n = t.shape[1];
    std::vector<double> out(t.value.size());
    for (std::int64_t r = 0; r < m; ++r)
        for (std::int64_t c = 0; c < n; ++c) out[r * n + c] = t.value[r * n + c] + b.value[c];
    auto node = make_op("add_row_bias", t.shape, std::move(out), {tt.node(), bt.node()});
    if (node->requires_grad) {
        auto pt = tt.node(), pb = bt.node();
        node->backward = [pt, pb, m, n](Node& self) {
            if (pt->requires_grad) {
                ensure_grad(*pt);
                for (std::size_t i = 0; i < self.grad.size(); ++i) pt->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                ensure_grad(*pb);
                for (std::int64_t r = 0; r < m; ++r)
                    for (std::int64_t c = 0; c < n; ++c) pb->grad[c] += self.grad[r * n + c];
            }
        };
    }
    return Tensor(node);
}

// ---- elementwise unary -----------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& tt, Fwd fwd, Bwd bwd) {
    const auto& t = deref(tt);
    std::vector<double> out(t.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(t.value[i], i);
    auto node = make_op(name, t.shape, std::move(out), {tt.node()});
    if (node->requires_grad) {
        auto p = tt.node();
        node->backward = [p, bwd](Node& self) {
            ensure_grad(*p);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                p->grad[i] += bwd(self.grad[i], p->value[i], self.value[i]);
        };
    }
    return Tensor(node);
}

} // namespace

Tensor relu(const Tensor& t) {
    return unary_op(
        "relu", t, [](double x, std::size_t) { return x > 0.0 ? x : 0.0; },
        [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Tensor exp(const Tensor& t) {
    auto r = unary_op(
        "exp", t, [](double x, std::size_t) { return std::exp(x); },
        [](double g, double, double y) { return g * y; });
    check_finite("exp", *r.node());
    return r;
}

Tensor log(const Tensor& t) {
    return unary_op(
        "log", t,
        [](double x, std::size_t i) {
            if (!(x > 0.0))
                throw DomainError("log: non-positive input " + std::to_string(x) + " at index " +
                                  std::to_string(i));
            return std::log(x);
        },
        [](double g, double x, double) { return g / x; });
}

Tensor sqrt(const Tensor& t) {
    return unary_op(
        "sqrt", t,
        [](double x, std::size_t i) {
            if (!(x > 0.0))
                throw DomainError("sqrt: non-positive input " + std::to_string(x) + " at index " +
                                  std::to_string(i));
            return std::sqrt(x);
        },
        [](double g, double, double y) { return g * 0.5 / y; });
}

Tensor scale(const Tensor& t, double c) {
    return unary_op(
        "scale", t, [c](double x, std::size_t) { return c * x; },
        [c](double g, double, double) { return c * g; });
}

Tensor add_const(const Tensor& t, double c) {
    return unary_op(
        "add_const", t, [c](double x, std::size_t) { return x + c; },
        [](double g, double, double) { return g; });
}

Tensor scale_by_scalar(const Tensor& tt, const Tensor& st) {
    const auto& t = deref(tt);
    const auto& s = deref(st);
    if (s.size() != 1)
        throw DimensionError("scale_by_scalar: scale must be a scalar, got " + shape_str(s.shape));
    const double sv = s.value[0];
    std::vector<double> out(t.value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * t.value[i];
    auto node = make_op("scale_by_scalar", t.shape, std::move(out), {tt.node(), st.node()});
    if (node->requires_grad) {
        auto pt = tt.node(), ps = st.node();
        node->backward = [pt, ps, sv](Node& self) {
            if (pt->requires_grad) {
                ensure_grad(*pt);
                for (std::size_t i = 0; i < self.grad.size(); ++i) pt->grad[i] += sv * self.grad[i];
            }
            if (ps->requires_grad) {
                ensure_grad(*ps);
                double acc = 0.0;
                for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pt->value[i];
                ps->grad[0] += acc;
            }
        };
    }
    return Tensor(node);
}

// ---- reductions ------------------------------------------------------------

Tensor reduce_all(const Tensor& tt, Reduce kind) {
    const auto& t = deref(tt);
    const std::int64_t n = t.size();
    if (n == 0) throw EmptyReductionError("reduce_all: empty tensor");
    double acc;
    std::int64_t arg = 0;
    switch (kind) {
        case Reduce::sum:
        case Reduce::mean: {
            acc = 0.0;
            for (double v : t.value) acc += v;
            if (kind == Reduce::mean) acc /= static_cast<double>(n);
            break;
        }
        case Reduce::max: {
            acc = t.value[0];
            for (std::int64_t i = 1; i < n; ++i)
                if (t.value[i] > acc) acc = t.value[i], arg = i;
            break;
        }
        case Reduce::min: {
            acc = t.value[0];
            for (std::int64_t i = 1; i < n; ++i)
                if (t.value[i] < acc) acc = t.value[i], arg = i;
            break;
        }
    }
    auto node = make_op("reduce_all", {1}, {acc}, {tt.node()});
    if (node->requires_grad) {
        auto p = tt.node();
        node->backward = [p, kind, n, arg](Node& self) {
            ensure_grad(*p);
            const double g = self.grad[0];
            switch (kind) {
                case Reduce::sum:
                    for (auto& gv : p->grad) gv += g;
                    break;
                case Reduce::mean: {
                    const double s = g / static_cast<double>(n);
                    for (auto& gv : p->grad) gv += s;
                    break;
                }
                case Reduce::max:
                case Reduce::min:
                    p->grad[arg] += g;
                    break;
            }
        };
    }
    return Tensor(node);
}

Tensor reduce_axis(const Tensor& tt, int axis, Reduce kind) {
    const auto& t = deref(tt);
    check_rank2("reduce_axis", t);
    if (axis != 0 && axis != 1) throw DimensionError("reduce_axis: axis must be 0 or 1");
    const std::int64_t m = t.shape[0], n = t.shape[1];
    const std::int64_t reduced = axis == 0 ? m : n;
    const std::int64_t kept = axis == 0 ? n : m;
    if (reduced == 0)
        throw EmptyReductionError("reduce_axis: axis " + std::to_string(axis) + " has length 0");

    std::vector<double> out(kept, 0.0);
    std::vector<std::int64_t> arg(kind == Reduce::max || kind == Reduce::min ? kept : 0, 0);
    auto at = [&](std::int64_t i, std::int64_t k) { return axis == 0 ? t.value[i * n + k] : t.value[k * n + i]; };
    for (std::int64_t k = 0; k < kept; ++k) {
        double acc = at(0, k);
        std::int64_t a = 0;
        for (std::int64_t i = 1; i < reduced; ++i) {
            const double v = at(i, k);
            switch (kind) {
                case Reduce::sum:
                case Reduce::mean: acc += v; break;
                case Reduce::max:
                    if (v > acc) acc = v, a = i;
                    break;
                case Reduce::min:
                    if (v < acc) acc = v, a = i;
                    break;
            }
        }
        if (kind == Reduce::mean) acc /= static_cast<double>(reduced);
        out[k] = acc;
        if (!arg.empty()) arg[k] = a;
    }
    auto node = make_op("reduce_axis", {kept}, std::move(out), {tt.node()});
    if (node->requires_grad) {
        auto p = tt.node();
        node->backward = [p, kind, axis, m, n, reduced, kept, arg](Node& self) {
            ensure_grad(*p);
            auto gslot = [&](std::int64_t i, std::int64_t k) -> double& {
                return axis == 0 ? p->grad[i * n + k] : p->grad[k * n + i];
            };
            for (std::int64_t k = 0; k < kept; ++k) {
                const double g = self.grad[k];
                switch (kind) {
                    case Reduce::sum:
                        for (std::int64_t i = 0; i < reduced; ++i) gslot(i, k) += g;
                        break;
                    case Reduce::mean: {
                        const double s = g / static_cast<double>(reduced);
                        for (std::int64_t i = 0; i < reduced; ++i) gslot(i, k) += s;
                        break;
                    }
                    case Reduce::max:
                    case Reduce::min: gslot(arg[k], k) += g; break;
                }
            }
        };
    }
    return Tensor(node);
}

// ---- softmax ----------------------------------------------------------------

Tensor softmax_rows(const Tensor& tt, std::span<const std::uint8_t> mask) {
    const auto& t = deref(tt);
    check_rank2("softmax_rows", t);
    const std::int64_t m = t.shape[0], n = t.shape[1];
    if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != m * n)
        throw DimensionError("softmax_rows: mask size " + std::to_string(mask.size()) +
                             " does not match tensor " + shape_str(t.shape));
    auto valid = [&](std::int64_t r, std::int64_t c) {
        return mask.empty() || mask[static_cast<std::size_t>(r * n + c)] != 0;
    };
    std::vector<double> out(t.value.size(), 0.0);
    for (std::int64_t r = 0; r < m; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < n; ++c)
            if (valid(r, c)) mx = std::max(mx, t.value[r * n + c]);
        if (!std::isfinite(mx))
            throw EmptyReductionError("softmax_rows: fully masked row " + std::to_string(r));
        double denom = 0.0;
        for (std::int64_t c = 0; c < n; ++c)
            if (valid(r, c)) {
                const double e = std::exp(t.value[r * n + c] - mx);
                out[r * n + c] = e;
                denom += e;
            }
        for (std::int64_t c = 0; c < n; ++c)
            if (valid(r, c)) out[r * n + c] /= denom;
    }
    auto node = make_op("softmax_rows", t.shape, std::move(out), {tt.node()});
    if (node->requires_grad) {
        auto p = tt.node();
        std::vector<std::uint8_t> mask_copy(mask.begin(), mask.end());
        node->backward = [p, m, n, mask_copy](Node& self) {
            ensure_grad(*p);
            auto valid = [&](std::int64_t r, std::int64_t c) {
                return mask_copy.empty() || mask_copy[static_cast<std::size_t>(r * n + c)] != 0;
            };
            for (std::int64_t r = 0; r < m; ++r) {
                double dot = 0.0;
                for (std::int64_t c = 0; c < n; ++c)
                    if (valid(r, c)) dot += self.grad[r * n + c] * self.value[r * n + c];
                for (std::int64_t c = 0; c < n; ++c)
                    if (valid(r, c))
                        p->grad[r * n + c] += self.value[r * n + c] * (self.grad[r * n + c] - dot);
            }
        };
    }
    return Tensor(node);
}

// ---- segment aggregate -------------------------------------------------------

SegmentResult segment_aggregate(const Tensor& vt, std::span<const std::int32_t> ids,
                                std::int64_t num_segments, Reduce kind) {
    const auto& v = deref(vt);
    check_rank2("segment_aggregate", v);
    const std::int64_t e = v.shape[0], d = v.shape[1];
    if (static_cast<std::int64_t>(ids.size()) != e)
        throw DimensionError("segment_aggregate: " + std::to_string(ids.size()) + " ids for " +
                             std::to_string(e) + " rows");
    if (num_segments < 0) throw DimensionError("segment_aggregate: negative segment count");
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] < 0 || ids[i] >= num_segments)
            throw IndexError("segment_aggregate: segment id " + std::to_string(ids[i]) +
                             " out of range [0," + std::to_string(num_segments) + ") at row " +
                             std::to_string(i));

    std::vector<double> out(static_cast<std::size_t>(num_segments * d), 0.0);
    std::vector<std::int64_t> count(num_segments, 0);
    const bool extremal = kind == Reduce::max || kind == Reduce::min;
    std::vector<std::int64_t> arg(extremal ? static_cast<std::size_t>(num_segments * d) : 0, -1);

    for (std::int64_t r = 0; r < e; ++r) {
        const std::int64_t s = ids[r];
        const bool first = count[s] == 0;
        ++count[s];
        for (std::int64_t c = 0; c < d; ++c) {
            const double x = v.value[r * d + c];
            double& slot = out[s * d + c];
            switch (kind) {
                case Reduce::sum:
                case Reduce::mean: slot += x; break;
                case Reduce::max:
                    if (first || x > slot) slot = x, arg[s * d + c] = r;
                    break;
                case Reduce::min:
                    if (first || x < slot) slot = x, arg[s * d + c] = r;
                    break;
            }
        }
    }
    std::vector<std::uint8_t> empty(num_segments, 0);
    for (std::int64_t s = 0; s < num_segments; ++s) {
        if (count[s] == 0) {
            empty[s] = 1;
        } else if (kind == Reduce::mean) {
            for (std::int64_t c = 0; c < d; ++c) out[s * d + c] /= static_cast<double>(count[s]);
        }
    }

    auto node = make_op("segment_aggregate", {num_segments, d}, std::move(out), {vt.node()});
    if (node->requires_grad) {
        auto p = vt.node();
        std::vector<std::int32_t> ids_copy(ids.begin(), ids.end());
        node->backward = [p, ids_copy, kind, d, count, arg](Node& self) {
            ensure_grad(*p);
            switch (kind) {
                case Reduce::sum:
                    for (std::size_t r = 0; r < ids_copy.size(); ++r)
                        for (std::int64_t c = 0; c < d; ++c)
                            p->grad[r * d + c] += self.grad[ids_copy[r] * d + c];
                    break;
                case Reduce::mean:
                    for (std::size_t r = 0; r < ids_copy.size(); ++r) {
                        const double inv = 1.0 / static_cast<double>(count[ids_copy[r]]);
                        for (std::int64_t c = 0; c < d; ++c)
                            p->grad[r * d + c] += inv * self.grad[ids_copy[r] * d + c];
                    }
                    break;
                case Reduce::max:
                case Reduce::min:
                    for (std::size_t s = 0; s < count.size(); ++s) {
                        if (count[s] == 0) continue;
                        for (std::int64_t c = 0; c < d; ++c) {
                            const std::int64_t r = arg[s * d + c];
                            p->grad[r * d + c] += self.grad[s * d + c];
                        }
                    }
                    break;
            }
        };
    }
    return SegmentResult{Tensor(node), std::move(empty)};
}

// ---- gather / concat / row scale ---------------------------------------------

Tensor gather_rows(const Tensor& tt, std::span<const std::int32_t> idx) {
    const auto& t = deref(tt);
    check_rank2("gather_rows", t);
    const std::int64_t n = t.shape[0], d = t.shape[1];
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (idx[i] < 0 || idx[i] >= n)
            throw IndexError("gather_rows: row index " + std::to_string(idx[i]) + " out of range [0," +
                             std::to_string(n) + ")");
    const std::int64_t m = static_cast<std::int64_t>(idx.size());
    std::vector<double> out(static_cast<std::size_t>(m * d));
    for (std::int64_t r = 0; r < m; ++r)
        std::copy_n(t.value.begin() + idx[r] * d, d, out.begin() + r * d);
    auto node = make_op("gather_rows", {m, d}, std::move(out), {tt.node()});
    if (node->requires_grad) {
        auto p = tt.node();
        std::vector<std::int32_t> idx_copy(idx.begin(), idx.end());
        node->backward = [p, idx_copy, d](Node& self) {
            ensure_grad(*p);
            for (std::size_t r = 0; r < idx_copy.size(); ++r)
                for (std::int64_t c = 0; c < d; ++c)
                    p->grad[idx_copy[r] * d + c] += self.grad[r * d + c];
        };
    }
    return Tensor(node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no tensors given");
    const std::int64_t m = deref(parts[0]).shape.size() == 2 ? deref(parts[0]).shape[0] : -1;
    std::int64_t total = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        const auto& n = deref(p);
        check_rank2("concat_cols", n);
        if (n.shape[0] != m)
            throw DimensionError("concat_cols: row count mismatch " + shape_str(deref(parts[0]).shape) +
                                 " vs " + shape_str(n.shape));
        total += n.shape[1];
        parents.push_back(p.node());
    }
    std::vector<double> out(static_cast<std::size_t>(m * total));
    std::int64_t off = 0;
    for (const auto& pn : parents) {
        const std::int64_t d = pn->shape[1];
        for (std::int64_t r = 0; r < m; ++r)
            std::copy_n(pn->value.begin() + r * d, d, out.begin() + r * total + off);
        off += d;
    }
    auto node = make_op("concat_cols", {m, total}, std::move(out), parents);
    if (node->requires_grad) {
        node->backward = [m, total](Node& self) {
            std::int64_t off = 0;
            for (auto& pn : self.parents) {
                const std::int64_t d = pn->shape[1];
                if (pn->requires_grad) {
                    ensure_grad(*pn);
                    for (std::int64_t r = 0; r < m; ++r)
                        for (std::int64_t c = 0; c < d; ++c)
                            pn->grad[r * d + c] += self.grad[r * total + off + c];
                }
                off += d;
            }
        };
    }
    return Tensor(node);
}

Tensor scale_rows(const Tensor& tt, std::span<const double> factors) {
    const auto& t = deref(tt);
    check_rank2("scale_rows", t);
    const std::int64_t m = t.shape[0], d = t.shape[1];
    if (static_cast<std::int64_t>(factors.size()) != m)
        throw DimensionError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                             std::to_string(m) + " rows");
    std::vector<double> out(t.value.size());
    for (std::int64_t r = 0; r < m; ++r)
        for (std::int64_t c = 0; c < d; ++c) out[r * d + c] = factors[r] * t.value[r * d + c];
    auto node = make_op("scale_rows", t.shape, std::move(out), {tt.node()});
    if (node->requires_grad) {
        auto p = tt.node();
        std::vector<double> f(factors.begin(), factors.end());
        node->backward = [p, f, d](Node& self) {
            ensure_grad(*p);
            for (std::size_t r = 0; r < f.size(); ++r)
                for (std::int64_t c = 0; c < d; ++c)
                    p->grad[r * d + c] += f[r] * self.grad[r * d + c];
        };
    }
    return Tensor(node);
}

// ---- cross entropy -----------------------------------------------------------

Tensor cross_entropy_with_logits(const Tensor& lt, std::span<const std::int32_t> labels,
                                 std::span<const double> class_weights) {
    const auto& l = deref(lt);
    check_rank2("cross_entropy_with_logits", l);
    const std::int64_t n = l.shape[0], c = l.shape[1];
    if (n == 0) throw ContractError("cross_entropy_with_logits: empty prediction set");
    if (static_cast<std::int64_t>(labels.size()) != n)
        throw DimensionError("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(n) + " rows");
    if (!class_weights.empty() && static_cast<std::int64_t>(class_weights.size()) != c)
        throw DimensionError("cross_entropy_with_logits: class weight count mismatch");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= c)
            throw ContractError("cross_entropy_with_logits: label " + std::to_string(labels[i]) +
                                " out of range [0," + std::to_string(c) + ") at row " +
                                std::to_string(i));

    std::vector<double> probs(l.value.size());
    double loss = 0.0, wsum = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
        const double* row = l.value.data() + r * c;
        double mx = row[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::int64_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const double lse = mx + std::log(denom);
        for (std::int64_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(row[j] - lse);
        const double w = class_weights.empty() ? 1.0 : class_weights[labels[r]];
        loss += w * (lse - row[labels[r]]);
        wsum += w;
    }
    loss /= wsum;

    auto node = make_op("cross_entropy", {1}, {loss}, {lt.node()});
    check_finite("cross_entropy", *node);
    if (node->requires_grad) {
        auto p = lt.node();
        std::vector<std::int32_t> lab(labels.begin(), labels.end());
        std::vector<double> cw(class_weights.begin(), class_weights.end());
        node->backward = [p, lab, cw, probs, n, c, wsum](Node& self) {
            ensure_grad(*p);
            const double g = self.grad[0] / wsum;
            for (std::int64_t r = 0; r < n; ++r) {
                const double w = cw.empty() ? 1.0 : cw[lab[r]];
                for (std::int64_t j = 0; j < c; ++j) {
                    const double onehot = j == lab[r] ? 1.0 : 0.0;
                    p->grad[r * c + j] += g * w * (probs[r * c + j] - onehot);
                }
            }
        };
    }
    return Tensor(node);
}

// ---- backward -----------------------------------------------------------------

void backward(const Tensor& loss) {
    const auto& root = deref(loss);
    if (root.size() != 1)
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(root.shape));
    if (!root.requires_grad) return; // nothing reachable requires a gradient

    // Iterative post-order DFS over the requires_grad subgraph.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    // Fresh interior accumulators; leaf accumulators persist across calls.
    for (Node* n : topo) {
        if (n->is_leaf) {
            ensure_grad(*n);
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    topo.back()->grad[0] += 1.0; // d loss / d loss

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

} // namespace txgnn::ad
