#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace txgnn::ad {

enum class Reduce { sum, mean, max, min };

const char* reduce_name(Reduce r);
Reduce reduce_from_name(const std::string& s);

namespace detail {

struct Node {
    std::vector<std::int64_t> shape;
    std::vector<double> value;
    std::vector<double> grad; // same shape as value once allocated
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad, accumulates into parents' grads. Null for leaves.
    std::function<void(Node&)> backward;

    std::int64_t size() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

} // namespace detail

/// Dense double-precision tensor participating in a reverse-mode
/// differentiation graph. Value-semantics handle; the underlying storage is
/// immutable after the tensor is consumed by an operation (grad accumulators
/// are the only mutable part). Rank is 1 or 2; scalars are shape {1}.
class Tensor {
public:
    Tensor() = default;

    /// Leaf with requires_grad set (a trainable parameter).
    static Tensor param(std::vector<std::int64_t> shape, std::vector<double> values);
    /// Leaf without gradient tracking.
    static Tensor constant(std::vector<std::int64_t> shape, std::vector<double> values);
    static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool valid() const { return node_ != nullptr; }
    const std::vector<std::int64_t>& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    std::int64_t size() const;
    std::int64_t rows() const; // rank-2 only
    std::int64_t cols() const; // rank-2 only
    bool is_scalar() const { return size() == 1; }

    std::span<const double> values() const;
    /// Mutable access to a leaf's storage (optimizer updates between graph
    /// builds). Throws ContractError on non-leaf tensors.
    std::span<double> values_mut();

    bool requires_grad() const;
    bool has_grad() const;
    /// Gradient accumulated by backward(); throws ContractError if absent.
    std::span<const double> grad() const;
    /// Clears this tensor's gradient accumulator (leaves keep accumulating
    /// across backward() calls until reset).
    void zero_grad();

    double item() const; // scalar tensors only

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

std::string shape_str(const std::vector<std::int64_t>& s);

// ---- operations -----------------------------------------------------------

/// Matrix product [m×k]·[k×n] → [m×n]. Backward: dA = dC·Bᵀ, dB = Aᵀ·dC.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b); // elementwise

/// [m×n] + row-broadcast [n] bias (the only broadcasting form provided).
Tensor add_row_bias(const Tensor& t, const Tensor& bias);

Tensor relu(const Tensor& t);
Tensor exp(const Tensor& t);  // DomainError on overflow to non-finite
Tensor log(const Tensor& t);  // DomainError on non-positive input
Tensor sqrt(const Tensor& t); // DomainError on negative/zero input
Tensor scale(const Tensor& t, double c);
Tensor add_const(const Tensor& t, double c);
/// y = s·t where s is a [1] tensor (gradient flows to both).
Tensor scale_by_scalar(const Tensor& t, const Tensor& s);

/// Reduce every entry to a scalar. max/min route the gradient to the first
/// attaining index in storage order.
Tensor reduce_all(const Tensor& t, Reduce kind);
/// Reduce one axis of a rank-2 tensor; axis 0 → [cols], axis 1 → [rows].
Tensor reduce_axis(const Tensor& t, int axis, Reduce kind);

/// Row-wise softmax with max-subtraction. Entries where mask is 0 are exactly
/// 0 in the output and excluded from the normalization; a fully masked row is
/// an EmptyReductionError. Empty mask = all entries valid.
Tensor softmax_rows(const Tensor& t, std::span<const std::uint8_t> mask = {});

struct SegmentResult {
    Tensor values;                    // [num_segments × d]
    std::vector<std::uint8_t> empty;  // flag per segment; empty segments are zero rows
};

/// Per-segment reduction of rows of a [E×d] tensor. Rows are scanned in
/// ascending storage order; max/min route gradients to the first attaining
/// member row per column.
SegmentResult segment_aggregate(const Tensor& values, std::span<const std::int32_t> segment_ids,
                                std::int64_t num_segments, Reduce kind);

/// Row gather [n×d] → [|idx|×d]; backward scatter-adds.
Tensor gather_rows(const Tensor& t, std::span<const std::int32_t> idx);

/// Column-wise concatenation of rank-2 tensors with equal row counts.
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Per-row scaling by a constant factor vector (no gradient to the factors).
Tensor scale_rows(const Tensor& t, std::span<const double> factors);

/// Mean (optionally class-weighted) softmax cross-entropy over logit rows,
/// computed via a stable log-sum-exp. class_weights is empty or size C;
/// weighted form is Σ w_{y_i}·nll_i / Σ w_{y_i}.
Tensor cross_entropy_with_logits(const Tensor& logits, std::span<const std::int32_t> labels,
                                 std::span<const double> class_weights = {});

/// Reverse pass from a scalar loss. Every tensor with requires_grad reachable
/// from the loss receives its total gradient; each graph node is visited
/// exactly once. Leaf gradients accumulate across repeated calls until
/// zero_grad(); interior gradients are recomputed fresh per call.
void backward(const Tensor& loss);

} // namespace txgnn::ad
