#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "maelab/rng.hpp"

namespace maelab {

enum class Dtype { f32, f64 };

using Shape = std::vector<std::size_t>;
using IndexRows = std::vector<std::vector<std::size_t>>;  // per-sample row index lists

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
template <typename T>
struct Node;
}

// Row-major n-d array participating in a reverse-mode gradient graph.
// Cheap to copy: a TensorT is a handle to a shared node. Ops on tensors
// whose inputs require grad record a backward rule; backward() from a
// scalar populates grad on every reachable requires-grad tensor.
template <typename T>
class TensorT {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "tensors hold 32- or 64-bit floats");

public:
    TensorT();
    ~TensorT();
    TensorT(const TensorT&);
    TensorT(TensorT&&) noexcept;
    TensorT& operator=(const TensorT&);
    TensorT& operator=(TensorT&&) noexcept;

    static TensorT zeros(const Shape& shape);
    static TensorT full(const Shape& shape, T value);
    static TensorT from_data(const Shape& shape, std::vector<T> values);
    static TensorT scalar(T value);
    static TensorT randn(const Shape& shape, Rng& rng, T stddev = T(1));
    static TensorT uniform(const Shape& shape, Rng& rng, T lo, T hi);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t dim(std::size_t i) const;
    static constexpr Dtype dtype() { return std::is_same_v<T, float> ? Dtype::f32 : Dtype::f64; }

    const std::vector<T>& data() const;
    // Leaf-only mutation; used by optimizers and initializers.
    std::vector<T>& mutable_data();
    T item() const;

    bool requires_grad() const;
    TensorT& set_requires_grad(bool flag);  // leaf tensors only
    bool has_grad() const;
    const std::vector<T>& grad() const;
    void zero_grad();

    // Reverse-mode sweep from a scalar. Seeds d(self)=1 and accumulates into
    // grads in reverse topological order, each recorded op exactly once.
    void backward();

    // New leaf holding a copy of the data, detached from any graph.
    TensorT detach() const;

    const char* op_name() const;
    const void* node_id() const { return node_.get(); }

private:
    explicit TensorT(std::shared_ptr<detail::Node<T>> node);
    std::shared_ptr<detail::Node<T>> node_;

    template <typename U>
    friend struct OpAccess;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// ---- differentiable primitives -------------------------------------------
// Shape errors throw std::invalid_argument naming the op and both shapes.

// b must have the same shape as a, or a shape that is a suffix of a's
// (bias [W] onto [B,N,W], positional table [N,W] onto [B,N,W]).
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> scalar_mul(const TensorT<T>& a, T s);

// [..., M, K] x [K, N], or [..., M, K] x [..., K, N] with matching leading dims.
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, const Shape& shape);
template <typename T>
TensorT<T> transpose(const TensorT<T>& a, std::size_t dim0, std::size_t dim1);

// a: [N, W] (shared across samples) or [B, N, W]; idx: B lists of K rows -> [B, K, W].
template <typename T>
TensorT<T> gather_rows(const TensorT<T>& a, const IndexRows& idx);
// a: [B, K, W] -> [B, n_rows, W]; rows listed in idx receive a's rows (+= on
// duplicates), all other rows are zero.
template <typename T>
TensorT<T> scatter_rows(const TensorT<T>& a, const IndexRows& idx, std::size_t n_rows);
// v: [W] -> [B, K, W]; backward sums over the expanded dims.
template <typename T>
TensorT<T> expand_rows(const TensorT<T>& v, std::size_t batch, std::size_t rows);

template <typename T>
TensorT<T> sum(const TensorT<T>& a);
template <typename T>
TensorT<T> mean(const TensorT<T>& a);
template <typename T>
TensorT<T> mean_axis(const TensorT<T>& a, std::size_t axis);

// Normalizes over the last axis; gamma/beta have that axis' extent. eps > 0.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(1e-6));

// Exact erf form: 0.5 * x * (1 + erf(x / sqrt(2))).
template <typename T>
TensorT<T> gelu(const TensorT<T>& a);
template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a);
template <typename T>
TensorT<T> softmax(const TensorT<T>& a);  // last axis

// Multiplies sample b's slice by scales[b]; scales are plain data (no grad).
template <typename T>
TensorT<T> row_scale(const TensorT<T>& a, const std::vector<T>& scales);
// Elementwise multiply by a constant mask; mask must not require grad.
template <typename T>
TensorT<T> dropout_mask(const TensorT<T>& a, const TensorT<T>& mask);

// Mean squared error over the rows listed in mask_idx only; pred/target
// [B, N, P]; target must not require grad.
template <typename T>
TensorT<T> masked_mse(const TensorT<T>& pred, const TensorT<T>& target, const IndexRows& mask_idx);
// Numerically stable per-element BCE on logits, mean-reduced; targets carry no grad.
template <typename T>
TensorT<T> bce_with_logits(const TensorT<T>& logits, const TensorT<T>& targets);

// Names of every differentiable primitive with a registered backward rule.
std::vector<std::string> op_catalogue();

// Approximate forward FLOP accounting, per thread.
std::uint64_t flop_count();
void reset_flop_count();

}  // namespace maelab
