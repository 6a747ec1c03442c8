#include "maelab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace maelab {

namespace {
thread_local std::uint64_t t_flops = 0;
}

std::uint64_t flop_count() { return t_flops; }
void reset_flop_count() { t_flops = 0; }

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // sized lazily during backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    std::size_t numel() const { return data.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

template <typename T>
struct OpAccess {
    using Node = detail::Node<T>;

    static std::shared_ptr<Node> node(const TensorT<T>& t) { return t.node_; }

    static TensorT<T> make(Shape shape, std::vector<T> data) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        return TensorT<T>(std::move(n));
    }

    // Wires the result into the graph when any input requires grad.
    static TensorT<T> result(const char* op, Shape shape, std::vector<T> data,
                             std::vector<std::shared_ptr<Node>> parents,
                             std::function<void(Node&)> backprop) {
        auto out = make(std::move(shape), std::move(data));
        auto n = node(out);
        n->op = op;
        bool needs = false;
        for (const auto& p : parents) needs = needs || p->requires_grad;
        if (needs) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backprop = std::move(backprop);
        }
        return out;
    }
};

// ---- TensorT --------------------------------------------------------------

template <typename T>
TensorT<T>::TensorT() = default;
template <typename T>
TensorT<T>::~TensorT() = default;
template <typename T>
TensorT<T>::TensorT(const TensorT&) = default;
template <typename T>
TensorT<T>::TensorT(TensorT&&) noexcept = default;
template <typename T>
TensorT<T>& TensorT<T>::operator=(const TensorT&) = default;
template <typename T>
TensorT<T>& TensorT<T>::operator=(TensorT&&) noexcept = default;

template <typename T>
TensorT<T>::TensorT(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

template <typename T>
TensorT<T> TensorT<T>::zeros(const Shape& shape) {
    return OpAccess<T>::make(shape, std::vector<T>(shape_numel(shape), T(0)));
}

template <typename T>
TensorT<T> TensorT<T>::full(const Shape& shape, T value) {
    return OpAccess<T>::make(shape, std::vector<T>(shape_numel(shape), value));
}

template <typename T>
TensorT<T> TensorT<T>::from_data(const Shape& shape, std::vector<T> values) {
    if (values.size() != shape_numel(shape))
        throw std::invalid_argument("from_data: " + std::to_string(values.size()) +
                                    " values for shape " + shape_str(shape));
    return OpAccess<T>::make(shape, std::move(values));
}

template <typename T>
TensorT<T> TensorT<T>::scalar(T value) {
    return OpAccess<T>::make({}, std::vector<T>{value});
}

template <typename T>
TensorT<T> TensorT<T>::randn(const Shape& shape, Rng& rng, T stddev) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal()) * stddev;
    return OpAccess<T>::make(shape, std::move(v));
}

template <typename T>
TensorT<T> TensorT<T>::uniform(const Shape& shape, Rng& rng, T lo, T hi) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return OpAccess<T>::make(shape, std::move(v));
}

template <typename T>
const Shape& TensorT<T>::shape() const {
    return node_->shape;
}

template <typename T>
std::size_t TensorT<T>::numel() const {
    return node_->data.size();
}

template <typename T>
std::size_t TensorT<T>::dim(std::size_t i) const {
    return node_->shape.at(i);
}

template <typename T>
const std::vector<T>& TensorT<T>::data() const {
    return node_->data;
}

template <typename T>
std::vector<T>& TensorT<T>::mutable_data() {
    if (node_->backprop)
        throw std::logic_error("mutable_data: only leaf tensors may be mutated in place");
    return node_->data;
}

template <typename T>
T TensorT<T>::item() const {
    if (numel() != 1) throw std::invalid_argument("item: tensor has shape " + shape_str(shape()));
    return node_->data[0];
}

template <typename T>
bool TensorT<T>::requires_grad() const {
    return node_->requires_grad;
}

template <typename T>
TensorT<T>& TensorT<T>::set_requires_grad(bool flag) {
    if (node_->backprop) throw std::logic_error("set_requires_grad: not a leaf tensor");
    node_->requires_grad = flag;
    return *this;
}

template <typename T>
bool TensorT<T>::has_grad() const {
    return !node_->grad.empty();
}

template <typename T>
const std::vector<T>& TensorT<T>::grad() const {
    if (node_->grad.empty()) throw std::logic_error("grad: no gradient recorded");
    return node_->grad;
}

template <typename T>
void TensorT<T>::zero_grad() {
    node_->grad.clear();
}

template <typename T>
const char* TensorT<T>::op_name() const {
    return node_->op;
}

template <typename T>
TensorT<T> TensorT<T>::detach() const {
    return OpAccess<T>::make(node_->shape, node_->data);
}

template <typename T>
void TensorT<T>::backward() {
    using Node = detail::Node<T>;
    if (numel() != 1)
        throw std::invalid_argument("backward: output has shape " + shape_str(shape()) +
                                    ", expected a scalar");

    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

// ---- op helpers ------------------------------------------------------------

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                                " and " + shape_str(b));
}

// true if small is a trailing suffix of big
bool is_suffix(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
TensorT<T> elementwise_binary(const char* op, const TensorT<T>& a, const TensorT<T>& b,
                              bool allow_suffix, T sign_b) {
    auto an = OpAccess<T>::node(a);
    auto bn = OpAccess<T>::node(b);
    const std::size_t n = an->data.size();
    const std::size_t m = bn->data.size();
    const bool same = an->shape == bn->shape;
    if (!same && !(allow_suffix && is_suffix(an->shape, bn->shape) && m > 0 && n % m == 0))
        shape_error(op, an->shape, bn->shape);

    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = an->data[i] + sign_b * bn->data[i % m];
    t_flops += n;

    return OpAccess<T>::result(op, an->shape, std::move(out), {an, bn},
                               [an, bn, n, m, sign_b](detail::Node<T>& o) {
                                   if (an->requires_grad) {
                                       an->ensure_grad();
                                       for (std::size_t i = 0; i < n; ++i)
                                           an->grad[i] += o.grad[i];
                                   }
                                   if (bn->requires_grad) {
                                       bn->ensure_grad();
                                       for (std::size_t i = 0; i < n; ++i)
                                           bn->grad[i % m] += sign_b * o.grad[i];
                                   }
                               });
}

std::vector<std::size_t> row_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    return elementwise_binary<T>("add", a, b, /*allow_suffix=*/true, T(1));
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    return elementwise_binary<T>("sub", a, b, /*allow_suffix=*/false, T(-1));
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    auto an = OpAccess<T>::node(a);
    auto bn = OpAccess<T>::node(b);
    if (an->shape != bn->shape) shape_error("mul", an->shape, bn->shape);
    const std::size_t n = an->data.size();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = an->data[i] * bn->data[i];
    t_flops += n;

    return OpAccess<T>::result("mul", an->shape, std::move(out), {an, bn},
                               [an, bn, n](detail::Node<T>& o) {
                                   if (an->requires_grad) {
                                       an->ensure_grad();
                                       for (std::size_t i = 0; i < n; ++i)
                                           an->grad[i] += o.grad[i] * bn->data[i];
                                   }
                                   if (bn->requires_grad) {
                                       bn->ensure_grad();
                                       for (std::size_t i = 0; i < n; ++i)
                                           bn->grad[i] += o.grad[i] * an->data[i];
                                   }
                               });
}

template <typename T>
TensorT<T> scalar_mul(const TensorT<T>& a, T s) {
    auto an = OpAccess<T>::node(a);
    const std::size_t n = an->data.size();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = an->data[i] * s;
    t_flops += n;

    return OpAccess<T>::result("scalar_mul", an->shape, std::move(out), {an},
                               [an, n, s](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (std::size_t i = 0; i < n; ++i) an->grad[i] += o.grad[i] * s;
                               });
}

// ---- matmul ----------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    auto an = OpAccess<T>::node(a);
    auto bn = OpAccess<T>::node(b);
    const Shape& sa = an->shape;
    const Shape& sb = bn->shape;
    if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", sa, sb);

    const std::size_t M = sa[sa.size() - 2];
    const std::size_t K = sa[sa.size() - 1];
    const bool b_shared = sb.size() == 2 && sa.size() > 2;
    if (!b_shared && !std::equal(sa.begin(), sa.end() - 2, sb.begin(), sb.end() - 2))
        shape_error("matmul", sa, sb);
    if (sb[sb.size() - 2] != K) shape_error("matmul", sa, sb);
    const std::size_t N = sb[sb.size() - 1];

    std::size_t batch = 1;
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

    Shape out_shape(sa.begin(), sa.end() - 2);
    out_shape.push_back(M);
    out_shape.push_back(N);

    std::vector<T> out(batch * M * N, T(0));
    const T* pa = an->data.data();
    const T* pb = bn->data.data();
    for (std::size_t g = 0; g < batch; ++g) {
        const T* ag = pa + g * M * K;
        const T* bg = b_shared ? pb : pb + g * K * N;
        T* og = out.data() + g * M * N;
        for (std::size_t i = 0; i < M; ++i) {
            for (std::size_t k = 0; k < K; ++k) {
                const T aik = ag[i * K + k];
                const T* brow = bg + k * N;
                T* orow = og + i * N;
                for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
            }
        }
    }
    t_flops += 2 * batch * M * N * K;

    return OpAccess<T>::result(
        "matmul", std::move(out_shape), std::move(out), {an, bn},
        [an, bn, batch, M, K, N, b_shared](detail::Node<T>& o) {
            const T* pa = an->data.data();
            const T* pb = bn->data.data();
            const T* po = o.grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                T* da = an->grad.data();
                for (std::size_t g = 0; g < batch; ++g) {
                    const T* og = po + g * M * N;
                    const T* bg = b_shared ? pb : pb + g * K * N;
                    T* dag = da + g * M * K;
                    // dA = dC * B^T
                    for (std::size_t i = 0; i < M; ++i)
                        for (std::size_t j = 0; j < N; ++j) {
                            const T gij = og[i * N + j];
                            const T* brow = bg + j;  // column j of B, stride N
                            for (std::size_t k = 0; k < K; ++k)
                                dag[i * K + k] += gij * brow[k * N];
                        }
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                T* db = bn->grad.data();
                for (std::size_t g = 0; g < batch; ++g) {
                    const T* og = po + g * M * N;
                    const T* ag = pa + g * M * K;
                    T* dbg = b_shared ? db : db + g * K * N;
                    // dB (+)= A^T * dC
                    for (std::size_t i = 0; i < M; ++i)
                        for (std::size_t k = 0; k < K; ++k) {
                            const T aik = ag[i * K + k];
                            const T* orow = og + i * N;
                            T* drow = dbg + k * N;
                            for (std::size_t j = 0; j < N; ++j) drow[j] += aik * orow[j];
                        }
                }
            }
        });
}

// ---- shape ops ---------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, const Shape& shape) {
    auto an = OpAccess<T>::node(a);
    if (shape_numel(shape) != an->data.size()) shape_error("reshape", an->shape, shape);

    return OpAccess<T>::result("reshape", shape, an->data, {an}, [an](detail::Node<T>& o) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    });
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a, std::size_t dim0, std::size_t dim1) {
    auto an = OpAccess<T>::node(a);
    const Shape& sa = an->shape;
    if (dim0 >= sa.size() || dim1 >= sa.size())
        throw std::invalid_argument("transpose: axes (" + std::to_string(dim0) + "," +
                                    std::to_string(dim1) + ") out of range for " + shape_str(sa));
    Shape so = sa;
    std::swap(so[dim0], so[dim1]);
    const auto ist = row_strides(sa);
    const auto ost = row_strides(so);
    const std::size_t n = an->data.size();
    const std::size_t rank = sa.size();

    auto remap = [ist, ost, dim0, dim1, n, rank](const std::vector<T>& src, std::vector<T>& dst,
                                                 bool accumulate) {
        std::vector<std::size_t> ix(rank, 0);
        for (std::size_t flat = 0; flat < n; ++flat) {
            std::size_t rem = flat;
            for (std::size_t d = 0; d < rank; ++d) {
                ix[d] = rem / ist[d];
                rem %= ist[d];
            }
            std::swap(ix[dim0], ix[dim1]);
            std::size_t oflat = 0;
            for (std::size_t d = 0; d < rank; ++d) oflat += ix[d] * ost[d];
            if (accumulate)
                dst[flat] += src[oflat];
            else
                dst[oflat] = src[flat];
        }
    };

    std::vector<T> out(n);
    remap(an->data, out, false);

    return OpAccess<T>::result("transpose", std::move(so), std::move(out), {an},
                               [an, remap](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   remap(o.grad, an->grad, true);
                               });
}

// ---- gather / scatter / expand ----------------------------------------------

namespace {

template <typename T>
void check_rows(const char* op, const NodePtr<T>& an, const IndexRows& idx, std::size_t n_rows) {
    for (const auto& rows : idx) {
        if (rows.size() != idx[0].size())
            throw std::invalid_argument(std::string(op) + ": ragged per-sample index lists");
        for (auto r : rows)
            if (r >= n_rows)
                throw std::invalid_argument(std::string(op) + ": row " + std::to_string(r) +
                                            " out of range for " + shape_str(an->shape));
    }
}

}  // namespace

template <typename T>
TensorT<T> gather_rows(const TensorT<T>& a, const IndexRows& idx) {
    auto an = OpAccess<T>::node(a);
    const Shape& sa = an->shape;
    if (sa.size() != 2 && sa.size() != 3) shape_error("gather_rows", sa, Shape{idx.size()});
    const bool shared = sa.size() == 2;
    const std::size_t B = idx.size();
    if (!shared && sa[0] != B) shape_error("gather_rows", sa, Shape{B});
    if (B == 0) throw std::invalid_argument("gather_rows: empty index set");
    const std::size_t N = shared ? sa[0] : sa[1];
    const std::size_t W = shared ? sa[1] : sa[2];
    const std::size_t K = idx[0].size();
    check_rows("gather_rows", an, idx, N);

    std::vector<T> out(B * K * W);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
            const T* src = an->data.data() + (shared ? 0 : b * N * W) + idx[b][k] * W;
            std::copy(src, src + W, out.data() + (b * K + k) * W);
        }

    return OpAccess<T>::result(
        "gather_rows", {B, K, W}, std::move(out), {an},
        [an, idx, B, N, W, K, shared](detail::Node<T>& o) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t k = 0; k < K; ++k) {
                    T* dst = an->grad.data() + (shared ? 0 : b * N * W) + idx[b][k] * W;
                    const T* src = o.grad.data() + (b * K + k) * W;
                    for (std::size_t w = 0; w < W; ++w) dst[w] += src[w];
                }
        });
}

template <typename T>
TensorT<T> scatter_rows(const TensorT<T>& a, const IndexRows& idx, std::size_t n_rows) {
    auto an = OpAccess<T>::node(a);
    const Shape& sa = an->shape;
    if (sa.size() != 3 || sa[0] != idx.size() || (idx.empty() ? 0 : idx[0].size()) != sa[1])
        shape_error("scatter_rows", sa, Shape{idx.size(), idx.empty() ? 0 : idx[0].size()});
    const std::size_t B = sa[0];
    const std::size_t K = sa[1];
    const std::size_t W = sa[2];
    check_rows("scatter_rows", an, idx, n_rows);

    std::vector<T> out(B * n_rows * W, T(0));
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
            T* dst = out.data() + (b * n_rows + idx[b][k]) * W;
            const T* src = an->data.data() + (b * K + k) * W;
            for (std::size_t w = 0; w < W; ++w) dst[w] += src[w];
        }

    return OpAccess<T>::result("scatter_rows", {B, n_rows, W}, std::move(out), {an},
                               [an, idx, B, K, W, n_rows](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (std::size_t b = 0; b < B; ++b)
                                       for (std::size_t k = 0; k < K; ++k) {
                                           T* dst = an->grad.data() + (b * K + k) * W;
                                           const T* src =
                                               o.grad.data() + (b * n_rows + idx[b][k]) * W;
                                           for (std::size_t w = 0; w < W; ++w) dst[w] += src[w];
                                       }
                               });
}

template <typename T>
TensorT<T> expand_rows(const TensorT<T>& v, std::size_t batch, std::size_t rows) {
    auto vn = OpAccess<T>::node(v);
    if (vn->shape.size() != 1) shape_error("expand_rows", vn->shape, Shape{batch, rows});
    const std::size_t W = vn->shape[0];

    std::vector<T> out(batch * rows * W);
    for (std::size_t r = 0; r < batch * rows; ++r)
        std::copy(vn->data.begin(), vn->data.end(), out.begin() + r * W);

    return OpAccess<T>::result("expand_rows", {batch, rows, W}, std::move(out), {vn},
                               [vn, batch, rows, W](detail::Node<T>& o) {
                                   if (!vn->requires_grad) return;
                                   vn->ensure_grad();
                                   for (std::size_t r = 0; r < batch * rows; ++r)
                                       for (std::size_t w = 0; w < W; ++w)
                                           vn->grad[w] += o.grad[r * W + w];
                               });
}

// ---- reductions --------------------------------------------------------------

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
    auto an = OpAccess<T>::node(a);
    T acc = T(0);
    for (T x : an->data) acc += x;
    t_flops += an->data.size();

    return OpAccess<T>::result("sum", {}, {acc}, {an}, [an](detail::Node<T>& o) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += o.grad[0];
    });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
    auto an = OpAccess<T>::node(a);
    if (an->data.empty()) throw std::invalid_argument("mean: empty tensor");
    T acc = T(0);
    for (T x : an->data) acc += x;
    const T inv = T(1) / static_cast<T>(an->data.size());
    t_flops += an->data.size();

    return OpAccess<T>::result("mean", {}, {acc * inv}, {an}, [an, inv](detail::Node<T>& o) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (auto& g : an->grad) g += o.grad[0] * inv;
    });
}

template <typename T>
TensorT<T> mean_axis(const TensorT<T>& a, std::size_t axis) {
    auto an = OpAccess<T>::node(a);
    const Shape& sa = an->shape;
    if (axis >= sa.size())
        throw std::invalid_argument("mean_axis: axis " + std::to_string(axis) +
                                    " out of range for " + shape_str(sa));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= sa[i];
    for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
    const std::size_t n = sa[axis];
    if (n == 0) throw std::invalid_argument("mean_axis: empty axis");
    const T inv = T(1) / static_cast<T>(n);

    Shape so;
    for (std::size_t i = 0; i < sa.size(); ++i)
        if (i != axis) so.push_back(sa[i]);

    std::vector<T> out(outer * inner, T(0));
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k) {
            const T* src = an->data.data() + (o * n + k) * inner;
            T* dst = out.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    for (auto& x : out) x *= inv;
    t_flops += an->data.size();

    return OpAccess<T>::result("mean_axis", std::move(so), std::move(out), {an},
                               [an, outer, inner, n, inv](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (std::size_t ou = 0; ou < outer; ++ou)
                                       for (std::size_t k = 0; k < n; ++k) {
                                           T* dst = an->grad.data() + (ou * n + k) * inner;
                                           const T* src = o.grad.data() + ou * inner;
                                           for (std::size_t i = 0; i < inner; ++i)
                                               dst[i] += src[i] * inv;
                                       }
                               });
}

// ---- normalization / activations ----------------------------------------------

template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps) {
    auto xn = OpAccess<T>::node(x);
    auto gn = OpAccess<T>::node(gamma);
    auto bn = OpAccess<T>::node(beta);
    if (eps <= T(0)) throw std::invalid_argument("layer_norm: eps must be > 0");
    const Shape& sx = xn->shape;
    if (sx.empty()) shape_error("layer_norm", sx, gn->shape);
    const std::size_t W = sx.back();
    if (gn->shape != Shape{W}) shape_error("layer_norm", sx, gn->shape);
    if (bn->shape != Shape{W}) shape_error("layer_norm", sx, bn->shape);
    const std::size_t rows = xn->data.size() / W;

    std::vector<T> out(xn->data.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* px = xn->data.data() + r * W;
        T mu = T(0);
        for (std::size_t w = 0; w < W; ++w) mu += px[w];
        mu /= static_cast<T>(W);
        T var = T(0);
        for (std::size_t w = 0; w < W; ++w) {
            const T d = px[w] - mu;
            var += d * d;
        }
        var /= static_cast<T>(W);
        const T rstd = T(1) / std::sqrt(var + eps);
        T* po = out.data() + r * W;
        for (std::size_t w = 0; w < W; ++w)
            po[w] = (px[w] - mu) * rstd * gn->data[w] + bn->data[w];
    }
    t_flops += 8 * xn->data.size();

    return OpAccess<T>::result(
        "layer_norm", sx, std::move(out), {xn, gn, bn},
        [xn, gn, bn, rows, W, eps](detail::Node<T>& o) {
            std::vector<T> xhat(W), g(W);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* px = xn->data.data() + r * W;
                const T* pg = o.grad.data() + r * W;
                T mu = T(0);
                for (std::size_t w = 0; w < W; ++w) mu += px[w];
                mu /= static_cast<T>(W);
                T var = T(0);
                for (std::size_t w = 0; w < W; ++w) {
                    const T d = px[w] - mu;
                    var += d * d;
                }
                var /= static_cast<T>(W);
                const T rstd = T(1) / std::sqrt(var + eps);
                for (std::size_t w = 0; w < W; ++w) xhat[w] = (px[w] - mu) * rstd;

                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (std::size_t w = 0; w < W; ++w) bn->grad[w] += pg[w];
                }
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (std::size_t w = 0; w < W; ++w) gn->grad[w] += pg[w] * xhat[w];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    T gmean = T(0), gxmean = T(0);
                    for (std::size_t w = 0; w < W; ++w) {
                        g[w] = pg[w] * gn->data[w];
                        gmean += g[w];
                        gxmean += g[w] * xhat[w];
                    }
                    gmean /= static_cast<T>(W);
                    gxmean /= static_cast<T>(W);
                    T* dx = xn->grad.data() + r * W;
                    for (std::size_t w = 0; w < W; ++w)
                        dx[w] += (g[w] - gmean - xhat[w] * gxmean) * rstd;
                }
            }
        });
}

template <typename T>
TensorT<T> gelu(const TensorT<T>& a) {
    auto an = OpAccess<T>::node(a);
    const std::size_t n = an->data.size();
    constexpr T inv_sqrt2 = T(0.7071067811865475244);
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T x = an->data[i];
        out[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
    }
    t_flops += 8 * n;

    return OpAccess<T>::result(
        "gelu", an->shape, std::move(out), {an}, [an, n](detail::Node<T>& o) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            constexpr T inv_sqrt2pi = T(0.3989422804014326779);
            for (std::size_t i = 0; i < n; ++i) {
                const T x = an->data[i];
                const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
                an->grad[i] += o.grad[i] * (cdf + x * pdf);
            }
        });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    auto an = OpAccess<T>::node(a);
    const std::size_t n = an->data.size();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-an->data[i]));
    t_flops += 4 * n;

    return OpAccess<T>::result("sigmoid", an->shape, std::move(out), {an},
                               [an, n](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (std::size_t i = 0; i < n; ++i) {
                                       const T s = o.data[i];
                                       an->grad[i] += o.grad[i] * s * (T(1) - s);
                                   }
                               });
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& a) {
    auto an = OpAccess<T>::node(a);
    const Shape& sa = an->shape;
    if (sa.empty()) throw std::invalid_argument("softmax: scalar input");
    const std::size_t W = sa.back();
    const std::size_t rows = an->data.size() / W;

    std::vector<T> out(an->data.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* px = an->data.data() + r * W;
        T* po = out.data() + r * W;
        T mx = px[0];
        for (std::size_t w = 1; w < W; ++w) mx = std::max(mx, px[w]);
        T total = T(0);
        for (std::size_t w = 0; w < W; ++w) {
            po[w] = std::exp(px[w] - mx);
            total += po[w];
        }
        const T inv = T(1) / total;
        for (std::size_t w = 0; w < W; ++w) po[w] *= inv;
    }
    t_flops += 5 * an->data.size();

    return OpAccess<T>::result("softmax", sa, std::move(out), {an},
                               [an, rows, W](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       const T* s = o.data.data() + r * W;
                                       const T* pg = o.grad.data() + r * W;
                                       T dot = T(0);
                                       for (std::size_t w = 0; w < W; ++w) dot += pg[w] * s[w];
                                       T* dx = an->grad.data() + r * W;
                                       for (std::size_t w = 0; w < W; ++w)
                                           dx[w] += s[w] * (pg[w] - dot);
                                   }
                               });
}

// ---- masking ops ---------------------------------------------------------------

template <typename T>
TensorT<T> row_scale(const TensorT<T>& a, const std::vector<T>& scales) {
    auto an = OpAccess<T>::node(a);
    const Shape& sa = an->shape;
    if (sa.empty() || sa[0] != scales.size())
        shape_error("row_scale", sa, Shape{scales.size()});
    const std::size_t stride = an->data.size() / sa[0];

    std::vector<T> out(an->data.size());
    for (std::size_t b = 0; b < sa[0]; ++b)
        for (std::size_t i = 0; i < stride; ++i)
            out[b * stride + i] = an->data[b * stride + i] * scales[b];
    t_flops += an->data.size();

    return OpAccess<T>::result("row_scale", sa, std::move(out), {an},
                               [an, scales, stride](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (std::size_t b = 0; b < scales.size(); ++b)
                                       for (std::size_t i = 0; i < stride; ++i)
                                           an->grad[b * stride + i] +=
                                               o.grad[b * stride + i] * scales[b];
                               });
}

template <typename T>
TensorT<T> dropout_mask(const TensorT<T>& a, const TensorT<T>& mask) {
    auto an = OpAccess<T>::node(a);
    auto mn = OpAccess<T>::node(mask);
    if (an->shape != mn->shape) shape_error("dropout_mask", an->shape, mn->shape);
    if (mn->requires_grad)
        throw std::invalid_argument("dropout_mask: mask must not require grad");
    const std::size_t n = an->data.size();

    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = an->data[i] * mn->data[i];
    t_flops += n;

    return OpAccess<T>::result("dropout_mask", an->shape, std::move(out), {an},
                               [an, mn, n](detail::Node<T>& o) {
                                   if (!an->requires_grad) return;
                                   an->ensure_grad();
                                   for (std::size_t i = 0; i < n; ++i)
                                       an->grad[i] += o.grad[i] * mn->data[i];
                               });
}

// ---- losses --------------------------------------------------------------------

template <typename T>
TensorT<T> masked_mse(const TensorT<T>& pred, const TensorT<T>& target,
                      const IndexRows& mask_idx) {
    auto pn = OpAccess<T>::node(pred);
    auto tn = OpAccess<T>::node(target);
    if (pn->shape != tn->shape) shape_error("masked_mse", pn->shape, tn->shape);
    if (tn->requires_grad)
        throw std::invalid_argument("masked_mse: target must not require grad");
    const Shape& s = pn->shape;
    if (s.size() != 3 || s[0] != mask_idx.size())
        shape_error("masked_mse", s, Shape{mask_idx.size()});
    const std::size_t B = s[0];
    const std::size_t N = s[1];
    const std::size_t P = s[2];
    check_rows("masked_mse", pn, mask_idx, N);

    std::size_t count = 0;
    for (const auto& rows : mask_idx) count += rows.size() * P;
    if (count == 0) throw std::invalid_argument("masked_mse: empty mask index set");
    const T inv = T(1) / static_cast<T>(count);

    T acc = T(0);
    for (std::size_t b = 0; b < B; ++b)
        for (auto i : mask_idx[b]) {
            const T* pp = pn->data.data() + (b * N + i) * P;
            const T* pt = tn->data.data() + (b * N + i) * P;
            for (std::size_t p = 0; p < P; ++p) {
                const T d = pp[p] - pt[p];
                acc += d * d;
            }
        }
    t_flops += 3 * count;

    return OpAccess<T>::result("masked_mse", {}, {acc * inv}, {pn, tn},
                               [pn, tn, mask_idx, N, P, inv](detail::Node<T>& o) {
                                   if (!pn->requires_grad) return;
                                   pn->ensure_grad();
                                   const T scale = T(2) * inv * o.grad[0];
                                   for (std::size_t b = 0; b < mask_idx.size(); ++b)
                                       for (auto i : mask_idx[b]) {
                                           const T* pp = pn->data.data() + (b * N + i) * P;
                                           const T* pt = tn->data.data() + (b * N + i) * P;
                                           T* dp = pn->grad.data() + (b * N + i) * P;
                                           for (std::size_t p = 0; p < P; ++p)
                                               dp[p] += scale * (pp[p] - pt[p]);
                                       }
                               });
}

template <typename T>
TensorT<T> bce_with_logits(const TensorT<T>& logits, const TensorT<T>& targets) {
    auto zn = OpAccess<T>::node(logits);
    auto yn = OpAccess<T>::node(targets);
    if (zn->shape != yn->shape) shape_error("bce_with_logits", zn->shape, yn->shape);
    if (yn->requires_grad)
        throw std::invalid_argument("bce_with_logits: targets must not require grad");
    const std::size_t n = zn->data.size();
    if (n == 0) throw std::invalid_argument("bce_with_logits: empty input");
    const T inv = T(1) / static_cast<T>(n);

    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T z = zn->data[i];
        const T y = yn->data[i];
        acc += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    t_flops += 6 * n;

    return OpAccess<T>::result("bce_with_logits", {}, {acc * inv}, {zn, yn},
                               [zn, yn, n, inv](detail::Node<T>& o) {
                                   if (!zn->requires_grad) return;
                                   zn->ensure_grad();
                                   const T scale = inv * o.grad[0];
                                   for (std::size_t i = 0; i < n; ++i) {
                                       const T s = T(1) / (T(1) + std::exp(-zn->data[i]));
                                       zn->grad[i] += scale * (s - yn->data[i]);
                                   }
                               });
}

std::vector<std::string> op_catalogue() {
    return {"add",        "sub",          "mul",        "scalar_mul", "matmul",
            "reshape",    "transpose",    "gather_rows", "scatter_rows", "expand_rows",
            "sum",        "mean",         "mean_axis",  "layer_norm", "gelu",
            "sigmoid",    "softmax",      "row_scale",  "dropout_mask", "masked_mse",
            "bce_with_logits"};
}

// ---- explicit instantiations ---------------------------------------------------

#define MAELAB_INSTANTIATE_OPS(T)                                                              \
    template class TensorT<T>;                                                                 \
    template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                             \
    template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                             \
    template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                             \
    template TensorT<T> scalar_mul(const TensorT<T>&, T);                                      \
    template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);                          \
    template TensorT<T> reshape(const TensorT<T>&, const Shape&);                              \
    template TensorT<T> transpose(const TensorT<T>&, std::size_t, std::size_t);                \
    template TensorT<T> gather_rows(const TensorT<T>&, const IndexRows&);                      \
    template TensorT<T> scatter_rows(const TensorT<T>&, const IndexRows&, std::size_t);        \
    template TensorT<T> expand_rows(const TensorT<T>&, std::size_t, std::size_t);              \
    template TensorT<T> sum(const TensorT<T>&);                                                \
    template TensorT<T> mean(const TensorT<T>&);                                               \
    template TensorT<T> mean_axis(const TensorT<T>&, std::size_t);                             \
    template TensorT<T> layer_norm(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,   \
                                   T);                                                         \
    template TensorT<T> gelu(const TensorT<T>&);                                               \
    template TensorT<T> sigmoid(const TensorT<T>&);                                            \
    template TensorT<T> softmax(const TensorT<T>&);                                            \
    template TensorT<T> row_scale(const TensorT<T>&, const std::vector<T>&);                   \
    template TensorT<T> dropout_mask(const TensorT<T>&, const TensorT<T>&);                    \
    template TensorT<T> masked_mse(const TensorT<T>&, const TensorT<T>&, const IndexRows&);    \
    template TensorT<T> bce_with_logits(const TensorT<T>&, const TensorT<T>&);

MAELAB_INSTANTIATE_OPS(float)
MAELAB_INSTANTIATE_OPS(double)

#undef MAELAB_INSTANTIATE_OPS

}  // namespace maelab
