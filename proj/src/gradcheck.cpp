#include "maelab/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace maelab {

template <typename T>
double grad_check(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x,
                  double h) {
    if (h <= 0) throw std::invalid_argument("grad_check: h must be > 0");

    TensorT<T> leaf = x.detach();
    leaf.set_requires_grad(true);
    TensorT<T> y = f(leaf);
    if (y.numel() != 1)
        throw std::invalid_argument("grad_check: function output has shape " +
                                    shape_str(y.shape()) + ", expected a scalar");
    y.backward();

    // A function that never touches x leaves no grad behind; that reads as zero.
    std::vector<T> analytic(x.numel(), T(0));
    if (leaf.has_grad()) analytic = leaf.grad();

    double max_rel = 0.0;
    std::vector<T> probe = x.data();
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const T saved = probe[i];
        probe[i] = saved + static_cast<T>(h);
        const double up = f(TensorT<T>::from_data(x.shape(), probe)).item();
        probe[i] = saved - static_cast<T>(h);
        const double dn = f(TensorT<T>::from_data(x.shape(), probe)).item();
        probe[i] = saved;

        const double numeric = (up - dn) / (2.0 * h);
        const double a = static_cast<double>(analytic[i]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

template <typename T>
std::vector<double> central_differences(const std::function<TensorT<T>(const TensorT<T>&)>& f,
                                        const TensorT<T>& x, double h) {
    if (h <= 0) throw std::invalid_argument("central_differences: h must be > 0");
    std::vector<double> out(x.numel());
    std::vector<T> probe = x.data();
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const T saved = probe[i];
        probe[i] = saved + static_cast<T>(h);
        const double up = f(TensorT<T>::from_data(x.shape(), probe)).item();
        probe[i] = saved - static_cast<T>(h);
        const double dn = f(TensorT<T>::from_data(x.shape(), probe)).item();
        probe[i] = saved;
        out[i] = (up - dn) / (2.0 * h);
    }
    return out;
}

template <typename A>
double max_rel_error(const std::vector<A>& analytic, const std::vector<double>& reference) {
    if (analytic.size() != reference.size())
        throw std::invalid_argument("max_rel_error: size mismatch");
    double max_rel = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = static_cast<double>(analytic[i]);
        const double r = reference[i];
        const double denom = std::max({std::abs(a), std::abs(r), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - r) / denom);
    }
    return max_rel;
}

template double grad_check(const std::function<TensorT<float>(const TensorT<float>&)>&,
                           const TensorT<float>&, double);
template double grad_check(const std::function<TensorT<double>(const TensorT<double>&)>&,
                           const TensorT<double>&, double);
template std::vector<double> central_differences(
    const std::function<TensorT<float>(const TensorT<float>&)>&, const TensorT<float>&, double);
template std::vector<double> central_differences(
    const std::function<TensorT<double>(const TensorT<double>&)>&, const TensorT<double>&, double);
template double max_rel_error(const std::vector<float>&, const std::vector<double>&);
template double max_rel_error(const std::vector<double>&, const std::vector<double>&);

}  // namespace maelab
