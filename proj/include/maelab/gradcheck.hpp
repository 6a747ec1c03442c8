#pragma once

#include <functional>

#include "maelab/tensor.hpp"

namespace maelab {

// Compares the analytic gradient of a scalar-valued function of x against
// central finite differences (f(x+h) - f(x-h)) / (2h), coordinate by
// coordinate. Returns the max relative error with denominator
// max(|analytic|, |numeric|, 1e-8). Throws if f's output is not scalar.
template <typename T>
double grad_check(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x,
                  double h);

// Central differences of a scalar-valued function, one value per coordinate.
// Evaluating the oracle in f64 keeps the difference quotient stable when the
// gradient under test was produced by an f32 graph.
template <typename T>
std::vector<double> central_differences(const std::function<TensorT<T>(const TensorT<T>&)>& f,
                                        const TensorT<T>& x, double h);

// Max relative error between an analytic gradient and a reference,
// denominator max(|analytic|, |reference|, 1e-8).
template <typename A>
double max_rel_error(const std::vector<A>& analytic, const std::vector<double>& reference);

}  // namespace maelab
