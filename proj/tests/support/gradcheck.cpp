#include "support/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "titlegen/errors.hpp"

namespace titlegen::testsupport {

std::vector<double> finite_difference_grad(
    tensor::Tensor& x, const std::function<double()>& forward, double eps) {
  std::vector<double>& values = x.values_mut();
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = forward();
    values[i] = saved - eps;
    const double down = forward();
    values[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

bool check_gradients(std::span<tensor::Tensor> inputs,
                     const std::function<tensor::Tensor()>& forward,
                     double rel_tol, double abs_tol, std::string* detail,
                     double eps) {
  std::vector<std::vector<double>> analytic;
  {
    for (tensor::Tensor& t : inputs) t.zero_grad();
    tensor::Tape tape;
    const tensor::Tensor loss = forward();
    if (loss.numel() != 1)
      throw ContractError("check_gradients: forward must return a scalar");
    tape.backward(loss);
    for (const tensor::Tensor& t : inputs) analytic.push_back(t.grad());
  }
  const auto scalar_forward = [&forward] { return forward().item(); };
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::vector<double> fd =
        finite_difference_grad(inputs[k], scalar_forward, eps);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double ad = analytic[k][i];
      const double tol =
          abs_tol + rel_tol * std::max(std::abs(ad), std::abs(fd[i]));
      if (std::abs(ad - fd[i]) > tol) {
        if (detail) {
          std::ostringstream os;
          os << "input " << k << " element " << i << ": analytic " << ad
             << " vs finite-difference " << fd[i];
          *detail = os.str();
        }
        return false;
      }
    }
  }
  return true;
}

}  // namespace titlegen::testsupport
