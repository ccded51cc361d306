#pragma once

#include <functional>

#include "sononet/rng.hpp"
#include "sononet/tensor.hpp"

namespace sononet {

// A differentiable operation under test: forward maps the point to an output
// tensor, backward returns the gradient of the scalar sum(weights * forward)
// with respect to the point. backward must use the plain-gradient rule; the
// guided rule is not a gradient and must never be checked this way.
struct DiffOp {
  std::function<Tensor(const Tensor&)> forward;
  std::function<Tensor(const Tensor&, const Tensor& weights)> backward;
};

// Central differences with the given step on each coordinate (a random subset
// when the tensor has more than max_coords elements). Returns the max relative
// error with denominator max(|analytic|, |numeric|, 1e-8).
float finite_diff_check(const DiffOp& op, const Tensor& point, float step, int max_coords,
                        Rng& rng);

}  // namespace sononet
