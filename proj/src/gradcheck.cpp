#include "sononet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sononet {

static double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0;
  for (size_t i = 0; i < t.numel(); ++i) s += double(t[i]) * double(w[i]);
  return s;
}

float finite_diff_check(const DiffOp& op, const Tensor& point, float step, int max_coords,
                        Rng& rng) {
  Tensor out = op.forward(point);
  Tensor weights(out.shape());
  for (size_t i = 0; i < weights.numel(); ++i)
    weights[i] = rng.uniform(0.5f, 1.5f) * (rng.bernoulli(0.5) ? 1.f : -1.f);

  Tensor analytic = op.backward(point, weights);
  if (!analytic.same_shape(point))
    throw invalid_argument_error("finite_diff_check: backward returned " +
                                 analytic.shape_str() + " for point " + point.shape_str());

  std::vector<size_t> coords(point.numel());
  std::iota(coords.begin(), coords.end(), size_t(0));
  if (int(coords.size()) > max_coords) {
    rng.shuffle(coords);
    coords.resize(size_t(max_coords));
  }

  Tensor probe = point;
  float max_rel = 0.f;
  for (size_t i : coords) {
    const float orig = probe[i];
    probe[i] = orig + step;
    const double lp = weighted_sum(op.forward(probe), weights);
    probe[i] = orig - step;
    const double lm = weighted_sum(op.forward(probe), weights);
    probe[i] = orig;
    const double numeric = (lp - lm) / (2.0 * double(step));
    const double a = double(analytic[i]);
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, float(std::fabs(a - numeric) / denom));
  }
  return max_rel;
}

}  // namespace sononet
