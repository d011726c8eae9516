// tests/gradcheck.hpp

// Copyright 2026  The pasevec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference oracle. Independent of every analytic backward
// pass in the library: it only perturbs parameter values and re-evaluates the
// scalar loss.

#ifndef PASEVEC_TESTS_GRADCHECK_HPP_
#define PASEVEC_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "pasevec/nn/param.hpp"

namespace pasevec::testing {

struct GradCheckResult {
  double relative_error = 0;  // ||analytic - numeric|| / max(norms)
  double analytic_norm = 0;
  double numeric_norm = 0;
  long entries = 0;
  std::string worst_param;
};

// `analytic` must already hold the gradient in each Param::grad.
inline GradCheckResult finite_difference_check(
    const nn::ParamList<double>& params, const std::function<double()>& loss,
    double step = 1e-5) {
  GradCheckResult res;
  double diff2 = 0, a2 = 0, n2 = 0, worst = -1;
  for (auto* p : params) {
    double pdiff = 0;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& v = p->value.data()[i];
      const double saved = v;
      v = saved + step;
      const double lp = loss();
      v = saved - step;
      const double lm = loss();
      v = saved;
      const double num = (lp - lm) / (2 * step);
      const double ana = p->grad.data()[i];
      diff2 += (ana - num) * (ana - num);
      pdiff += (ana - num) * (ana - num);
      a2 += ana * ana;
      n2 += num * num;
      ++res.entries;
    }
    if (pdiff > worst) {
      worst = pdiff;
      res.worst_param = p->name;
    }
  }
  res.analytic_norm = std::sqrt(a2);
  res.numeric_norm = std::sqrt(n2);
  const double denom = std::max({res.analytic_norm, res.numeric_norm, 1e-300});
  res.relative_error = std::sqrt(diff2) / denom;
  return res;
}

}  // namespace pasevec::testing

#endif  // PASEVEC_TESTS_GRADCHECK_HPP_
