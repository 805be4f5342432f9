#pragma once

#include <sstream>
#include <string>

#include <torch/torch.h>

namespace scanet {

inline std::string shape_string(const torch::Tensor &t) {
  if (!t.defined()) return "<undefined>";
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

/// Index of the first maximum along the last axis of a 1-D float tensor (lowest index wins).
inline int first_argmax(const torch::Tensor &v) {
  const auto c = v.to(torch::kDouble).contiguous();
  const double *p = c.data_ptr<double>();
  int best = 0;
  for (int i = 1; i < c.numel(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

} // namespace scanet
