#pragma once

#include <functional>
#include <string>
#include <vector>

#include "arl/common.hpp"

namespace arl {

/// Standard LSTM cell: input, forget and output gates plus a tanh candidate.
/// Weights act on the stacked vector [x; h_prev]; gate rows are ordered i, f, o, g.
struct LstmParams {
  Matrix W;  // 4H x (I + H)
  Vector b;  // 4H

  LstmParams() = default;
  LstmParams(Eigen::Index input_size, Eigen::Index hidden_size);

  Eigen::Index input_size() const { return W.cols() - hidden_size(); }
  Eigen::Index hidden_size() const { return b.size() / 4; }

  /// Uniform in [-scale, scale], forget-gate bias set to `forget_bias`.
  void init_uniform(Rng& rng, double scale, double forget_bias);
  void set_zero();
};

struct LstmStep {
  Vector xh;  // [x; h_prev]
  Vector c_prev;
  Vector i, f, o, g;
  Vector c, tanh_c, h;
};

/// Runs the cell over `inputs` from zero initial state; each returned step holds the cache for BPTT.
std::vector<LstmStep> lstm_forward(const LstmParams& p, const std::vector<Vector>& inputs);

/// BPTT. `dh[t]` is the loss gradient w.r.t. h_t from outside the recurrence.
/// Accumulates into `grad`; returns the gradient w.r.t. each input.
std::vector<Vector> lstm_backward(const LstmParams& p, const std::vector<LstmStep>& steps,
                                  const std::vector<Vector>& dh, LstmParams& grad);

/// Visits every tensor of a parameter bundle as (name, data pointer, size).
using TensorVisitor = std::function<void(const std::string&, double*, Eigen::Index)>;

void visit(LstmParams& p, const std::string& prefix, const TensorVisitor& fn);

}  // namespace arl
