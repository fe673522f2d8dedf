#include "arl/lstm.hpp"

namespace arl {

namespace {

Vector sigmoid(const Vector& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

}  // namespace

LstmParams::LstmParams(Eigen::Index input_size, Eigen::Index hidden_size)
    : W(Matrix::Zero(4 * hidden_size, input_size + hidden_size)), b(Vector::Zero(4 * hidden_size)) {}

void LstmParams::init_uniform(Rng& rng, double scale, double forget_bias) {
  for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = scale * (2.0 * uniform01(rng) - 1.0);
  for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = scale * (2.0 * uniform01(rng) - 1.0);
  const Eigen::Index H = hidden_size();
  b.segment(H, H).setConstant(forget_bias);
}

void LstmParams::set_zero() {
  W.setZero();
  b.setZero();
}

std::vector<LstmStep> lstm_forward(const LstmParams& p, const std::vector<Vector>& inputs) {
  const Eigen::Index H = p.hidden_size();
  const Eigen::Index I = p.input_size();
  std::vector<LstmStep> steps;
  steps.reserve(inputs.size());
  Vector h = Vector::Zero(H);
  Vector c = Vector::Zero(H);
  for (const auto& x : inputs) {
    if (x.size() != I)
      throw ValidationError("LSTM input has dimension " + std::to_string(x.size()) + ", expected " +
                            std::to_string(I));
    LstmStep s;
    s.xh.resize(I + H);
    s.xh << x, h;
    s.c_prev = c;
    const Vector z = p.W * s.xh + p.b;
    s.i = sigmoid(z.segment(0, H));
    s.f = sigmoid(z.segment(H, H));
    s.o = sigmoid(z.segment(2 * H, H));
    s.g = z.segment(3 * H, H).array().tanh().matrix();
    s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = s.o.cwiseProduct(s.tanh_c);
    h = s.h;
    c = s.c;
    steps.push_back(std::move(s));
  }
  return steps;
}

std::vector<Vector> lstm_backward(const LstmParams& p, const std::vector<LstmStep>& steps,
                                  const std::vector<Vector>& dh, LstmParams& grad) {
  const Eigen::Index H = p.hidden_size();
  const Eigen::Index I = p.input_size();
  std::vector<Vector> dx(steps.size());
  Vector dh_next = Vector::Zero(H);
  Vector dc_next = Vector::Zero(H);
  Vector dz(4 * H);
  for (std::size_t k = steps.size(); k-- > 0;) {
    const LstmStep& s = steps[k];
    const Vector dh_t = dh[k] + dh_next;
    const Vector dc = dc_next + dh_t.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
    dz.segment(0, H) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
    dz.segment(H, H) = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
    dz.segment(2 * H, H) = dh_t.cwiseProduct(s.tanh_c).cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
    dz.segment(3 * H, H) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
    grad.W.noalias() += dz * s.xh.transpose();
    grad.b += dz;
    const Vector dxh = p.W.transpose() * dz;
    dx[k] = dxh.head(I);
    dh_next = dxh.tail(H);
    dc_next = dc.cwiseProduct(s.f);
  }
  return dx;
}

void visit(LstmParams& p, const std::string& prefix, const TensorVisitor& fn) {
  fn(prefix + ".W", p.W.data(), p.W.size());
  fn(prefix + ".b", p.b.data(), p.b.size());
}

}  // namespace arl
