#pragma once

#include "ipgp/common.hpp"

namespace ipgp {

/// Adam with bias correction. step() takes the ascent gradient and returns
/// the increment to add to the parameter vector.
class Adam {
 public:
  Adam(Eigen::Index size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8)
      : m_(Vec::Zero(size)),
        v_(Vec::Zero(size)),
        lr_(learning_rate),
        beta1_(beta1),
        beta2_(beta2),
        eps_(epsilon) {}

  Vec step(const Vec& gradient) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
    v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseAbs2();
    const double mc = 1.0 - std::pow(beta1_, t_);
    const double vc = 1.0 - std::pow(beta2_, t_);
    const Vec denom = ((v_ / vc).array().sqrt() + eps_).matrix();
    return (lr_ / mc) * m_.cwiseQuotient(denom);
  }

 private:
  Vec m_, v_;
  int t_ = 0;
  double lr_, beta1_, beta2_, eps_;
};

}  // namespace ipgp
