#include "dvr/net/loss.hpp"

#include <cmath>

#include "dvr/error.hpp"

namespace dvr::nn {

void LossWeights::validate() const {
  if (!(w_hr > 0.0 && w_rr > 0.0) || std::abs(w_hr + w_rr - 1.0) > 1e-12) {
    throw InvalidArgument("loss weights must be positive and sum to 1");
  }
}

double loss_single(double pred, double label) {
  const double e = pred - label;
  return e * e;
}

double loss_joint(double pred_hr, double pred_rr, double hr, double rr, const LossWeights& w) {
  return std::sqrt(w.w_hr * loss_single(pred_hr, hr) + w.w_rr * loss_single(pred_rr, rr));
}

BatchLoss batch_loss(LossKind kind, std::span<const double> pred, std::span<const double> labels,
                     std::size_t n_outputs, const LossWeights& w) {
  if (pred.size() != labels.size() || n_outputs == 0 || pred.size() % n_outputs != 0 || pred.empty()) {
    throw InvalidArgument("batch_loss: prediction/label shapes disagree");
  }
  BatchLoss out;
  out.grad.assign(pred.size(), 0.0);
  if (kind == LossKind::mse) {
    const auto n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      out.value += loss_single(pred[i], labels[i]);
      out.grad[i] = 2.0 * (pred[i] - labels[i]) / n;
    }
    out.value /= n;
    return out;
  }
  if (n_outputs != 2) throw InvalidArgument("batch_loss: the joint loss needs two outputs (HR, RR)");
  const std::size_t batch = pred.size() / 2;
  for (std::size_t b = 0; b < batch; ++b) {
    const double eh = pred[2 * b] - labels[2 * b];
    const double er = pred[2 * b + 1] - labels[2 * b + 1];
    const double l = std::sqrt(w.w_hr * eh * eh + w.w_rr * er * er);
    out.value += l;
    if (l > 0.0) {
      out.grad[2 * b] = w.w_hr * eh / (l * static_cast<double>(batch));
      out.grad[2 * b + 1] = w.w_rr * er / (l * static_cast<double>(batch));
    }
  }
  out.value /= static_cast<double>(batch);
  return out;
}

}  // namespace dvr::nn
