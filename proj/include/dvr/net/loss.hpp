#pragma once

#include <span>
#include <vector>

namespace dvr::nn {

struct LossWeights {
  double w_hr = 0.75;
  double w_rr = 0.25;
  void validate() const;
};

/// Squared error (pred - label)^2.
double loss_single(double pred, double label);

/// sqrt(w_hr * (hr - pred_hr)^2 + w_rr * (rr - pred_rr)^2).
double loss_joint(double pred_hr, double pred_rr, double hr, double rr, const LossWeights& w = {});

enum class LossKind { mse, joint };

struct BatchLoss {
  double value = 0.0;
  std::vector<double> grad;  ///< dL/d(pred), same layout as the predictions
};

/// Mean loss over a batch of row-major [batch x n_outputs] predictions.
/// `mse` averages the squared error over every output; `joint` needs two
/// outputs (HR, RR) and averages loss_joint over the batch.
BatchLoss batch_loss(LossKind kind, std::span<const double> pred, std::span<const double> labels,
                     std::size_t n_outputs, const LossWeights& w = {});

}  // namespace dvr::nn
