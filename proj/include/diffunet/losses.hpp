#pragma once

#include <torch/torch.h>

namespace diffunet {

constexpr double kDiceSmooth = 1e-5;
constexpr double kBceClamp = 1e-7;

/// Scalar summary of one loss evaluation.
struct LossReport {
  double dice = 0.0;
  double bce = 0.0;
  double mse = 0.0;
  double total = 0.0;
};

/// Differentiable loss terms; `total` = dice + bce + mse.
struct LossTerms {
  torch::Tensor dice, bce, mse, total;
  LossReport report() const;
};

// Inputs are (N, D, W, H) or batched (B, N, D, W, H) probabilities and
// one-hot targets of the same shape.

/// Soft Dice averaged over channels (and batch elements), background included.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double smooth = kDiceSmooth);
/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target);
torch::Tensor mse_loss(const torch::Tensor& pred, const torch::Tensor& target);
LossTerms total_loss(const torch::Tensor& pred, const torch::Tensor& target);

}  // namespace diffunet
