#include "diffunet/losses.hpp"

#include "diffunet/error.hpp"

namespace diffunet {

namespace {

void check_pair(const torch::Tensor& pred, const torch::Tensor& target, const char* what) {
  if (!pred.sizes().equals(target.sizes())) {
    throw ShapeError(std::string(what) + ": prediction " + c10::str(pred.sizes()) + " vs target " +
                     c10::str(target.sizes()));
  }
  if (pred.dim() != 4 && pred.dim() != 5) throw ShapeError(std::string(what) + ": expected 4-D or 5-D input");
}

}  // namespace

LossReport LossTerms::report() const {
  return {dice.item<double>(), bce.item<double>(), mse.item<double>(), total.item<double>()};
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double smooth) {
  check_pair(pred, target, "dice_loss");
  // Reduce spatial axes only, keeping (channel) or (batch, channel).
  const std::vector<int64_t> spatial = pred.dim() == 4 ? std::vector<int64_t>{1, 2, 3}
                                                        : std::vector<int64_t>{2, 3, 4};
  auto intersection = (pred * target).sum(spatial);
  auto denom = pred.sum(spatial) + target.sum(spatial);
  auto per_channel = 1.0 - (2.0 * intersection + smooth) / (denom + smooth);
  return per_channel.mean();
}

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_pair(pred, target, "bce_loss");
  auto p = pred.clamp(kBceClamp, 1.0 - kBceClamp);
  return -(target * torch::log(p) + (1.0 - target) * torch::log(1.0 - p)).mean();
}

torch::Tensor mse_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_pair(pred, target, "mse_loss");
  return (pred - target).pow(2).mean();
}

LossTerms total_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  LossTerms terms;
  terms.dice = diffunet::dice_loss(pred, target);
  terms.bce = diffunet::bce_loss(pred, target);
  terms.mse = diffunet::mse_loss(pred, target);
  terms.total = terms.dice + terms.bce + terms.mse;
  return terms;
}

}  // namespace diffunet
