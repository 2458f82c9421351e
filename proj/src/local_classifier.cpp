#include "iag/local_classifier.hpp"

#include <algorithm>
#include <string>

#include "iag/error.hpp"
#include "iag/ops.hpp"

namespace iag {

Tensor bag_feature(const FeatureMap& fm, std::span<const std::size_t> members) {
  if (members.empty()) throw InvalidArgument("bag_feature: empty bag");
  return mean_rows(fm.features, members);
}

Tensor bag_prob(const Tensor& bag, const Tensor& w_local) {
  if (bag.size() != w_local.size())
    throw ShapeError("bag_prob: bag feature " + shape_string(bag.shape()) + " vs head " +
                     shape_string(w_local.shape()));
  return sigmoid(dot(w_local, bag));
}

Tensor instance_prob(const FeatureMap& fm, const Tensor& w_local) {
  if (w_local.size() != fm.channels)
    throw ShapeError("instance_prob: w_l has " + std::to_string(w_local.size()) + " entries, features have " +
                     std::to_string(fm.channels) + " channels");
  return sigmoid(project_rows(fm.features, w_local));
}

Tensor unlabeled_mil_loss(const Tensor& prob_fg, const Tensor& prob_bg) {
  return add(binary_cross_entropy(prob_fg, 1), binary_cross_entropy(prob_bg, 0));
}

Tensor labeled_instance_loss(const Tensor& q, std::span<const std::uint8_t> mask) {
  if (mask.size() != q.size())
    throw ShapeError("labeled_instance_loss: mask has " + std::to_string(mask.size()) + " labels for " +
                     std::to_string(q.size()) + " instances");
  return binary_cross_entropy(q, mask);
}

double adaptive_lambda(std::span<const double> probs) {
  if (probs.empty()) throw InvalidArgument("adaptive_lambda: empty field");
  return *std::max_element(probs.begin(), probs.end());
}

Tensor local_loss(const LocalTerms& terms, const PositiveCounts& counts) {
  Tensor total;
  auto accumulate = [&](const Tensor& t) { total = total.defined() ? add(total, t) : t; };

  if (terms.attention.defined() || terms.labeled_local.defined()) {
    if (counts.labeled == 0) throw InvalidArgument("local_loss: labeled term present but N_p^l = 0");
    const double w = 1.0 / static_cast<double>(counts.labeled);
    if (terms.attention.defined()) accumulate(scale(terms.attention, w));
    if (terms.labeled_local.defined()) accumulate(scale(terms.labeled_local, w));
  }
  if (terms.unlabeled_local.defined() && counts.unlabeled > 0)
    accumulate(scale(terms.unlabeled_local, terms.lambda / static_cast<double>(counts.unlabeled)));
  return total;
}

}  // namespace iag
