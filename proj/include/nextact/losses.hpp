#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nextact/matching.hpp"
#include "nextact/tensor.hpp"

namespace nextact {

// Differentiable corner-form box assembled from [1]-shaped components, so
// geometric losses can be composed from primitive tensor ops and verified by
// finite differences.
template <class R>
struct BoxT {
  Tensor<R> x0, y0, x1, y1;
};

template <class R>
BoxT<R> box_from_cxcywh_row(const Tensor<R>& boxes, int row) {
  Tensor<R> r = select0(boxes, row);  // [4]
  Tensor<R> cx = slice_axis(r, 0, 0, 1);
  Tensor<R> cy = slice_axis(r, 0, 1, 1);
  Tensor<R> hw = scale(slice_axis(r, 0, 2, 1), 0.5);
  Tensor<R> hh = scale(slice_axis(r, 0, 3, 1), 0.5);
  return {sub(cx, hw), sub(cy, hh), add(cx, hw), add(cy, hh)};
}

template <class R>
BoxT<R> box_const(const Box& b) {
  auto c = [](double v) { return Tensor<R>::scalar(static_cast<R>(v)); };
  return {c(b.x0), c(b.y0), c(b.x1), c(b.y1)};
}

template <class R>
Tensor<R> box_l1(const BoxT<R>& a, const BoxT<R>& b) {
  Tensor<R> s = abs_val(sub(a.x0, b.x0));
  s = add(s, abs_val(sub(a.y0, b.y0)));
  s = add(s, abs_val(sub(a.x1, b.x1)));
  return add(s, abs_val(sub(a.y1, b.y1)));
}

template <class R>
Tensor<R> box_giou(const BoxT<R>& a, const BoxT<R>& b) {
  Tensor<R> iw = relu(sub(ew_min(a.x1, b.x1), ew_max(a.x0, b.x0)));
  Tensor<R> ih = relu(sub(ew_min(a.y1, b.y1), ew_max(a.y0, b.y0)));
  Tensor<R> inter = mul(iw, ih);
  Tensor<R> area_a = mul(sub(a.x1, a.x0), sub(a.y1, a.y0));
  Tensor<R> area_b = mul(sub(b.x1, b.x0), sub(b.y1, b.y0));
  Tensor<R> uni = sub(add(area_a, area_b), inter);
  Tensor<R> hull = mul(sub(ew_max(a.x1, b.x1), ew_min(a.x0, b.x0)),
                       sub(ew_max(a.y1, b.y1), ew_min(a.y0, b.y0)));
  return sub(ew_div(inter, uni), ew_div(sub(hull, uni), hull));
}

// Mean over matched pairs of λ_iou*(1 - giou) + λ_L1*||b - b̂||₁, boxes in
// corner form. An empty assignment yields a zero constant and has_pairs =
// false so the caller can drop the term.
template <class R>
struct BoxLossResult {
  Tensor<R> loss;
  bool has_pairs = false;
};

template <class R>
BoxLossResult<R> box_loss(const Tensor<R>& pred_boxes, const Assignment& assignment,
                          const std::vector<STATarget>& targets, const LossWeights& wts) {
  if (assignment.pairs.empty()) return {Tensor<R>::scalar(R(0)), false};
  Tensor<R> total;
  for (const auto& [q, t] : assignment.pairs) {
    BoxT<R> pred = box_from_cxcywh_row(pred_boxes, q);
    BoxT<R> gt = box_const<R>(targets[static_cast<size_t>(t)].box);
    Tensor<R> term = add(scale(add_scalar(scale(box_giou(pred, gt), -1.0), 1.0), wts.lambda_iou),
                         scale(box_l1(pred, gt), wts.lambda_l1));
    total = total.defined() ? add(total, term) : term;
  }
  return {scale(total, 1.0 / static_cast<double>(assignment.pairs.size())), true};
}

// Noun loss supervises all N_q queries: matched queries with their target
// noun at weight 1, unmatched with the no-object class down-weighted by
// wts.noobj_weight. Verb loss is plain cross-entropy on the clip-level
// logits.
template <class R>
std::pair<Tensor<R>, Tensor<R>> class_losses(const Tensor<R>& class_logits,
                                             const Assignment& assignment,
                                             const std::vector<STATarget>& targets,
                                             const Tensor<R>& verb_logits, int verb_target,
                                             double noobj_weight = 0.1) {
  const int n_q = class_logits.dim(0);
  const int c_n = class_logits.dim(1) - 1;
  std::vector<int> labels(static_cast<size_t>(n_q), c_n);
  std::vector<double> weights(static_cast<size_t>(n_q), noobj_weight);
  for (const auto& [q, t] : assignment.pairs) {
    labels[static_cast<size_t>(q)] = targets[static_cast<size_t>(t)].noun;
    weights[static_cast<size_t>(q)] = 1.0;
  }
  Tensor<R> l_noun = cross_entropy(class_logits, labels, weights);
  const int c_v = verb_logits.dim(verb_logits.rank() - 1);
  Tensor<R> l_verb = cross_entropy(reshape(verb_logits, {1, c_v}),
                                   std::vector<int>{verb_target}, std::vector<double>{1.0});
  return {l_noun, l_verb};
}

// Smooth-L1 with transition at 1 on the TTC residual, in seconds.
template <class R>
Tensor<R> ttc_loss(const Tensor<R>& ttc_pred, double ttc_target) {
  if (ttc_pred.numel() != 1)
    throw ShapeError("ttc_loss: prediction must be scalar, got " + shape_str(ttc_pred.shape()));
  return smooth_l1(add_scalar(ttc_pred, -ttc_target));
}

// Sum of squared differences between z_hat[0..T-2] and z_prime[1..T-1]; the
// target branch is detached so no gradient reaches it.
template <class R>
Tensor<R> feature_loss(const Tensor<R>& z_hat, const Tensor<R>& z_prime) {
  if (z_hat.shape() != z_prime.shape())
    throw ShapeError("feature_loss: " + shape_str(z_hat.shape()) + " vs " +
                     shape_str(z_prime.shape()));
  const int t = z_hat.dim(0);
  if (t < 2)
    throw ValidationError("feature_loss: insufficient sequence, T=" + std::to_string(t) +
                          " < 2");
  Tensor<R> pred = slice_axis(z_hat, 0, 0, t - 1);
  Tensor<R> tgt = detach(slice_axis(z_prime, 0, 1, t - 1));
  Tensor<R> d = sub(pred, tgt);
  return sum_all(mul(d, d));
}

// L = L_box + λ2 L_noun + λ3 L_verb + λ4 L_ttc + L_feat. Any non-finite
// component aborts, naming the offender.
template <class R>
Tensor<R> total_loss(const Tensor<R>& l_box, const Tensor<R>& l_noun, const Tensor<R>& l_verb,
                     const Tensor<R>& l_ttc, const Tensor<R>& l_feat, const LossWeights& wts) {
  const std::pair<const char*, const Tensor<R>*> parts[] = {
      {"box", &l_box}, {"noun", &l_noun}, {"verb", &l_verb}, {"ttc", &l_ttc}, {"feature", &l_feat}};
  for (const auto& [name, t] : parts)
    if (!std::isfinite(static_cast<double>(t->item())))
      throw NumericError(std::string("total_loss: non-finite ") + name + " component");
  Tensor<R> total = add(l_box, scale(l_noun, wts.lambda_noun));
  total = add(total, scale(l_verb, wts.lambda_verb));
  total = add(total, scale(l_ttc, wts.lambda_ttc));
  return add(total, l_feat);
}

}  // namespace nextact
