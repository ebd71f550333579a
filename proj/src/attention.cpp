#include "latentwarp/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace latentwarp {

void AttentionTensors::validate() const {
  if (q.cols() != k.cols() || k.cols() != v.cols()) {
    throw std::invalid_argument("AttentionTensors(" + site_id + "): Q, K, V dims differ");
  }
  if (k.rows() != v.rows()) {
    throw std::invalid_argument("AttentionTensors(" + site_id + "): K and V token counts differ");
  }
  if (static_cast<Eigen::Index>(height) * width != k.rows()) {
    throw std::invalid_argument("AttentionTensors(" + site_id + "): layout does not match token count");
  }
}

const InjectedKV* InjectionPlan::find(const std::string& site_id) const {
  auto it = sites.find(site_id);
  return it == sites.end() ? nullptr : &it->second;
}

TokenMatrix attention_weights(const TokenMatrix& q, const TokenMatrix& k) {
  if (q.cols() != k.cols() || q.cols() == 0) {
    throw std::invalid_argument("attention: query/key dims differ (" + std::to_string(q.cols()) +
                                " vs " + std::to_string(k.cols()) + ")");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  TokenMatrix scores = (q * k.transpose()) * scale;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
  return scores;
}

TokenMatrix attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v) {
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: K and V token counts differ");
  return attention_weights(q, k) * v;
}

TokenMatrix cross_view_attention(const TokenMatrix& q_next, const InjectionPlan& plan,
                                 const std::string& site_id) {
  const InjectedKV* entry = plan.find(site_id);
  if (entry == nullptr) {
    throw std::invalid_argument("cross_view_attention: no injected K/V for site '" + site_id + "'");
  }
  return attention(q_next, entry->k, entry->v);
}

Grid tokens_to_grid(const TokenMatrix& tokens, int height, int width) {
  if (static_cast<Eigen::Index>(height) * width != tokens.rows()) {
    throw std::invalid_argument("tokens_to_grid: layout does not match token count");
  }
  const int dim = static_cast<int>(tokens.cols());
  Grid g(dim, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index t = static_cast<Eigen::Index>(y) * width + x;
      for (int c = 0; c < dim; ++c) g(c, y, x) = tokens(t, c);
    }
  }
  return g;
}

TokenMatrix grid_to_tokens(const Grid& grid) {
  TokenMatrix t(static_cast<Eigen::Index>(grid.shape().pixels()), grid.channels());
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      const Eigen::Index r = static_cast<Eigen::Index>(y) * grid.width() + x;
      for (int c = 0; c < grid.channels(); ++c) t(r, c) = grid(c, y, x);
    }
  }
  return t;
}

InjectedKV warp_kv(const AttentionTensors& tensors, const WarpResult& warp) {
  tensors.validate();
  // warp_with_result rejects non-integer resolution ratios.
  Grid k = warp_with_result(tokens_to_grid(tensors.k, tensors.height, tensors.width), warp);
  Grid v = warp_with_result(tokens_to_grid(tensors.v, tensors.height, tensors.width), warp);
  return InjectedKV{tensors.height, tensors.width, grid_to_tokens(k), grid_to_tokens(v)};
}

}  // namespace latentwarp
