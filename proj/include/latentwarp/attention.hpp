#pragma once

#include <Eigen/Core>
#include <map>
#include <string>

#include "latentwarp/geometry.hpp"
#include "latentwarp/grid.hpp"

namespace latentwarp {

/// tokens x dim, tokens in row-major spatial order.
using TokenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct AttentionTensors {
  std::string site_id;
  int height = 0;
  int width = 0;
  TokenMatrix q;
  TokenMatrix k;
  TokenMatrix v;

  void validate() const;
};

struct InjectedKV {
  int height = 0;
  int width = 0;
  TokenMatrix k;
  TokenMatrix v;
};

/// Keys and values to substitute at each attention site, already warped
/// into the receiving view's layout.
struct InjectionPlan {
  std::map<std::string, InjectedKV> sites;

  bool empty() const { return sites.empty(); }
  const InjectedKV* find(const std::string& site_id) const;
};

/// Row-wise Softmax(Q K^T / sqrt(d)).
TokenMatrix attention_weights(const TokenMatrix& q, const TokenMatrix& k);

/// Softmax(Q K^T / sqrt(d)) V
TokenMatrix attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v);

/// Attention of the receiving view's queries over the injected keys/values
/// for `site_id`. Throws std::invalid_argument when the plan has no entry.
TokenMatrix cross_view_attention(const TokenMatrix& q_next, const InjectionPlan& plan,
                                 const std::string& site_id);

/// Token matrix <-> dim x h x w grid.
Grid tokens_to_grid(const TokenMatrix& tokens, int height, int width);
TokenMatrix grid_to_tokens(const Grid& grid);

/// Spatially warps a site's K and V through a warp field (resampled to the
/// site's resolution when they differ by an integer factor).
InjectedKV warp_kv(const AttentionTensors& tensors, const WarpResult& warp);

}  // namespace latentwarp
