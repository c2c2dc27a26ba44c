#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "nextact/data.hpp"
#include "nextact/nn.hpp"

namespace nextact {

enum class QueryTag { roi, learnable };

template <class R>
struct ObjectQuerySet {
  Tensor<R> queries;  // [N_q, D]
  std::vector<QueryTag> provenance;
  std::vector<std::optional<Box>> source_box;
};

template <class R>
struct NAOPredictionSet {
  Tensor<R> z_nao;         // [N_q, D]
  Tensor<R> boxes;         // [N_q, 4] cxcywh, each coordinate in (0,1)
  Tensor<R> class_logits;  // [N_q, C_n+1], last index = no-object
};

// Builds N_q object queries for the last observed frame: one per real
// detection (mean-pooled grid cells under the box, then a linear projection),
// the rest filled with learnable tokens.
template <class R>
struct QueryBuilder {
  int h = 0, w = 0, d = 0, n_q = 0;
  LinearLayer<R> roi_proj;
  Tensor<R> learnable;  // [N_q, D]

  QueryBuilder() = default;
  QueryBuilder(ParamSet<R>& ps, const std::string& name, int h_, int w_, int d_, int n_q_,
               Rng& rng)
      : h(h_), w(w_), d(d_), n_q(n_q_), roi_proj(ps, name + ".roi_proj", d_, d_, rng) {
    if (n_q < 1) throw ValidationError("query builder: N_q must be >= 1");
    learnable = ps.add(name + ".tokens", Tensor<R>::zeros({n_q, d}));
    init::gaussian(learnable, 0.02, rng);
  }

  // Grid cells with positive-area overlap against the box; a zero-area or
  // out-of-grid box falls back to the single cell nearest its center.
  std::vector<int> cells_under(const Box& b) const {
    std::vector<int> cells;
    if (b.area() > 0) {
      const int gx0 = std::max(0, static_cast<int>(std::floor(b.x0 * w)));
      const int gx1 = std::min(w - 1, static_cast<int>(std::ceil(b.x1 * w)) - 1);
      const int gy0 = std::max(0, static_cast<int>(std::floor(b.y0 * h)));
      const int gy1 = std::min(h - 1, static_cast<int>(std::ceil(b.y1 * h)) - 1);
      for (int gy = gy0; gy <= gy1; ++gy)
        for (int gx = gx0; gx <= gx1; ++gx) {
          const double cw = std::min(b.x1, (gx + 1.0) / w) - std::max(b.x0, gx / double(w));
          const double ch = std::min(b.y1, (gy + 1.0) / h) - std::max(b.y0, gy / double(h));
          if (cw > 0 && ch > 0) cells.push_back(gy * w + gx);
        }
    }
    if (cells.empty()) {
      const int gx = std::clamp(static_cast<int>(std::floor(b.cx() * w)), 0, w - 1);
      const int gy = std::clamp(static_cast<int>(std::floor(b.cy() * h)), 0, h - 1);
      cells.push_back(gy * w + gx);
    }
    return cells;
  }

  ObjectQuerySet<R> operator()(const Tensor<R>& z_t_grid,
                               const DetectionSet& last_detections) const {
    if (z_t_grid.rank() != 3 || z_t_grid.dim(0) != h || z_t_grid.dim(1) != w ||
        z_t_grid.dim(2) != d)
      throw ShapeError("query builder: grid " + shape_str(z_t_grid.shape()) + ", expected [" +
                       std::to_string(h) + "," + std::to_string(w) + "," + std::to_string(d) +
                       "]");
    ObjectQuerySet<R> out;
    int n_roi = 0;
    for (const auto& det : last_detections.d)
      if (!det.is_dummy && n_roi < n_q) ++n_roi;

    // Constant pooling matrix: row = query, 1/k over the k cells of its box.
    std::vector<R> pool(static_cast<size_t>(n_roi) * h * w, R(0));
    int row = 0;
    for (const auto& det : last_detections.d) {
      if (det.is_dummy || row >= n_q) continue;
      const auto cells = cells_under(det.box);
      const R inv = R(1) / static_cast<R>(cells.size());
      for (int cidx : cells) pool[static_cast<size_t>(row) * h * w + cidx] = inv;
      out.provenance.push_back(QueryTag::roi);
      out.source_box.push_back(det.box);
      ++row;
    }
    for (int i = n_roi; i < n_q; ++i) {
      out.provenance.push_back(QueryTag::learnable);
      out.source_box.push_back(std::nullopt);
    }

    Tensor<R> grid_flat = reshape(z_t_grid, {h * w, d});
    if (n_roi == 0) {
      out.queries = slice_axis(learnable, 0, 0, n_q);  // copy keeps caller from aliasing params
      return out;
    }
    Tensor<R> pool_m = Tensor<R>::from_data({n_roi, h * w}, std::move(pool));
    Tensor<R> rois = roi_proj(matmul(pool_m, grid_flat));
    if (n_roi == n_q) {
      out.queries = rois;
      return out;
    }
    out.queries = concat<R>({rois, slice_axis(learnable, 0, n_roi, n_q - n_roi)}, 0);
    return out;
  }
};

// Decoder over the object queries with the last-frame memory as key/value.
// `spatial_only` drops the Q detection tokens from the memory.
template <class R>
struct NaoDecoder {
  int d = 0, hw = 0;
  bool spatial_only = false;
  std::vector<DecoderBlock<R>> blocks;

  NaoDecoder() = default;
  NaoDecoder(ParamSet<R>& ps, const std::string& name, int d_, int hw_, int heads, int layers,
             int ffn_hidden, bool spatial_only_, Rng& rng)
      : d(d_), hw(hw_), spatial_only(spatial_only_) {
    if (layers < 1) throw ValidationError("nao decoder: need at least one layer");
    for (int l = 0; l < layers; ++l)
      blocks.emplace_back(ps, name + ".block" + std::to_string(l), d, heads, ffn_hidden, rng);
  }

  Tensor<R> operator()(const Tensor<R>& queries, const Tensor<R>& z_lt) const {
    if (queries.rank() != 2 || queries.dim(1) != d)
      throw ShapeError("nao decoder: queries " + shape_str(queries.shape()));
    if (z_lt.rank() != 2 || z_lt.dim(1) != d)
      throw ShapeError("nao decoder: memory " + shape_str(z_lt.shape()));
    Tensor<R> memory = spatial_only ? slice_axis(z_lt, 0, 0, hw) : z_lt;
    Tensor<R> x = queries;
    for (const auto& block : blocks) x = block(x, memory, nullptr, nullptr);
    return x;
  }
};

// Box/class prediction heads: a 3-layer MLP squashed to (0,1) center-size
// boxes, and a linear head over C_n + 1 classes (the extra index meaning
// "no object").
template <class R>
struct NaoHeads {
  int c_n = 0;
  Mlp<R> box_mlp;
  LinearLayer<R> class_head;

  NaoHeads() = default;
  NaoHeads(ParamSet<R>& ps, const std::string& name, int d, int c_n_, Rng& rng)
      : c_n(c_n_),
        box_mlp(ps, name + ".box", {d, d, d, 4}, rng),
        class_head(ps, name + ".cls", d, c_n_ + 1, rng) {}

  NAOPredictionSet<R> operator()(const Tensor<R>& z_nao) const {
    NAOPredictionSet<R> out;
    out.z_nao = z_nao;
    out.boxes = sigmoid(box_mlp(z_nao));
    out.class_logits = class_head(z_nao);
    return out;
  }
};

}  // namespace nextact
