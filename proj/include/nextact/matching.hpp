#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nextact/data.hpp"
#include "nextact/geometry.hpp"
#include "nextact/nao.hpp"

namespace nextact {

// Weights shared by the Hungarian matching cost and the loss terms.
struct LossWeights {
  double lambda_iou = 1.0;
  double lambda_l1 = 1.0;
  double lambda_noun = 1.0;  // λ2
  double lambda_verb = 1.0;  // λ3
  double lambda_ttc = 10.0;  // λ4
  double noobj_weight = 0.1;
};

// Result of one-to-one matching: (query, target) pairs sorted by target
// index, the queries left unmatched, and the exact total assignment cost.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unmatched_queries;
  double total_cost = 0.0;
};

// Exact minimum-cost assignment of `rows` targets to `cols` queries
// (rows <= cols), by shortest augmenting paths over reduced costs with dual
// potentials. Deterministic: cost ties among unassigned columns resolve to
// the lowest column index.
inline Assignment solve_assignment(const std::vector<double>& cost, int rows, int cols) {
  if (rows > cols)
    throw ValidationError("hungarian_match: " + std::to_string(rows) +
                          " targets exceed the capacity of " + std::to_string(cols) + " queries");
  Assignment out;
  if (rows == 0) {
    for (int j = 0; j < cols; ++j) out.unmatched_queries.push_back(j);
    return out;
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(rows), 0.0);
  std::vector<double> v(static_cast<size_t>(cols), 0.0);
  std::vector<int> col4row(static_cast<size_t>(rows), -1);
  std::vector<int> row4col(static_cast<size_t>(cols), -1);
  std::vector<double> shortest(static_cast<size_t>(cols));
  std::vector<int> path(static_cast<size_t>(cols));
  std::vector<char> in_sr(static_cast<size_t>(rows));
  std::vector<char> in_sc(static_cast<size_t>(cols));
  std::vector<int> remaining(static_cast<size_t>(cols));

  for (int cur_row = 0; cur_row < rows; ++cur_row) {
    std::fill(shortest.begin(), shortest.end(), kInf);
    std::fill(path.begin(), path.end(), -1);
    std::fill(in_sr.begin(), in_sr.end(), 0);
    std::fill(in_sc.begin(), in_sc.end(), 0);
    // Descending scan order: on ties the lowest index, scanned last, wins.
    for (int j = 0; j < cols; ++j) remaining[static_cast<size_t>(j)] = cols - 1 - j;
    int num_remaining = cols;
    double min_val = 0.0;
    int i = cur_row;
    int sink = -1;
    while (sink == -1) {
      in_sr[static_cast<size_t>(i)] = 1;
      int index = -1;
      double lowest = kInf;
      for (int it = 0; it < num_remaining; ++it) {
        const int j = remaining[static_cast<size_t>(it)];
        const double r = min_val + cost[static_cast<size_t>(i) * cols + j] -
                         u[static_cast<size_t>(i)] - v[static_cast<size_t>(j)];
        if (r < shortest[static_cast<size_t>(j)]) {
          path[static_cast<size_t>(j)] = i;
          shortest[static_cast<size_t>(j)] = r;
        }
        if (shortest[static_cast<size_t>(j)] < lowest ||
            (shortest[static_cast<size_t>(j)] == lowest && row4col[static_cast<size_t>(j)] == -1)) {
          lowest = shortest[static_cast<size_t>(j)];
          index = it;
        }
      }
      min_val = lowest;
      if (!(min_val < kInf))
        throw NumericError("hungarian_match: no finite augmenting path (non-finite costs?)");
      const int j = remaining[static_cast<size_t>(index)];
      if (row4col[static_cast<size_t>(j)] == -1)
        sink = j;
      else
        i = row4col[static_cast<size_t>(j)];
      in_sc[static_cast<size_t>(j)] = 1;
      remaining[static_cast<size_t>(index)] = remaining[static_cast<size_t>(--num_remaining)];
    }
    u[static_cast<size_t>(cur_row)] += min_val;
    for (int r = 0; r < rows; ++r)
      if (in_sr[static_cast<size_t>(r)] && r != cur_row)
        u[static_cast<size_t>(r)] +=
            min_val - shortest[static_cast<size_t>(col4row[static_cast<size_t>(r)])];
    for (int j = 0; j < cols; ++j)
      if (in_sc[static_cast<size_t>(j)]) v[static_cast<size_t>(j)] -= min_val - shortest[static_cast<size_t>(j)];
    // Augment backwards from the sink.
    int j = sink;
    while (true) {
      const int r = path[static_cast<size_t>(j)];
      row4col[static_cast<size_t>(j)] = r;
      std::swap(col4row[static_cast<size_t>(r)], j);
      if (r == cur_row) break;
    }
  }

  for (int r = 0; r < rows; ++r) {
    out.pairs.emplace_back(col4row[static_cast<size_t>(r)], r);
    out.total_cost += cost[static_cast<size_t>(r) * cols + col4row[static_cast<size_t>(r)]];
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  for (int j = 0; j < cols; ++j)
    if (row4col[static_cast<size_t>(j)] == -1) out.unmatched_queries.push_back(j);
  return out;
}

// Softmax of one logits row, computed in double from tensor values.
template <class R>
std::vector<double> softmax_row(const Tensor<R>& logits, int row) {
  const int n = logits.dim(logits.rank() - 1);
  const R* base = logits.data().data() + static_cast<size_t>(row) * n;
  double mx = static_cast<double>(base[0]);
  for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(base[i]));
  std::vector<double> p(static_cast<size_t>(n));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = std::exp(static_cast<double>(base[i]) - mx);
    sum += p[static_cast<size_t>(i)];
  }
  for (auto& x : p) x /= sum;
  return p;
}

template <class R>
Box pred_box_xyxy(const Tensor<R>& boxes, int row) {
  const R* b = boxes.data().data() + static_cast<size_t>(row) * 4;
  return cxcywh_to_xyxy(static_cast<double>(b[0]), static_cast<double>(b[1]),
                        static_cast<double>(b[2]), static_cast<double>(b[3]));
}

// cost(query, target) = -p_query(noun_target)
//                     + λ_L1 * ||b - b̂||_1 + λ_iou * (1 - giou(b, b̂)),
// boxes compared in corner form. Matching is a discrete decision; no
// gradients flow through it.
template <class R>
Assignment hungarian_match(const NAOPredictionSet<R>& preds,
                           const std::vector<STATarget>& targets, const LossWeights& wts) {
  const int n_q = preds.boxes.dim(0);
  const int c_n = preds.class_logits.dim(1) - 1;
  const int m = static_cast<int>(targets.size());
  if (m > n_q)
    throw ValidationError("hungarian_match: " + std::to_string(m) +
                          " targets exceed the capacity of " + std::to_string(n_q) + " queries");
  for (const auto& tgt : targets)
    if (tgt.noun < 0 || tgt.noun >= c_n)
      throw ValidationError("hungarian_match: target noun " + std::to_string(tgt.noun) +
                            " out of vocabulary of size " + std::to_string(c_n));
  std::vector<double> cost(static_cast<size_t>(m) * n_q);
  for (int q = 0; q < n_q; ++q) {
    const auto p = softmax_row(preds.class_logits, q);
    const Box bq = pred_box_xyxy(preds.boxes, q);
    for (int t = 0; t < m; ++t) {
      const Box& bt = targets[static_cast<size_t>(t)].box;
      cost[static_cast<size_t>(t) * n_q + q] =
          -p[static_cast<size_t>(targets[static_cast<size_t>(t)].noun)] +
          wts.lambda_l1 * l1_distance(bq, bt) + wts.lambda_iou * (1.0 - giou(bq, bt));
    }
  }
  return solve_assignment(cost, m, n_q);
}

}  // namespace nextact
