// Copyright 2026 The motret Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Shared fixtures and brute-force oracles for the test suites. The oracles
// reimplement each contract directly from its definition and never call
// into the code under test for the quantity being checked.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "motret/autograd.hpp"
#include "motret/evaluation.hpp"
#include "motret/motion_data.hpp"
#include "motret/retrieval_index.hpp"

namespace motret::testing {

using Rng = std::mt19937_64;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline RowVector random_row(Eigen::Index cols, Rng& rng) {
  return random_matrix(1, cols, rng);
}

/// Values exactly representable in f32, so f32 round-trips are lossless.
inline Matrix random_f32_matrix(Eigen::Index rows, Eigen::Index cols,
                                Rng& rng) {
  Matrix m = random_matrix(rows, cols, rng, 3.0);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  return m;
}

inline std::string random_id(Rng& rng, int max_len = 12) {
  static constexpr char kAlphabet[] =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-";
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> pick(0, sizeof(kAlphabet) - 2);
  std::string s(static_cast<std::size_t>(len(rng)), 'x');
  for (char& c : s) c = kAlphabet[pick(rng)];
  return s;
}

inline std::vector<std::string> unique_ids(int n, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> ids;
  while (static_cast<int>(ids.size()) < n) {
    std::string id = random_id(rng) + "_" + std::to_string(ids.size());
    if (seen.insert(id).second) ids.push_back(std::move(id));
  }
  return ids;
}

/// Part-level sequence T x 45.
inline Matrix random_parts(int frames, Rng& rng) {
  return random_matrix(frames, kPartFeatures, rng);
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("motret_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const {
    return path / name;
  }
};

namespace oracle {

/// Full scan of the stored f32 vectors: score every entry, sort everything
/// by (score desc, id asc) and keep the first k.
inline std::vector<std::pair<std::string, double>> knn(
    const EmbeddingStore& store, const std::vector<double>& q, int k) {
  double norm = 0.0;
  for (double v : q) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<std::pair<std::string, double>> all;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto vec = store.vector(i);
    double dot = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d)
      dot += static_cast<double>(vec[d]) * q[d];
    all.emplace_back(store.ids()[i], std::clamp(dot / norm, -1.0, 1.0));
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
  return all;
}

/// DCG with 1-based positions: sum (2^r - 1) / log2(i + 1).
inline double dcg(const std::vector<double>& rels, int p) {
  double total = 0.0;
  const int n = std::min<int>(p, static_cast<int>(rels.size()));
  for (int i = 1; i <= n; ++i)
    total += (std::pow(2.0, rels[i - 1]) - 1.0) / std::log2(i + 1.0);
  return total;
}

inline double ndcg(std::vector<double> rels, int p) {
  const double actual = dcg(rels, p);
  std::sort(rels.begin(), rels.end(), std::greater<>());
  const double ideal = dcg(rels, p);
  return ideal == 0.0 ? 0.0 : actual / ideal;
}

inline double recall(const std::vector<int>& ranks, int k) {
  int hits = 0;
  for (int r : ranks) hits += r <= k ? 1 : 0;
  return 100.0 * hits / static_cast<double>(ranks.size());
}

inline double mean(const std::vector<int>& ranks) {
  double s = 0.0;
  for (int r : ranks) s += r;
  return s / static_cast<double>(ranks.size());
}

inline double median(std::vector<int> ranks) {
  std::sort(ranks.begin(), ranks.end());
  const std::size_t n = ranks.size();
  return n % 2 == 1 ? ranks[n / 2] : 0.5 * (ranks[n / 2 - 1] + ranks[n / 2]);
}

struct Report {
  std::map<int, double> recall;
  double mean_rank = 0.0;
  double median_rank = 0.0;
  double ndcg_10 = 0.0;
  double ndcg_full = 0.0;
  int zero_queries = 0;
};

/// Standalone evaluator: `scores(q, m)` is the similarity of query q to
/// item m; items are ranked by (score desc, id asc).
inline Report evaluate(const Matrix& scores,
                       const std::vector<std::string>& item_ids,
                       const std::vector<std::set<int>>& relevant,
                       const Matrix& rel, const std::vector<int>& ks) {
  const int nq = static_cast<int>(scores.rows());
  const int ni = static_cast<int>(scores.cols());
  std::vector<int> ranks;
  Report r;
  for (int q = 0; q < nq; ++q) {
    std::vector<int> order(ni);
    for (int m = 0; m < ni; ++m) order[m] = m;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores(q, a) != scores(q, b)) return scores(q, a) > scores(q, b);
      return item_ids[a] < item_ids[b];
    });
    int best = ni + 1;
    std::vector<double> rels;
    for (int pos = 0; pos < ni; ++pos) {
      if (relevant[q].count(order[pos])) best = std::min(best, pos + 1);
      rels.push_back(rel(q, order[pos]));
    }
    ranks.push_back(best);
    if (std::all_of(rels.begin(), rels.end(), [](double v) { return v == 0; }))
      ++r.zero_queries;
    r.ndcg_10 += ndcg(rels, 10) / nq;
    r.ndcg_full += ndcg(rels, ni) / nq;
  }
  for (int k : ks) r.recall[k] = recall(ranks, k);
  r.mean_rank = mean(ranks);
  r.median_rank = median(ranks);
  return r;
}


/// Scores of every query row against every stored entry, in store order,
/// computed from the stored f32 vectors.
inline Matrix scan_scores(const EmbeddingStore& store, const Matrix& queries) {
  Matrix out(queries.rows(), static_cast<Eigen::Index>(store.size()));
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    std::vector<double> row(queries.row(q).data(),
                            queries.row(q).data() + queries.cols());
    const auto all = knn(store, row, static_cast<int>(store.size()));
    std::map<std::string, double> by_id(all.begin(), all.end());
    for (std::size_t i = 0; i < store.size(); ++i)
      out(q, static_cast<Eigen::Index>(i)) = by_id.at(store.ids()[i]);
  }
  return out;
}

}  // namespace oracle

/// A random evaluation problem: queries, a store with deliberate score
/// ties, ground truth and graded relevance in {0, 0.25, ..., 1}.
struct ProtocolInstance {
  std::vector<std::pair<std::string, RowVector>> entries;
  EmbeddingStore store;
  Matrix queries;
  std::vector<std::string> query_ids;
  GroundTruth gt;
  RelevanceMatrix relevance;
  // Oracle view, indexed by store position.
  std::vector<std::set<int>> relevant;
  Matrix rel;
};

inline ProtocolInstance random_protocol_instance(Rng& rng, int max_items,
                                                 int max_queries) {
  std::uniform_int_distribution<int> n_items_dist(1, max_items);
  std::uniform_int_distribution<int> n_queries_dist(1, max_queries);
  std::uniform_int_distribution<int> dim_dist(2, 8);
  std::uniform_int_distribution<int> level(0, 4);
  std::bernoulli_distribution duplicate(0.2), extra_gt(0.3);

  const int n = n_items_dist(rng), nq = n_queries_dist(rng), d = dim_dist(rng);
  ProtocolInstance inst;
  const auto ids = unique_ids(n, rng);
  auto& entries = inst.entries;
  for (int i = 0; i < n; ++i) {
    RowVector v = random_row(d, rng);
    if (i > 0 && duplicate(rng))
      v = entries[std::uniform_int_distribution<int>(0, i - 1)(rng)].second;
    entries.emplace_back(ids[i], v);
  }
  inst.store = EmbeddingStore::build(entries);
  inst.queries = random_matrix(nq, d, rng);
  inst.query_ids = unique_ids(nq, rng);
  for (auto& q : inst.query_ids) q = "q" + q;

  inst.relevant.resize(nq);
  inst.rel = Matrix::Zero(nq, n);
  std::uniform_int_distribution<int> item(0, n - 1);
  for (int q = 0; q < nq; ++q) {
    inst.relevant[q].insert(item(rng));
    while (extra_gt(rng)) inst.relevant[q].insert(item(rng));
    for (int m : inst.relevant[q]) inst.gt[inst.query_ids[q]].insert(ids[m]);
    for (int m = 0; m < n; ++m) inst.rel(q, m) = 0.25 * level(rng);
  }
  inst.relevance.provenance = RelevanceSource::kExternalSpice;
  inst.relevance.query_ids = inst.query_ids;
  inst.relevance.item_ids = ids;
  inst.relevance.values = inst.rel;
  return inst;
}

}  // namespace motret::testing
