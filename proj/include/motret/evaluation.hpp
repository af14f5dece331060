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

// Text-to-motion evaluation: query deduplication, ranks, recall@k,
// nDCG with pluggable relevance, and report formatting.

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "motret/motion_data.hpp"
#include "motret/retrieval_index.hpp"

namespace motret {

/// Keeps the first caption for each normalized text, in input order.
std::vector<CaptionRecord> dedupe_queries(std::span<const CaptionRecord> captions);

/// 1-based rank of the best-placed relevant motion. Throws InvalidArgument
/// when none of `relevant` appears in the ranking.
int rank_of_relevant(const RankedList& ranking,
                     const std::set<std::string>& relevant);

/// Percentage of ranks <= k.
double recall_at_k(std::span<const int> ranks, int k);

struct RankSummary {
  double mean = 0.0;
  double median = 0.0;
};
RankSummary mean_median_rank(std::span<const int> ranks);

/// DCG_p with gain 2^rel - 1 and discount log2(i + 1), normalized by the
/// DCG_p of the same values sorted non-increasing. p beyond the list length
/// uses the whole list; an all-zero list scores 0.
double ndcg(std::span<const double> ranked_rels, int p);

/// Cosine similarity of token-count vectors.
double lexical_relevance(std::string_view a, std::string_view b);

enum class RelevanceSource : std::uint8_t {
  kExternalSpice,
  kExternalSpacy,
  kLexical,
};
std::string_view relevance_source_name(RelevanceSource s);
RelevanceSource parse_relevance_source(std::string_view name);

/// rel(query, motion) >= 0 with row and column ids.
struct RelevanceMatrix {
  RelevanceSource provenance = RelevanceSource::kLexical;
  std::vector<std::string> query_ids;  // rows
  std::vector<std::string> item_ids;   // columns
  Matrix values;

  void validate() const;
};

/// "RELV": magic, u32 n_queries, u32 n_items, row-major f32. Row and
/// column ids and provenance live in a JSON sidecar at `<path>.json`.
std::vector<std::uint8_t> encode_relevance_values(const RelevanceMatrix& m);
nlohmann::json relevance_sidecar(const RelevanceMatrix& m);
RelevanceMatrix decode_relevance(std::vector<std::uint8_t> bytes,
                                 const nlohmann::json& sidecar);
void save_relevance(const RelevanceMatrix& m, const std::filesystem::path& path);
RelevanceMatrix load_relevance(const std::filesystem::path& path);

/// Lexical relevance of each query against each motion, taking the best
/// match over the motion's captions (`item_captions[j]` for item j).
RelevanceMatrix lexical_relevance_matrix(
    std::span<const CaptionRecord> queries,
    std::span<const std::string> item_ids,
    std::span<const std::vector<CaptionRecord>> item_captions);

/// Query caption id -> ids of its paired motions.
using GroundTruth = std::map<std::string, std::set<std::string>>;
/// Each query is paired with every motion in `captions` that carries a
/// caption with the same normalized text.
GroundTruth ground_truth_of(std::span<const CaptionRecord> queries,
                            std::span<const CaptionRecord> captions);

struct NdcgSummary {
  std::string source;
  double at_10 = 0.0;
  double full = 0.0;
  int zero_relevance_queries = 0;
};

struct MetricsReport {
  int queries = 0;
  int items = 0;
  std::vector<std::pair<int, double>> recall;  // (k, percent), ascending k
  double mean_rank = 0.0;
  double median_rank = 0.0;
  std::vector<NdcgSummary> ndcg;

  double recall_at(int k) const;
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);
/// Throws FormatError unless `j` is a well-formed report.
void validate_report_json(const nlohmann::json& j);
/// Aligned columns: label, r@k..., mean, med, one nDCG column per source.
std::string format_table(
    std::span<const std::pair<std::string, MetricsReport>> rows);

inline constexpr int kDefaultKsData[] = {1, 5, 10};
inline constexpr std::span<const int> kDefaultKs = kDefaultKsData;

/// Ranks the whole store for every query (row i of `query_embeddings` is
/// `query_ids[i]`) and computes every metric. nDCG is reported at cutoff 10
/// and over the full ranking for each relevance matrix.
MetricsReport evaluate_protocol(const Matrix& query_embeddings,
                                std::span<const std::string> query_ids,
                                const EmbeddingStore& store,
                                const GroundTruth& gt,
                                std::span<const RelevanceMatrix> relevance,
                                std::span<const int> ks = kDefaultKs);

}  // namespace motret
