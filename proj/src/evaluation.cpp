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

#include "motret/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "motret/binary_io.hpp"
#include "motret/errors.hpp"
#include "motret/text_encoding.hpp"

namespace motret {

using nlohmann::json;

std::vector<CaptionRecord> dedupe_queries(
    std::span<const CaptionRecord> captions) {
  std::vector<CaptionRecord> kept;
  std::unordered_set<std::string> seen;
  for (const CaptionRecord& c : captions)
    if (seen.insert(normalized_text(c.text)).second) kept.push_back(c);
  return kept;
}

int rank_of_relevant(const RankedList& ranking,
                     const std::set<std::string>& relevant) {
  for (std::size_t i = 0; i < ranking.hits.size(); ++i)
    if (relevant.contains(ranking.hits[i].motion_id))
      return static_cast<int>(i) + 1;
  throw InvalidArgument("no relevant motion for query '" + ranking.query_id +
                        "' appears in the collection");
}

double recall_at_k(std::span<const int> ranks, int k) {
  if (ranks.empty()) throw InvalidArgument("recall_at_k needs ranks");
  const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                  [k](int r) { return r <= k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

RankSummary mean_median_rank(std::span<const int> ranks) {
  if (ranks.empty()) throw InvalidArgument("mean_median_rank needs ranks");
  std::vector<int> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (int r : sorted) sum += r;
  const std::size_t n = sorted.size();
  const double median = n % 2 == 1
                            ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return {sum / static_cast<double>(n), median};
}

namespace {

double dcg(std::span<const double> rels, std::size_t p) {
  double total = 0.0;
  for (std::size_t i = 0; i < std::min(p, rels.size()); ++i)
    total += (std::exp2(rels[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  return total;
}

}  // namespace

double ndcg(std::span<const double> ranked_rels, int p) {
  if (p < 1) throw InvalidArgument("nDCG cutoff must be >= 1");
  for (double r : ranked_rels)
    if (!(r >= 0.0) || !std::isfinite(r))
      throw InvalidArgument("relevance values must be finite and >= 0");
  std::vector<double> ideal(ranked_rels.begin(), ranked_rels.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double best = dcg(ideal, static_cast<std::size_t>(p));
  if (best == 0.0) return 0.0;
  return dcg(ranked_rels, static_cast<std::size_t>(p)) / best;
}

double lexical_relevance(std::string_view a, std::string_view b) {
  std::map<std::string, double> ta, tb;
  for (auto& t : tokenize(a)) ta[t] += 1.0;
  for (auto& t : tokenize(b)) tb[t] += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [tok, c] : ta) {
    na += c * c;
    if (auto it = tb.find(tok); it != tb.end()) dot += c * it->second;
  }
  for (const auto& [tok, c] : tb) nb += c * c;
  return std::min(1.0, dot / (std::sqrt(na) * std::sqrt(nb)));
}

std::string_view relevance_source_name(RelevanceSource s) {
  switch (s) {
    case RelevanceSource::kExternalSpice: return "external-spice";
    case RelevanceSource::kExternalSpacy: return "external-spacy";
    case RelevanceSource::kLexical: return "lexical";
  }
  return "lexical";
}

RelevanceSource parse_relevance_source(std::string_view name) {
  if (name == "external-spice") return RelevanceSource::kExternalSpice;
  if (name == "external-spacy") return RelevanceSource::kExternalSpacy;
  if (name == "lexical") return RelevanceSource::kLexical;
  throw InvalidArgument("unknown relevance provenance '" + std::string(name) +
                        "'");
}

void RelevanceMatrix::validate() const {
  if (values.rows() != static_cast<Eigen::Index>(query_ids.size()) ||
      values.cols() != static_cast<Eigen::Index>(item_ids.size()))
    throw ShapeError("relevance matrix shape does not match its ids");
  if (!values.allFinite() || (values.size() > 0 && values.minCoeff() < 0.0))
    throw NumericError("relevance values must be finite and >= 0");
}

std::vector<std::uint8_t> encode_relevance_values(const RelevanceMatrix& m) {
  m.validate();
  io::ByteWriter w;
  w.magic("RELV");
  w.u32(static_cast<std::uint32_t>(m.values.rows()));
  w.u32(static_cast<std::uint32_t>(m.values.cols()));
  std::vector<float> payload(m.values.data(), m.values.data() + m.values.size());
  w.f32s(payload);
  return w.data();
}

json relevance_sidecar(const RelevanceMatrix& m) {
  return {{"rows", m.query_ids},
          {"cols", m.item_ids},
          {"provenance", relevance_source_name(m.provenance)}};
}

RelevanceMatrix decode_relevance(std::vector<std::uint8_t> bytes,
                                 const json& sidecar) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("RELV");
  const std::uint32_t nq = r.u32("query count");
  const std::uint32_t ni = r.u32("item count");
  const std::uint64_t n = std::uint64_t{nq} * ni;
  if (n * 4 != r.remaining())
    throw FormatError("relevance payload size does not match " +
                      std::to_string(nq) + " x " + std::to_string(ni));
  std::vector<float> payload(n);
  r.f32s(payload, "relevance values");
  RelevanceMatrix m;
  try {
    m.query_ids = sidecar.at("rows").get<std::vector<std::string>>();
    m.item_ids = sidecar.at("cols").get<std::vector<std::string>>();
    m.provenance =
        parse_relevance_source(sidecar.at("provenance").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt relevance sidecar: ") + e.what());
  }
  if (m.query_ids.size() != nq || m.item_ids.size() != ni)
    throw FormatError("relevance sidecar ids do not match the matrix shape");
  m.values.resize(nq, ni);
  std::copy(payload.begin(), payload.end(), m.values.data());
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw FormatError(e.what());
  }
  return m;
}

void save_relevance(const RelevanceMatrix& m,
                    const std::filesystem::path& path) {
  io::write_file(path, encode_relevance_values(m));
  const std::string sidecar = relevance_sidecar(m).dump(2) + "\n";
  io::write_file(path.string() + ".json",
                 std::span(reinterpret_cast<const std::uint8_t*>(sidecar.data()),
                           sidecar.size()));
}

RelevanceMatrix load_relevance(const std::filesystem::path& path) {
  const auto text = io::read_file(path.string() + ".json");
  json sidecar;
  try {
    sidecar = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt relevance sidecar: ") + e.what());
  }
  return decode_relevance(io::read_file(path), sidecar);
}

RelevanceMatrix lexical_relevance_matrix(
    std::span<const CaptionRecord> queries,
    std::span<const std::string> item_ids,
    std::span<const std::vector<CaptionRecord>> item_captions) {
  if (item_ids.size() != item_captions.size())
    throw ShapeError("one caption list per item is required");
  RelevanceMatrix m;
  m.provenance = RelevanceSource::kLexical;
  m.values = Matrix::Zero(static_cast<Eigen::Index>(queries.size()),
                          static_cast<Eigen::Index>(item_ids.size()));
  for (const CaptionRecord& q : queries) m.query_ids.push_back(q.caption_id);
  m.item_ids.assign(item_ids.begin(), item_ids.end());
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t j = 0; j < item_ids.size(); ++j) {
      double best = 0.0;
      for (const CaptionRecord& c : item_captions[j])
        best = std::max(best, lexical_relevance(queries[i].text, c.text));
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          best;
    }
  return m;
}

GroundTruth ground_truth_of(std::span<const CaptionRecord> queries,
                            std::span<const CaptionRecord> captions) {
  std::unordered_map<std::string, std::set<std::string>> by_text;
  for (const CaptionRecord& c : captions)
    by_text[normalized_text(c.text)].insert(c.motion_id);
  GroundTruth gt;
  for (const CaptionRecord& q : queries) {
    auto& motions = gt[q.caption_id];
    motions.insert(q.motion_id);
    if (auto it = by_text.find(normalized_text(q.text)); it != by_text.end())
      motions.insert(it->second.begin(), it->second.end());
  }
  return gt;
}

double MetricsReport::recall_at(int k) const {
  for (const auto& [kk, value] : recall)
    if (kk == k) return value;
  throw InvalidArgument("report has no recall@" + std::to_string(k));
}

json to_json(const MetricsReport& r) {
  json recall = json::object();
  for (const auto& [k, v] : r.recall) recall[std::to_string(k)] = v;
  json ndcgs = json::array();
  for (const NdcgSummary& n : r.ndcg)
    ndcgs.push_back({{"source", n.source},
                     {"at_10", n.at_10},
                     {"full", n.full},
                     {"zero_relevance_queries", n.zero_relevance_queries}});
  return {{"queries", r.queries},     {"items", r.items},
          {"recall", recall},         {"mean_rank", r.mean_rank},
          {"median_rank", r.median_rank}, {"ndcg", ndcgs}};
}

void validate_report_json(const json& j) {
  auto fail = [](const std::string& why) {
    throw FormatError("invalid metrics report: " + why);
  };
  try {
    for (const char* key : {"queries", "items", "recall", "mean_rank",
                            "median_rank", "ndcg"})
      if (!j.contains(key)) fail(std::string("missing '") + key + "'");
    if (j.at("queries").get<int>() < 1) fail("no queries");
    const int items = j.at("items").get<int>();
    if (items < 1) fail("empty collection");
    std::vector<std::pair<int, double>> recall;
    for (const auto& [k, v] : j.at("recall").items())
      recall.emplace_back(std::stoi(k), v.get<double>());
    std::sort(recall.begin(), recall.end());
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i].second < 0.0 || recall[i].second > 100.0)
        fail("recall outside [0, 100]");
      if (i > 0 && recall[i].second < recall[i - 1].second)
        fail("recall decreases with k");
    }
    for (const char* key : {"mean_rank", "median_rank"}) {
      const double v = j.at(key).get<double>();
      if (v < 1.0 || v > items) fail(std::string(key) + " out of range");
    }
    for (const json& n : j.at("ndcg")) {
      n.at("source").get<std::string>();
      for (const char* key : {"at_10", "full"}) {
        const double v = n.at(key).get<double>();
        if (!(v >= 0.0 && v <= 1.0 + 1e-12)) fail("nDCG outside [0, 1]");
      }
      if (n.at("zero_relevance_queries").get<int>() < 0)
        fail("negative degenerate-query count");
    }
  } catch (const json::exception& e) {
    fail(e.what());
  } catch (const std::invalid_argument&) {
    fail("recall key is not an integer");
  }
}

MetricsReport report_from_json(const json& j) {
  validate_report_json(j);
  MetricsReport r;
  r.queries = j.at("queries").get<int>();
  r.items = j.at("items").get<int>();
  for (const auto& [k, v] : j.at("recall").items())
    r.recall.emplace_back(std::stoi(k), v.get<double>());
  std::sort(r.recall.begin(), r.recall.end());
  r.mean_rank = j.at("mean_rank").get<double>();
  r.median_rank = j.at("median_rank").get<double>();
  for (const json& n : j.at("ndcg"))
    r.ndcg.push_back({n.at("source").get<std::string>(),
                      n.at("at_10").get<double>(), n.at("full").get<double>(),
                      n.at("zero_relevance_queries").get<int>()});
  return r;
}

std::string format_table(
    std::span<const std::pair<std::string, MetricsReport>> rows) {
  if (rows.empty()) return {};
  std::vector<std::string> header{"model"};
  const MetricsReport& first = rows.front().second;
  for (const auto& [k, _] : first.recall) header.push_back("r" + std::to_string(k));
  header.push_back("mean");
  header.push_back("med");
  for (const NdcgSummary& n : first.ndcg) {
    header.push_back(n.source + "@10");
    header.push_back(n.source);
  }

  std::vector<std::vector<std::string>> cells{header};
  char buf[32];
  for (const auto& [label, r] : rows) {
    std::vector<std::string> line{label};
    for (const auto& [_, v] : r.recall) {
      std::snprintf(buf, sizeof buf, "%.1f", v);
      line.emplace_back(buf);
    }
    std::snprintf(buf, sizeof buf, "%.1f", r.mean_rank);
    line.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "%g", r.median_rank);
    line.emplace_back(buf);
    for (const NdcgSummary& n : r.ndcg) {
      std::snprintf(buf, sizeof buf, "%.3f", n.at_10);
      line.emplace_back(buf);
      std::snprintf(buf, sizeof buf, "%.3f", n.full);
      line.emplace_back(buf);
    }
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size() && c < width.size(); ++c)
      width[c] = std::max(width[c], line[c].size());
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size() && c < width.size(); ++c) {
      if (c == 0) {
        out << line[c] << std::string(width[c] - line[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - line[c].size(), ' ') << line[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

MetricsReport evaluate_protocol(const Matrix& query_embeddings,
                                std::span<const std::string> query_ids,
                                const EmbeddingStore& store,
                                const GroundTruth& gt,
                                std::span<const RelevanceMatrix> relevance,
                                std::span<const int> ks) {
  if (query_ids.empty()) throw InvalidArgument("no queries to evaluate");
  if (query_embeddings.rows() != static_cast<Eigen::Index>(query_ids.size()))
    throw ShapeError("one query embedding per query id is required");
  if (store.empty()) throw InvalidArgument("empty motion collection");

  std::vector<std::string> missing;
  for (const std::string& id : query_ids)
    if (auto it = gt.find(id); it == gt.end() || it->second.empty())
      missing.push_back(id);
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw InvalidArgument("queries without ground truth: " + list);
  }

  // Row and column lookups for each relevance source.
  struct Lookup {
    std::unordered_map<std::string, Eigen::Index> row, col;
  };
  std::vector<Lookup> lookups(relevance.size());
  for (std::size_t s = 0; s < relevance.size(); ++s) {
    relevance[s].validate();
    for (std::size_t i = 0; i < relevance[s].query_ids.size(); ++i)
      lookups[s].row[relevance[s].query_ids[i]] = static_cast<Eigen::Index>(i);
    for (std::size_t i = 0; i < relevance[s].item_ids.size(); ++i)
      lookups[s].col[relevance[s].item_ids[i]] = static_cast<Eigen::Index>(i);
  }

  const int n_items = static_cast<int>(store.size());
  std::vector<int> ranks;
  ranks.reserve(query_ids.size());
  // Per-query nDCG, summed in query-id order so the report does not depend
  // on the order queries are given in.
  std::vector<std::vector<std::pair<std::string_view, std::pair<double, double>>>>
      per_query(relevance.size());
  std::vector<int> zero(relevance.size(), 0);
  std::vector<double> rels;
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    const RowVector qv = query_embeddings.row(static_cast<Eigen::Index>(q));
    const RankedList ranking = knn_query(
        store, std::span(qv.data(), static_cast<std::size_t>(qv.size())),
        n_items, query_ids[q]);
    ranks.push_back(rank_of_relevant(ranking, gt.at(query_ids[q])));

    for (std::size_t s = 0; s < relevance.size(); ++s) {
      const auto row = lookups[s].row.find(query_ids[q]);
      if (row == lookups[s].row.end())
        throw InvalidArgument("relevance matrix has no row for query '" +
                              query_ids[q] + "'");
      rels.clear();
      for (const RankedHit& h : ranking.hits) {
        const auto col = lookups[s].col.find(h.motion_id);
        if (col == lookups[s].col.end())
          throw InvalidArgument("relevance matrix has no column for motion '" +
                                h.motion_id + "'");
        rels.push_back(relevance[s].values(row->second, col->second));
      }
      if (std::all_of(rels.begin(), rels.end(),
                      [](double r) { return r == 0.0; }))
        ++zero[s];
      per_query[s].push_back(
          {query_ids[q], {ndcg(rels, 10), ndcg(rels, n_items)}});
    }
  }

  MetricsReport report;
  report.queries = static_cast<int>(query_ids.size());
  report.items = n_items;
  std::vector<int> sorted_ks(ks.begin(), ks.end());
  std::sort(sorted_ks.begin(), sorted_ks.end());
  sorted_ks.erase(std::unique(sorted_ks.begin(), sorted_ks.end()),
                  sorted_ks.end());
  for (int k : sorted_ks) report.recall.emplace_back(k, recall_at_k(ranks, k));
  const RankSummary summary = mean_median_rank(ranks);
  report.mean_rank = summary.mean;
  report.median_rank = summary.median;
  const double nq = static_cast<double>(query_ids.size());
  for (std::size_t s = 0; s < relevance.size(); ++s) {
    std::sort(per_query[s].begin(), per_query[s].end());
    double at_10 = 0.0, full = 0.0;
    for (const auto& [_, v] : per_query[s]) {
      at_10 += v.first;
      full += v.second;
    }
    report.ndcg.push_back(
        {std::string(relevance_source_name(relevance[s].provenance)),
         at_10 / nq, full / nq, zero[s]});
  }
  return report;
}

}  // namespace motret
