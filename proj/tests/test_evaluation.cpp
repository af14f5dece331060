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

#include <gtest/gtest.h>

#include <numeric>

#include "motret/errors.hpp"
#include "motret/evaluation.hpp"
#include "support.hpp"

namespace motret {
namespace {

using testing::Rng;

RankedList ranking_of(std::initializer_list<const char*> ids) {
  RankedList r;
  double score = 1.0;
  for (const char* id : ids) r.hits.push_back({id, score -= 0.1});
  return r;
}

void expect_report_near(const MetricsReport& got, const testing::oracle::Report& want,
                        double tol) {
  ASSERT_EQ(got.recall.size(), want.recall.size());
  for (const auto& [k, v] : got.recall) EXPECT_NEAR(v, want.recall.at(k), tol) << "r@" << k;
  EXPECT_NEAR(got.mean_rank, want.mean_rank, tol);
  EXPECT_NEAR(got.median_rank, want.median_rank, tol);
  ASSERT_EQ(got.ndcg.size(), 1u);
  EXPECT_NEAR(got.ndcg[0].at_10, want.ndcg_10, tol);
  EXPECT_NEAR(got.ndcg[0].full, want.ndcg_full, tol);
  EXPECT_EQ(got.ndcg[0].zero_relevance_queries, want.zero_queries);
}

void expect_reports_equal(const MetricsReport& a, const MetricsReport& b) {
  EXPECT_EQ(a.recall, b.recall);
  EXPECT_EQ(a.mean_rank, b.mean_rank);
  EXPECT_EQ(a.median_rank, b.median_rank);
  ASSERT_EQ(a.ndcg.size(), b.ndcg.size());
  for (std::size_t s = 0; s < a.ndcg.size(); ++s) {
    EXPECT_EQ(a.ndcg[s].at_10, b.ndcg[s].at_10);
    EXPECT_EQ(a.ndcg[s].full, b.ndcg[s].full);
  }
}

MetricsReport evaluate_instance(const testing::ProtocolInstance& inst,
                                std::span<const int> ks = kDefaultKs) {
  return evaluate_protocol(inst.queries, inst.query_ids, inst.store, inst.gt,
                           std::span(&inst.relevance, 1), ks);
}

TEST(Dedupe, KeepsFirstCaptionPerNormalizedText) {
  const std::vector<CaptionRecord> caps{{"c1", "m1", "A person walks."},
                                        {"c2", "m2", "a person   walks"},
                                        {"c3", "m3", "a person jumps"},
                                        {"c4", "m1", "A PERSON JUMPS!"}};
  const auto out = dedupe_queries(caps);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].caption_id, "c1");
  EXPECT_EQ(out[1].caption_id, "c3");
}

TEST(Ranks, BestPlacedRelevantMotion) {
  EXPECT_EQ(rank_of_relevant(ranking_of({"a", "b", "c"}), {"c"}), 3);
  EXPECT_EQ(rank_of_relevant(ranking_of({"a", "b", "c", "d"}), {"b", "d"}), 2);
  EXPECT_EQ(rank_of_relevant(ranking_of({"a"}), {"a"}), 1);
  EXPECT_THROW(rank_of_relevant(ranking_of({"a", "b"}), {"z"}), InvalidArgument);
}

TEST(Recall, Examples) {
  const std::vector<int> ranks{1, 3, 12};
  EXPECT_NEAR(recall_at_k(ranks, 5), 66.6666667, 1e-6);
  EXPECT_NEAR(recall_at_k(ranks, 1), 33.3333333, 1e-6);
  EXPECT_DOUBLE_EQ(recall_at_k(std::vector<int>(7, 1), 1), 100.0);
  EXPECT_THROW(recall_at_k(std::vector<int>{}, 1), InvalidArgument);
}

TEST(Recall, NonDecreasingInK) {
  Rng rng(1);
  std::uniform_int_distribution<int> rank(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> ranks(1 + trial % 17);
    for (int& r : ranks) r = rank(rng);
    double prev = 0.0;
    for (int k = 1; k <= 41; ++k) {
      const double v = recall_at_k(ranks, k);
      ASSERT_GE(v, prev);
      ASSERT_DOUBLE_EQ(v, testing::oracle::recall(ranks, k));
      prev = v;
    }
    ASSERT_DOUBLE_EQ(prev, 100.0);
  }
}

TEST(RankSummary, Examples) {
  auto check = [](std::vector<int> ranks, double mean, double median) {
    const RankSummary s = mean_median_rank(ranks);
    EXPECT_NEAR(s.mean, mean, 1e-4);
    EXPECT_DOUBLE_EQ(s.median, median);
  };
  check({1, 3, 12}, 5.3333, 3);
  check({1}, 1, 1);
  check({2, 4}, 3, 3);
  EXPECT_THROW(mean_median_rank(std::vector<int>{}), InvalidArgument);
}

TEST(Ndcg, Examples) {
  EXPECT_DOUBLE_EQ(ndcg(std::vector<double>{1.0, 0.5, 0.25, 0.0}, 4), 1.0);
  EXPECT_NEAR(ndcg(std::vector<double>{1, 0, 1}, 3), 0.91972, 1e-5);
  EXPECT_EQ(ndcg(std::vector<double>{0, 0, 0}, 3), 0.0);
  EXPECT_THROW(ndcg(std::vector<double>{0.5, -0.1}, 2), InvalidArgument);
  EXPECT_THROW(ndcg(std::vector<double>{0.5}, 0), InvalidArgument);
}

TEST(Ndcg, AgreesWithOracleAndStaysInUnitInterval) {
  Rng rng(2);
  std::uniform_real_distribution<double> rel(0.0, 1.0);
  std::bernoulli_distribution zero(0.3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> rels(1 + trial % 23);
    for (double& r : rels) r = zero(rng) ? 0.0 : rel(rng);
    for (int p : {1, 3, 10, 1000}) {
      const double v = ndcg(rels, p);
      ASSERT_NEAR(v, testing::oracle::ndcg(rels, p), 1e-12);
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0 + 1e-12);
    }
  }
}

TEST(Ndcg, IdealOrderingScoresOneAndAnyOtherNoMore) {
  Rng rng(3);
  std::uniform_int_distribution<int> level(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> rels(12);
    for (double& r : rels) r = level(rng) / 3.0;
    std::vector<double> ideal = rels;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const bool all_zero = ideal.front() == 0.0;
    for (int p : {1, 5, 10, 12}) {
      ASSERT_NEAR(ndcg(ideal, p), all_zero ? 0.0 : 1.0, 1e-12);
      ASSERT_LE(ndcg(rels, p), ndcg(ideal, p) + 1e-12);
    }
  }
}

TEST(Lexical, Examples) {
  EXPECT_DOUBLE_EQ(lexical_relevance("a person walks", "A person walks."), 1.0);
  EXPECT_DOUBLE_EQ(lexical_relevance("a person walks", "someone jumps"), 0.0);
  EXPECT_NEAR(lexical_relevance("a person walks", "a person jumps"), 2.0 / 3.0, 1e-12);
}

TEST(Lexical, SymmetricAndBounded) {
  const std::vector<std::string> words{"a", "person", "walks", "jumps", "left", "slowly"};
  Rng rng(4);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(words.size()) - 1), len(1, 6);
  auto sentence = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += words[pick(rng)] + " ";
    return s;
  };
  for (int trial = 0; trial < 300; ++trial) {
    const std::string a = sentence(), b = sentence();
    const double ab = lexical_relevance(a, b);
    ASSERT_EQ(ab, lexical_relevance(b, a));
    ASSERT_GE(ab, 0.0);
    ASSERT_LE(ab, 1.0);
    ASSERT_NEAR(lexical_relevance(a, a), 1.0, 1e-12);
  }
}

TEST(Lexical, MatrixTakesBestCaption) {
  const std::vector<CaptionRecord> queries{{"q1", "m1", "a person walks"}};
  const std::vector<std::string> items{"m1", "m2"};
  const std::vector<std::vector<CaptionRecord>> captions{
      {{"c1", "m1", "someone jumps"}, {"c2", "m1", "a person walks"}},
      {{"c3", "m2", "a person jumps"}}};
  const RelevanceMatrix m = lexical_relevance_matrix(queries, items, captions);
  EXPECT_EQ(m.provenance, RelevanceSource::kLexical);
  EXPECT_DOUBLE_EQ(m.values(0, 0), 1.0);
  EXPECT_NEAR(m.values(0, 1), 2.0 / 3.0, 1e-12);
}

TEST(GroundTruth, PairsEveryMotionWithTheSameText) {
  const std::vector<CaptionRecord> caps{{"c1", "m1", "A person walks."},
                                        {"c2", "m2", "a person walks"},
                                        {"c3", "m3", "a person jumps"}};
  const GroundTruth gt = ground_truth_of(caps, caps);
  EXPECT_EQ(gt.at("c1"), (std::set<std::string>{"m1", "m2"}));
  EXPECT_EQ(gt.at("c3"), (std::set<std::string>{"m3"}));
}

TEST(Protocol, SingleMotionScoresPerfectly) {
  const EmbeddingStore store = EmbeddingStore::build({{"m", RowVector::Ones(3)}});
  const std::vector<std::string> qids{"q"};
  RelevanceMatrix rel{RelevanceSource::kLexical, {"q"}, {"m"}, Matrix::Ones(1, 1)};
  const MetricsReport r = evaluate_protocol(Matrix::Ones(1, 3), qids, store,
                                            {{"q", {"m"}}}, std::span(&rel, 1));
  EXPECT_EQ(r.recall_at(1), 100.0);
  EXPECT_EQ(r.mean_rank, 1.0);
  EXPECT_EQ(r.median_rank, 1.0);
  EXPECT_EQ(r.ndcg[0].source, "lexical");
  EXPECT_DOUBLE_EQ(r.ndcg[0].at_10, 1.0);
}

TEST(Protocol, AgreesWithOracleOnRandomInstances) {
  Rng rng(5);
  const std::vector<int> ks{1, 5, 10};
  for (int trial = 0; trial < 150; ++trial) {
    const auto inst = testing::random_protocol_instance(rng, 50, 12);
    const auto want = testing::oracle::evaluate(
        testing::oracle::scan_scores(inst.store, inst.queries), inst.store.ids(),
        inst.relevant, inst.rel, ks);
    SCOPED_TRACE(trial);
    expect_report_near(evaluate_instance(inst), want, 1e-9);
  }
}

TEST(Protocol, StoreOrderQueryOrderAndMonotoneRelabelingAreInvisible) {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    auto inst = testing::random_protocol_instance(rng, 30, 8);
    const MetricsReport base = evaluate_instance(inst);

    auto shuffled = inst;
    std::shuffle(shuffled.entries.begin(), shuffled.entries.end(), rng);
    shuffled.store = EmbeddingStore::build(shuffled.entries);
    expect_reports_equal(evaluate_instance(shuffled), base);

    auto reordered = inst;
    std::vector<int> perm(inst.query_ids.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      reordered.query_ids[i] = inst.query_ids[perm[i]];
      reordered.queries.row(i) = inst.queries.row(perm[i]);
    }
    expect_reports_equal(evaluate_instance(reordered), base);

    auto relabeled = inst;
    for (auto& [id, _] : relabeled.entries) id = "motion/" + id;
    relabeled.store = EmbeddingStore::build(relabeled.entries);
    for (auto& [_, ids] : relabeled.gt) {
      std::set<std::string> renamed;
      for (const auto& id : ids) renamed.insert("motion/" + id);
      ids = renamed;
    }
    for (auto& id : relabeled.relevance.item_ids) id = "motion/" + id;
    expect_reports_equal(evaluate_instance(relabeled), base);
  }
}

TEST(Protocol, MissingGroundTruthListsTheQueries) {
  Rng rng(7);
  auto inst = testing::random_protocol_instance(rng, 10, 4);
  inst.query_ids = {"qa", "qb", "qc"};
  inst.queries = testing::random_matrix(3, inst.store.dim(), rng);
  inst.gt = {{"qb", {inst.store.ids()[0]}}};
  try {
    evaluate_instance(inst);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("qa"), std::string::npos);
    EXPECT_NE(msg.find("qc"), std::string::npos);
    EXPECT_EQ(msg.find("qb"), std::string::npos);
  }
}

TEST(Protocol, RelevanceMustCoverEveryQueryAndMotion) {
  Rng rng(8);
  auto inst = testing::random_protocol_instance(rng, 10, 3);
  auto no_row = inst;
  no_row.relevance.query_ids[0] = "elsewhere";
  EXPECT_THROW(evaluate_instance(no_row), InvalidArgument);
  auto no_col = inst;
  no_col.relevance.item_ids[0] = "elsewhere";
  EXPECT_THROW(evaluate_instance(no_col), InvalidArgument);
}

TEST(Report, JsonRoundTripAndTable) {
  Rng rng(9);
  const auto inst = testing::random_protocol_instance(rng, 20, 6);
  const MetricsReport r = evaluate_instance(inst);
  const nlohmann::json j = to_json(r);
  EXPECT_NO_THROW(validate_report_json(j));
  const MetricsReport back = report_from_json(j);
  EXPECT_EQ(back.queries, r.queries);
  EXPECT_EQ(back.items, r.items);
  expect_reports_equal(back, r);

  auto broken = j;
  broken.erase("mean_rank");
  EXPECT_THROW(validate_report_json(broken), FormatError);
  auto bad_recall = j;
  bad_recall["recall"]["5"] = 140.0;
  EXPECT_THROW(validate_report_json(bad_recall), FormatError);

  const std::vector<std::pair<std::string, MetricsReport>> rows{{"mot", r}, {"bigru", r}};
  const std::string table = format_table(rows);
  EXPECT_NE(table.find("r10"), std::string::npos);
  EXPECT_NE(table.find("external-spice@10"), std::string::npos);
  EXPECT_NE(table.find("bigru"), std::string::npos);
}

TEST(RelevanceFile, RoundTripPreservesValuesAndIds) {
  Rng rng(10);
  testing::TempDir dir("relv");
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = testing::random_protocol_instance(rng, 15, 6);
    RelevanceMatrix m = inst.relevance;
    m.provenance = static_cast<RelevanceSource>(trial % 3);
    save_relevance(m, dir / "r.relv");
    const RelevanceMatrix back = load_relevance(dir / "r.relv");
    EXPECT_EQ(back.provenance, m.provenance);
    EXPECT_EQ(back.query_ids, m.query_ids);
    EXPECT_EQ(back.item_ids, m.item_ids);
    EXPECT_EQ(back.values, m.values);  // quarter steps are f32-exact
  }
}

}  // namespace
}  // namespace motret
