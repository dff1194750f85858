#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "amelo/error.hpp"
#include "amelo/retrieval_engine.hpp"
#include "support.hpp"

namespace amelo {
namespace {

CaseRecord bare(const std::string& pmcid) {
  CaseRecord r;
  r.pmcid = pmcid;
  return r;
}

TEST(CaseText, Template) {
  auto r = bare("PMC1");
  r.presenting_complaint = "painless swelling";
  const auto t = build_case_text(r);
  EXPECT_EQ(t.text.rfind("Presenting complaint: painless swelling.", 0), 0u);
}

TEST(CaseText, EmptyRecordRendersUnknownInOrder) {
  EXPECT_EQ(build_case_text(bare("PMC1")).text,
            "Presenting complaint: unknown. Clinical features: unknown. Radiological features: unknown. "
            "Histopathological features: unknown. Tumor location: unknown. Diagnosis: unknown. "
            "Tumor size: unknown. Tumor variant: unknown. Patient age: unknown. Patient gender: unknown.");
}

TEST(CaseText, SizeAndSpans) {
  auto r = bare("PMC1");
  r.tumor_size_mm = {45.0, 32.0};
  r.diagnosis_label = DiagnosisLabel::Follicular;
  const auto t = build_case_text(r);
  EXPECT_NE(t.text.find("Tumor size: 45 mm x 32 mm."), std::string::npos);
  EXPECT_NE(t.text.find("Diagnosis: Follicular."), std::string::npos);
  ASSERT_EQ(t.spans.size(), 10u);
  std::string rebuilt;
  for (const auto& s : t.spans) {
    if (!rebuilt.empty()) rebuilt += ' ';
    rebuilt += t.text.substr(s.begin, s.end - s.begin);
  }
  EXPECT_EQ(rebuilt, t.text);
}

TEST(Similarity, Mapping) {
  EXPECT_DOUBLE_EQ(distance_to_similarity(0.0), 1.0);
  EXPECT_NEAR(distance_to_similarity(std::sqrt(2.0)), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(distance_to_similarity(2.0), 0.0);
  EXPECT_THROW(distance_to_similarity(-0.1), Error);
  EXPECT_THROW(distance_to_similarity(2.1), Error);
  double prev = 1.0;
  for (double d = 0.01; d <= 2.0; d += 0.01) {
    const double s = distance_to_similarity(d);
    EXPECT_LE(s, prev);
    if (d < std::sqrt(2.0) - 0.01) EXPECT_LT(s, prev);
    prev = s;
  }
}

struct Repo {
  std::vector<CaseRecord> cases = testing::fixture_cases();
  DenseStore dense;
  std::shared_ptr<const RetrievalState> state;

  explicit Repo(bool with_vectors = true) {
    if (with_vectors) {
      std::mt19937_64 rng(5);
      for (const auto& c : cases) dense.ingest(c.pmcid, testing::random_unit(rng, 16));
    }
    state = index_repository(cases, dense);
  }
};

TEST(IndexRepository, Counts) {
  Repo repo;
  EXPECT_EQ(repo.state->size(), 4u);
  ASSERT_NE(repo.state->dense(), nullptr);
  EXPECT_EQ(repo.state->dense()->count(), 4u);
  EXPECT_EQ(Repo(false).state->dense(), nullptr);
  auto more = repo.cases;
  more.push_back(bare("PMC9"));
  EXPECT_EQ(index_repository(more, repo.dense)->size(), 5u);
}

TEST(Cascade, ShortQueryRoutesSparse) {
  Repo repo;
  Query q;
  q.text = "mandible swelling";
  q.vector = *repo.dense.find("PMC7234567");
  EXPECT_EQ(cascade_route(*repo.state, prepare_query(*repo.state, q)), RetrievalMethod::Sparse);
}

TEST(Cascade, OutOfVocabularyRoutesKeyword) {
  Repo repo;
  Query q;
  q.text = "qwertyuiop zxcvbnm";
  const auto out = query(*repo.state, q);
  EXPECT_EQ(out.method, RetrievalMethod::Keyword);
  EXPECT_TRUE(out.results.empty());
}

TEST(Cascade, PlantedDuplicateRoutesDenseAndSelfRetrieves) {
  Repo repo;
  Query q;
  q.text = repo.state->case_texts().at("PMC6974990").text;
  q.vector = *repo.dense.find("PMC6974990");
  const auto out = query(*repo.state, q);
  EXPECT_EQ(out.method, RetrievalMethod::Dense);
  ASSERT_FALSE(out.results.empty());
  EXPECT_EQ(out.results[0].pmcid, "PMC6974990");
  EXPECT_NEAR(out.results[0].similarity, 1.0, 1e-9);
}

TEST(Cascade, UnderperformingDenseFallsBackToSparse) {
  Repo repo;
  Query q;
  q.text = repo.state->case_texts().at("PMC6974990").text;
  // Opposite direction of every stored vector is impossible in general, so use
  // the negated planted vector: its nearest neighbor is far from similarity 1.
  DenseVector v = *repo.dense.find("PMC6974990");
  for (auto& x : v) x = -x;
  q.vector = v;
  const auto prepared = prepare_query(*repo.state, q);
  const auto dense_top = repo.state->dense()->search(*prepared.vector, 1);
  const double top_sim = distance_to_similarity(std::min(2.0, dense_top[0].distance));
  const auto method = cascade_route(*repo.state, prepared);
  if (top_sim < 0.3) {
    EXPECT_EQ(method, RetrievalMethod::Sparse);
  } else {
    EXPECT_EQ(method, RetrievalMethod::Dense);
  }
}

TEST(Query, ClinicalScenarioRanksMandibularCaseFirst) {
  Repo repo(false);
  Query q;
  q.text = testing::slurp(testing::fixture("clinical_use_case.txt"));
  const auto out = query(*repo.state, q);
  EXPECT_EQ(out.method, RetrievalMethod::Sparse);
  ASSERT_FALSE(out.results.empty());
  const auto& top = out.results[0];
  EXPECT_EQ(top.pmcid, "PMC7234567");
  EXPECT_EQ(top.summary.reference_id, "PMC7234567");
  EXPECT_FALSE(top.summary.diagnosis.empty());
  for (std::size_t i = 0; i < out.results.size(); ++i) {
    EXPECT_GE(out.results[i].similarity, 0.0);
    EXPECT_LE(out.results[i].similarity, 1.0);
    EXPECT_EQ(out.results[i].rank, i + 1);
    if (i > 0) EXPECT_LE(out.results[i].similarity, out.results[i - 1].similarity);
  }
  const auto j = top.to_json();
  for (const char* key : {"diagnosis", "treatment", "tumor_size", "patient_age", "patient_gender", "reference_id"}) {
    EXPECT_TRUE(j.at("summary").contains(key)) << key;
  }
}

TEST(Query, KLargerThanRepository) {
  Repo repo(false);
  std::vector<CaseRecord> three(repo.cases.begin(), repo.cases.begin() + 3);
  const auto state = index_repository(three, DenseStore{});
  Query q;
  // Template labels occur in every case text.
  q.text = "patient gender";
  q.k = 5;
  EXPECT_EQ(query(*state, q).results.size(), 3u);
}

TEST(Query, Deterministic) {
  Repo repo;
  Query q;
  q.text = testing::slurp(testing::fixture("clinical_use_case.txt"));
  EXPECT_EQ(query(*repo.state, q).to_json().dump(), query(*repo.state, q).to_json().dump());
}

TEST(Query, Errors) {
  Repo repo;
  Query blank;
  blank.text = "   ";
  try {
    query(*repo.state, blank);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyQuery);
  }
  const auto empty = index_repository({}, DenseStore{});
  Query q;
  q.text = "swelling";
  try {
    query(*empty, q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyRepository);
  }
}

TEST(Query, StructuredFormUsesCaseText) {
  Repo repo(false);
  Query q;
  q.mode = QueryMode::StructuredForm;
  q.form = repo.cases[1];
  const auto out = query(*repo.state, q);
  ASSERT_FALSE(out.results.empty());
  EXPECT_EQ(out.results[0].pmcid, repo.cases[1].pmcid);
  EXPECT_NEAR(out.results[0].similarity, 1.0, 1e-6);
}

TEST(QueryJson, StrictParsing) {
  const auto q = Query::from_json(nlohmann::json::parse(R"({"text": "swelling"})"));
  EXPECT_EQ(q.mode, QueryMode::FreeText);
  EXPECT_EQ(q.k, 5u);
  try {
    Query::from_json(nlohmann::json::parse(R"({"text": "x", "k": 0})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
    EXPECT_EQ(e.path(), "k");
  }
  EXPECT_THROW(Query::from_json(nlohmann::json::parse(R"({"text": "x", "extra": 1})")), Error);
  EXPECT_THROW(Query::from_json(nlohmann::json::parse(R"({"mode": "structured_form", "text": "x"})")), Error);
  const auto back = Query::from_json(q.to_json());
  EXPECT_EQ(back.text, q.text);
}

TEST(KeywordSearch, HandScores) {
  auto a = bare("PMC3");
  a.clinical_features = "zygoma keratin";
  auto b = bare("PMC1");
  b.clinical_features = "zygoma";
  auto c = bare("PMC2");
  c.clinical_features = "nothing special";
  const auto state = index_repository({a, b, c}, DenseStore{});
  const auto terms = preprocess_text("zygoma keratin xylophone");
  ASSERT_EQ(terms.size(), 3u);
  const auto hits = keyword_search(*state, terms, 5);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].pmcid, "PMC3");
  EXPECT_NEAR(hits[0].similarity, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(hits[1].pmcid, "PMC1");
  EXPECT_NEAR(hits[1].similarity, 1.0 / 3.0, 1e-12);
  EXPECT_THROW(keyword_search(*state, {}, 5), Error);
}

TEST(KeywordSearch, FullOverlapAndTieBreak) {
  auto a = bare("PMC2");
  a.clinical_features = "zygoma";
  auto b = bare("PMC1");
  b.clinical_features = "zygoma";
  const auto state = index_repository({a, b}, DenseStore{});
  const auto hits = keyword_search(*state, preprocess_text("zygoma"), 5);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].pmcid, "PMC1");
  EXPECT_EQ(hits[0].similarity, 1.0);
  EXPECT_TRUE(keyword_search(*state, preprocess_text("xylophone"), 5).empty());
}

}  // namespace
}  // namespace amelo
