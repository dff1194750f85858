#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "amelo/error.hpp"
#include "amelo/porter_stemmer.hpp"
#include "amelo/vectorizer.hpp"

namespace amelo {
namespace {

TEST(Preprocess, StopwordsAndStemming) {
  EXPECT_EQ(preprocess_text("The swelling was painless"), (std::vector<std::string>{"swell", "painless"}));
  EXPECT_TRUE(preprocess_text("").empty());
}

TEST(Preprocess, Deterministic) {
  const std::string s = "Multilocular radiolucent lesions extending from the first molar to the ramus.";
  EXPECT_EQ(preprocess_text(s), preprocess_text(s));
}

TEST(PorterStemmer, ClassicExamples) {
  EXPECT_EQ(porter_stem("caresses"), "caress");
  EXPECT_EQ(porter_stem("ponies"), "poni");
  EXPECT_EQ(porter_stem("relational"), "relat");
  EXPECT_EQ(porter_stem("hopping"), "hop");
  EXPECT_EQ(porter_stem("swelling"), "swell");
}

TEST(PorterStemmer, FixpointIsIdempotent) {
  for (const char* w : {"generalizations", "radiological", "mandibular", "conditional", "swelling"}) {
    const auto once = stem_to_fixpoint(w);
    EXPECT_EQ(stem_to_fixpoint(once), once) << w;
  }
}

TEST(Tfidf, SmoothedIdf) {
  const auto m = fit_tfidf({{"swell", "mandibl"}, {"swell", "maxilla"}});
  EXPECT_DOUBLE_EQ(*m.idf_of("swell"), 1.0);
  EXPECT_NEAR(*m.idf_of("mandibl"), std::log(1.5) + 1.0, 1e-12);
  EXPECT_NEAR(*m.idf_of("mandibl"), 1.4055, 1e-4);
}

TEST(Tfidf, VocabularyCap) {
  std::vector<std::vector<std::string>> corpus(1);
  for (int i = 0; i < 600; ++i) corpus[0].push_back("term" + std::to_string(i));
  EXPECT_EQ(fit_tfidf(corpus, 500).dimension(), 500u);
}

TEST(Tfidf, CapKeepsMostFrequentTerms) {
  // "a" and "b" appear twice; the rest once, so the cap of 2 keeps exactly those.
  const auto m = fit_tfidf({{"a", "b", "c"}, {"a", "b", "d"}}, 2);
  EXPECT_EQ(m.terms(), (std::vector<std::string>{"a", "b"}));
}

TEST(Tfidf, SingleDocumentIdfIsOne) {
  const auto m = fit_tfidf({{"x", "y", "z"}});
  for (double v : m.idf()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Tfidf, EmbedSingleTermIsUnitSpike) {
  const auto m = fit_tfidf({{"swell", "mandibl"}, {"swell", "maxilla"}});
  const auto v = m.embed({"maxilla"});
  ASSERT_EQ(v.entries.size(), 1u);
  EXPECT_EQ(v.entries[0].first, *m.column("maxilla"));
  EXPECT_FLOAT_EQ(v.entries[0].second, 1.0f);
}

TEST(Tfidf, EmbedAllOovIsZero) {
  const auto m = fit_tfidf({{"swell"}});
  EXPECT_TRUE(m.embed({"nothing", "here"}).is_zero());
}

TEST(Tfidf, EmbedTwoTermsHandComputed) {
  const auto m = fit_tfidf({{"swell", "mandibl"}, {"swell", "maxilla"}});
  const auto v = m.embed({"swell", "mandibl"});
  const double a = 1.0;
  const double b = std::log(1.5) + 1.0;
  const double n = std::sqrt(a * a + b * b);
  ASSERT_EQ(v.entries.size(), 2u);
  std::map<std::uint32_t, float> w(v.entries.begin(), v.entries.end());
  EXPECT_NEAR(w.at(*m.column("swell")), a / n, 1e-6);
  EXPECT_NEAR(w.at(*m.column("mandibl")), b / n, 1e-6);
  EXPECT_NEAR(v.norm(), 1.0, 1e-6);
}

TEST(Tfidf, JsonRoundTrip) {
  const auto m = fit_tfidf({{"swell", "mandibl"}, {"swell", "maxilla", "maxilla"}});
  EXPECT_EQ(TfidfModel::from_json(m.to_json()), m);
}

TEST(Tfidf, EmptyCorpusThrows) {
  try {
    fit_tfidf({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
}

TEST(Dense, Normalize) {
  const auto v = l2_normalize(std::vector<double>{3.0, 4.0});
  EXPECT_NEAR(v[0], 0.6, 1e-12);
  EXPECT_NEAR(v[1], 0.8, 1e-12);
  const auto u = l2_normalize(std::vector<double>{0.6, 0.8});
  EXPECT_NEAR(u[0], 0.6, 1e-12);
  EXPECT_NEAR(u[1], 0.8, 1e-12);
  EXPECT_THROW(l2_normalize(std::vector<double>{0.0, 0.0}), Error);
}

TEST(Dense, Cosine) {
  using V = std::vector<double>;
  EXPECT_NEAR(cosine(V{1, 0}, V{0, 1}), 0.0, 1e-12);
  EXPECT_NEAR(cosine(V{1, 1}, V{1, 0}), 0.70710678, 1e-8);
  EXPECT_NEAR(cosine(V{0.3, -2, 5}, V{0.3, -2, 5}), 1.0, 1e-12);
}

TEST(Dense, Centroid) {
  using V = std::vector<double>;
  EXPECT_EQ(centroid(std::vector<V>{{1, 2}}), (V{1, 2}));
  EXPECT_EQ(centroid(std::vector<V>{{0, 0}, {2, 2}}), (V{1, 1}));
  const auto c = centroid(std::vector<V>{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  for (double x : c) EXPECT_NEAR(x, 1.0 / 3.0, 1e-12);
  EXPECT_THROW(centroid(std::vector<V>{}), Error);
}

TEST(DenseStore, DimensionIsFixedByFirstIngest) {
  DenseStore store;
  store.ingest("PMC1", std::vector<double>(384, 0.1));
  EXPECT_EQ(store.dimension(), 384u);
  try {
    store.ingest("PMC2", std::vector<double>(300, 0.1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  store.ingest("PMC1", std::vector<double>(384, 0.2));
  EXPECT_EQ(store.size(), 1u);
  EXPECT_FLOAT_EQ(store.find("PMC1")->at(0), 0.2f);
}

TEST(DenseStore, NonFiniteRejected) {
  DenseStore store;
  EXPECT_THROW(store.ingest("PMC1", std::vector<double>{1.0, NAN}), Error);
  EXPECT_EQ(store.size(), 0u);
}

TEST(DenseStore, StrictModeRejectsUnknownCase) {
  DenseStore store;
  store.set_strict([](std::string_view id) { return id == "PMC1"; });
  try {
    store.ingest("PMC2", std::vector<double>{1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownCase);
  }
}

TEST(DenseStore, JsonlRoundTripAndLineErrors) {
  DenseStore store;
  EXPECT_EQ(store.ingest_jsonl("{\"pmcid\":\"PMC2\",\"vector\":[0,1]}\n\n{\"pmcid\":\"PMC1\",\"vector\":[1,0]}\n"), 2u);
  DenseStore copy;
  copy.ingest_jsonl(store.to_jsonl());
  EXPECT_EQ(copy.vectors(), store.vectors());
  try {
    store.ingest_jsonl("{\"pmcid\":\"PMC3\",\"vector\":[1,0]}\n{\"pmcid\":\"PMC4\",\"vector\":[1]}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    EXPECT_EQ(e.path(), "line 2");
  }
}

}  // namespace
}  // namespace amelo
