#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "amelo/error.hpp"
#include "amelo/extraction_rules.hpp"
#include "support.hpp"

namespace amelo {
namespace {

using Strings = std::vector<std::string>;

TEST(Segmentation, SplitsTerminatedSentences) {
  EXPECT_EQ(segment_sentences("Painless swelling. Firm mass."), (Strings{"Painless swelling.", "Firm mass."}));
  EXPECT_TRUE(segment_sentences("").empty());
}

TEST(Segmentation, AbbreviationGuard) {
  EXPECT_EQ(segment_sentences("Lesion of 2 cm. Diameter noted").size(), 1u);
  EXPECT_EQ(segment_sentences("Lesion of 2 cm. diameter noted").size(), 1u);
  EXPECT_EQ(segment_sentences("See Fig. 2 for details. Biopsy followed.").size(), 2u);
}

TEST(ExtractFields, ClinicalScenario) {
  const auto r = extract_fields(testing::slurp(testing::fixture("clinical_use_case.txt")), RulePack::builtin());
  EXPECT_NE(r.field("radiological_features").text.find("multilocular radiolucent lesion from first molar to ramus"),
            std::string::npos);
  EXPECT_NE(r.field("tumor_location").text.find("right mandible"), std::string::npos);
  EXPECT_EQ(r.field("presenting_complaint").method, ExtractionMethod::Keyword);
}

TEST(ExtractFields, NoTriggersMeansNoFields) {
  const auto r = extract_fields("Nothing relevant here. Just words.", RulePack::builtin());
  for (const auto& [name, f] : r.fields) {
    EXPECT_EQ(f.method, ExtractionMethod::None) << name;
    EXPECT_TRUE(f.text.empty()) << name;
  }
}

TEST(ExtractFields, FieldCollectsSentencesInOrder) {
  const auto r = extract_fields("A swelling appeared first. The swelling then grew.", RulePack::builtin());
  EXPECT_EQ(r.field("presenting_complaint").text, "A swelling appeared first. The swelling then grew.");
}

TEST(ExtractFields, RecordFromExtraction) {
  const auto r = extract_fields("Histopathology was consistent with follicular ameloblastoma.", RulePack::builtin(),
                                "PMC1");
  const auto record = r.to_case_record();
  EXPECT_EQ(record.pmcid, "PMC1");
  EXPECT_EQ(record.diagnosis_label, DiagnosisLabel::Follicular);
}

TEST(RulePack, RejectsBadRegex) {
  const auto j = nlohmann::json::parse(R"({"patterns": [{"regex": "(", "field": "tumor_location"}]})");
  try {
    RulePack::from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidRulePack);
  }
}

TEST(RulePack, RejectsUnknownField) {
  EXPECT_THROW(RulePack::from_json(nlohmann::json::parse(R"({"prognosis": ["x"]})")), Error);
}

CategoryCentroids two_centroids() {
  CategoryCentroids c;
  c.dimension = 2;
  c.centroids["c1"] = {1.0f, 0.0f};
  c.centroids["c2"] = {0.6f, 0.8f};
  return c;
}

TEST(Centroid, HandComputedCosines) {
  const float s = static_cast<float>(1.0 / std::sqrt(2.0));
  const std::vector<float> q = {s, s};
  const auto m = categorize_by_centroid(q, two_centroids());
  ASSERT_TRUE(m);
  EXPECT_EQ(m->category, "c2");
  EXPECT_NEAR(m->cosine, 1.4 / std::sqrt(2.0), 1e-6);  // 0.9899
}

TEST(Centroid, SelfAndOrthogonal) {
  const auto c = two_centroids();
  EXPECT_EQ(categorize_by_centroid(c.centroids.at("c1"), c)->category, "c1");
  CategoryCentroids one;
  one.dimension = 2;
  one.centroids["only"] = {1.0f, 0.0f};
  const std::vector<float> orth = {0.0f, 1.0f};
  EXPECT_FALSE(categorize_by_centroid(orth, one));
  const std::vector<float> zero = {0.0f, 0.0f};
  EXPECT_FALSE(categorize_by_centroid(zero, one));
}

TEST(Centroid, NeverBelowThreshold) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    CategoryCentroids c;
    c.dimension = 8;
    for (int i = 0; i < 4; ++i) c.centroids["cat" + std::to_string(i)] = testing::random_unit(rng, 8);
    const auto q = testing::random_unit(rng, 8);
    if (const auto m = categorize_by_centroid(q, c)) {
      EXPECT_GE(cosine(q, c.centroids.at(m->category)), kCentroidThreshold - 1e-9);
    }
  }
}

TEST(SentenceEmbedding, MeanOfInVocabularyTokens) {
  WordLexicon lex;
  lex.add("a", {1.0f, 0.0f});
  lex.add("b", {0.0f, 1.0f});
  EXPECT_EQ(*sentence_embedding({"a"}, lex), (DenseVector{1.0f, 0.0f}));
  EXPECT_EQ(*sentence_embedding({"a", "b", "zzz"}, lex), (DenseVector{0.5f, 0.5f}));
  EXPECT_FALSE(sentence_embedding({"zzz"}, lex));
}

TEST(WordLexicon, ParsesTextFormatWithHeader) {
  const auto lex = WordLexicon::parse("2 3\nswelling 1 0 0\nmandible 0 1 0\n");
  EXPECT_EQ(lex.size(), 2u);
  EXPECT_EQ(lex.dimension(), 3u);
  EXPECT_EQ(*lex.find("mandible"), (DenseVector{0.0f, 1.0f, 0.0f}));
}

TEST(Dimensions, GoldenSet) {
  EXPECT_EQ(normalize_dimensions("2 cm x 3 cm"), (std::vector<double>{20.0, 30.0}));
  EXPECT_EQ(normalize_dimensions("19.8 mm mesiodistally"), (std::vector<double>{19.8}));
  EXPECT_EQ(normalize_dimensions("4.5 \xC3\x97 3.2 cm"), (std::vector<double>{45.0, 32.0}));
  EXPECT_TRUE(normalize_dimensions("no sizes").empty());
}

TEST(Dimensions, RenderRoundTrips) {
  for (const auto& mm : {std::vector<double>{45.0, 32.0}, std::vector<double>{19.8}, std::vector<double>{1.5, 2, 3}}) {
    EXPECT_EQ(normalize_dimensions(render_dimensions_mm(mm)), mm);
  }
  EXPECT_EQ(render_dimensions_mm({45.0, 32.0}), "45 mm x 32 mm");
}

TEST(Cascade, CentroidBeatsKeywords) {
  WordLexicon lex;
  lex.add("lesion", {0.8f, 0.6f});
  CategoryCentroids c;
  c.dimension = 2;
  c.centroids["radiological_features"] = {1.0f, 0.0f};
  c.centroids["treatment"] = {0.0f, 1.0f};
  const auto r = extract_cascade("Lesion noted.", RulePack::builtin(), c, lex);
  const auto& f = r.field("radiological_features");
  EXPECT_EQ(f.method, ExtractionMethod::Centroid);
  EXPECT_NEAR(f.confidence, 0.8, 1e-6);
}

TEST(Cascade, OutOfVocabularyFallsBackToKeywords) {
  WordLexicon lex;
  lex.add("lesion", {0.8f, 0.6f});
  CategoryCentroids c;
  c.dimension = 2;
  c.centroids["radiological_features"] = {1.0f, 0.0f};
  const auto r = extract_cascade("Painful swelling.", RulePack::builtin(), c, lex);
  const auto& f = r.field("presenting_complaint");
  EXPECT_EQ(f.method, ExtractionMethod::Keyword);
  EXPECT_DOUBLE_EQ(f.confidence, 1.0);
}

TEST(Cascade, EmptyText) {
  const auto r = extract_cascade("", RulePack::builtin(), CategoryCentroids{}, WordLexicon{});
  for (const auto& [name, f] : r.fields) EXPECT_EQ(f.method, ExtractionMethod::None) << name;
}

}  // namespace
}  // namespace amelo
