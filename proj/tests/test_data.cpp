#include "moralprobe/csv.hpp"
#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"
#include "moralprobe/moral_matrix.hpp"
#include "moralprobe/survey_ingest.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace moralprobe;

TEST(Csv, QuotedFieldsAndLineNumbers) {
  const auto t = csv::parse("a,b\n\"x,1\",\"say \"\"hi\"\"\"\r\n\n3,4\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
  EXPECT_EQ(t.line_numbers[1], 4u);
  EXPECT_EQ(t.column("b"), 1);
  EXPECT_EQ(t.column("zz"), -1);
  EXPECT_EQ(csv::quote("a,b"), "\"a,b\"");
  EXPECT_EQ(csv::quote("plain"), "plain");
}

TEST(Csv, RaggedRowIsAnError) {
  try {
    csv::parse("a,b\n1,2\n3\n");
    FAIL() << "expected a ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Digest, KnownSha256) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(digest64("abc"), 0xba7816bf8f01cfeaULL);
}

TEST(MoralMatrix, CsvRoundTripKeepsMissingCells) {
  MoralMatrix m;
  m.countries = {"Chile", "Kenya, Republic"};
  m.topics = {"Divorce", "Abortion"};
  m.scores.resize(2, 2);
  m.scores << 0.12345, NAN, -1, 0.5;
  m.source_tag = "wvs";
  const auto text = to_csv(m);
  EXPECT_NE(text.find("0.1235"), std::string::npos);  // 4 decimals when bounded
  const auto back = matrix_from_csv(text, "wvs", true);
  EXPECT_EQ(back.countries, m.countries);
  EXPECT_TRUE(back.is_missing(0, 1));
  EXPECT_DOUBLE_EQ(back.scores(0, 0), 0.1235);
  EXPECT_EQ(to_csv(back), text);
}

TEST(MoralMatrix, UnboundedKeepsFullPrecision) {
  MoralMatrix m;
  m.countries = {"A"};
  m.topics = {"t"};
  m.scores.resize(1, 1);
  m.scores(0, 0) = -3.141592653589793;
  m.bounded = false;
  const auto back = matrix_from_csv(to_csv(m), "model", false);
  EXPECT_EQ(back.scores(0, 0), m.scores(0, 0));
}

TEST(MoralMatrix, ValidateRejectsOutOfRangeAndDuplicates) {
  MoralMatrix m;
  m.countries = {"A", "B"};
  m.topics = {"t"};
  m.scores.resize(2, 1);
  m.scores << 0.5, 1.5;
  EXPECT_THROW(m.validate(), ValidationError);
  m.scores << 0.5, 0.2;
  m.validate();
  m.countries = {"A", "A"};
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(MoralMatrix, AlignmentUsesIntersectionAndListwiseDeletion) {
  MoralMatrix s;
  s.countries = {"A", "B", "C", "D"};
  s.topics = {"x", "y", "z"};
  s.scores.setConstant(4, 3, 0.1);
  s.scores(1, 2) = NAN;
  MoralMatrix m;
  m.countries = {"D", "C", "B", "E"};
  m.topics = {"y", "x"};
  m.bounded = false;
  m.scores.setConstant(4, 2, -2.0);
  m.scores(1, 0) = NAN;  // C / y
  const auto a = align_matrices(s, m);
  EXPECT_EQ(a.survey.countries, (std::vector<std::string>{"B", "D"}));
  EXPECT_EQ(a.survey.topics, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(a.model.countries, a.survey.countries);
  EXPECT_EQ(a.dropped_countries, (std::vector<std::string>{"C"}));
}

// ---------------------------------------------------------------------------

TEST(Normalize, WvsScale) {
  EXPECT_EQ(normalize_wvs(10), 1.0);
  EXPECT_EQ(normalize_wvs(1), -1.0);
  EXPECT_EQ(normalize_wvs(5.5), 0.0);
  EXPECT_EQ(normalize_wvs(3.0), round4(-2.5 / 4.5));
  bool clamped = false;
  EXPECT_EQ(normalize_wvs(0.4, &clamped), -1.0);
  EXPECT_TRUE(clamped);
  normalize_wvs(7.0, &clamped);
  EXPECT_FALSE(clamped);
}

TEST(Normalize, PewCodesAndLabels) {
  EXPECT_EQ(normalize_pew(1), 1);
  EXPECT_EQ(normalize_pew(2), -1);
  EXPECT_EQ(normalize_pew(3), 0);
  EXPECT_FALSE(normalize_pew(4).has_value());
  EXPECT_FALSE(normalize_pew(9).has_value());
  EXPECT_THROW(normalize_pew(6), ValidationError);
  EXPECT_EQ(normalize_pew("Morally unacceptable"), -1);
  EXPECT_EQ(normalize_pew("not a moral issue"), 0);
}

namespace {

SurveyLayout two_question_layout() {
  SurveyLayout l;
  l.country_column = "B_COUNTRY";
  l.questions = {{"Q1", "Divorce"}, {"Q2", "Abortion"}};
  return l;
}

CountryMap small_map() { return CountryMap({{"152", "Chile"}, {"404", "Kenya"}, {"840", "United States"}}); }

}  // namespace

TEST(Ingest, WvsMeansWithZeroReplacement) {
  const std::string text =
      "B_COUNTRY,Q1,Q2\n"
      "152,10,5\n"
      "152,1,6\n"
      "152,-1,7\n"
      "404,10,2\n"
      "404,10,3.0\n";
  const auto table = parse_responses(text, two_question_layout(), SurveySource::WVS);
  ASSERT_EQ(table.rows.size(), 10u);
  EXPECT_EQ(table.rows[4].line, 4u);

  IngestOptions opts;
  opts.source_tag = "wvs";
  const auto r = ingest_survey(table, small_map(), two_question_layout(), opts);
  const auto& m = r.matrix;
  EXPECT_EQ(m.countries, (std::vector<std::string>{"Chile", "Kenya"}));
  EXPECT_EQ(m.topics, (std::vector<std::string>{"Abortion", "Divorce"}));
  // Chile divorce: (10 + 1 + 0) / 3
  EXPECT_DOUBLE_EQ(m.scores(0, 1), round4((11.0 / 3 - 5.5) / 4.5));
  EXPECT_DOUBLE_EQ(m.scores(0, 0), round4((6.0 - 5.5) / 4.5));
  EXPECT_DOUBLE_EQ(m.scores(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.scores(1, 0), round4((2.5 - 5.5) / 4.5));

  opts.nonresponse = NonResponsePolicy::Exclude;
  const auto ex = ingest_survey(table, small_map(), two_question_layout(), opts);
  EXPECT_DOUBLE_EQ(ex.matrix.scores(0, 1), 0.0);  // (10 + 1) / 2 = 5.5
}

TEST(Ingest, AllNonresponseCellClampsToMinusOne) {
  const std::string text = "B_COUNTRY,Q1,Q2\n152,-4,5\n152,-4,6\n404,3,4\n";
  IngestOptions opts;
  const auto r = ingest_survey(parse_responses(text, two_question_layout(), SurveySource::WVS), small_map(),
                               two_question_layout(), opts);
  EXPECT_EQ(r.matrix.scores(0, 1), -1.0);
  EXPECT_GE(r.meta.clamped_cells, 1u);
}

TEST(Ingest, MalformedRowsReportLineNumbers) {
  const std::string text = "B_COUNTRY,Q1,Q2\n152,3,4\n152,x,4\n";
  try {
    parse_responses(text, two_question_layout(), SurveySource::WVS);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  const std::string out_of_range = "B_COUNTRY,Q1,Q2\n152,3,4\n152,11,4\n";
  EXPECT_THROW(ingest_survey(parse_responses(out_of_range, two_question_layout(), SurveySource::WVS), small_map(),
                             two_question_layout(), {}),
               ValidationError);
}

TEST(Ingest, UnknownCountryCodeIsAnError) {
  const std::string text = "B_COUNTRY,Q1,Q2\n999,3,4\n152,3,4\n";
  EXPECT_THROW(ingest_survey(parse_responses(text, two_question_layout(), SurveySource::WVS), small_map(),
                             two_question_layout(), {}),
               ValidationError);
}

TEST(Ingest, MissingColumnIsAnError) {
  EXPECT_THROW(parse_responses("B_COUNTRY,Q1\n152,3\n", two_question_layout(), SurveySource::WVS), ValidationError);
}

TEST(Ingest, PewExcludesNonresponses) {
  SurveyLayout l;
  l.country_column = "COUNTRY";
  l.country_column_has_names = true;
  l.questions = {{"Q84A", "Using contraceptives"}, {"Q84G", "Gambling"}};
  const std::string text =
      "COUNTRY,Q84A,Q84G\n"
      "Chile,1,2\n"
      "Chile,2,Morally acceptable\n"
      "Chile,3,8\n"
      "Chile,4,2\n"
      "Kenya,1,1\n"
      "Kenya,9,3\n";
  IngestOptions opts;
  opts.source = SurveySource::PEW;
  opts.source_tag = "pew";
  const auto r = ingest_survey(parse_responses(text, l, SurveySource::PEW), {}, l, opts);
  const auto& m = r.matrix;
  EXPECT_EQ(m.topics, (std::vector<std::string>{"Gambling", "Using contraceptives"}));
  EXPECT_DOUBLE_EQ(m.scores(0, 1), 0.0);               // +1 -1 0, "depends" dropped
  EXPECT_DOUBLE_EQ(m.scores(0, 0), round4(-1.0 / 3));  // -1 +1 -1, 8 dropped
  EXPECT_DOUBLE_EQ(m.scores(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(m.scores(1, 0), 0.5);
}

TEST(Ingest, TopicSeenOnceIsDropped) {
  const std::string text = "B_COUNTRY,Q1,Q2\n152,3,4\n404,5,6\n";
  auto table = parse_responses(text, two_question_layout(), SurveySource::WVS);
  // Remove Kenya's Q2 answer entirely.
  std::erase_if(table.rows, [](const ResponseRow& r) { return r.country_code == "404" && r.question_id == "Q2"; });
  const auto r = ingest_survey(table, small_map(), two_question_layout(), {});
  EXPECT_EQ(r.matrix.topics, (std::vector<std::string>{"Divorce"}));
  EXPECT_EQ(r.meta.dropped_topics, (std::vector<std::string>{"Abortion"}));
}

TEST(Ingest, CountryMapFileReading) {
  mptest::TempDir dir;
  const auto p = dir.path / "map.csv";
  {
    std::ofstream(p) << "code,name\n152,Chile\n404,Kenya\n";
  }
  const auto map = CountryMap::read(p);
  EXPECT_EQ(map.name("152"), "Chile");
  EXPECT_TRUE(map.contains_name("Kenya"));
  {
    std::ofstream(p) << "code,name\n152,Chile\n152,Kenya\n";
  }
  EXPECT_THROW(CountryMap::read(p), ValidationError);
}

TEST(Ingest, ShippedCountryMapCoversSyntheticExport) {
  const auto map = CountryMap::read(mptest::source_dir() / "data" / "wvs_country_map.csv");
  EXPECT_EQ(map.name("840"), "United States");
  EXPECT_GE(map.entries().size(), 55u);
}
