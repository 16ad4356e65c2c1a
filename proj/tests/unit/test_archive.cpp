#include "sage/archive.hpp"
#include "sage/errors.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace sage;
using namespace sage::evo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  std::string tmpl = (fs::temp_directory_path() / "sage-archive-XXXXXX").string();
  return fs::path(::mkdtemp(tmpl.data()));
}

Candidate sample(const std::string& id, double fitness) {
  Candidate c;
  c.id = id;
  c.generation = 1;
  c.parent_id = "c0000";
  c.prompt_kind = llm::PromptKind::refine;
  c.guidance = GuidanceRecord{"total_parameter_count", shap::Direction::decrease};
  c.fitness = fitness;
  c.features = features::FeatureVector{};
  (*c.features)[3] = 2.5;
  c.description = "A sampler.";
  c.code = "class A:\n    pass\n";
  c.llm_usage = {10, 20};
  c.timestamps = {"2026-01-01T00:00:00.000Z", 0.5, 0.25};
  return c;
}

}  // namespace

TEST(Candidate, JsonRoundTrip) {
  const Candidate c = sample("c0001", 0.75);
  EXPECT_EQ(candidate_from_json(nlohmann::json::parse(to_json(c).dump())), c);

  Candidate bare;
  bare.id = "c0000";
  bare.error = "MissingCodeBlock: no fence";
  bare.timed_out = true;
  EXPECT_EQ(candidate_from_json(nlohmann::json::parse(to_json(bare).dump())), bare);
}

TEST(Candidate, KeyOrderAndNamedFeatures) {
  const auto j = to_json(sample("c0001", 0.75));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  const std::vector<std::string> expected = {"id", "generation", "parent_id", "prompt_kind", "guidance",
                                             "fitness", "error", "timed_out", "features", "description",
                                             "code", "llm_usage", "timestamps"};
  EXPECT_EQ(keys, expected);
  ASSERT_EQ(j["features"].size(), features::kFeatureCount);
  auto fit = j["features"].begin();
  for (auto name : features::feature_names()) {
    EXPECT_EQ(fit.key(), name);
    ++fit;
  }
  EXPECT_EQ(j["guidance"]["feature"], "total_parameter_count");
  EXPECT_EQ(j["guidance"]["direction"], "decrease");
}

TEST(Candidate, SchemaViolationsThrow) {
  auto j = nlohmann::json::parse(to_json(sample("c0001", 0.5)).dump());
  auto missing = j;
  missing.erase("fitness");
  EXPECT_THROW(candidate_from_json(missing), MalformedResponse);
  auto wrong = j;
  wrong["prompt_kind"] = "crossover";
  EXPECT_THROW(candidate_from_json(wrong), MalformedResponse);
  auto short_features = j;
  short_features["features"].erase("node_count");
  EXPECT_THROW(candidate_from_json(short_features), MalformedResponse);
}

TEST(Archive, HashIgnoresTimestamps) {
  std::vector<Candidate> a = {sample("c0000", 0.1), sample("c0001", 0.2)};
  auto b = a;
  b[0].timestamps = {"2030-05-05T00:00:00.000Z", 9.0, 9.0};
  EXPECT_EQ(canonical_hash(a), canonical_hash(b));
  b[1].fitness = 0.3;
  EXPECT_NE(canonical_hash(a), canonical_hash(b));
  EXPECT_EQ(canonical_line(a[0]).find("timestamps"), std::string::npos);
}

TEST(Archive, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Archive, DuplicateIdRejected) {
  Archive archive;
  archive.append(sample("c0000", 0.1));
  EXPECT_THROW(archive.append(sample("c0000", 0.2)), std::invalid_argument);
  EXPECT_EQ(archive.size(), 1u);
  EXPECT_EQ(archive.index_of("c0000"), 0u);
  EXPECT_FALSE(archive.index_of("c9999").has_value());
}

TEST(Archive, JsonlSinkRoundTrip) {
  const auto dir = temp_dir();
  const auto path = dir / "archive.jsonl";
  std::vector<Candidate> written = {sample("c0000", 0.1), sample("c0001", 0.2), sample("c0002", 0.3)};
  {
    Archive archive(path);
    for (const auto& c : written) {
      archive.append(c);
      // Flushed per record: readable while the archive is still open.
      EXPECT_EQ(load_archive(path).size(), archive.size());
    }
  }
  const auto loaded = load_archive(path);
  EXPECT_EQ(loaded, written);
  EXPECT_EQ(canonical_hash(loaded), canonical_hash(written));
  fs::remove_all(dir);
}

TEST(Archive, LoadReportsLineNumber) {
  const auto dir = temp_dir();
  const auto path = dir / "archive.jsonl";
  {
    std::ofstream out(path);
    out << to_json(sample("c0000", 0.1)).dump() << "\n" << "{not json\n";
  }
  try {
    load_archive(path);
    FAIL() << "expected MalformedResponse";
  } catch (const MalformedResponse& e) {
    EXPECT_NE(std::string(e.what()).find("archive.jsonl:2:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_archive(dir / "missing.jsonl"), Error);
  fs::remove_all(dir);
}
