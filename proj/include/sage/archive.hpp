#pragma once

// Candidate records and the append-only run archive.

#include "sage/ast_features.hpp"
#include "sage/llm.hpp"
#include "sage/shap.hpp"

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sage::evo {

struct GuidanceRecord {
  std::string feature;
  shap::Direction direction = shap::Direction::increase;

  bool operator==(const GuidanceRecord&) const = default;
};

struct Timestamps {
  std::string created_at;  // ISO-8601 UTC
  double llm_seconds = 0.0;
  double eval_seconds = 0.0;

  bool operator==(const Timestamps&) const = default;
};

struct Candidate {
  std::string id;
  int generation = 0;
  std::optional<std::string> parent_id;
  llm::PromptKind prompt_kind = llm::PromptKind::init;
  std::optional<GuidanceRecord> guidance;
  double fitness = 0.0;
  std::optional<std::string> error;
  bool timed_out = false;
  std::optional<features::FeatureVector> features;
  std::string description;
  std::string code;
  llm::Usage llm_usage;
  Timestamps timestamps;

  bool operator==(const Candidate&) const;
};

/// One archive line. Keys appear in a fixed order.
nlohmann::ordered_json to_json(const Candidate& c);
/// Throws MalformedResponse on schema violations.
Candidate candidate_from_json(const nlohmann::json& j);

/// The record without its timestamps, serialized compactly.
std::string canonical_line(const Candidate& c);

/// Hex SHA-256 over the canonical lines of all records, in order.
std::string canonical_hash(const std::vector<Candidate>& records);

std::string sha256_hex(std::string_view data);

/// Append-only ordered collection of candidates. When constructed with a
/// path, every appended record is written and flushed as one JSONL line, so
/// an aborted run leaves a readable partial archive.
class Archive {
 public:
  Archive() = default;
  explicit Archive(const std::filesystem::path& jsonl_path);

  /// Throws std::invalid_argument on duplicate ids.
  void append(Candidate c);

  const std::vector<Candidate>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const Candidate& operator[](std::size_t i) const { return records_[i]; }
  /// Archive position of `id`, if present.
  std::optional<std::size_t> index_of(std::string_view id) const;

 private:
  mutable std::mutex mutex_;
  std::vector<Candidate> records_;
  std::optional<std::ofstream> sink_;
};

/// Reads an archive.jsonl file. Throws MalformedResponse with the line
/// number on bad input.
std::vector<Candidate> load_archive(const std::filesystem::path& path);

}  // namespace sage::evo
