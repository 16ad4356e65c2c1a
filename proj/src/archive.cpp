#include "sage/archive.hpp"

#include "sage/errors.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <stdexcept>

namespace sage::evo {

namespace {

nlohmann::ordered_json features_json(const features::FeatureVector& x) {
  nlohmann::ordered_json j;
  const auto& names = features::feature_names();
  for (std::size_t i = 0; i < features::kFeatureCount; ++i) j[std::string(names[i])] = x[i];
  return j;
}

template <typename Json>
Json nullable(const std::optional<std::string>& s) {
  return s ? Json(*s) : Json(nullptr);
}

nlohmann::ordered_json body_json(const Candidate& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["generation"] = c.generation;
  j["parent_id"] = nullable<nlohmann::ordered_json>(c.parent_id);
  j["prompt_kind"] = llm::to_string(c.prompt_kind);
  if (c.guidance) {
    j["guidance"] = {{"feature", c.guidance->feature},
                     {"direction", shap::to_string(c.guidance->direction)}};
  } else {
    j["guidance"] = nullptr;
  }
  j["fitness"] = c.fitness;
  j["error"] = nullable<nlohmann::ordered_json>(c.error);
  j["timed_out"] = c.timed_out;
  j["features"] = c.features ? features_json(*c.features) : nlohmann::ordered_json(nullptr);
  j["description"] = c.description;
  j["code"] = c.code;
  j["llm_usage"] = {{"prompt_tokens", c.llm_usage.prompt_tokens},
                    {"completion_tokens", c.llm_usage.completion_tokens}};
  return j;
}

}  // namespace

bool Candidate::operator==(const Candidate& o) const {
  return id == o.id && generation == o.generation && parent_id == o.parent_id &&
         prompt_kind == o.prompt_kind && guidance == o.guidance && fitness == o.fitness &&
         error == o.error && timed_out == o.timed_out && features == o.features &&
         description == o.description && code == o.code &&
         llm_usage.prompt_tokens == o.llm_usage.prompt_tokens &&
         llm_usage.completion_tokens == o.llm_usage.completion_tokens &&
         timestamps == o.timestamps;
}

nlohmann::ordered_json to_json(const Candidate& c) {
  auto j = body_json(c);
  j["timestamps"] = {{"created_at", c.timestamps.created_at},
                     {"llm_seconds", c.timestamps.llm_seconds},
                     {"eval_seconds", c.timestamps.eval_seconds}};
  return j;
}

Candidate candidate_from_json(const nlohmann::json& j) {
  try {
    Candidate c;
    c.id = j.at("id").get<std::string>();
    c.generation = j.at("generation").get<int>();
    if (!j.at("parent_id").is_null()) c.parent_id = j["parent_id"].get<std::string>();
    c.prompt_kind = llm::prompt_kind_from_string(j.at("prompt_kind").get<std::string>());
    if (!j.at("guidance").is_null()) {
      const auto& g = j["guidance"];
      const auto dir = shap::direction_from_string(g.at("direction").get<std::string>());
      if (!dir) throw MalformedResponse("bad guidance direction");
      c.guidance = GuidanceRecord{g.at("feature").get<std::string>(), *dir};
    }
    c.fitness = j.at("fitness").get<double>();
    if (!j.at("error").is_null()) c.error = j["error"].get<std::string>();
    c.timed_out = j.value("timed_out", false);
    if (!j.at("features").is_null()) {
      features::FeatureVector x{};
      const auto& names = features::feature_names();
      for (std::size_t i = 0; i < features::kFeatureCount; ++i) {
        x[i] = j["features"].at(std::string(names[i])).get<double>();
      }
      c.features = x;
    }
    c.description = j.at("description").get<std::string>();
    c.code = j.at("code").get<std::string>();
    c.llm_usage.prompt_tokens = j.at("llm_usage").at("prompt_tokens").get<std::int64_t>();
    c.llm_usage.completion_tokens = j.at("llm_usage").at("completion_tokens").get<std::int64_t>();
    if (j.contains("timestamps")) {
      const auto& t = j["timestamps"];
      c.timestamps.created_at = t.value("created_at", "");
      c.timestamps.llm_seconds = t.value("llm_seconds", 0.0);
      c.timestamps.eval_seconds = t.value("eval_seconds", 0.0);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(std::string("archive record: ") + e.what());
  } catch (const ConfigError& e) {
    throw MalformedResponse(std::string("archive record: ") + e.what());
  }
}

std::string canonical_line(const Candidate& c) { return body_json(c).dump(); }

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string canonical_hash(const std::vector<Candidate>& records) {
  std::string all;
  for (const auto& c : records) {
    all += canonical_line(c);
    all += '\n';
  }
  return sha256_hex(all);
}

Archive::Archive(const std::filesystem::path& jsonl_path) {
  sink_.emplace(jsonl_path, std::ios::out | std::ios::trunc);
  if (!*sink_) throw Error("cannot open archive file " + jsonl_path.string());
}

void Archive::append(Candidate c) {
  std::lock_guard lock(mutex_);
  for (const auto& r : records_) {
    if (r.id == c.id) throw std::invalid_argument("duplicate candidate id " + c.id);
  }
  if (sink_) {
    *sink_ << to_json(c).dump() << '\n';
    sink_->flush();
  }
  records_.push_back(std::move(c));
}

std::optional<std::size_t> Archive::index_of(std::string_view id) const {
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].id == id) return i;
  }
  return std::nullopt;
}

std::vector<Candidate> load_archive(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read archive " + path.string());
  std::vector<Candidate> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(candidate_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse(path.string() + ":" + std::to_string(number) + ": " + e.what());
    } catch (const MalformedResponse& e) {
      throw MalformedResponse(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sage::evo
