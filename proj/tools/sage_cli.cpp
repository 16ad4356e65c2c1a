// Command-line entry point: run experiments, extract features and analyze
// finished runs. Exit status: 0 success, 2 usage or configuration error,
// 3 runtime failure.

#include "sage/analytics.hpp"
#include "sage/archive.hpp"
#include "sage/ast_features.hpp"
#include "sage/config.hpp"
#include "sage/errors.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
namespace an = sage::analytics;

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw sage::Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw sage::Error("cannot write " + path.string());
  out << text;
}

/// A run directory holds archive.jsonl; any other directory is searched one
/// level deep for run directories.
std::vector<fs::path> expand_runs(const std::vector<std::string>& dirs) {
  std::vector<fs::path> out;
  for (const auto& d : dirs) {
    const fs::path dir(d);
    if (fs::exists(dir / "archive.jsonl")) {
      out.push_back(dir);
      continue;
    }
    if (!fs::is_directory(dir)) throw sage::Error("not a run directory: " + d);
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "archive.jsonl")) found.push_back(entry.path());
    }
    if (found.empty()) throw sage::Error("no archive.jsonl found under " + d);
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

std::vector<std::vector<double>> load_curves(const std::vector<fs::path>& runs) {
  std::vector<std::vector<double>> curves;
  for (const auto& r : runs) curves.push_back(an::best_so_far(sage::evo::load_archive(r / "archive.jsonl")));
  return curves;
}

int cmd_run(const std::string& config_path, std::uint64_t seed, const std::string& out_dir, bool quiet) {
  const auto config = sage::config::load_config(config_path);
  if (!quiet) {
    std::cerr << "run: seed " << seed << ", budget " << config.run.budget << ", guidance "
              << (config.run.guidance_enabled ? "on" : "off") << "\n";
  }
  const auto out = sage::config::run_to_directory(config, seed, out_dir);
  std::cout << nlohmann::json{{"best_id", out.result.best_id},
                              {"best_fitness", out.result.best_fitness},
                              {"archive_size", out.archive_size},
                              {"archive_hash", out.archive_hash},
                              {"total_tokens", out.result.total_usage.total()}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_features(const std::string& file) {
  const auto x = sage::features::extract_features(read_text(file));
  nlohmann::ordered_json j;
  const auto& names = sage::features::feature_names();
  for (std::size_t i = 0; i < x.size(); ++i) j[std::string(names[i])] = x[i];
  std::cout << j.dump(2) << "\n";
  return 0;
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string convergence_csv(const an::ConvergenceCurve& c) {
  std::ostringstream csv;
  csv << "evaluation,mean,lower,upper\n";
  for (std::size_t i = 0; i < c.mean.size(); ++i) {
    csv << i + 1 << "," << csv_number(c.mean[i]) << "," << csv_number(c.lower[i]) << "," << csv_number(c.upper[i])
        << "\n";
  }
  return csv.str();
}

int cmd_analyze(const std::vector<std::string>& dirs, const std::string& out) {
  const auto runs = expand_runs(dirs);
  nlohmann::ordered_json report;
  report["runs"] = nlohmann::ordered_json::array();
  an::ConsistencyTable total;
  std::vector<std::vector<double>> curves;
  for (const auto& r : runs) {
    const auto archive = sage::evo::load_archive(r / "archive.jsonl");
    const auto curve = an::best_so_far(archive);
    const auto table = an::consistency_analysis(archive);
    for (const auto& [kind, counts] : table.by_prompt_kind) {
      total.by_prompt_kind[kind].match += counts.match;
      total.by_prompt_kind[kind].mismatch += counts.mismatch;
    }
    total.skipped += table.skipped;
    nlohmann::ordered_json entry;
    entry["dir"] = r.string();
    entry["archive_size"] = archive.size();
    entry["best_fitness"] = curve.empty() ? 0.0 : curve.back();
    entry["auc"] = an::auc(curve);
    entry["consistency"] = nlohmann::ordered_json::parse(an::to_json(table).dump());
    report["runs"].push_back(std::move(entry));
    curves.push_back(curve);
  }
  const auto conv = an::convergence_curve(curves);
  report["consistency"] = nlohmann::ordered_json::parse(an::to_json(total).dump());
  report["convergence"] = {{"mean", conv.mean}, {"lower", conv.lower}, {"upper", conv.upper}};
  if (conv.warning) {
    report["warnings"] = {*conv.warning};
    std::cerr << "warning: " << *conv.warning << "\n";
  }
  write_text(out, report.dump(2) + "\n");
  write_text(fs::path(out).replace_filename("convergence.csv"), convergence_csv(conv));
  return 0;
}

int cmd_ceg(const std::string& archive_path, const std::string& feature, const std::string& format,
            const std::string& out) {
  const auto doc = an::build_ceg(sage::evo::load_archive(archive_path), feature);
  write_text(out, format == "dot" ? an::to_dot(doc) : an::to_json(doc).dump(2) + "\n");
  return 0;
}

int cmd_compare(const std::vector<std::string>& a_dirs, const std::vector<std::string>& b_dirs,
                const std::string& out) {
  const auto runs_a = load_curves(expand_runs(a_dirs));
  const auto runs_b = load_curves(expand_runs(b_dirs));
  const auto a = an::convergence_curve(runs_a);
  const auto b = an::convergence_curve(runs_b);
  for (const auto* c : {&a, &b}) {
    if (c->warning) std::cerr << "warning: " << *c->warning << "\n";
  }
  const auto speedup = an::speedup_curve(a.mean, b.mean);
  std::ostringstream csv;
  csv << "evaluation,mean_a,lower_a,upper_a,mean_b,lower_b,upper_b,speedup\n";
  const std::size_t len = std::max(a.mean.size(), b.mean.size());
  for (std::size_t i = 0; i < len; ++i) {
    csv << i + 1;
    for (const auto* c : {&a, &b}) {
      if (i < c->mean.size()) {
        csv << "," << csv_number(c->mean[i]) << "," << csv_number(c->lower[i]) << ","
            << csv_number(c->upper[i]);
      } else {
        csv << ",,,";
      }
    }
    csv << ",";
    if (i < speedup.size() && speedup[i]) csv << csv_number(*speedup[i]);
    csv << "\n";
  }
  write_text(out, csv.str());
  const auto effect = an::auc_and_effect(runs_a, runs_b);
  std::cout << nlohmann::json{{"auc_a", effect.auc_a},
                              {"auc_b", effect.auc_b},
                              {"mean_diff", effect.mean_diff},
                              {"cliffs_delta", effect.cliffs_delta}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Code-feature guided evolution of optimization algorithms"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one evolutionary experiment");
  run->add_option("--config", config_path, "Configuration JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Run seed")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_flag("--quiet", quiet, "Suppress progress output");

  std::string file;
  auto* feat = app.add_subcommand("features", "Print the code feature vector of a Python file");
  feat->add_option("--file", file, "Python source file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> run_dirs;
  std::string report_path;
  auto* analyze = app.add_subcommand("analyze", "Summarize finished runs");
  analyze->add_option("--runs", run_dirs, "Run directories")->required();
  analyze->add_option("--out", report_path, "report.json path")->required();

  std::string archive_path, feature, format = "dot", ceg_out;
  auto* ceg = app.add_subcommand("ceg", "Export a code evolution graph");
  ceg->add_option("--archive", archive_path, "archive.jsonl")->required()->check(CLI::ExistingFile);
  ceg->add_option("--feature", feature, "Tracked feature name")->required();
  ceg->add_option("--format", format, "dot or json")->check(CLI::IsMember({"dot", "json"}));
  ceg->add_option("--out", ceg_out, "Output path")->required();

  std::vector<std::string> a_dirs, b_dirs;
  std::string curves_path;
  auto* compare = app.add_subcommand("compare", "Convergence and speed-up of run set A versus B");
  compare->add_option("--a", a_dirs, "Run directories of method A")->required();
  compare->add_option("--b", b_dirs, "Run directories of method B")->required();
  compare->add_option("--out", curves_path, "curves.csv path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*run) return cmd_run(config_path, seed, out_dir, quiet);
    if (*feat) return cmd_features(file);
    if (*analyze) return cmd_analyze(run_dirs, report_path);
    if (*ceg) return cmd_ceg(archive_path, feature, format, ceg_out);
    if (*compare) return cmd_compare(a_dirs, b_dirs, curves_path);
  } catch (const sage::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const sage::ParseError& e) {
    std::cerr << "parse error at " << e.line() << ":" << e.column() << ": " << e.what() << "\n";
    return kRuntimeExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return 0;
}
