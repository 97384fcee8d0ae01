#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cng/pipeline/config.hpp"

namespace cng {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,    // bad arguments or config
  kExitData = 2,     // unreadable or incompatible corpus/checkpoint, unusable training data
  kExitNumeric = 3,  // non-finite values
};

// Maps a caught exception onto the exit code contract.
int exit_code_for(const std::exception& e) noexcept;

struct FileDigest {
  std::string role;  // "corpus", "classifier", "estimator", ...
  std::filesystem::path path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;  // checkpoints and data files written
  std::string started_at;           // UTC, ISO 8601
  double wall_clock_seconds = 0.0;
};

nlohmann::json to_json(const RunManifest& m);

// Digest of a report that ignores timing fields and file paths, so runs
// with the same config, inputs and seed compare equal.
std::string report_content_digest(const nlohmann::json& report);

struct CommandOptions {
  PipelineConfig config;
  std::filesystem::path corpus;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path out = "out";
};

// Each command writes its artifacts and `<command>_report.json` under
// `out`, and returns the report (manifest and content digest included).
//
// train:   classifier.ckpt
// causal:  estimator.ckpt, optional causal_records.csv
// distill: optional distill_results.csv
// synth:   the corpus at options.corpus
nlohmann::json cmd_train(const CommandOptions& options);
nlohmann::json cmd_causal(const CommandOptions& options);
nlohmann::json cmd_distill(const CommandOptions& options);
nlohmann::json cmd_eval(const CommandOptions& options);
nlohmann::json cmd_synth(const CommandOptions& options);

// True when any entity span in `remaining` covers an annotated trigger token.
bool covers_trigger(const std::vector<EntitySpan>& spans, const std::vector<std::size_t>& remaining,
                    const std::vector<std::size_t>& trigger_positions);

}  // namespace cng
