#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "debias/encoder.hpp"
#include "debias/evalharness.hpp"
#include "debias/tuner.hpp"

namespace debias {

/// Flat "key = value" configuration. '#' starts a comment; a line
/// "include <path>" splices another file (relative to the including file).
/// Later assignments win.
class KeyValueConfig {
 public:
  static KeyValueConfig load(const std::filesystem::path& path);
  static KeyValueConfig parse(std::string_view text, const std::filesystem::path& base_dir);

  void set(const std::string& key, const std::string& value,
           const std::filesystem::path& base_dir = {});
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;
  std::filesystem::path path(const std::string& key) const;
  std::vector<std::filesystem::path> paths(const std::string& key) const;
  std::vector<std::string> keys() const;

 private:
  void parse_into(std::string_view text, const std::filesystem::path& base_dir, int depth);

  struct Entry {
    std::string value;
    std::filesystem::path base_dir;
  };
  std::map<std::string, Entry> values_;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";

  // lexicon
  std::string domain_name = "gender";
  std::filesystem::path neutral_words;
  std::vector<std::filesystem::path> attribute_words;

  // corpus
  std::vector<std::filesystem::path> corpus_files;
  CollectOptions collect;
  std::size_t reliability_threshold = 30;
  bool equalize = true;
  std::size_t cap = 0;  // 0 = no cap

  // encoder
  EncoderSpec encoder;
  std::size_t vocab_words = 4000;

  TuneConfig tune;

  // evaluation
  std::vector<std::filesystem::path> seat_files;
  std::filesystem::path crows_file;
  std::filesystem::path stereoset_file;
  bool stereoset_filter = true;
  std::vector<std::string> stereoset_targets;
  Pooling pooling = Pooling::kMean;
  std::size_t early_step = 500;
  std::size_t seat_samples = 10000;

  // projection
  double perplexity = 30.0;
  std::size_t min_sentences = 30;
  bool strict_occurrences = true;

  /// Throws InvalidConfig for unknown keys or malformed values.
  static RunConfig from(const KeyValueConfig& kv);
  /// Referenced input paths exist. Throws InvalidConfig.
  void validate_paths() const;

  std::uint64_t derived_seed(std::string_view label) const;

  std::filesystem::path slices_dir() const { return out_dir / "slices"; }
  std::filesystem::path checkpoints_dir() const { return out_dir / "checkpoints"; }
  std::filesystem::path reports_dir() const { return out_dir / "reports"; }
};

/// Exit codes of the command surface.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitEmptyCorpus = 3,
  kExitNonFinite = 4,
  kExitDataset = 5,
  kExitInsufficient = 6,
};

/// Every command writes the paths it produced to `out` (one per line) and
/// diagnostics to `err`, and maps errors to the exit codes above.
int cmd_prepare(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_tune(const RunConfig& config, const std::optional<std::filesystem::path>& resume,
             std::ostream& out, std::ostream& err);

/// Checkpoint choice for evaluation.
struct EvalTarget {
  /// Empty and !tuned: the unprompted base encoder.
  std::optional<std::filesystem::path> checkpoint;
  /// Use the trail: early checkpoint for CrowS/StereoSet, final for SEAT.
  bool tuned = false;
};

int cmd_eval(const RunConfig& config, const EvalTarget& target, std::ostream& out,
             std::ostream& err);
int cmd_project(const RunConfig& config, const std::vector<std::string>& words,
                const std::optional<std::filesystem::path>& checkpoint, std::ostream& out,
                std::ostream& err);
/// Collects every report in reports/ into reports/summary.csv.
int cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace debias
