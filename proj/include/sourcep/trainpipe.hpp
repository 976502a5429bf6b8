#pragma once

#include "sourcep/checkpoint.hpp"
#include "sourcep/encoder.hpp"
#include "sourcep/error.hpp"
#include "sourcep/record.hpp"
#include "sourcep/tokenize.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sourcep::trainpipe {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

class DatasetError : public Error {
public:
  enum class Kind { Io, MalformedRecord, DuplicateIdx, EmptyDataset, Unlabeled };
  DatasetError(Kind kind, const std::string& what, std::size_t line = 0)
      : Error(what), kind_(kind), line_(line) {}
  Kind kind() const noexcept { return kind_; }
  /// 1-based line of the offending record, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

private:
  Kind kind_;
  std::size_t line_;
};

/// One JSON object per line with `idx`, `source` and optional `label` (0/1).
/// Blank lines are skipped. Result is sorted by idx.
std::vector<ContractRecord> parse_dataset(std::string_view text);
std::vector<ContractRecord> load_dataset(const std::filesystem::path& path);

std::string to_json_line(const ContractRecord& record);

struct DatasetSummary {
  std::size_t records = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t unlabeled = 0;
};

DatasetSummary summarize(std::span<const ContractRecord> records);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

class SplitError : public Error {
public:
  enum class Kind { TooFewPositives, TooFewRecords, UnknownSubset };
  SplitError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

enum class SplitKind { Fixed, Partitions, Random };
std::string_view to_string(SplitKind kind);

struct Subset {
  std::string name;
  std::vector<std::int64_t> ids;  // ascending idx

  bool operator==(const Subset&) const = default;
};

/// Named training subsets evaluated on a named test subset.
struct Protocol {
  std::vector<std::string> train;
  std::string test;
  std::string validation;  // empty when there is none

  bool operator==(const Protocol&) const = default;
};

struct SplitPlan {
  SplitKind kind = SplitKind::Fixed;
  std::vector<Subset> subsets;
  std::vector<Protocol> protocols;

  const Subset& subset(std::string_view name) const;
  /// Union of the named subsets, ascending.
  std::vector<std::int64_t> ids(std::span<const std::string> names) const;

  bool operator==(const SplitPlan&) const = default;
};

inline constexpr std::size_t kFixedBoundary = 250;
inline constexpr std::size_t kPartitionPositives = 50;
inline constexpr std::size_t kPartitionCount = 6;

/// train = the first `boundary` positives in idx order plus every other
/// record before the boundary positive; test = the rest. Subsets "train",
/// "test".
SplitPlan split_fixed(std::span<const ContractRecord> records, std::size_t boundary = kFixedBoundary);

/// P0..P(parts-1): each holds `per_part` consecutive positives plus the
/// records interleaved with them; the last part takes everything after.
/// Protocols train on P0..Pk-1 and test on Pk for k >= 2.
SplitPlan split_partitions(std::span<const ContractRecord> records,
                           std::size_t per_part = kPartitionPositives,
                           std::size_t parts = kPartitionCount);

/// Seeded shuffle into test = round(0.2 n), validation = floor(0.1 n) and
/// train = the remainder. Needs at least 10 records.
SplitPlan split_random(std::span<const ContractRecord> records, std::uint64_t seed);

/// Records whose idx is in `ids`, in idx order.
std::vector<ContractRecord> select(std::span<const ContractRecord> records,
                                   std::span<const std::int64_t> ids);

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

struct Example {
  std::int64_t idx = 0;
  tokenize::ModelInput input;
  int label = 0;
};

struct EncodeStats {
  std::size_t parse_fallbacks = 0;  // encoded without a data-flow graph
  std::size_t lex_fallbacks = 0;    // encoded as an empty contract
  std::size_t truncated = 0;
};

/// Source to model input. A source that does not parse keeps its tokens and
/// gets an empty graph; with `use_dataflow` off the node slots are dropped.
tokenize::ModelInput encode_source(std::string_view source, const tokenize::Vocabulary& vocab,
                                   const encoder::ModelConfig& config,
                                   EncodeStats* stats = nullptr);

/// Labeled examples. Throws DatasetError::Unlabeled for records without a
/// label unless `allow_unlabeled` (those get label 0).
std::vector<Example> encode_records(std::span<const ContractRecord> records,
                                    const tokenize::Vocabulary& vocab,
                                    const encoder::ModelConfig& config,
                                    EncodeStats* stats = nullptr, bool allow_unlabeled = false);

inline constexpr std::size_t kDefaultVocabCap = 50000;

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const Confusion&) const = default;
};

struct EvalReport {
  std::string split;
  double threshold = 0.5;
  Confusion counts;
  double precision = 0;
  double recall = 0;
  double f_score = 0;
  bool precision_undefined = false;  // no positive predictions
  bool recall_undefined = false;     // no positive records

  /// JSON object with the fields above.
  std::string to_json() const;
};

/// Metrics from counts; undefined ratios are reported as 0 and flagged.
EvalReport make_report(const Confusion& counts, double threshold, std::string split = {});

Confusion confusion(std::span<const double> positive_probs, std::span<const int> labels,
                    double threshold);

inline constexpr std::size_t kEvalBatch = 32;

/// Positive-class probability per example. Batches of kEvalBatch are fanned
/// out over `threads` workers (hardware concurrency when 0).
std::vector<double> score(std::span<const Example> examples, const encoder::EncoderParams& params,
                          const encoder::ModelConfig& config, std::size_t threads = 0);

EvalReport evaluate(const Checkpoint& checkpoint, std::span<const Example> examples,
                    double threshold, std::string split = {}, std::size_t threads = 0);

/// Aligned plain-text table, one row per report.
std::string report_table(std::span<const EvalReport> reports);

struct MetricSummary {
  std::size_t runs = 0;
  double precision_mean = 0, precision_stddev = 0;
  double recall_mean = 0, recall_stddev = 0;
  double f_mean = 0, f_stddev = 0;

  std::string to_json() const;
};

/// Mean and sample standard deviation (n - 1; 0 for a single run).
MetricSummary summarize_runs(std::span<const EvalReport> reports);

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;  // 1-based; 0 is the initialization
  double train_loss = 0;
  std::optional<double> validation_loss;
  std::optional<double> validation_f;
};

struct FinetuneConfig {
  std::size_t epochs = 3;
  double lr = 2e-5;
  std::uint64_t seed = 42;
  /// Keep the epoch with the best validation F-score (ties: lower loss,
  /// then earlier) instead of the last one.
  bool select_best = false;
  double threshold = 0.5;
  std::size_t threads = 0;
  /// Called after every epoch with the current weights; returning false
  /// stops training there.
  std::function<bool(const EpochLog&, const encoder::EncoderParams&)> on_epoch;
};

struct FinetuneResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::size_t selected_epoch = 0;
};

/// Cross-entropy fine-tuning, batch size 1, Adam, one seeded shuffle per
/// epoch.
FinetuneResult finetune(Checkpoint init, std::span<const Example> train,
                        const FinetuneConfig& config, std::span<const Example> validation = {});

/// Fraction of examples whose thresholded label matches.
double accuracy(std::span<const Example> examples, const encoder::EncoderParams& params,
                const encoder::ModelConfig& config, double threshold = 0.5,
                std::size_t threads = 0);

}  // namespace sourcep::trainpipe
