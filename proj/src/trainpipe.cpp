#include "sourcep/trainpipe.hpp"

#include "sourcep/dfg.hpp"
#include "sourcep/solparse.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace sourcep::trainpipe {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset

std::vector<ContractRecord> parse_dataset(std::string_view text) {
  std::vector<ContractRecord> out;
  std::set<std::int64_t> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    auto bad = [&](const std::string& why) {
      return DatasetError(DatasetError::Kind::MalformedRecord,
                          "line " + std::to_string(line_no) + ": " + why, line_no);
    };
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw bad("not a JSON object");
    if (!j.contains("idx") || !j["idx"].is_number_integer()) throw bad("idx must be an integer");
    if (!j.contains("source") || !j["source"].is_string()) throw bad("source must be a string");
    ContractRecord r;
    r.idx = j["idx"].get<std::int64_t>();
    r.source = j["source"].get<std::string>();
    if (j.contains("label") && !j["label"].is_null()) {
      const auto& l = j["label"];
      if (!l.is_number_integer() || (l.get<std::int64_t>() != 0 && l.get<std::int64_t>() != 1))
        throw bad("label must be 0 or 1");
      r.label = l.get<int>();
    }
    if (!seen.insert(r.idx).second)
      throw DatasetError(DatasetError::Kind::DuplicateIdx,
                         "line " + std::to_string(line_no) + ": duplicate idx " +
                             std::to_string(r.idx),
                         line_no);
    out.push_back(std::move(r));
    if (end == text.size()) break;
  }
  if (out.empty()) throw DatasetError(DatasetError::Kind::EmptyDataset, "dataset has no records");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.idx < b.idx; });
  return out;
}

std::vector<ContractRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetError::Kind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string to_json_line(const ContractRecord& record) {
  json j;
  j["idx"] = record.idx;
  j["source"] = record.source;
  if (record.label) j["label"] = *record.label;
  return j.dump();
}

DatasetSummary summarize(std::span<const ContractRecord> records) {
  DatasetSummary s;
  s.records = records.size();
  for (const auto& r : records) {
    if (!r.label) ++s.unlabeled;
    else if (*r.label == 1) ++s.positives;
    else ++s.negatives;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Splits

std::string_view to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::Fixed: return "fixed";
    case SplitKind::Partitions: return "partitions";
    case SplitKind::Random: return "random";
  }
  return "?";
}

const Subset& SplitPlan::subset(std::string_view name) const {
  for (const auto& s : subsets)
    if (s.name == name) return s;
  throw SplitError(SplitError::Kind::UnknownSubset, "no subset named " + std::string(name));
}

std::vector<std::int64_t> SplitPlan::ids(std::span<const std::string> names) const {
  std::vector<std::int64_t> out;
  for (const auto& n : names) {
    const auto& s = subset(n);
    out.insert(out.end(), s.ids.begin(), s.ids.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<const ContractRecord*> by_idx(std::span<const ContractRecord> records) {
  std::vector<const ContractRecord*> out;
  for (const auto& r : records) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->idx < b->idx; });
  return out;
}

bool positive(const ContractRecord& r) { return r.label && *r.label == 1; }

// idx of the k-th positive (1-based) in idx order, or nullopt.
std::optional<std::int64_t> kth_positive(const std::vector<const ContractRecord*>& sorted,
                                         std::size_t k) {
  std::size_t seen = 0;
  for (auto* r : sorted)
    if (positive(*r) && ++seen == k) return r->idx;
  return std::nullopt;
}

void require_positives(const std::vector<const ContractRecord*>& sorted, std::size_t needed) {
  const auto have = static_cast<std::size_t>(
      std::count_if(sorted.begin(), sorted.end(), [](auto* r) { return positive(*r); }));
  if (have < needed)
    throw SplitError(SplitError::Kind::TooFewPositives,
                     "need at least " + std::to_string(needed) + " positive records, have " +
                         std::to_string(have));
}

}  // namespace

SplitPlan split_fixed(std::span<const ContractRecord> records, std::size_t boundary) {
  const auto sorted = by_idx(records);
  require_positives(sorted, boundary + 1);
  const std::int64_t cut = *kth_positive(sorted, boundary);
  SplitPlan plan;
  plan.kind = SplitKind::Fixed;
  Subset train{"train", {}}, test{"test", {}};
  for (auto* r : sorted) (r->idx <= cut ? train : test).ids.push_back(r->idx);
  plan.subsets = {std::move(train), std::move(test)};
  plan.protocols = {{{"train"}, "test", ""}};
  return plan;
}

SplitPlan split_partitions(std::span<const ContractRecord> records, std::size_t per_part,
                           std::size_t parts) {
  const auto sorted = by_idx(records);
  require_positives(sorted, per_part * (parts - 1) + 1);
  std::vector<std::int64_t> cuts;  // last idx of parts 0..parts-2
  for (std::size_t k = 1; k < parts; ++k) cuts.push_back(*kth_positive(sorted, per_part * k));
  SplitPlan plan;
  plan.kind = SplitKind::Partitions;
  for (std::size_t k = 0; k < parts; ++k) plan.subsets.push_back({"P" + std::to_string(k), {}});
  for (auto* r : sorted) {
    const auto part = static_cast<std::size_t>(
        std::lower_bound(cuts.begin(), cuts.end(), r->idx) - cuts.begin());
    plan.subsets[part].ids.push_back(r->idx);
  }
  for (std::size_t k = 2; k < parts; ++k) {
    Protocol p;
    for (std::size_t j = 0; j < k; ++j) p.train.push_back("P" + std::to_string(j));
    p.test = "P" + std::to_string(k);
    plan.protocols.push_back(std::move(p));
  }
  return plan;
}

SplitPlan split_random(std::span<const ContractRecord> records, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 10)
    throw SplitError(SplitError::Kind::TooFewRecords,
                     "random split needs at least 10 records, have " + std::to_string(n));
  std::vector<std::int64_t> ids;
  for (auto* r : by_idx(records)) ids.push_back(r->idx);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n)));
  const std::size_t n_val = n / 10;
  SplitPlan plan;
  plan.kind = SplitKind::Random;
  Subset test{"test", {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test)}};
  Subset val{"validation", {ids.begin() + static_cast<std::ptrdiff_t>(n_test),
                            ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val)}};
  Subset train{"train", {ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), ids.end()}};
  for (auto* s : {&train, &val, &test}) std::sort(s->ids.begin(), s->ids.end());
  plan.subsets = {std::move(train), std::move(val), std::move(test)};
  plan.protocols = {{{"train"}, "test", "validation"}};
  return plan;
}

std::vector<ContractRecord> select(std::span<const ContractRecord> records,
                                   std::span<const std::int64_t> ids) {
  const std::set<std::int64_t> wanted(ids.begin(), ids.end());
  std::vector<ContractRecord> out;
  for (auto* r : by_idx(records))
    if (wanted.contains(r->idx)) out.push_back(*r);
  return out;
}

// ---------------------------------------------------------------------------
// Encoding

tokenize::ModelInput encode_source(std::string_view source, const tokenize::Vocabulary& vocab,
                                   const encoder::ModelConfig& config, EncodeStats* stats) {
  solparse::TokenStream tokens;
  dfg::DataFlowGraph graph;
  try {
    tokens = solparse::lex(source);
  } catch (const solparse::LexError&) {
    if (stats) ++stats->lex_fallbacks;
  }
  try {
    if (!tokens.empty()) graph = dfg::extract_dfg(solparse::parse(tokens), tokens);
  } catch (const solparse::ParseError&) {
    if (stats) ++stats->parse_fallbacks;
  }
  auto input = tokenize::encode_input(tokens, graph, vocab, config.layout());
  if (stats && input.truncated) ++stats->truncated;
  if (!config.use_dataflow) input = tokenize::without_dataflow(input);
  return input;
}

std::vector<Example> encode_records(std::span<const ContractRecord> records,
                                    const tokenize::Vocabulary& vocab,
                                    const encoder::ModelConfig& config, EncodeStats* stats,
                                    bool allow_unlabeled) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.label && !allow_unlabeled)
      throw DatasetError(DatasetError::Kind::Unlabeled,
                         "record " + std::to_string(r.idx) + " has no label");
    out.push_back({r.idx, encode_source(r.source, vocab, config, stats), r.label.value_or(0)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport make_report(const Confusion& c, double threshold, std::string split) {
  EvalReport r;
  r.split = std::move(split);
  r.threshold = threshold;
  r.counts = c;
  r.precision_undefined = c.tp + c.fp == 0;
  r.recall_undefined = c.tp + c.fn == 0;
  if (!r.precision_undefined)
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (!r.recall_undefined) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0)
    r.f_score = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

Confusion confusion(std::span<const double> positive_probs, std::span<const int> labels,
                    double threshold) {
  if (positive_probs.size() != labels.size())
    throw Error("confusion: " + std::to_string(positive_probs.size()) + " scores for " +
                std::to_string(labels.size()) + " labels");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = positive_probs[i] >= threshold;
    if (labels[i] == 1) (predicted ? c.tp : c.fn)++;
    else (predicted ? c.fp : c.tn)++;
  }
  return c;
}

std::vector<double> score(std::span<const Example> examples, const encoder::EncoderParams& params,
                          const encoder::ModelConfig& config, std::size_t threads) {
  std::vector<double> out(examples.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t begin = 0; begin < examples.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(examples.size(), begin + kEvalBatch);
    std::atomic<std::size_t> next{begin};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < end;)
        out[i] = encoder::forward(examples[i].input, params, config).positive();
    };
    const std::size_t n_workers = std::min(threads, end - begin);
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(work);
    work();
  }
  return out;
}

EvalReport evaluate(const Checkpoint& checkpoint, std::span<const Example> examples,
                    double threshold, std::string split, std::size_t threads) {
  if (examples.empty()) throw Error("evaluate: empty subset");
  const auto probs = score(examples, checkpoint.params, checkpoint.config, threads);
  std::vector<int> labels;
  for (const auto& e : examples) labels.push_back(e.label);
  return make_report(confusion(probs, labels, threshold), threshold, std::move(split));
}

std::string EvalReport::to_json() const {
  json j;
  j["split"] = split;
  j["threshold"] = threshold;
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["fn"] = counts.fn;
  j["tn"] = counts.tn;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f_score"] = f_score;
  j["precision_undefined"] = precision_undefined;
  j["recall_undefined"] = recall_undefined;
  return j.dump();
}

std::string report_table(std::span<const EvalReport> reports) {
  const std::vector<std::string> head{"split", "threshold", "TP", "FP", "FN", "TN",
                                      "precision", "recall", "f_score"};
  std::vector<std::vector<std::string>> rows{head};
  auto fixed = [](double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
  };
  for (const auto& r : reports) {
    rows.push_back({r.split.empty() ? "-" : r.split, fixed(r.threshold, 3),
                    std::to_string(r.counts.tp), std::to_string(r.counts.fp),
                    std::to_string(r.counts.fn), std::to_string(r.counts.tn),
                    fixed(r.precision, 3) + (r.precision_undefined ? "*" : ""),
                    fixed(r.recall, 3) + (r.recall_undefined ? "*" : ""), fixed(r.f_score, 3)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      // first column left-aligned, numbers right-aligned
      if (c == 0) out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      else out << std::right << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << "\n";
  }
  return out.str();
}

std::string MetricSummary::to_json() const {
  json j;
  j["runs"] = runs;
  j["precision_mean"] = precision_mean;
  j["precision_stddev"] = precision_stddev;
  j["recall_mean"] = recall_mean;
  j["recall_stddev"] = recall_stddev;
  j["f_mean"] = f_mean;
  j["f_stddev"] = f_stddev;
  return j.dump();
}

MetricSummary summarize_runs(std::span<const EvalReport> reports) {
  MetricSummary s;
  s.runs = reports.size();
  if (reports.empty()) return s;
  auto stats = [&](auto field, double& mean, double& sd) {
    double sum = 0;
    for (const auto& r : reports) sum += field(r);
    mean = sum / static_cast<double>(reports.size());
    if (reports.size() < 2) return;
    double sq = 0;
    for (const auto& r : reports) sq += (field(r) - mean) * (field(r) - mean);
    sd = std::sqrt(sq / static_cast<double>(reports.size() - 1));
  };
  stats([](const EvalReport& r) { return r.precision; }, s.precision_mean, s.precision_stddev);
  stats([](const EvalReport& r) { return r.recall; }, s.recall_mean, s.recall_stddev);
  stats([](const EvalReport& r) { return r.f_score; }, s.f_mean, s.f_stddev);
  return s;
}

// ---------------------------------------------------------------------------
// Fine-tuning

namespace {

encoder::Sample class_sample(const Example& e) {
  return {e.input, tokenize::build_mask(e.input), encoder::ClassTarget{e.label}};
}

double mean_loss(std::span<const Example> examples, const encoder::EncoderParams& params,
                 const encoder::ModelConfig& config) {
  double sum = 0;
  for (const auto& e : examples) sum += encoder::loss_only(class_sample(e), params, config);
  return sum / static_cast<double>(examples.size());
}

}  // namespace

FinetuneResult finetune(Checkpoint init, std::span<const Example> train,
                        const FinetuneConfig& config, std::span<const Example> validation) {
  FinetuneResult result;
  result.checkpoint = std::move(init);
  auto& params = result.checkpoint.params;
  const auto& model = result.checkpoint.config;
  model.validate();

  const bool track = config.select_best && !validation.empty();
  std::vector<int> val_labels;
  for (const auto& e : validation) val_labels.push_back(e.label);
  encoder::EncoderParams best;
  double best_f = -1, best_loss = 0;
  auto assess = [&](EpochLog& log) {
    if (validation.empty()) return;
    log.validation_loss = mean_loss(validation, params, model);
    const auto probs = score(validation, params, model, config.threads);
    log.validation_f = make_report(confusion(probs, val_labels, config.threshold), config.threshold).f_score;
    if (!track) return;
    if (*log.validation_f > best_f || (*log.validation_f == best_f && *log.validation_loss < best_loss)) {
      best_f = *log.validation_f;
      best_loss = *log.validation_loss;
      best = params;
      result.selected_epoch = log.epoch;
    }
  };

  EpochLog start{0, train.empty() ? 0.0 : mean_loss(train, params, model), {}, {}};
  assess(start);
  result.log.push_back(start);

  encoder::AdamState adam;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= config.epochs && !train.empty(); ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0;
    for (std::size_t i : order) {
      const auto lg = encoder::loss_and_grads({class_sample(train[i])}, params, model);
      sum += lg.loss;
      encoder::adam_step(params, lg.grads, adam, config.lr);
    }
    EpochLog log{epoch, sum / static_cast<double>(train.size()), {}, {}};
    assess(log);
    result.log.push_back(log);
    if (config.on_epoch && !config.on_epoch(log, params)) break;
  }
  if (track) params = std::move(best);
  else result.selected_epoch = result.log.back().epoch;
  return result;
}

double accuracy(std::span<const Example> examples, const encoder::EncoderParams& params,
                const encoder::ModelConfig& config, double threshold, std::size_t threads) {
  if (examples.empty()) return 0;
  const auto probs = score(examples, params, config, threads);
  std::size_t right = 0;
  for (std::size_t i = 0; i < examples.size(); ++i)
    right += (probs[i] >= threshold ? 1 : 0) == examples[i].label;
  return static_cast<double>(right) / static_cast<double>(examples.size());
}

}  // namespace sourcep::trainpipe
