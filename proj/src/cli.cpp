#include "sourcep/cli.hpp"

#include "sourcep/checkpoint.hpp"
#include "sourcep/dfg.hpp"
#include "sourcep/ingest.hpp"
#include "sourcep/pretrain.hpp"
#include "sourcep/solparse.hpp"
#include "sourcep/trainpipe.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace sourcep::cli {

namespace {

using json = nlohmann::ordered_json;
namespace tp = trainpipe;

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Global {
  std::uint64_t seed = 42;
  bool pretty = false;
  bool quiet = false;
  std::size_t threads = 0;
};

struct DataFlags {
  std::string dataset;
  std::string split = "all";
  int pair = -1;  // partitions protocol; -1 = last
  std::string subset;
};

struct ModelFlags {
  encoder::ModelConfig config;
  std::vector<CLI::Option*> options;

  void add(CLI::App* app) {
    options = {
        app->add_option("--layers", config.layers, "Encoder layers")->capture_default_str(),
        app->add_option("--hidden", config.hidden, "Hidden size")->capture_default_str(),
        app->add_option("--heads", config.heads, "Attention heads")->capture_default_str(),
        app->add_option("--ffn", config.ffn, "Feed-forward size")->capture_default_str(),
        app->add_option("--code-len", config.code_len, "Code token slots")->capture_default_str(),
        app->add_option("--flow-len", config.flow_len, "Data-flow node slots")->capture_default_str(),
    };
  }
  bool given() const {
    return std::any_of(options.begin(), options.end(), [](auto* o) { return o->count() > 0; });
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path);
}

// ---------------------------------------------------------------------------
// Dataset selection shared by pretrain / train / eval

struct Selection {
  std::string name;  // e.g. "fixed/test"
  std::vector<ContractRecord> train, validation, test;
};

Selection select_split(const std::vector<ContractRecord>& records, const DataFlags& d,
                       std::uint64_t seed) {
  Selection s;
  if (d.split == "all") {
    s.name = "all";
    s.train = s.test = records;
    return s;
  }
  tp::SplitPlan plan;
  if (d.split == "fixed") plan = tp::split_fixed(records);
  else if (d.split == "partitions") plan = tp::split_partitions(records);
  else plan = tp::split_random(records, seed);
  const int n = static_cast<int>(plan.protocols.size());
  const int pick = d.pair < 0 ? n - 1 : d.pair;
  if (pick >= n) throw UsageError("--pair must be below " + std::to_string(n));
  const auto& proto = plan.protocols[static_cast<std::size_t>(pick)];
  s.train = tp::select(records, plan.ids(proto.train));
  if (!proto.validation.empty()) s.validation = tp::select(records, plan.subset(proto.validation).ids);
  const std::string test = d.subset.empty() ? proto.test : d.subset;
  s.test = tp::select(records, plan.subset(test).ids);
  s.name = d.split + "/" + test;
  return s;
}

void add_data_flags(CLI::App* app, DataFlags& d, bool subset) {
  app->add_option("--dataset", d.dataset, "JSON-lines dataset (idx, source, label)")->required();
  app->add_option("--split", d.split, "all | fixed | partitions | random")
      ->check(CLI::IsMember({"all", "fixed", "partitions", "random"}))
      ->capture_default_str();
  app->add_option("--pair", d.pair,
                  "Partitions protocol: 0 trains on P0+P1 and tests P2, ... (default: last)");
  if (subset) app->add_option("--subset", d.subset, "Evaluate this named subset instead of the test one");
}

std::vector<ContractRecord> load(const DataFlags& d, const Global& g, std::ostream& err) {
  auto records = tp::load_dataset(d.dataset);
  const auto s = tp::summarize(records);
  if (!g.quiet)
    err << "loaded " << s.records << " records: " << s.positives << " positive, " << s.negatives
        << " negative, " << s.unlabeled << " unlabeled\n";
  return records;
}

void log_stats(const tp::EncodeStats& st, const Global& g, std::ostream& err) {
  if (g.quiet) return;
  if (st.parse_fallbacks || st.lex_fallbacks)
    err << "encoded " << st.parse_fallbacks << " sources without data flow and " << st.lex_fallbacks
        << " as empty (unparsable)\n";
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

json report_json(const tp::EvalReport& r) { return json::parse(r.to_json()); }

// ---------------------------------------------------------------------------
// parse / dfg

json ast_json(const solparse::Ast& node, const solparse::TokenStream& tokens) {
  json j;
  j["kind"] = solparse::to_string(node.kind);
  if (node.token) {
    j["text"] = tokens[*node.token].text;
    return j;
  }
  j["children"] = json::array();
  for (const auto& c : node.children) j["children"].push_back(ast_json(c, tokens));
  return j;
}

void ast_text(const solparse::Ast& node, const solparse::TokenStream& tokens, int depth,
              std::ostream& out) {
  out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << solparse::to_string(node.kind);
  if (node.token) out << " " << json(tokens[*node.token].text).dump();
  out << "\n";
  for (const auto& c : node.children) ast_text(c, tokens, depth + 1, out);
}

int cmd_parse(const std::string& path, bool with_tokens, const Global& g, std::ostream& out) {
  const std::string src = read_file(path);
  solparse::TokenStream tokens;
  const auto ast = solparse::parse_source(src, &tokens);
  if (g.pretty) {
    ast_text(ast, tokens, 0, out);
    return kExitOk;
  }
  json j;
  if (with_tokens) {
    j["tokens"] = json::array();
    for (const auto& t : tokens)
      j["tokens"].push_back({{"kind", solparse::to_string(t.kind)},
                             {"text", t.text},
                             {"begin", t.span.begin},
                             {"end", t.span.end}});
  }
  j["ast"] = ast_json(ast, tokens);
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_dfg(const std::string& path, const std::string& format, const Global& g, std::ostream& out) {
  const std::string src = read_file(path);
  const auto graph = dfg::extract_dfg(src);
  if (format == "dot") {
    out << dfg::to_dot(graph);
    return kExitOk;
  }
  json j;
  j["nodes"] = json::array();
  for (const auto& v : graph.vars)
    j["nodes"].push_back({{"id", v.node_index},
                          {"label", dfg::node_label(v)},
                          {"name", v.name},
                          {"token", v.code_token_index}});
  j["edges"] = json::array();
  for (const auto& e : graph.edges) j["edges"].push_back({{"from", e.from}, {"to", e.to}});
  out << (g.pretty ? j.dump(2) : j.dump()) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainFlags {
  DataFlags data;
  ModelFlags model;
  std::size_t epochs = 1;
  double lr = 1e-4;
  bool no_mlm = false, no_edgepred = false, no_nodealign = false, no_dataflow = false;
  std::size_t vocab_cap = tp::kDefaultVocabCap;
  std::string out_path, trace_path;
};

int cmd_pretrain(PretrainFlags& f, const Global& g, std::ostream& out, std::ostream& err) {
  const auto records = load(f.data, g, err);
  const auto sel = select_split(records, f.data, g.seed);
  auto config = f.model.config;
  config.seed = g.seed;
  config.use_dataflow = !f.no_dataflow;
  config.validate();
  Checkpoint ck{config, tokenize::Vocabulary::build(sel.train, f.vocab_cap), {}};
  ck.params = encoder::init_params(config, ck.vocab.size());
  tp::EncodeStats stats;
  std::vector<tokenize::ModelInput> corpus;
  for (auto& e : tp::encode_records(sel.train, ck.vocab, config, &stats, true))
    corpus.push_back(std::move(e.input));
  log_stats(stats, g, err);

  pretrain::PretrainConfig pc;
  pc.mlm = !f.no_mlm;
  pc.edgepred = !f.no_edgepred;
  pc.nodealign = !f.no_nodealign;
  pc.lr = f.lr;
  pc.seed = g.seed;
  encoder::AdamState adam;
  json epochs = json::array();
  std::ostringstream trace;
  for (std::size_t e = 0; e < f.epochs; ++e) {
    const auto records_e = pretrain::pretrain_epoch(corpus, ck.params, adam, config, pc, e);
    double mlm = 0, edge = 0, align = 0, total = 0;
    for (const auto& r : records_e) {
      mlm += r.mlm;
      edge += r.edgepred;
      align += r.nodealign;
      total += r.total;
      trace << json{{"epoch", r.epoch}, {"sample", sel.train[r.sample].idx}, {"mlm", r.mlm},
                    {"edgepred", r.edgepred}, {"nodealign", r.nodealign}, {"total", r.total}}
                   .dump()
            << "\n";
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, records_e.size()));
    epochs.push_back({{"epoch", e + 1}, {"mlm", mlm / n}, {"edgepred", edge / n},
                      {"nodealign", align / n}, {"total", total / n}});
    if (!g.quiet) err << "pretrain epoch " << e + 1 << "/" << f.epochs << " loss " << fixed(total / n, 4) << "\n";
  }
  if (!f.out_path.empty()) ck.save(f.out_path);
  if (!f.trace_path.empty()) write_file(f.trace_path, trace.str());

  if (g.pretty) {
    out << "epoch         mlm    edgepred   nodealign       total\n";
    for (const auto& e : epochs)
      out << std::setw(5) << e["epoch"].get<std::size_t>() << std::setw(12) << fixed(e["mlm"], 4)
          << std::setw(12) << fixed(e["edgepred"], 4) << std::setw(12) << fixed(e["nodealign"], 4)
          << std::setw(12) << fixed(e["total"], 4) << "\n";
    return kExitOk;
  }
  json j;
  j["split"] = sel.name == "all" ? "all" : f.data.split + "/train";
  j["records"] = sel.train.size();
  j["vocab"] = ck.vocab.size();
  j["parameters"] = ck.params.parameter_count();
  j["tasks"] = {{"mlm", pc.mlm}, {"edgepred", pc.edgepred}, {"nodealign", pc.nodealign}};
  j["epochs"] = epochs;
  if (!f.out_path.empty()) j["checkpoint"] = f.out_path;
  out << j.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  DataFlags data;
  ModelFlags model;
  std::string init, out_path;
  std::size_t epochs = 3;
  double lr = 2e-5;
  bool no_dataflow = false;
  bool last_epoch = false;
  std::size_t vocab_cap = tp::kDefaultVocabCap;
  std::vector<std::uint64_t> seeds;
  std::vector<double> thresholds{0.5};
};

Checkpoint initial(const TrainFlags& f, const std::vector<ContractRecord>& train, std::uint64_t seed) {
  if (!f.init.empty()) {
    auto ck = Checkpoint::load(f.init);
    if (f.no_dataflow) ck.config.use_dataflow = false;
    return ck;
  }
  auto config = f.model.config;
  config.seed = seed;
  config.use_dataflow = !f.no_dataflow;
  config.validate();
  Checkpoint ck{config, tokenize::Vocabulary::build(train, f.vocab_cap), {}};
  ck.params = encoder::init_params(config, ck.vocab.size());
  return ck;
}

json log_json(const std::vector<tp::EpochLog>& log) {
  json a = json::array();
  for (const auto& l : log) {
    json e{{"epoch", l.epoch}, {"train_loss", l.train_loss}};
    if (l.validation_loss) e["validation_loss"] = *l.validation_loss;
    if (l.validation_f) e["validation_f"] = *l.validation_f;
    a.push_back(e);
  }
  return a;
}

tp::FinetuneResult train_once(const TrainFlags& f, const Selection& sel, std::uint64_t seed,
                              const Global& g, std::ostream& err) {
  auto ck = initial(f, sel.train, seed);
  tp::EncodeStats stats;
  const auto train = tp::encode_records(sel.train, ck.vocab, ck.config, &stats);
  const auto validation = tp::encode_records(sel.validation, ck.vocab, ck.config, &stats);
  log_stats(stats, g, err);
  tp::FinetuneConfig fc;
  fc.epochs = f.epochs;
  fc.lr = f.lr;
  fc.seed = seed;
  fc.select_best = !validation.empty() && !f.last_epoch;
  fc.threshold = f.thresholds.front();
  fc.threads = g.threads;
  auto result = tp::finetune(std::move(ck), train, fc, validation);
  if (!g.quiet)
    for (const auto& l : result.log)
      if (l.epoch > 0) err << "epoch " << l.epoch << "/" << f.epochs << " loss " << fixed(l.train_loss, 4) << "\n";
  return result;
}

int cmd_train(TrainFlags& f, const Global& g, std::ostream& out, std::ostream& err) {
  if (!f.init.empty() && f.model.given())
    throw UsageError("model shape comes from --init; drop the shape flags");
  const auto records = load(f.data, g, err);

  if (!f.seeds.empty()) {
    // one random split, model and run per seed; reports and a mean/stddev row
    if (f.data.split != "random") throw UsageError("--seeds needs --split random");
    json runs = json::array();
    std::vector<std::vector<tp::EvalReport>> by_threshold(f.thresholds.size());
    std::vector<tp::EvalReport> flat;
    for (auto seed : f.seeds) {
      const auto sel = select_split(records, f.data, seed);
      const auto result = train_once(f, sel, seed, g, err);
      const auto test = tp::encode_records(sel.test, result.checkpoint.vocab, result.checkpoint.config);
      const auto probs = tp::score(test, result.checkpoint.params, result.checkpoint.config, g.threads);
      std::vector<int> labels;
      for (const auto& e : test) labels.push_back(e.label);
      json reports = json::array();
      for (std::size_t t = 0; t < f.thresholds.size(); ++t) {
        auto r = tp::make_report(tp::confusion(probs, labels, f.thresholds[t]), f.thresholds[t],
                                 sel.name + "@seed" + std::to_string(seed));
        reports.push_back(report_json(r));
        by_threshold[t].push_back(r);
        flat.push_back(r);
      }
      if (!f.out_path.empty()) result.checkpoint.save(f.out_path + ".seed" + std::to_string(seed));
      runs.push_back({{"seed", seed}, {"train", sel.train.size()}, {"validation", sel.validation.size()},
                      {"test", sel.test.size()}, {"selected_epoch", result.selected_epoch},
                      {"reports", reports}});
    }
    json summary = json::array();
    for (std::size_t t = 0; t < f.thresholds.size(); ++t) {
      auto s = json::parse(tp::summarize_runs(by_threshold[t]).to_json());
      s["threshold"] = f.thresholds[t];
      summary.push_back(s);
    }
    if (g.pretty) {
      out << tp::report_table(flat);
      for (const auto& s : summary)
        out << "mean over " << s["runs"].get<std::size_t>() << " runs @" << fixed(s["threshold"], 3)
            << ": precision " << fixed(s["precision_mean"], 3) << " +- " << fixed(s["precision_stddev"], 3)
            << ", recall " << fixed(s["recall_mean"], 3) << " +- " << fixed(s["recall_stddev"], 3)
            << ", f " << fixed(s["f_mean"], 3) << " +- " << fixed(s["f_stddev"], 3) << "\n";
      return kExitOk;
    }
    out << json{{"split", "random"}, {"runs", runs}, {"summary", summary}}.dump() << "\n";
    return kExitOk;
  }

  const auto sel = select_split(records, f.data, g.seed);
  const auto result = train_once(f, sel, g.seed, g, err);
  if (!f.out_path.empty()) result.checkpoint.save(f.out_path);
  if (g.pretty) {
    out << "epoch  train_loss  validation_f\n";
    for (const auto& l : result.log)
      out << std::setw(5) << l.epoch << std::setw(12) << fixed(l.train_loss, 4) << std::setw(14)
          << (l.validation_f ? fixed(*l.validation_f, 3) : "-") << "\n";
    out << "selected epoch " << result.selected_epoch << "\n";
    return kExitOk;
  }
  json j;
  j["split"] = f.data.split;
  j["train"] = sel.train.size();
  j["validation"] = sel.validation.size();
  j["test"] = f.data.split == "all" ? 0 : sel.test.size();
  j["use_dataflow"] = result.checkpoint.config.use_dataflow;
  j["epochs"] = log_json(result.log);
  j["selected_epoch"] = result.selected_epoch;
  if (!f.out_path.empty()) j["checkpoint"] = f.out_path;
  out << j.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval / predict

struct EvalFlags {
  DataFlags data;
  std::string checkpoint;
  std::vector<double> thresholds{0.5};
  bool scores = false;
};

int cmd_eval(EvalFlags& f, const Global& g, std::ostream& out, std::ostream& err) {
  const auto ck = Checkpoint::load(f.checkpoint);
  const auto records = load(f.data, g, err);
  const auto sel = select_split(records, f.data, g.seed);
  tp::EncodeStats stats;
  const auto test = tp::encode_records(sel.test, ck.vocab, ck.config, &stats);
  log_stats(stats, g, err);
  if (test.empty()) throw Error("evaluation subset is empty");
  const auto probs = tp::score(test, ck.params, ck.config, g.threads);
  std::vector<int> labels;
  for (const auto& e : test) labels.push_back(e.label);
  std::vector<tp::EvalReport> reports;
  for (double t : f.thresholds)
    reports.push_back(tp::make_report(tp::confusion(probs, labels, t), t, sel.name));
  const std::size_t n_train = f.data.split == "all" ? 0 : sel.train.size();
  if (g.pretty) {
    out << "split " << sel.name << ": train " << n_train << ", test " << sel.test.size() << "\n";
    out << tp::report_table(reports);
    return kExitOk;
  }
  json j;
  j["split"] = f.data.split;
  j["subset"] = sel.name;
  j["train"] = n_train;
  j["validation"] = sel.validation.size();
  j["test"] = sel.test.size();
  j["reports"] = json::array();
  for (const auto& r : reports) j["reports"].push_back(report_json(r));
  if (f.scores) {
    j["scores"] = json::array();
    for (std::size_t i = 0; i < test.size(); ++i)
      j["scores"].push_back({{"idx", test[i].idx}, {"probability", probs[i]}});
  }
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_predict(const std::string& source, const std::string& checkpoint, double threshold,
                const Global& g, std::ostream& out) {
  const auto ck = Checkpoint::load(checkpoint);
  const auto input = tp::encode_source(read_file(source), ck.vocab, ck.config);
  const auto p = encoder::forward(input, ck.params, ck.config, threshold);
  if (g.pretty) {
    out << "label " << p.label << "  probability " << fixed(p.positive(), 4) << "  threshold "
        << fixed(threshold, 3) << "\n";
    return kExitOk;
  }
  out << json{{"label", p.label}, {"probability", p.positive()}, {"threshold", threshold}}.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fetch

struct FetchFlags {
  std::vector<std::string> addresses;
  std::string base_url, append, cache;
  std::int64_t idx = -1;
  std::int64_t delay_ms = -1;
};

int cmd_fetch(FetchFlags& f, const Global& g, std::ostream& out, std::ostream& err) {
  auto config = ingest::ApiConfig::from_env();
  if (!f.base_url.empty()) config.base_url = f.base_url;
  if (f.delay_ms >= 0) config.delay = std::chrono::milliseconds(std::max<std::int64_t>(f.delay_ms, 0));
  if (!f.cache.empty()) config.cache_dir = f.cache;
  std::int64_t idx = f.idx;
  if (idx < 0) {
    idx = 0;
    if (!f.append.empty() && std::filesystem::exists(f.append) &&
        std::filesystem::file_size(f.append) > 0)
      for (const auto& r : tp::load_dataset(f.append)) idx = std::max(idx, r.idx + 1);
  }
  ingest::SourceClient client(config);
  std::string lines;
  for (const auto& a : f.addresses) {
    if (!g.quiet) err << "fetching " << a << "\n";
    const auto record = client.fetch(a, idx++);
    lines += tp::to_json_line(record) + "\n";
  }
  if (!f.append.empty()) {
    std::ofstream file(f.append, std::ios::binary | std::ios::app);
    file << lines;
    if (!file) throw Error("cannot write " + f.append);
  }
  out << lines;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ponzi-scheme detection for Solidity contracts from source code and data flow",
               "sourcep"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file of option defaults; command-line flags win");
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_flag("--pretty", g.pretty, "Plain-text tables instead of JSON");
  app.add_flag("--quiet", g.quiet, "No progress messages on stderr");
  app.add_option("--threads", g.threads, "Evaluation threads (0 = all cores)");

  std::string parse_source_path;
  bool parse_tokens = false;
  auto* parse = app.add_subcommand("parse", "Print the syntax tree of a Solidity file");
  parse->add_option("--source", parse_source_path, "Solidity file")->required();
  parse->add_flag("--tokens", parse_tokens, "Include the token stream");

  std::string dfg_source, dfg_format = "json";
  auto* dfgc = app.add_subcommand("dfg", "Print the data-flow graph of a Solidity file");
  dfgc->add_option("--source", dfg_source, "Solidity file")->required();
  dfgc->add_option("--format", dfg_format, "json | dot")
      ->check(CLI::IsMember({"json", "dot"}))
      ->capture_default_str();

  PretrainFlags pf;
  auto* pre = app.add_subcommand("pretrain", "Pre-train an encoder on the training contracts");
  add_data_flags(pre, pf.data, false);
  pf.model.add(pre);
  pre->add_option("--epochs", pf.epochs, "Passes over the corpus")->capture_default_str();
  pre->add_option("--lr", pf.lr, "Adam learning rate")->capture_default_str();
  pre->add_flag("--no-mlm", pf.no_mlm, "Disable masked language modelling");
  pre->add_flag("--no-edgepred", pf.no_edgepred, "Disable data-flow edge prediction");
  pre->add_flag("--no-nodealign", pf.no_nodealign, "Disable node alignment");
  pre->add_flag("--no-dataflow", pf.no_dataflow, "Drop data-flow nodes from the input");
  pre->add_option("--vocab-cap", pf.vocab_cap, "Vocabulary size limit")->capture_default_str();
  pre->add_option("--out", pf.out_path, "Checkpoint to write");
  pre->add_option("--trace", pf.trace_path, "Per-sample loss trace (JSON lines)");

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Fine-tune a classifier on a split's training part");
  add_data_flags(train, tf.data, false);
  tf.model.add(train);
  train->add_option("--init", tf.init, "Start from this (pre-trained) checkpoint");
  train->add_option("--epochs", tf.epochs, "Fine-tuning epochs")->capture_default_str();
  train->add_option("--lr", tf.lr, "Adam learning rate")->capture_default_str();
  train->add_flag("--no-dataflow", tf.no_dataflow, "Drop data-flow nodes from the input");
  train->add_flag("--last-epoch", tf.last_epoch, "Keep the last epoch even with a validation set");
  train->add_option("--vocab-cap", tf.vocab_cap, "Vocabulary size limit")->capture_default_str();
  train->add_option("--seeds", tf.seeds, "Repeat on one random split per seed and summarize")
      ->delimiter(',');
  train->add_option("--threshold", tf.thresholds, "Decision threshold(s)")->delimiter(',');
  train->add_option("--out", tf.out_path, "Checkpoint to write");

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Precision, recall and F-score on a split's test part");
  add_data_flags(eval, ef.data, true);
  eval->add_option("--checkpoint", ef.checkpoint, "Trained checkpoint")->required();
  eval->add_option("--threshold", ef.thresholds, "Decision threshold(s)")->delimiter(',');
  eval->add_flag("--scores", ef.scores, "Include per-contract probabilities");

  std::string pred_source, pred_ckpt;
  double pred_threshold = 0.5;
  auto* predict = app.add_subcommand("predict", "Classify one Solidity file");
  predict->add_option("--source", pred_source, "Solidity file")->required();
  predict->add_option("--checkpoint", pred_ckpt, "Trained checkpoint")->required();
  predict->add_option("--threshold", pred_threshold, "Decision threshold")->capture_default_str();

  FetchFlags ff;
  auto* fetch = app.add_subcommand(
      "fetch", std::string("Download verified source; the API key is read from ") + ingest::kApiKeyEnv);
  fetch->add_option("address", ff.addresses, "Contract address(es), 0x + 40 hex digits")->required();
  fetch->add_option("--idx", ff.idx, "idx of the first record (default: next free in --append)");
  fetch->add_option("--append", ff.append, "Append records to this dataset file");
  fetch->add_option("--cache", ff.cache, "Directory caching fetched sources");
  fetch->add_option("--base-url", ff.base_url, "API base URL");
  fetch->add_option("--delay-ms", ff.delay_ms, "Minimum spacing between requests");

  if (argc <= 1) {
    err << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*parse) return cmd_parse(parse_source_path, parse_tokens, g, out);
    if (*dfgc) return cmd_dfg(dfg_source, dfg_format, g, out);
    if (*pre) return cmd_pretrain(pf, g, out, err);
    if (*train) return cmd_train(tf, g, out, err);
    if (*eval) return cmd_eval(ef, g, out, err);
    if (*predict) return cmd_predict(pred_source, pred_ckpt, pred_threshold, g, out);
    if (*fetch) return cmd_fetch(ff, g, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"sourcep"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sourcep::cli
