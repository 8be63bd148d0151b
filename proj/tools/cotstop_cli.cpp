// cotstop: offline and live early-stopping pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cotstop/controller.hpp"
#include "cotstop/features.hpp"
#include "cotstop/gateway.hpp"
#include "cotstop/gateway_http.hpp"
#include "cotstop/metrics.hpp"
#include "cotstop/rl.hpp"
#include "cotstop/rng.hpp"
#include "cotstop/sft.hpp"
#include "cotstop/stop_model.hpp"
#include "cotstop/synth.hpp"
#include "cotstop/trace.hpp"

using namespace cotstop;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

/// Unreadable or unwritable files.
class FileError : public Error {
 public:
  using Error::Error;
};

std::vector<TraceRecord> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read trace corpus \"" + path + "\"");
  return parse_trace_file(in);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read \"" + path + "\"");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::binary | std::ios::trunc) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, mode);
  if (!out) throw FileError("cannot write \"" + path + "\"");
  return out;
}

std::string pct(std::optional<double> v) {
  if (!v) return "n/a";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1) << 100.0 * *v << '%';
  return ss.str();
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

struct PolicyArgs {
  double tau = 0.9;
  int patience = 3;
  int stride = 20;
  int budget = 0;
  int window = 1;
  std::string mode = "lite";

  void add(CLI::App* cmd, bool with_tau = true) {
    if (with_tau) cmd->add_option("--tau", tau, "Stop threshold on ρ")->capture_default_str();
    cmd->add_option("--patience", patience, "Consecutive evaluations with ρ ≥ τ")->capture_default_str();
    cmd->add_option("--stride", stride, "Evaluation stride in tokens (lite mode)")->capture_default_str();
    cmd->add_option("--budget", budget, "Token budget, 0 = none")->capture_default_str();
    cmd->add_option("--window", window, "Steps evaluated per proposal (proposal mode)")->capture_default_str();
    cmd->add_option("--mode", mode, "lite or proposal")->check(CLI::IsMember({"lite", "scan", "proposal"}))->capture_default_str();
  }

  StopPolicy policy() const {
    StopPolicy p;
    p.threshold = tau;
    p.patience = patience;
    p.stride = stride;
    p.proposal_window = window;
    if (budget > 0) p.budget = budget;
    p.validate();
    return p;
  }
  StopMode stop_mode() const { return stop_mode_from_string(mode); }
};

/// Deterministic trace-level split: a trace is held out when its hashed id
/// falls below `fraction`.
bool held_out(const std::string& trace_id, double fraction, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : trace_id) h = (h ^ c) * 1099511628211ULL;
  return static_cast<double>(rng::hash(seed, 0x5eed, h) >> 11) * 0x1.0p-53 < fraction;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  FixtureSpec spec;
  std::string proposals = "none";
  int group_size = 0;
};

int cmd_synth(const SynthArgs& a) {
  FixtureSpec spec = a.spec;
  spec.seed = a.seed;
  spec.proposals = proposal_rule_from_string(a.proposals);
  auto corpus = generate_corpus(spec);
  if (a.group_size > 0)
    for (std::size_t i = 0; i < corpus.size(); ++i)
      corpus[i].trace_id = spec.id_prefix + "-g" + std::to_string(i / static_cast<std::size_t>(a.group_size)) + "#" +
                           std::to_string(i % static_cast<std::size_t>(a.group_size));
  auto out = open_out(a.out);
  write_traces(out, corpus);
  std::size_t probes = 0, tokens = 0;
  for (const auto& tr : corpus) {
    probes += tr.probes.size();
    tokens += static_cast<std::size_t>(tr.cot_length);
  }
  std::cout << "synth: " << corpus.size() << " traces, " << tokens << " tokens, " << probes << " probes -> " << a.out
            << '\n';
  return kOk;
}

struct BuildArgs {
  std::string traces, out;
};

int cmd_build_dataset(const BuildArgs& a) {
  const auto corpus = read_corpus(a.traces);
  if (corpus.empty()) std::cerr << "warning: corpus \"" << a.traces << "\" has no traces; writing header only\n";
  const auto rows = label_corpus(corpus);
  auto out = open_out(a.out);
  write_dataset_csv(out, rows);
  std::size_t pos = 0;
  for (const auto& r : rows) pos += r.label == 1 ? 1 : 0;
  std::cout << "build-dataset: " << corpus.size() << " traces, " << rows.size() << " rows (" << pos << " positive, "
            << rows.size() - pos << " negative";
  if (!rows.empty()) std::cout << ", " << pct(static_cast<double>(pos) / static_cast<double>(rows.size())) << " positive";
  std::cout << ") -> " << a.out << '\n';
  return kOk;
}

struct TrainArgs {
  std::string data, traces, out;
  std::uint64_t seed = 0;
  double holdout = 0.0;
  TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
  DatasetTable table;
  std::string source;
  if (!a.data.empty()) {
    std::ifstream in(a.data, std::ios::binary);
    if (!in) throw FileError("cannot read dataset \"" + a.data + "\"");
    table = read_dataset_csv(in);
    source = a.data;
  } else {
    table.feature_names = feature_names();
    table.rows = label_corpus(read_corpus(a.traces));
    source = a.traces;
  }
  if (table.rows.empty()) throw ValidationError("dataset", "no rows to train on");
  if (!(a.holdout >= 0 && a.holdout < 1)) throw ValidationError("holdout", "must lie in [0,1)");

  std::vector<LabeledStep> train_rows, test_rows;
  for (auto& r : table.rows) (a.holdout > 0 && held_out(r.trace_id, a.holdout, a.seed) ? test_rows : train_rows).push_back(r);
  if (train_rows.empty()) throw ValidationError("holdout", "every row was held out");

  TrainConfig cfg = a.cfg;
  cfg.seed = a.seed;
  cfg.corpus_id = std::filesystem::path(source).filename().string();
  TrainLog log;
  const auto model = train(train_rows, table.feature_names, cfg, &log);
  auto out = open_out(a.out);
  out << model.save();

  std::cout << "train: " << train_rows.size() << " rows, " << model.trees.size() << " trees, final log-loss "
            << (log.loss_per_round.empty() ? std::string("n/a") : fixed(log.loss_per_round.back(), 4)) << " -> " << a.out
            << '\n';
  if (!test_rows.empty()) {
    std::vector<double> scores, delta;
    std::vector<int> labels;
    const auto names = table.feature_names;
    const auto delta_col = std::find(names.begin(), names.end(), "delta") - names.begin();
    for (const auto& r : test_rows) {
      scores.push_back(model.predict(r.features));
      labels.push_back(r.label);
      if (static_cast<std::size_t>(delta_col) < names.size()) delta.push_back(r.features.values[static_cast<std::size_t>(delta_col)]);
    }
    std::cout << "  held-out: " << test_rows.size() << " rows, AUROC " << fixed(auroc(scores, labels), 4);
    if (delta.size() == labels.size()) std::cout << " (delta alone " << fixed(auroc(delta, labels), 4) << ")";
    std::cout << '\n';
  }
  return kOk;
}

std::unique_ptr<StopModel> load_model(const std::string& path) {
  return std::make_unique<StopModel>(StopModel::load(read_file(path)));
}

struct PredictArgs {
  std::string traces, model, out, report;
  PolicyArgs policy;
  bool oracle = false;
  unsigned threads = 0;
};

void print_report(const EvalReport& r) {
  std::cout << "  traces " << r.n << ", coverage " << pct(r.coverage) << ", accuracy " << pct(r.accuracy)
            << " (full " << pct(r.full_accuracy) << "), mean length " << fixed(r.mean_length, 1) << " of "
            << fixed(r.mean_full_length, 1) << " (x" << fixed(r.length_ratio, 2) << "), evaluations/trace "
            << fixed(r.mean_evaluations, 1) << '\n';
}

int cmd_predict(const PredictArgs& a) {
  const auto corpus = read_corpus(a.traces);
  const auto policy = a.policy.policy();
  std::unique_ptr<StopModel> model;
  std::unique_ptr<Scorer> scorer;
  if (a.oracle) {
    scorer = std::make_unique<LabelOracle>();
  } else {
    if (a.model.empty()) throw CLI::RequiredError("--model (or --oracle)");
    model = load_model(a.model);
    scorer = std::make_unique<ModelScorer>(*model);
  }
  const auto decisions = decide_all(corpus, *scorer, policy, a.policy.stop_mode(), a.threads);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    append_decision_log(out, decisions);
  }
  const auto report = eval_report(decisions, corpus);
  if (!a.report.empty()) open_out(a.report) << to_json(report).dump(2) << '\n';
  std::cout << "predict: tau " << format_real(policy.threshold) << ", patience " << policy.patience << ", mode "
            << to_string(a.policy.stop_mode()) << '\n';
  print_report(report);
  return kOk;
}

struct SweepArgs {
  std::string traces, model, out;
  std::vector<double> thresholds = default_sweep_thresholds();
  PolicyArgs policy;
  bool oracle = false;
  unsigned threads = 0;
};

int cmd_sweep(const SweepArgs& a) {
  const auto corpus = read_corpus(a.traces);
  std::unique_ptr<StopModel> model;
  std::unique_ptr<Scorer> scorer;
  if (a.oracle) {
    scorer = std::make_unique<LabelOracle>();
  } else {
    if (a.model.empty()) throw CLI::RequiredError("--model (or --oracle)");
    model = load_model(a.model);
    scorer = std::make_unique<ModelScorer>(*model);
  }
  const auto rows = threshold_sweep(corpus, *scorer, a.policy.policy(), a.thresholds, a.policy.stop_mode(), a.threads);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_sweep_csv(out, rows);
  }
  std::cout << "sweep: " << corpus.size() << " traces\n";
  std::cout << "  " << std::left << std::setw(7) << "tau" << std::setw(10) << "accuracy" << std::setw(10) << "coverage"
            << std::setw(12) << "mean len" << std::setw(12) << "median len" << "reduction\n";
  for (const auto& r : rows)
    std::cout << "  " << std::left << std::setw(7) << format_real(r.threshold) << std::setw(10) << pct(r.report.accuracy)
              << std::setw(10) << pct(r.report.coverage) << std::setw(12) << fixed(r.report.mean_length, 1)
              << std::setw(12) << fixed(r.report.median_length, 1) << 'x' << fixed(r.report.length_ratio, 2) << '\n';
  return kOk;
}

struct CurvesArgs {
  std::string traces, out;
  std::vector<double> grid = default_curve_grid();
};

int cmd_curves(const CurvesArgs& a) {
  const auto corpus = read_corpus(a.traces);
  const auto curve = consistency_curve(corpus, a.grid);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_curve_csv(out, curve);
  }
  std::cout << "curves: " << corpus.size() << " traces\n";
  for (const auto& p : curve)
    std::cout << "  " << std::left << std::setw(6) << format_real(p.fraction) << "consistency " << std::setw(8)
              << pct(p.consistency) << "accuracy " << pct(p.accuracy) << '\n';
  return kOk;
}

struct SftArgs {
  std::string traces, out, prompts, corrected, hints_out;
  int max_stops = kMaxStops;
};

std::map<std::string, std::string> read_prompts(const std::string& path) {
  std::map<std::string, std::string> out;
  if (path.empty()) return out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("prompts: ") + e.what(), n);
    }
    if (!j.contains("trace_id") || !j.contains("prompt") || !j["trace_id"].is_string() || !j["prompt"].is_string())
      throw ValidationError("prompts", "each line needs string fields trace_id and prompt", n);
    out[j["trace_id"].get<std::string>()] = j["prompt"].get<std::string>();
  }
  return out;
}

int cmd_sft_build(const SftArgs& a) {
  const auto corpus = read_corpus(a.traces);
  const auto prompts = read_prompts(a.prompts);
  const auto corrected = a.corrected.empty() ? std::vector<TraceRecord>{} : read_corpus(a.corrected);
  ReplayProbeProvider provider;
  const auto build = build_sft(corpus, provider, prompts, corrected);
  auto out = open_out(a.out);
  std::size_t stops = 0, failures = 0;
  for (const auto& row : build.rows) {
    out << to_json(row, provider.decoding()).dump() << '\n';
    stops += row.annotated.stop_steps.size();
    failures += row.annotated.failures.size();
  }
  if (!a.hints_out.empty()) {
    auto hints = open_out(a.hints_out);
    for (const auto& h : build.hint_requests) hints << to_json(h).dump() << '\n';
  }
  std::cout << "sft-build: " << build.rows.size() << " examples, " << stops << " <stop> markers, "
            << build.hint_requests.size() << " hint requests";
  if (failures) std::cout << ", " << failures << " probe failures";
  std::cout << " -> " << a.out << '\n';
  return kOk;
}

struct RlArgs {
  std::string traces, out;
  RewardWeights weights;
};

int cmd_rl_eval(const RlArgs& a) {
  const auto corpus = read_corpus(a.traces);
  const auto scored = score_rollouts(corpus, a.weights);
  auto out = open_out(a.out);
  double sum = 0.0;
  std::size_t truncated = 0, formatted = 0;
  for (const auto& s : scored) {
    out << to_json(s).dump() << '\n';
    sum += s.scalar;
    truncated += s.outcome.truncated() ? 1 : 0;
    formatted += s.outcome.format_ok ? 1 : 0;
  }
  const double n = scored.empty() ? 1.0 : static_cast<double>(scored.size());
  std::cout << "rl-eval: " << scored.size() << " rollouts, mean reward " << fixed(sum / n, 4) << ", truncated "
            << pct(static_cast<double>(truncated) / n) << ", well-formed " << pct(static_cast<double>(formatted) / n)
            << " -> " << a.out << '\n';
  return kOk;
}

struct LiveArgs {
  std::string endpoint, model_name, prompt, prompt_file, model, out, decisions, gold, task_kind = "closed", id = "live";
  std::vector<std::string> answers;
  PolicyArgs policy;
  int max_tokens = 8192;
  GenerationRequest defaults;
};

int cmd_live(const LiveArgs& a) {
  HttpConfig http;
  http.endpoint = a.endpoint;
  http = HttpConfig::from_env(http);
  if (http.endpoint.empty()) throw CLI::RequiredError("--endpoint (or COTSTOP_ENDPOINT)");
  GenerationRequest req = a.defaults;
  req.endpoint = http.endpoint;
  req.model = a.model_name;
  req.prompt = a.prompt_file.empty() ? a.prompt : read_file(a.prompt_file);
  req.max_tokens = a.max_tokens;
  req.answer_set = AnswerSet(task_kind_from_string(a.task_kind), a.answers);
  if (!a.gold.empty()) req.gold = a.gold;
  const auto model = load_model(a.model);
  const ModelScorer scorer(*model);
  HttpTransport transport(http);
  const auto res = live_stop_session(a.id, req, a.policy.policy(), a.policy.stop_mode(), scorer, transport);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    if (res.trace.final_answer.known()) write_trace(out, res.trace);
  }
  if (!a.decisions.empty()) {
    auto log = open_out(a.decisions, std::ios::binary | std::ios::app);
    log << to_json(res).dump() << '\n';
  }
  const auto& d = res.decision;
  std::cout << "live: " << (d.stopped ? "stopped at t=" + std::to_string(*d.stop_step) : "ran to t=" + std::to_string(d.length))
            << ", answer " << (d.answer.known() ? d.answer.raw : "?") << ", " << d.evaluations << " probes\n";
  if (res.error) throw TransportError(*res.error, false);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early stopping for chain-of-thought traces"};
  app.set_config("--config", "", "TOML/INI file mirroring the command-line flags");
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads, 0 = hardware concurrency");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic trace corpus");
  c_synth->add_option("--out", synth.out, "Trace JSONL output")->required();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--n", synth.spec.n_traces, "Number of traces")->capture_default_str();
  c_synth->add_option("--min-length", synth.spec.min_length)->capture_default_str();
  c_synth->add_option("--max-length", synth.spec.max_length)->capture_default_str();
  c_synth->add_option("--answers", synth.spec.n_answers, "|Ω|")->capture_default_str();
  c_synth->add_option("--probe-stride", synth.spec.probe_stride)->capture_default_str();
  c_synth->add_option("--converge-by-half", synth.spec.converge_by_half)->capture_default_str();
  c_synth->add_option("--noise", synth.spec.noise)->capture_default_str();
  c_synth->add_option("--gold-accuracy", synth.spec.gold_accuracy)->capture_default_str();
  c_synth->add_option("--evidence-rate", synth.spec.evidence_rate)->capture_default_str();
  c_synth->add_option("--confidence-overlap", synth.spec.confidence_overlap)->capture_default_str();
  c_synth->add_option("--group-size", synth.group_size, "Name traces <group>#<k> in groups of this size (RL)")
      ->capture_default_str();
  c_synth->add_option("--proposals", synth.proposals, "none, near-convergence or sentence-ends")->capture_default_str();

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-dataset", "Label every probe of a corpus into a feature CSV");
  c_build->add_option("--traces", build.traces)->required();
  c_build->add_option("--out", build.out, "Dataset CSV")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the stop classifier");
  auto* o_data = c_train->add_option("--data", tr.data, "Dataset CSV from build-dataset");
  auto* o_tr = c_train->add_option("--traces", tr.traces, "Trace corpus (labelled on the fly)");
  o_data->excludes(o_tr);
  c_train->add_option("--out", tr.out, "Model file")->required();
  c_train->add_option("--seed", tr.seed)->capture_default_str();
  c_train->add_option("--holdout", tr.holdout, "Share of traces held out for AUROC")->capture_default_str();
  c_train->add_option("--n-estimators", tr.cfg.n_estimators)->capture_default_str();
  c_train->add_option("--num-leaves", tr.cfg.num_leaves)->capture_default_str();
  c_train->add_option("--learning-rate", tr.cfg.learning_rate)->capture_default_str();
  c_train->add_option("--subsample", tr.cfg.subsample)->capture_default_str();
  c_train->add_option("--colsample", tr.cfg.colsample)->capture_default_str();
  c_train->add_option("--min-samples-leaf", tr.cfg.min_samples_leaf)->capture_default_str();
  c_train->add_option("--max-bins", tr.cfg.max_bins)->capture_default_str();

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "Replay the stop policy over a corpus");
  c_pred->add_option("--traces", pred.traces)->required();
  c_pred->add_option("--model", pred.model);
  c_pred->add_flag("--oracle", pred.oracle, "Score with the label oracle instead of a model");
  c_pred->add_option("--out", pred.out, "Decision log JSONL");
  c_pred->add_option("--report", pred.report, "Summary JSON");
  pred.policy.add(c_pred);

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Accuracy, length and coverage over a τ grid");
  c_sweep->add_option("--traces", sweep.traces)->required();
  c_sweep->add_option("--model", sweep.model);
  c_sweep->add_flag("--oracle", sweep.oracle, "Score with the label oracle instead of a model");
  c_sweep->add_option("--out", sweep.out, "Sweep CSV");
  c_sweep->add_option("--thresholds", sweep.thresholds, "τ values, strictly descending")->capture_default_str();
  c_sweep->add_option("--tau", sweep.thresholds, "Alias of --thresholds");
  sweep.policy.add(c_sweep, false);

  CurvesArgs curves;
  auto* c_curves = app.add_subcommand("curves", "Consistency and accuracy against CoT progress");
  c_curves->add_option("--traces", curves.traces)->required();
  c_curves->add_option("--out", curves.out, "Curve CSV");
  c_curves->add_option("--grid", curves.grid, "Progress fractions in [0,1]")->capture_default_str();

  SftArgs sft;
  auto* c_sft = app.add_subcommand("sft-build", "Insert <stop> markers and emit SFT examples");
  c_sft->add_option("--traces", sft.traces)->required();
  c_sft->add_option("--out", sft.out, "SFT JSONL")->required();
  c_sft->add_option("--prompts", sft.prompts, "JSONL of {trace_id, prompt}");
  c_sft->add_option("--corrected", sft.corrected, "Hint-corrected traces");
  c_sft->add_option("--hints-out", sft.hints_out, "Hint continuation requests JSONL");

  RlArgs rl;
  auto* c_rl = app.add_subcommand("rl-eval", "Verify-then-truncate rewards and group advantages");
  c_rl->add_option("--traces", rl.traces, "Rollouts; ids group by the text before '#'")->required();
  c_rl->add_option("--out", rl.out, "Outcome JSONL")->required();
  c_rl->add_option("--w-format", rl.weights.format)->capture_default_str();
  c_rl->add_option("--w-stop", rl.weights.stop)->capture_default_str();
  c_rl->add_option("--w-accuracy", rl.weights.accuracy)->capture_default_str();

  LiveArgs live;
  auto* c_live = app.add_subcommand("live", "Stream a generation and stop it early");
  c_live->add_option("--endpoint", live.endpoint, "Completions base URL, e.g. http://localhost:8000/v1");
  c_live->add_option("--model-name", live.model_name, "Served model name")->required();
  auto* o_prompt = c_live->add_option("--prompt", live.prompt);
  auto* o_pfile = c_live->add_option("--prompt-file", live.prompt_file);
  o_prompt->excludes(o_pfile);
  c_live->add_option("--answers", live.answers, "Answer set Ω")->required();
  c_live->add_option("--task-kind", live.task_kind)->check(CLI::IsMember({"closed", "open"}))->capture_default_str();
  c_live->add_option("--gold", live.gold);
  c_live->add_option("--id", live.id, "Session / trace id")->capture_default_str();
  c_live->add_option("--model", live.model, "Stop model file")->required();
  c_live->add_option("--out", live.out, "Trace JSONL of the session");
  c_live->add_option("--decisions", live.decisions, "Append the decision to this JSONL log");
  c_live->add_option("--max-tokens", live.max_tokens)->capture_default_str();
  c_live->add_option("--temperature", live.defaults.temperature)->capture_default_str();
  c_live->add_option("--top-k", live.defaults.top_k)->capture_default_str();
  c_live->add_option("--top-p", live.defaults.top_p)->capture_default_str();
  c_live->add_option("--repetition-penalty", live.defaults.repetition_penalty)->capture_default_str();
  c_live->add_option("--top-logprobs", live.defaults.top_logprobs)->capture_default_str();
  live.policy.add(c_live);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    pred.threads = sweep.threads = threads;
    if (*c_synth) return cmd_synth(synth);
    if (*c_build) return cmd_build_dataset(build);
    if (*c_train) {
      if (tr.data.empty() && tr.traces.empty()) throw CLI::RequiredError("--data or --traces");
      return cmd_train(tr);
    }
    if (*c_pred) return cmd_predict(pred);
    if (*c_sweep) return cmd_sweep(sweep);
    if (*c_curves) return cmd_curves(curves);
    if (*c_sft) return cmd_sft_build(sft);
    if (*c_rl) return cmd_rl_eval(rl);
    if (*c_live) return cmd_live(live);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
