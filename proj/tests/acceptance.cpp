// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
// Set COTSTOP_UPDATE_GOLDEN=1 to rewrite the pipeline goldens.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cotstop/certificate.hpp"
#include "cotstop/controller.hpp"
#include "cotstop/evidence.hpp"
#include "cotstop/gateway.hpp"
#include "cotstop/kinematics.hpp"
#include "cotstop/metrics.hpp"
#include "cotstop/rl.hpp"
#include "cotstop/sft.hpp"
#include "cotstop/stop_model.hpp"
#include "cotstop/synth.hpp"

#ifndef COTSTOP_CLI
#error "COTSTOP_CLI must name the cotstop executable"
#endif
#ifndef COTSTOP_GOLDEN_DIR
#error "COTSTOP_GOLDEN_DIR must name the golden directory"
#endif

using namespace cotstop;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int n, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific;
  os.precision(2);
  os << v;
  return os.str();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

StopPolicy policy(double tau, int patience, int stride, int window = 1) {
  StopPolicy p;
  p.threshold = tau;
  p.patience = patience;
  p.stride = stride;
  p.proposal_window = window;
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + COTSTOP_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cotstop-acceptance-" + std::to_string(Clock::now().time_since_epoch().count()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

FixtureSpec acceptance_corpus_spec() {
  FixtureSpec spec;
  spec.seed = 11;
  spec.n_traces = 1000;
  spec.evidence_rate = 0.3;
  spec.confidence_overlap = 0.1;
  return spec;
}

// ---------------------------------------------------------------------------

void certificate_soundness() {
  const auto start = Clock::now();
  const DriftProfile profiles[] = {DriftProfile::converging, DriftProfile::oscillating, DriftProfile::late_flip,
                                   DriftProfile::random_walk};
  const std::size_t sizes[] = {2, 4, 8};
  long violations = 0, certified_points = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto p = simulate_posterior_path(seed, sizes[seed % 3], 1 + (seed * 7919) % 200, profiles[seed % 4]);
    const std::size_t len = p.length();
    // tail variation recomputed here as a plain backward sum
    std::vector<double> tv(len, 0.0);
    for (std::size_t t = len; t-- > 1;) {
      double l1 = 0.0;
      for (std::size_t a = 0; a < p.at(t).size(); ++a) l1 += std::abs(p.at(t + 1)[a] - p.at(t)[a]);
      tv[t - 1] = tv[t] + l1;
    }
    auto winner = [](const std::vector<double>& q) {
      return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
    };
    const int final_winner = winner(p.at(len));
    for (std::size_t t = 1; t <= len; ++t) {
      auto q = p.at(t);
      const int top = winner(q);
      auto sorted = q;
      std::sort(sorted.rbegin(), sorted.rend());
      const double gamma = sorted[0] - sorted[1];
      if (gamma > 0 && tv[t - 1] <= gamma) {
        ++certified_points;
        if (top != final_winner) ++violations;
      }
    }
    if (auto tau = certified_stop(p))
      if (margin(p.at(*tau)).argmax != final_winner) ++violations;
  }
  const double secs = seconds_since(start);
  report(1, "certificate soundness", violations == 0 && secs < 10.0,
         "10000 paths, " + std::to_string(certified_points) + " certified steps, " + std::to_string(violations) +
             " violations, " + fmt(secs, 2) + " s");
}

void oracle_equivalence() {
  FixtureSpec spec;
  spec.seed = 2;
  spec.n_traces = 1000;
  spec.noise = 0.0;
  const auto fixture = generate_fixture(spec);
  const auto start = Clock::now();
  int exact = 0;
  for (const auto& s : fixture) {
    const auto d = scan_decide(s.trace, LabelOracle{}, policy(0.5, 1, 1));
    if (d.stopped && d.stop_step && *d.stop_step == s.planted_tau && earliest_safe_stop(s.trace) == s.planted_tau &&
        d.answer == s.trace.final_answer)
      ++exact;
  }
  const double secs = seconds_since(start);
  report(2, "oracle equivalence", exact == 1000 && secs < 5.0,
         std::to_string(exact) + "/1000 traces stop at the planted earliest safe stop, " + fmt(secs, 2) + " s");
}

EsTrajectory traj_of(const std::vector<double>& ls) {
  EsTrajectory tr(5, 3);
  int t = 0;
  for (double v : ls) tr.push(t += 10, v);
  return tr;
}

void math_exactness() {
  std::vector<std::string> bad;
  const AnswerSet omega(TaskKind::closed, {"A", "B", "C", "D"});
  const char* letters[] = {"A", "B", "C", "D", "x", "so"};
  rng::Stream g(101);
  double worst_sum = 0.0;
  int evaluated = 0;
  for (int t = 1; evaluated < 100000; ++t) {
    StepRecord s;
    s.t = t;
    double lp = 0.0;
    const auto k = g.uniform_int(1, 8);
    for (std::int64_t i = 0; i < k; ++i) {
      lp -= g.uniform(0.0, 6.0);
      s.topk.push_back({letters[g.uniform_int(0, 5)], lp});
    }
    if (auto inst = instantaneous_scores(bucket_topk(s, omega))) {
      double sum = 0.0;
      for (double p : inst->probs) sum += p;
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      ++evaluated;
    }
  }
  if (worst_sum > 1e-9) bad.push_back("inst_p sum off by " + std::to_string(worst_sum));

  double worst_coef = 0.0;
  for (int trial = 0; trial < 5000; ++trial) {
    const double a = g.uniform(-5, 5), b = g.uniform(-5, 5), c = g.uniform(-50, 50);
    std::vector<double> ls;
    for (int k = 0; k < 5; ++k) ls.push_back(a * k * k + b * k + c);
    const auto q = quad_fit(traj_of(ls));
    worst_coef = std::max({worst_coef, std::abs(q.a - a), std::abs(q.b - b), std::abs(q.c - c)});
  }
  if (worst_coef > 1e-6) bad.push_back("quad_fit error " + std::to_string(worst_coef));

  for (int trial = 0; trial < 10000; ++trial) {
    ProbeRecord p;
    if (trial % 2 == 0) {
      std::vector<double> span(static_cast<std::size_t>(g.uniform_int(1, 12)));
      for (auto& x : span) x = -g.uniform(0.0, 8.0);
      p.answer_span_logprobs = span;
    } else {
      p.avg_logprob = -g.uniform(0.0, 5.0);
      p.answer_len = static_cast<int>(g.uniform_int(1, 30));
    }
    const auto st = token_stats(p);
    if (st.neg_ppl != -st.mean) {
      bad.push_back("neg_ppl differs from -mean");
      break;
    }
  }

  // slope = L_t - L_{t-1}, second difference = slope_t - slope_{t-1}
  const auto k1 = slope_curvature(traj_of({-2.0}));
  const auto k2 = slope_curvature(traj_of({-2.0, -1.5}));
  const auto k3 = slope_curvature(traj_of({-2.0, -1.5, -1.25}));
  const auto k4 = slope_curvature(traj_of({-3.0, -1.0, -0.5, -0.75}));
  if (!(k1.slope == 0.0 && k1.second_diff == 0.0)) bad.push_back("single-point kinematics");
  if (!(k2.slope == 0.5 && k2.second_diff == 0.0)) bad.push_back("two-point kinematics");
  if (!(k3.slope == 0.25 && k3.second_diff == -0.25)) bad.push_back("three-point kinematics");
  if (!(k4.slope == -0.25 && k4.second_diff == -0.75)) bad.push_back("four-point kinematics");

  report(3, "feature and math exactness", bad.empty(),
         bad.empty() ? std::to_string(evaluated) + " evidence steps (max |sum-1| " + sci(worst_sum) +
                           "), quad_fit max error " + sci(worst_coef) + ", neg_ppl and hand fixtures exact"
                     : bad.front());
}

struct ClassifierRun {
  StopModel model;
  std::vector<TraceRecord> held_out;
};

ClassifierRun classifier_quality() {
  const auto corpus = generate_corpus(acceptance_corpus_spec());
  std::vector<TraceRecord> train_traces, test_traces;
  for (std::size_t i = 0; i < corpus.size(); ++i) (i % 5 == 4 ? test_traces : train_traces).push_back(corpus[i]);
  const auto names = feature_names();
  const auto train_rows = label_corpus(train_traces);
  const auto test_rows = label_corpus(test_traces);

  TrainConfig cfg;
  cfg.n_estimators = 400;
  cfg.num_leaves = 63;
  cfg.learning_rate = 0.07;
  cfg.seed = 7;
  auto model = train(train_rows, names, cfg);

  const auto delta_col = static_cast<std::size_t>(std::find(names.begin(), names.end(), "delta") - names.begin());
  std::vector<double> scores, delta;
  std::vector<int> labels;
  for (const auto& r : test_rows) {
    scores.push_back(model.predict(r.features));
    delta.push_back(r.features.values[delta_col]);
    labels.push_back(r.label);
  }
  const double auc = auroc(scores, labels);
  const double auc_delta = auroc(delta, labels);

  // determinism and runtime on the full corpus
  const auto all_rows = label_corpus(corpus);
  auto start = Clock::now();
  const auto bytes_a = train(all_rows, names, cfg).save();
  const double secs = seconds_since(start);
  const auto bytes_b = train(all_rows, names, cfg).save();
  const bool same = bytes_a == bytes_b;

  report(4, "classifier quality", auc >= 0.95 && auc >= auc_delta + 0.02 && same && secs < 60.0 && all_rows.size() >= 100000,
         "held-out AUROC " + fmt(auc) + " vs delta alone " + fmt(auc_delta) + ", retrain bytes " +
             (same ? "identical" : "differ") + ", " + std::to_string(all_rows.size()) + " rows in " + fmt(secs, 2) +
             " s");
  return {std::move(model), std::move(test_traces)};
}

void threshold_trend(const ClassifierRun& run) {
  const ModelScorer scorer(run.model);
  const std::vector<double> taus = {0.99, 0.95, 0.90, 0.85, 0.80};
  const auto rows = threshold_sweep(run.held_out, scorer, StopPolicy{}, taus, StopMode::lite);
  int inversions = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    inversions += rows[i].report.coverage < rows[i - 1].report.coverage;
    inversions += rows[i].report.mean_length > rows[i - 1].report.mean_length;
  }
  std::string detail;
  for (const auto& r : rows)
    detail += fmt(r.threshold, 2) + ":" + fmt(100 * r.report.coverage, 1) + "%/" + fmt(r.report.mean_length, 1) + " ";
  report(5, "threshold sweep trend", inversions == 0 && rows.size() == taus.size(),
         std::to_string(inversions) + " inversions (tau:coverage/mean length) " + detail);
}

class TableVerifier final : public Verifier {
 public:
  explicit TableVerifier(std::map<int, std::string> answers) : answers_(std::move(answers)) {}
  AnswerId elicit(const Rollout& r, int t) override { return r.answer_set.lookup(answers_.at(t)); }

 private:
  std::map<int, std::string> answers_;
};

void verify_then_truncate() {
  const int len = 8;
  int patterns = 0, bad = 0;
  for (unsigned subset = 0; subset < (1u << len); ++subset) {
    std::vector<int> P;
    for (int t = 1; t <= len; ++t)
      if (subset >> (t - 1) & 1u) P.push_back(t);
    if (P.size() > 4) continue;
    for (bool well_formed : {true, false}) {
      Rollout r;
      r.rollout_id = "q#0";
      r.answer_set = AnswerSet(TaskKind::closed, {"A", "B"});
      r.gold = r.answer_set.lookup("A");
      r.final_answer = r.answer_set.lookup("A");
      r.gen_length = len;
      r.proposals = P;
      r.tokens.emplace_back(well_formed ? "<think>" : "x");
      for (int t = 1; t <= len; ++t) r.tokens.push_back(std::count(P.begin(), P.end(), t) ? "<stop>" : "w");
      r.tokens.emplace_back("</think>");
      for (unsigned mask = 0; mask < (1u << P.size()); ++mask) {
        std::map<int, std::string> table;
        for (std::size_t i = 0; i < P.size(); ++i) table[P[i]] = mask >> i & 1u ? "A" : "B";
        TableVerifier v(table);
        const auto out = verify_truncate(r, v);
        ++patterns;
        int expected = len;
        for (std::size_t i = 0; i < P.size(); ++i)
          if (mask >> i & 1u) {
            expected = P[i];
            break;
          }
        std::vector<int> eligible;
        for (int t : P)
          if (t <= expected) eligible.push_back(t);
        bool ok = out.t_tilde == expected && out.rewarded == eligible && out.format_ok == well_formed;
        for (std::size_t i = 0; i < P.size() && ok; ++i) {
          if (P[i] > expected) continue;
          const double fmt_term = well_formed ? 1.0 : 0.0;
          const double stop_term = P[i] == expected ? 1.0 - static_cast<double>(expected) / len : 0.0;
          const double acc_term = mask >> i & 1u ? 1.0 : 0.0;
          const double by_hand = 0.25 * fmt_term + 0.25 * stop_term + 0.5 * acc_term;
          ok = std::abs(reward(P[i], out) - by_hand) <= 1e-12;
        }
        bad += !ok;
      }
    }
  }
  report(6, "verify-then-truncate", bad == 0,
         std::to_string(patterns) + " acceptance patterns over every placement of up to 4 proposals, " +
             std::to_string(bad) + " mismatches");
}

TraceRecord sentence_trace(int n, const std::set<int>& matches, const std::string& gold) {
  TraceRecord tr;
  tr.trace_id = "s" + std::to_string(n);
  tr.answer_set = AnswerSet(TaskKind::closed, {"A", "B", "C"});
  tr.final_answer = tr.answer_set.lookup("A");
  tr.gold_answer = tr.answer_set.lookup(gold);
  int t = 0;
  for (int j = 1; j <= n; ++j) {
    for (const std::string& tok : {std::string(" so"), " step " + std::to_string(j) + "."}) {
      StepRecord s;
      s.t = ++t;
      s.token = tok;
      s.sentence_id = j - 1;
      tr.steps.push_back(s);
    }
    ProbeRecord p;
    p.t = t;
    p.forced_answer = tr.answer_set.lookup(matches.count(j) || j == n ? "A" : "B");
    tr.probes.push_back(p);
  }
  tr.cot_length = t;
  return tr;
}

void sft_contract() {
  std::vector<TraceRecord> fixtures = {sentence_trace(12, {2, 3, 5, 7, 8, 9, 10}, "A"),
                                       sentence_trace(6, {}, "B"), sentence_trace(9, {1, 9}, "C"),
                                       sentence_trace(3, {1, 2}, "A")};
  FixtureSpec spec;
  spec.seed = 77;
  spec.n_traces = 100;
  spec.noise = 0.3;
  for (auto& tr : generate_corpus(spec)) fixtures.push_back(std::move(tr));
  ReplayProbeProvider replay;
  int markers = 0;
  std::vector<std::string> bad;
  for (const auto& tr : fixtures) {
    const auto out = insert_stops(tr, replay);
    markers += static_cast<int>(out.stop_steps.size());
    if (out.stop_steps.size() > 5) bad.push_back(tr.trace_id + ": more than 5 markers");
    if (remove_stops(out.text) != cot_text(tr.steps)) bad.push_back(tr.trace_id + ": removal not byte-exact");
    std::set<int> boundaries;
    for (const auto& s : segment_sentences(tr.steps)) boundaries.insert(s.last_t);
    for (int t : out.stop_steps) {
      const auto* p = tr.probe_at(t);
      if (!boundaries.count(t) || !p || p->forced_answer != tr.final_answer)
        bad.push_back(tr.trace_id + ": marker at t=" + std::to_string(t) + " is not a positive boundary");
    }
  }
  const auto first = insert_stops(fixtures[0], replay);
  if (first.stop_sentences != std::vector<int>{2, 3, 5, 7, 8}) bad.push_back("fixture 0: wrong sentences");
  const auto hint = hint_augment(fixtures[1], "Q?");
  if (!hint || hint->hint != "Wait, the correct answer is B") bad.push_back("hint text");
  if (hint_text(fixtures[2].gold_answer.value()) != "Wait, the correct answer is C") bad.push_back("hint text");
  report(7, "SFT builder contract", bad.empty(),
         bad.empty() ? std::to_string(fixtures.size()) + " fixtures, " + std::to_string(markers) +
                           " markers at positive boundaries, removal byte-exact, hint verbatim"
                     : bad.front());
}

void consistency_curves(const fs::path& dir) {
  std::vector<std::string> bad;
  FixtureSpec spec;
  spec.seed = 5;
  spec.n_traces = 150;
  spec.probe_stride = 7;
  spec.noise = 0.3;
  const auto corpus = generate_corpus(spec);
  {
    std::ofstream out(dir / "curve_fixture.jsonl", std::ios::binary);
    write_traces(out, corpus);
  }
  const std::vector<double> grid = {0.0, 0.1, 0.25, 0.33, 0.5, 0.6, 0.75, 0.9, 1.0};
  const int rc = run_cli("curves --traces \"" + (dir / "curve_fixture.jsonl").string() + "\" --out \"" +
                             (dir / "curve.csv").string() + "\" --grid 0 0.1 0.25 0.33 0.5 0.6 0.75 0.9 1",
                         dir / "curves.log");
  if (rc != 0) bad.push_back("cotstop curves exited " + std::to_string(rc));
  const auto csv = read_csv(dir / "curve.csv");
  if (rc == 0 && csv.size() != grid.size() + 1) bad.push_back("curve CSV has " + std::to_string(csv.size()) + " lines");
  for (std::size_t g = 0; bad.empty() && g < grid.size(); ++g) {
    int n = 0, consistent = 0, accurate = 0;
    for (const auto& tr : corpus) {
      const ProbeRecord* best = nullptr;
      for (const auto& p : tr.probes)
        if (!best || std::abs(p.t - grid[g] * tr.cot_length) < std::abs(best->t - grid[g] * tr.cot_length)) best = &p;
      if (!best) continue;
      ++n;
      consistent += best->forced_answer == tr.final_answer;
      accurate += best->forced_answer == *tr.gold_answer;
    }
    const auto& row = csv[g + 1];
    if (std::stoi(row[1]) != n || std::stoi(row[2]) != consistent || std::stoi(row[5]) != accurate ||
        row[3] != format_real(static_cast<double>(consistent) / n))
      bad.push_back("mismatch at fraction " + fmt(grid[g], 2));
  }

  FixtureSpec half;
  half.seed = 71;
  half.n_traces = 1000;
  half.converge_by_half = 0.71;
  {
    std::ofstream out(dir / "half.jsonl", std::ios::binary);
    write_traces(out, generate_corpus(half));
  }
  double at_half = -1;
  if (run_cli("curves --traces \"" + (dir / "half.jsonl").string() + "\" --out \"" + (dir / "half.csv").string() +
                  "\" --grid 0.5",
              dir / "half.log") == 0) {
    const auto rows = read_csv(dir / "half.csv");
    if (rows.size() == 2) at_half = std::stod(rows[1][3]);
  }
  if (std::abs(at_half - 0.71) > 0.02) bad.push_back("0.5 consistency " + fmt(at_half) + " outside 0.71 +- 0.02");
  report(8, "consistency curve", bad.empty(),
         bad.empty() ? "CLI counts equal brute force at " + std::to_string(grid.size()) +
                           " fractions, 71% fixture reads " + fmt(at_half, 3) + " at 0.5"
                     : bad.front());
}

void record_replay() {
  FixtureSpec mspec;
  mspec.seed = 91;
  mspec.n_traces = 60;
  mspec.noise = 0.2;
  TrainConfig cfg;
  cfg.n_estimators = 30;
  cfg.num_leaves = 15;
  const auto model = train(Dataset::from_rows(label_corpus(generate_corpus(mspec)), feature_names()), cfg);
  const ModelScorer scorer(model);

  struct Case {
    StopMode mode;
    StopPolicy pol;
    int late;
    bool degrade;
  };
  std::vector<Case> cases;
  const StopPolicy pols[] = {policy(0.9, 3, 20), policy(0.5, 1, 7), policy(0.8, 2, 13, 3)};
  for (const auto& pol : pols)
    for (StopMode mode : {StopMode::lite, StopMode::proposal})
      for (int late : {0, 2, 64})
        for (bool degrade : {false, true}) cases.push_back({mode, pol, late, degrade});

  int scenarios = 0, identical = 0, races = 0, degraded = 0, stopped = 0;
  std::uint64_t seed = 500;
  for (const auto& c : cases) {
    FixtureSpec spec;
    spec.seed = seed++;
    spec.n_traces = 1;
    spec.noise = 0.2;
    spec.proposals = c.mode == StopMode::lite ? ProposalRule::none : ProposalRule::near_convergence;
    const auto original = generate_corpus(spec).at(0);
    auto script = script_from_trace(original);
    script.late_after_cancel = c.late;
    if (c.degrade) {
      for (std::size_t i = 1; i < script.stream.size(); i += 3) {
        script.stream[i].logprob.reset();
        script.stream[i].top.clear();
      }
      int k = 0;
      for (auto& [t, probe] : script.probes)
        if (k++ % 2 == 0) probe.tokens.clear();
    }
    ScriptedTransport transport(script);
    GenerationRequest req;
    req.endpoint = "scripted";
    req.model = "m";
    req.prompt = "Q: " + original.trace_id + "\n";
    req.answer_set = original.answer_set;
    req.max_tokens = 4096;
    const auto res = live_stop_session(original.trace_id, req, c.pol, c.mode, scorer, transport);
    ++scenarios;
    if (res.error) continue;
    std::ostringstream out;
    write_trace(out, res.trace);
    const auto back = parse_trace_string(out.str()).at(0);
    const bool same = back == res.trace && decide(back, scorer, c.pol, c.mode) == res.decision &&
                      transport.max_in_flight() == 1;
    identical += same;
    stopped += res.decision.stopped;
    races += res.late_tokens_discarded > 0;
    degraded += c.degrade;
  }
  report(9, "record/replay fidelity", identical == scenarios && scenarios >= 20 && races > 0 && degraded > 0,
         std::to_string(identical) + "/" + std::to_string(scenarios) + " scenarios replay to identical decisions (" +
             std::to_string(stopped) + " stopped, " + std::to_string(races) + " with late tokens discarded, " +
             std::to_string(degraded) + " with missing log-probs)");
}

void pipeline(const fs::path& dir) {
  const fs::path golden = fs::path(COTSTOP_GOLDEN_DIR) / "pipeline";
  const bool update = std::getenv("COTSTOP_UPDATE_GOLDEN") != nullptr;
  auto q = [&](const char* name) { return "\"" + (dir / name).string() + "\""; };
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"synth", "synth --out " + q("corpus.jsonl") +
                    " --seed 11 --n 1000 --evidence-rate 0.3 --confidence-overlap 0.1"},
      {"build-dataset", "build-dataset --traces " + q("corpus.jsonl") + " --out " + q("dataset.csv")},
      {"train", "train --data " + q("dataset.csv") + " --out " + q("model.cst") + " --seed 7 --holdout 0.2"},
      {"sweep", "sweep --traces " + q("corpus.jsonl") + " --model " + q("model.cst") + " --out " + q("sweep.csv")},
      {"curves", "curves --traces " + q("corpus.jsonl") + " --out " + q("curves.csv")},
  };
  std::vector<std::string> bad;
  const auto start = Clock::now();
  for (const auto& [name, args] : steps) {
    const int rc = run_cli(args, dir / (name + ".log"));
    if (rc != 0) {
      bad.push_back(name + " exited " + std::to_string(rc) + ": " + read_file(dir / (name + ".log")));
      break;
    }
  }
  const double secs = seconds_since(start);

  int compared = 0;
  if (bad.empty()) {
    // small outputs verbatim, large ones by FNV-1a digest
    std::ostringstream digests;
    for (const char* f : {"corpus.jsonl", "dataset.csv", "model.cst"})
      digests << f << ' ' << hex64(fnv1a64(read_file(dir / f))) << '\n';
    const std::map<std::string, std::string> produced = {
        {"digests.txt", digests.str()},
        {"sweep.csv", read_file(dir / "sweep.csv")},
        {"curves.csv", read_file(dir / "curves.csv")},
    };
    if (update) fs::create_directories(golden);
    for (const auto& [name, bytes] : produced) {
      if (update) write_file(golden / name, bytes);
      if (read_file(golden / name) != bytes) bad.push_back(name + " differs from golden");
      ++compared;
    }
  }
  report(10, "end-to-end pipeline", bad.empty() && secs < 300.0,
         bad.empty() ? "synth, build-dataset, train, sweep, curves on 1000 traces in " + fmt(secs, 2) + " s, " +
                           std::to_string(compared) + " golden files match" + (update ? " (updated)" : "")
                     : bad.front());
}

}  // namespace

int main() {
  TempDir tmp;
  const auto guard = [](int n, const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(n, name, false, std::string("exception: ") + e.what());
    }
  };
  guard(1, "certificate soundness", certificate_soundness);
  guard(2, "oracle equivalence", oracle_equivalence);
  guard(3, "feature and math exactness", math_exactness);
  std::optional<ClassifierRun> run;
  guard(4, "classifier quality", [&] { run = classifier_quality(); });
  guard(5, "threshold sweep trend", [&] {
    if (!run) throw Error("no trained model");
    threshold_trend(*run);
  });
  guard(6, "verify-then-truncate", verify_then_truncate);
  guard(7, "SFT builder contract", sft_contract);
  guard(8, "consistency curve", [&] { consistency_curves(tmp.path); });
  guard(9, "record/replay fidelity", record_replay);
  guard(10, "end-to-end pipeline", [&] { pipeline(tmp.path); });
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
