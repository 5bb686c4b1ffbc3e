// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and thresholds are fixed here.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracle/index_loop_oracle.hpp"
#include "tgauge/harness.hpp"
#include "tgauge/redundancy.hpp"
#include "tgauge/sampling.hpp"

using namespace tgauge;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

ModelConfig toy(bool extended) {
  ModelConfig c;  // d_e=16 n_h=2 d_h=4 n_t=3 n_c=8 d_f=32
  c.extended = extended;
  return c;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

double weight_deviation(const WeightSet<double>& a, const WeightSet<double>& b) {
  double worst = max_normwise_deviation(a.U, b.U);
  for (std::size_t k = 0; k < a.blocks.size(); ++k) {
    const auto& x = a.blocks[k];
    const auto& y = b.blocks[k];
    for (std::size_t h = 0; h < x.Q.size(); ++h) {
      worst = std::max(worst, max_normwise_deviation(x.Q[h], y.Q[h]));
      worst = std::max(worst, max_normwise_deviation(x.K[h], y.K[h]));
      worst = std::max(worst, max_normwise_deviation(x.V[h], y.V[h]));
    }
    worst = std::max({worst, max_normwise_deviation(x.L, y.L), max_normwise_deviation(x.W, y.W),
                      max_normwise_deviation(x.W_hat, y.W_hat)});
    if (x.G) worst = std::max(worst, max_normwise_deviation(*x.G, *y.G));
    if (x.G_bar) worst = std::max(worst, max_normwise_deviation(*x.G_bar, *y.G_bar));
  }
  return worst;
}

double gauge_deviation(const GaugeElement<double>& a, const GaugeElement<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.g0.size(); ++i) worst = std::max(worst, max_abs(a.g0[i] - b.g0[i]));
  for (std::size_t i = 0; i < a.g4.size(); ++i) worst = std::max(worst, max_abs(a.g4[i] - b.g4[i]));
  for (std::size_t k = 0; k < a.h1.size(); ++k)
    for (std::size_t h = 0; h < a.h1[k].size(); ++h)
      worst = std::max({worst, max_abs(a.h1[k][h] - b.h1[k][h]), max_abs(a.h3[k][h] - b.h3[k][h])});
  return worst;
}

MatrixXd distributions(const WeightSet<double>& w, const MatrixXd& e0, const ModelConfig& c) {
  return next_token_distribution(stack_forward(e0, w, c), w.U);
}

// 1. Redundancy table.
Outcome table_reproduction() {
  const auto t0 = Clock::now();
  struct Row {
    const char* preset;
    std::uint64_t count;
    const char* compact;
    const char* percent;
  };
  const Row rows[] = {{"gpt2", 1'473'409, "1.47M", "1.3"},
                      {"gpt2-xl", 11'108'001, "11.1M", "0.7"},
                      {"llama-65b", 201'314'305, "201M", "0.3"}};
  bool ok = true;
  std::string detail;
  for (const auto& row : rows) {
    const auto r = redundancy_report(*find_preset(row.preset));
    ok = ok && r.redundancy == row.count && r.compact == row.compact && r.percent == row.percent;
    detail += fmt("%s=%llu (%s, %s%%) ", r.name.c_str(), (unsigned long long)r.redundancy,
                  r.compact.c_str(), r.percent.c_str());
  }
  std::ostringstream out, err;
  const int code = cli_main({"redundancy", "--model", "gpt2"}, out, err);
  ok = ok && code == 0 && out.str().find("1473409") != std::string::npos &&
       out.str().find("1.3%") != std::string::npos;
  const double secs = seconds_since(t0);
  ok = ok && secs < 1.0;
  return {ok, detail + fmt("cli exit %d; %.3fs < 1s", code, secs)};
}

// 2 + 3 share the standard-mode run.
VerificationReport standard_run, extended_run;
double invariance_seconds = 0.0;

Outcome central_invariance() {
  const auto t0 = Clock::now();
  TrialSpec spec;
  spec.config = toy(false);
  spec.trials = 100;
  spec.seed = 2024;
  spec.tolerance = 1e-10;
  standard_run = run_invariance(spec);
  spec.config = toy(true);
  extended_run = run_invariance(spec);
  invariance_seconds = seconds_since(t0);
  const bool ok = standard_run.aggregate_max_rel_dev < 1e-10 &&
                  extended_run.aggregate_max_rel_dev < 1e-10 && standard_run.trials.size() == 100 &&
                  extended_run.trials.size() == 100 && invariance_seconds < 30.0;
  return {ok, fmt("standard max rel dev %.3e, extended %.3e (< 1e-10); %.2fs < 30s",
                  standard_run.aggregate_max_rel_dev, extended_run.aggregate_max_rel_dev,
                  invariance_seconds)};
}

Outcome negative_control() {
  const int n = standard_run.negative_control_exceeding;
  return {n >= 95, fmt("%d/100 unconstrained-rotation trials deviate > 1e-3 (need >= 95); min %.3e", n,
                       standard_run.negative_control_min_dev)};
}

// 4. Group axioms over 50 random pairs / triples, both modes.
Outcome group_axioms() {
  double identity_dev = 0.0, inverse_weights = 0.0, inverse_elements = 0.0, closure_dev = 0.0,
         assoc_dev = 0.0;
  int closure_members = 0;
  for (int k = 0; k < 50; ++k) {
    const ModelConfig c = toy(k % 2 == 1);
    RngStream rng(4000, static_cast<std::uint64_t>(k));
    const auto w = sample_weights(c, 32, rng);
    const auto a = sample_gauge(c, rng);
    const auto b = sample_gauge(c, rng);
    const auto d = sample_gauge(c, rng);
    const auto e = identity_gauge<double>(c);
    identity_dev = std::max({identity_dev, gauge_deviation(compose(e, a), a), gauge_deviation(compose(a, e), a),
                             weight_deviation(apply_gauge(w, e, c), w)});
    inverse_weights = std::max(inverse_weights, weight_deviation(apply_gauge(apply_gauge(w, a, c), invert(a), c), w));
    inverse_elements = std::max(inverse_elements, gauge_deviation(compose(a, invert(a)), e));
    const auto ab = compose(a, b);
    closure_dev = std::max(closure_dev, weight_deviation(apply_gauge(w, ab, c), apply_gauge(apply_gauge(w, b, c), a, c)));
    // Products stay in the group (head maps may be up to 1e3 * 1e3 conditioned).
    closure_members += gauge_problems(ab, 1e6, 1e-12).empty();
    assoc_dev = std::max(assoc_dev, gauge_deviation(compose(compose(a, b), d), compose(a, compose(b, d))));
  }
  const bool ok = identity_dev == 0.0 && inverse_weights < 1e-11 && inverse_elements < 1e-11 &&
                  closure_dev < 1e-11 && closure_members == 50 && assoc_dev < 1e-11;
  return {ok, fmt("identity %.1e (== 0), inverse weights %.2e / elements %.2e, closure %.2e with %d/50 "
                  "products in group, associativity %.2e (all < 1e-11)",
                  identity_dev, inverse_weights, inverse_elements, closure_dev, closure_members, assoc_dev)};
}

// 5. Layer norm commutes with rotations fixing the all-ones vector.
Outcome layer_norm_equivariance() {
  double worst = 0.0;
  int pairs = 0;
  const Index dims[] = {3, 4, 16, 64};
  for (int k = 0; k < 1000; ++k) {
    const Index d = dims[k % 4];
    RngStream rng(5000, static_cast<std::uint64_t>(k));
    const MatrixXd g = sample_ones_fixing_rotation(d, rng);
    const VectorXd x = sample_gaussian<double>(d, 1, rng, 1.0 + 9.0 * rng.uniform());
    worst = std::max(worst, max_abs(strict_layer_norm(g * x) - g * strict_layer_norm(x)));
    ++pairs;
  }
  return {worst < 1e-12, fmt("%d pairs, d_e in {3,4,16,64}: max |LN(gx) - g LN(x)| = %.3e (< 1e-12)", pairs, worst)};
}

// 6. Forward pass against the index-loop oracle.
Outcome oracle_equivalence() {
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const ModelConfig c = toy(k % 2 == 1);
    RngStream rng(6000, static_cast<std::uint64_t>(k));
    const auto w = sample_weights(c, 32, rng);
    const MatrixXd e0 = sample_embeddings(c, rng);
    worst = std::max(worst, max_normwise_deviation(stack_forward(e0, w, c), oracle::stack(e0, w, c)));
  }
  return {worst < 1e-12, fmt("20 instances: max relative deviation %.3e (< 1e-12)", worst)};
}

// 7. Extended architecture with identity skips, and per-block gauges.
Outcome extended_reduction() {
  double reduction_dev = 0.0;
  for (int k = 0; k < 20; ++k) {
    const ModelConfig std_c = toy(false);
    const ModelConfig ext_c = toy(true);
    RngStream rng(7000, static_cast<std::uint64_t>(k));
    const auto w = sample_weights(std_c, 32, rng);
    auto we = w;
    for (auto& blk : we.blocks) {
      blk.G = MatrixXd::Identity(16, 16);
      blk.G_bar = MatrixXd::Identity(16, 16);
    }
    const MatrixXd e0 = sample_embeddings(std_c, rng);
    reduction_dev = std::max(reduction_dev, max_abs(distributions(w, e0, std_c) - distributions(we, e0, ext_c)));
    reduction_dev = std::max(reduction_dev, max_abs(stack_forward(e0, w, std_c) - stack_forward(e0, we, ext_c)));
  }
  // Per-block gauges: distinct g0[b], g4[b] per block, already exercised by
  // the 100 extended trials of criterion 2.
  bool distinct = true;
  {
    RngStream rng(7100, 0);
    const auto g = sample_gauge(toy(true), rng);
    for (std::size_t b = 1; b < g.g0.size(); ++b) distinct = distinct && max_abs(g.g0[b] - g.g0[0]) > 1e-3;
    distinct = distinct && g.g0.size() == 3 && g.g4.size() == 3;
  }
  const bool ok = reduction_dev == 0.0 && distinct && extended_run.aggregate_max_rel_dev < 1e-10;
  return {ok, fmt("G = Gbar = I deviation %.1e (== 0); independent per-block gauges max rel dev %.3e (< 1e-10)",
                  reduction_dev, extended_run.aggregate_max_rel_dev)};
}

// 8. Head-space gauge fixing.
Outcome gauge_fixing() {
  double residual = 0.0, output_dev = 0.0;
  int all_fixed = 0;
  bool counts = true;
  for (int k = 0; k < 20; ++k) {
    const ModelConfig c = toy(k % 2 == 1);
    RngStream rng(8000, static_cast<std::uint64_t>(k));
    const auto w = sample_weights(c, 32, rng);
    const MatrixXd e0 = sample_embeddings(c, rng);
    const auto fixed = gauge_fix_heads(w, c);
    all_fixed += fixed.report.all_succeeded() &&
                 fixed.report.count(HeadFixStatus::Fixed) == 2 * c.n_t * c.n_h;
    counts = counts && fixed.report.parameters_eliminated() == 2LL * c.n_t * c.n_h * c.d_h * c.d_h;
    for (const auto& e : fixed.report.entries) residual = std::max(residual, e.identity_residual);
    output_dev = std::max(output_dev, max_elementwise_deviation(distributions(fixed.weights, e0, c),
                                                                distributions(w, e0, c)));
  }
  const bool ok = all_fixed == 20 && residual < 1e-12 && output_dev < 1e-10 && counts;
  return {ok, fmt("%d/20 sets fully fixed, identity residual %.3e (< 1e-12), output dev %.3e (< 1e-10), "
                  "eliminated = 2*n_t*n_h*d_h^2 = 192: %s",
                  all_fixed, residual, output_dev, counts ? "yes" : "no")};
}

// 9. Loss is flat along gauge directions and first order along a random one.
Outcome flatness() {
  TrialSpec spec;
  spec.config = toy(false);
  spec.seed = 9000;
  spec.tolerance = 1e-10;
  const std::vector<double> eps{1e-3, 1e-2, 1e-1};
  const auto r = run_flatness(spec, eps);
  bool ok = r.rows.size() == 3 && r.contrast_ratios.size() == 2;
  double gauge_worst = 0.0;
  for (const auto& row : r.rows) gauge_worst = std::max(gauge_worst, row.gauge_loss_dev);
  ok = ok && gauge_worst < 1e-10;
  for (double ratio : r.contrast_ratios) ok = ok && ratio >= 5.0 && ratio <= 20.0;
  return {ok, fmt("gauge |dloss| max %.3e (< 1e-10); random direction |dloss| %.3e, %.3e, %.3e, ratios %.2f, "
                  "%.2f (in [5, 20])",
                  gauge_worst, r.rows[0].contrast_loss_dev, r.rows[1].contrast_loss_dev,
                  r.rows[2].contrast_loss_dev, r.contrast_ratios.at(0), r.contrast_ratios.at(1))};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 redundancy table", table_reproduction},
      {"2 central invariance", central_invariance},
      {"3 negative control", negative_control},
      {"4 group axioms", group_axioms},
      {"5 layer-norm equivariance", layer_norm_equivariance},
      {"6 oracle equivalence", oracle_equivalence},
      {"7 extended-mode reduction", extended_reduction},
      {"8 gauge fixing", gauge_fixing},
      {"9 flatness", flatness},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %-26s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
