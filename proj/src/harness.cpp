#include "tgauge/harness.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tgauge/sampling.hpp"

namespace tgauge {

void TrialSpec::validate() const {
  config.validate();
  if (trials < 1) throw ShapeMismatch("trials must be >= 1");
  if (!(tolerance > 0.0)) throw ShapeMismatch("tolerance must be > 0");
  if (!(condition_bound > 1.0)) throw ShapeMismatch("condition bound must be > 1");
  if (vocab < 1) throw ShapeMismatch("vocab must be >= 1");
}

namespace {

struct TrialDraw {
  WeightSet<double> weights;
  MatrixXd e0;
  std::vector<int> targets;
  MatrixXd probs;
  double loss = 0.0;
};

/// Draws weights and inputs until the forward pass succeeds.
TrialDraw draw_trial(const TrialSpec& spec, RngStream& rng, int& retries) {
  for (int attempt = 0;; ++attempt) {
    TrialDraw d;
    d.weights = sample_weights(spec.config, spec.vocab, rng);
    d.e0 = sample_embeddings(spec.config, rng);
    d.targets = sample_targets(spec.config, spec.vocab, rng);
    try {
      d.probs = next_token_distribution(stack_forward(d.e0, d.weights, spec.config), d.weights.U);
      d.loss = surrogate_loss(d.weights, d.e0, d.targets, spec.config);
      return d;
    } catch (const DegenerateInput&) {
      if (attempt + 1 >= kTrialRetryBudget)
        throw Error("trial exceeded the retry budget of " + std::to_string(kTrialRetryBudget) +
                    " degenerate draws");
      ++retries;
    }
  }
}

/// Deviation of the gauged model's distributions from the originals. A
/// degenerate gauged forward pass counts as infinite deviation.
double gauged_deviation(const TrialSpec& spec, const TrialDraw& d, const GaugeElement<double>& g,
                        double* loss_dev) {
  const WeightSet<double> w2 = apply_gauge(d.weights, g, spec.config);
  const MatrixXd e2 = transform_embeddings(d.e0, g);
  try {
    const MatrixXd p2 = next_token_distribution(stack_forward(e2, w2, spec.config), w2.U);
    if (loss_dev) *loss_dev = std::abs(surrogate_loss(w2, e2, d.targets, spec.config) - d.loss);
    return max_elementwise_deviation(p2, d.probs);
  } catch (const DegenerateInput&) {
    if (loss_dev) *loss_dev = std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

VerificationReport run_invariance(const TrialSpec& spec) {
  spec.validate();
  VerificationReport report;
  report.spec = spec;
  report.negative_control_min_dev = std::numeric_limits<double>::infinity();
  for (int t = 0; t < spec.trials; ++t) {
    RngStream rng(spec.seed, static_cast<std::uint64_t>(t));
    TrialResult result;
    result.index = t;
    const TrialDraw draw = draw_trial(spec, rng, result.retries);
    const GaugeElement<double> g = spec.identity_gauge
                                       ? identity_gauge<double>(spec.config)
                                       : sample_gauge<double>(spec.config, rng, spec.condition_bound);
    result.max_rel_dev = gauged_deviation(spec, draw, g, &result.loss_abs_dev);
    if (spec.negative_control) {
      // Same head maps, but rotations drawn from all of SO(d_e).
      GaugeElement<double> bad = g;
      for (auto& r : bad.g0) r = sample_rotation<double>(spec.config.d_e, rng);
      for (auto& r : bad.g4) r = sample_rotation<double>(spec.config.d_e, rng);
      result.negative_control_dev = gauged_deviation(spec, draw, bad, nullptr);
      report.negative_control_exceeding += result.negative_control_dev > kNegativeControlThreshold;
      report.negative_control_min_dev =
          std::min(report.negative_control_min_dev, result.negative_control_dev);
    }
    report.aggregate_max_rel_dev = std::max(report.aggregate_max_rel_dev, result.max_rel_dev);
    report.aggregate_loss_abs_dev = std::max(report.aggregate_loss_abs_dev, result.loss_abs_dev);
    report.total_retries += result.retries;
    report.trials.push_back(result);
  }
  if (!spec.negative_control) report.negative_control_min_dev = 0.0;
  report.pass = report.aggregate_max_rel_dev < spec.tolerance;
  return report;
}

MatrixXd sample_rotation_generator(Index d, RngStream& rng) {
  const MatrixXd a = sample_gaussian<double>(d - 1, d - 1, rng, 1.0 / std::sqrt(double(d - 1)));
  const MatrixXd s = a - a.transpose();
  const MatrixXd b = complement_basis<double>(d);
  return b * s * b.transpose();
}

GaugeDirection sample_gauge_direction(const ModelConfig& config, RngStream& rng) {
  const GaugeElement<double> shape = identity_gauge<double>(config);
  GaugeDirection dir;
  for (std::size_t i = 0; i < shape.g0.size(); ++i)
    dir.x0.push_back(sample_rotation_generator(config.d_e, rng));
  for (std::size_t i = 0; i < shape.g4.size(); ++i)
    dir.x4.push_back(sample_rotation_generator(config.d_e, rng));
  const double scale = 1.0 / std::sqrt(double(config.d_h));
  for (std::size_t b = 0; b < shape.h1.size(); ++b) {
    dir.y1.emplace_back();
    dir.y3.emplace_back();
    for (std::size_t a = 0; a < shape.h1[b].size(); ++a) {
      dir.y1.back().push_back(sample_gaussian<double>(config.d_h, config.d_h, rng, scale));
      dir.y3.back().push_back(sample_gaussian<double>(config.d_h, config.d_h, rng, scale));
    }
  }
  return dir;
}

GaugeElement<double> gauge_step(const GaugeDirection& dir, double eps) {
  const auto step = [eps](const MatrixXd& x) -> MatrixXd { return (eps * x).exp(); };
  GaugeElement<double> g;
  for (const auto& x : dir.x0) g.g0.push_back(step(x));
  for (const auto& x : dir.x4) g.g4.push_back(step(x));
  for (const auto& heads : dir.y1) {
    g.h1.emplace_back();
    for (const auto& y : heads) g.h1.back().push_back(step(y));
  }
  for (const auto& heads : dir.y3) {
    g.h3.emplace_back();
    for (const auto& y : heads) g.h3.back().push_back(step(y));
  }
  return g;
}

namespace {

/// Random weight-space direction with unit total Frobenius norm.
WeightSet<double> sample_unit_direction(const WeightSet<double>& like, RngStream& rng) {
  WeightSet<double> d = like;
  double sq = 0.0;
  const auto fill = [&](MatrixXd& m) {
    m = sample_gaussian<double>(m.rows(), m.cols(), rng);
    sq += m.squaredNorm();
  };
  for (auto& blk : d.blocks) {
    for (auto& m : blk.Q) fill(m);
    for (auto& m : blk.K) fill(m);
    for (auto& m : blk.V) fill(m);
    fill(blk.L);
    fill(blk.W);
    fill(blk.W_hat);
    if (blk.G) fill(*blk.G);
    if (blk.G_bar) fill(*blk.G_bar);
  }
  fill(d.U);
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& blk : d.blocks) {
    for (auto* set : {&blk.Q, &blk.K, &blk.V})
      for (auto& m : *set) m *= inv;
    blk.L *= inv;
    blk.W *= inv;
    blk.W_hat *= inv;
    if (blk.G) *blk.G *= inv;
    if (blk.G_bar) *blk.G_bar *= inv;
  }
  d.U *= inv;
  return d;
}

WeightSet<double> axpy(const WeightSet<double>& w, double eps, const WeightSet<double>& d) {
  WeightSet<double> out = w;
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    auto& o = out.blocks[b];
    const auto& s = d.blocks[b];
    for (std::size_t a = 0; a < o.Q.size(); ++a) {
      o.Q[a] += eps * s.Q[a];
      o.K[a] += eps * s.K[a];
      o.V[a] += eps * s.V[a];
    }
    o.L += eps * s.L;
    o.W += eps * s.W;
    o.W_hat += eps * s.W_hat;
    if (o.G) *o.G += eps * *s.G;
    if (o.G_bar) *o.G_bar += eps * *s.G_bar;
  }
  out.U += eps * d.U;
  return out;
}

}  // namespace

FlatnessReport run_flatness(const TrialSpec& spec, std::span<const double> eps) {
  spec.validate();
  if (eps.empty()) throw ShapeMismatch("flatness: at least one eps required");
  for (double e : eps)
    if (!(e >= 0.0) || !std::isfinite(e)) throw ShapeMismatch("flatness: eps must be finite and >= 0");

  FlatnessReport report;
  report.spec = spec;
  RngStream rng(spec.seed, 0);
  int retries = 0;
  const TrialDraw draw = draw_trial(spec, rng, retries);
  const GaugeDirection dir = sample_gauge_direction(spec.config, rng);
  const WeightSet<double> contrast = sample_unit_direction(draw.weights, rng);
  report.base_loss = draw.loss;

  for (double e : eps) {
    FlatnessRow row;
    row.eps = e;
    const GaugeElement<double> g = gauge_step(dir, e);
    const WeightSet<double> wg = apply_gauge(draw.weights, g, spec.config);
    row.gauge_loss_dev =
        std::abs(surrogate_loss(wg, transform_embeddings(draw.e0, g), draw.targets, spec.config) -
                 draw.loss);
    row.contrast_loss_dev = std::abs(
        surrogate_loss(axpy(draw.weights, e, contrast), draw.e0, draw.targets, spec.config) -
        draw.loss);
    report.rows.push_back(row);
  }

  report.gauge_flat = std::all_of(report.rows.begin(), report.rows.end(), [&](const FlatnessRow& r) {
    return r.gauge_loss_dev < spec.tolerance;
  });
  report.contrast_first_order = true;
  for (std::size_t k = 0; k + 1 < report.rows.size(); ++k) {
    const auto& lo = report.rows[k];
    const auto& hi = report.rows[k + 1];
    if (lo.eps == 0.0 || hi.eps == 0.0) continue;
    const double ratio = hi.contrast_loss_dev / lo.contrast_loss_dev;
    report.contrast_ratios.push_back(ratio);
    const double expected = hi.eps / lo.eps;
    if (!(ratio >= 0.5 * expected && ratio <= 2.0 * expected)) report.contrast_first_order = false;
  }
  report.pass = report.gauge_flat && report.contrast_first_order;
  return report;
}

GaugeFixRun run_gauge_fix(const std::filesystem::path& in, const std::filesystem::path& out,
                          std::uint64_t seed, int checks, double tolerance) {
  const WeightFile file = read_weight_file(in);
  GaugeFixResult<double> fixed = gauge_fix_heads(file.weights, file.config);
  GaugeFixRun run;
  run.config = file.config;
  run.report = fixed.report;
  run.gauge = fixed.gauge;
  run.checks = checks;
  run.tolerance = tolerance;
  for (int i = 0; i < checks; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    const MatrixXd e0 = sample_embeddings(file.config, rng);
    const MatrixXd p = next_token_distribution(stack_forward(e0, file.weights, file.config), file.weights.U);
    const MatrixXd q = next_token_distribution(stack_forward(e0, fixed.weights, file.config), fixed.weights.U);
    run.max_output_dev = std::max(run.max_output_dev, max_elementwise_deviation(q, p));
  }
  run.pass = run.max_output_dev < tolerance;
  write_weight_file(out, WeightFile{file.config, fixed.weights});
  return run;
}

Json to_json(const TrialSpec& spec) {
  return Json{{"config", config_to_json(spec.config)},
              {"mode", spec.config.extended ? "extended" : "standard"},
              {"trials", spec.trials},
              {"seed", spec.seed},
              {"tolerance", spec.tolerance},
              {"condition_bound", spec.condition_bound},
              {"vocab", spec.vocab},
              {"identity_gauge", spec.identity_gauge},
              {"negative_control", spec.negative_control}};
}

namespace {

Json environment() {
  return Json{{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                            "." + std::to_string(EIGEN_MINOR_VERSION)},
              {"scalar", "float64"},
              {"rng", "mt19937_64 seeded from (seed, stream) via splitmix64 + seed_seq; polar normals"}};
}

// JSON has no infinity; report it as a string so the document stays valid.
Json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

}  // namespace

Json to_json(const VerificationReport& r) {
  Json trials = Json::array();
  for (const auto& t : r.trials) {
    Json j{{"index", t.index},
           {"stream", t.index},
           {"max_rel_dev", number(t.max_rel_dev)},
           {"loss_abs_dev", number(t.loss_abs_dev)},
           {"retries", t.retries}};
    if (r.spec.negative_control) j["negative_control_dev"] = number(t.negative_control_dev);
    trials.push_back(std::move(j));
  }
  Json out{{"spec", to_json(r.spec)},
           {"environment", environment()},
           {"trials", std::move(trials)},
           {"aggregate_max_rel_dev", number(r.aggregate_max_rel_dev)},
           {"aggregate_loss_abs_dev", number(r.aggregate_loss_abs_dev)},
           {"total_retries", r.total_retries},
           {"pass", r.pass}};
  if (r.spec.negative_control)
    out["negative_control"] = Json{{"threshold", kNegativeControlThreshold},
                                   {"trials_exceeding", r.negative_control_exceeding},
                                   {"min_dev", number(r.negative_control_min_dev)}};
  return out;
}

Json to_json(const FlatnessReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back(Json{{"eps", row.eps},
                        {"gauge_loss_dev", number(row.gauge_loss_dev)},
                        {"contrast_loss_dev", number(row.contrast_loss_dev)}});
  Json ratios = Json::array();
  for (double x : r.contrast_ratios) ratios.push_back(number(x));
  return Json{{"spec", to_json(r.spec)},
              {"environment", environment()},
              {"base_loss", r.base_loss},
              {"rows", std::move(rows)},
              {"contrast_ratios", std::move(ratios)},
              {"gauge_flat", r.gauge_flat},
              {"contrast_first_order", r.contrast_first_order},
              {"pass", r.pass}};
}

Json to_json(const GaugeFixReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json pivots = Json::array();
    for (Index p : e.pivots) pivots.push_back(p);
    entries.push_back(Json{{"block", e.block},
                           {"head", e.head},
                           {"matrix", std::string(1, e.matrix)},
                           {"status", std::string(to_string(e.status))},
                           {"pivots", std::move(pivots)},
                           {"pivot_condition", number(e.pivot_condition)},
                           {"identity_residual", e.identity_residual}});
  }
  return Json{{"entries", std::move(entries)},
              {"pivot_threshold", r.pivot_threshold},
              {"heads_fixed", r.count(HeadFixStatus::Fixed)},
              {"heads_already_canonical", r.count(HeadFixStatus::AlreadyCanonical)},
              {"heads_rank_deficient", r.count(HeadFixStatus::RankDeficient)},
              {"parameters_eliminated", r.parameters_eliminated()},
              {"parameters_newly_eliminated", r.parameters_newly_eliminated()}};
}

Json to_json(const GaugeFixRun& r) {
  return Json{{"config", config_to_json(r.config)},
              {"report", to_json(r.report)},
              {"gauge", gauge_to_json(r.gauge)},
              {"checks", r.checks},
              {"tolerance", r.tolerance},
              {"max_output_dev", number(r.max_output_dev)},
              {"pass", r.pass}};
}

}  // namespace tgauge
