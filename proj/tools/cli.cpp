#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "tgauge/harness.hpp"
#include "tgauge/redundancy.hpp"
#include "tgauge/sampling.hpp"

namespace tgauge {

namespace {

struct ConfigFlags {
  ModelConfig config;
  std::string mode = "standard";
  std::string activation = "relu";

  void attach(CLI::App* cmd) {
    cmd->add_option("--de", config.d_e, "embedding dimension")->capture_default_str();
    cmd->add_option("--nh", config.n_h, "heads per block")->capture_default_str();
    cmd->add_option("--dh", config.d_h, "head dimension")->capture_default_str();
    cmd->add_option("--nt", config.n_t, "transformer blocks")->capture_default_str();
    cmd->add_option("--nc", config.n_c, "context length")->capture_default_str();
    cmd->add_option("--df", config.d_f, "feed-forward hidden dimension")->capture_default_str();
    cmd->add_option("--mode", mode, "standard | extended")
        ->check(CLI::IsMember({"standard", "extended"}))
        ->capture_default_str();
    cmd->add_option("--activation", activation, "relu | gelu | tanh")
        ->check(CLI::IsMember({"relu", "gelu", "tanh"}))
        ->capture_default_str();
    cmd->add_flag("--attn-scale", config.attn_scale, "scale attention scores by 1/sqrt(d_h)");
  }

  ModelConfig resolve() {
    config.extended = mode == "extended";
    config.activation = activation_from_string(activation);
    config.validate();
    return config;
  }
};

struct TrialFlags {
  ConfigFlags cfg;
  TrialSpec spec;
  long long vocab = 32;

  void attach(CLI::App* cmd) {
    cfg.attach(cmd);
    cmd->add_option("--trials", spec.trials, "number of seeded trials")->capture_default_str();
    cmd->add_option("--seed", spec.seed, "base seed")->capture_default_str();
    cmd->add_option("--tol", spec.tolerance, "pass tolerance")->capture_default_str();
    cmd->add_option("--max-cond", spec.condition_bound, "condition bound for head maps")
        ->capture_default_str();
    cmd->add_option("--vocab", vocab, "vocabulary size of the sampled unembedding")
        ->capture_default_str();
  }

  TrialSpec resolve() {
    spec.config = cfg.resolve();
    spec.vocab = static_cast<Index>(vocab);
    spec.validate();
    return spec;
  }
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string describe(const ModelConfig& c) {
  return "d_e=" + std::to_string(c.d_e) + " n_h=" + std::to_string(c.n_h) +
         " d_h=" + std::to_string(c.d_h) + " n_t=" + std::to_string(c.n_t) +
         " n_c=" + std::to_string(c.n_c) + " d_f=" + std::to_string(c.d_f) +
         " mode=" + (c.extended ? "extended" : "standard") +
         " activation=" + std::string(to_string(c.activation)) +
         (c.attn_scale ? " attn_scale" : "");
}

void print_redundancy_row(std::ostream& out, const RedundancyRow& r) {
  out << r.name << ": n_t=" << r.n_t << " n_h=" << r.n_h << " d_h=" << r.d_h << " d_e=" << r.d_e
      << "  redundancy " << r.redundancy << " (" << r.compact << ") of " << r.total_parameters
      << " parameters = " << r.percent << "%\n";
}

Json row_json(const RedundancyRow& r) {
  return Json{{"name", r.name},           {"n_t", r.n_t},
              {"n_h", r.n_h},             {"d_h", r.d_h},
              {"d_e", r.d_e},             {"redundancy", r.redundancy},
              {"head_term", head_redundancy(r.n_t, r.n_h, r.d_h)},
              {"rotation_term", rotation_redundancy(r.d_e)},
              {"compact", r.compact},     {"total_parameters", r.total_parameters},
              {"percent", r.percent}};
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gauge symmetry toolkit for transformer weights", "tgauge"};
  app.require_subcommand(1);
  bool json = false;
  app.add_flag("--json", json, "emit machine-readable JSON")->configurable(false);

  // verify
  TrialFlags verify;
  bool identity = false;
  bool no_control = false;
  auto* verify_cmd = app.add_subcommand("verify", "check output invariance under random gauge transformations");
  verify.attach(verify_cmd);
  verify_cmd->add_flag("--identity", identity, "use the identity gauge element");
  verify_cmd->add_flag("--no-control", no_control, "skip the unconstrained-rotation negative control");
  verify_cmd->add_flag("--json", json, "emit machine-readable JSON");

  // flatness
  TrialFlags flat;
  flat.spec.trials = 1;
  std::vector<double> eps{1e-3, 1e-2, 1e-1};
  auto* flat_cmd = app.add_subcommand("flatness", "loss along gauge-orbit steps vs a random direction");
  flat.attach(flat_cmd);
  flat_cmd->add_option("--eps", eps, "step sizes (comma separated)")->delimiter(',')->capture_default_str();
  flat_cmd->add_flag("--json", json, "emit machine-readable JSON");

  // redundancy
  std::string model;
  std::uint64_t rn_t = 0, rn_h = 0, rd_h = 0, rd_e = 0, params = 0;
  auto* red_cmd = app.add_subcommand("redundancy", "count redundant parameter directions");
  auto* model_opt = red_cmd->add_option("--model", model, "preset: gpt2 | gpt2-xl | llama-65b")
                        ->check(CLI::IsMember({"gpt2", "gpt2-xl", "llama-65b"}));
  auto* nt_opt = red_cmd->add_option("--nt", rn_t, "transformer blocks");
  auto* nh_opt = red_cmd->add_option("--nh", rn_h, "heads per block");
  auto* dh_opt = red_cmd->add_option("--dh", rd_h, "head dimension");
  auto* de_opt = red_cmd->add_option("--de", rd_e, "embedding dimension");
  auto* params_opt = red_cmd->add_option("--params", params, "total parameter count, for the percentage");
  for (auto* o : {nt_opt, nh_opt, dh_opt, de_opt, params_opt}) model_opt->excludes(o);
  red_cmd->add_flag("--json", json, "emit machine-readable JSON");

  // gauge-fix
  std::string in_path, out_path, gauge_out;
  std::uint64_t fix_seed = 0;
  auto* fix_cmd = app.add_subcommand("gauge-fix", "replace redundant head blocks of K and V with the identity");
  fix_cmd->add_option("--in", in_path, "input weight file")->required();
  fix_cmd->add_option("--out", out_path, "output weight file")->required();
  fix_cmd->add_option("--seed", fix_seed, "seed for the output-preservation check")->capture_default_str();
  fix_cmd->add_option("--gauge-out", gauge_out, "also write the gauge element used");
  fix_cmd->add_flag("--json", json, "emit machine-readable JSON");

  // sample-weights
  ConfigFlags sample_cfg;
  std::string sample_out;
  std::uint64_t sample_seed = 0;
  long long sample_vocab = 32;
  auto* sample_cmd = app.add_subcommand("sample-weights", "write a random weight file");
  sample_cfg.attach(sample_cmd);
  sample_cmd->add_option("--out", sample_out, "output weight file")->required();
  sample_cmd->add_option("--seed", sample_seed, "seed")->capture_default_str();
  sample_cmd->add_option("--vocab", sample_vocab, "vocabulary size")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return kExitPass;
    if (args.empty()) err << app.help();
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (verify_cmd->parsed()) {
      TrialSpec spec = verify.resolve();
      spec.identity_gauge = identity;
      spec.negative_control = !no_control;
      const VerificationReport r = run_invariance(spec);
      if (json) {
        out << dump_json(to_json(r)) << '\n';
      } else {
        out << "verify: " << describe(spec.config) << "\n"
            << "  trials=" << spec.trials << " seed=" << spec.seed << " tol=" << sci(spec.tolerance)
            << " max_cond=" << sci(spec.condition_bound) << " vocab=" << spec.vocab << "\n"
            << "  aggregate max relative deviation: " << sci(r.aggregate_max_rel_dev) << "\n"
            << "  aggregate max loss deviation:     " << sci(r.aggregate_loss_abs_dev) << "\n";
        if (spec.negative_control)
          out << "  negative control (unconstrained rotation): " << r.negative_control_exceeding << "/"
              << spec.trials << " trials deviate > " << sci(kNegativeControlThreshold)
              << ", min deviation " << sci(r.negative_control_min_dev) << "\n";
        out << "  degenerate draws retried: " << r.total_retries << "\n"
            << (r.pass ? "PASS" : "FAIL") << "\n";
      }
      return r.pass ? kExitPass : kExitVerificationFailed;
    }

    if (flat_cmd->parsed()) {
      const TrialSpec spec = flat.resolve();
      const FlatnessReport r = run_flatness(spec, eps);
      if (json) {
        out << dump_json(to_json(r)) << '\n';
      } else {
        out << "flatness: " << describe(spec.config) << " seed=" << spec.seed << "\n"
            << "  base loss " << r.base_loss << "\n"
            << "  eps         gauge |dloss|   random |dloss|\n";
        for (const auto& row : r.rows)
          out << "  " << sci(row.eps) << "  " << sci(row.gauge_loss_dev) << "      "
              << sci(row.contrast_loss_dev) << "\n";
        out << "  gauge direction flat (< " << sci(spec.tolerance) << "): " << (r.gauge_flat ? "yes" : "no")
            << "\n  random direction first order: " << (r.contrast_first_order ? "yes" : "no") << "\n"
            << (r.pass ? "PASS" : "FAIL") << "\n";
      }
      return r.pass ? kExitPass : kExitVerificationFailed;
    }

    if (red_cmd->parsed()) {
      std::vector<RedundancyRow> rows;
      if (!model.empty()) {
        rows.push_back(redundancy_report(*find_preset(model)));
      } else if (*nt_opt || *nh_opt || *dh_opt || *de_opt) {
        if (!(*nt_opt && *nh_opt && *dh_opt && *de_opt)) {
          err << "redundancy: --nt, --nh, --dh and --de must be given together\n";
          return kExitUsage;
        }
        if (*params_opt) {
          rows.push_back(redundancy_report(rn_t, rn_h, rd_h, rd_e, params));
        } else {
          RedundancyRow row;
          row.name = "custom";
          row.n_t = rn_t;
          row.n_h = rn_h;
          row.d_h = rd_h;
          row.d_e = rd_e;
          row.redundancy = redundancy_count(rn_t, rn_h, rd_h, rd_e);
          row.compact = compact_count(row.redundancy);
          if (json) {
            Json j = row_json(row);
            j.erase("total_parameters");
            j.erase("percent");
            out << dump_json(j) << '\n';
          } else {
            out << "custom: n_t=" << rn_t << " n_h=" << rn_h << " d_h=" << rd_h << " d_e=" << rd_e
                << "  redundancy " << row.redundancy << " (" << row.compact << ")\n";
          }
          return kExitPass;
        }
      } else {
        for (const auto& p : model_presets()) rows.push_back(redundancy_report(p));
      }
      if (json) {
        if (rows.size() == 1) {
          out << dump_json(row_json(rows.front())) << '\n';
        } else {
          Json arr = Json::array();
          for (const auto& r : rows) arr.push_back(row_json(r));
          out << dump_json(Json{{"models", arr}}) << '\n';
        }
      } else {
        for (const auto& r : rows) print_redundancy_row(out, r);
      }
      return kExitPass;
    }

    if (fix_cmd->parsed()) {
      const GaugeFixRun run = run_gauge_fix(in_path, out_path, fix_seed);
      if (!gauge_out.empty()) {
        std::ofstream g(gauge_out, std::ios::binary | std::ios::trunc);
        if (!g) throw Error("cannot open '" + gauge_out + "' for writing");
        g << dump_json(gauge_to_json(run.gauge)) << '\n';
      }
      if (json) {
        Json j = to_json(run);
        j.erase("gauge");
        out << dump_json(j) << '\n';
      } else {
        const auto& r = run.report;
        out << "gauge-fix: " << in_path << " -> " << out_path << "\n"
            << "  " << describe(run.config) << "\n";
        for (const auto& e : r.entries) {
          out << "  block " << e.block << " head " << e.head << " " << e.matrix << ": "
              << to_string(e.status) << " pivots [";
          for (std::size_t k = 0; k < e.pivots.size(); ++k) out << (k ? " " : "") << e.pivots[k];
          out << "] cond " << sci(e.pivot_condition);
          if (e.status == HeadFixStatus::Fixed) out << " residual " << sci(e.identity_residual);
          out << "\n";
        }
        out << "  parameters eliminated: " << r.parameters_eliminated() << " ("
            << r.parameters_newly_eliminated() << " new)\n"
            << "  rank-deficient heads: " << r.count(HeadFixStatus::RankDeficient) << "\n"
            << "  output check on " << run.checks << " random inputs: max deviation "
            << sci(run.max_output_dev) << "\n"
            << (run.pass ? "PASS" : "FAIL") << "\n";
      }
      return run.pass ? kExitPass : kExitVerificationFailed;
    }

    if (sample_cmd->parsed()) {
      const ModelConfig config = sample_cfg.resolve();
      RngStream rng(sample_seed, 0);
      write_weight_file(sample_out, WeightFile{config, sample_weights(config, sample_vocab, rng)});
      out << "wrote " << sample_out << " (" << describe(config) << ", vocab " << sample_vocab << ")\n";
      return kExitPass;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace tgauge
