// Command-line driver: data generation, training, evaluation, ablations,
// gradient checks and report re-parsing.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "iag/baselines.hpp"
#include "iag/error.hpp"
#include "iag/evaluation.hpp"
#include "iag/gradcheck.hpp"
#include "iag/runtime.hpp"
#include "iag/training.hpp"
#include "iag/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("iag");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  const char* env = std::getenv("IAG_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::set_level(spdlog::level::info);
}

iag::Dims parse_dims(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, 'x')) parts.push_back(std::stoul(item));
  if (parts.size() != 3) throw iag::InvalidArgument("dims must look like DxHxW, got '" + text + "'");
  return {parts[0], parts[1], parts[2]};
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  if (out.empty()) throw iag::InvalidArgument("no seeds given");
  return out;
}

// Flags shared by train and ablate.
struct TrainFlags {
  double beta = 20.0;
  double lr = 1e-2;
  double gamma = 0.99;
  std::size_t decay_interval = 0;
  std::size_t iters = 3000;
  std::uint64_t seed = 0;
  std::size_t width = 16;
  std::size_t depth = 3;
  double momentum = 0.0;
  double clip_norm = 10.0;
  std::string norm = "l1";
  std::string variant = "full";
  double lambda_const = 1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--beta", beta, "weight of the local objective")->capture_default_str();
    cmd->add_option("--lr", lr, "initial learning rate")->capture_default_str();
    cmd->add_option("--gamma", gamma, "learning-rate decay factor")->capture_default_str();
    cmd->add_option("--decay-interval", decay_interval, "iterations between decays (0 = iters/100)")
        ->capture_default_str();
    cmd->add_option("--iters", iters, "training iterations")->capture_default_str();
    cmd->add_option("--width", width, "backbone channel width C")->capture_default_str();
    cmd->add_option("--depth", depth, "number of conv layers")->capture_default_str();
    cmd->add_option("--momentum", momentum, "heavy-ball momentum (0 = plain SGD)")->capture_default_str();
    cmd->add_option("--clip-norm", clip_norm, "clip the gradient L2 norm to this value (0 = off)")
        ->capture_default_str();
    cmd->add_option("--norm", norm, "separation cost: l1 or squared")
        ->check(CLI::IsMember({"l1", "squared"}))
        ->capture_default_str();
    cmd->add_option("--lambda-const", lambda_const, "lambda for the const_lambda variant")->capture_default_str();
  }

  iag::TrainConfig config() const {
    iag::TrainConfig c;
    c.beta = beta;
    c.lr = lr;
    c.decay_gamma = gamma;
    c.decay_interval = decay_interval;
    c.max_iters = iters;
    c.seed = seed;
    c.momentum = momentum;
    c.clip_norm = clip_norm;
    c.separation_norm = norm == "squared" ? iag::DeviationNorm::Squared : iag::DeviationNorm::L1;
    c.backbone.width = width;
    c.backbone.depth = depth;
    c.variant.variant = iag::parse_variant(variant);
    c.variant.lambda_const = lambda_const;
    return c;
  }
};

json config_json(const iag::TrainConfig& c) {
  return {{"beta", c.beta},
          {"lr", c.lr},
          {"decay_gamma", c.decay_gamma},
          {"decay_interval", c.effective_decay_interval()},
          {"max_iters", c.max_iters},
          {"seed", c.seed},
          {"slice_interval", {c.min_slice_interval, c.max_slice_interval}},
          {"momentum", c.momentum},
          {"clip_norm", c.clip_norm},
          {"separation_norm", c.separation_norm == iag::DeviationNorm::L1 ? "l1" : "squared"},
          {"backbone", {{"depth", c.backbone.depth}, {"width", c.backbone.width}, {"kernel", c.backbone.kernel}}},
          {"variant", std::string(iag::variant_name(c.variant.variant))},
          {"lambda_const", c.variant.lambda_const}};
}

void print_report(const iag::MetricsReport& r) {
  if (r.dsc)
    std::cout << "DSC mean " << r.dsc->mean << " std " << r.dsc->std << " max " << r.dsc->max << " median "
              << r.dsc->median << " (" << r.dsc->count << " cases)\n";
  else
    std::cout << "DSC absent (no ground-truth positive cases)\n";
  const auto& c = r.classification;
  std::cout << "sensitivity " << (c.sensitivity ? std::to_string(*c.sensitivity) : "undefined") << " specificity "
            << (c.specificity ? std::to_string(*c.specificity) : "undefined") << " (TP " << c.counts.tp << " FN "
            << c.counts.fn << " TN " << c.counts.tn << " FP " << c.counts.fp << ")\n";
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const fs::path& out, const iag::GeneratorConfig& cfg) {
  spdlog::info("gen-data config {}", json{{"out", out.string()},
                                          {"num", cfg.count},
                                          {"pos_frac", cfg.positive_fraction},
                                          {"labeled_frac", cfg.labeled_fraction},
                                          {"dims", {cfg.dims.depth, cfg.dims.height, cfg.dims.width}},
                                          {"seed", cfg.seed}}
                                         .dump());
  const auto samples = iag::generate_dataset(cfg);
  const auto manifest = iag::write_dataset(samples, cfg, out);
  std::cout << "wrote " << manifest.records.size() << " samples: " << manifest.labeled_positives()
            << " labeled positives, " << manifest.unlabeled_positives() << " unlabeled positives, "
            << manifest.negatives() << " negatives\n";
  return kOk;
}

int cmd_train(const fs::path& data, const fs::path& out, const fs::path& loss_csv, const iag::TrainConfig& cfg) {
  spdlog::info("train config {}", config_json(cfg).dump());
  const auto dataset = iag::load_dataset(data);
  const auto state = iag::train(dataset, cfg, nullptr, [](const iag::TrainState& s) {
    if (s.iteration % 100 == 0) {
      const auto& r = s.history.back();
      spdlog::debug("iter {} l_G {:.5f} l_att+l_L^l {:.3f} l_L^u {:.5f} lr {:.3g}", r.iteration, r.global_loss,
                    r.labeled_local_loss, r.unlabeled_local_loss, r.lr);
    }
  });
  iag::save_params(state.params, out);
  if (!loss_csv.empty()) iag::write_loss_history(state.history, loss_csv);
  spdlog::info("trained {} iterations ({} unlabeled-branch visits, {} degenerate separations)", state.iteration,
               state.unlabeled_branch_count, state.skipped_separations);
  std::cout << "model written to " << out.string() << '\n';
  return kOk;
}

int cmd_eval(const fs::path& data, const fs::path& model, const fs::path& out, const std::string& variant,
             bool no_gate) {
  iag::VariantConfig vc;
  vc.variant = iag::parse_variant(variant);
  auto options = iag::eval_options_for(vc);
  options.gate_on_image_label = !no_gate;
  spdlog::info("eval config {}", json{{"data", data.string()},
                                      {"model", model.string()},
                                      {"variant", variant},
                                      {"gate_on_image_label", options.gate_on_image_label}}
                                     .dump());
  const auto params = iag::load_params(model);
  const auto test = iag::load_dataset(data);
  auto report = iag::evaluate(test, params, options);
  report.config = json{{"model", model.string()}, {"data", data.string()}, {"variant", variant}}.dump();
  iag::emit_report(report, out);
  print_report(report);
  return kOk;
}

int cmd_ablate(const fs::path& data, const fs::path& test, const fs::path& out, TrainFlags flags,
               const std::string& seeds_text, long labeled_count, long unlabeled_count) {
  auto train_set = iag::load_dataset(data);
  const auto test_set = iag::load_dataset(test);
  if (labeled_count >= 0 || unlabeled_count >= 0) {
    const auto counts = iag::count_positives(train_set);
    train_set = iag::subset_supervision(
        train_set, labeled_count >= 0 ? static_cast<std::size_t>(labeled_count) : counts.labeled,
        unlabeled_count >= 0 ? static_cast<std::size_t>(unlabeled_count) : counts.unlabeled);
  }
  const auto seeds = parse_seeds(seeds_text);
  const std::string variant = flags.variant;

  json summary = {{"variant", variant}, {"runs", json::array()}};
  double sum_full = 0.0, sum_variant = 0.0;
  for (auto seed : seeds) {
    flags.seed = seed;
    std::vector<std::string> names{"full"};
    if (variant != "full") names.push_back(variant);
    for (const auto& name : names) {
      flags.variant = name;
      const auto cfg = flags.config();
      spdlog::info("ablate run config {}", config_json(cfg).dump());
      auto run = iag::run_variant(train_set, test_set, cfg);
      run.report.config = config_json(cfg).dump();
      iag::emit_report(run.report, out / name / ("seed_" + std::to_string(seed)));
      const double mean_dsc = run.report.dsc ? run.report.dsc->mean : 0.0;
      (name == "full" ? sum_full : sum_variant) += mean_dsc;
      summary["runs"].push_back({{"seed", seed},
                                 {"variant", name},
                                 {"mean_dsc", mean_dsc},
                                 {"sensitivity", run.report.classification.sensitivity.value_or(-1.0)},
                                 {"specificity", run.report.classification.specificity.value_or(-1.0)}});
      std::cout << "seed " << seed << " " << name << " mean DSC " << mean_dsc << '\n';
    }
  }
  const double n = static_cast<double>(seeds.size());
  summary["mean_dsc_full"] = sum_full / n;
  summary["mean_dsc_variant"] = variant == "full" ? sum_full / n : sum_variant / n;
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream(out / "ablation.json") << summary.dump(2) << '\n';
  std::cout << "full mean DSC " << summary["mean_dsc_full"].get<double>() << ", " << variant << " mean DSC "
            << summary["mean_dsc_variant"].get<double>() << '\n';
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t width, const std::string& variant, double tolerance) {
  iag::GeneratorConfig gen;
  gen.count = 4;
  gen.positive_fraction = 0.5;
  gen.labeled_fraction = 0.5;
  gen.dims = {4, 8, 8};
  gen.seed = seed;
  const auto samples = iag::generate_dataset(gen);
  iag::BackboneConfig bb;
  bb.width = width;
  const auto params = iag::init_params(bb, seed);
  iag::VariantConfig vc;
  vc.variant = iag::parse_variant(variant);
  const auto paths = iag::apply_variant(vc);
  const auto counts = iag::count_positives(samples);
  spdlog::info("gradcheck config {}", json{{"seed", seed}, {"width", width}, {"variant", variant}}.dump());

  double worst = 0.0;
  for (const auto& s : samples) {
    const auto slices = iag::all_slices(s);
    const auto r = iag::check_sample_gradients(s, params, slices, paths, counts, 20.0);
    const char* kind = !s.positive() ? "negative" : s.has_voxel_labels ? "labeled positive" : "unlabeled positive";
    std::cout << s.id << " (" << kind << "): " << r.checked << " entries, max rel err " << r.max_rel_error << " at "
              << r.worst << " (analytic " << r.worst_analytic << ", numeric " << r.worst_numeric << "), " << r.kink_skipped << " kink probes skipped\n";
    worst = std::max(worst, r.max_rel_error);
  }
  std::cout << "max relative error " << worst << (worst < tolerance ? " PASS" : " FAIL") << '\n';
  return worst < tolerance ? kOk : kNumeric;
}

int cmd_report(const fs::path& in) {
  const auto report = iag::parse_report(in);
  print_report(report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  iag::tune_allocator();
  CLI::App app{"Attention-guided partially supervised segmentation lab"};
  app.require_subcommand(1);

  iag::GeneratorConfig gen;
  std::string gen_out, gen_dims = "12x24x24";
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic phantom dataset");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_option("--num", gen.count, "number of volumes")->capture_default_str();
  gen_cmd->add_option("--pos-frac", gen.positive_fraction, "fraction of volumes with a lesion")->capture_default_str();
  gen_cmd->add_option("--labeled-frac", gen.labeled_fraction, "fraction of positives with voxel labels")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--dims", gen_dims, "volume size DxHxW")->capture_default_str();
  gen_cmd->add_option("--prefix", gen.id_prefix, "sample id prefix")->capture_default_str();

  TrainFlags train_flags;
  std::string train_data, train_out, train_loss_csv;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--data", train_data, "training dataset directory")->required();
  train_cmd->add_option("--out", train_out, "model file to write")->required();
  train_cmd->add_option("--loss-csv", train_loss_csv, "write the loss history here");
  train_cmd->add_option("--seed", train_flags.seed, "initialisation and sampling seed")->capture_default_str();
  train_cmd->add_option("--variant", train_flags.variant, "loss variant")->capture_default_str();
  train_flags.attach(train_cmd);

  std::string eval_data, eval_model, eval_out, eval_variant = "full";
  bool eval_no_gate = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a dataset");
  eval_cmd->add_option("--data", eval_data, "test dataset directory")->required();
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--out", eval_out, "report directory")->required();
  eval_cmd->add_option("--variant", eval_variant, "variant the model was trained with")->capture_default_str();
  eval_cmd->add_flag("--no-gate", eval_no_gate, "segment volumes regardless of the image-level prediction");

  TrainFlags ablate_flags;
  std::string ablate_data, ablate_test, ablate_out, ablate_seeds = "1,2,3,4,5";
  long labeled_count = -1, unlabeled_count = -1;
  auto* ablate_cmd = app.add_subcommand("ablate", "compare a variant against the full model across seeds");
  ablate_cmd->add_option("--variant", ablate_flags.variant, "variant to compare")->required();
  ablate_cmd->add_option("--data", ablate_data, "training dataset directory")->required();
  ablate_cmd->add_option("--test", ablate_test, "test dataset directory")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  ablate_cmd->add_option("--seeds", ablate_seeds, "comma-separated seeds")->capture_default_str();
  ablate_cmd->add_option("--labeled-count", labeled_count, "voxel-labeled positives to keep");
  ablate_cmd->add_option("--unlabeled-count", unlabeled_count, "unlabeled positives to keep");
  ablate_flags.attach(ablate_cmd);

  std::uint64_t gc_seed = 1;
  std::size_t gc_width = 4;
  std::string gc_variant = "full";
  double gc_tol = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full objective on toy volumes");
  gc_cmd->add_option("--seed", gc_seed, "seed")->capture_default_str();
  gc_cmd->add_option("--width", gc_width, "channel width")->capture_default_str();
  gc_cmd->add_option("--variant", gc_variant, "loss variant")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_tol, "maximum relative error")->capture_default_str();

  std::string report_in;
  auto* report_cmd = app.add_subcommand("report", "re-parse a report directory and recompute its statistics");
  report_cmd->add_option("--in", report_in, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) {
      gen.dims = parse_dims(gen_dims);
      return cmd_gen_data(gen_out, gen);
    }
    if (*train_cmd) return cmd_train(train_data, train_out, train_loss_csv, train_flags.config());
    if (*eval_cmd) return cmd_eval(eval_data, eval_model, eval_out, eval_variant, eval_no_gate);
    if (*ablate_cmd)
      return cmd_ablate(ablate_data, ablate_test, ablate_out, ablate_flags, ablate_seeds, labeled_count,
                        unlabeled_count);
    if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_width, gc_variant, gc_tol);
    if (*report_cmd) return cmd_report(report_in);
  } catch (const iag::IoError& e) {
    spdlog::error("{}", e.what());
    return kIo;
  } catch (const iag::FormatError& e) {
    spdlog::error("{}", e.what());
    return kIo;
  } catch (const iag::NumericError& e) {
    spdlog::error("{}", e.what());
    return kNumeric;
  } catch (const iag::Error& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    spdlog::error("invalid number: {}", e.what());
    return kUsage;
  }
  return kUsage;
}
