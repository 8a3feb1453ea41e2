// mvalign: multi-view point-map alignment pipeline driver.
//
// Subcommands: simulate, align, pseudo-label, evaluate, pipeline.
// Exit codes: 0 success, 2 invalid configuration or input, 3 view-graph
// structure errors, 4 optimization divergence, 5 missing ground truth,
// 1 anything else.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "mvalign/pipeline.hpp"

namespace {

using nlohmann::json;

constexpr int kExitInvalidInput = 2;
constexpr int kExitGraph = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitMissingGroundTruth = 5;

json parse_json_file(const std::string& path) {
  try {
    return json::parse(mvalign::read_file(path));
  } catch (const json::exception& e) {
    throw mvalign::InvalidInputError(path + ": " + e.what());
  }
}

void add_align_options(CLI::App* cmd, mvalign::AlignConfig& config) {
  cmd->add_flag("--robust,!--no-robust", config.robust,
                "apply the closed-form confidence re-weighting")
      ->capture_default_str();
  cmd->add_option("--mu", config.mu, "regularization strength of the weight term")
      ->capture_default_str();
  cmd->add_option("--steps", config.steps, "gradient descent steps")->capture_default_str();
  cmd->add_option("--lr", config.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--weight-update-every", config.weight_update_every,
                  "steps between weight updates")
      ->capture_default_str();
  cmd->add_option("--conf-floor", config.conf_floor,
                  "confidences below this are excluded from the optimization")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-view point-map alignment, confidence calibration and pseudo-labeling"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config_path, sim_noise_path, sim_out;
  std::uint64_t sim_seed = 0;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic scene and predictions");
  sim->add_option("--config", sim_config_path, "scene config JSON")->required();
  sim->add_option("--noise", sim_noise_path, "noise model JSON")->required();
  sim->add_option("--seed", sim_seed, "random seed")->capture_default_str();
  sim->add_option("--out", sim_out, "output directory")->required();

  // align
  std::string align_manifest, align_out;
  mvalign::AlignConfig align_config;
  CLI::App* align = app.add_subcommand("align", "globally align a scene's pair predictions");
  align->add_option("--manifest", align_manifest, "scene manifest path")->required();
  align->add_option("--out", align_out, "output directory")->required();
  add_align_options(align, align_config);

  // pseudo-label
  std::string label_manifest, label_aligned, label_out;
  double label_cutoff = 1.5;
  CLI::App* label = app.add_subcommand("pseudo-label", "threshold aligned points into labels");
  label->add_option("--manifest", label_manifest, "scene manifest path")->required();
  label->add_option("--aligned", label_aligned, "directory written by align")->required();
  label->add_option("--cutoff", label_cutoff, "weight cutoff for retaining pixels")
      ->capture_default_str();
  label->add_option("--out", label_out, "output directory")->required();

  // evaluate
  std::string eval_manifest, eval_aligned, eval_labels, eval_out;
  CLI::App* eval = app.add_subcommand("evaluate", "compute metrics against ground truth");
  eval->add_option("--manifest", eval_manifest, "scene manifest path")->required();
  eval->add_option("--aligned", eval_aligned, "directory written by align")->required();
  eval->add_option("--labels", eval_labels, "directory written by pseudo-label");
  eval->add_option("--out", eval_out, "metrics JSON path")->required();

  // pipeline
  std::string pipe_config_path, pipe_noise_path, pipe_out;
  std::uint64_t pipe_seed = 0;
  double pipe_cutoff = 1.5;
  bool pipe_ab = false;
  mvalign::AlignConfig pipe_align;
  CLI::App* pipe = app.add_subcommand("pipeline", "simulate, align, pseudo-label and evaluate");
  pipe->add_option("--config", pipe_config_path, "scene config JSON (defaults when omitted)");
  pipe->add_option("--noise", pipe_noise_path, "noise model JSON (defaults when omitted)");
  pipe->add_option("--seed", pipe_seed, "random seed")->capture_default_str();
  pipe->add_option("--cutoff", pipe_cutoff, "pseudo-label weight cutoff")->capture_default_str();
  pipe->add_flag("--ab", pipe_ab, "run both robust and non-robust alignments");
  pipe->add_option("--out", pipe_out, "output directory")->required();
  add_align_options(pipe, pipe_align);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidInput;
  }

  try {
    if (sim->parsed()) {
      const mvalign::SceneConfig config = mvalign::scene_config_from_json(parse_json_file(sim_config_path));
      const mvalign::NoiseModel noise = mvalign::noise_model_from_json(parse_json_file(sim_noise_path));
      mvalign::run_simulate(config, noise, sim_seed, sim_out);
    } else if (align->parsed()) {
      mvalign::run_align(align_manifest, align_config, align_out);
    } else if (label->parsed()) {
      if (!(label_cutoff > 0.0)) {
        throw mvalign::InvalidInputError("pseudo-label: cutoff must be positive");
      }
      mvalign::run_pseudo_label(label_manifest, label_aligned, label_cutoff, label_out);
    } else if (eval->parsed()) {
      std::optional<std::filesystem::path> labels;
      if (!eval_labels.empty()) labels = eval_labels;
      mvalign::run_evaluate(eval_manifest, eval_aligned, labels, eval_out);
    } else if (pipe->parsed()) {
      mvalign::PipelineOptions options;
      if (!pipe_config_path.empty()) {
        options.scene = mvalign::scene_config_from_json(parse_json_file(pipe_config_path));
      }
      if (!pipe_noise_path.empty()) {
        options.noise = mvalign::noise_model_from_json(parse_json_file(pipe_noise_path));
      } else {
        // Out-of-the-box demo scenario: mild depth noise with overconfident outliers.
        options.noise.depth_noise_rel = 0.005;
        options.noise.outlier_fraction = 0.10;
        options.noise.outlier_magnitude_rel = 0.25;
        options.noise.overconfident = true;
      }
      options.seed = pipe_seed;
      options.align = pipe_align;
      options.cutoff = pipe_cutoff;
      options.ab = pipe_ab;
      options.out = pipe_out;
      if (!(options.cutoff > 0.0)) {
        throw mvalign::InvalidInputError("pipeline: cutoff must be positive");
      }
      mvalign::run_pipeline(options);
    }
  } catch (const mvalign::DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const mvalign::MissingGroundTruthError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingGroundTruth;
  } catch (const mvalign::DisconnectedGraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitGraph;
  } catch (const mvalign::GraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitGraph;
  } catch (const mvalign::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
