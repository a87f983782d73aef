#include <iostream>

#include "CLI11.hpp"
#include "sssd/cli.hpp"

using namespace sssd;
using namespace sssd::cli;

int main(int argc, char** argv) {
  CLI::App app{"Conditional diffusion with S4 denoisers for multichannel ECG: toy data, training, generation, evaluation"};
  app.require_subcommand(1);

  ToyDataArgs toy;
  auto* toy_cmd = app.add_subcommand("toy-data", "Write a synthetic surrogate ECG dataset");
  toy_cmd->add_option("--out", toy.out, "Output directory")->required();
  toy_cmd->add_option("-n,--n", toy.n, "Number of records")->check(CLI::NonNegativeNumber);
  toy_cmd->add_option("--classes", toy.classes, "2 (normal/AFIB) or 3 (adds wide QRS)")->check(CLI::Range(2, 3));
  toy_cmd->add_option("--seed", toy.seed, "Generator seed");
  toy_cmd->add_option("--length", toy.length, "Samples per record")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--fs", toy.fs, "Sampling rate in Hz")->check(CLI::PositiveNumber);
  toy_cmd->add_flag("--force", toy.force, "Overwrite an existing dataset");

  TrainArgs tr;
  std::string tr_config, tr_mech;
  std::uint64_t tr_seed = 0;
  long tr_total = 0, tr_every = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the denoiser on folds 1-8, writing sample-indexed checkpoints");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output directory for checkpoints and loss.csv")->required();
  auto* tr_config_opt = train_cmd->add_option("--config", tr_config, "Run config (JSON)")->check(CLI::ExistingFile);
  auto* tr_mech_opt = train_cmd->add_option("--mechanism", tr_mech, "Label conditioning")->check(CLI::IsMember({"legacy", "nle"}));
  auto* tr_seed_opt = train_cmd->add_option("--seed", tr_seed, "Run seed (overrides the config)");
  auto* tr_total_opt = train_cmd->add_option("--total-samples", tr_total, "Training samples")->check(CLI::PositiveNumber);
  auto* tr_every_opt = train_cmd->add_option("--checkpoint-every", tr_every, "Samples between checkpoints")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--force", tr.force, "Replace existing checkpoints");
  train_cmd->add_flag("-q,--quiet", tr.quiet, "No progress output");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate a synthetic copy of a dataset from a checkpoint");
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "Checkpoint manifest (.json)")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--data", gen.data, "Real dataset whose labels and folds are copied")->required();
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Sampling seed");
  gen_cmd->add_flag("--full-leads", gen.full_leads, "Append the derived limb leads III, aVR, aVL, aVF");
  gen_cmd->add_flag("--force", gen.force, "Overwrite an existing dataset");

  EvalArgs ev;
  std::string ev_config, ev_label;
  std::vector<std::uint64_t> ev_seeds;
  std::uint64_t ev_gen_seed = 0;
  int ev_jobs = 1;
  std::string ev_synth;
  auto* eval_cmd = app.add_subcommand("eval", "Downstream evaluation: tstr | trts | augment | convergence");
  eval_cmd->add_option("mode", ev.mode, "Protocol")->required()->check(CLI::IsMember({"tstr", "trts", "augment", "convergence"}));
  eval_cmd->add_option("--real", ev.real, "Real dataset directory")->required();
  auto* ev_synth_opt = eval_cmd->add_option("--synth", ev_synth, "Synthetic dataset directory (tstr, trts, augment)");
  eval_cmd->add_option("--checkpoints", ev.checkpoints, "Checkpoint manifests or directories (convergence)");
  eval_cmd->add_option("--out", ev.out, "Report directory (report.csv, summary.txt)")->required();
  auto* ev_config_opt = eval_cmd->add_option("--config", ev_config, "Run config (JSON)")->check(CLI::ExistingFile);
  auto* ev_label_opt = eval_cmd->add_option("--label", ev_label, "Label name (default: first label)");
  auto* ev_seeds_opt = eval_cmd->add_option("--seeds", ev_seeds, "Classifier seeds")->delimiter(',');
  auto* ev_gen_opt = eval_cmd->add_option("--generation-seed", ev_gen_seed, "Sampling seed for convergence copies");
  auto* ev_jobs_opt = eval_cmd->add_option("--jobs", ev_jobs, "Parallel classifier cells")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--force", ev.force, "Overwrite an existing report");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*toy_cmd) {
      cmd_toy_data(toy);
    } else if (*train_cmd) {
      if (*tr_config_opt) tr.config = tr_config;
      if (*tr_mech_opt) tr.mechanism = tr_mech;
      if (*tr_seed_opt) tr.seed = tr_seed;
      if (*tr_total_opt) tr.total_samples = tr_total;
      if (*tr_every_opt) tr.checkpoint_every = tr_every;
      cmd_train(tr);
    } else if (*gen_cmd) {
      cmd_generate(gen);
    } else if (*eval_cmd) {
      if (*ev_synth_opt) ev.synth = ev_synth;
      if (*ev_config_opt) ev.config = ev_config;
      if (*ev_label_opt) ev.label = ev_label;
      if (*ev_seeds_opt) ev.seeds = ev_seeds;
      if (*ev_gen_opt) ev.generation_seed = ev_gen_seed;
      if (*ev_jobs_opt) ev.jobs = ev_jobs;
      cmd_eval(ev);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
