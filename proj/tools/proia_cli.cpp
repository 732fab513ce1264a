// proia: staged prompt-based inference-attack pipeline.
//
// Subcommands mirror the pipeline stages. Each stage persists its artifacts
// under --out so later stages (or a fresh process) can pick them up:
//   pretrain          -> prompt.bin, pretrain_loss.csv
//   train-victim      -> victim_target.bin [, victim_shadow.bin], loss curves
//   build-attack-data -> attack_data.csv [, gates.bin]
//   attack            -> predictions.csv, attack_metrics.json
//   run               -> full multi-seed experiment report
//   emit-plots        -> summary.csv, roc_series.csv, radar_mean.csv

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "proia/config.hpp"
#include "proia/experiment.hpp"
#include "proia/plots.hpp"
#include "proia/serialize.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::string defense;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "experiment config file")->required();
  cmd->add_option("--seed", o.seed, "override the config seed list with one seed");
  cmd->add_option("--out", o.out, "override the output/artifact directory");
  cmd->add_option("--variant", o.variant, "override the attack variant");
  cmd->add_option("--defense", o.defense, "override the defense kind");
}

proia::ExperimentConfig load_config(const CommonOpts& o) {
  proia::ExperimentConfig cfg = proia::parse_config_file(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.variant.empty()) cfg.variant = proia::parse_variant(o.variant);
  if (!o.defense.empty()) cfg.defense.kind = proia::config_detail::parse_defense_kind(o.defense);
  cfg.validate();
  return cfg;
}

std::uint64_t stage_seed(const proia::ExperimentConfig& cfg) { return cfg.seeds.front(); }

std::filesystem::path artifact_dir(const proia::ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  return dir;
}

int cmd_pretrain(const CommonOpts& o) {
  const proia::ExperimentConfig cfg = load_config(o);
  const std::uint64_t seed = stage_seed(cfg);
  const proia::LoadedDataset data = proia::load_dataset(cfg.dataset, proia::derive_seed(seed, "split"));
  proia::PretrainConfig pc = cfg.pretrain;
  pc.seed = proia::derive_seed(seed, "pretrain");
  const proia::PretrainResult res = proia::pretrain(data.graph, pc);
  const auto dir = artifact_dir(cfg);
  proia::save_prompt(res.prompt, dir / "prompt.bin");
  proia::write_loss_curve_csv(res.loss_curve, dir / "pretrain_loss.csv");
  std::printf("pretrain: %d epochs, final loss %.6f, prompt %ldx%ld -> %s\n", pc.epochs,
              res.loss_curve.empty() ? 0.0 : res.loss_curve.back(),
              static_cast<long>(res.prompt.p.rows()), static_cast<long>(res.prompt.p.cols()),
              dir.string().c_str());
  return 0;
}

std::optional<proia::PromptFeature> maybe_prompt(const proia::ExperimentConfig& cfg,
                                                const std::filesystem::path& dir) {
  if (!proia::variant_uses_prompt(cfg.variant)) return std::nullopt;
  return proia::load_prompt(dir / "prompt.bin");
}

int cmd_train_victim(const CommonOpts& o) {
  const proia::ExperimentConfig cfg = load_config(o);
  const std::uint64_t seed = stage_seed(cfg);
  const auto dir = artifact_dir(cfg);
  const proia::LoadedDataset data = proia::load_dataset(cfg.dataset, proia::derive_seed(seed, "split"));
  const std::optional<proia::PromptFeature> prompt = maybe_prompt(cfg, dir);

  const proia::ModelHandle target =
      proia::train_victim(data.graph, data.split.target_train, data.split.target_test, cfg.backbone,
                          prompt, proia::derive_seed(seed, "victim-target"));
  proia::save_model(target, dir / "victim_target.bin");
  proia::write_loss_curve_csv(target.loss_curve, dir / "victim_target_loss.csv");
  std::printf("victim target: train acc %.4f, test acc %.4f\n", target.train_acc, target.test_acc);

  if (cfg.attack == proia::AttackKind::mia) {
    const proia::ModelHandle shadow =
        proia::train_victim(data.graph, data.split.shadow_train, data.split.shadow_test,
                            cfg.backbone, prompt, proia::derive_seed(seed, "victim-shadow"));
    proia::save_model(shadow, dir / "victim_shadow.bin");
    proia::write_loss_curve_csv(shadow.loss_curve, dir / "victim_shadow_loss.csv");
    std::printf("victim shadow: train acc %.4f, test acc %.4f\n", shadow.train_acc, shadow.test_acc);
  }
  return 0;
}

int cmd_build_attack_data(const CommonOpts& o) {
  const proia::ExperimentConfig cfg = load_config(o);
  const std::uint64_t seed = stage_seed(cfg);
  const auto dir = artifact_dir(cfg);
  const proia::LoadedDataset data = proia::load_dataset(cfg.dataset, proia::derive_seed(seed, "split"));
  const std::optional<proia::PromptFeature> prompt = maybe_prompt(cfg, dir);

  proia::DefenseSpec defense = cfg.defense;
  defense.seed = proia::derive_seed(seed, "defense");
  const proia::DefenseSpec* def = defense.kind == proia::DefenseKind::none ? nullptr : &defense;
  const bool append_prompt = cfg.variant == proia::Variant::pretrain_only;

  const proia::ModelHandle target = proia::load_model(dir / "victim_target.bin");
  proia::AttackDataset ds;
  if (cfg.attack == proia::AttackKind::mia) {
    const proia::ModelHandle shadow = proia::load_model(dir / "victim_shadow.bin");
    ds = proia::build_mia_dataset(shadow, target, data.graph, data.split, prompt, append_prompt, def);
  } else {
    ds = proia::build_aia_dataset(target, data.graph, data.split, prompt, append_prompt, def);
  }
  proia::write_attack_csv(ds, dir / "attack_data.csv");
  if (cfg.variant == proia::Variant::full && prompt) {
    proia::save_matrix(proia::exp_detail::prompt_gates(ds, prompt->p), dir / "gates.bin");
  }
  std::printf("attack data: %zu rows (%zu train, %zu test), %ld features -> %s\n", ds.size(),
              ds.train_rows.size(), ds.test_rows.size(), static_cast<long>(ds.rows.cols()),
              (dir / "attack_data.csv").string().c_str());
  return 0;
}

int cmd_attack(const CommonOpts& o) {
  const proia::ExperimentConfig cfg = load_config(o);
  const std::uint64_t seed = stage_seed(cfg);
  const auto dir = artifact_dir(cfg);
  const proia::AttackDataset ds = proia::read_attack_csv(dir / "attack_data.csv");
  proia::require(!ds.degenerate, "attack: dataset has no test rows");
  const int classes = ds.num_label_classes();

  proia::SeedMetrics m;
  m.seed = seed;
  proia::exp_detail::AttackOutputs out;
  if (proia::variant_uses_disentangle(cfg.variant)) {
    proia::DisentangleConfig dc = cfg.disentangle;
    dc.seed = proia::derive_seed(seed, "attack");
    std::optional<proia::Mat> gates;
    if (cfg.variant == proia::Variant::full) gates = proia::load_matrix(dir / "gates.bin");
    const proia::AttackHead head = proia::train_attack(ds, dc, gates ? &*gates : nullptr);
    out.post_train = proia::attack_train_eval(head).p_a;
    const proia::Mat rows_te = proia::exp_detail::gather(ds.rows, ds.test_rows);
    if (head.uses_prompt) {
      const proia::Mat gates_te = proia::exp_detail::gather(*gates, ds.test_rows);
      out.post_test = proia::attack_eval(head, rows_te, &gates_te).p_a;
    } else {
      out.post_test = proia::attack_eval(head, rows_te).p_a;
    }
  } else {
    proia::MlpAttackConfig mc = cfg.mlp;
    mc.seed = proia::derive_seed(seed, "attack");
    const proia::MlpAttackHead head = proia::train_mlp_attack(ds, mc);
    out.post_train = proia::mlp_attack_posteriors(head, proia::exp_detail::gather(ds.rows, ds.train_rows));
    out.post_test = proia::mlp_attack_posteriors(head, proia::exp_detail::gather(ds.rows, ds.test_rows));
  }
  proia::exp_detail::fill_attack_metrics(m, ds, out, classes);
  proia::exp_detail::write_predictions_csv(dir / "predictions.csv", ds, out);

  nlohmann::json j;
  j["variant"] = proia::variant_name(cfg.variant);
  j["attack"] = proia::attack_name(cfg.attack);
  j["train_acc"] = m.train_acc;
  j["test_acc"] = m.test_acc;
  j["test_f1"] = m.test_f1;
  if (m.test_auc) j["test_auc"] = *m.test_auc;
  j["majority_rate"] = m.majority_rate;
  std::ofstream js(dir / "attack_metrics.json");
  proia::require(static_cast<bool>(js), "attack: cannot write attack_metrics.json");
  js << j.dump(2) << "\n";
  const std::string auc_note = m.test_auc ? ", auc " + std::to_string(*m.test_auc) : "";
  std::printf("attack [%s/%s]: test acc %.4f, f1 %.4f%s\n", proia::variant_name(cfg.variant),
              proia::attack_name(cfg.attack), m.test_acc, m.test_f1, auc_note.c_str());
  return 0;
}

int cmd_run(const CommonOpts& o) {
  const proia::ExperimentConfig cfg = load_config(o);
  const proia::ExperimentReport rep = proia::run_experiment(cfg);
  std::printf("run [%s/%s]: %zu seeds%s, mean test acc %.4f, f1 %.4f", proia::variant_name(cfg.variant),
              proia::attack_name(cfg.attack), rep.seeds.size(), rep.partial ? " (partial)" : "",
              rep.mean_test_acc, rep.mean_test_f1);
  if (rep.mean_test_auc) std::printf(", auc %.4f", *rep.mean_test_auc);
  std::printf(" -> %s\n", rep.out_dir.string().c_str());
  return rep.partial ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt-based unified inference attacks on graph models"};
  app.require_subcommand(1);

  CommonOpts opts;
  CLI::App* pretrain = app.add_subcommand("pretrain", "IB-constrained contrastive pre-training");
  CLI::App* victim = app.add_subcommand("train-victim", "train target (and shadow) victims");
  CLI::App* build = app.add_subcommand("build-attack-data", "query victims into an attack dataset");
  CLI::App* attack = app.add_subcommand("attack", "train and evaluate the attack head");
  CLI::App* run = app.add_subcommand("run", "full multi-seed experiment");
  for (CLI::App* cmd : {pretrain, victim, build, attack, run}) add_common(cmd, opts);

  std::string plots_out;
  std::vector<std::string> report_dirs;
  CLI::App* plots = app.add_subcommand("emit-plots", "aggregate reports into plot CSVs");
  plots->add_option("--out", plots_out, "output directory for plot CSVs")->required();
  plots->add_option("reports", report_dirs, "experiment report directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) return cmd_pretrain(opts);
    if (victim->parsed()) return cmd_train_victim(opts);
    if (build->parsed()) return cmd_build_attack_data(opts);
    if (attack->parsed()) return cmd_attack(opts);
    if (run->parsed()) return cmd_run(opts);
    if (plots->parsed()) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      proia::emit_plots(dirs, plots_out);
      std::printf("plots: %zu reports -> %s\n", dirs.size(), plots_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
