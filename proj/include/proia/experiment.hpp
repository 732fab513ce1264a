#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proia/attack_data.hpp"
#include "proia/config.hpp"
#include "proia/dataset.hpp"
#include "proia/disentangle.hpp"
#include "proia/metrics.hpp"
#include "proia/mlp_attack.hpp"
#include "proia/pretrain.hpp"
#include "proia/victim.hpp"

namespace proia {

struct SeedMetrics {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;

  bool prompt_used = false;
  double pretrain_final_loss = 0.0;
  int prompt_dim = 0;

  std::uint64_t target_fingerprint = 0;
  std::uint64_t shadow_fingerprint = 0;
  double target_train_acc = 0.0, target_test_acc = 0.0;
  double shadow_train_acc = 0.0, shadow_test_acc = 0.0;
  bool victim_prompt_conditioned = false;

  int attack_feature_dim = 0;
  int attack_rows = 0, attack_train_rows = 0, attack_test_rows = 0;
  std::string attack_model;  // "mlp" or "disentangle"
  int attack_classes = 0;
  bool head_uses_prompt = false;
  double attack_final_loss = 0.0;

  double train_acc = 0.0;  // attack accuracy on its own training rows
  double test_acc = 0.0;
  double test_f1 = 0.0;
  std::optional<double> test_auc;  // binary label sets only
  double tn_rate = 0.0, tp_rate = 0.0;
  double majority_rate = 0.0;
};

struct ExperimentReport {
  ExperimentConfig cfg;
  std::vector<SeedMetrics> seeds;
  bool partial = false;
  double mean_test_acc = 0.0;
  double mean_test_f1 = 0.0;
  std::optional<double> mean_test_auc;
  std::filesystem::path out_dir;
};

namespace exp_detail {

inline Mat gather(const Mat& rows, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), rows.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(idx[i]);
  return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

// Prompt rows aligned with the attack dataset rows (gate input for the head).
inline Mat prompt_gates(const AttackDataset& ds, const Mat& prompt) {
  Mat out(static_cast<Eigen::Index>(ds.size()), prompt.cols());
  for (std::size_t i = 0; i < ds.node.size(); ++i) {
    const int v = ds.node[i];
    require(v >= 0 && v < prompt.rows(), "prompt_gates: node outside prompt table");
    out.row(static_cast<Eigen::Index>(i)) = prompt.row(v);
  }
  return out;
}

inline bool binary_with_both_classes(const std::vector<int>& labels) {
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y == 0) has0 = true;
    else if (y == 1) has1 = true;
    else return false;
  }
  return has0 && has1;
}

struct AttackOutputs {
  Mat post_train;  // posteriors on ds.train_rows, row-aligned
  Mat post_test;   // posteriors on ds.test_rows
};

inline void fill_attack_metrics(SeedMetrics& m, const AttackDataset& ds, const AttackOutputs& out,
                                int classes) {
  const std::vector<int> ytr = gather_labels(ds.labels, ds.train_rows);
  const std::vector<int> yte = gather_labels(ds.labels, ds.test_rows);
  m.train_acc = accuracy(argmax_rows(out.post_train), ytr);
  const std::vector<int> pred = argmax_rows(out.post_test);
  m.test_acc = accuracy(pred, yte);
  m.test_f1 = weighted_f1(pred, yte, classes);

  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  for (int y : yte) counts[static_cast<std::size_t>(y)] += 1.0;
  m.majority_rate = *std::max_element(counts.begin(), counts.end()) / static_cast<double>(yte.size());

  if (classes == 2 && binary_with_both_classes(yte)) {
    std::vector<double> score(yte.size());
    for (std::size_t i = 0; i < yte.size(); ++i) score[i] = out.post_test(static_cast<Eigen::Index>(i), 1);
    m.test_auc = auc_roc(score, yte);
    double tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < yte.size(); ++i) {
      if (yte[i] == 1) (pred[i] == 1 ? tp : fn) += 1.0;
      else (pred[i] == 0 ? tn : fp) += 1.0;
    }
    m.tp_rate = tp / (tp + fn);
    m.tn_rate = tn / (tn + fp);
  }
}

inline void write_roc_csv(const std::filesystem::path& path, const Mat& post_test,
                          const std::vector<int>& yte) {
  std::vector<double> score(yte.size());
  for (std::size_t i = 0; i < yte.size(); ++i) score[i] = post_test(static_cast<Eigen::Index>(i), 1);
  const std::vector<RocPoint> pts = roc_points(score, yte);
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_roc_csv: cannot open " + path.string());
  out.precision(17);
  out << "fpr,tpr,threshold\n";
  for (const RocPoint& p : pts) out << p.fpr << "," << p.tpr << "," << p.threshold << "\n";
}

inline void write_radar_csv(const std::filesystem::path& path, const SeedMetrics& m) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_radar_csv: cannot open " + path.string());
  out.precision(17);
  out << "axis,value\n";
  out << "target_train_acc," << m.target_train_acc << "\n";
  out << "target_test_acc," << m.target_test_acc << "\n";
  out << "shadow_train_acc," << m.shadow_train_acc << "\n";
  out << "shadow_test_acc," << m.shadow_test_acc << "\n";
  out << "attack_tn_rate," << m.tn_rate << "\n";
  out << "attack_tp_rate," << m.tp_rate << "\n";
}

inline void write_predictions_csv(const std::filesystem::path& path, const AttackDataset& ds,
                                  const AttackOutputs& out) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "write_predictions_csv: cannot open " + path.string());
  os.precision(17);
  const Eigen::Index classes = out.post_test.cols();
  os << "row,origin,node,label,pred";
  for (Eigen::Index c = 0; c < classes; ++c) os << ",p" << c;
  os << "\n";
  auto dump_rows = [&](const std::vector<int>& idx, const Mat& post) {
    const std::vector<int> pred = argmax_rows(post);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t r = static_cast<std::size_t>(idx[i]);
      os << idx[i] << "," << row_source_name(ds.source[r]) << "," << ds.node[r] << ","
         << ds.labels[r] << "," << pred[i];
      for (Eigen::Index c = 0; c < classes; ++c) os << "," << post(static_cast<Eigen::Index>(i), c);
      os << "\n";
    }
  };
  dump_rows(ds.train_rows, out.post_train);
  dump_rows(ds.test_rows, out.post_test);
}

}  // namespace exp_detail

// One full pipeline pass for a single seed. Every stage draws its seed from
// derive_seed(seed, tag) so stages stay independently reproducible.
inline SeedMetrics run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                            const std::filesystem::path& out_dir, int seed_index) {
  SeedMetrics m;
  m.seed = seed;

  LoadedDataset data = load_dataset(cfg.dataset, derive_seed(seed, "split"));
  const Graph& g = data.graph;
  const NodeSplit& split = data.split;

  std::optional<PromptFeature> prompt;
  if (variant_uses_prompt(cfg.variant)) {
    PretrainConfig pc = cfg.pretrain;
    pc.seed = derive_seed(seed, "pretrain");
    PretrainResult pre = pretrain(g, pc);
    prompt = std::move(pre.prompt);
    m.prompt_used = true;
    m.prompt_dim = static_cast<int>(prompt->p.cols());
    m.pretrain_final_loss = pre.loss_curve.empty() ? 0.0 : pre.loss_curve.back();
  }

  ModelHandle target = train_victim(g, split.target_train, split.target_test, cfg.backbone, prompt,
                                    derive_seed(seed, "victim-target"));
  m.target_fingerprint = target.fingerprint;
  m.target_train_acc = target.train_acc;
  m.target_test_acc = target.test_acc;
  m.victim_prompt_conditioned = target.prompt_conditioned;

  ModelHandle shadow;
  if (cfg.attack == AttackKind::mia) {
    shadow = train_victim(g, split.shadow_train, split.shadow_test, cfg.backbone, prompt,
                          derive_seed(seed, "victim-shadow"));
    m.shadow_fingerprint = shadow.fingerprint;
    m.shadow_train_acc = shadow.train_acc;
    m.shadow_test_acc = shadow.test_acc;
  }

  DefenseSpec defense = cfg.defense;
  defense.seed = derive_seed(seed, "defense");
  const DefenseSpec* def = defense.kind == DefenseKind::none ? nullptr : &defense;

  const bool append_prompt = cfg.variant == Variant::pretrain_only;
  AttackDataset ds = cfg.attack == AttackKind::mia
                         ? build_mia_dataset(shadow, target, g, split, prompt, append_prompt, def)
                         : build_aia_dataset(target, g, split, prompt, append_prompt, def);
  require(!ds.degenerate, "run_seed: attack dataset has no test rows");
  m.attack_feature_dim = static_cast<int>(ds.rows.cols());
  m.attack_rows = static_cast<int>(ds.size());
  m.attack_train_rows = static_cast<int>(ds.train_rows.size());
  m.attack_test_rows = static_cast<int>(ds.test_rows.size());
  const int classes = ds.num_label_classes();
  m.attack_classes = classes;

  exp_detail::AttackOutputs out;
  if (variant_uses_disentangle(cfg.variant)) {
    DisentangleConfig dc = cfg.disentangle;
    dc.seed = derive_seed(seed, "attack");
    std::optional<Mat> gates;
    if (cfg.variant == Variant::full && prompt) gates = exp_detail::prompt_gates(ds, prompt->p);
    AttackHead head = train_attack(ds, dc, gates ? &*gates : nullptr);
    m.attack_model = "disentangle";
    m.head_uses_prompt = head.uses_prompt;
    m.attack_final_loss = head.loss_curve.empty() ? 0.0 : head.loss_curve.back();
    out.post_train = attack_train_eval(head).p_a;
    const Mat rows_te = exp_detail::gather(ds.rows, ds.test_rows);
    if (head.uses_prompt) {
      const Mat gates_te = exp_detail::gather(*gates, ds.test_rows);
      out.post_test = attack_eval(head, rows_te, &gates_te).p_a;
    } else {
      out.post_test = attack_eval(head, rows_te).p_a;
    }
  } else {
    MlpAttackConfig mc = cfg.mlp;
    mc.seed = derive_seed(seed, "attack");
    MlpAttackHead head = train_mlp_attack(ds, mc);
    m.attack_model = "mlp";
    m.attack_final_loss = head.loss_curve.empty() ? 0.0 : head.loss_curve.back();
    out.post_train = mlp_attack_posteriors(head, exp_detail::gather(ds.rows, ds.train_rows));
    out.post_test = mlp_attack_posteriors(head, exp_detail::gather(ds.rows, ds.test_rows));
  }

  exp_detail::fill_attack_metrics(m, ds, out, classes);

  const std::string tag = std::to_string(seed_index);
  const std::vector<int> yte = exp_detail::gather_labels(ds.labels, ds.test_rows);
  if (classes == 2 && exp_detail::binary_with_both_classes(yte)) {
    exp_detail::write_roc_csv(out_dir / ("roc_seed" + tag + ".csv"), out.post_test, yte);
  }
  if (cfg.attack == AttackKind::mia) {
    exp_detail::write_radar_csv(out_dir / ("radar_seed" + tag + ".csv"), m);
  }
  exp_detail::write_predictions_csv(out_dir / ("predictions_seed" + tag + ".csv"), ds, out);

  m.ok = true;
  return m;
}

namespace exp_detail {

inline nlohmann::json seed_json(const SeedMetrics& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["ok"] = m.ok;
  if (!m.ok) {
    j["error"] = m.error;
    return j;
  }
  nlohmann::json stages;
  stages["pretrain"] = {{"used", m.prompt_used},
                        {"final_loss", m.pretrain_final_loss},
                        {"prompt_dim", m.prompt_dim}};
  stages["victim"] = {{"target_fingerprint", m.target_fingerprint},
                      {"shadow_fingerprint", m.shadow_fingerprint},
                      {"target_train_acc", m.target_train_acc},
                      {"target_test_acc", m.target_test_acc},
                      {"shadow_train_acc", m.shadow_train_acc},
                      {"shadow_test_acc", m.shadow_test_acc},
                      {"prompt_conditioned", m.victim_prompt_conditioned}};
  stages["attack_data"] = {{"feature_dim", m.attack_feature_dim},
                           {"rows", m.attack_rows},
                           {"train_rows", m.attack_train_rows},
                           {"test_rows", m.attack_test_rows}};
  stages["attack_model"] = {{"kind", m.attack_model},
                            {"classes", m.attack_classes},
                            {"uses_prompt", m.head_uses_prompt},
                            {"final_loss", m.attack_final_loss}};
  j["stages"] = stages;
  nlohmann::json met;
  met["train_acc"] = m.train_acc;
  met["test_acc"] = m.test_acc;
  met["test_f1"] = m.test_f1;
  if (m.test_auc) met["test_auc"] = *m.test_auc;
  met["tn_rate"] = m.tn_rate;
  met["tp_rate"] = m.tp_rate;
  met["majority_rate"] = m.majority_rate;
  j["metrics"] = met;
  return j;
}

inline void write_per_seed_csv(const std::filesystem::path& path,
                               const std::vector<SeedMetrics>& seeds) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "per_seed.csv: cannot open " + path.string());
  out.precision(17);
  out << "seed,status,attack_train_acc,attack_test_acc,attack_test_auc,attack_test_f1,"
         "target_train_acc,target_test_acc,shadow_train_acc,shadow_test_acc\n";
  for (const SeedMetrics& m : seeds) {
    out << m.seed << "," << (m.ok ? "ok" : "error") << ",";
    if (m.ok) {
      out << m.train_acc << "," << m.test_acc << ",";
      if (m.test_auc) out << *m.test_auc;
      else out << "nan";
      out << "," << m.test_f1 << "," << m.target_train_acc << "," << m.target_test_acc << ","
          << m.shadow_train_acc << "," << m.shadow_test_acc;
    } else {
      out << ",,,,,,,";
    }
    out << "\n";
  }
}

}  // namespace exp_detail

// Runs every seed, aggregates means over the successful ones, and writes the
// report directory. metrics.json carries no wall-clock data so reruns with the
// same config are byte-identical; timing lands in runtime.txt instead.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  ExperimentReport rep;
  rep.cfg = cfg;
  rep.out_dir = cfg.out;
  std::filesystem::create_directories(rep.out_dir);

  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const std::uint64_t seed = cfg.seeds[i];
    SeedMetrics m;
    try {
      m = run_seed(cfg, seed, rep.out_dir, static_cast<int>(i));
    } catch (const std::exception& e) {
      m = SeedMetrics{};
      m.seed = seed;
      m.ok = false;
      m.error = e.what();
      rep.partial = true;
    }
    rep.seeds.push_back(std::move(m));
  }

  int ok = 0, auc_n = 0;
  double acc = 0.0, f1 = 0.0, auc = 0.0;
  for (const SeedMetrics& m : rep.seeds) {
    if (!m.ok) continue;
    ++ok;
    acc += m.test_acc;
    f1 += m.test_f1;
    if (m.test_auc) {
      auc += *m.test_auc;
      ++auc_n;
    }
  }
  if (ok == 0) throw std::runtime_error("run_experiment: every seed failed: " + rep.seeds.front().error);
  rep.mean_test_acc = acc / ok;
  rep.mean_test_f1 = f1 / ok;
  if (auc_n > 0) rep.mean_test_auc = auc / auc_n;

  nlohmann::json j;
  j["attack"] = attack_name(cfg.attack);
  j["variant"] = variant_name(cfg.variant);
  j["dataset"] = {{"name", cfg.dataset.name}, {"seed", cfg.dataset.seed}};
  j["defense"] = {{"kind", defense_name(cfg.defense.kind)},
                  {"budget", cfg.defense.budget},
                  {"perturb_rate", cfg.defense.perturb_rate}};
  j["backbone"] = {{"kind", backbone_name(cfg.backbone.kind)},
                   {"layers", cfg.backbone.layers},
                   {"hidden_dim", cfg.backbone.hidden_dim},
                   {"epochs", cfg.backbone.epochs}};
  j["disentangle"] = {{"channels", cfg.disentangle.channels},
                      {"embed_dim", cfg.disentangle.embed_dim},
                      {"knn", cfg.disentangle.knn}};
  j["partial"] = rep.partial;
  nlohmann::json seeds = nlohmann::json::array();
  for (const SeedMetrics& m : rep.seeds) seeds.push_back(exp_detail::seed_json(m));
  j["seeds"] = seeds;
  nlohmann::json mean;
  mean["test_acc"] = rep.mean_test_acc;
  mean["test_f1"] = rep.mean_test_f1;
  if (rep.mean_test_auc) mean["test_auc"] = *rep.mean_test_auc;
  j["mean"] = mean;

  {
    std::ofstream out(rep.out_dir / "metrics.json");
    require(static_cast<bool>(out), "run_experiment: cannot write metrics.json");
    out << j.dump(2) << "\n";
  }
  exp_detail::write_per_seed_csv(rep.out_dir / "per_seed.csv", rep.seeds);
  {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::ofstream out(rep.out_dir / "runtime.txt");
    require(static_cast<bool>(out), "run_experiment: cannot write runtime.txt");
    out << "total_seconds=" << secs << "\n" << "seeds=" << cfg.seeds.size() << "\n";
  }
  return rep;
}

}  // namespace proia
