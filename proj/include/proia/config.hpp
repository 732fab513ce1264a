#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "proia/dataset.hpp"
#include "proia/defense.hpp"
#include "proia/disentangle.hpp"
#include "proia/mlp_attack.hpp"
#include "proia/pretrain.hpp"
#include "proia/victim.hpp"

namespace proia {

enum class AttackKind { mia, aia };

inline const char* attack_name(AttackKind k) { return k == AttackKind::mia ? "mia" : "aia"; }

enum class Variant { vanilla, pretrain_only, disentangle_only, full };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::pretrain_only: return "pretrain_only";
    case Variant::disentangle_only: return "disentangle_only";
    case Variant::full: return "full";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "vanilla") return Variant::vanilla;
  if (s == "pretrain_only") return Variant::pretrain_only;
  if (s == "disentangle_only") return Variant::disentangle_only;
  if (s == "full") return Variant::full;
  throw std::invalid_argument("config: unknown variant '" + s + "'");
}

inline bool variant_uses_prompt(Variant v) {
  return v == Variant::pretrain_only || v == Variant::full;
}

inline bool variant_uses_disentangle(Variant v) {
  return v == Variant::disentangle_only || v == Variant::full;
}

struct ExperimentConfig {
  DatasetSpec dataset;
  PretrainConfig pretrain;
  BackboneSpec backbone;
  AttackKind attack = AttackKind::mia;
  Variant variant = Variant::vanilla;
  DefenseSpec defense;  // kind=none disables it
  DisentangleConfig disentangle;
  MlpAttackConfig mlp;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out = "runs/out";

  void validate() const {
    require(!seeds.empty(), "config: seeds must be nonempty");
    require(!out.empty(), "config: out directory must be set");
    pretrain.validate();
    backbone.validate();
    disentangle.validate();
    mlp.validate();
    defense.validate();
    if (dataset.source_dir.empty()) {
      require(dataset.synth.has_value(), "config: synthetic dataset needs parameters");
    }
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

inline double parse_real(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  }
  if (pos != v.size()) throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  return out;
}

inline long long parse_integer(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  }
  if (pos != v.size()) throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  return out;
}

inline BackboneKind parse_backbone(const std::string& s) {
  if (s == "gcn") return BackboneKind::gcn;
  if (s == "gat") return BackboneKind::gat;
  if (s == "sage") return BackboneKind::sage;
  throw std::invalid_argument("config: unknown backbone '" + s + "'");
}

inline DefenseKind parse_defense_kind(const std::string& s) {
  if (s == "none") return DefenseKind::none;
  if (s == "vandp") return DefenseKind::vandp;
  if (s == "neighb") return DefenseKind::neighb;
  throw std::invalid_argument("config: unknown defense '" + s + "'");
}

inline AttackKind parse_attack(const std::string& s) {
  if (s == "mia") return AttackKind::mia;
  if (s == "aia") return AttackKind::aia;
  throw std::invalid_argument("config: unknown attack '" + s + "'");
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    seeds.push_back(static_cast<std::uint64_t>(parse_integer(item, "seeds")));
  }
  return seeds;
}

inline void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto as_int = [&](int lo = INT32_MIN) {
    const long long v = parse_integer(value, key);
    require(v >= lo, "config: " + key + " below minimum");
    return static_cast<int>(v);
  };
  auto as_real = [&] { return parse_real(value, key); };
  auto& synth = cfg.dataset.synth;

  if (key == "dataset.name") {
    cfg.dataset.name = value;
    if (value == "cora" || value == "cora_scale") cfg.dataset.synth = cora_scale_params();
  } else if (key == "dataset.source_dir") {
    cfg.dataset.source_dir = value;
  } else if (key == "dataset.seed") {
    cfg.dataset.seed = static_cast<std::uint64_t>(parse_integer(value, key));
  } else if (key == "dataset.blocks") {
    require(synth.has_value(), "config: dataset.blocks needs a synthetic dataset");
    synth->block_sizes.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      synth->block_sizes.push_back(static_cast<int>(parse_integer(trim(item), key)));
    }
  } else if (key == "dataset.feature_dim") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->feature_dim = as_int(1);
  } else if (key == "dataset.num_classes") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->num_classes = as_int(2);
  } else if (key == "dataset.intra_p") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->intra_p = as_real();
  } else if (key == "dataset.inter_p") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->inter_p = as_real();
  } else if (key == "dataset.label_noise") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->label_noise = as_real();
  } else if (key == "dataset.class_skew") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->class_skew = as_real();
  } else if (key == "dataset.feature_on_p") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->feature_on_p = as_real();
  } else if (key == "dataset.feature_off_p") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->feature_off_p = as_real();
  } else if (key == "dataset.exact_edges") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->exact_edges = parse_integer(value, key);
  } else if (key == "dataset.plant_sensitive") {
    require(synth.has_value(), "config: synthetic key on non-synthetic dataset");
    synth->plant_sensitive = parse_bool(value, key);
  } else if (key == "split.target_pool") {
    cfg.dataset.split.target_pool = as_real();
  } else if (key == "split.shadow_pool") {
    cfg.dataset.split.shadow_pool = as_real();
  } else if (key == "split.train_ratio") {
    cfg.dataset.split.train_ratio = as_real();
  } else if (key == "split.aia_train") {
    cfg.dataset.split.aia_train = as_real();
  } else if (key == "pretrain.layers") {
    cfg.pretrain.layers = as_int(1);
  } else if (key == "pretrain.hidden_dim") {
    cfg.pretrain.hidden_dim = as_int(1);
  } else if (key == "pretrain.beta_a") {
    cfg.pretrain.beta_a = as_real();
  } else if (key == "pretrain.beta_m") {
    cfg.pretrain.beta_m = as_real();
  } else if (key == "pretrain.alpha") {
    cfg.pretrain.alpha = as_real();
  } else if (key == "pretrain.threshold_t") {
    cfg.pretrain.threshold_t = as_real();
  } else if (key == "pretrain.bernoulli_q") {
    cfg.pretrain.bernoulli_q = as_real();
  } else if (key == "pretrain.learning_rate") {
    cfg.pretrain.learning_rate = as_real();
  } else if (key == "pretrain.epochs") {
    cfg.pretrain.epochs = as_int(0);
  } else if (key == "pretrain.sigma_fixed") {
    cfg.pretrain.sigma_fixed = as_real();
  } else if (key == "pretrain.prompt_khop") {
    cfg.pretrain.prompt_khop = as_int(0);
  } else if (key == "backbone.kind") {
    cfg.backbone.kind = parse_backbone(value);
  } else if (key == "backbone.layers") {
    cfg.backbone.layers = as_int(1);
  } else if (key == "backbone.hidden_dim") {
    cfg.backbone.hidden_dim = as_int(1);
  } else if (key == "backbone.learning_rate") {
    cfg.backbone.learning_rate = as_real();
  } else if (key == "backbone.epochs") {
    cfg.backbone.epochs = as_int(0);
  } else if (key == "backbone.weight_decay") {
    cfg.backbone.weight_decay = as_real();
  } else if (key == "backbone.prompt_at_train") {
    cfg.backbone.prompt_at_train = parse_bool(value, key);
  } else if (key == "attack") {
    cfg.attack = parse_attack(value);
  } else if (key == "variant") {
    cfg.variant = parse_variant(value);
  } else if (key == "defense.kind") {
    cfg.defense.kind = parse_defense_kind(value);
  } else if (key == "defense.budget") {
    cfg.defense.budget = as_real();
  } else if (key == "defense.perturb_rate") {
    cfg.defense.perturb_rate = as_real();
  } else if (key == "disentangle.channels") {
    cfg.disentangle.channels = as_int(1);
  } else if (key == "disentangle.routing_iters") {
    cfg.disentangle.routing_iters = as_int(1);
  } else if (key == "disentangle.tau") {
    cfg.disentangle.tau = as_real();
  } else if (key == "disentangle.lambda") {
    cfg.disentangle.lambda = as_real();
  } else if (key == "disentangle.depth") {
    cfg.disentangle.depth = as_int(1);
  } else if (key == "disentangle.embed_dim") {
    cfg.disentangle.embed_dim = as_int(1);
  } else if (key == "disentangle.knn") {
    cfg.disentangle.knn = as_int(1);
  } else if (key == "disentangle.learning_rate") {
    cfg.disentangle.learning_rate = as_real();
  } else if (key == "disentangle.epochs") {
    cfg.disentangle.epochs = as_int(0);
  } else if (key == "mlp.hidden") {
    cfg.mlp.hidden = as_int(1);
  } else if (key == "mlp.learning_rate") {
    cfg.mlp.learning_rate = as_real();
  } else if (key == "mlp.epochs") {
    cfg.mlp.epochs = as_int(0);
  } else if (key == "seeds") {
    cfg.seeds = parse_seeds(value);
  } else if (key == "out") {
    cfg.out = value;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

}  // namespace config_detail

// Line-oriented `key = value` format; '#' starts a comment. Unknown keys are
// rejected so typos fail loudly.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key = value");
    }
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " has empty key or value");
    }
    config_detail::apply_key(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace proia
