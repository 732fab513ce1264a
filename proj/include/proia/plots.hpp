#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proia/common.hpp"

namespace proia {

namespace plots_detail {

inline nlohmann::json load_report(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "metrics.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("emit_plots: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("emit_plots: bad json in " + path.string() + ": " + e.what());
  }
  return j;
}

inline double mean_stage(const nlohmann::json& report, const char* stage, const char* key) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : report.at("seeds")) {
    if (!s.at("ok").get<bool>()) continue;
    sum += s.at("stages").at(stage).at(key).get<double>();
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

inline double mean_metric(const nlohmann::json& report, const char* key) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : report.at("seeds")) {
    if (!s.at("ok").get<bool>()) continue;
    const auto& met = s.at("metrics");
    if (!met.contains(key)) continue;
    sum += met.at(key).get<double>();
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace plots_detail

// Aggregates one or more report directories into plot-ready CSVs:
//   summary.csv    one row per report (variant/defense/channel sweeps)
//   roc_series.csv concatenated per-seed ROC curves, tagged by report
//   radar_mean.csv six radar axes averaged over seeds (MIA reports)
inline void emit_plots(const std::vector<std::filesystem::path>& report_dirs,
                       const std::filesystem::path& out_dir) {
  require(!report_dirs.empty(), "emit_plots: no report directories given");
  std::filesystem::create_directories(out_dir);

  std::ofstream summary(out_dir / "summary.csv");
  require(static_cast<bool>(summary), "emit_plots: cannot write summary.csv");
  summary.precision(17);
  summary << "report,variant,attack,defense,budget,perturb_rate,channels,seeds_ok,"
             "mean_test_acc,mean_test_auc,mean_test_f1,mean_majority_rate,"
             "mean_target_train_acc,mean_target_test_acc\n";

  std::ofstream roc(out_dir / "roc_series.csv");
  require(static_cast<bool>(roc), "emit_plots: cannot write roc_series.csv");
  roc << "report,variant,seed,fpr,tpr,threshold\n";

  std::ofstream radar(out_dir / "radar_mean.csv");
  require(static_cast<bool>(radar), "emit_plots: cannot write radar_mean.csv");
  radar.precision(17);
  radar << "report,variant,axis,value\n";

  for (const std::filesystem::path& dir : report_dirs) {
    const nlohmann::json rep = plots_detail::load_report(dir);
    const std::string name = dir.filename().empty() ? dir.parent_path().filename().string()
                                                    : dir.filename().string();
    const std::string variant = rep.at("variant").get<std::string>();
    const auto& seeds = rep.at("seeds");

    int ok = 0;
    for (const auto& s : seeds) ok += s.at("ok").get<bool>() ? 1 : 0;
    const auto& mean = rep.at("mean");
    summary << name << "," << variant << "," << rep.at("attack").get<std::string>() << ","
            << rep.at("defense").at("kind").get<std::string>() << ","
            << rep.at("defense").at("budget").get<double>() << ","
            << rep.at("defense").at("perturb_rate").get<double>() << ","
            << rep.at("disentangle").at("channels").get<int>() << "," << ok << ","
            << mean.at("test_acc").get<double>() << ",";
    if (mean.contains("test_auc")) summary << mean.at("test_auc").get<double>();
    else summary << "nan";
    summary << "," << mean.at("test_f1").get<double>() << ","
            << plots_detail::mean_metric(rep, "majority_rate") << ","
            << plots_detail::mean_stage(rep, "victim", "target_train_acc") << ","
            << plots_detail::mean_stage(rep, "victim", "target_test_acc") << "\n";

    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].at("ok").get<bool>()) continue;
      const std::uint64_t seed = seeds[i].at("seed").get<std::uint64_t>();
      const std::filesystem::path rp = dir / ("roc_seed" + std::to_string(i) + ".csv");
      std::ifstream in(rp);
      if (!in) continue;  // non-binary attacks have no ROC
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        roc << name << "," << variant << "," << seed << "," << line << "\n";
      }
    }

    if (rep.at("attack").get<std::string>() == "mia") {
      const char* victim_axes[] = {"target_train_acc", "target_test_acc", "shadow_train_acc",
                                   "shadow_test_acc"};
      for (const char* ax : victim_axes) {
        radar << name << "," << variant << "," << ax << ","
              << plots_detail::mean_stage(rep, "victim", ax) << "\n";
      }
      radar << name << "," << variant << ",attack_tn_rate,"
            << plots_detail::mean_metric(rep, "tn_rate") << "\n";
      radar << name << "," << variant << ",attack_tp_rate,"
            << plots_detail::mean_metric(rep, "tp_rate") << "\n";
    }
  }
}

}  // namespace proia
