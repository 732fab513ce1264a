#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "proia/attack_data.hpp"
#include "proia/pretrain.hpp"
#include "proia/victim.hpp"

namespace proia {

// Binary artifact formats are native-endian and intended for local staging
// between CLI subcommands, not for cross-machine archival.
namespace ser_detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("serialize: truncated file (u64)");
  return v;
}

inline void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline double get_f64(std::istream& in) {
  double v = 0.0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("serialize: truncated file (f64)");
  return v;
}

inline void put_str(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > (1ull << 30)) throw std::runtime_error("serialize: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("serialize: truncated file (string)");
  return s;
}

inline void expect_magic(std::istream& in, const std::string& magic, const std::string& what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || got != magic) {
    throw std::runtime_error("serialize: " + what + ": bad or missing magic header");
  }
}

}  // namespace ser_detail

inline void write_matrix(std::ostream& out, const Mat& m) {
  ser_detail::put_u64(out, static_cast<std::uint64_t>(m.rows()));
  ser_detail::put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) ser_detail::put_f64(out, m(i, j));
  }
}

inline Mat read_matrix(std::istream& in) {
  const auto rows = static_cast<Eigen::Index>(ser_detail::get_u64(in));
  const auto cols = static_cast<Eigen::Index>(ser_detail::get_u64(in));
  if (rows < 0 || cols < 0 || (rows > 0 && cols > (1 << 24))) {
    throw std::runtime_error("serialize: implausible matrix shape");
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = ser_detail::get_f64(in);
  }
  return m;
}

inline void save_matrix(const Mat& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "serialize: cannot open " + path.string());
  out.write("PMAT1", 5);
  write_matrix(out, m);
}

inline Mat load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("serialize: cannot open " + path.string());
  ser_detail::expect_magic(in, "PMAT1", path.string());
  return read_matrix(in);
}

inline void save_prompt(const PromptFeature& prompt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "serialize: cannot open " + path.string());
  out.write("PPRM1", 5);
  ser_detail::put_str(out, prompt.provenance);
  write_matrix(out, prompt.p);
}

inline PromptFeature load_prompt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("serialize: cannot open " + path.string());
  ser_detail::expect_magic(in, "PPRM1", path.string());
  PromptFeature p;
  p.provenance = ser_detail::get_str(in);
  p.p = read_matrix(in);
  return p;
}

inline void save_model(const ModelHandle& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "serialize: cannot open " + path.string());
  out.write("PVIC1", 5);
  ser_detail::put_u64(out, static_cast<std::uint64_t>(m.spec.kind));
  ser_detail::put_u64(out, static_cast<std::uint64_t>(m.spec.layers));
  ser_detail::put_u64(out, static_cast<std::uint64_t>(m.spec.hidden_dim));
  ser_detail::put_f64(out, m.spec.learning_rate);
  ser_detail::put_u64(out, static_cast<std::uint64_t>(m.spec.epochs));
  ser_detail::put_f64(out, m.spec.weight_decay);
  ser_detail::put_u64(out, m.spec.prompt_at_train ? 1 : 0);
  ser_detail::put_u64(out, m.fingerprint);
  ser_detail::put_f64(out, m.train_acc);
  ser_detail::put_f64(out, m.test_acc);
  ser_detail::put_u64(out, m.prompt_conditioned ? 1 : 0);
  ser_detail::put_u64(out, static_cast<std::uint64_t>(m.num_classes));
  ser_detail::put_u64(out, m.weights.size());
  for (const Mat& w : m.weights) write_matrix(out, w);
  ser_detail::put_u64(out, m.loss_curve.size());
  for (double v : m.loss_curve) ser_detail::put_f64(out, v);
}

inline ModelHandle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("serialize: cannot open " + path.string());
  ser_detail::expect_magic(in, "PVIC1", path.string());
  ModelHandle m;
  m.spec.kind = static_cast<BackboneKind>(ser_detail::get_u64(in));
  m.spec.layers = static_cast<int>(ser_detail::get_u64(in));
  m.spec.hidden_dim = static_cast<int>(ser_detail::get_u64(in));
  m.spec.learning_rate = ser_detail::get_f64(in);
  m.spec.epochs = static_cast<int>(ser_detail::get_u64(in));
  m.spec.weight_decay = ser_detail::get_f64(in);
  m.spec.prompt_at_train = ser_detail::get_u64(in) != 0;
  m.fingerprint = ser_detail::get_u64(in);
  m.train_acc = ser_detail::get_f64(in);
  m.test_acc = ser_detail::get_f64(in);
  m.prompt_conditioned = ser_detail::get_u64(in) != 0;
  m.num_classes = static_cast<int>(ser_detail::get_u64(in));
  const std::uint64_t nw = ser_detail::get_u64(in);
  for (std::uint64_t i = 0; i < nw; ++i) m.weights.push_back(read_matrix(in));
  const std::uint64_t nl = ser_detail::get_u64(in);
  for (std::uint64_t i = 0; i < nl; ++i) m.loss_curve.push_back(ser_detail::get_f64(in));
  return m;
}

inline void write_loss_curve_csv(const std::vector<double>& curve,
                                 const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "serialize: cannot open " + path.string());
  out << "epoch,loss\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << "," << curve[i] << "\n";
}

// Reads back what write_attack_csv wrote; train/test masks are reconstructed
// from the origin column (shadow rows train for MIA; target_train rows train
// when no shadow rows exist, i.e. AIA).
inline AttackDataset read_attack_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("serialize: cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("read_attack_csv: empty file");
  int cols = 0;
  {
    std::size_t pos = 0;
    int fields = 0;
    while (pos != std::string::npos) {
      ++fields;
      pos = header.find(',', pos);
      if (pos != std::string::npos) ++pos;
    }
    cols = fields - 3;
  }
  if (cols < 1) throw std::runtime_error("read_attack_csv: malformed header");

  AttackDataset ds;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (static_cast<int>(f.size()) != cols + 3) {
      throw std::runtime_error("read_attack_csv: bad field count in row");
    }
    RowSource src;
    if (f[0] == "shadow_train") {
      src = RowSource::shadow_train;
    } else if (f[0] == "shadow_test") {
      src = RowSource::shadow_test;
    } else if (f[0] == "target_train") {
      src = RowSource::target_train;
    } else if (f[0] == "target_test") {
      src = RowSource::target_test;
    } else {
      throw std::runtime_error("read_attack_csv: unknown origin '" + f[0] + "'");
    }
    ds.source.push_back(src);
    ds.node.push_back(std::stoi(f[1]));
    ds.labels.push_back(std::stoi(f[2]));
    std::vector<double> vals;
    for (int j = 0; j < cols; ++j) vals.push_back(std::stod(f[static_cast<std::size_t>(3 + j)]));
    rows.push_back(std::move(vals));
  }
  ds.rows = Mat(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < cols; ++j) ds.rows(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  bool any_shadow = false;
  for (RowSource s : ds.source) {
    if (s == RowSource::shadow_train || s == RowSource::shadow_test) any_shadow = true;
  }
  for (int i = 0; i < ds.size(); ++i) {
    const RowSource s = ds.source[static_cast<std::size_t>(i)];
    const bool is_train = any_shadow
                              ? (s == RowSource::shadow_train || s == RowSource::shadow_test)
                              : s == RowSource::target_train;
    (is_train ? ds.train_rows : ds.test_rows).push_back(i);
  }
  ds.degenerate = ds.test_rows.empty();
  ds.validate();
  return ds;
}

}  // namespace proia
