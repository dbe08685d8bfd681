#pragma once

// Result files. Every file is written to a temporary sibling and renamed into
// place, so readers never observe a partially written file.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dsgc/errors.hpp"
#include "dsgc/experiment.hpp"

namespace dsgc {

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw LoadError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// fold,accuracy
inline std::string folds_csv(const MetricsRecord& m) {
  std::ostringstream os;
  os << "fold,accuracy\n";
  for (std::size_t k = 0; k < m.fold_accuracy.size(); ++k) os << k << ',' << format_double(m.fold_accuracy[k]) << '\n';
  return os.str();
}

/// fold,epoch,total,supervised,contrastive,train_accuracy
inline std::string loss_trace_csv(const MetricsRecord& m) {
  std::ostringstream os;
  os << "fold,epoch,total,supervised,contrastive,train_accuracy\n";
  for (std::size_t k = 0; k < m.traces.size(); ++k)
    for (const auto& t : m.traces[k])
      os << k << ',' << t.epoch << ',' << format_double(t.total) << ',' << format_double(t.supervised) << ','
         << format_double(t.contrastive) << ',' << format_double(t.train_accuracy) << '\n';
  return os.str();
}

inline nlohmann::json summary_json(const MetricsRecord& m) {
  return {{"mean", m.mean}, {"std", m.std}, {"folds", m.fold_accuracy.size()}, {"accuracies", m.fold_accuracy}};
}

/// config,fold,accuracy
inline std::string sweep_csv(const std::vector<std::pair<std::string, MetricsRecord>>& rows) {
  std::ostringstream os;
  os << "config,fold,accuracy\n";
  for (const auto& [label, m] : rows)
    for (std::size_t k = 0; k < m.fold_accuracy.size(); ++k)
      os << label << ',' << k << ',' << format_double(m.fold_accuracy[k]) << '\n';
  return os.str();
}

}  // namespace dsgc
