#include "voxl/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "voxl/error.hpp"

namespace voxl {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string report_csv(const LifelongReport& report) {
  std::ostringstream os;
  os << "round,environment,task,case_id,error\n";
  for (const auto& c : report.cases) {
    os << c.round << ',' << c.environment << ',' << c.task << ',' << c.case_id << ',' << fmt(c.error) << '\n';
  }
  return os.str();
}

std::string report_json(const LifelongReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["method"] = report.method;
  j["seed"] = report.seed;
  ordered_json summaries = ordered_json::array();
  for (const auto& s : report.summaries) {
    summaries.push_back({{"round", s.round},
                         {"environment", s.environment},
                         {"task", s.task},
                         {"mean", s.mean},
                         {"stddev", s.stddev},
                         {"errors", s.errors}});
  }
  j["summaries"] = std::move(summaries);
  ordered_json cases = ordered_json::array();
  for (const auto& c : report.cases) {
    cases.push_back({{"round", c.round},
                     {"environment", c.environment},
                     {"task", c.task},
                     {"case_id", c.case_id},
                     {"prediction", {c.prediction.x, c.prediction.y, c.prediction.z}},
                     {"error", c.error}});
  }
  j["cases"] = std::move(cases);
  ordered_json epochs = ordered_json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"round", e.round}, {"task", e.task}, {"epoch", e.epoch}, {"seconds", e.seconds}});
  }
  j["epochs"] = std::move(epochs);
  if (!report.config_json.empty()) {
    j["config"] = ordered_json::parse(report.config_json, nullptr, false);
  }
  return j.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kUnwritable, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kUnwritable, "short write to " + path.string());
}

}  // namespace voxl
