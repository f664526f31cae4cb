#include "clean/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <json.hpp>

#include "clean/error.hpp"

namespace clean {

using ojson = nlohmann::ordered_json;

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::Resegmentation: return "resegmentation";
    case Stage::LidFilter: return "lid_filter";
    case Stage::CtcFilter: return "ctc_filter";
  }
  return "unknown";
}

namespace {

Stage stage_from_name(std::string_view name, std::size_t line) {
  for (Stage s : kStages)
    if (stage_name(s) == name) return s;
  throw Error(ErrorKind::SchemaViolation, "unknown stage '" + std::string(name) + "'", line);
}

}  // namespace

void StageStats::add(const std::string& language, double seconds) {
  auto& st = per_language[language];
  st.utterance_count += 1;
  st.hours += seconds / 3600.0;
}

void StageStats::finalize() {
  total = {};
  for (const auto& [lang, st] : per_language) {
    total.utterance_count += st.utterance_count;
    total.hours += st.hours;
  }
}

std::string format_machine_report(const CleaningReport& report) {
  std::string out;
  auto emit = [&](const ojson& j) {
    out += j.dump();
    out += '\n';
  };

  ojson meta;
  meta["type"] = "meta";
  meta["version"] = report.version;
  meta["config_hash"] = report.config_hash;
  meta["theta_ctc"] = report.theta_ctc;
  meta["quantile_basis"] = kQuantileBasis;
  ojson cfg = ojson::object();
  for (const auto& [k, v] : report.config) cfg[k] = v;
  meta["config"] = std::move(cfg);
  emit(meta);

  for (Stage s : kStages) {
    const auto& st = report.stage(s);
    auto record = [&](const std::string& lang, const LanguageStats& ls) {
      ojson j;
      j["type"] = "stage";
      j["stage"] = stage_name(s);
      j["language"] = lang;
      j["utterance_count"] = ls.utterance_count;
      j["hours"] = ls.hours;
      emit(j);
    };
    for (const auto& [lang, ls] : st.per_language) record(lang, ls);
    record("*", st.total);
  }
  for (const auto& [lang, th] : report.thresholds) {
    ojson j;
    j["type"] = "threshold";
    j["language"] = lang;
    if (std::isfinite(th.cutoff)) j["cutoff"] = th.cutoff;
    else j["cutoff"] = nullptr;
    j["cutoff_utterance_id"] = th.cutoff_utterance_id;
    j["sample_count"] = th.sample_count;
    j["low_count"] = th.low_count;
    emit(j);
  }
  for (const auto& [lang, drift] : report.mean_start_drift_s) {
    ojson j;
    j["type"] = "drift";
    j["language"] = lang;
    j["mean_start_drift_s"] = drift;
    emit(j);
  }
  for (const auto& id : report.band_bound_recordings) {
    ojson j;
    j["type"] = "band";
    j["recording_id"] = id;
    emit(j);
  }
  for (const auto& r : report.rejections) {
    ojson j;
    j["type"] = "rejection";
    j["recording_id"] = r.recording_id;
    j["reason"] = r.reason;
    j["stage"] = r.stage;
    emit(j);
  }
  if (report.error) {
    ojson j;
    j["type"] = "error";
    j["message"] = *report.error;
    emit(j);
  }
  return out;
}

CleaningReport parse_machine_report(std::string_view text) {
  using nlohmann::json;
  CleaningReport report;
  report.version.clear();
  bool have_meta = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "meta") {
        have_meta = true;
        report.version = j.at("version").get<std::string>();
        report.config_hash = j.at("config_hash").get<std::string>();
        report.theta_ctc = j.at("theta_ctc").get<double>();
        if (j.contains("quantile_basis") && j["quantile_basis"].get<std::string>() != kQuantileBasis)
          throw Error(ErrorKind::SchemaViolation, "unsupported quantile basis", line_no);
        // Parse the echo through ordered_json to keep field order.
        const auto echo = ojson::parse(line).at("config");
        for (const auto& [k, v] : echo.items()) report.config.emplace_back(k, v.get<std::string>());
      } else if (type == "stage") {
        auto& st = report.stage(stage_from_name(j.at("stage").get<std::string>(), line_no));
        const auto lang = j.at("language").get<std::string>();
        LanguageStats ls{j.at("utterance_count").get<std::size_t>(), j.at("hours").get<double>()};
        if (lang == "*") st.total = ls;
        else st.per_language[lang] = ls;
      } else if (type == "threshold") {
        LanguageThreshold th;
        th.language = j.at("language").get<std::string>();
        const auto& cut = j.at("cutoff");
        th.cutoff = cut.is_null() ? -std::numeric_limits<double>::infinity() : cut.get<double>();
        th.cutoff_utterance_id = j.at("cutoff_utterance_id").get<std::string>();
        th.sample_count = j.at("sample_count").get<std::size_t>();
        th.low_count = j.at("low_count").get<std::size_t>();
        report.thresholds.emplace(th.language, th);
      } else if (type == "drift") {
        report.mean_start_drift_s[j.at("language").get<std::string>()] = j.at("mean_start_drift_s").get<double>();
      } else if (type == "band") {
        report.band_bound_recordings.push_back(j.at("recording_id").get<std::string>());
      } else if (type == "rejection") {
        report.rejections.push_back({j.at("recording_id").get<std::string>(), j.at("reason").get<std::string>(),
                                     j.at("stage").get<std::string>()});
      } else if (type == "error") {
        report.error = j.at("message").get<std::string>();
      } else {
        throw Error(ErrorKind::SchemaViolation, "unknown record type '" + type + "'", line_no);
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, e.what(), line_no);
    }
  }
  if (!have_meta) throw Error(ErrorKind::SchemaViolation, "report has no meta record");
  return report;
}

std::string format_text_table(std::span<const CleaningReport> reports) {
  std::string out;
  if (reports.empty()) return out;
  std::set<std::string> languages;
  for (const auto& r : reports)
    for (const auto& [lang, st] : r.stage(Stage::CtcFilter).per_language) languages.insert(lang);
  const auto& head = reports.front().stage(Stage::CtcFilter).per_language;
  auto hours_in = [](const std::map<std::string, LanguageStats>& m, const std::string& lang) {
    auto it = m.find(lang);
    return it == m.end() ? 0.0 : it->second.hours;
  };
  std::vector<std::string> columns(languages.begin(), languages.end());
  std::stable_sort(columns.begin(), columns.end(), [&](const std::string& a, const std::string& b) {
    return hours_in(head, a) > hours_in(head, b);
  });

  char cell[64];
  auto put = [&](const char* s) {
    std::snprintf(cell, sizeof(cell), "%10s", s);
    out += cell;
  };
  auto put_hours = [&](double h) {
    char num[48];
    std::snprintf(num, sizeof(num), "%.3f", h);
    put(num);
  };
  put("theta");
  put("Total");
  for (const auto& c : columns) put(c.c_str());
  out += '\n';
  for (const auto& r : reports) {
    char theta[32];
    std::snprintf(theta, sizeof(theta), "%.2f", r.theta_ctc);
    put(theta);
    const auto& st = r.stage(Stage::CtcFilter);
    put_hours(st.total.hours);
    for (const auto& c : columns) put_hours(hours_in(st.per_language, c));
    out += '\n';
  }
  return out;
}

}  // namespace clean
