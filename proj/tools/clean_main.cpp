// clean: speech-corpus cleaning pipeline driver.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 internal error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "binary_io.hpp"
#include "clean/error.hpp"
#include "clean/lid.hpp"
#include "clean/pipeline.hpp"
#include "clean/report.hpp"
#include "clean/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

std::vector<double> parse_thetas(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw clean::Error(clean::ErrorKind::Config, "bad theta value '" + item + "'");
    }
  }
  return out;
}

clean::PipelineConfig load_run_config(const std::string& path, std::optional<double> theta,
                                      std::optional<int> workers, bool skip_bad) {
  auto cfg = clean::load_config(path);
  if (theta) cfg.theta_ctc = *theta;
  if (workers) cfg.workers = *workers;
  if (skip_bad) cfg.skip_bad = true;
  clean::validate_config(cfg);
  return cfg;
}

void print_summary(const clean::RunResult& r) {
  const auto& rep = r.report;
  std::printf("%s\n", clean::format_text_table(std::span(&rep, 1)).c_str());
  for (auto s : clean::kStages)
    std::printf("%-15s %8zu utterances %10.3f h\n", std::string(clean::stage_name(s)).c_str(),
                rep.stage(s).total.utterance_count, rep.stage(s).total.hours);
  std::printf("rejected recordings: %zu\n", rep.rejections.size());
  std::printf("manifest: %s\nreport:   %s\n", r.manifest_path.string().c_str(), r.report_path.string().c_str());
  std::fprintf(stderr, "timings: resegmentation %.3fs, lid_filter %.3fs, ctc_filter %.3fs%s\n", r.stage_seconds[0],
               r.stage_seconds[1], r.stage_seconds[2], r.from_cache ? " (stages 1-2 from cache)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech corpus cleaning: CTC resegmentation, LID agreement and confidence filtering"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<double> theta;
  std::optional<int> workers;
  bool skip_bad = false;
  auto* run = app.add_subcommand("run", "Run all three stages");
  run->add_option("--config", config_path, "Pipeline config file")->required();
  run->add_option("--theta", theta, "Low-confidence quantile in [0, 1]");
  run->add_option("--workers", workers, "Worker threads for resegmentation");
  run->add_flag("--skip-bad", skip_bad, "Reject unreadable recordings instead of aborting");

  std::string thetas;
  auto* sweep = app.add_subcommand("sweep", "Rerun stage 3 for several thresholds");
  sweep->add_option("--config", config_path, "Pipeline config file")->required();
  sweep->add_option("--thetas", thetas, "Comma separated thresholds")->required();
  sweep->add_option("--workers", workers, "Worker threads for resegmentation");
  sweep->add_flag("--skip-bad", skip_bad, "Reject unreadable recordings instead of aborting");

  std::string corpus_path, model_out, alias_path;
  clean::TextLidConfig lid_cfg;
  auto* lid_train = app.add_subcommand("lid-train", "Train the n-gram text LID model");
  lid_train->add_option("--corpus", corpus_path, "label<TAB>text lines")->required();
  lid_train->add_option("--out", model_out, "Output model file")->required();
  lid_train->add_option("--epochs", lid_cfg.epochs, "SGD epochs")->check(CLI::Range(1, 1000));
  lid_train->add_option("--seed", lid_cfg.seed, "Shuffle seed");
  lid_train->add_option("--alias-table", alias_path, "Language alias table");

  std::vector<std::string> report_in;
  std::string format = "text-table";
  auto* report = app.add_subcommand("report", "Render machine reports");
  report->add_option("--in", report_in, "Machine report (repeat for a sweep table)")->required();
  report->add_option("--format", format, "Output format")->check(CLI::IsMember({"text-table", "machine"}));

  std::string spec_path, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
  synth->add_option("--spec", spec_path, "Synthetic spec file")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      print_summary(clean::run_pipeline(load_run_config(config_path, theta, workers, skip_bad)));
    } else if (*sweep) {
      const auto cfg = load_run_config(config_path, std::nullopt, workers, skip_bad);
      const auto results = clean::sweep_thresholds(
          cfg, parse_thetas(thetas), [](const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); });
      std::vector<clean::CleaningReport> reports;
      for (const auto& r : results) reports.push_back(r.report);
      std::printf("%s", clean::format_text_table(reports).c_str());
    } else if (*lid_train) {
      const auto languages =
          alias_path.empty() ? clean::LanguageTable::builtin() : clean::LanguageTable::load(alias_path);
      const auto corpus = clean::load_lid_corpus(corpus_path, languages);
      const auto model = clean::train_text_lid(corpus, lid_cfg);
      clean::save_text_lid(model_out, model);
      std::printf("trained %zu labels on %zu samples -> %s\n", model.num_labels(), corpus.size(), model_out.c_str());
    } else if (*report) {
      std::vector<clean::CleaningReport> reports;
      for (const auto& path : report_in) {
        const auto data = clean::detail::read_file(path);
        reports.push_back(clean::parse_machine_report(std::string_view(data.data(), data.size())));
      }
      if (format == "machine") {
        for (const auto& r : reports) std::printf("%s", clean::format_machine_report(r).c_str());
      } else {
        std::printf("%s", clean::format_text_table(reports).c_str());
      }
    } else if (*synth) {
      const auto spec = clean::load_synth_spec(spec_path);
      const auto corpus = clean::generate_corpus(spec);
      clean::write_corpus(corpus, synth_out);
      std::printf("wrote %zu recordings to %s\n", corpus.recordings.size(), synth_out.c_str());
    }
  } catch (const clean::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == clean::ErrorKind::Config ? kExitConfig : kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitOk;
}
