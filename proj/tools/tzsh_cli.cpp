// Command-line front end: synth, train, encode, eval.
//
// Exit codes: 0 success, 1 usage/configuration, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "tzsh/errors.hpp"
#include "tzsh/pipeline.hpp"
#include "tzsh/retrieval.hpp"
#include "tzsh/synthdata.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
  const tzsh::SynthSpec spec = tzsh::SynthSpec::load(spec_path);
  const tzsh::Dataset data = tzsh::generate(spec);
  tzsh::save_dataset(data, out);
  std::cerr << "wrote " << data.source.size() << " source, " << data.unlabeled.size()
            << " unlabeled, " << data.eval.queries.size() << " query rows to " << out << '\n';
  return kOk;
}

int cmd_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out,
              const std::optional<fs::path>& resume, bool quiet) {
  const tzsh::TrainConfig cfg = tzsh::TrainConfig::load(config_path);
  const tzsh::Dataset data = tzsh::load_training_data(data_dir);
  std::optional<tzsh::EvaluationSet> eval;
  if (fs::exists(data_dir / tzsh::kQueriesFile) && fs::exists(data_dir / tzsh::kTruthFile)) {
    eval = tzsh::load_evaluation_set(data_dir);
  }
  tzsh::RunOptions opts;
  opts.out_dir = out;
  opts.resume_from = resume;
  opts.quiet = quiet;
  tzsh::run_training(cfg, data, eval ? &*eval : nullptr, opts);
  return kOk;
}

int cmd_encode(const fs::path& checkpoint, const fs::path& features, const fs::path& out) {
  const tzsh::Model model(tzsh::load_checkpoint(checkpoint));
  const tzsh::FeatureBatch batch = tzsh::load_features(features);
  const tzsh::Tensor2 h = model.encode(batch.features());
  const tzsh::CodeIndex codes = batch.has_labels() ? tzsh::binarize(h, batch.labels())
                                                   : tzsh::binarize(h);
  codes.save(out);
  return kOk;
}

int cmd_eval(const fs::path& queries_path, const fs::path& db_path, std::size_t radius,
             const fs::path& out) {
  const tzsh::CodeIndex queries = tzsh::CodeIndex::load(queries_path);
  const tzsh::CodeIndex db = tzsh::CodeIndex::load(db_path);
  const auto map = tzsh::mean_average_precision(queries, db);
  const auto prec = tzsh::precision_at_radius(queries, db, radius);
  std::ofstream o(out, std::ios::trunc);
  if (!o) throw tzsh::DataError("cannot write " + out.string());
  o << tzsh::metric_json_line("map", queries.bits(), map.value) << '\n';
  o << tzsh::metric_json_line("precision@" + std::to_string(radius), queries.bits(), prec.value)
    << '\n';
  std::cout << "MAP " << map.value << "  precision@" << radius << ' ' << prec.value << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transductive zero-shot hashing with coarse-to-fine similarity mining"};
  app.require_subcommand(1);

  fs::path spec_path, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic zero-shot benchmark");
  synth->add_option("--spec", spec_path, "key=value benchmark spec")->required();
  synth->add_option("--out", synth_out, "output dataset directory")->required();

  fs::path config_path, data_dir, train_out;
  std::optional<fs::path> resume;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train the model");
  train->add_option("--config", config_path, "key=value training config")->required();
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory for metrics and checkpoint")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_flag("--quiet", quiet, "do not echo per-epoch metrics");

  fs::path checkpoint, features, codes_out;
  auto* encode = app.add_subcommand("encode", "Binarize features with a trained checkpoint");
  encode->add_option("--checkpoint", checkpoint)->required();
  encode->add_option("--features", features)->required();
  encode->add_option("--out", codes_out)->required();

  fs::path queries_path, db_path, eval_out;
  std::size_t radius = 2;
  auto* eval = app.add_subcommand("eval", "MAP and precision within a Hamming radius");
  eval->add_option("--queries", queries_path)->required();
  eval->add_option("--db", db_path)->required();
  eval->add_option("--radius", radius)->capture_default_str();
  eval->add_option("--out", eval_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(spec_path, synth_out);
    if (*train) return cmd_train(config_path, data_dir, train_out, resume, quiet);
    if (*encode) return cmd_encode(checkpoint, features, codes_out);
    if (*eval) return cmd_eval(queries_path, db_path, radius, eval_out);
  } catch (const tzsh::TrainingError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const tzsh::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const tzsh::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const tzsh::DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
