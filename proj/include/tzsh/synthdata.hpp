#pragma once

// Synthetic zero-shot benchmark and feature/dataset file I/O.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tzsh/backbone.hpp"
#include "tzsh/fine_miner.hpp"
#include "tzsh/keyvalue.hpp"

namespace tzsh {

struct SynthSpec {
  std::size_t n_seen = 8;
  std::size_t n_novel = 2;
  std::size_t feature_dim = 32;
  double sigma_between = 3.0;  // per-coordinate std of class means
  double sigma_within = 1.0;   // per-coordinate std around a class mean
  std::size_t word_dim = 50;
  /// Target cosine between novel class k and its paired seen class. One value
  /// applies to every novel class; otherwise one per novel class.
  std::vector<double> rho{0.6};
  std::size_t n_source = 800;
  std::size_t n_unlabeled = 1600;
  std::size_t n_queries = 200;
  double novel_fraction = 0.5;  // share of novel-class rows in the unlabeled set
  std::uint64_t seed = 7;

  void validate() const;
  double rho_for(std::size_t novel_index) const;
  /// Seen class paired with novel class k.
  std::size_t paired_seen(std::size_t novel_index) const;

  static SynthSpec from_file(const KeyValueFile& kv);
  static SynthSpec load(const std::filesystem::path& path);
};

/// Ground-truth labels for the unlabeled rows. Training code never receives
/// this type; only the evaluation interface consumes it.
class HiddenLabels {
 public:
  HiddenLabels() = default;
  explicit HiddenLabels(std::vector<int> labels) : labels_(std::move(labels)) {}
  const std::vector<int>& reveal_for_evaluation() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  friend bool operator==(const HiddenLabels&, const HiddenLabels&) = default;

 private:
  std::vector<int> labels_;
};

/// Everything needed to score retrieval: novel-class queries and the
/// database (source rows plus unlabeled rows with their hidden labels).
struct EvaluationSet {
  FeatureBatch queries = FeatureBatch::unlabeled({});
  HiddenLabels unlabeled_truth;

  Tensor2 database_features(const FeatureBatch& source, const FeatureBatch& unlabeled) const;
  std::vector<int> database_labels(const FeatureBatch& source) const;
};

struct Dataset {
  FeatureBatch source = FeatureBatch::unlabeled({});
  FeatureBatch unlabeled = FeatureBatch::unlabeled({});
  ClassVocabulary vocab;
  EvaluationSet eval;
};

/// Deterministic in spec.seed. Class ids: seen classes 0..n_seen-1, novel
/// classes n_seen..n_seen+n_novel-1.
Dataset generate(const SynthSpec& spec);

/// Feature file: header "<d_in> <n>", then n lines "<label|?> v1 .. v_d".
FeatureBatch load_features(const std::filesystem::path& path);
void save_features(const FeatureBatch& batch, const std::filesystem::path& path);
/// Loads a labeled feature file (queries); every row must carry a label.
FeatureBatch load_labeled_features(const std::filesystem::path& path);

// Dataset directory layout.
inline constexpr const char* kSourceFile = "source.feat";
inline constexpr const char* kUnlabeledFile = "unlabeled.feat";
inline constexpr const char* kQueriesFile = "queries.feat";
inline constexpr const char* kTruthFile = "unlabeled.truth";
inline constexpr const char* kVocabFile = "vocab.txt";

void save_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Training inputs only; the evaluation set is loaded separately.
Dataset load_training_data(const std::filesystem::path& dir);
EvaluationSet load_evaluation_set(const std::filesystem::path& dir);

}  // namespace tzsh
