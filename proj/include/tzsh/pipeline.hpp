#pragma once

// Joint training of the shared network with the coarse, fine, and hash
// objectives; epoch loop, evaluation, and checkpointing.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tzsh/backbone.hpp"
#include "tzsh/coarse_miner.hpp"
#include "tzsh/fine_miner.hpp"
#include "tzsh/hash_loss.hpp"
#include "tzsh/keyvalue.hpp"
#include "tzsh/retrieval.hpp"
#include "tzsh/synthdata.hpp"

namespace tzsh {

struct TrainConfig {
  std::size_t rs = 128;  // source mini-batch
  std::size_t ru = 256;  // unlabeled mini-batch
  std::size_t m = 32;    // coarse groups
  std::size_t ny = 0;    // novel classes; 0 means "take from the vocabulary"
  std::size_t l = 32;    // code bits
  double lr = 0.01;
  std::size_t epochs = 50;
  std::size_t warmup_steps = 0;
  double lambda_coarse = 1.0;
  double lambda_fine = 1.0;
  double lambda_hash = 1.0;
  double eps = 0.0;      // 0 means 2·l
  long long tau_sim = -1;  // -1 means ⌊l/4⌋
  long long tau_dis = -1;  // -1 means ⌈l/2⌉
  std::uint64_t seed = 1;
  std::vector<std::size_t> backbone_widths{64, 32};
  /// Ablation: the hash loss sees source rows only and the fine loss drops
  /// its mined-target term.
  bool source_only = false;
  std::size_t eval_radius = 2;

  double margin() const { return eps > 0.0 ? eps : 2.0 * static_cast<double>(l); }
  std::size_t sim_threshold() const;
  std::size_t dis_threshold() const;

  void validate() const;
  static TrainConfig from_file(const KeyValueFile& kv);
  static TrainConfig load(const std::filesystem::path& path);
  /// key=value text accepted by from_file.
  std::string to_text() const;
};

/// Shared backbone plus the three heads, all parameters in one store.
class Model {
 public:
  Model(const BackboneConfig& backbone, std::size_t n_novel, std::size_t bits,
        std::uint64_t seed);
  /// Rebuilds the architecture from checkpointed parameters.
  explicit Model(ParamStore params);

  const Backbone& backbone() const { return backbone_; }
  const CoarseHead& coarse() const { return coarse_; }
  const FineHead& fine() const { return fine_; }
  const HashHead& hash() const { return hash_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::size_t n_novel() const;
  std::size_t bits() const { return hash_.bits(params_); }

  /// Relaxed codes h for feature rows.
  Tensor2 encode(const Tensor2& features) const;
  /// True when every parameter has the same name and shape as in `other`.
  bool same_architecture(const ParamStore& other) const;

 private:
  Backbone backbone_;
  CoarseHead coarse_;
  FineHead fine_;
  HashHead hash_;
  ParamStore params_;
};

struct LossWeights {
  double coarse = 1.0;
  double fine = 1.0;
  double hash = 1.0;
};

/// Discrete decisions made during one forward pass. Passing them back in
/// freezes them, which makes the loss a smooth function of the parameters.
struct StepChoices {
  CoarseSelection coarse;
  std::vector<std::size_t> fine;       // row of the coarse selection chosen per novel class
  std::vector<int> target_classes;     // predicted novel class id of each mined row
  std::optional<PairLabels> pairs;
};

struct StepLosses {
  double coarse = 0.0;
  double fine = 0.0;
  double hash = 0.0;  // contrastive sum divided by the number of active pairs
  double total = 0.0;
  std::size_t hash_active_pairs = 0;
};

struct StepResult {
  StepLosses losses;
  StepChoices choices;
  Tensor2 grad_f_u;  // dL/d(unlabeled embeddings)
  Tensor2 grad_f_s;  // dL/d(source embeddings)
};

/// Forward pass plus backward pass. Gradients are accumulated into the
/// model's parameter store, which the caller zeroes beforehand.
StepResult forward_backward(Model& model, const FeatureBatch& src, const FeatureBatch& unl,
                            const SoftLabelTable& soft, const TrainConfig& cfg,
                            const LossWeights& weights, const StepChoices* frozen = nullptr);

/// Loss weights in force at the model's current step (warmup zeroes fine and hash).
LossWeights weights_at_step(const TrainConfig& cfg, std::uint64_t step);

/// One SGD step on the weighted loss. Throws TrainingError on a non-finite loss.
StepResult train_step(Model& model, const FeatureBatch& src, const FeatureBatch& unl,
                      const SoftLabelTable& soft, const TrainConfig& cfg);

/// Batch order for one epoch, a pure function of (seed, epoch).
struct EpochPlan {
  std::vector<std::vector<std::size_t>> source_batches;
  std::vector<std::vector<std::size_t>> unlabeled_batches;
};

EpochPlan plan_epoch(const FeatureBatch& source, std::size_t n_unlabeled, const TrainConfig& cfg,
                     std::size_t epoch);
std::size_t steps_per_epoch(std::size_t n_unlabeled, const TrainConfig& cfg);

struct RetrievalScores {
  double map = 0.0;
  double precision_at_radius = 0.0;
};

/// Novel-class queries against the database (source rows and unlabeled rows).
RetrievalScores evaluate_retrieval(const Model& model, const FeatureBatch& source,
                                   const FeatureBatch& unlabeled, const EvaluationSet& eval,
                                   std::size_t radius);

/// Fraction of coarse-selected rows that truly belong to a novel class, over
/// consecutive r^u-row batches of the unlabeled set in stored order.
double coarse_selection_purity(const Model& model, const FeatureBatch& unlabeled,
                               const EvaluationSet& eval, const ClassVocabulary& vocab,
                               const TrainConfig& cfg);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  StepLosses losses;  // means over the epoch's steps
  std::optional<double> map;
  std::optional<double> precision_at_radius;
  std::optional<double> coarse_purity;
  double wall_seconds = 0.0;

  /// JSON line without wall time, so that identical runs produce identical files.
  std::string to_json() const;
};

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  bool quiet = false;
};

inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kTimingFile = "timing.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

/// Trains for cfg.epochs epochs (continuing from a checkpoint when resuming),
/// appending one MetricsRecord per epoch to <out>/metrics.jsonl and writing
/// <out>/checkpoint.bin after every epoch. Returns the trained model.
Model run_training(const TrainConfig& cfg, const Dataset& data, const EvaluationSet* eval,
                   const RunOptions& options, std::vector<MetricsRecord>* records = nullptr);

}  // namespace tzsh
