#include "tzsh/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "tzsh/errors.hpp"

namespace tzsh {

// ---------------------------------------------------------------------------
// TrainConfig

std::size_t TrainConfig::sim_threshold() const {
  return tau_sim >= 0 ? static_cast<std::size_t>(tau_sim) : l / 4;
}

std::size_t TrainConfig::dis_threshold() const {
  return tau_dis >= 0 ? static_cast<std::size_t>(tau_dis) : (l + 1) / 2;
}

void TrainConfig::validate() const {
  if (rs == 0 || ru == 0) throw ConfigError("batch sizes must be >= 1");
  if (m == 0) throw ConfigError("m must be >= 1");
  if (ru % m != 0) {
    throw ConfigError("ru=" + std::to_string(ru) + " is not divisible by m=" + std::to_string(m));
  }
  if (l == 0 || l > kMaxCodeBits) throw ConfigError("l must be in [1, " + std::to_string(kMaxCodeBits) + "]");
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("lr must be finite and >= 0");
  for (double w : {lambda_coarse, lambda_fine, lambda_hash}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (!std::isfinite(eps) || eps < 0.0) throw ConfigError("eps must be >= 0 (0 selects 2*l)");
  if (sim_threshold() > dis_threshold() || dis_threshold() > l) {
    throw ConfigError("need 0 <= tau_sim <= tau_dis <= l");
  }
  if (backbone_widths.empty()) throw ConfigError("backbone_widths must list at least one layer");
  for (std::size_t w : backbone_widths) {
    if (w == 0) throw ConfigError("backbone widths must be >= 1");
  }
}

TrainConfig TrainConfig::from_file(const KeyValueFile& kv) {
  kv.check_keys({"rs", "ru", "m", "ny", "l", "lr", "epochs", "warmup_steps", "lambda_coarse",
                 "lambda_fine", "lambda_hash", "eps", "tau_sim", "tau_dis", "seed",
                 "backbone_widths", "source_only", "eval_radius"});
  TrainConfig c;
  c.rs = kv.get_count("rs", c.rs);
  c.ru = kv.get_count("ru", c.ru);
  c.m = kv.get_count("m", c.m);
  c.ny = kv.get_count("ny", c.ny);
  c.l = kv.get_count("l", c.l);
  c.lr = kv.get_double("lr", c.lr);
  c.epochs = kv.get_count("epochs", c.epochs);
  c.warmup_steps = kv.get_count("warmup_steps", c.warmup_steps);
  c.lambda_coarse = kv.get_double("lambda_coarse", c.lambda_coarse);
  c.lambda_fine = kv.get_double("lambda_fine", c.lambda_fine);
  c.lambda_hash = kv.get_double("lambda_hash", c.lambda_hash);
  c.eps = kv.get_double("eps", c.eps);
  c.tau_sim = kv.get_int("tau_sim", c.tau_sim);
  c.tau_dis = kv.get_int("tau_dis", c.tau_dis);
  c.seed = kv.get_count("seed", c.seed);
  c.backbone_widths = kv.get_counts("backbone_widths", c.backbone_widths);
  c.source_only = kv.get_bool("source_only", c.source_only);
  c.eval_radius = kv.get_count("eval_radius", c.eval_radius);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  return from_file(KeyValueFile::load(path));
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "rs=" << rs << "\nru=" << ru << "\nm=" << m << "\nny=" << ny << "\nl=" << l
      << "\nlr=" << lr << "\nepochs=" << epochs << "\nwarmup_steps=" << warmup_steps
      << "\nlambda_coarse=" << lambda_coarse << "\nlambda_fine=" << lambda_fine
      << "\nlambda_hash=" << lambda_hash << "\neps=" << eps << "\ntau_sim=" << tau_sim
      << "\ntau_dis=" << tau_dis << "\nseed=" << seed << "\nbackbone_widths=";
  for (std::size_t i = 0; i < backbone_widths.size(); ++i) {
    out << (i ? "," : "") << backbone_widths[i];
  }
  out << "\nsource_only=" << (source_only ? "true" : "false") << "\neval_radius=" << eval_radius
      << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Model

Model::Model(const BackboneConfig& backbone, std::size_t n_novel, std::size_t bits,
             std::uint64_t seed)
    : backbone_(backbone) {
  if (n_novel == 0) throw ConfigError("model needs at least one novel class");
  std::mt19937_64 rng(seed);
  backbone_.init(params_, rng);
  const std::size_t d = backbone_.config().output_dim();
  coarse_.init(params_, d, rng);
  fine_.init(params_, d, n_novel, rng);
  hash_.init(params_, d, bits, rng);
}

Model::Model(ParamStore params)
    : backbone_(Backbone::from_params(params)), params_(std::move(params)) {
  const std::size_t d = backbone_.config().output_dim();
  for (const char* head : {"coarse", "fine", "hash"}) {
    const std::string w = std::string(head) + ".W";
    const std::string b = std::string(head) + ".b";
    if (!params_.contains(w) || !params_.contains(b)) {
      throw DataError(std::string("checkpoint is missing the ") + head + " head");
    }
    if (params_.value(w).rows() != d || params_.value(b).cols() != params_.value(w).cols()) {
      throw DimensionError(std::string(head) + " head does not match the backbone output");
    }
  }
  if (params_.value("coarse.W").cols() != 2) throw DimensionError("coarse head must have 2 outputs");
}

std::size_t Model::n_novel() const { return params_.value("fine.W").cols(); }

Tensor2 Model::encode(const Tensor2& features) const {
  return hash_.codes(backbone_.forward(features, params_).output, params_);
}

bool Model::same_architecture(const ParamStore& other) const {
  const auto& a = params_.entries();
  const auto& b = other.entries();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !a[i].value.same_shape(b[i].value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Forward / backward

StepResult forward_backward(Model& model, const FeatureBatch& src, const FeatureBatch& unl,
                            const SoftLabelTable& soft, const TrainConfig& cfg,
                            const LossWeights& weights, const StepChoices* frozen) {
  if (src.stream() != Stream::source || unl.stream() != Stream::unlabeled || unl.has_labels()) {
    throw ConfigError("train step expects a labeled source batch and an unlabeled batch");
  }
  if (src.size() == 0 || unl.size() == 0) throw ConfigError("empty stream");
  ParamStore& params = model.params();
  const std::size_t ny = model.n_novel();
  if (soft.rows.cols() != ny) throw DimensionError("soft labels do not match the fine head width");

  // Shared representation for both streams.
  const BackboneTape tape_s = model.backbone().forward(src.features(), params);
  const BackboneTape tape_u = model.backbone().forward(unl.features(), params);
  const Tensor2& f_s = tape_s.output;
  const Tensor2& f_u = tape_u.output;

  StepResult out;
  StepChoices& ch = out.choices;

  // Coarse stage.
  const CoarseScores scores = model.coarse().score(f_u, f_s, params);
  ch.coarse = frozen ? frozen->coarse : select_novel(scores.c_u, cfg.m);
  const CoarseLossResult cl = coarse_loss(scores, ch.coarse);

  // Fine stage on the coarse-selected rows.
  const Tensor2 f_sel = f_u.gather_rows(ch.coarse.indices);
  const Tensor2 p_s = softmax_rows(model.fine().logits(f_s, params));
  const Tensor2 p_u = softmax_rows(model.fine().logits(f_sel, params));
  ch.fine = frozen ? frozen->fine : assign(p_u);
  const Tensor2 soft_s = soft_labels(src.labels(), soft);
  FineLossResult fl = fine_loss(p_s, p_u, ch.fine, soft_s);
  if (cfg.source_only) {
    fl.loss = fl.source_term;
    fl.target_term = 0.0;
    fl.grad_logits_u.fill(0.0);
  }

  // Hash stage: source rows plus one mined row per novel class.
  std::vector<std::size_t> target_rows;
  if (frozen) {
    ch.target_classes = frozen->target_classes;
  } else {
    ch.target_classes.clear();
    for (std::size_t k = 0; k < ny; ++k) {
      auto row = p_u.row(ch.fine[k]);
      ch.target_classes.push_back(
          static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  if (!cfg.source_only) {
    for (std::size_t k = 0; k < ny; ++k) target_rows.push_back(ch.coarse.indices[ch.fine[k]]);
  }
  const Tensor2 f_t = f_u.gather_rows(target_rows);
  HashBatch hb;
  hb.h = model.hash().codes(f_s, params);
  for (int label : src.labels()) hb.origin.push_back(RowOrigin::source(label));
  if (!target_rows.empty()) {
    hb.h = vstack(hb.h, model.hash().codes(f_t, params));
    for (std::size_t k = 0; k < target_rows.size(); ++k) {
      hb.origin.push_back(RowOrigin::mined(ch.target_classes[k]));
    }
  }
  if (frozen && frozen->pairs) {
    ch.pairs = frozen->pairs;
  } else {
    ch.pairs = pair_labels(hb, cfg.sim_threshold(), cfg.dis_threshold());
  }
  ContrastiveResult cr = contrastive_loss(hb, *ch.pairs, cfg.margin());
  const double pair_norm = cr.active_pairs ? 1.0 / static_cast<double>(cr.active_pairs) : 0.0;

  out.losses.coarse = cl.loss;
  out.losses.fine = fl.loss;
  out.losses.hash = cr.loss * pair_norm;
  out.losses.hash_active_pairs = cr.active_pairs;
  out.losses.total = weights.coarse * out.losses.coarse + weights.fine * out.losses.fine +
                     weights.hash * out.losses.hash;

  // Reverse pass. Unlabeled rows receive gradient only through the rows the
  // selection layers picked.
  Tensor2 d_fs(f_s.rows(), f_s.cols());
  Tensor2 d_fu(f_u.rows(), f_u.cols());
  if (weights.coarse != 0.0) {
    auto [du, ds] = model.coarse().backward(f_u, f_s, cl, weights.coarse, params);
    d_fu += du;
    d_fs += ds;
  }
  if (weights.fine != 0.0) {
    Tensor2 gs = fl.grad_logits_s;
    gs *= weights.fine;
    d_fs += model.fine().backward(f_s, gs, params);
    Tensor2 gu = fl.grad_logits_u;
    gu *= weights.fine;
    d_fu.scatter_add_rows(ch.coarse.indices, model.fine().backward(f_sel, gu, params));
  }
  if (weights.hash != 0.0 && cr.active_pairs > 0) {
    cr.grad_h *= weights.hash * pair_norm;
    const std::size_t rs = src.size();
    const std::size_t l = hb.bits();
    Tensor2 gh_s(rs, l, std::vector<double>(cr.grad_h.data().begin(),
                                            cr.grad_h.data().begin() + static_cast<std::ptrdiff_t>(rs * l)));
    d_fs += model.hash().backward(f_s, gh_s, params);
    if (!target_rows.empty()) {
      Tensor2 gh_t(target_rows.size(), l,
                   std::vector<double>(cr.grad_h.data().begin() + static_cast<std::ptrdiff_t>(rs * l),
                                       cr.grad_h.data().end()));
      d_fu.scatter_add_rows(target_rows, model.hash().backward(f_t, gh_t, params));
    }
  }
  model.backbone().backward(tape_s, d_fs, params);
  model.backbone().backward(tape_u, d_fu, params);
  out.grad_f_s = std::move(d_fs);
  out.grad_f_u = std::move(d_fu);
  return out;
}

LossWeights weights_at_step(const TrainConfig& cfg, std::uint64_t step) {
  LossWeights w{cfg.lambda_coarse, cfg.lambda_fine, cfg.lambda_hash};
  if (step < cfg.warmup_steps) {
    w.fine = 0.0;
    w.hash = 0.0;
  }
  return w;
}

StepResult train_step(Model& model, const FeatureBatch& src, const FeatureBatch& unl,
                      const SoftLabelTable& soft, const TrainConfig& cfg) {
  ParamStore& params = model.params();
  params.zero_grad();
  StepResult r = forward_backward(model, src, unl, soft, cfg, weights_at_step(cfg, params.step()));
  const StepLosses& l = r.losses;
  if (!std::isfinite(l.total)) {
    std::ostringstream diag;
    diag << "non-finite loss at step " << params.step() << ": coarse=" << l.coarse
         << " fine=" << l.fine << " hash=" << l.hash << " total=" << l.total;
    throw TrainingError(diag.str());
  }
  sgd_step(params, cfg.lr);
  return r;
}

// ---------------------------------------------------------------------------
// Epoch planning

std::size_t steps_per_epoch(std::size_t n_unlabeled, const TrainConfig& cfg) {
  const std::size_t steps = n_unlabeled / cfg.ru;
  if (steps == 0) {
    throw ConfigError("unlabeled set (" + std::to_string(n_unlabeled) +
                      " rows) is smaller than ru=" + std::to_string(cfg.ru));
  }
  return steps;
}

EpochPlan plan_epoch(const FeatureBatch& source, std::size_t n_unlabeled, const TrainConfig& cfg,
                     std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  const std::size_t steps = steps_per_epoch(n_unlabeled, cfg);

  std::vector<std::size_t> unl(n_unlabeled);
  std::iota(unl.begin(), unl.end(), std::size_t{0});
  std::shuffle(unl.begin(), unl.end(), rng);

  // Class-stratified source order: shuffle within each class, then interleave.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < source.size(); ++i) by_class[source.labels()[i]].push_back(i);
  std::vector<std::vector<std::size_t>> pools;
  for (auto& [label, rows] : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    pools.push_back(std::move(rows));
  }
  std::vector<std::size_t> src_order;
  src_order.reserve(source.size());
  for (std::size_t depth = 0; src_order.size() < source.size(); ++depth) {
    for (const auto& pool : pools) {
      if (depth < pool.size()) src_order.push_back(pool[depth]);
    }
  }

  EpochPlan plan;
  for (std::size_t s = 0; s < steps; ++s) {
    plan.unlabeled_batches.emplace_back(unl.begin() + static_cast<std::ptrdiff_t>(s * cfg.ru),
                                        unl.begin() + static_cast<std::ptrdiff_t>((s + 1) * cfg.ru));
    std::vector<std::size_t> sb(cfg.rs);
    for (std::size_t i = 0; i < cfg.rs; ++i) sb[i] = src_order[(s * cfg.rs + i) % src_order.size()];
    plan.source_batches.push_back(std::move(sb));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Evaluation

RetrievalScores evaluate_retrieval(const Model& model, const FeatureBatch& source,
                                   const FeatureBatch& unlabeled, const EvaluationSet& eval,
                                   std::size_t radius) {
  const CodeIndex queries = binarize(model.encode(eval.queries.features()), eval.queries.labels());
  const CodeIndex db = binarize(model.encode(eval.database_features(source, unlabeled)),
                                eval.database_labels(source));
  return {mean_average_precision(queries, db).value, precision_at_radius(queries, db, radius).value};
}

double coarse_selection_purity(const Model& model, const FeatureBatch& unlabeled,
                               const EvaluationSet& eval, const ClassVocabulary& vocab,
                               const TrainConfig& cfg) {
  const auto& truth = eval.unlabeled_truth.reveal_for_evaluation();
  if (truth.size() != unlabeled.size()) throw DataError("hidden labels do not match unlabeled set");
  const std::size_t batches = unlabeled.size() / cfg.ru;
  if (batches == 0) throw ConfigError("unlabeled set smaller than ru");
  const Tensor2& w = model.params().value("coarse.W");
  const Tensor2& b = model.params().value("coarse.b");
  std::size_t novel = 0, total = 0;
  for (std::size_t bi = 0; bi < batches; ++bi) {
    std::vector<std::size_t> rows(cfg.ru);
    std::iota(rows.begin(), rows.end(), bi * cfg.ru);
    const Tensor2 f = model.backbone().forward(unlabeled.features().gather_rows(rows), model.params()).output;
    const CoarseSelection sel = select_novel(softmax_rows(linear(f, w, b)), cfg.m);
    for (std::size_t j : sel.indices) {
      const int label = truth[rows[j]];
      novel += vocab.novel_column(label) >= 0;
      ++total;
    }
  }
  return static_cast<double>(novel) / static_cast<double>(total);
}

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss_coarse"] = losses.coarse;
  j["loss_fine"] = losses.fine;
  j["loss_hash"] = losses.hash;
  j["loss_total"] = losses.total;
  if (map) j["map"] = *map;
  if (precision_at_radius) j["precision_at_radius"] = *precision_at_radius;
  if (coarse_purity) j["coarse_purity"] = *coarse_purity;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Training run

Model run_training(const TrainConfig& cfg, const Dataset& data, const EvaluationSet* eval,
                   const RunOptions& options, std::vector<MetricsRecord>* records) {
  cfg.validate();
  const std::size_t ny = data.vocab.num_novel();
  if (cfg.ny != 0 && cfg.ny != ny) {
    throw ConfigError("config ny=" + std::to_string(cfg.ny) + " but the vocabulary has " +
                      std::to_string(ny) + " novel classes");
  }
  if (data.unlabeled.has_labels()) throw ConfigError("unlabeled stream must not carry labels");

  BackboneConfig bc;
  bc.input_dim = data.source.dim();
  bc.widths = cfg.backbone_widths;
  Model model(bc, ny, cfg.l, cfg.seed);

  const std::size_t spe = steps_per_epoch(data.unlabeled.size(), cfg);
  std::size_t start_epoch = 0;
  if (options.resume_from) {
    ParamStore restored = load_checkpoint(*options.resume_from);
    if (!model.same_architecture(restored)) {
      throw DataError("checkpoint " + options.resume_from->string() +
                      " does not match the configured architecture");
    }
    if (restored.step() % spe != 0) {
      throw DataError("checkpoint step " + std::to_string(restored.step()) +
                      " is not at an epoch boundary");
    }
    start_epoch = restored.step() / spe;
    model = Model(std::move(restored));
  }

  std::filesystem::create_directories(options.out_dir);
  const auto mode = options.resume_from ? std::ios::app : std::ios::trunc;
  std::ofstream metrics(options.out_dir / kMetricsFile, mode);
  std::ofstream timing(options.out_dir / kTimingFile, mode);
  if (!metrics || !timing) throw DataError("cannot write metrics in " + options.out_dir.string());

  const SoftLabelTable soft = soft_label_table(data.vocab);
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const EpochPlan plan = plan_epoch(data.source, data.unlabeled.size(), cfg, epoch);
    MetricsRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t s = 0; s < plan.unlabeled_batches.size(); ++s) {
      const FeatureBatch src = data.source.subset(plan.source_batches[s]);
      const FeatureBatch unl = data.unlabeled.subset(plan.unlabeled_batches[s]);
      const StepResult r = train_step(model, src, unl, soft, cfg);
      rec.losses.coarse += r.losses.coarse;
      rec.losses.fine += r.losses.fine;
      rec.losses.hash += r.losses.hash;
      rec.losses.total += r.losses.total;
    }
    const double inv = 1.0 / static_cast<double>(plan.unlabeled_batches.size());
    rec.losses.coarse *= inv;
    rec.losses.fine *= inv;
    rec.losses.hash *= inv;
    rec.losses.total *= inv;
    rec.step = model.params().step();
    if (eval != nullptr) {
      const RetrievalScores rs =
          evaluate_retrieval(model, data.source, data.unlabeled, *eval, cfg.eval_radius);
      rec.map = rs.map;
      rec.precision_at_radius = rs.precision_at_radius;
      rec.coarse_purity = coarse_selection_purity(model, data.unlabeled, *eval, data.vocab, cfg);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    metrics << rec.to_json() << '\n';
    metrics.flush();
    nlohmann::ordered_json tj;
    tj["epoch"] = rec.epoch;
    tj["wall_seconds"] = rec.wall_seconds;
    timing << tj.dump() << '\n';
    save_checkpoint(model.params(), options.out_dir / kCheckpointFile);
    if (!options.quiet) std::cerr << rec.to_json() << '\n';
    if (records) records->push_back(rec);
  }
  return model;
}

}  // namespace tzsh
