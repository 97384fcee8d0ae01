#include "cng/pipeline/commands.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cng/causal/causal.hpp"
#include "cng/core/errors.hpp"
#include "cng/core/parallel.hpp"
#include "cng/hgt/checkpoint.hpp"
#include "cng/pipeline/synth.hpp"

namespace cng {
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const Error*>(&e)) return kExitData;
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return kExitData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  return kExitNumeric;
}

nlohmann::json to_json(const RunManifest& m) {
  auto files = [](const std::vector<FileDigest>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : v) out.push_back({{"role", f.role}, {"path", f.path.string()}, {"sha256", f.sha256}});
    return out;
  };
  return {{"command", m.command},
          {"config", m.config},
          {"seed", m.seed},
          {"inputs", files(m.inputs)},
          {"outputs", files(m.outputs)},
          {"versions",
           {{"cng", kToolVersion},
            {"report_schema", kReportSchemaVersion},
            {"checkpoint_format", kCheckpointFormatVersion}}},
          {"started_at", m.started_at},
          {"wall_clock_seconds", m.wall_clock_seconds}};
}

std::string report_content_digest(const nlohmann::json& report) {
  nlohmann::json stable = report;
  stable.erase("content_digest");
  if (stable.contains("manifest")) {
    auto& m = stable["manifest"];
    m.erase("started_at");
    m.erase("wall_clock_seconds");
    for (const char* list : {"inputs", "outputs"})
      if (m.contains(list))
        for (auto& f : m[list]) f.erase("path");
  }
  return sha256_hex(stable.dump());
}

bool covers_trigger(const std::vector<EntitySpan>& spans, const std::vector<std::size_t>& remaining,
                    const std::vector<std::size_t>& trigger_positions) {
  for (std::size_t node : remaining) {
    const EntitySpan& s = spans.at(node);
    for (std::size_t p : trigger_positions)
      if (p >= s.start && p < s.start + s.length) return true;
  }
  return false;
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Run {
 public:
  Run(std::string command, const CommandOptions& options)
      : options_(options), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.config = to_json(options.config);
    manifest_.seed = options.config.seed;
    manifest_.started_at = utc_now();
    fs::create_directories(options.out);
  }

  void input(std::string role, const fs::path& path) {
    manifest_.inputs.push_back({std::move(role), path, sha256_file(path)});
  }
  void output(std::string role, const fs::path& path) {
    manifest_.outputs.push_back({std::move(role), path, sha256_file(path)});
  }
  fs::path path(const std::string& name) const { return options_.out / name; }

  nlohmann::json finish(nlohmann::json body) {
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    nlohmann::json report = {{"schema", "cng." + manifest_.command + "_report"},
                             {"schema_version", kReportSchemaVersion}};
    report.update(body);
    report["manifest"] = to_json(manifest_);
    report["content_digest"] = report_content_digest(report);
    write_text_file(path(manifest_.command + "_report.json"), report.dump(2) + "\n");
    return report;
  }

 private:
  const CommandOptions& options_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

Corpus load_checked_corpus(const fs::path& path, std::size_t width) {
  if (path.empty()) throw ConfigError("--corpus is required");
  Corpus corpus = load_corpus(path);
  if (corpus.documents.empty()) throw SchemaError("corpus '" + path.string() + "' has no documents");
  if (corpus.width && *corpus.width != width)
    throw DimensionError("corpus width " + std::to_string(*corpus.width) + " does not match the model's embedding width " +
                         std::to_string(width) + " (set embedding_dim = " + std::to_string(*corpus.width) +
                         " or use a matching corpus)");
  return corpus;
}

std::vector<int> labels_of(const Corpus& corpus) {
  std::vector<int> labels;
  for (const auto& d : corpus.documents) labels.push_back(d.label);
  return labels;
}

std::vector<const TokenSequence*> pick(const Corpus& corpus, const std::vector<std::size_t>& index) {
  std::vector<const TokenSequence*> out;
  for (std::size_t i : index) out.push_back(&corpus.documents[i]);
  return out;
}

std::vector<const TokenSequence*> all_docs(const Corpus& corpus) {
  std::vector<const TokenSequence*> out;
  for (const auto& d : corpus.documents) out.push_back(&d);
  return out;
}

nlohmann::json history_json(const std::vector<EpochLog>& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : history) out.push_back({{"epoch", e.epoch}, {"tau", e.tau}, {"mean_loss", e.mean_loss}});
  return out;
}

nlohmann::json counts_json(const Corpus& corpus, const Split& split) {
  auto positives = [&](const std::vector<std::size_t>& idx) {
    std::size_t n = 0;
    for (std::size_t i : idx) n += corpus.documents[i].label == kLabelConspiracy;
    return n;
  };
  return {{"documents", corpus.documents.size()},
          {"conspiracy", corpus.count_label(kLabelConspiracy)},
          {"critical", corpus.count_label(kLabelCritical)},
          {"train", split.train.size()},
          {"train_conspiracy", positives(split.train)},
          {"held_out", split.held_out.size()},
          {"held_out_conspiracy", positives(split.held_out)}};
}

// One checkpoint of the wanted kind among the --checkpoint paths.
std::pair<Checkpoint, fs::path> find_checkpoint(const std::vector<fs::path>& paths, const std::string& kind) {
  if (paths.empty()) throw ConfigError("--checkpoint is required (a " + kind + " checkpoint)");
  std::optional<std::pair<Checkpoint, fs::path>> found;
  for (const auto& p : paths) {
    Checkpoint c = load_checkpoint(p);
    if (c.kind != kind) continue;
    if (found) throw ConfigError("more than one " + kind + " checkpoint given");
    found.emplace(std::move(c), p);
  }
  if (!found) throw CheckpointError("none of the --checkpoint files is a " + kind + " checkpoint");
  return std::move(*found);
}

std::vector<BipartiteGraph> build_graphs(const ClassifierModel& model, const std::vector<const TokenSequence*>& docs) {
  std::vector<BipartiteGraph> graphs(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) { graphs[i] = model.build_graph(*docs[i]); });
  return graphs;
}

std::vector<CausalSample> causal_samples(const ClassifierModel& model, const std::vector<const TokenSequence*>& docs,
                                         std::vector<BipartiteGraph>& graphs) {
  graphs = build_graphs(model, docs);
  auto records = loo_labels_all(graphs, model);
  std::vector<CausalSample> samples;
  samples.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i)
    samples.push_back(make_causal_sample(graphs[i], std::move(records[i]), docs[i]->label));
  return samples;
}

std::vector<double> tau_true_of(const CausalSample& s) {
  std::vector<double> out;
  for (std::size_t i = 0; i < s.records.size(); i += 2) out.push_back(s.records[i].tau_true);
  return out;
}

nlohmann::json spans_json(const std::vector<EntitySpan>& spans) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : spans)
    out.push_back({{"start", s.start}, {"length", s.length}, {"width_slot", s.width_slot}, {"type", s.type}});
  return out;
}

void check_estimator_fits(const ClassifierModel& model, const HyperSciEstimator& est) {
  if (est.config().input_dim != model.config().span.entity_dim)
    throw CheckpointError("estimator input width " + std::to_string(est.config().input_dim) +
                          " does not match the classifier entity_dim " +
                          std::to_string(model.config().span.entity_dim));
}

ClassificationMetrics train_and_evaluate(ClassifierModel& model, const std::vector<const TokenSequence*>& train,
                                         const std::vector<const TokenSequence*>& held_out, const TrainConfig& config,
                                         std::vector<EpochLog>* history) {
  auto log = train_classifier(model, train, config);
  if (history) *history = std::move(log);
  return evaluate(model, held_out);
}

}  // namespace

nlohmann::json cmd_train(const CommandOptions& options) {
  const PipelineConfig& cfg = options.config;
  Run run("train", options);
  Corpus corpus = load_checked_corpus(options.corpus, cfg.model.span.embedding_dim);
  run.input("corpus", options.corpus);

  const Split split = stratified_split(labels_of(corpus), cfg.held_out_fraction, cfg.seed);
  const auto train = pick(corpus, split.train);
  const auto held_out = pick(corpus, split.held_out);
  spdlog::info("train: {} documents ({} train, {} held out)", corpus.documents.size(), train.size(), held_out.size());

  ClassifierModel model = ClassifierModel::create(cfg.model, cfg.seed);
  std::vector<EpochLog> history;
  const ClassificationMetrics held = train_and_evaluate(model, train, held_out, cfg.train, &history);
  const ClassificationMetrics fit = evaluate(model, train);
  spdlog::info("train: held-out macro-F1 {:.4f}, MCC {:.4f}", held.macro_f1, held.mcc);

  const fs::path ckpt = run.path("classifier.ckpt");
  save_checkpoint(model.to_checkpoint(), ckpt);
  run.output("classifier", ckpt);

  // A fully masked graph must reduce to the readout bias.
  const auto graphs = build_graphs(model, held_out);
  const double expected = 1.0 / (1.0 + std::exp(-model.readout_bias()));
  double worst = 0.0;
  for (const auto& g : graphs) {
    std::vector<std::size_t> every(g.num_entities());
    for (std::size_t i = 0; i < every.size(); ++i) every[i] = i;
    worst = std::max(worst, std::abs(model.predict_masked(g, NodeMask::without(every.size(), every)) - expected));
  }

  nlohmann::json body = {
      {"counts", counts_json(corpus, split)},
      {"parameters", model.component_counts()},
      {"history", history_json(history)},
      {"metrics", {{"held_out", to_json(held)}, {"train", to_json(fit)}}},
      {"empty_graph_check",
       {{"graphs", graphs.size()},
        {"sigmoid_readout_bias", expected},
        {"max_abs_error", worst},
        {"passed", worst <= 1e-9}}},
  };

  if (cfg.ablation_enricher) {
    ModelConfig other = cfg.model;
    other.graph.enricher.enabled = !other.graph.enricher.enabled;
    ClassifierModel alt = ClassifierModel::create(other, cfg.seed);
    std::vector<EpochLog> alt_history;
    const ClassificationMetrics alt_held = train_and_evaluate(alt, train, held_out, cfg.train, &alt_history);
    spdlog::info("train: ablation (enricher_enabled = {}) held-out macro-F1 {:.4f}", other.graph.enricher.enabled,
                 alt_held.macro_f1);
    auto entry = [](bool enabled, const ClassificationMetrics& m, const std::vector<EpochLog>& h) {
      return nlohmann::json{{"enricher_enabled", enabled}, {"held_out", to_json(m)}, {"history", history_json(h)}};
    };
    const bool on = cfg.model.graph.enricher.enabled;
    body["ablation"] = on ? nlohmann::json::array({entry(true, held, history), entry(false, alt_held, alt_history)})
                          : nlohmann::json::array({entry(true, alt_held, alt_history), entry(false, held, history)});
  }
  return run.finish(std::move(body));
}

nlohmann::json cmd_causal(const CommandOptions& options) {
  const PipelineConfig& cfg = options.config;
  Run run("causal", options);
  auto [ckpt, ckpt_path] = find_checkpoint(options.checkpoints, kClassifierKind);
  const std::string digest_before = sha256_file(ckpt_path);
  run.input("classifier", ckpt_path);
  const ClassifierModel model = ClassifierModel::from_checkpoint(ckpt);
  Corpus corpus = load_checked_corpus(options.corpus, model.config().span.embedding_dim);
  run.input("corpus", options.corpus);

  const Split split = stratified_split(labels_of(corpus), cfg.held_out_fraction, cfg.seed);
  std::vector<BipartiteGraph> graphs;
  const auto docs = all_docs(corpus);
  spdlog::info("causal: leave-one-out labels for {} documents", docs.size());
  const std::vector<CausalSample> samples = causal_samples(model, docs, graphs);

  EstimatorConfig ecfg = cfg.estimator;
  ecfg.input_dim = model.config().span.entity_dim;
  HyperSciEstimator est = HyperSciEstimator::create(ecfg, cfg.seed);
  std::vector<const CausalSample*> train;
  std::size_t train_records = 0, held_records = 0;
  for (std::size_t i : split.train) {
    train.push_back(&samples[i]);
    train_records += samples[i].records.size();
  }
  CausalTrainConfig tcfg = cfg.causal;
  tcfg.seed = cfg.seed;
  const auto history = train_hypersci(est, train, tcfg);

  std::vector<double> tau_hat, tau_true;
  std::vector<std::vector<double>> per_doc(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) per_doc[i] = estimate_ite(est, samples[i]);
  for (std::size_t i : split.held_out) {
    held_records += samples[i].records.size();
    const auto t = tau_true_of(samples[i]);
    tau_hat.insert(tau_hat.end(), per_doc[i].begin(), per_doc[i].end());
    tau_true.insert(tau_true.end(), t.begin(), t.end());
  }
  if (tau_hat.empty()) throw TrainingError("the held-out documents contain no entity nodes");
  const EffectMetrics metrics = pehe_ate(tau_hat, tau_true);
  spdlog::info("causal: held-out PEHE {:.4f}, |ATE error| {:.4f}", metrics.pehe, metrics.ate_error);

  const fs::path out = run.path("estimator.ckpt");
  save_checkpoint(est.to_checkpoint(), out);
  run.output("estimator", out);

  std::size_t nodes = 0;
  for (const auto& s : samples) nodes += s.num_nodes();
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : history) hist.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}});

  if (cfg.report_csv) {
    std::vector<char> held(samples.size(), 0);
    for (std::size_t i : split.held_out) held[i] = 1;
    std::ostringstream csv;
    csv << std::setprecision(17) << "doc_id,split,node,y1,y0,tau_true,tau_hat\n";
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t k = 0; k < samples[i].num_nodes(); ++k) {
        const auto& r = samples[i].records[2 * k];
        csv << r.doc_id << ',' << (held[i] ? "held_out" : "train") << ',' << k << ',' << r.y1 << ',' << r.y0 << ','
            << r.tau_true << ',' << per_doc[i][k] << '\n';
      }
    const fs::path p = run.path("causal_records.csv");
    write_text_file(p, csv.str());
    run.output("records_csv", p);
  }

  const std::string digest_after = sha256_file(ckpt_path);
  return run.finish({
      {"counts",
       {{"documents", samples.size()},
        {"nodes", nodes},
        {"records", 2 * nodes},
        {"train_documents", split.train.size()},
        {"train_records", train_records},
        {"held_out_documents", split.held_out.size()},
        {"held_out_records", held_records},
        {"held_out_nodes", tau_hat.size()}}},
      {"estimator", to_json(ecfg)},
      {"history", hist},
      {"metrics", to_json(metrics)},
      {"freezing",
       {{"classifier_sha256_before", digest_before},
        {"classifier_sha256_after", digest_after},
        {"unchanged", digest_before == digest_after}}},
  });
}

nlohmann::json cmd_distill(const CommandOptions& options) {
  const PipelineConfig& cfg = options.config;
  Run run("distill", options);
  auto [clf_ckpt, clf_path] = find_checkpoint(options.checkpoints, kClassifierKind);
  auto [est_ckpt, est_path] = find_checkpoint(options.checkpoints, kEstimatorKind);
  run.input("classifier", clf_path);
  run.input("estimator", est_path);
  const ClassifierModel model = ClassifierModel::from_checkpoint(clf_ckpt);
  const HyperSciEstimator est = HyperSciEstimator::from_checkpoint(est_ckpt);
  check_estimator_fits(model, est);
  Corpus corpus = load_checked_corpus(options.corpus, model.config().span.embedding_dim);
  run.input("corpus", options.corpus);

  std::vector<std::size_t> chosen;
  if (cfg.distill_all) {
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) chosen.push_back(i);
  } else {
    chosen = stratified_split(labels_of(corpus), cfg.held_out_fraction, cfg.seed).held_out;
  }
  const auto docs = pick(corpus, chosen);
  std::vector<BipartiteGraph> graphs;
  const std::vector<CausalSample> samples = causal_samples(model, docs, graphs);
  const MaskedPredictor predict = masked_predictor(model);
  spdlog::info("distill: {} documents ({})", docs.size(), cfg.distill_all ? "all" : "held out");

  std::vector<DistillationResult> results(docs.size());
  std::vector<std::vector<double>> tau_hat(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) {
    tau_hat[i] = estimate_ite(est, samples[i]);
    results[i] = distill_minimal_subgraph(graphs[i], tau_hat[i], predict, cfg.distill_direction);
    results[i].label = docs[i]->label;
  });

  nlohmann::json documents = nlohmann::json::array();
  std::vector<DistillationResult> correct_positive;
  std::size_t annotated = 0, overlapping = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const TokenSequence& doc = *docs[i];
    nlohmann::json entry = to_json(results[i]);
    entry["spans"] = spans_json(graphs[i].spans);
    entry["tau_hat"] = tau_hat[i];
    entry["tau_true"] = tau_true_of(samples[i]);
    entry["correct"] = results[i].original_prediction == doc.label;
    if (doc.trigger_positions.empty()) {
      entry["trigger_overlap"] = nullptr;
    } else {
      entry["trigger_overlap"] = covers_trigger(graphs[i].spans, results[i].remaining, doc.trigger_positions);
    }
    if (doc.label == kLabelConspiracy && results[i].original_prediction == kLabelConspiracy) {
      correct_positive.push_back(results[i]);
      if (!doc.trigger_positions.empty()) {
        ++annotated;
        overlapping += entry["trigger_overlap"].get<bool>();
      }
    }
    documents.push_back(std::move(entry));
  }

  nlohmann::json summary = to_json(compression_report(results));
  nlohmann::json positives = {{"count", correct_positive.size()}};
  positives["compression"] = correct_positive.empty() ? nlohmann::json(nullptr)
                                                      : to_json(compression_report(correct_positive));
  positives["annotated"] = annotated;
  positives["trigger_overlap_rate"] =
      annotated == 0 ? nlohmann::json(nullptr) : nlohmann::json(double(overlapping) / double(annotated));

  if (cfg.report_csv) {
    std::ostringstream csv;
    csv << std::setprecision(17)
        << "doc_id,label,num_nodes,original_probability,final_probability,flipped,compression_rate,v_remaining\n";
    for (const auto& r : results) {
      std::string rem;
      for (std::size_t k = 0; k < r.remaining.size(); ++k) rem += (k ? " " : "") + std::to_string(r.remaining[k]);
      csv << r.doc_id << ',' << r.label << ',' << r.num_nodes << ',' << r.original_probability << ','
          << r.final_probability << ',' << (r.flipped ? 1 : 0) << ',' << r.compression_rate << ',' << rem << '\n';
    }
    const fs::path p = run.path("distill_results.csv");
    write_text_file(p, csv.str());
    run.output("results_csv", p);
  }

  return run.finish({
      {"direction", to_string(cfg.distill_direction)},
      {"scope", cfg.distill_all ? "all" : "held_out"},
      {"summary", summary},
      {"correct_positives", positives},
      {"documents", documents},
  });
}

nlohmann::json cmd_eval(const CommandOptions& options) {
  Run run("eval", options);
  auto [ckpt, path] = find_checkpoint(options.checkpoints, kClassifierKind);
  run.input("classifier", path);
  const ClassifierModel model = ClassifierModel::from_checkpoint(ckpt);
  Corpus corpus = load_checked_corpus(options.corpus, model.config().span.embedding_dim);
  run.input("corpus", options.corpus);
  const ClassificationMetrics m = evaluate(model, all_docs(corpus));
  return run.finish({
      {"counts",
       {{"documents", corpus.documents.size()},
        {"conspiracy", corpus.count_label(kLabelConspiracy)},
        {"critical", corpus.count_label(kLabelCritical)}}},
      {"metrics", to_json(m)},
  });
}

nlohmann::json cmd_synth(const CommandOptions& options) {
  if (options.corpus.empty()) throw ConfigError("--corpus is required (the output path)");
  Run run("synth", options);
  const SynthSpec& spec = options.config.synth;
  const Corpus corpus = generate_synthetic_corpus(spec);
  if (options.corpus.has_parent_path()) fs::create_directories(options.corpus.parent_path());
  export_corpus(corpus, options.corpus);
  run.output("corpus", options.corpus);
  const double n = static_cast<double>(spec.size);
  return run.finish({
      {"spec", to_json(spec)},
      {"counts",
       {{"documents", corpus.documents.size()},
        {"conspiracy", corpus.count_label(kLabelConspiracy)},
        {"critical", corpus.count_label(kLabelCritical)},
        {"expected_conspiracy", n * spec.trigger_rate},
        {"stddev_conspiracy", std::sqrt(n * spec.trigger_rate * (1.0 - spec.trigger_rate))}}},
  });
}

}  // namespace cng
