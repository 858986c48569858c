#include "cds/commands.hpp"

#include <algorithm>
#include <future>

#include <spdlog/spdlog.h>

#include "cds/io.hpp"
#include "json.hpp"

namespace cds::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return 2;
    case ErrorCode::IoError:
    case ErrorCode::ParseError: return 3;
    default: return 4;
  }
}

DatasetSplit load_split(const ExperimentConfig& cfg) {
  if (cfg.data.generator) return make_split(generate_two_domain(*cfg.data.generator), cfg.split);
  TwoDomainData data;
  data.source = load_feature_csv(cfg.data.source_csv);
  data.target = load_feature_csv(cfg.data.target_csv);
  const auto split_text = io::read_file(cfg.data.split_json);
  try {
    data.num_classes = nlohmann::json::parse(split_text).at("num_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("split json: ") + e.what());
  }
  for (const auto& s : data.source) {
    if (s.domain != Domain::source) throw Error(ErrorCode::ParseError, "source.csv holds a target row");
  }
  for (const auto& s : data.target) {
    if (s.domain != Domain::target) throw Error(ErrorCode::ParseError, "target.csv holds a source row");
  }
  return make_split(data, partition_from_json(split_text, data.source));
}

void cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out) {
  if (!cfg.data.generator) throw Error(ErrorCode::InvalidConfig, "gen-data needs data.generator");
  const auto data = generate_two_domain(*cfg.data.generator);
  const auto part = split_few_shot(data.source, data.num_classes, cfg.split);
  const std::size_t dim = cfg.data.generator->input_dim;
  save_feature_csv(out / "source.csv", data.source, dim);
  save_feature_csv(out / "target.csv", data.target, dim);
  io::write_file(out / "split.json", split_to_json(part, data.num_classes));
  io::write_file(out / "config.json", config_to_json(cfg));
  spdlog::info("gen-data: {} source, {} target samples, {} labeled", data.source.size(), data.target.size(),
               part.labeled.size());
}

namespace {

EvalHook maybe_knn_hook(const ExperimentConfig& cfg, const DatasetSplit& split) {
  if (!cfg.pretrain.log_knn) return {};
  const auto src = eval::LabelOracle::source_labels(split);
  const auto tgt = eval::LabelOracle::target_labels(split);
  const auto known = [](int y) { return y >= 0; };
  if (!std::all_of(src.begin(), src.end(), known) || !std::all_of(tgt.begin(), tgt.end(), known)) return {};
  return eval::knn_hook(split, cfg.eval.eval);
}

}  // namespace

void cmd_pretrain(const ExperimentConfig& cfg, const fs::path& out) {
  const auto split = load_split(cfg);
  const auto hook = maybe_knn_hook(cfg, split);
  PretrainResult result;
  if (cfg.pretrain.resume_from) {
    auto state = load_pretrain_state(*cfg.pretrain.resume_from);
    spdlog::info("pretrain: resuming from {} after {} epochs", cfg.pretrain.resume_from->string(), state.epochs_done);
    result = resume_pretrain(cfg.pretrain.train, split.unlabeled_view(), std::move(state), hook);
  } else {
    result = run_pretrain(cfg.pretrain.train, split, hook);
  }
  save_pretrain_state(result.state, out);
  io::write_file(out / "pretrain_log.csv", epoch_logs_to_csv(result.logs));
  io::write_file(out / "config.json", config_to_json(cfg));
  if (!result.logs.empty()) {
    const auto& last = result.logs.back();
    spdlog::info("pretrain: epoch {} loss_cds={:.6f}", last.epoch, last.loss_cds);
  }
}

namespace {

std::string adapt_summary(const AdaptResult& r, const ExperimentConfig& cfg) {
  nlohmann::json doc = {{"best_target_acc", r.best_target_acc},
                        {"best_epoch", r.best_epoch},
                        {"validation", r.validation_holdout ? "holdout" : "train"},
                        {"final_target_acc", r.logs.back().target_acc},
                        {"config", nlohmann::json::parse(config_to_json(cfg))}};
  return doc.dump(1) + "\n";
}

}  // namespace

void cmd_adapt(const ExperimentConfig& cfg, const fs::path& out) {
  const auto split = load_split(cfg);
  const EncoderModel model = cfg.adapt.model ? load_model(*cfg.adapt.model)
                                             : initial_encoder(cfg.pretrain.train, split.input_dim());
  const auto result = run_adapt(model, split, cfg.adapt.adapt);
  io::write_file(out / "head.json", head_to_json(result.head));
  if (!cfg.adapt.adapt.freeze_encoder) save_model(result.model, out / "model_adapted.json");
  io::write_file(out / "adapt_log.csv", adapt_logs_to_csv(result.logs));
  io::write_file(out / "summary.json", adapt_summary(result, cfg));
  spdlog::info("adapt: best target accuracy {:.4f} at epoch {}", result.best_target_acc, result.best_epoch);
}

namespace {

void features_from_samples(const std::vector<Sample>& samples, Matrix& feats, std::vector<int>& labels) {
  std::vector<const Sample*> ordered;
  for (const auto& s : samples) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](const Sample* a, const Sample* b) { return a->index < b->index; });
  for (const auto* s : ordered) {
    feats.append_row(s->x);
    labels.push_back(s->label);
  }
}

}  // namespace

void cmd_eval(const ExperimentConfig& cfg, const fs::path& out) {
  std::vector<eval::RetrievalRow> rows;
  auto* dump = cfg.eval.dump_retrieval ? &rows : nullptr;
  eval::EvalReport report;
  if (cfg.eval.source_features) {
    Matrix src;
    Matrix tgt;
    std::vector<int> src_y;
    std::vector<int> tgt_y;
    features_from_samples(load_feature_csv(*cfg.eval.source_features), src, src_y);
    features_from_samples(load_feature_csv(*cfg.eval.target_features), tgt, tgt_y);
    report = eval::evaluate_features(src, src_y, tgt, tgt_y, cfg.eval.eval, dump);
  } else {
    const auto split = load_split(cfg);
    const EncoderModel model = cfg.eval.model ? load_model(*cfg.eval.model)
                                              : initial_encoder(cfg.pretrain.train, split.input_dim());
    report = eval::evaluate_model(model, split, cfg.eval.eval, dump);
  }
  io::write_file(out / "eval_report.json", eval::report_to_json(report, config_to_json(cfg)));
  if (dump) io::write_file(out / "retrieval.csv", eval::retrieval_rows_to_csv(rows));
  spdlog::info("eval: knn={:.4f} linear={:.4f} retrieval@{}={:.4f} confusion={:.4f}", report.knn_accuracy,
               report.linear_accuracy, report.retrieval_k, report.retrieval_precision_at_k, report.confusion_loss);
}

std::string_view to_string(Arm arm) {
  switch (arm) {
    case Arm::no_pretrain: return "no_pretrain";
    case Arm::union_id: return "union_id";
    case Arm::in_domain: return "in_domain";
    case Arm::cds: return "cds";
  }
  return "cds";
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

PipelineRow run_arm(ExperimentConfig cfg, Arm arm, std::uint64_t seed, const fs::path& dir) {
  cfg.apply_seed(seed);
  const auto split = load_split(cfg);
  TrainConfig train = cfg.pretrain.train;
  EncoderModel model = initial_encoder(train, split.input_dim());
  if (arm != Arm::no_pretrain) {
    train.objective = arm == Arm::cds ? Objective::cds : arm == Arm::in_domain ? Objective::in_domain
                                                                                 : Objective::union_id;
    auto result = run_pretrain(train, split, maybe_knn_hook(cfg, split));
    model = std::move(result.state.model);
    io::write_file(dir / "pretrain_log.csv", epoch_logs_to_csv(result.logs));
  }
  save_model(model, dir / "model.json");

  // Feature analysis on the stage-1 encoder, then stage 2 on top of it.
  const auto report = eval::evaluate_model(model, split, cfg.eval.eval);
  io::write_file(dir / "eval_report.json", eval::report_to_json(report, config_to_json(cfg)));
  const auto adapted = run_adapt(model, split, cfg.adapt.adapt);
  io::write_file(dir / "adapt_log.csv", adapt_logs_to_csv(adapted.logs));
  io::write_file(dir / "summary.json", adapt_summary(adapted, cfg));

  PipelineRow row;
  row.arm = arm;
  row.seed = seed;
  row.knn_acc = report.knn_accuracy;
  row.linear_acc = report.linear_accuracy;
  row.retrieval_precision = report.retrieval_precision_at_k;
  row.confusion_loss = report.confusion_loss;
  row.adapt_target_acc = adapted.best_target_acc;
  spdlog::info("pipeline: arm={} seed={} knn={:.4f} adapt={:.4f}", to_string(arm), seed, row.knn_acc,
               row.adapt_target_acc);
  return row;
}

}  // namespace

std::vector<PipelineRow> cmd_pipeline(const ExperimentConfig& cfg, const fs::path& out) {
  // Arms and seeds are independent; each writes only its own directory.
  std::vector<std::future<PipelineRow>> jobs;
  for (Arm arm : kArms) {
    for (auto seed : cfg.seeds) {
      const fs::path dir = out / std::string(to_string(arm)) / ("seed_" + std::to_string(seed));
      jobs.push_back(std::async(std::launch::async, run_arm, cfg, arm, seed, dir));
    }
  }
  std::vector<PipelineRow> rows;
  for (auto& job : jobs) rows.push_back(job.get());

  for (Arm arm : kArms) {
    PipelineRow med;
    med.arm = arm;
    std::vector<double> knn, lin, ret, conf, ada;
    for (const auto& r : rows) {
      if (r.arm != arm || !r.seed) continue;
      knn.push_back(r.knn_acc);
      lin.push_back(r.linear_acc);
      ret.push_back(r.retrieval_precision);
      conf.push_back(r.confusion_loss);
      ada.push_back(r.adapt_target_acc);
    }
    med.knn_acc = median(knn);
    med.linear_acc = median(lin);
    med.retrieval_precision = median(ret);
    med.confusion_loss = median(conf);
    med.adapt_target_acc = median(ada);
    rows.push_back(med);
  }
  io::write_file(out / "comparison.csv", pipeline_rows_to_csv(rows));
  io::write_file(out / "config.json", config_to_json(cfg));
  return rows;
}

std::string pipeline_rows_to_csv(const std::vector<PipelineRow>& rows) {
  std::string csv = "arm,seed,knn_acc,linear_acc,retrieval_precision,confusion_loss,adapt_target_acc\n";
  for (const auto& r : rows) {
    csv += std::string(to_string(r.arm)) + ',' + (r.seed ? std::to_string(*r.seed) : "median") + ',' +
           io::format_double(r.knn_acc) + ',' + io::format_double(r.linear_acc) + ',' +
           io::format_double(r.retrieval_precision) + ',' + io::format_double(r.confusion_loss) + ',' +
           io::format_double(r.adapt_target_acc) + '\n';
  }
  return csv;
}

}  // namespace cds::cli
