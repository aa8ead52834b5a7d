#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tkg/dataset.hpp"
#include "tkg/manifest.hpp"
#include "tkg/metrics.hpp"
#include "tkg/scorer.hpp"
#include "tkg/synth.hpp"
#include "tkg/trainer.hpp"

namespace fs = std::filesystem;
using namespace tkg;

namespace {

// Exit-code contract: 0 ok, 2 input, 3 infeasible, 4 format, 5 numeric.
int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptySparseSet:
    case ErrorKind::InfeasiblePartition:
    case ErrorKind::SpanTooShort:
    case ErrorKind::NoFeasibleTask:
      return 3;
    case ErrorKind::FormatError:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::HistoryLengthMismatch:
      return 4;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NonScalarLoss:
    case ErrorKind::NegativeGap:
      return 5;
    default:
      return 2;
  }
}

TimeOrder time_order_from_name(const std::string& s) {
  if (s == "auto") return TimeOrder::Auto;
  if (s == "numeric") return TimeOrder::Numeric;
  if (s == "lex") return TimeOrder::Lex;
  throw Error(ErrorKind::InvalidConfig, "unknown time order: " + s);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << text;
}

struct BuildArgs {
  std::string events, out_dir;
  std::uint64_t low = 50, high = 500;
  std::uint32_t w = 120, ell = 20, nmax = 50;
  std::size_t n_val = 5, n_test = 14;
  std::uint64_t seed = 13;
  std::string time_order = "auto";
};

int cmd_build(const BuildArgs& a) {
  RunManifest manifest;
  manifest.command = "build";
  manifest.stamp_start();
  manifest.add_input(a.events);
  manifest.seeds = {a.seed};
  {
    nlohmann::ordered_json cfg;
    cfg["events"] = a.events;
    cfg["low"] = a.low;
    cfg["high"] = a.high;
    cfg["w"] = a.w;
    cfg["ell"] = a.ell;
    cfg["nmax"] = a.nmax;
    cfg["val"] = a.n_val;
    cfg["test"] = a.n_test;
    cfg["seed"] = a.seed;
    cfg["timeOrder"] = a.time_order;
    manifest.config_json = cfg.dump();
  }

  const TimeOrder order = time_order_from_name(a.time_order);
  Vocab vocab;
  std::vector<Quadruple> raw =
      read_quadruple_file(a.events, vocab, ParseMode::Grow, order);
  std::vector<std::uint32_t> remap = vocab.finalize_times(order);
  for (Quadruple& q : raw) q.time = remap[q.time];
  std::vector<Quadruple> deduped = deduplicate(std::move(raw));
  std::cout << "events: " << deduped.size() << " distinct quadruples, "
            << vocab.entity_count() << " entities, " << vocab.relation_count()
            << " relations, " << vocab.time_count() << " ticks\n";

  FrequencyThresholds th{a.low, a.high};
  MetaSplit split = build_meta_split(deduped, th, a.w, a.n_val, a.n_test, a.seed);
  std::cout << "windows: trainEnd=" << split.windows.train_end
            << " valEnd=" << split.windows.val_end
            << " datasetEnd=" << split.windows.dataset_end << "\n";
  std::cout << "tasks: " << split.relations_in(MetaPartition::MetaTrain).size()
            << " train / " << split.relations_in(MetaPartition::MetaVal).size()
            << " val / " << split.relations_in(MetaPartition::MetaTest).size()
            << " test relations; background " << split.background.size()
            << " quads\n";

  fs::create_directories(a.out_dir);
  DatasetArtifacts art = make_artifacts(std::move(vocab), std::move(split));
  HistoryCache cache = build_history_cache(art.split, art.vocab, a.ell, a.nmax);
  write_dataset_dir(a.out_dir, art, cache);

  manifest.stamp_finish();
  manifest.write(a.out_dir + "/manifest.json");
  std::cout << "wrote " << a.out_dir << "\n";
  return 0;
}

void write_train_outputs(const std::string& out_dir, const TrainConfig& cfg,
                         const TrainResult& result) {
  std::ofstream log(out_dir + "/train_log.jsonl", std::ios::binary);
  for (const EpisodeLog& e : result.episodes) {
    nlohmann::ordered_json j;
    j["episode"] = e.episode;
    j["relation"] = e.relation;
    j["loss"] = e.loss;
    log << j.dump() << "\n";
  }
  std::ofstream vlog(out_dir + "/val_log.jsonl", std::ios::binary);
  for (const ValLog& v : result.validations) {
    nlohmann::ordered_json j;
    j["episode"] = v.episode;
    j["valMrr"] = v.mrr;
    j["best"] = v.is_best;
    vlog << j.dump() << "\n";
  }
  save_model(out_dir + "/final.ckpt", result.params, cfg.encoder);
  save_model(out_dir + "/best.ckpt", result.best_params, cfg.encoder);
  write_text(out_dir + "/config.json", train_config_to_json(cfg));
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir) {
  TrainConfig cfg = load_train_config(config_path);
  fs::create_directories(out_dir);

  RunManifest manifest;
  manifest.command = "train";
  manifest.stamp_start();
  manifest.config_json = train_config_to_json(cfg);
  for (const char* f : {"pretrain.tsv", "fewshot.tsv", "vocab.json", "split.json"}) {
    manifest.add_input(data_dir + "/" + f);
  }
  manifest.seeds = {cfg.seed};
  manifest.write(out_dir + "/manifest.json");

  DatasetArtifacts art = load_dataset_dir(data_dir);
  TrainHooks hooks;
  hooks.on_validation = [](const ValLog& v) {
    std::cout << "episode " << v.episode << ": val MRR " << v.mrr
              << (v.is_best ? " (new best)" : "") << "\n";
  };
  hooks.on_checkpoint = [&](std::uint64_t episode, const ModelParams& params) {
    save_model(out_dir + "/ep" + std::to_string(episode) + ".ckpt", params,
               cfg.encoder);
  };
  TrainResult result = train(art, cfg, hooks);
  write_train_outputs(out_dir, cfg, result);

  manifest.stamp_finish();
  manifest.write(out_dir + "/manifest.json");
  double mean_loss = 0.0;
  for (const EpisodeLog& e : result.episodes) mean_loss += e.loss;
  if (!result.episodes.empty()) mean_loss /= static_cast<double>(result.episodes.size());
  std::cout << "trained " << result.episodes.size() << " episodes, mean loss "
            << mean_loss << ", best val MRR "
            << (result.best_val_mrr >= 0 ? result.best_val_mrr : 0.0) << "\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& model_path,
             const std::string& split_name, const std::string& support_rule,
             std::uint32_t bucket, bool pessimistic, std::size_t max_queries,
             std::uint32_t threads, const std::string& out_path,
             const std::string& csv_path) {
  DatasetArtifacts art = load_dataset_dir(data_dir);
  auto [params, enc_cfg] = load_model(model_path);
  if (params.entity_emb.shape[0] != art.vocab.entity_count()) {
    throw Error(ErrorKind::FormatError,
                "model has " + std::to_string(params.entity_emb.shape[0]) +
                    " entities, dataset has " +
                    std::to_string(art.vocab.entity_count()));
  }
  EvalConfig ec;
  ec.support_rule = support_rule == "train" ? SupportRule::TrainPeriod
                                            : SupportRule::WindowEarliest;
  ec.pessimistic_ties = pessimistic;
  ec.bucket_width = bucket;
  ec.max_queries = max_queries;
  ec.threads = threads;
  const MetaPartition part = split_name == "val" ? MetaPartition::MetaVal
                                                 : MetaPartition::MetaTest;
  const TemporalKG graph = visible_graph(art.split, art.vocab);
  MetricsReport report = evaluate_split(part, art, graph, params, enc_cfg, ec);
  const std::string json = report_to_json(report);
  std::cout << json;
  if (!out_path.empty()) write_text(out_path, json);
  if (!csv_path.empty()) write_text(csv_path, buckets_to_csv(report, bucket));
  return 0;
}

struct CellResult {
  double mrr = 0.0, hit1 = 0.0, hit5 = 0.0, hit10 = 0.0;
};

CellResult train_eval_mean(const DatasetArtifacts& art, TrainConfig cfg,
                           std::uint32_t n_seeds, std::uint32_t threads) {
  const TemporalKG graph = visible_graph(art.split, art.vocab);
  CellResult mean;
  for (std::uint32_t s = 0; s < n_seeds; ++s) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + s;
    TrainResult result = train(art, run_cfg);
    EvalConfig ec;
    ec.threads = threads;
    MetricsReport report = evaluate_split(MetaPartition::MetaTest, art, graph,
                                          result.best_params, cfg.encoder, ec);
    mean.mrr += report.overall.mrr;
    mean.hit1 += report.overall.hit1;
    mean.hit5 += report.overall.hit5;
    mean.hit10 += report.overall.hit10;
  }
  mean.mrr /= n_seeds;
  mean.hit1 /= n_seeds;
  mean.hit5 /= n_seeds;
  mean.hit10 /= n_seeds;
  return mean;
}

int cmd_ablate(const std::string& data_dir, const std::string& grid_path,
               const std::string& out_path, std::uint32_t n_seeds,
               std::uint32_t threads) {
  TrainConfig base = load_train_config(grid_path);
  DatasetArtifacts art = load_dataset_dir(data_dir);
  std::ostringstream csv;
  csv << "mode,queryMode,seeds,mrr,hit1,hit5,hit10\n";
  for (EncoderMode em : {EncoderMode::Attention, EncoderMode::Flat}) {
    for (QueryMode qm : {QueryMode::TimeDependent, QueryMode::Random}) {
      TrainConfig cfg = base;
      cfg.encoder.mode = em;
      cfg.query_mode = qm;
      CellResult cell = train_eval_mean(art, cfg, n_seeds, threads);
      const char* mode = em == EncoderMode::Attention ? "attention" : "flat";
      const char* query = qm == QueryMode::TimeDependent ? "time_dependent" : "random";
      csv << mode << ',' << query << ',' << n_seeds << ',' << cell.mrr << ','
          << cell.hit1 << ',' << cell.hit5 << ',' << cell.hit10 << '\n';
      std::cout << mode << " / " << query << ": test MRR " << cell.mrr
                << ", hit10 " << cell.hit10 << "\n";
    }
  }
  if (!out_path.empty()) write_text(out_path, csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_margin_sweep(const std::string& data_dir, const std::string& margins_csv,
                     const std::string& config_path, const std::string& out_path,
                     std::uint32_t n_seeds, std::uint32_t threads) {
  TrainConfig base = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
  DatasetArtifacts art = load_dataset_dir(data_dir);
  std::vector<double> margins;
  std::stringstream ss(margins_csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) margins.push_back(std::stod(token));
  }
  if (margins.empty()) {
    throw Error(ErrorKind::InvalidConfig, "no margins given");
  }
  std::ostringstream csv;
  csv << "margin,mrr\n";
  for (double margin : margins) {
    TrainConfig cfg = base;
    cfg.margin = margin;
    CellResult cell = train_eval_mean(art, cfg, n_seeds, threads);
    csv << margin << ',' << cell.mrr << '\n';
    std::cout << "margin " << margin << ": test MRR " << cell.mrr << "\n";
  }
  if (!out_path.empty()) write_text(out_path, csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot temporal knowledge-graph link prediction pipeline"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic event log");
  SynthSpec spec;
  std::string gen_out = "events.tsv", gen_truth = "truth.json";
  gen->add_option("--out", gen_out, "Output event file");
  gen->add_option("--truth", gen_truth, "Ground-truth JSON");
  gen->add_option("--entities", spec.n_entities, "Entity count");
  gen->add_option("--frequent", spec.n_frequent_rels, "Frequent relation count");
  gen->add_option("--sparse", spec.n_sparse_rels, "Sparse relation count");
  gen->add_option("--horizon", spec.horizon, "Time span in ticks");
  gen->add_option("--lag", spec.precursor_lag, "Precursor lag");
  gen->add_option("--noise", spec.noise_rate, "Noise rate");
  gen->add_option("--seed", spec.seed, "Seed");

  // build
  auto* build = app.add_subcommand("build", "Build a one-shot benchmark");
  BuildArgs ba;
  build->add_option("--events", ba.events, "Raw event log")->required();
  build->add_option("--out", ba.out_dir, "Output directory")->required();
  build->add_option("--low", ba.low, "Sparse band lower bound");
  build->add_option("--high", ba.high, "Sparse band upper bound");
  build->add_option("--w", ba.w, "Episode length / split window");
  build->add_option("--ell", ba.ell, "History length for hist.bin");
  build->add_option("--nmax", ba.nmax, "Per-snapshot neighbor cap for hist.bin");
  build->add_option("--val", ba.n_val, "Meta-val relation count");
  build->add_option("--test", ba.n_test, "Meta-test relation count");
  build->add_option("--seed", ba.seed, "Partition seed");
  build->add_option("--time-parse", ba.time_order, "auto|numeric|lex");

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  std::string tr_data, tr_config, tr_out;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--config", tr_config, "Train config JSON")->required();
  tr->add_option("--out", tr_out, "Output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_data, ev_model, ev_split = "test", ev_support = "window";
  std::string ev_out, ev_csv;
  std::uint32_t ev_bucket = 7, ev_threads = 1;
  std::size_t ev_max_queries = 0;
  bool ev_pessimistic = false;
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--model", ev_model, "Checkpoint path")->required();
  ev->add_option("--split", ev_split, "val|test")
      ->check(CLI::IsMember({"val", "test"}));
  ev->add_option("--support", ev_support, "window|train")
      ->check(CLI::IsMember({"window", "train"}));
  ev->add_option("--bucket", ev_bucket, "Over-time bucket width");
  ev->add_flag("--pessimistic", ev_pessimistic, "Pessimistic tie ranks");
  ev->add_option("--max-queries", ev_max_queries, "Cap ranked queries (0 = all)");
  ev->add_option("--threads", ev_threads, "Ranking worker threads");
  ev->add_option("--out", ev_out, "Write report JSON here");
  ev->add_option("--csv", ev_csv, "Write over-time buckets CSV here");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the mode x query-mode grid");
  std::string ab_data, ab_grid, ab_out = "ablation.csv";
  std::uint32_t ab_seeds = 5, ab_threads = 1;
  ab->add_option("--data", ab_data, "Dataset directory")->required();
  ab->add_option("--grid", ab_grid, "Base train config JSON")->required();
  ab->add_option("--out", ab_out, "Comparison table CSV");
  ab->add_option("--seeds", ab_seeds, "Seeds per cell");
  ab->add_option("--threads", ab_threads, "Ranking worker threads");

  // margin-sweep
  auto* ms = app.add_subcommand("margin-sweep", "Train per margin, report MRR");
  std::string ms_data, ms_margins, ms_config, ms_out = "margins.csv";
  std::uint32_t ms_seeds = 5, ms_threads = 1;
  ms->add_option("--data", ms_data, "Dataset directory")->required();
  ms->add_option("--margins", ms_margins, "Comma-separated margins")->required();
  ms->add_option("--config", ms_config, "Base train config JSON");
  ms->add_option("--out", ms_out, "Sweep CSV");
  ms->add_option("--seeds", ms_seeds, "Seeds per margin");
  ms->add_option("--threads", ms_threads, "Ranking worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      write_synthetic(spec, gen_out, gen_truth);
      std::cout << "wrote " << gen_out << " and " << gen_truth << "\n";
      return 0;
    }
    if (build->parsed()) return cmd_build(ba);
    if (tr->parsed()) return cmd_train(tr_data, tr_config, tr_out);
    if (ev->parsed()) {
      return cmd_eval(ev_data, ev_model, ev_split, ev_support, ev_bucket,
                      ev_pessimistic, ev_max_queries, ev_threads, ev_out, ev_csv);
    }
    if (ab->parsed()) return cmd_ablate(ab_data, ab_grid, ab_out, ab_seeds, ab_threads);
    if (ms->parsed()) {
      return cmd_margin_sweep(ms_data, ms_margins, ms_config, ms_out, ms_seeds,
                              ms_threads);
    }
  } catch (const Error& e) {
    std::cerr << "ERR " << error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "ERR Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
