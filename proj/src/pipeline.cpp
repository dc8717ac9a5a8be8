#include "rdbssl/pipeline.hpp"

#include "rdbssl/checkpoint.hpp"
#include "rdbssl/errors.hpp"
#include "rdbssl/util.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <bit>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace rdbssl::pipeline {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Seed stream tags, mixed with the evaluation seed.
constexpr std::uint64_t kInitTag = 10;
constexpr std::uint64_t kPretrainTag = 11;
constexpr std::uint64_t kSubsampleTag = 20;
constexpr std::uint64_t kFinetuneTag = 30;

fs::path data_dir(const config::ExperimentConfig& c) { return c.output / "data"; }
fs::path checkpoint_dir(const config::ExperimentConfig& c) { return c.output / "checkpoints"; }
fs::path metrics_dir(const config::ExperimentConfig& c) { return c.output / "metrics"; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + p.string());
}

template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const auto workers = std::min(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Dataset {
  rdb::RdbGraph graph;
  std::vector<rdb::Subgraph> all;       // one per target row
  std::vector<rdb::Subgraph> labelled;  // rows with a label, in row order
  std::vector<int> labels;
  eval::Split split;                    // indices into `labelled`
};

Dataset load_dataset(const config::ExperimentConfig& c) {
  const fs::path dir = data_dir(c);
  if (!fs::exists(dir / "schema.yaml")) {
    throw DataError("no dataset under " + dir.string() + "; run the ingest or synth stage first");
  }
  Dataset d;
  d.graph = rdb::build_rdb_graph(rdb::load_rdb(rdb::load_schema(dir / "schema.yaml"), dir));
  d.all = rdb::sample_all(d.graph, c.sampling, c.sampling_seed);
  for (const auto& s : d.all) {
    if (!s.label) continue;
    d.labelled.push_back(s);
    d.labels.push_back(*s.label);
  }
  d.split = eval::holdout_split(d.labels, c.evaluation.test_percent, c.evaluation.split_seed);
  spdlog::info("dataset '{}': {} nodes, {} edges, {} target rows ({} labelled, {} held out for test)", c.name,
               d.graph.node_type.size(), d.graph.edges.size(), d.all.size(), d.labelled.size(), d.split.test.size());
  return d;
}

struct Cell {
  gnn::Backbone backbone;
  train::Strategy strategy;
  std::uint64_t seed;
};

std::vector<Cell> grid(const config::ExperimentConfig& c) {
  std::vector<Cell> cells;
  for (auto b : c.backbones) {
    for (auto s : c.strategies) {
      for (auto k : c.evaluation.seeds) cells.push_back({b, s, k});
    }
  }
  return cells;
}

fs::path checkpoint_path(const config::ExperimentConfig& c, const Cell& cell) {
  return checkpoint_dir(c) /
         fmt::format("{}_{}_seed{}.ckpt", gnn::to_string(cell.backbone), train::to_string(cell.strategy), cell.seed);
}

gnn::EncoderModel model_for(const config::ExperimentConfig& c, const Dataset& d, gnn::Backbone backbone) {
  gnn::EncoderModel m;
  m.config = c.encoder;
  m.config.backbone = backbone;
  m.schema = d.graph.schema;
  m.stats = gnn::compute_feature_stats(d.graph);
  return m;
}

ckpt::Checkpoint load_checkpoint(const config::ExperimentConfig& c, const Cell& cell) {
  const fs::path path = checkpoint_path(c, cell);
  if (!fs::exists(path)) throw DataError("missing checkpoint " + path.string() + "; run the pretrain stage first");
  auto ck = ckpt::load(path);
  auto expected = c.encoder;
  expected.backbone = cell.backbone;
  if (!(ck.model.config == expected) || ck.tag != train::to_string(cell.strategy)) {
    throw DataError("checkpoint/config mismatch for " + path.string());
  }
  return ck;
}

std::uint64_t s_bits(double s) { return std::bit_cast<std::uint64_t>(s); }

// S% of the training partition, stratified; identical across strategies.
std::vector<std::size_t> subsample(const Dataset& d, double s_percent, std::uint64_t seed) {
  std::vector<int> train_labels;
  for (std::size_t i : d.split.train) train_labels.push_back(d.labels[i]);
  std::vector<std::size_t> rows;
  for (std::size_t k : rdb::stratified_split(train_labels, s_percent, derive_seed(seed, {kSubsampleTag, s_bits(s_percent)}))) {
    rows.push_back(d.split.train[k]);
  }
  return rows;
}

Tensor take_rows(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  return out;
}

std::vector<int> take(const std::vector<int>& v, std::span<const std::size_t> rows) {
  std::vector<int> out;
  for (std::size_t i : rows) out.push_back(v[i]);
  return out;
}

void stage_data(const config::ExperimentConfig& c, bool synth_only) {
  const fs::path dir = data_dir(c);
  if (c.data.trap) {
    fs::remove_all(dir);
    synth::write_dataset(*c.data.trap, dir);
    spdlog::info("synthesised {} (n = {}) into {}", synth::to_string(c.data.trap->kind), c.data.trap->n, dir.string());
    return;
  }
  if (synth_only) throw ConfigError("the synth stage needs a 'data.trap' source");
  const auto db = rdb::load_rdb(rdb::load_schema(c.data.schema), c.data.csv_directory);
  fs::remove_all(dir);
  rdb::write_rdb(db, dir);
  spdlog::info("ingested {} tables ({} rows) into {}", db.tables.size(), db.total_rows(), dir.string());
}

void stage_pretrain(const config::ExperimentConfig& c, RunManifest& manifest) {
  const Dataset d = load_dataset(c);
  const auto unlabeled = rdb::strip_labels(d.all);
  const auto cells = grid(c);
  std::vector<CheckpointRecord> records(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const Cell& cell = cells[i];
    const auto model = model_for(c, d, cell.backbone);
    ParamStore params;
    gnn::init_encoder_params(params, model, derive_seed(cell.seed, {kInitTag}));
    const fs::path path = checkpoint_path(c, cell);
    const bool pretrained = cell.strategy != train::Strategy::untrained;
    if (pretrained) {
      auto options = c.pretrain;
      options.strategy = cell.strategy;
      const auto result = train::pretrain(params, model, unlabeled, options, derive_seed(cell.seed, {kPretrainTag}));
      std::string history;
      for (const auto& e : result.history) {
        history += ordered_json{{"epoch", e.epoch},
                                {"mean_loss", e.mean_loss},
                                {"batches", e.batches},
                                {"skipped_batches", e.skipped_batches}}
                       .dump() +
                   "\n";
      }
      write_file(fs::path(path).replace_extension(".history.jsonl"), history);
    }
    const std::string tag(train::to_string(cell.strategy));
    ckpt::save(path, model, params, tag);
    records[i] = {std::string(gnn::to_string(cell.backbone)), tag, cell.seed, path,
                  ckpt::checkpoint_hash(model, params, tag), pretrained};
    spdlog::info("checkpoint {} ({})", path.filename().string(), pretrained ? "pretrained" : "random init");
  });
  manifest.checkpoints = std::move(records);
}

void stage_probe(const config::ExperimentConfig& c, RunManifest& manifest) {
  const Dataset d = load_dataset(c);
  const auto cells = grid(c);
  const auto& s_list = c.evaluation.s_percent;
  const auto test_labels = take(d.labels, d.split.test);
  std::vector<std::vector<eval::MetricsRow>> results(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const Cell& cell = cells[i];
    auto ck = load_checkpoint(c, cell);
    const Tensor reps = eval::extract_representations(ck.params, ck.model, d.labelled);
    const Tensor test = take_rows(reps, d.split.test);
    for (double s : s_list) {
      const auto rows = subsample(d, s, cell.seed);
      const auto probe = eval::fit_linear_probe(take_rows(reps, rows), take(d.labels, rows), c.evaluation.probe);
      eval::MetricsRow r;
      r.dataset = c.name;
      r.backbone = gnn::to_string(cell.backbone);
      r.strategy = train::to_string(cell.strategy);
      r.s_percent = s;
      r.seed = cell.seed;
      r.probe_auc = eval::roc_auc(probe.scores(test), test_labels);
      results[i].push_back(std::move(r));
    }
  });
  // Order: backbone, strategy, S, seed.
  std::vector<eval::MetricsRow> rows;
  const std::size_t seeds = c.evaluation.seeds.size();
  for (std::size_t block = 0; block < cells.size(); block += seeds) {
    for (std::size_t si = 0; si < s_list.size(); ++si) {
      for (std::size_t k = 0; k < seeds; ++k) rows.push_back(results[block + k][si]);
    }
  }
  for (const auto& r : rows) {
    spdlog::info("probe {}/{} S={} seed {}: AUC {:.4f}", r.backbone, r.strategy, r.s_percent, r.seed, r.probe_auc);
  }
  const fs::path path = metrics_dir(c) / "probe.jsonl";
  write_file(path, eval::metrics_jsonl(rows));
  manifest.metrics.push_back(path);
}

std::string finetune_key(std::string_view backbone, std::string_view strategy, double s, std::uint64_t seed) {
  return fmt::format("{}|{}|{}|{}", backbone, strategy, s_bits(s), seed);
}

void stage_finetune(const config::ExperimentConfig& c, RunManifest& manifest) {
  const fs::path path = metrics_dir(c) / "finetune.jsonl";
  if (!c.evaluation.finetune) {
    fs::remove(path);
    spdlog::info("fine-tuning disabled; skipping");
    return;
  }
  const Dataset d = load_dataset(c);
  const auto cells = grid(c);
  const auto& s_list = c.evaluation.s_percent;
  std::vector<double> auc(cells.size() * s_list.size());
  parallel_for(auc.size(), [&](std::size_t job) {
    const Cell& cell = cells[job / s_list.size()];
    const double s = s_list[job % s_list.size()];
    auto ck = load_checkpoint(c, cell);
    const auto rows = subsample(d, s, cell.seed);
    auc[job] = eval::fine_tune(ck.params, ck.model, d.labelled, rows, d.split.test, c.evaluation.finetune_options,
                               derive_seed(cell.seed, {kFinetuneTag, s_bits(s)}));
  });
  std::string out;
  for (std::size_t job = 0; job < auc.size(); ++job) {
    const Cell& cell = cells[job / s_list.size()];
    const double s = s_list[job % s_list.size()];
    out += ordered_json{{"backbone", gnn::to_string(cell.backbone)},
                        {"strategy", train::to_string(cell.strategy)},
                        {"S", s},
                        {"seed", cell.seed},
                        {"finetune_auc", auc[job]}}
               .dump() +
           "\n";
    spdlog::info("fine-tune {}/{} S={} seed {}: AUC {:.4f}", gnn::to_string(cell.backbone),
                 train::to_string(cell.strategy), s, cell.seed, auc[job]);
  }
  write_file(path, out);
  manifest.metrics.push_back(path);
}

void stage_report(const config::ExperimentConfig& c, RunManifest& manifest) {
  const fs::path probe_path = metrics_dir(c) / "probe.jsonl";
  if (!fs::exists(probe_path)) throw DataError("missing " + probe_path.string() + "; run the probe stage first");
  auto rows = eval::parse_metrics_jsonl(read_file(probe_path));
  if (rows.empty()) throw DataError("no probe records in " + probe_path.string());

  const fs::path finetune_path = metrics_dir(c) / "finetune.jsonl";
  if (fs::exists(finetune_path)) {
    std::map<std::string, double> finetune;
    std::istringstream in(read_file(finetune_path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        finetune[finetune_key(j.at("backbone").get<std::string>(), j.at("strategy").get<std::string>(),
                              j.at("S").get<double>(), j.at("seed").get<std::uint64_t>())] =
            j.at("finetune_auc").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError("fine-tune record: " + std::string(e.what()));
      }
    }
    for (auto& r : rows) {
      const auto it = finetune.find(finetune_key(r.backbone, r.strategy, r.s_percent, r.seed));
      if (it != finetune.end()) r.finetune_auc = it->second;
    }
  }

  const auto summaries = eval::negative_transfer_report(rows);
  ordered_json report;
  report["config_hash"] = c.hash();
  report["dataset"] = c.name;
  report["summaries"] = ordered_json::array();
  ordered_json flagged = ordered_json::array();
  for (const auto& t : summaries) {
    ordered_json s{{"backbone", t.backbone},
                   {"strategy", t.strategy},
                   {"S", t.s_percent},
                   {"seeds", t.seeds},
                   {"mean_auc", t.mean_auc},
                   {"std_auc", t.std_auc},
                   {"untrained_mean_auc", t.untrained_mean_auc},
                   {"delta", t.delta},
                   {"negative_transfer", t.negative_transfer}};
    spdlog::info("{}/{} S={}: AUC {:.4f} +- {:.4f} over {} seeds, delta vs untrained {:+.4f}", t.backbone, t.strategy,
                 t.s_percent, t.mean_auc, t.std_auc, t.seeds, t.delta);
    if (t.negative_transfer) {
      spdlog::warn("negative transfer: {}/{} at S={} is {:.4f} below the untrained encoder", t.backbone, t.strategy,
                   t.s_percent, -t.delta);
      flagged.push_back(s);
    }
    report["summaries"].push_back(std::move(s));
  }
  report["negative_transfer"] = flagged;
  write_file(c.output / "report.json", report.dump(2) + "\n");
  for (auto& p : emit_metrics(rows, c.output, c.hash())) manifest.metrics.push_back(std::move(p));
  manifest.metrics.push_back(c.output / "report.json");
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::ingest:
      return "ingest";
    case Stage::synth:
      return "synth";
    case Stage::pretrain:
      return "pretrain";
    case Stage::probe:
      return "probe";
    case Stage::finetune:
      return "finetune";
    case Stage::report:
      return "report";
    case Stage::run:
      return "run";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  for (Stage st : {Stage::ingest, Stage::synth, Stage::pretrain, Stage::probe, Stage::finetune, Stage::report,
                   Stage::run}) {
    if (s == to_string(st)) return st;
  }
  throw ConfigError("unknown stage '" + std::string(s) +
                    "' (expected ingest, synth, pretrain, probe, finetune, report or run)");
}

int worker_count() {
  if (const char* env = std::getenv("RDBSSL_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    spdlog::warn("ignoring RDBSSL_WORKERS='{}' (expected an integer >= 1)", env);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string RunManifest::to_json() const {
  ordered_json j;
  j["config_hash"] = config_hash;
  j["version"] = version;
  j["output"] = output.string();
  j["checkpoints"] = ordered_json::array();
  for (const auto& c : checkpoints) {
    j["checkpoints"].push_back({{"backbone", c.backbone},
                                {"strategy", c.strategy},
                                {"seed", c.seed},
                                {"path", c.path.string()},
                                {"sha256", c.hash},
                                {"pretrained", c.pretrained}});
  }
  j["metrics"] = ordered_json::array();
  for (const auto& p : metrics) j["metrics"].push_back(p.string());
  j["logs"] = ordered_json::array();
  for (const auto& p : logs) j["logs"].push_back(p.string());
  j["timings"] = ordered_json::array();
  for (const auto& t : timings) j["timings"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  return j.dump(2) + "\n";
}

void run_stage(const config::ExperimentConfig& config, Stage stage, RunManifest& manifest) {
  if (stage == Stage::run) {
    manifest = run_pipeline(config);
    return;
  }
  const fs::path failed = config.output / "FAILED";
  const auto start = std::chrono::steady_clock::now();
  try {
    fs::create_directories(config.output);
    fs::remove(failed);
    spdlog::info("stage {} -> {}", to_string(stage), config.output.string());
    switch (stage) {
      case Stage::ingest:
        stage_data(config, false);
        break;
      case Stage::synth:
        stage_data(config, true);
        break;
      case Stage::pretrain:
        stage_pretrain(config, manifest);
        break;
      case Stage::probe:
        stage_probe(config, manifest);
        break;
      case Stage::finetune:
        stage_finetune(config, manifest);
        break;
      case Stage::report:
        stage_report(config, manifest);
        break;
      case Stage::run:
        break;
    }
  } catch (const std::exception& e) {
    spdlog::error("stage {} failed: {}", to_string(stage), e.what());
    try {
      write_file(failed, fmt::format("stage: {}\ncause: {}\n", to_string(stage), e.what()));
    } catch (const std::exception&) {
      // The original error matters more than the marker.
    }
    throw;
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  manifest.timings.push_back({std::string(to_string(stage)), elapsed.count()});
}

RunManifest run_pipeline(const config::ExperimentConfig& config) {
  RunManifest manifest;
  manifest.config_hash = config.hash();
  manifest.output = config.output;
  for (Stage s : {config.data.trap ? Stage::synth : Stage::ingest, Stage::pretrain, Stage::probe, Stage::finetune,
                  Stage::report}) {
    run_stage(config, s, manifest);
  }
  if (fs::exists(config.output / "run.log")) manifest.logs.push_back(config.output / "run.log");
  write_file(config.output / "manifest.json", manifest.to_json());
  return manifest;
}

RunManifest run_pipeline(const std::filesystem::path& config_file) {
  return run_pipeline(config::load_config(config_file));
}

std::vector<std::filesystem::path> emit_metrics(std::span<const eval::MetricsRow> rows,
                                                const std::filesystem::path& output_dir,
                                                const std::string& config_hash) {
  if (rows.empty()) throw DataError("emit_metrics: no report rows");
  const fs::path csv = output_dir / "metrics.csv";
  const fs::path jsonl = output_dir / "metrics.jsonl";
  write_file(csv, eval::metrics_csv(rows));
  write_file(jsonl, eval::metrics_jsonl(rows));

  const fs::path index = output_dir / "index.jsonl";
  std::size_t previous = 0;
  if (fs::exists(index)) {
    const auto text = read_file(index);
    previous = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  }
  std::ofstream out(index, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to " + index.string());
  out << ordered_json{{"run", previous + 1},
                      {"config_hash", config_hash},
                      {"manifest", (output_dir / "manifest.json").string()},
                      {"metrics_csv", csv.string()},
                      {"metrics_jsonl", jsonl.string()},
                      {"rows", rows.size()}}
             .dump()
      << "\n";
  if (!out) throw DataError("append failed for " + index.string());
  return {csv, jsonl};
}

}  // namespace rdbssl::pipeline
