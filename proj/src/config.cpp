#include "rdbssl/config.hpp"

#include "rdbssl/errors.hpp"
#include "rdbssl/util.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace rdbssl::config {

namespace {

namespace fs = std::filesystem;

// A YAML mapping with a dotted path for messages; rejects keys outside `allowed`.
class Section {
 public:
  Section(YAML::Node node, std::string path, std::initializer_list<std::string_view> allowed)
      : node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) throw ConfigError("config: '" + path_ + "' must be a mapping");
    const std::set<std::string_view> keys(allowed);
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!keys.count(key)) throw ConfigError("config: unknown key '" + where(key) + "'");
    }
  }

  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }
  YAML::Node node(const std::string& key) const { return node_[key]; }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) const {
    if (has(key)) out = as<T>(node_[key], where(key));
  }

  template <typename T>
  T required(const std::string& key) const {
    if (!has(key)) throw ConfigError("config: missing required key '" + where(key) + "'");
    return as<T>(node_[key], where(key));
  }

  template <typename T>
  static T as(const YAML::Node& n, const std::string& where) {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("config: bad value for '" + where + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
};

// A scalar or a list of scalars.
template <typename T>
std::vector<T> scalar_or_list(const YAML::Node& n, const std::string& where) {
  std::vector<T> out;
  if (n.IsSequence()) {
    for (const auto& item : n) out.push_back(Section::as<T>(item, where));
  } else {
    out.push_back(Section::as<T>(n, where));
  }
  if (out.empty()) throw ConfigError("config: '" + where + "' must not be empty");
  return out;
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : base / p; }

template <typename T>
void require(bool ok, const std::string& what, const T& value) {
  if (!ok) {
    std::ostringstream s;
    s << "config: " << what << " (got " << value << ")";
    throw ConfigError(s.str());
  }
}

void parse_data(const Section& s, ExperimentConfig& c, const fs::path& base) {
  const bool trap = s.has("trap");
  const bool csv = s.has("csv");
  if (trap == csv) throw ConfigError("config: 'data' needs exactly one of 'trap' or 'csv'");
  if (trap) {
    Section t(s.node("trap"), "data.trap", {"kind", "n", "rho", "edge_prob", "seed"});
    synth::TrapSpec spec;
    spec.kind = synth::parse_trap_kind(t.required<std::string>("kind"));
    t.get("n", spec.n);
    t.get("rho", spec.rho);
    t.get("edge_prob", spec.edge_prob);
    t.get("seed", spec.seed);
    spec.validate();
    c.data.trap = spec;
    if (c.name.empty()) c.name = std::string(synth::to_string(spec.kind));
    return;
  }
  Section d(s.node("csv"), "data.csv", {"directory", "schema"});
  c.data.csv_directory = resolve(d.required<std::string>("directory"), base);
  c.data.schema = d.has("schema") ? resolve(d.required<std::string>("schema"), base) : c.data.csv_directory / "schema.yaml";
  if (!fs::is_directory(c.data.csv_directory)) {
    throw ConfigError("config: data.csv.directory does not exist: " + c.data.csv_directory.string());
  }
  if (!fs::is_regular_file(c.data.schema)) {
    throw ConfigError("config: data.csv.schema does not exist: " + c.data.schema.string());
  }
  if (c.name.empty()) c.name = c.data.csv_directory.filename().string();
}

void parse_pretrain(const Section& s, ExperimentConfig& c) {
  auto& p = c.pretrain;
  s.get("epochs", p.epochs);
  s.get("batch_size", p.batch_size);
  s.get("mask_rate", p.corruption.mask_rate);
  s.get("reconstruct_all", p.corruption.reconstruct_all);
  s.get("learning_rate", p.adam.learning_rate);
  s.get("alpha0", p.alpha0);
  s.get("alpha1", p.alpha1);
  s.get("negatives_per_positive", p.pairs.negatives_per_positive);
  s.get("same_graph_node_negatives", p.pairs.same_graph_node_negatives);
  if (s.has("hybrid_contrastive")) {
    const auto mode = s.required<std::string>("hybrid_contrastive");
    if (mode == "infonode") {
      p.hybrid_contrastive = ssl::ContrastiveMode::infonode;
    } else if (mode == "infograph") {
      p.hybrid_contrastive = ssl::ContrastiveMode::infograph;
    } else {
      throw ConfigError("config: pretrain.hybrid_contrastive must be infonode or infograph (got " + mode + ")");
    }
  }
  require(p.epochs >= 0, "pretrain.epochs must be >= 0", p.epochs);
  require(p.batch_size >= 2, "pretrain.batch_size must be >= 2", p.batch_size);
  require(p.corruption.mask_rate >= 0.0 && p.corruption.mask_rate <= 1.0, "pretrain.mask_rate must lie in [0, 1]",
          p.corruption.mask_rate);
  require(p.adam.learning_rate > 0.0, "pretrain.learning_rate must be > 0", p.adam.learning_rate);
  const bool hybrid =
      std::find(c.strategies.begin(), c.strategies.end(), train::Strategy::hybrid) != c.strategies.end();
  if (hybrid) {
    if (!s.has("alpha0") || !s.has("alpha1")) {
      throw ConfigError("config: pretrain.alpha0 and pretrain.alpha1 are required when 'hybrid' is a strategy");
    }
    require(p.alpha0 >= 0.0 && p.alpha1 >= 0.0 && p.alpha0 + p.alpha1 > 0.0,
            "hybrid weights must be >= 0 and not both 0", p.alpha0);
  }
}

void parse_evaluation(const Section& s, ExperimentConfig& c) {
  auto& e = c.evaluation;
  if (s.has("s_percent")) e.s_percent = scalar_or_list<double>(s.node("s_percent"), s.where("s_percent"));
  if (s.has("seeds")) e.seeds = scalar_or_list<std::uint64_t>(s.node("seeds"), s.where("seeds"));
  s.get("test_percent", e.test_percent);
  s.get("split_seed", e.split_seed);
  for (double v : e.s_percent) require(v > 0.0 && v <= 100.0, "evaluation.s_percent values must lie in (0, 100]", v);
  require(e.test_percent > 0.0 && e.test_percent < 100.0, "evaluation.test_percent must lie in (0, 100)",
          e.test_percent);
  if (s.has("probe")) {
    Section p(s.node("probe"), s.where("probe"), {"learning_rate", "epochs"});
    p.get("learning_rate", e.probe.learning_rate);
    p.get("epochs", e.probe.epochs);
    require(e.probe.epochs >= 0, "evaluation.probe.epochs must be >= 0", e.probe.epochs);
  }
  if (s.has("finetune")) {
    Section f(s.node("finetune"), s.where("finetune"), {"enabled", "epochs", "batch_size", "learning_rate"});
    f.get("enabled", e.finetune);
    f.get("epochs", e.finetune_options.epochs);
    f.get("batch_size", e.finetune_options.batch_size);
    f.get("learning_rate", e.finetune_options.adam.learning_rate);
    require(e.finetune_options.epochs >= 0, "evaluation.finetune.epochs must be >= 0", e.finetune_options.epochs);
    require(e.finetune_options.batch_size >= 1, "evaluation.finetune.batch_size must be >= 1",
            e.finetune_options.batch_size);
  }
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const Section top(root, "",
                    {"name", "data", "sampling", "encoder", "strategies", "pretrain", "evaluation", "output"});
  ExperimentConfig c;
  top.get("name", c.name);
  if (!top.has("data")) throw ConfigError("config: missing required section 'data'");
  parse_data(Section(top.node("data"), "data", {"trap", "csv"}), c, base_dir);

  if (top.has("sampling")) {
    Section s(top.node("sampling"), "sampling", {"depth", "fanout_cap", "isolate_target_rows", "seed"});
    s.get("depth", c.sampling.depth);
    s.get("fanout_cap", c.sampling.fanout_cap);
    s.get("isolate_target_rows", c.sampling.isolate_target_rows);
    s.get("seed", c.sampling_seed);
    require(c.sampling.depth >= 0, "sampling.depth must be >= 0", c.sampling.depth);
    require(c.sampling.fanout_cap >= 1, "sampling.fanout_cap must be >= 1", c.sampling.fanout_cap);
  }

  if (top.has("encoder")) {
    Section s(top.node("encoder"), "encoder",
              {"backbone", "layers", "hidden", "embed_width", "prediction_source", "direction"});
    if (s.has("backbone")) {
      c.backbones.clear();
      for (const auto& b : scalar_or_list<std::string>(s.node("backbone"), "encoder.backbone")) {
        c.backbones.push_back(gnn::parse_backbone(b));
      }
    }
    s.get("layers", c.encoder.layers);
    s.get("hidden", c.encoder.hidden);
    s.get("embed_width", c.encoder.embed_width);
    if (s.has("prediction_source")) {
      c.encoder.prediction_source = gnn::parse_prediction_source(s.required<std::string>("prediction_source"));
    }
    if (s.has("direction")) c.encoder.direction = gnn::parse_message_direction(s.required<std::string>("direction"));
  }
  c.encoder.backbone = c.backbones.front();
  c.encoder.validate();

  if (top.has("strategies")) {
    c.strategies.clear();
    for (const auto& s : scalar_or_list<std::string>(top.node("strategies"), "strategies")) {
      const auto strategy = train::parse_strategy(s);
      if (std::find(c.strategies.begin(), c.strategies.end(), strategy) != c.strategies.end()) {
        throw ConfigError("config: strategy '" + s + "' listed twice");
      }
      c.strategies.push_back(strategy);
    }
  }

  parse_pretrain(top.has("pretrain") ? Section(top.node("pretrain"), "pretrain",
                                               {"epochs", "batch_size", "mask_rate", "reconstruct_all",
                                                "learning_rate", "alpha0", "alpha1", "hybrid_contrastive",
                                                "negatives_per_positive", "same_graph_node_negatives"})
                                     : Section(YAML::Node(YAML::NodeType::Map), "pretrain", {}),
                 c);
  if (top.has("evaluation")) {
    parse_evaluation(Section(top.node("evaluation"), "evaluation",
                             {"s_percent", "seeds", "test_percent", "split_seed", "probe", "finetune"}),
                     c);
  }
  if (top.has("output")) {
    Section o(top.node("output"), "output", {"directory"});
    c.output = resolve(o.required<std::string>("directory"), base_dir);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::string ExperimentConfig::canonical() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  if (data.trap) {
    j["data"] = {{"trap",
                  {{"kind", synth::to_string(data.trap->kind)},
                   {"n", data.trap->n},
                   {"rho", data.trap->rho},
                   {"edge_prob", data.trap->edge_prob},
                   {"seed", data.trap->seed}}}};
  } else {
    j["data"] = {{"csv", {{"directory", data.csv_directory.string()}, {"schema", data.schema.string()}}}};
  }
  j["sampling"] = {{"depth", sampling.depth},
                   {"fanout_cap", sampling.fanout_cap},
                   {"isolate_target_rows", sampling.isolate_target_rows},
                   {"seed", sampling_seed}};
  std::vector<std::string> bb;
  for (auto b : backbones) bb.emplace_back(gnn::to_string(b));
  j["encoder"] = {{"backbone", bb},
                  {"layers", encoder.layers},
                  {"hidden", encoder.hidden},
                  {"embed_width", encoder.embed_width},
                  {"prediction_source", gnn::to_string(encoder.prediction_source)},
                  {"direction", gnn::to_string(encoder.direction)}};
  std::vector<std::string> st;
  for (auto s : strategies) st.emplace_back(train::to_string(s));
  j["strategies"] = st;
  j["pretrain"] = {{"epochs", pretrain.epochs},
                   {"batch_size", pretrain.batch_size},
                   {"mask_rate", pretrain.corruption.mask_rate},
                   {"reconstruct_all", pretrain.corruption.reconstruct_all},
                   {"learning_rate", pretrain.adam.learning_rate},
                   {"alpha0", pretrain.alpha0},
                   {"alpha1", pretrain.alpha1},
                   {"hybrid_contrastive",
                    pretrain.hybrid_contrastive == ssl::ContrastiveMode::infonode ? "infonode" : "infograph"},
                   {"negatives_per_positive", pretrain.pairs.negatives_per_positive},
                   {"same_graph_node_negatives", pretrain.pairs.same_graph_node_negatives}};
  j["evaluation"] = {{"s_percent", evaluation.s_percent},
                     {"seeds", evaluation.seeds},
                     {"test_percent", evaluation.test_percent},
                     {"split_seed", evaluation.split_seed},
                     {"probe", {{"learning_rate", evaluation.probe.learning_rate}, {"epochs", evaluation.probe.epochs}}},
                     {"finetune",
                      {{"enabled", evaluation.finetune},
                       {"epochs", evaluation.finetune_options.epochs},
                       {"batch_size", evaluation.finetune_options.batch_size},
                       {"learning_rate", evaluation.finetune_options.adam.learning_rate}}}};
  return j.dump();
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical()); }

}  // namespace rdbssl::config
