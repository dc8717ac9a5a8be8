#include "rdbssl/checkpoint.hpp"

#include "rdbssl/errors.hpp"
#include "rdbssl/util.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rdbssl::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'D', 'B', 'S', 'S', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }
  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint: truncated file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json metadata(const gnn::EncoderModel& model, const std::string& tag) {
  const auto& c = model.config;
  json j;
  j["tag"] = tag;
  j["config"] = {{"backbone", gnn::to_string(c.backbone)},
                 {"layers", c.layers},
                 {"hidden", c.hidden},
                 {"embed_width", c.embed_width},
                 {"prediction_source", gnn::to_string(c.prediction_source)},
                 {"direction", gnn::to_string(c.direction)}};
  json types = json::array();
  for (const auto& t : model.schema.types) {
    types.push_back({{"name", t.name},
                     {"continuous", t.continuous},
                     {"categorical", t.categorical},
                     {"vocab_sizes", t.vocab_sizes}});
  }
  j["schema"] = {{"types", types}, {"edge_labels", model.schema.edge_labels}, {"target_type", model.schema.target_type}};
  json stats = json::array();
  for (const auto& per_type : model.stats.continuous) {
    json cols = json::array();
    for (const auto& s : per_type) cols.push_back({s.mean, s.scale});
    stats.push_back(cols);
  }
  j["stats"] = stats;
  return j;
}

gnn::EncoderModel model_from(const json& j) {
  gnn::EncoderModel m;
  const auto& c = j.at("config");
  m.config.backbone = gnn::parse_backbone(c.at("backbone").get<std::string>());
  m.config.layers = c.at("layers").get<int>();
  m.config.hidden = c.at("hidden").get<int>();
  m.config.embed_width = c.at("embed_width").get<int>();
  m.config.prediction_source = gnn::parse_prediction_source(c.at("prediction_source").get<std::string>());
  m.config.direction = gnn::parse_message_direction(c.at("direction").get<std::string>());
  for (const auto& t : j.at("schema").at("types")) {
    rdb::TypeLayout layout;
    layout.name = t.at("name").get<std::string>();
    layout.continuous = t.at("continuous").get<std::vector<std::string>>();
    layout.categorical = t.at("categorical").get<std::vector<std::string>>();
    layout.vocab_sizes = t.at("vocab_sizes").get<std::vector<int>>();
    m.schema.types.push_back(std::move(layout));
  }
  m.schema.edge_labels = j.at("schema").at("edge_labels").get<std::vector<std::string>>();
  m.schema.target_type = j.at("schema").at("target_type").get<int>();
  for (const auto& per_type : j.at("stats")) {
    std::vector<gnn::ColumnStats> cols;
    for (const auto& s : per_type) cols.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    m.stats.continuous.push_back(std::move(cols));
  }
  return m;
}

}  // namespace

std::string serialize(const gnn::EncoderModel& model, const ParamStore& params, const std::string& tag) {
  std::string out(kMagic, sizeof(kMagic));
  put(out, kVersion);
  const std::string meta = metadata(model, tag).dump();
  put(out, static_cast<std::uint64_t>(meta.size()));
  out += meta;
  put(out, static_cast<std::uint64_t>(params.size()));
  for (const auto& [name, p] : params.entries()) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put(out, static_cast<std::uint64_t>(p.value.rows()));
    put(out, static_cast<std::uint64_t>(p.value.cols()));
    out.append(reinterpret_cast<const char*>(p.value.data()), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return out;
}

Checkpoint deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw DataError("checkpoint: bad magic (not a checkpoint file)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  Checkpoint ck;
  try {
    const auto meta = json::parse(r.take(r.get<std::uint64_t>()));
    ck.model = model_from(meta);
    ck.tag = meta.at("tag").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name(r.take(r.get<std::uint32_t>()));
    const auto rows = static_cast<Index>(r.get<std::uint64_t>());
    const auto cols = static_cast<Index>(r.get<std::uint64_t>());
    Tensor value(rows, cols);
    const auto raw = r.take(static_cast<std::size_t>(rows * cols) * sizeof(double));
    std::memcpy(value.data(), raw.data(), raw.size());
    ck.params.add(name, std::move(value));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ck;
}

std::string checkpoint_hash(const gnn::EncoderModel& model, const ParamStore& params, const std::string& tag) {
  return sha256_hex(serialize(model, params, tag));
}

void save(const std::filesystem::path& path, const gnn::EncoderModel& model, const ParamStore& params,
          const std::string& tag) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  const std::string bytes = serialize(model, params, tag);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace rdbssl::ckpt
