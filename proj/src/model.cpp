#include "jointssl/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "jointssl/errors.hpp"
#include "jointssl/random.hpp"

namespace jointssl {

using nlohmann::json;

json to_json(const ModelConfig& cfg) {
  return json{{"stage_depths", cfg.encoder.stage_depths},
              {"stage_widths", cfg.encoder.stage_widths},
              {"dw_kernel", cfg.encoder.dw_kernel},
              {"expansion", cfg.encoder.expansion},
              {"patch", cfg.encoder.patch},
              {"leaky_slope", cfg.leaky_slope},
              {"num_classes", cfg.num_classes}};
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig cfg;
    cfg.encoder.stage_depths = j.at("stage_depths").get<std::array<int, 4>>();
    cfg.encoder.stage_widths = j.at("stage_widths").get<std::array<int, 4>>();
    cfg.encoder.dw_kernel = j.at("dw_kernel").get<int>();
    cfg.encoder.expansion = j.at("expansion").get<int>();
    cfg.encoder.patch = j.at("patch").get<int>();
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
    cfg.num_classes = j.at("num_classes").get<int>();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model description: ") + e.what());
  }
}

Model::Model(const ModelConfig& cfg)
    : cfg_(cfg), encoder_(cfg.encoder), decoder_(cfg.decoder()),
      head_(cfg.encoder.stage_widths[3], cfg.num_classes) {
  if (cfg.num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  rebuild_refs();
}

Model::Model(const Model& other)
    : cfg_(other.cfg_), encoder_(other.encoder_), decoder_(other.decoder_), head_(other.head_) {
  rebuild_refs();
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    encoder_ = other.encoder_;
    decoder_ = other.decoder_;
    head_ = other.head_;
    rebuild_refs();
  }
  return *this;
}

void Model::rebuild_refs() {
  params_.clear();
  encoder_.collect(params_);
  decoder_.collect(params_);
  head_.collect(params_);
}

void Model::init(std::uint64_t seed) {
  encoder_.init(derive_seed(seed, 1));
  decoder_.init(derive_seed(seed, 2));
  head_.init(derive_seed(seed, 3));
}

void Model::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : params_) n += p->size();
  return n;
}

std::vector<double> Model::probabilities(const ImageTensor& x) const {
  return head_.probabilities(encoder_.encode(x).feature);
}

int Model::predict(const ImageTensor& x) const {
  const auto p = probabilities(x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<double> Model::snapshot() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (auto* p : params_) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

void Model::restore(const std::vector<double>& values) {
  if (values.size() != parameter_count()) throw ShapeError("snapshot size does not match the model");
  std::size_t off = 0;
  for (auto* p : params_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), p->size(), p->value.begin());
    off += p->size();
  }
}

std::size_t import_weights(Model& model, const TensorMap& weights, bool strict) {
  std::vector<std::string> problems;
  std::size_t imported = 0;
  std::map<std::string, nn::Param*> by_name;
  for (auto* p : model.params()) by_name[p->name] = p;

  auto shape_str = [](const std::vector<int>& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + "]";
  };
  for (const auto& [name, t] : weights) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (strict) problems.push_back(name + ": not part of the model");
      continue;
    }
    if (t.shape != it->second->shape || t.values.size() != it->second->size()) {
      problems.push_back(name + ": expected " + shape_str(it->second->shape) + ", got " +
                         shape_str(t.shape));
    }
  }
  if (strict) {
    for (const auto& [name, p] : by_name) {
      if (!weights.contains(name)) problems.push_back(name + ": missing");
    }
  }
  if (!problems.empty()) {
    std::string msg = "weight import failed for " + std::to_string(problems.size()) + " layer(s):";
    for (const auto& s : problems) msg += "\n  " + s;
    throw WeightImportError(msg);
  }
  for (const auto& [name, t] : weights) {
    auto it = by_name.find(name);
    if (it == by_name.end()) continue;
    it->second->value = t.values;
    ++imported;
  }
  return imported;
}

namespace {

constexpr char kMagic[8] = {'J', 'S', 'S', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian hosts");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const json& meta) {
  json header;
  header["model"] = to_json(model.config());
  header["meta"] = meta;
  header["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (auto* p : model.params()) {
    header["tensors"].push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset},
                                 {"count", p->size()}});
    offset += p->size();
  }
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (auto* p : model.params()) {
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + " is not a checkpoint file");
  }
  if (version != kVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path.string() + ": truncated header");

  Checkpoint ck;
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": corrupt header: " + e.what());
  }
  ck.model = model_config_from_json(header.at("model"));
  ck.meta = header.value("meta", json::object());
  const std::streampos payload = in.tellg();
  for (const auto& t : header.at("tensors")) {
    NamedTensor nt;
    nt.shape = t.at("shape").get<std::vector<int>>();
    const auto count = t.at("count").get<std::uint64_t>();
    const auto off = t.at("offset").get<std::uint64_t>();
    nt.values.resize(count);
    in.seekg(payload + static_cast<std::streamoff>(off * sizeof(double)));
    in.read(reinterpret_cast<char*>(nt.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError(path.string() + ": truncated tensor " + t.at("name").get<std::string>());
    ck.tensors.emplace(t.at("name").get<std::string>(), std::move(nt));
  }
  return ck;
}

Model load_model(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  Model m(ck.model);
  import_weights(m, ck.tensors, true);
  return m;
}

}  // namespace jointssl
