#include "ofpnet/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ofpnet/errors.h"

namespace ofpnet {
namespace {

constexpr char kMagic[8] = {'O', 'F', 'P', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

nlohmann::json shape_json(const Shape& s) {
  return {s.batch, s.ang_u, s.ang_v, s.channels, s.height, s.width};
}

Shape shape_from_json(const nlohmann::json& j) {
  return Shape{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(),
               j.at(3).get<int>(), j.at(4).get<int>(), j.at(5).get<int>()};
}

}  // namespace

Checkpoint capture_checkpoint(const Model<float>& model) {
  Checkpoint ck;
  ck.config = model.config();
  for (const ag::Parameter<float>* p : model.parameters()) {
    ck.params.push_back({p->name, p->value.shape(),
                         std::vector<float>(p->value.data(), p->value.data() + p->size())});
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto index = [&](const std::vector<NamedArray>& group, const char* tag) {
    for (const NamedArray& a : group) {
      if (a.data.size() != a.shape.numel()) {
        throw SizeError("checkpoint tensor " + a.name + " does not match its shape");
      }
      tensors.push_back({{"name", a.name},
                         {"group", tag},
                         {"shape", shape_json(a.shape)},
                         {"offset", offset},
                         {"count", a.data.size()}});
      offset += a.data.size();
    }
  };
  index(ck.params, "param");
  index(ck.adam_m, "adam_m");
  index(ck.adam_v, "adam_v");
  const nlohmann::json header = {
      {"config", to_json(ck.config)}, {"metadata", ck.metadata}, {"tensors", tensors}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* group : {&ck.params, &ck.adam_m, &ck.adam_v}) {
      for (const NamedArray& a : *group) {
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  static_cast<std::streamsize>(a.data.size() * sizeof(float)));
      }
    }
    if (!out) throw DataError("short write on checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint archive: " + path.string());
  }
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());

  Checkpoint ck;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    ck.config = model_config_from_json(header.at("config"));
    ck.metadata = header.at("metadata");
    for (const auto& t : header.at("tensors")) {
      NamedArray a;
      a.name = t.at("name").get<std::string>();
      a.shape = shape_from_json(t.at("shape"));
      a.data.resize(t.at("count").get<std::size_t>());
      if (a.data.size() != a.shape.numel()) {
        throw DataError("checkpoint tensor " + a.name + " has inconsistent size");
      }
      in.read(reinterpret_cast<char*>(a.data.data()),
              static_cast<std::streamsize>(a.data.size() * sizeof(float)));
      if (!in) throw DataError("truncated checkpoint payload: " + path.string());
      const std::string group = t.at("group").get<std::string>();
      if (group == "param") {
        ck.params.push_back(std::move(a));
      } else if (group == "adam_m") {
        ck.adam_m.push_back(std::move(a));
      } else if (group == "adam_v") {
        ck.adam_v.push_back(std::move(a));
      } else {
        throw DataError("unknown checkpoint tensor group '" + group + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ck, Model<float>& model) {
  if (!ck.config.same_architecture(model.config())) {
    throw ConfigError("checkpoint architecture " + to_json(ck.config).dump() +
                      " does not match model " + to_json(model.config()).dump());
  }
  const auto& params = model.parameters();
  if (params.size() != ck.params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ck.params.size()) +
                      " parameter tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedArray& a = ck.params[i];
    if (a.name != params[i]->name || !(a.shape == params[i]->value.shape())) {
      throw ConfigError("parameter mismatch: checkpoint " + a.name + a.shape.str() +
                        " vs model " + params[i]->name + params[i]->value.shape().str());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(ck.params[i].data.begin(), ck.params[i].data.end(), params[i]->value.data());
  }
}

std::size_t stored_param_count(const Checkpoint& ck) {
  std::size_t n = 0;
  for (const NamedArray& a : ck.params) n += a.data.size();
  return n;
}

}  // namespace ofpnet
