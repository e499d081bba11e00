#include "ofpnet/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ofpnet/errors.h"

namespace ofpnet::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("key '" + key + "': '" + value + "' is not " + expected);
}

template <typename I>
I to_integer(const std::string& key, const std::string& v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string flag(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field int_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_integer<std::remove_reference_t<decltype(member(c))>>(k, v);
          },
          [member](const RunConfig& c) {
            return std::to_string(member(const_cast<RunConfig&>(c)));
          }};
}

template <typename M>
Field real_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_real(k, v);
          },
          [member](const RunConfig& c) { return num(member(const_cast<RunConfig&>(c))); }};
}

template <typename M>
Field bool_field(M member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = to_bool(k, v);
          },
          [member](const RunConfig& c) { return flag(member(const_cast<RunConfig&>(c))); }};
}

template <typename M>
Field string_field(M member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) { member(c) = v; },
          [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> kFields = {
      {"model.channels", int_field([](RunConfig& c) -> int& { return c.model.channels; })},
      {"model.projection_depth",
       int_field([](RunConfig& c) -> int& { return c.model.projection_depth; })},
      {"model.angular_u", int_field([](RunConfig& c) -> int& { return c.model.angular_u; })},
      {"model.angular_v", int_field([](RunConfig& c) -> int& { return c.model.angular_v; })},
      {"model.fusion_blocks",
       int_field([](RunConfig& c) -> int& { return c.model.fusion_blocks; })},
      {"model.branch_mode",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.model.branch_mode = parse_branch_mode(v);
        },
        [](const RunConfig& c) { return to_string(c.model.branch_mode); }}},
      {"model.interaction", bool_field([](RunConfig& c) -> bool& { return c.model.interaction; })},
      {"model.use_fp", bool_field([](RunConfig& c) -> bool& { return c.model.use_fp; })},
      {"model.share_fp_instances",
       bool_field([](RunConfig& c) -> bool& { return c.model.share_fp_instances; })},
      {"model.fp_replacement_blocks",
       int_field([](RunConfig& c) -> int& { return c.model.fp_replacement_blocks; })},
      {"model.padding_blocks",
       int_field([](RunConfig& c) -> int& { return c.model.padding_blocks; })},
      {"model.variant", string_field([](RunConfig& c) -> std::string& { return c.model.variant; })},

      {"train.phase",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.train.phase = train::parse_phase(v);
        },
        [](const RunConfig& c) { return train::to_string(c.train.phase); }}},
      {"train.lr0", real_field([](RunConfig& c) -> double& { return c.train.lr0; })},
      {"train.halve_every", int_field([](RunConfig& c) -> int& { return c.train.halve_every; })},
      {"train.total_epochs", int_field([](RunConfig& c) -> int& { return c.train.total_epochs; })},
      {"train.batch", int_field([](RunConfig& c) -> int& { return c.train.batch; })},
      {"train.patch", int_field([](RunConfig& c) -> int& { return c.train.patch; })},
      {"train.scale", int_field([](RunConfig& c) -> int& { return c.train.scale; })},
      {"train.beta1", real_field([](RunConfig& c) -> double& { return c.train.beta1; })},
      {"train.beta2", real_field([](RunConfig& c) -> double& { return c.train.beta2; })},
      {"train.eps", real_field([](RunConfig& c) -> double& { return c.train.eps; })},
      {"train.seed", int_field([](RunConfig& c) -> std::uint64_t& { return c.train.seed; })},
      {"train.iters_per_epoch",
       int_field([](RunConfig& c) -> int& { return c.train.iters_per_epoch; })},
      {"train.val_every", int_field([](RunConfig& c) -> int& { return c.train.val_every; })},
      {"train.grad_clip", real_field([](RunConfig& c) -> double& { return c.train.grad_clip; })},
      {"train.checkpoint_every",
       int_field([](RunConfig& c) -> int& { return c.checkpoint_every; })},

      {"data.root", string_field([](RunConfig& c) -> std::string& { return c.data.root; })},
      {"data.chain", string_field([](RunConfig& c) -> std::string& { return c.data.chain; })},
      {"data.jitter", real_field([](RunConfig& c) -> double& { return c.data.jitter; })},
      {"data.degrade_seed",
       int_field([](RunConfig& c) -> std::uint64_t& { return c.data.degrade_seed; })},
      {"data.split_train", int_field([](RunConfig& c) -> int& { return c.data.split_train; })},
      {"data.split_val", int_field([](RunConfig& c) -> int& { return c.data.split_val; })},
      {"data.split_test", int_field([](RunConfig& c) -> int& { return c.data.split_test; })},
      {"data.split_seed",
       int_field([](RunConfig& c) -> std::uint64_t& { return c.data.split_seed; })},

      {"eval.split", string_field([](RunConfig& c) -> std::string& { return c.eval.split; })},
      {"eval.dump_sr", bool_field([](RunConfig& c) -> bool& { return c.eval.dump_sr; })},

      {"ablate.total_epochs",
       int_field([](RunConfig& c) -> int& { return c.ablate.total_epochs; })},
      {"ablate.iters_per_epoch",
       int_field([](RunConfig& c) -> int& { return c.ablate.iters_per_epoch; })},
      {"ablate.halve_every", int_field([](RunConfig& c) -> int& { return c.ablate.halve_every; })},
  };
  return kFields;
}

}  // namespace

void apply(RunConfig& config, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(config, key, value);
}

std::pair<std::string, std::string> split_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  const std::string key = trim(text.substr(0, eq));
  if (key.empty()) throw ConfigError("empty key in '" + text + "'");
  return {key, trim(text.substr(eq + 1))};
}

RunConfig parse(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      const auto [key, value] = split_override(line);
      apply(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto [key, value] = split_override(o);
    apply(config, key, value);
  }
}

std::map<std::string, std::string> flatten(const RunConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(config);
  return out;
}

std::string render(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : flatten(config)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace ofpnet::config
