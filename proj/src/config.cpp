#include "tis/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "tis/error.hpp"

namespace tis {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

// Shortest text that parses back to the same value.
template <typename T>
std::string format_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Grid3 parse_grid(const std::string& key, const std::string& v) {
  const auto x1 = v.find('x');
  if (x1 == std::string::npos) {
    const auto n = parse_number<std::size_t>(key, v);
    return {n, n, n};
  }
  const auto x2 = v.find('x', x1 + 1);
  if (x2 == std::string::npos) throw ConfigError("config key '" + key + "': expected N or AxBxC");
  return {parse_number<std::size_t>(key, v.substr(0, x1)),
          parse_number<std::size_t>(key, v.substr(x1 + 1, x2 - x1 - 1)),
          parse_number<std::size_t>(key, v.substr(x2 + 1))};
}

std::string format_grid(const Grid3& g) {
  if (g.nx == g.ny && g.ny == g.nz) return std::to_string(g.nx);
  return g.str();
}

struct Field {
  const char* key;
  std::function<std::string(const ProjectConfig&)> get;
  std::function<void(ProjectConfig&, const std::string&)> set;
};

template <typename T>
Field number(const char* key, T ProjectConfig::*member) {
  return {key, [member](const ProjectConfig& c) { return format_number(c.*member); },
          [key, member](ProjectConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); }};
}

template <typename S, typename T>
Field nested(const char* key, S ProjectConfig::*section, T S::*member) {
  return {key, [section, member](const ProjectConfig& c) { return format_number(c.*section.*member); },
          [key, section, member](ProjectConfig& c, const std::string& v) {
            c.*section.*member = parse_number<T>(key, v);
          }};
}

template <typename S>
Field flag(const char* key, S ProjectConfig::*section, bool S::*member) {
  return {key,
          [section, member](const ProjectConfig& c) { return std::string(c.*section.*member ? "1" : "0"); },
          [key, section, member](ProjectConfig& c, const std::string& v) {
            if (v != "0" && v != "1")
              throw ConfigError(std::string("config key '") + key + "': expected 0 or 1");
            c.*section.*member = v == "1";
          }};
}

const std::vector<Field>& fields() {
  using P = ProjectConfig;
  static const std::vector<Field> table = {
      {"volume", [](const P& c) { return format_grid(c.synthetic.grid); },
       [](P& c, const std::string& v) { c.synthetic.grid = parse_grid("volume", v); }},
      nested("classes", &P::synthetic, &SyntheticSpec::classes),
      number("train_cases", &P::train_cases),
      number("eval_cases", &P::eval_cases),
      {"data_dir", [](const P& c) { return c.data_dir; }, [](P& c, const std::string& v) { c.data_dir = v; }},
      nested("organ_radius_min", &P::synthetic, &SyntheticSpec::organ_radius_min),
      nested("organ_radius_max", &P::synthetic, &SyntheticSpec::organ_radius_max),
      nested("tumor_radius_min", &P::synthetic, &SyntheticSpec::tumor_radius_min),
      nested("tumor_radius_max", &P::synthetic, &SyntheticSpec::tumor_radius_max),
      nested("extra_radius_min", &P::synthetic, &SyntheticSpec::extra_radius_min),
      nested("extra_radius_max", &P::synthetic, &SyntheticSpec::extra_radius_max),
      nested("organ_intensity", &P::synthetic, &SyntheticSpec::organ_intensity),
      nested("tumor_intensity", &P::synthetic, &SyntheticSpec::tumor_intensity),
      nested("extra_intensity", &P::synthetic, &SyntheticSpec::extra_intensity),
      nested("noise", &P::synthetic, &SyntheticSpec::noise),
      nested("encoder_channels", &P::encoder, &EncoderConfig::full_channels),
      nested("feature_width", &P::encoder, &EncoderConfig::feature_width),
      nested("refiner_layers", &P::refiner, &RefinerConfig::layers),
      nested("refiner_heads", &P::refiner, &RefinerConfig::heads),
      nested("ffn_hidden", &P::refiner, &RefinerConfig::ffn_hidden),
      nested("ce_hidden", &P::refiner, &RefinerConfig::ce_hidden),
      {"crop", [](const P& c) { return format_grid(c.refiner.crop); },
       [](P& c, const std::string& v) { c.refiner.crop = parse_grid("crop", v); }},
      nested("crop_margin", &P::refiner, &RefinerConfig::crop_margin),
      flag("token_residual", &P::refiner, &RefinerConfig::token_residual),
      nested("encoder_epochs", &P::train, &TrainConfig::encoder_epochs),
      nested("refiner_epochs", &P::train, &TrainConfig::refiner_epochs),
      nested("lr", &P::train, &TrainConfig::lr),
      nested("lr_decay", &P::train, &TrainConfig::lr_decay),
      nested("lr_period", &P::train, &TrainConfig::lr_period),
      nested("batch_size", &P::train, &TrainConfig::batch_size),
      nested("weight_decay", &P::train, &TrainConfig::weight_decay),
      nested("max_train_clicks", &P::train, &TrainConfig::max_train_clicks),
      flag("corrected_clicks", &P::train, &TrainConfig::corrected_clicks),
      nested("click_disturbance", &P::simulator, &SimulatorConfig::disturbance),
      nested("connectivity", &P::simulator, &SimulatorConfig::connectivity),
      number("eval_clicks", &P::eval_clicks),
  };
  return table;
}

}  // namespace

void ProjectConfig::sync() {
  encoder.classes = synthetic.classes;
  refiner.classes = synthetic.classes;
  refiner.width = encoder.feature_width;
}

void apply_override(ProjectConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, trim(value));
      cfg.sync();
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ProjectConfig parse_config(const std::string& text) {
  ProjectConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_override(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.sync();
  return cfg;
}

ProjectConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ProjectConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << '\n';
  return os.str();
}

}  // namespace tis
