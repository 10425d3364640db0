#include "driveflow/config.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "driveflow/error.hpp"
#include "text_util.hpp"

namespace driveflow {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key " + std::string(key) + ": '" + std::string(value) + "' is not " + expected);
}

template <class Ref>
ConfigEntry real(std::string key, Ref ref) {
  return {key, ConfigType::real,
          [key, ref](RunConfig& c, std::string_view v) {
            const auto d = text::parse_double(v);
            if (!d || !std::isfinite(*d)) bad_value(key, v, "a finite number");
            ref(c) = *d;
          },
          [ref](const RunConfig& c) { return text::format_double(ref(const_cast<RunConfig&>(c))); }};
}

template <class Ref>
ConfigEntry size(std::string key, Ref ref) {
  return {key, ConfigType::size,
          [key, ref](RunConfig& c, std::string_view v) {
            const auto n = text::parse_int(v);
            if (!n || *n < 0) bad_value(key, v, "a non-negative integer");
            ref(c) = static_cast<std::size_t>(*n);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <class Ref>
ConfigEntry size_list(std::string key, Ref ref) {
  return {key, ConfigType::size_list,
          [key, ref](RunConfig& c, std::string_view v) {
            std::vector<std::size_t> out;
            for (auto tok : text::split(v, ',')) {
              const auto n = text::parse_int(tok);
              if (!n || *n <= 0) bad_value(key, v, "a comma-separated list of positive integers");
              out.push_back(static_cast<std::size_t>(*n));
            }
            ref(c) = std::move(out);
          },
          [ref](const RunConfig& c) {
            std::string s;
            for (std::size_t w : ref(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ",") + std::to_string(w);
            return s;
          }};
}

std::vector<ConfigEntry> make_schema() {
  std::vector<ConfigEntry> s;
  s.push_back({"run.seed", ConfigType::integer,
               [](RunConfig& c, std::string_view v) {
                 const auto n = text::parse_int(v);
                 if (!n || *n < 0) bad_value("run.seed", v, "a non-negative integer");
                 c.seed = static_cast<std::uint64_t>(*n);
               },
               [](const RunConfig& c) { return std::to_string(c.seed); }});
  s.push_back(real("run.fraction", [](RunConfig& c) -> double& { return c.fraction; }));

  s.push_back(real("scene.curvature_min", [](RunConfig& c) -> double& { return c.scene.curvature_min; }));
  s.push_back(real("scene.curvature_max", [](RunConfig& c) -> double& { return c.scene.curvature_max; }));
  s.push_back(real("scene.obstacle_min", [](RunConfig& c) -> double& { return c.scene.obstacle_min; }));
  s.push_back(real("scene.obstacle_max", [](RunConfig& c) -> double& { return c.scene.obstacle_max; }));
  s.push_back(real("scene.speed_distance_min", [](RunConfig& c) -> double& { return c.scene.speed_distance_min; }));
  s.push_back(real("scene.speed_distance_max", [](RunConfig& c) -> double& { return c.scene.speed_distance_max; }));
  s.push_back(real("scene.max_speed_kmh", [](RunConfig& c) -> double& { return c.scene.max_speed_kmh; }));
  s.push_back(real("scene.wheelbase", [](RunConfig& c) -> double& { return c.scene.wheelbase; }));
  s.push_back(real("scene.pixel_noise", [](RunConfig& c) -> double& { return c.scene.pixel_noise; }));
  s.push_back(real("scene.point_noise", [](RunConfig& c) -> double& { return c.scene.point_noise; }));
  s.push_back(size("scene.image_height", [](RunConfig& c) -> std::size_t& { return c.scene.image_height; }));
  s.push_back(size("scene.image_width", [](RunConfig& c) -> std::size_t& { return c.scene.image_width; }));
  s.push_back(size("scene.ground_points", [](RunConfig& c) -> std::size_t& { return c.scene.ground_points; }));
  s.push_back(size("scene.obstacle_points", [](RunConfig& c) -> std::size_t& { return c.scene.obstacle_points; }));
  s.push_back(size("scene.train_count", [](RunConfig& c) -> std::size_t& { return c.scene.train_count; }));
  s.push_back(size("scene.val_count", [](RunConfig& c) -> std::size_t& { return c.scene.val_count; }));
  s.push_back(size("scene.test_count", [](RunConfig& c) -> std::size_t& { return c.scene.test_count; }));
  s.push_back(real("scene.fps", [](RunConfig& c) -> double& { return c.scene.fps; }));

  s.push_back(size("train.epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; }));
  s.push_back(size("train.batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
  s.push_back(real("train.learning_rate", [](RunConfig& c) -> double& { return c.train.adam.learning_rate; }));
  s.push_back(real("train.beta1", [](RunConfig& c) -> double& { return c.train.adam.beta1; }));
  s.push_back(real("train.beta2", [](RunConfig& c) -> double& { return c.train.adam.beta2; }));
  s.push_back(real("train.epsilon", [](RunConfig& c) -> double& { return c.train.adam.epsilon; }));
  s.push_back(real("train.angle_tolerance", [](RunConfig& c) -> double& { return c.train.angle_tolerance; }));
  s.push_back(real("train.speed_tolerance", [](RunConfig& c) -> double& { return c.train.speed_tolerance; }));
  s.push_back(real("train.angle_scale", [](RunConfig& c) -> double& { return c.train.angle_scale; }));
  s.push_back(real("train.speed_scale", [](RunConfig& c) -> double& { return c.train.speed_scale; }));
  s.push_back(real("train.train_fraction", [](RunConfig& c) -> double& { return c.train.train_fraction; }));
  s.push_back(real("train.val_fraction", [](RunConfig& c) -> double& { return c.train.val_fraction; }));
  s.push_back(real("train.test_fraction", [](RunConfig& c) -> double& { return c.train.test_fraction; }));

  s.push_back({"model.kind", ConfigType::model_kind,
               [](RunConfig& c, std::string_view v) { c.model.kind = parse_model_kind(std::string(text::trim(v))); },
               [](const RunConfig& c) { return to_string(c.model.kind); }});
  s.push_back({"model.image_backbone", ConfigType::backbone,
               [](RunConfig& c, std::string_view v) {
                 c.model.image.variant = parse_backbone_variant(std::string(text::trim(v)));
               },
               [](const RunConfig& c) { return to_string(c.model.image.variant); }});
  s.push_back(size("model.image_height", [](RunConfig& c) -> std::size_t& { return c.model.image.height; }));
  s.push_back(size("model.image_width", [](RunConfig& c) -> std::size_t& { return c.model.image.width; }));
  s.push_back(size_list("model.image_widths", [](RunConfig& c) -> std::vector<std::size_t>& { return c.model.image.widths; }));
  s.push_back(size_list("model.depth_widths", [](RunConfig& c) -> std::vector<std::size_t>& { return c.model.depth.widths; }));
  s.push_back(size_list("model.pointnet_widths", [](RunConfig& c) -> std::vector<std::size_t>& { return c.model.pointnet.widths; }));
  s.push_back(size("model.fusion_hidden", [](RunConfig& c) -> std::size_t& { return c.model.fusion.hidden; }));
  s.push_back(size("model.num_points", [](RunConfig& c) -> std::size_t& { return c.model.input.num_points; }));
  s.push_back(real("model.point_scale", [](RunConfig& c) -> double& { return c.model.input.point_scale; }));

  s.push_back(real("projection.hfov", [](RunConfig& c) -> double& { return c.model.input.projection.horizontal_fov_deg; }));
  s.push_back(real("projection.vfov", [](RunConfig& c) -> double& { return c.model.input.projection.vertical_fov_deg; }));
  s.push_back(size("projection.height", [](RunConfig& c) -> std::size_t& { return c.model.input.projection.height; }));
  s.push_back(size("projection.width", [](RunConfig& c) -> std::size_t& { return c.model.input.projection.width; }));
  s.push_back(real("projection.max_range", [](RunConfig& c) -> double& { return c.model.input.projection.max_range; }));

  s.push_back(real("eval.report_threshold", [](RunConfig& c) -> double& { return c.eval.report_threshold; }));
  s.push_back(real("eval.threshold_step", [](RunConfig& c) -> double& { return c.threshold_step; }));
  s.push_back(real("eval.threshold_max", [](RunConfig& c) -> double& { return c.threshold_max; }));
  s.push_back(real("eval.sigma_angle", [](RunConfig& c) -> double& { return c.eval.sigma_angle; }));
  s.push_back(real("eval.sigma_speed", [](RunConfig& c) -> double& { return c.eval.sigma_speed; }));
  s.push_back(real("eval.angle_cut", [](RunConfig& c) -> double& { return c.eval.angle_cut; }));
  s.push_back(real("eval.stop_cut_kmh", [](RunConfig& c) -> double& { return c.eval.stop_cut_kmh; }));
  return s;
}

const ConfigEntry& find_entry(std::string_view key) {
  for (const ConfigEntry& e : config_schema()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::resolve() {
  train.seed = seed;
  if (model.image.variant == BackboneVariant::nvidia) {
    model.image.channels = 3;
    model.image.height = 66;
    model.image.width = 200;
  }
  model.depth.channels = 2;
  model.depth.height = model.input.projection.height;
  model.depth.width = model.input.projection.width;
  model.input.max_speed_kmh = scene.max_speed_kmh;
  try {
    eval.thresholds = threshold_range(threshold_step, threshold_max);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("eval thresholds: ") + e.what());
  }
}

const std::vector<ConfigEntry>& config_schema() {
  static const std::vector<ConfigEntry> schema = make_schema();
  return schema;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  find_entry(key).set(cfg, text::trim(value));
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) { return find_entry(key).get(cfg); }

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view content,
                                                                   const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string section;
  std::size_t line_no = 0;
  for (std::string_view line : text::split(content, '\n')) {
    ++line_no;
    if (const auto c = line.find_first_of("#;"); c != std::string_view::npos) line = line.substr(0, c);
    line = text::trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string name(text::trim(line.substr(0, eq)));
    if (name.empty()) throw ConfigError(where + "missing key");
    const std::string key = section.empty() ? name : section + "." + name;
    const std::string value(text::trim(line.substr(eq + 1)));
    try {
      RunConfig probe;
      set_config_value(probe, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    out.emplace_back(key, value);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  const std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config_text(content, path.string());
}

RunConfig build_run_config(const std::filesystem::path& config_file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!config_file.empty()) {
    for (const auto& [k, v] : read_config_file(config_file)) set_config_value(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  cfg.resolve();
  return cfg;
}

}  // namespace driveflow
