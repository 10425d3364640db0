#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "driveflow/config.hpp"
#include "driveflow/error.hpp"

namespace driveflow {
namespace {

namespace fs = std::filesystem;

// Two distinct valid values per config type.
std::pair<std::string, std::string> alternates(ConfigType type) {
  switch (type) {
    case ConfigType::real: return {"2.5", "3.5"};
    case ConfigType::size:
    case ConfigType::integer: return {"3", "7"};
    case ConfigType::size_list: return {"3,5,7,9", "4,6,8,10"};
    case ConfigType::model_kind: return {"pcm", "pn"};
    case ConfigType::backbone: return {"nvidia", "tinyconv"};
    case ConfigType::text: return {"a", "b"};
  }
  return {};
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("driveflow_cfg_" + name + ".ini");
  std::ofstream(p) << text;
  return p;
}

std::string expected_after(const std::string& key, const std::string& value) {
  RunConfig ref;
  set_config_value(ref, key, value);
  ref.resolve();
  return get_config_value(ref, key);
}

TEST(Schema, KeysAreUniqueAndSectioned) {
  std::set<std::string> keys;
  for (const ConfigEntry& e : config_schema()) {
    EXPECT_TRUE(keys.insert(e.key).second) << e.key;
    EXPECT_NE(e.key.find('.'), std::string::npos) << e.key;
  }
  EXPECT_GT(keys.size(), 40u);
}

TEST(Schema, FileThenOverridePrecedenceForEveryKey) {
  for (const ConfigEntry& e : config_schema()) {
    const auto [from_file, from_override] = alternates(e.type);
    const std::string section = e.key.substr(0, e.key.find('.'));
    const std::string name = e.key.substr(e.key.find('.') + 1);
    const fs::path file = write_config("prec", "[" + section + "]\n" + name + " = " + from_file + "\n");

    const RunConfig file_only = build_run_config(file, {});
    EXPECT_EQ(get_config_value(file_only, e.key), expected_after(e.key, from_file)) << e.key;

    const RunConfig both = build_run_config(file, {{e.key, from_override}});
    EXPECT_EQ(get_config_value(both, e.key), expected_after(e.key, from_override)) << e.key;

    const RunConfig defaults = build_run_config({}, {});
    RunConfig fresh;
    fresh.resolve();
    EXPECT_EQ(get_config_value(defaults, e.key), get_config_value(fresh, e.key)) << e.key;
    fs::remove(file);
  }
}

TEST(Schema, WrongTypesAreRejected) {
  for (const ConfigEntry& e : config_schema()) {
    RunConfig cfg;
    EXPECT_THROW(set_config_value(cfg, e.key, "not-a-value"), ConfigError) << e.key;
  }
  RunConfig cfg;
  EXPECT_THROW(set_config_value(cfg, "train.epochs", "-1"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "train.learning_rate", "inf"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "model.image_widths", "4,0"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "train.nope", "1"), ConfigError);
  EXPECT_THROW(get_config_value(cfg, "nope"), ConfigError);
}

TEST(ParseConfig, SectionsCommentsAndWhitespace) {
  const auto pairs = parse_config_text(
      "# leading comment\n"
      "[train]\n"
      "  epochs = 12   ; trailing\n"
      "\n"
      "[model]\n"
      "kind=pn # inline\n",
      "inline");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0], (std::pair<std::string, std::string>{"train.epochs", "12"}));
  EXPECT_EQ(pairs[1], (std::pair<std::string, std::string>{"model.kind", "pn"}));
}

TEST(ParseConfig, MalformedLinesAreConfigErrors) {
  EXPECT_THROW(parse_config_text("[train]\nepochs\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("epochs = 3\n", "x"), ConfigError);
  EXPECT_THROW(parse_config_text("[train\n", "x"), ConfigError);
  EXPECT_THROW(build_run_config(fs::temp_directory_path() / "driveflow_missing.ini", {}), std::exception);
}

TEST(Resolve, PropagatesSharedValues) {
  RunConfig cfg = build_run_config({}, {{"run.seed", "9"},
                                        {"scene.max_speed_kmh", "80"},
                                        {"projection.height", "32"},
                                        {"projection.width", "256"},
                                        {"model.image_backbone", "nvidia"},
                                        {"eval.threshold_step", "1"},
                                        {"eval.threshold_max", "4"}});
  EXPECT_EQ(cfg.train.seed, 9u);
  EXPECT_EQ(cfg.model.input.max_speed_kmh, 80.0);
  EXPECT_EQ(cfg.model.depth.height, 32u);
  EXPECT_EQ(cfg.model.depth.width, 256u);
  EXPECT_EQ(cfg.model.image.height, 66u);
  EXPECT_EQ(cfg.model.image.width, 200u);
  EXPECT_EQ(cfg.eval.thresholds, (std::vector<double>{1, 2, 3, 4}));
  EXPECT_THROW(build_run_config({}, {{"eval.threshold_step", "0"}}), ConfigError);
}

}  // namespace
}  // namespace driveflow
