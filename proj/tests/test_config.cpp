#include <doctest.h>

#include "jointssl/config.hpp"
#include "jointssl/errors.hpp"

using namespace jointssl;

TEST_CASE("the example configuration parses and round-trips") {
  const auto cfg = load_experiment_config(JOINTSSL_CONFIG_DIR "/example.jsonc");
  CHECK(cfg.train.base_lr > 0.0);
  CHECK(cfg.train.momentum == 0.0);
  CHECK(cfg.split.k == 5);
  const auto again = parse_experiment_config(to_json(cfg).dump());
  CHECK(to_json(again) == to_json(cfg));
  CHECK(load_experiment_config(JOINTSSL_CONFIG_DIR "/smoke.jsonc").model.model.num_classes == 3);
}

TEST_CASE("comments are allowed and defaults fill missing sections") {
  const auto cfg = parse_experiment_config("// nothing\n{ /* seed */ \"seed\": 3 }");
  CHECK(cfg.seed == 3);
  CHECK(cfg.dataset.num_classes == 9);
  CHECK(cfg.train.epochs == 60);
  CHECK(cfg.train_seed() != cfg.eval_seed());
  CHECK(cfg.resolved_train().seed == cfg.train_seed());
}

TEST_CASE("configuration errors name the offending key") {
  auto message = [](const std::string& text) {
    try {
      parse_experiment_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"train": {"epochz": 3}})").find("epochz") != std::string::npos);
  CHECK(message(R"({"train": {"epochs": "many"}})").find("epochs") != std::string::npos);
  CHECK_FALSE(message("{ not json").empty());
  CHECK_FALSE(message(R"({"split": {"k": 2}})").empty());
  CHECK_FALSE(message(R"({"eval": {"sigmas": [0.1, 0.0]}})").empty());
  CHECK_FALSE(message(R"({"train": {"variant": "pseudo-label"}})").empty());
}
