#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "srvp/config.hpp"

using namespace srvp;

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.model.layers == 2);
  CHECK(c.model.hidden == 16);
  CHECK(c.train.epochs == 30);
  CHECK(c.train.lr_max == 1e-4);
  CHECK(c.train.clip == 1.0);
  CHECK(parse_config("") == c);
  CHECK(parse_config("# only a comment\n\n   \n") == c);
}

TEST_CASE("parse key=value lines with comments and whitespace") {
  const RunConfig c = parse_config(
      "L = 3   # layers\n"
      "M=8\r\n"
      "\tM_prime =8\n"
      "lr_max = 2.5e-3\n"
      "use_rfa = false\n"
      "temporal_logit_order = scale_then_norm\n"
      "train_seed = 42");
  CHECK(c.model.layers == 3);
  CHECK(c.model.hidden == 8);
  CHECK(c.model.reinforced == 8);
  CHECK(c.train.lr_max == 2.5e-3);
  CHECK_FALSE(c.model.use_rfa);
  CHECK(c.model.temporal_logit_order == TemporalLogitOrder::ScaleThenNorm);
  CHECK(c.train.seed == 42);
  CHECK(c.data.seed == RunConfig{}.data.seed);
}

TEST_CASE("later keys override earlier ones and the base") {
  RunConfig base;
  base.model.height = 24;
  const RunConfig c = parse_config("N=2\nN=5\n", base);
  CHECK(c.model.input_len == 5);
  CHECK(c.model.height == 24);
}

TEST_CASE("unknown keys and bad values are rejected by name") {
  CHECK_THROWS_WITH_AS(parse_config("L=2\nbogus_key = 3\n"), doctest::Contains("bogus_key"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("M = eight"), doctest::Contains("'M'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("M = -1"), doctest::Contains("'M'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("lr_max = 1e-3x"), doctest::Contains("lr_max"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("use_sa = maybe"), doctest::Contains("use_sa"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("temporal_logit_order = other"),
                       doctest::Contains("temporal_logit_order"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("L=2\njust words\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_AS(parse_config("L ="), ConfigError);
  CHECK_THROWS_AS(parse_config("bogus=1"), std::invalid_argument);
}

TEST_CASE("canonical text round-trips") {
  RunConfig c;
  c.model.layers = 3;
  c.model.use_cross_attention = false;
  c.data.min_speed = 0.1;
  c.train.lr_max = 1.0 / 3.0;
  c.train.teacher_forcing = true;
  c.train.val_fraction = 0.25;
  const std::string text = to_config_text(c);
  CHECK(parse_config(text) == c);
  CHECK(to_config_text(parse_config(text)) == text);
  CHECK(text.rfind("L=3\n", 0) == 0);
  // Every line is a key the parser accepts.
  RunConfig other;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    CHECK_NOTHROW(parse_config(line, other));
    pos = nl + 1;
  }
}

TEST_CASE("set_config_value and load_config") {
  RunConfig c;
  set_config_value(c, "P", "7");
  CHECK(c.model.pred_len == 7);
  CHECK_THROWS_AS(set_config_value(c, "Q", "1"), ConfigError);

  const auto p = std::filesystem::temp_directory_path() / "srvp_test.cfg";
  std::ofstream(p) << "H=20\nW=20\n";
  const RunConfig loaded = load_config(p);
  CHECK(loaded.model.height == 20);
  CHECK(loaded.model.width == 20);
  std::filesystem::remove(p);
  CHECK_THROWS(load_config(p));
}

TEST_CASE("shipped presets parse") {
  for (const char* name : {"desk.cfg", "smoke.cfg", "gradcheck.cfg"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(std::filesystem::path(SRVP_SOURCE_DIR) / "configs" / name));
  }
}
