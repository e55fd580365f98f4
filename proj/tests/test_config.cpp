#include <doctest.h>

#include <random>

#include "deepma/config.hpp"
#include "deepma/errors.hpp"

using namespace deepma;

namespace {

const std::set<std::string> kKeys = {"seed", "model.edps", "model.strides", "train.lr", "train.resume",
                                     "train.snr_db", "data.source"};

std::string error_of(const std::string& text) {
  try {
    Config::parse(text, kKeys, "exp.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("sections, comments and typed values") {
  const auto c = Config::parse(
      "seed = 42  # top level\n"
      "\n"
      "[model]\n"
      "edps = 3\n"
      "strides = 1, 2,2 ,2\n"
      "[ train ]\n"
      "lr = 5e-4\n"
      "resume = on\n"
      "snr_db = -3.5, 0, 12\n",
      kKeys);
  CHECK(c.u64("seed", 0) == 42);
  CHECK(c.integer("model.edps", 0) == 3);
  CHECK(c.integers("model.strides", {}) == std::vector<long>{1, 2, 2, 2});
  CHECK(c.real("train.lr", 0.0) == 5e-4);
  CHECK(c.boolean("train.resume", false));
  CHECK(c.reals("train.snr_db", {}) == std::vector<double>{-3.5, 0.0, 12.0});
  CHECK(c.entries().at("model.edps").line == 4);
  CHECK(c.defaulted().empty());
}

TEST_CASE("fallbacks are recorded as defaulted") {
  const auto c = Config::parse("[model]\nedps = 2\n", kKeys);
  CHECK(c.real("train.lr", 1e-3) == 1e-3);
  CHECK(c.str("data.source", "shapes") == "shapes");
  CHECK(c.defaulted() == std::vector<std::string>{"train.lr", "data.source"});
  CHECK_FALSE(c.optional_real("train.lr").has_value());
}

TEST_CASE("malformed files name the offending line") {
  CHECK(error_of("seed = 1\n[model]\nwidth = 3\n").find("exp.cfg:3: unknown key 'model.width'") == 0);
  CHECK(error_of("seed = 1\nseed = 2\n").find("exp.cfg:2: duplicate key 'seed' (first set on line 1)") == 0);
  CHECK(error_of("[model\n").find("exp.cfg:1: unterminated") == 0);
  CHECK(error_of("\n\njust words\n").find("exp.cfg:3: expected 'key = value'") == 0);
  CHECK(error_of("[a b]\n").find("invalid section name") != std::string::npos);
  CHECK(error_of("se-ed = 1\n").find("invalid key") != std::string::npos);
}

TEST_CASE("bad values report key and line") {
  const auto c = Config::parse("seed = -1\n[model]\nedps = two\n[train]\nresume = maybe\nsnr_db = 1,x\n", kKeys);
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message([&] { c.u64("seed", 0); }).find("<config>:1: seed:") == 0);
  CHECK(message([&] { c.integer("model.edps", 0); }).find("<config>:3: model.edps: expected an integer") == 0);
  CHECK(message([&] { c.boolean("train.resume", false); }).find(":5:") != std::string::npos);
  CHECK(message([&] { c.reals("train.snr_db", {}); }).find(":6:") != std::string::npos);
  CHECK(message([&] { c.required("data.source"); }).find("missing required key 'data.source'") != std::string::npos);
}

TEST_CASE("number parsing is whole-token and locale independent") {
  CHECK(parse_double("2.5") == 2.5);
  CHECK(parse_double(" 1e-3 ") == 1e-3);
  CHECK_FALSE(parse_double("2,5").has_value());
  CHECK_FALSE(parse_double("1.5x").has_value());
  CHECK_FALSE(parse_double("").has_value());
  CHECK(parse_long("-7") == -7);
  CHECK_FALSE(parse_long("7.0").has_value());

  // Any double printed at full precision parses back to itself.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> expo(-30.0, 30.0), mant(-1.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double v = mant(rng) * std::pow(10.0, expo(rng));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    CHECK(parse_double(buf) == v);
  }
}

TEST_CASE("missing config file") {
  CHECK_THROWS_AS(Config::load("/nonexistent/deepma.cfg", kKeys), ConfigError);
}
