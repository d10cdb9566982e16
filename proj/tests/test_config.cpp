// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <string>

#include "dkrn/config.hpp"
#include "dkrn/error.hpp"
#include "support.hpp"

using namespace dkrn;

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_flat_config(text, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("flat config keeps order and strips comments") {
  const auto entries = parse_flat_config("# header\n\nseed = 3\n  lr-final=0.001   # tail\nout = a b\nempty =\n");
  REQUIRE(entries.size() == 4);
  CHECK(entries[0] == std::pair<std::string, std::string>{"seed", "3"});
  CHECK(entries[1] == std::pair<std::string, std::string>{"lr-final", "0.001"});
  CHECK(entries[2].second == "a b");
  CHECK(entries[3].second.empty());
  CHECK(parse_flat_config("").empty());
  CHECK(parse_flat_config("a=1\r\n").front().second == "1");
  CHECK(parse_flat_config("k = x=y").front().second == "x=y");
}

TEST_CASE("flat config errors name the source line") {
  CHECK(error_of("a = 1\nno equals here\n") == "run.cfg:2: expected key = value");
  CHECK(error_of(" = 4") == "run.cfg:1: empty key");
  CHECK(error_of("x\n\nbad key = 1") == "run.cfg:1: expected key = value");
  CHECK(error_of("# c\nbad key = 1") == "run.cfg:2: invalid key 'bad key'");
  CHECK(error_of("seed = 1\nseed = 2") == "run.cfg:2: duplicate key 'seed'");
}

TEST_CASE("config files are read from disk") {
  dkrn::test::TempDir dir;
  dkrn::test::write_file(dir / "c.cfg", "episodes = 12\n");
  CHECK(read_flat_config(dir / "c.cfg").front().second == "12");
  CHECK_THROWS_AS(read_flat_config(dir / "missing.cfg"), DataError);
  dkrn::test::write_file(dir / "bad.cfg", "oops\n");
  try {
    read_flat_config(dir / "bad.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.cfg:1") != std::string::npos);
  }
}

TEST_CASE("environment names") {
  CHECK(env_name("seed") == "DKRN_SEED");
  CHECK(env_name("lr-final") == "DKRN_LR_FINAL");
  CHECK(env_name("out_corpus") == "DKRN_OUT_CORPUS");
  CHECK(env_name("max-turns") == "DKRN_MAX_TURNS");
}
