#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctd/data.hpp"
#include "ctd/error.hpp"
#include "doctest.h"
#include "ethucy_fixtures.hpp"

using namespace ctd;
using namespace ctd::data;

TEST_SUITE("ethucy") {

TEST_CASE("one pedestrian at 2.5 Hz gives exactly one segment") {
  std::istringstream is(fixtures::SinglePedestrian());
  ImportReport rep;
  const Corpus c = ImportEthUcyStream(is, "unit", {}, &rep);
  REQUIRE(c.trajectories.size() == 1);
  CHECK(rep.segments == 1);
  const auto& t = c.trajectories[0];
  for (int i = 0; i < 8; ++i) {
    CHECK(std::abs(t.history[i].x - i) <= 1e-9);
    CHECK(std::abs(t.history[i].y) <= 1e-9);
  }
  for (int i = 0; i < 12; ++i) CHECK(std::abs(t.future[i].x - (8 + i)) <= 1e-9);
  CHECK(t.neighbors.empty());
}

TEST_CASE("10 Hz track resamples to dt * speed spacing") {
  std::istringstream is(fixtures::TenHertz(1.3));
  ImportOptions o;
  o.frame_rate = 10;
  const Corpus c = ImportEthUcyStream(is, "unit", o);
  REQUIRE(!c.trajectories.empty());
  for (const auto& t : c.trajectories) {
    Polyline all = t.history;
    all.insert(all.end(), t.future.begin(), t.future.end());
    for (std::size_t i = 1; i < all.size(); ++i)
      CHECK(std::abs(std::hypot(all[i].x - all[i - 1].x, all[i].y - all[i - 1].y) - 0.4 * 1.3) <= 1e-9);
  }
}

TEST_CASE("already-resampled tracks are unchanged") {
  std::istringstream is(fixtures::JitteredAtNativeRate());
  const Corpus c = ImportEthUcyStream(is, "unit", {});
  const auto expected = fixtures::JitteredPoints();
  REQUIRE(c.trajectories.size() == expected.size() - 19);
  for (std::size_t s = 0; s < c.trajectories.size(); ++s)
    for (int i = 0; i < 8; ++i) {
      CHECK(std::abs(c.trajectories[s].history[i].x - expected[s + i].x) <= 1e-9);
      CHECK(std::abs(c.trajectories[s].history[i].y - expected[s + i].y) <= 1e-9);
    }
}

TEST_CASE("windows never mix pedestrians and neighbours are attached") {
  std::istringstream is(fixtures::TwoPedestrians());
  ImportReport rep;
  const Corpus c = ImportEthUcyStream(is, "unit", {}, &rep);
  // ped 1: 22 steps -> 3 windows; ped 2: 20 steps -> 1 window; ped 3: too short
  CHECK(rep.segments == 4);
  CHECK(rep.skipped_short == 1);
  CHECK(rep.tracks == 3);
  for (const auto& t : c.trajectories) {
    const double y = t.history[0].y;
    for (const auto& p : t.history) CHECK(p.y == y);
    for (const auto& p : t.future) CHECK(p.y == y);
  }
  // ped 1 windows see ped 2 (2 m away) when it covers their history
  std::size_t with = 0;
  for (const auto& t : c.trajectories) with += !t.neighbors.empty();
  CHECK(with == 4);
}

TEST_CASE("neighbours beyond the radius are dropped") {
  std::istringstream is(fixtures::FarApart());
  const Corpus c = ImportEthUcyStream(is, "unit", {});
  for (const auto& t : c.trajectories) CHECK(t.neighbors.empty());
}

TEST_CASE("segments over the speed bound are skipped and counted") {
  std::istringstream is(fixtures::Teleport());
  ImportReport rep;
  const Corpus c = ImportEthUcyStream(is, "unit", {}, &rep);
  CHECK(rep.segments == 1);
  CHECK(rep.skipped_speed == 1);
  CHECK(c.trajectories[0].history[0].y == 0.0);
}

TEST_CASE("empty input and malformed lines") {
  std::istringstream empty("");
  try {
    ImportEthUcyStream(empty, "unit", {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "no tracks");
  }
  std::istringstream bad("0 1 0.0 0.0\n10 1 1.0 0.0\n20 1 oops 0.0\n");
  try {
    ImportEthUcyStream(bad, "unit", {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "malformed_line");
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("directory import filters by scene") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ctd_import_dir";
  fs::remove_all(dir);
  fs::create_directories(dir / "eth");
  fs::create_directories(dir / "hotel");
  std::ofstream(dir / "eth" / "eth.txt") << fixtures::SinglePedestrian();
  std::ofstream(dir / "hotel" / "hotel.txt") << fixtures::TwoPedestrians();
  ImportReport rep;
  const Corpus c = ImportEthUcy(dir.string(), "eth", {}, &rep);
  CHECK(rep.files == 1);
  CHECK(c.trajectories.size() == 1);
  fs::remove_all(dir);
}

}  // TEST_SUITE
