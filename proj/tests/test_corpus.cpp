#include <doctest.h>

#include <functional>
#include <set>
#include <sstream>

#include "appgen/common.hpp"
#include "appgen/corpus.hpp"

using namespace appgen;

namespace {

WorldSpec small_spec() {
  WorldSpec s;
  s.num_users = 40;
  s.num_apps = 8;
  s.num_stations = 6;
  s.num_regions = 2;
  s.num_business_areas = 2;
  s.num_pois = 5;
  s.num_categories = 3;
  s.horizon_days = 3;
  return s;
}

std::string error_tag(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.tag();
  }
  return "";
}

}  // namespace

TEST_CASE("time helpers use the local offset") {
  CHECK(half_hour_bin(0) == 0);
  CHECK(half_hour_bin(1799) == 0);
  CHECK(half_hour_bin(1800) == 1);
  CHECK(half_hour_bin(86399) == 47);
  CHECK(half_hour_bin(0, 3600) == 2);
  CHECK(half_hour_bin(0, -1800) == 47);
  CHECK(hour_of_day(7200 + 59) == 2);
  CHECK(day_index(86399) == 0);
  CHECK(day_index(86400) == 1);
  CHECK(day_index(0, -1) == -1);
}

TEST_CASE("rule text round trips") {
  const std::string text = "time 3 16,17,18,19 10; seq 4 5 0.9; place 2 1 8; clique 6,7 0.5";
  const auto rules = parse_rules(text);
  REQUIRE(rules.size() == 4);
  const auto& t = std::get<TimeAffinity>(rules[0]);
  CHECK(t.app == 3);
  CHECK(t.bins == std::vector<int>{16, 17, 18, 19});
  CHECK(t.ratio == 10.0);
  CHECK(std::get<SequentialRule>(rules[1]).probability == 0.9);
  CHECK(std::get<PlaceAffinity>(rules[2]).region == 1);
  CHECK(std::get<CoUsageClique>(rules[3]).apps == std::vector<int>{6, 7});
  CHECK(parse_rules(format_rules(rules)).size() == 4);
  CHECK(format_rules(parse_rules(format_rules(rules))) == format_rules(rules));
  CHECK(parse_rules("").empty());
  CHECK_THROWS_AS(parse_rules("warp 1 2"), Error);
  CHECK_THROWS_AS(parse_rules("seq 1"), Error);
}

TEST_CASE("world spec validation names the field") {
  auto s = small_spec();
  s.num_users = 0;
  CHECK_THROWS_WITH(validate(s), doctest::Contains("num_users"));
  s = small_spec();
  s.num_categories = 9;
  CHECK(error_tag([&] { validate(s); }) == "invalid-spec");
  s = small_spec();
  s.planted_rules = parse_rules("seq 1 99 0.5");
  CHECK_THROWS_WITH(validate(s), doctest::Contains("seq"));
  s = small_spec();
  s.planted_rules = parse_rules("time 1 48 2");
  CHECK(error_tag([&] { validate(s); }) == "invalid-spec");
}

TEST_CASE("world generation is deterministic and well formed") {
  const auto spec = small_spec();
  const World a = generate_world(spec);
  const World b = generate_world(spec);
  CHECK(a.data == b.data);
  auto other = spec;
  other.seed = spec.seed + 1;
  CHECK_FALSE(generate_world(other).data == a.data);

  std::set<int> cats(a.app_category.begin(), a.app_category.end());
  CHECK(static_cast<int>(cats.size()) == spec.num_categories);
  for (const auto& seq : a.data) {
    validate_sequence(seq);
    const auto day = day_index(seq.events.front().timestamp);
    for (const auto& e : seq.events) {
      CHECK(day_index(e.timestamp) == day);
      CHECK(e.app_id >= 0);
      CHECK(e.app_id < spec.num_apps);
      CHECK(e.location_id >= 0);
      CHECK(e.location_id < spec.num_stations);
      REQUIRE(e.category_id.has_value());
      CHECK(*e.category_id == a.app_category[e.app_id]);
      CHECK(e.timestamp >= spec.start_epoch);
      CHECK(e.timestamp < spec.start_epoch + spec.horizon_days * kSecondsPerDay);
    }
  }
  const auto& g = a.geography;
  CHECK(g.station_region.size() == 6u);
  CHECK(g.poi_station.size() == 5u);
  for (auto [x, y] : g.adjacency) CHECK(x < y);
}

TEST_CASE("planted time affinity concentrates the app in its bins") {
  auto spec = small_spec();
  spec.num_users = 80;
  const std::vector<int> bins = {16, 17, 18, 19};
  auto share_in_bins = [&](const Dataset& d) {
    double in = 0, all = 0;
    for (const auto& s : d)
      for (const auto& e : s.events)
        if (e.app_id == 3) {
          ++all;
          const int b = half_hour_bin(e.timestamp);
          if (b >= 16 && b <= 19) ++in;
        }
    return in / all;
  };
  const double base = share_in_bins(generate_world(spec).data);
  spec.planted_rules = parse_rules("time 3 16,17,18,19 10");
  const double planted = share_in_bins(generate_world(spec).data);
  CHECK(planted > 2.0 * base);
}

TEST_CASE("planted sequential rule raises the transition probability") {
  auto spec = small_spec();
  spec.session_length = 3.0;
  auto follow = [](const Dataset& d) {
    double hit = 0, n = 0;
    for (const auto& s : d)
      for (std::size_t i = 0; i + 1 < s.events.size(); ++i)
        if (s.events[i].app_id == 1) {
          ++n;
          hit += s.events[i + 1].app_id == 6;
        }
    return hit / n;
  };
  spec.planted_rules = parse_rules("seq 1 6 0.9");
  CHECK(follow(generate_world(spec).data) > 0.8);
}

TEST_CASE("splits keep users whole and cover the data") {
  const World w = generate_world(small_spec());
  const auto split = split_dataset(w.data, {0.7, 0.1, 0.2}, 9);
  std::set<std::string> tr, va, te;
  for (const auto& s : split.train) tr.insert(s.user_id);
  for (const auto& s : split.validation) va.insert(s.user_id);
  for (const auto& s : split.test) te.insert(s.user_id);
  for (const auto& u : tr) {
    CHECK_FALSE(va.count(u));
    CHECK_FALSE(te.count(u));
  }
  for (const auto& u : va) CHECK_FALSE(te.count(u));
  CHECK(count_events(split.train) + count_events(split.validation) + count_events(split.test) == count_events(w.data));
  CHECK(tr.size() == 28u);
  const auto again = split_dataset(w.data, {0.7, 0.1, 0.2}, 9);
  CHECK(again.test == split.test);

  const auto [a, b] = split_users(w.data, 0.5, 3);
  CHECK(user_ids(a).size() == 20u);
  CHECK(user_ids(b).size() == 20u);
}

TEST_CASE("record files round trip with hash") {
  const World w = generate_world(small_spec());
  std::stringstream ss;
  write_dataset(ss, w.data, {"abc123"});
  RecordFileMeta meta;
  const Dataset back = read_dataset(ss, 0, &meta);
  CHECK(meta.config_hash == "abc123");
  CHECK(back == w.data);
}

TEST_CASE("record parsing reports the line") {
  std::istringstream bad("u\t10\t0\t1\t-\nu\t5\t0\t1\t-\n");
  CHECK_THROWS_WITH(read_dataset(bad), doctest::Contains("line 2"));
  std::istringstream missing("#fields:user_id\ttimestamp\tapp_id\n");
  CHECK_THROWS_WITH(read_dataset(missing), doctest::Contains("location_id"));
  std::istringstream reordered("#fields:app_id\tuser_id\ttimestamp\tlocation_id\n4\tx\t100\t2\n");
  const auto d = read_dataset(reordered);
  REQUIRE(d.size() == 1u);
  CHECK(d[0].events[0].app_id == 4);
  CHECK(d[0].events[0].location_id == 2);
  CHECK_FALSE(d[0].events[0].category_id.has_value());
}

TEST_CASE("seed derivation separates stages") {
  CHECK(derive_seed(42, "world") != derive_seed(42, "train"));
  CHECK(derive_seed(42, "world") == derive_seed(42, "world"));
  CHECK(derive_seed(42, "world") != derive_seed(43, "world"));
  CHECK(hex64(255) == "00000000000000ff");
}
