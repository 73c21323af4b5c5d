#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "appgen/common.hpp"
#include "appgen/corpus.hpp"

namespace appgen {

namespace {

// Relative event intensity per hour of day: quiet nights, a lunch bump and
// an evening peak.
constexpr double kHourlyIntensity[24] = {0.30, 0.18, 0.10, 0.06, 0.05, 0.08, 0.20, 0.45,
                                         0.80, 0.95, 1.00, 1.05, 1.30, 1.10, 0.98, 0.92,
                                         0.90, 0.97, 1.15, 1.40, 1.60, 1.50, 1.20, 0.70};

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error("invalid-spec", "world." + field + ": " + why);
}

void require_count(int value, const std::string& field, int min_value) {
  if (value < min_value) invalid(field, "must be >= " + std::to_string(min_value) + ", got " + std::to_string(value));
}

void require_app(int app, int n, const std::string& field) {
  if (app < 0 || app >= n) invalid(field, "app id " + std::to_string(app) + " outside [0, " + std::to_string(n) + ")");
}

void require_probability(double p, const std::string& field) {
  if (!(p >= 0.0 && p <= 1.0)) invalid(field, "probability outside [0,1]");
}

}  // namespace

void validate(const WorldSpec& spec) {
  require_count(spec.num_users, "num_users", 1);
  require_count(spec.num_apps, "num_apps", 1);
  require_count(spec.num_stations, "num_stations", 1);
  require_count(spec.num_regions, "num_regions", 1);
  require_count(spec.num_business_areas, "num_business_areas", 1);
  require_count(spec.num_pois, "num_pois", 0);
  require_count(spec.num_categories, "num_categories", 1);
  require_count(spec.horizon_days, "horizon_days", 1);
  if (spec.num_categories > spec.num_apps) invalid("num_categories", "cannot exceed num_apps (category map is a surjection)");
  if (spec.start_epoch < 0) invalid("start_epoch", "must be >= 0");
  if (!(spec.sessions_per_day > 0.0)) invalid("sessions_per_day", "must be positive");
  if (!(spec.session_length >= 1.0)) invalid("session_length", "must be >= 1");
  if (!(spec.popularity_exponent >= 0.0)) invalid("popularity_exponent", "must be >= 0");
  if (!(spec.user_pref_sigma >= 0.0)) invalid("user_pref_sigma", "must be >= 0");
  require_probability(spec.roam_probability, "roam_probability");

  for (const auto& rule : spec.planted_rules) {
    std::visit(
        [&](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, TimeAffinity>) {
            require_app(r.app, spec.num_apps, "planted_rules.time.app");
            if (r.bins.empty()) invalid("planted_rules.time.bins", "empty");
            for (int b : r.bins)
              if (b < 0 || b >= kBinsPerDay) invalid("planted_rules.time.bins", "bin outside [0,48)");
            if (!(r.ratio >= 0.0)) invalid("planted_rules.time.ratio", "must be >= 0");
          } else if constexpr (std::is_same_v<R, PlaceAffinity>) {
            require_app(r.app, spec.num_apps, "planted_rules.place.app");
            if (r.region < 0 || r.region >= spec.num_regions) invalid("planted_rules.place.region", "unknown region");
            if (!(r.ratio >= 0.0)) invalid("planted_rules.place.ratio", "must be >= 0");
          } else if constexpr (std::is_same_v<R, SequentialRule>) {
            require_app(r.from, spec.num_apps, "planted_rules.seq.from");
            require_app(r.to, spec.num_apps, "planted_rules.seq.to");
            require_probability(r.probability, "planted_rules.seq.probability");
          } else {
            if (r.apps.empty()) invalid("planted_rules.clique.apps", "empty");
            for (int a : r.apps) require_app(a, spec.num_apps, "planted_rules.clique.apps");
            require_probability(r.probability, "planted_rules.clique.probability");
          }
        },
        rule);
  }
}

namespace {

struct Point2 {
  double x = 0, y = 0;
};

double dist2(Point2 a, Point2 b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); }

int nearest(Point2 p, const std::vector<Point2>& centers) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(centers.size()); ++c)
    if (dist2(p, centers[c]) < dist2(p, centers[best])) best = c;
  return best;
}

std::vector<Point2> random_points(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point2> out(n);
  for (auto& p : out) {
    p.x = u(rng);
    p.y = u(rng);
  }
  return out;
}

Geography make_geography(const WorldSpec& spec, std::mt19937_64& rng) {
  Geography g;
  g.num_stations = spec.num_stations;
  g.num_regions = spec.num_regions;
  g.num_business_areas = spec.num_business_areas;
  g.num_pois = spec.num_pois;

  const auto stations = random_points(spec.num_stations, rng);
  const auto regions = random_points(spec.num_regions, rng);
  const auto areas = random_points(spec.num_business_areas, rng);
  const auto pois = random_points(spec.num_pois, rng);

  for (const auto& s : stations) {
    g.station_region.push_back(nearest(s, regions));
    g.station_business_area.push_back(nearest(s, areas));
  }
  for (const auto& p : pois) g.poi_station.push_back(nearest(p, stations));

  // Each station borders its three nearest neighbours; the relation is
  // symmetrised by storing undirected pairs.
  std::set<std::pair<int, int>> edges;
  const int n = spec.num_stations;
  for (int a = 0; a < n; ++a) {
    std::vector<int> others;
    for (int b = 0; b < n; ++b)
      if (b != a) others.push_back(b);
    std::sort(others.begin(), others.end(), [&](int l, int r) {
      const double dl = dist2(stations[a], stations[l]), dr = dist2(stations[a], stations[r]);
      return dl != dr ? dl < dr : l < r;
    });
    for (int k = 0; k < std::min<int>(3, static_cast<int>(others.size())); ++k)
      edges.insert({std::min(a, others[k]), std::max(a, others[k])});
  }
  g.adjacency.assign(edges.begin(), edges.end());
  return g;
}

std::vector<int> make_category_map(const WorldSpec& spec, std::mt19937_64& rng) {
  std::vector<int> order(spec.num_apps);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> category(spec.num_apps, 0);
  std::uniform_int_distribution<int> pick(0, spec.num_categories - 1);
  for (int k = 0; k < spec.num_apps; ++k) category[order[k]] = k < spec.num_categories ? k : pick(rng);
  return category;
}

struct UserProfile {
  int home = 0;
  int work = 0;
  std::vector<double> preference;
};

}  // namespace

World generate_world(const WorldSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  World world;
  world.spec = spec;
  world.geography = make_geography(spec, rng);
  world.app_category = make_category_map(spec, rng);
  const auto& geo = world.geography;

  std::vector<std::vector<int>> neighbours(spec.num_stations);
  for (auto [a, b] : geo.adjacency) {
    neighbours[a].push_back(b);
    neighbours[b].push_back(a);
  }

  // Static app weights: Zipf popularity over ids, then per (bin, region)
  // multipliers from the planted affinity rules.
  std::vector<double> popularity(spec.num_apps);
  for (int a = 0; a < spec.num_apps; ++a) popularity[a] = std::pow(a + 1.0, -spec.popularity_exponent);

  std::vector<std::vector<double>> time_weight(kBinsPerDay, std::vector<double>(spec.num_apps, 1.0));
  std::vector<std::vector<double>> place_weight(spec.num_regions, std::vector<double>(spec.num_apps, 1.0));
  std::vector<const SequentialRule*> seq_rules;
  std::vector<const CoUsageClique*> cliques;
  for (const auto& rule : spec.planted_rules) {
    if (const auto* r = std::get_if<TimeAffinity>(&rule)) {
      for (int b = 0; b < kBinsPerDay; ++b)
        if (std::find(r->bins.begin(), r->bins.end(), b) != r->bins.end()) time_weight[b][r->app] *= r->ratio;
    } else if (const auto* r = std::get_if<PlaceAffinity>(&rule)) {
      place_weight[r->region][r->app] *= r->ratio;
    } else if (const auto* r = std::get_if<SequentialRule>(&rule)) {
      seq_rules.push_back(r);
    } else if (const auto* r = std::get_if<CoUsageClique>(&rule)) {
      cliques.push_back(r);
    }
  }

  std::vector<double> bin_intensity(kBinsPerDay);
  for (int b = 0; b < kBinsPerDay; ++b) bin_intensity[b] = kHourlyIntensity[b / 2];
  std::discrete_distribution<int> pick_bin(bin_intensity.begin(), bin_intensity.end());
  std::poisson_distribution<int> session_count(spec.sessions_per_day);
  std::geometric_distribution<int> extra_events(1.0 / spec.session_length);
  std::uniform_int_distribution<int> pick_station(0, spec.num_stations - 1);
  std::uniform_int_distribution<std::int64_t> within_bin(0, kSecondsPerBin - 1);
  std::uniform_int_distribution<std::int64_t> intra_gap(5, 120);
  std::normal_distribution<double> taste(0.0, spec.user_pref_sigma);

  std::vector<UserProfile> users(spec.num_users);
  for (auto& u : users) {
    u.home = pick_station(rng);
    u.work = pick_station(rng);
    u.preference.resize(spec.num_apps);
    for (auto& p : u.preference) p = std::exp(taste(rng));
  }

  const int id_width = static_cast<int>(std::to_string(spec.num_users).size());
  std::vector<double> weights(spec.num_apps);

  for (int ui = 0; ui < spec.num_users; ++ui) {
    const auto& user = users[ui];
    std::string uid = std::to_string(ui);
    uid = "u" + std::string(static_cast<std::size_t>(std::max(0, id_width - static_cast<int>(uid.size()))), '0') + uid;

    for (int d = 0; d < spec.horizon_days; ++d) {
      const std::int64_t day_start = spec.start_epoch - spec.tz_offset_seconds + d * kSecondsPerDay;
      const bool weekend = (d % 7) >= 5;

      // Trajectory: session starts, per-session station, event times.
      struct Session {
        std::int64_t start;
        int length;
      };
      std::vector<Session> sessions(session_count(rng));
      for (auto& s : sessions) {
        s.start = day_start + pick_bin(rng) * kSecondsPerBin + within_bin(rng);
        s.length = 1 + extra_events(rng);
      }
      std::sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) { return a.start < b.start; });

      UserSequence seq{uid, {}};
      std::int64_t last = -1;
      for (const auto& s : sessions) {
        const int hour = hour_of_day(s.start, spec.tz_offset_seconds);
        int station = (!weekend && hour >= 9 && hour < 18) ? user.work : user.home;
        if (unit(rng) < spec.roam_probability && !neighbours[station].empty()) {
          std::uniform_int_distribution<std::size_t> pick_nb(0, neighbours[station].size() - 1);
          station = neighbours[station][pick_nb(rng)];
        }
        std::int64_t t = std::max(s.start, last + 1);
        for (int k = 0; k < s.length; ++k) {
          if (k > 0) t += intra_gap(rng);
          if (t >= day_start + kSecondsPerDay) break;
          seq.events.push_back(UsageRecord{uid, t, station, 0, std::nullopt});
          last = t;
        }
      }
      if (seq.events.empty()) continue;

      // Apps, drawn in time order given the trajectory and the previous app.
      std::set<int> session_apps;
      for (std::size_t i = 0; i < seq.events.size(); ++i) {
        auto& e = seq.events[i];
        if (i == 0 || e.timestamp - seq.events[i - 1].timestamp > kSecondsPerBin) session_apps.clear();

        int app = -1;
        if (i > 0) {
          const int prev = seq.events[i - 1].app_id;
          for (const auto* r : seq_rules)
            if (r->from == prev) {
              if (unit(rng) < r->probability) app = r->to;
              break;
            }
        }
        if (app < 0) {
          for (const auto* c : cliques) {
            const bool active = std::any_of(c->apps.begin(), c->apps.end(), [&](int a) { return session_apps.count(a); });
            if (active) {
              if (unit(rng) < c->probability) {
                std::uniform_int_distribution<std::size_t> pick(0, c->apps.size() - 1);
                app = c->apps[pick(rng)];
              }
              break;
            }
          }
        }
        if (app < 0) {
          const int bin = half_hour_bin(e.timestamp, spec.tz_offset_seconds);
          const int region = geo.station_region[e.location_id];
          for (int a = 0; a < spec.num_apps; ++a)
            weights[a] = popularity[a] * user.preference[a] * time_weight[bin][a] * place_weight[region][a];
          std::discrete_distribution<int> pick_app(weights.begin(), weights.end());
          app = pick_app(rng);
        }
        e.app_id = app;
        e.category_id = world.app_category[app];
        session_apps.insert(app);
      }
      world.data.push_back(std::move(seq));
    }
  }
  return world;
}

}  // namespace appgen
