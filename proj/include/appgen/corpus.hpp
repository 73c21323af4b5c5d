#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace appgen {

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

inline constexpr int kBinsPerDay = 48;
inline constexpr std::int64_t kSecondsPerBin = 1800;
inline constexpr std::int64_t kSecondsPerDay = 86400;

struct UsageRecord {
  std::string user_id;
  std::int64_t timestamp = 0;  // seconds since epoch, UTC
  int location_id = 0;
  int app_id = 0;
  std::optional<int> category_id;

  friend bool operator==(const UsageRecord&, const UsageRecord&) = default;
};

/// One spatio-temporal point s_i = (t_i, l_i) of a trajectory.
struct TrajectoryPoint {
  std::int64_t timestamp = 0;
  int location_id = 0;
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Time-ordered events of one user. By default one sequence covers one
/// user-day.
struct UserSequence {
  std::string user_id;
  std::vector<UsageRecord> events;

  std::size_t size() const { return events.size(); }
  std::vector<int> apps() const;
  Trajectory trajectory() const;

  friend bool operator==(const UserSequence&, const UserSequence&) = default;
};

using Dataset = std::vector<UserSequence>;

/// Throws if the sequence is empty, mixes users, or goes back in time.
void validate_sequence(const UserSequence& seq);

/// Half-hour bin of the local time of day, in [0, 48).
int half_hour_bin(std::int64_t timestamp, std::int64_t tz_offset_seconds = 0);
int hour_of_day(std::int64_t timestamp, std::int64_t tz_offset_seconds = 0);
std::int64_t day_index(std::int64_t timestamp, std::int64_t tz_offset_seconds = 0);

std::size_t count_events(const Dataset& data);
std::vector<std::string> user_ids(const Dataset& data);

// ---------------------------------------------------------------------------
// Synthetic world
// ---------------------------------------------------------------------------

/// App usage weight multiplied by `ratio` inside the listed half-hour bins.
struct TimeAffinity {
  int app = 0;
  std::vector<int> bins;
  double ratio = 1.0;
};

/// App usage weight multiplied by `ratio` at stations of one region.
struct PlaceAffinity {
  int app = 0;
  int region = 0;
  double ratio = 1.0;
};

/// After `from`, the next event of the sequence is `to` with probability p.
struct SequentialRule {
  int from = 0;
  int to = 0;
  double probability = 0.0;
};

/// Once a session contains a clique member, each further event of that
/// session is drawn uniformly from the clique with probability p.
struct CoUsageClique {
  std::vector<int> apps;
  double probability = 0.0;
};

using PlantedRule = std::variant<TimeAffinity, PlaceAffinity, SequentialRule, CoUsageClique>;

/// Parses the compact rule list used in config files, e.g.
/// "time 3 16,17,18,19 10; seq 4 5 0.9; place 2 1 8; clique 6,7,8 0.5".
std::vector<PlantedRule> parse_rules(const std::string& text);
std::string format_rules(const std::vector<PlantedRule>& rules);

struct WorldSpec {
  std::uint64_t seed = 42;
  int num_users = 200;
  int num_apps = 50;
  int num_stations = 30;
  int num_regions = 5;
  int num_business_areas = 8;
  int num_pois = 60;
  int num_categories = 10;
  int horizon_days = 7;
  std::int64_t start_epoch = 1461024000;  // 2016-04-19 00:00:00 UTC
  std::int64_t tz_offset_seconds = 0;
  double sessions_per_day = 4.0;
  double session_length = 2.0;     // mean events per session
  double popularity_exponent = 0.8;  // Zipf exponent over app ids
  double user_pref_sigma = 0.5;    // log-normal spread of per-user app taste
  double roam_probability = 0.2;   // session at a neighbouring station
  std::vector<PlantedRule> planted_rules;
};

/// Throws Error("invalid-spec") naming the offending field.
void validate(const WorldSpec& spec);

struct Geography {
  int num_stations = 0;
  int num_regions = 0;
  int num_business_areas = 0;
  int num_pois = 0;
  std::vector<int> station_region;         // -1 when unassigned
  std::vector<int> station_business_area;  // -1 when unassigned
  std::vector<int> poi_station;            // station serving each POI
  std::vector<std::pair<int, int>> adjacency;  // undirected, a < b
};

struct World {
  WorldSpec spec;
  Geography geography;
  std::vector<int> app_category;  // app -> category, surjective
  Dataset data;
};

World generate_world(const WorldSpec& spec);

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// User-level partition: all sequences of a user land in the same split.
DatasetSplit split_dataset(const Dataset& data, std::array<double, 3> ratios,
                           std::uint64_t seed);

/// Two-way user-level split with the given fraction of users in the first part.
std::pair<Dataset, Dataset> split_users(const Dataset& data, double first_fraction,
                                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Record files
// ---------------------------------------------------------------------------

struct RecordFileMeta {
  std::string config_hash;  // empty when absent
};

/// Reads newline-delimited records and cuts them into per-user-day sequences.
Dataset read_dataset(std::istream& in, std::int64_t tz_offset_seconds = 0,
                     RecordFileMeta* meta = nullptr);
Dataset read_dataset(const std::filesystem::path& path, std::int64_t tz_offset_seconds = 0,
                     RecordFileMeta* meta = nullptr);
void write_dataset(std::ostream& out, const Dataset& data, const RecordFileMeta& meta = {});
void write_dataset(const std::filesystem::path& path, const Dataset& data,
                   const RecordFileMeta& meta = {});

}  // namespace appgen
