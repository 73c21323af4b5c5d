#include "appgen/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "appgen/common.hpp"

namespace appgen {

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

std::vector<int> UserSequence::apps() const {
  std::vector<int> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.app_id);
  return out;
}

Trajectory UserSequence::trajectory() const {
  Trajectory out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.timestamp, e.location_id});
  return out;
}

void validate_sequence(const UserSequence& seq) {
  if (seq.events.empty()) throw Error("invalid-sequence", "sequence of user " + seq.user_id + " is empty");
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const auto& e = seq.events[i];
    if (e.user_id != seq.user_id)
      throw Error("invalid-sequence", "event " + std::to_string(i) + " belongs to user " + e.user_id +
                                          ", sequence user is " + seq.user_id);
    if (e.timestamp < 0) throw Error("invalid-sequence", "negative timestamp");
    if (i > 0 && e.timestamp < seq.events[i - 1].timestamp)
      throw Error("invalid-sequence", "events of user " + seq.user_id + " are not time-ordered");
  }
}

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
  const std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

std::int64_t floor_div(std::int64_t a, std::int64_t m) {
  return (a - floor_mod(a, m)) / m;
}

}  // namespace

int half_hour_bin(std::int64_t timestamp, std::int64_t tz_offset_seconds) {
  return static_cast<int>(floor_mod(timestamp + tz_offset_seconds, kSecondsPerDay) / kSecondsPerBin);
}

int hour_of_day(std::int64_t timestamp, std::int64_t tz_offset_seconds) {
  return static_cast<int>(floor_mod(timestamp + tz_offset_seconds, kSecondsPerDay) / 3600);
}

std::int64_t day_index(std::int64_t timestamp, std::int64_t tz_offset_seconds) {
  return floor_div(timestamp + tz_offset_seconds, kSecondsPerDay);
}

std::size_t count_events(const Dataset& data) {
  std::size_t n = 0;
  for (const auto& s : data) n += s.size();
  return n;
}

std::vector<std::string> user_ids(const Dataset& data) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : data)
    if (seen.insert(s.user_id).second) out.push_back(s.user_id);
  return out;
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& s, const std::string& what) {
  int v = 0;
  const auto t = trim(s);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    throw Error("invalid-spec", "cannot parse " + what + " from '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& what) {
  const auto t = trim(s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw Error("invalid-spec", "cannot parse " + what + " from '" + s + "'");
  return v;
}

// "3,5,7" or "16-19" or a mix "1,4-6".
std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) {
    const auto dash = part.find('-', 1);
    if (dash != std::string::npos) {
      const int lo = parse_int(part.substr(0, dash), what);
      const int hi = parse_int(part.substr(dash + 1), what);
      if (hi < lo) throw Error("invalid-spec", "empty range in " + what);
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(parse_int(part, what));
    }
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::vector<PlantedRule> parse_rules(const std::string& text) {
  std::vector<PlantedRule> rules;
  for (const auto& raw : split(text, ';')) {
    const auto entry = trim(raw);
    if (entry.empty()) continue;
    std::istringstream is(entry);
    std::vector<std::string> tok;
    for (std::string t; is >> t;) tok.push_back(t);
    const std::string& kind = tok[0];
    auto need = [&](std::size_t n) {
      if (tok.size() != n)
        throw Error("invalid-spec", "planted_rules: '" + entry + "' expects " + std::to_string(n - 1) + " arguments");
    };
    if (kind == "time") {
      need(4);
      rules.emplace_back(TimeAffinity{parse_int(tok[1], "time.app"), parse_int_list(tok[2], "time.bins"),
                                      parse_double(tok[3], "time.ratio")});
    } else if (kind == "place") {
      need(4);
      rules.emplace_back(PlaceAffinity{parse_int(tok[1], "place.app"), parse_int(tok[2], "place.region"),
                                       parse_double(tok[3], "place.ratio")});
    } else if (kind == "seq") {
      need(4);
      rules.emplace_back(SequentialRule{parse_int(tok[1], "seq.from"), parse_int(tok[2], "seq.to"),
                                        parse_double(tok[3], "seq.probability")});
    } else if (kind == "clique") {
      need(3);
      rules.emplace_back(CoUsageClique{parse_int_list(tok[1], "clique.apps"),
                                       parse_double(tok[2], "clique.probability")});
    } else {
      throw Error("invalid-spec", "planted_rules: unknown rule kind '" + kind + "'");
    }
  }
  return rules;
}

std::string format_rules(const std::vector<PlantedRule>& rules) {
  std::string out;
  for (const auto& rule : rules) {
    if (!out.empty()) out += "; ";
    std::visit(
        [&](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, TimeAffinity>)
            out += "time " + std::to_string(r.app) + " " + join_ints(r.bins) + " " + format_double(r.ratio);
          else if constexpr (std::is_same_v<R, PlaceAffinity>)
            out += "place " + std::to_string(r.app) + " " + std::to_string(r.region) + " " + format_double(r.ratio);
          else if constexpr (std::is_same_v<R, SequentialRule>)
            out += "seq " + std::to_string(r.from) + " " + std::to_string(r.to) + " " + format_double(r.probability);
          else
            out += "clique " + join_ints(r.apps) + " " + format_double(r.probability);
        },
        rule);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

namespace {

Dataset select_users(const Dataset& data, const std::set<std::string>& users) {
  Dataset out;
  for (const auto& s : data)
    if (users.count(s.user_id)) out.push_back(s);
  return out;
}

std::vector<std::string> shuffled_users(const Dataset& data, std::uint64_t seed) {
  auto users = user_ids(data);
  std::mt19937_64 rng(seed);
  std::shuffle(users.begin(), users.end(), rng);
  return users;
}

}  // namespace

DatasetSplit split_dataset(const Dataset& data, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (!(r > 0.0)) throw Error("invalid-split", "split ratios must be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw Error("invalid-split", "split ratios must sum to 1");

  const auto users = shuffled_users(data, seed);
  const auto n = static_cast<long>(users.size());
  if (n < 3) throw Error("invalid-split", "need at least 3 users to form three non-empty splits, got " + std::to_string(n));

  long n_train = std::lround(ratios[0] * static_cast<double>(n));
  long n_val = std::lround(ratios[1] * static_cast<double>(n));
  n_train = std::clamp(n_train, 1L, n - 2);
  n_val = std::clamp(n_val, 1L, n - n_train - 1);

  std::set<std::string> train(users.begin(), users.begin() + n_train);
  std::set<std::string> val(users.begin() + n_train, users.begin() + n_train + n_val);
  std::set<std::string> test(users.begin() + n_train + n_val, users.end());
  return {select_users(data, train), select_users(data, val), select_users(data, test)};
}

std::pair<Dataset, Dataset> split_users(const Dataset& data, double first_fraction, std::uint64_t seed) {
  const auto users = shuffled_users(data, seed);
  const auto n = static_cast<long>(users.size());
  if (n < 2) throw Error("invalid-split", "need at least 2 users for a two-way split");
  const long n_first = std::clamp(std::lround(first_fraction * static_cast<double>(n)), 1L, n - 1);
  std::set<std::string> first(users.begin(), users.begin() + n_first);
  std::set<std::string> second(users.begin() + n_first, users.end());
  return {select_users(data, first), select_users(data, second)};
}

// ---------------------------------------------------------------------------
// Record files
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCanonicalFields[] = {"user_id", "timestamp", "location_id", "app_id", "category_id"};

}  // namespace

Dataset read_dataset(std::istream& in, std::int64_t tz_offset_seconds, RecordFileMeta* meta) {
  std::vector<std::string> fields(std::begin(kCanonicalFields), std::end(kCanonicalFields));
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error("parse-error", "line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#fields:", 0) == 0) {
        fields = split(line.substr(8), '\t');
        for (auto& f : fields) f = trim(f);
        for (const auto& f : fields)
          if (std::find(std::begin(kCanonicalFields), std::end(kCanonicalFields), f) == std::end(kCanonicalFields))
            fail("unknown field '" + f + "'");
        for (const char* req : {"user_id", "timestamp", "location_id", "app_id"})
          if (std::find(fields.begin(), fields.end(), req) == fields.end()) fail(std::string("missing field ") + req);
      } else if (line.rfind("#config_hash:", 0) == 0) {
        if (meta) meta->config_hash = trim(line.substr(13));
      }
      continue;
    }
    const auto cols = split(line, '\t');
    if (cols.size() != fields.size())
      fail("expected " + std::to_string(fields.size()) + " fields, found " + std::to_string(cols.size()));
    UsageRecord rec;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& f = fields[c];
      const auto& v = cols[c];
      auto as_int64 = [&](const std::string& what) {
        std::int64_t x = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (v.empty() || ec != std::errc() || p != v.data() + v.size()) fail("non-numeric " + what + " '" + v + "'");
        return x;
      };
      if (f == "user_id") {
        if (v.empty()) fail("empty user_id");
        rec.user_id = v;
      } else if (f == "timestamp") {
        rec.timestamp = as_int64("timestamp");
        if (rec.timestamp < 0) fail("negative timestamp");
      } else if (f == "location_id") {
        rec.location_id = static_cast<int>(as_int64("location_id"));
      } else if (f == "app_id") {
        rec.app_id = static_cast<int>(as_int64("app_id"));
        if (rec.app_id < 0) fail("negative app_id");
      } else if (f == "category_id") {
        if (v != "-") rec.category_id = static_cast<int>(as_int64("category_id"));
      }
    }
    const bool new_sequence = data.empty() || data.back().user_id != rec.user_id ||
                              day_index(data.back().events.back().timestamp, tz_offset_seconds) !=
                                  day_index(rec.timestamp, tz_offset_seconds);
    if (new_sequence) {
      data.push_back(UserSequence{rec.user_id, {}});
    } else if (rec.timestamp < data.back().events.back().timestamp) {
      fail("timestamp goes backwards within a sequence");
    }
    data.back().events.push_back(std::move(rec));
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path, std::int64_t tz_offset_seconds, RecordFileMeta* meta) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  return read_dataset(in, tz_offset_seconds, meta);
}

void write_dataset(std::ostream& out, const Dataset& data, const RecordFileMeta& meta) {
  out << "#fields:";
  for (std::size_t i = 0; i < std::size(kCanonicalFields); ++i) out << (i ? "\t" : "") << kCanonicalFields[i];
  out << '\n';
  if (!meta.config_hash.empty()) out << "#config_hash:" << meta.config_hash << '\n';
  for (const auto& seq : data)
    for (const auto& e : seq.events) {
      out << e.user_id << '\t' << e.timestamp << '\t' << e.location_id << '\t' << e.app_id << '\t';
      if (e.category_id)
        out << *e.category_id;
      else
        out << '-';
      out << '\n';
    }
}

void write_dataset(const std::filesystem::path& path, const Dataset& data, const RecordFileMeta& meta) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  write_dataset(out, data, meta);
}

}  // namespace appgen
