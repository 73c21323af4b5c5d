#include <algorithm>
#include <fstream>
#include <sstream>

#include "appgen/common.hpp"
#include "appgen/encoders.hpp"

namespace appgen {

std::string to_string(EntityType type) {
  switch (type) {
    case EntityType::base_station: return "bs";
    case EntityType::region: return "region";
    case EntityType::business_area: return "ba";
    case EntityType::poi: return "poi";
  }
  return "unknown";
}

std::string to_string(Relation relation) {
  switch (relation) {
    case Relation::base_locate_at: return "BaseLocateAt";
    case Relation::base_belong_to: return "BaseBelongTo";
    case Relation::served_by: return "ServedBy";
    case Relation::base_border_by: return "BaseBorderBy";
  }
  return "unknown";
}

namespace {

EntityType tail_type(Relation r) {
  switch (r) {
    case Relation::base_locate_at: return EntityType::region;
    case Relation::base_belong_to: return EntityType::business_area;
    case Relation::served_by: return EntityType::poi;
    case Relation::base_border_by: return EntityType::base_station;
  }
  return EntityType::base_station;
}

int type_count(const UrbanKG& kg, EntityType type) {
  switch (type) {
    case EntityType::base_station: return kg.num_stations;
    case EntityType::region: return kg.num_regions;
    case EntityType::business_area: return kg.num_business_areas;
    case EntityType::poi: return kg.num_pois;
  }
  return 0;
}

}  // namespace

int UrbanKG::entity_index(EntityType type, int id) const {
  if (id < 0 || id >= type_count(*this, type))
    throw Error("unknown-entity", "no " + to_string(type) + " entity with id " + std::to_string(id));
  switch (type) {
    case EntityType::base_station: return id;
    case EntityType::region: return num_stations + id;
    case EntityType::business_area: return num_stations + num_regions + id;
    case EntityType::poi: return num_stations + num_regions + num_business_areas + id;
  }
  return -1;
}

Entity UrbanKG::entity(int index) const {
  if (index < 0 || index >= num_entities()) throw Error("unknown-entity", "entity index " + std::to_string(index));
  if (index < num_stations) return {EntityType::base_station, index};
  index -= num_stations;
  if (index < num_regions) return {EntityType::region, index};
  index -= num_regions;
  if (index < num_business_areas) return {EntityType::business_area, index};
  return {EntityType::poi, index - num_business_areas};
}

std::string UrbanKG::entity_name(int index) const {
  const auto e = entity(index);
  return to_string(e.type) + ":" + std::to_string(e.id);
}

UrbanKG build_urban_kg(const Geography& g) {
  if (static_cast<int>(g.station_region.size()) != g.num_stations ||
      static_cast<int>(g.station_business_area.size()) != g.num_stations ||
      static_cast<int>(g.poi_station.size()) != g.num_pois)
    throw Error("invalid-geography", "geography tables do not match the declared counts");

  UrbanKG kg{g.num_stations, g.num_regions, g.num_business_areas, g.num_pois, {}};
  for (int s = 0; s < g.num_stations; ++s) {
    if (g.station_region[s] < 0)
      throw Error("invalid-geography", "station " + std::to_string(s) + " has no region");
    kg.facts.push_back({s, Relation::base_locate_at, kg.entity_index(EntityType::region, g.station_region[s])});
    if (g.station_business_area[s] >= 0)
      kg.facts.push_back(
          {s, Relation::base_belong_to, kg.entity_index(EntityType::business_area, g.station_business_area[s])});
  }
  for (int p = 0; p < g.num_pois; ++p)
    kg.facts.push_back({kg.entity_index(EntityType::base_station, g.poi_station[p]), Relation::served_by,
                        kg.entity_index(EntityType::poi, p)});
  for (auto [a, b] : g.adjacency) {
    if (a == b) throw Error("invalid-geography", "station borders itself");
    kg.facts.push_back({kg.entity_index(EntityType::base_station, a), Relation::base_border_by, b});
    kg.facts.push_back({kg.entity_index(EntityType::base_station, b), Relation::base_border_by, a});
  }
  std::sort(kg.facts.begin(), kg.facts.end());
  kg.facts.erase(std::unique(kg.facts.begin(), kg.facts.end()), kg.facts.end());
  return kg;
}

void write_kg(std::ostream& out, const UrbanKG& kg, const std::string& config_hash) {
  out << "#entities:" << kg.num_stations << ' ' << kg.num_regions << ' ' << kg.num_business_areas << ' '
      << kg.num_pois;
  if (!config_hash.empty()) out << " #config_hash:" << config_hash;
  out << '\n';
  for (const auto& f : kg.facts)
    out << kg.entity_name(f.head) << '\t' << to_string(f.relation) << '\t' << kg.entity_name(f.tail) << '\n';
}

void write_kg(const std::filesystem::path& path, const UrbanKG& kg, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  write_kg(out, kg, config_hash);
}

UrbanKG read_kg(std::istream& in, std::string* config_hash) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#entities:", 0) != 0)
    throw Error("parse-error", "line 1: expected '#entities:<S> <R> <B> <P>' header");
  UrbanKG kg;
  {
    std::istringstream is(line.substr(10));
    if (!(is >> kg.num_stations >> kg.num_regions >> kg.num_business_areas >> kg.num_pois))
      throw Error("parse-error", "line 1: malformed entity counts");
    std::string extra;
    if (is >> extra) {
      if (extra.rfind("#config_hash:", 0) != 0) throw Error("parse-error", "line 1: unknown header field '" + extra + "'");
      if (config_hash) *config_hash = extra.substr(13);
    }
  }
  std::size_t line_no = 1;
  auto fail = [&](const std::string& msg) { throw Error("parse-error", "line " + std::to_string(line_no) + ": " + msg); };
  auto parse_entity = [&](const std::string& name) {
    const auto colon = name.find(':');
    if (colon == std::string::npos) fail("malformed entity '" + name + "'");
    const auto prefix = name.substr(0, colon);
    int id = 0;
    try {
      id = std::stoi(name.substr(colon + 1));
    } catch (const std::exception&) {
      fail("malformed entity id '" + name + "'");
    }
    for (auto t : {EntityType::base_station, EntityType::region, EntityType::business_area, EntityType::poi})
      if (prefix == to_string(t)) {
        try {
          return std::pair{t, kg.entity_index(t, id)};
        } catch (const Error& e) {
          fail(e.what());
        }
      }
    fail("unknown entity type '" + prefix + "'");
    return std::pair{EntityType::base_station, -1};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string h, r, t;
    if (!(is >> h >> r >> t)) fail("expected head, relation, tail");
    const auto [htype, head] = parse_entity(h);
    const auto [ttype, tail] = parse_entity(t);
    int rel = -1;
    for (int k = 0; k < kNumRelations; ++k)
      if (r == to_string(static_cast<Relation>(k))) rel = k;
    if (rel < 0) fail("unknown relation '" + r + "'");
    if (htype != EntityType::base_station) fail("head must be a base station");
    if (ttype != tail_type(static_cast<Relation>(rel))) fail("tail type does not match relation " + r);
    kg.facts.push_back({head, static_cast<Relation>(rel), tail});
  }
  std::sort(kg.facts.begin(), kg.facts.end());
  kg.facts.erase(std::unique(kg.facts.begin(), kg.facts.end()), kg.facts.end());
  for (const auto& f : kg.facts)
    if (f.relation == Relation::base_border_by &&
        !std::binary_search(kg.facts.begin(), kg.facts.end(), Fact{f.tail, Relation::base_border_by, f.head}))
      throw Error("parse-error", "BaseBorderBy is not symmetric for " + kg.entity_name(f.head) + " -> " +
                                     kg.entity_name(f.tail));
  return kg;
}

UrbanKG read_kg(const std::filesystem::path& path, std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  return read_kg(in, config_hash);
}

}  // namespace appgen
