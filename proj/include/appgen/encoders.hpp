#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "appgen/corpus.hpp"

namespace appgen {

// ---------------------------------------------------------------------------
// Embedding tables
// ---------------------------------------------------------------------------

enum class EmbeddingDomain { app, location, time };

std::string to_string(EmbeddingDomain domain);
EmbeddingDomain embedding_domain_from_string(const std::string& name);

/// Dense table of latent vectors; column j holds the vector of id j.
struct EmbeddingTable {
  EmbeddingDomain domain = EmbeddingDomain::app;
  Eigen::MatrixXd vectors;  // dim x size

  int dim() const { return static_cast<int>(vectors.rows()); }
  int size() const { return static_cast<int>(vectors.cols()); }
  bool contains(int id) const { return id >= 0 && id < size(); }

  /// Throws Error("missing-embedding") for ids outside the table.
  Eigen::MatrixXd::ConstColXpr row(int id) const;
};

/// The header may carry an optional `#config_hash:<hex>` token.
void write_embeddings(std::ostream& out, const EmbeddingTable& table, const std::string& config_hash = "");
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table,
                      const std::string& config_hash = "");
EmbeddingTable read_embeddings(std::istream& in, std::string* config_hash = nullptr);
EmbeddingTable read_embeddings(const std::filesystem::path& path, std::string* config_hash = nullptr);

// ---------------------------------------------------------------------------
// App embeddings: skip-gram with negative sampling
// ---------------------------------------------------------------------------

struct SkipGramOptions {
  int dim = 64;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

/// Loss of one (center, context) pair with a fixed set of negatives and its
/// gradients with respect to every vector involved:
///   -log s(u_pos . v) - sum_n log s(-u_n . v)
struct SgnsPairGradient {
  double loss = 0.0;
  Eigen::VectorXd center;       // d loss / d v
  Eigen::MatrixXd outputs;      // d loss / d u_k, column 0 = positive
};

SgnsPairGradient sgns_pair_gradient(const Eigen::VectorXd& center, const Eigen::MatrixXd& outputs);

EmbeddingTable train_app_embeddings(const std::vector<std::vector<int>>& sequences, int num_apps,
                                    const SkipGramOptions& options);

// ---------------------------------------------------------------------------
// Urban knowledge graph
// ---------------------------------------------------------------------------

enum class EntityType { base_station, region, business_area, poi };
enum class Relation { base_locate_at = 0, base_belong_to = 1, served_by = 2, base_border_by = 3 };
inline constexpr int kNumRelations = 4;

std::string to_string(EntityType type);
std::string to_string(Relation relation);

struct Entity {
  EntityType type;
  int id;  // id within its type
  friend bool operator==(const Entity&, const Entity&) = default;
};

struct Fact {
  int head;  // entity index
  Relation relation;
  int tail;  // entity index
  friend auto operator<=>(const Fact&, const Fact&) = default;
};

/// Entities are laid out type by type: stations first (so entity index ==
/// station id), then regions, business areas and POIs.
struct UrbanKG {
  int num_stations = 0;
  int num_regions = 0;
  int num_business_areas = 0;
  int num_pois = 0;
  std::vector<Fact> facts;  // sorted, unique

  int num_entities() const { return num_stations + num_regions + num_business_areas + num_pois; }
  int entity_index(EntityType type, int id) const;
  Entity entity(int index) const;
  std::string entity_name(int index) const;
};

UrbanKG build_urban_kg(const Geography& geography);

/// Triple file: header "#entities:<S> <R> <B> <P>", then "head\trelation\ttail"
/// per line with entity names such as "bs:3" and relation names such as
/// "BaseLocateAt".
void write_kg(std::ostream& out, const UrbanKG& kg, const std::string& config_hash = "");
void write_kg(const std::filesystem::path& path, const UrbanKG& kg, const std::string& config_hash = "");
UrbanKG read_kg(std::istream& in, std::string* config_hash = nullptr);
UrbanKG read_kg(const std::filesystem::path& path, std::string* config_hash = nullptr);

// ---------------------------------------------------------------------------
// TuckER
// ---------------------------------------------------------------------------

struct TuckerModel {
  Eigen::MatrixXd entities;             // d_e x num_entities
  Eigen::MatrixXd relations;            // d_r x num_relations
  std::vector<Eigen::MatrixXd> core;    // d_r slices, each d_e x d_e

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(self.entities);
    f(self.relations);
    for (auto& slice : self.core) f(slice);
  }

  int entity_dim() const { return static_cast<int>(entities.rows()); }
  int relation_dim() const { return static_cast<int>(relations.rows()); }
  /// Core tensor contracted with the relation vector: sum_k w_r[k] W[:,k,:].
  Eigen::MatrixXd relation_matrix(int relation) const;
};

/// Trilinear logit W x1 e_h x2 w_r x3 e_t.
double tucker_score(const TuckerModel& model, int head, int relation, int tail);
double tucker_probability(const TuckerModel& model, int head, int relation, int tail);

struct LabeledTriple {
  int head;
  int relation;
  int tail;
  double label;  // 1 for facts, 0 for corrupted tails
};

/// Mean binary cross-entropy over `samples`; fills `gradient` (same shape as
/// the model) when non-null.
double tucker_loss(const TuckerModel& model, const std::vector<LabeledTriple>& samples,
                   TuckerModel* gradient = nullptr);

struct TuckerOptions {
  int entity_dim = 32;
  int relation_dim = 32;
  int epochs = 100;
  int negatives = 5;
  int batch_size = 128;
  double learning_rate = 0.005;
  std::uint64_t seed = 1;
};

struct TuckerResult {
  TuckerModel model;
  EmbeddingTable locations;  // BaseStation rows of the entity table
  std::vector<double> loss_curve;  // mean training loss per epoch, index 0 = initialization
};

TuckerResult train_tucker(const UrbanKG& kg, const TuckerOptions& options);

/// Filtered hits@k over the given facts: the true tail is ranked among all
/// entities after removing the other known tails of (head, relation).
double tucker_hits_at(const TuckerModel& model, const UrbanKG& kg, int k);

// ---------------------------------------------------------------------------
// Temporal encoding
// ---------------------------------------------------------------------------

inline constexpr int kTemporalDim = 128;

/// Sinusoidal encoding of a half-hour bin: sin(i / tau^(j/64)) for j < 64,
/// then the matching cosines, tau = 10000.
Eigen::VectorXd temporal_encoding(int bin);

/// All 48 encodings, column = bin.
const Eigen::MatrixXd& temporal_table();

}  // namespace appgen
