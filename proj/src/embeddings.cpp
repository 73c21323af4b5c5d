#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "appgen/common.hpp"
#include "appgen/encoders.hpp"

namespace appgen {

std::string to_string(EmbeddingDomain domain) {
  switch (domain) {
    case EmbeddingDomain::app: return "app";
    case EmbeddingDomain::location: return "location";
    case EmbeddingDomain::time: return "time";
  }
  return "unknown";
}

EmbeddingDomain embedding_domain_from_string(const std::string& name) {
  if (name == "app") return EmbeddingDomain::app;
  if (name == "location") return EmbeddingDomain::location;
  if (name == "time") return EmbeddingDomain::time;
  throw Error("parse-error", "unknown embedding domain '" + name + "'");
}

Eigen::MatrixXd::ConstColXpr EmbeddingTable::row(int id) const {
  if (!contains(id))
    throw Error("missing-embedding", "no " + to_string(domain) + " embedding for id " + std::to_string(id));
  return vectors.col(id);
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table, const std::string& config_hash) {
  out << "#domain:" << to_string(table.domain) << " #dim:" << table.dim();
  if (!config_hash.empty()) out << " #config_hash:" << config_hash;
  out << '\n';
  out << std::setprecision(17);
  for (int id = 0; id < table.size(); ++id) {
    out << id;
    for (int k = 0; k < table.dim(); ++k) out << '\t' << table.vectors(k, id);
    out << '\n';
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write " + path.string());
  write_embeddings(out, table, config_hash);
}

EmbeddingTable read_embeddings(std::istream& in, std::string* config_hash) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#domain:", 0) != 0)
    throw Error("parse-error", "line 1: expected '#domain:<name> #dim:<d>' header");
  std::istringstream header(line);
  std::string domain_tok, dim_tok;
  header >> domain_tok >> dim_tok;
  if (dim_tok.rfind("#dim:", 0) != 0) throw Error("parse-error", "line 1: missing #dim");
  std::string extra_tok;
  if (header >> extra_tok) {
    if (extra_tok.rfind("#config_hash:", 0) != 0) throw Error("parse-error", "line 1: unknown header field '" + extra_tok + "'");
    if (config_hash) *config_hash = extra_tok.substr(13);
  }
  EmbeddingTable table;
  table.domain = embedding_domain_from_string(domain_tok.substr(8));
  const int dim = std::stoi(dim_tok.substr(5));
  if (dim <= 0) throw Error("parse-error", "line 1: dim must be positive");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    int id = -1;
    if (!(is >> id) || id != static_cast<int>(rows.size()))
      throw Error("parse-error", "line " + std::to_string(line_no) + ": ids must be consecutive from 0");
    std::vector<double> v(dim);
    for (auto& x : v)
      if (!(is >> x)) throw Error("parse-error", "line " + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values");
    std::string extra;
    if (is >> extra) throw Error("parse-error", "line " + std::to_string(line_no) + ": too many values");
    rows.push_back(std::move(v));
  }
  table.vectors.resize(dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (int k = 0; k < dim; ++k) table.vectors(k, static_cast<Eigen::Index>(j)) = rows[j][k];
  if (!table.vectors.allFinite()) throw Error("parse-error", "non-finite embedding value");
  return table;
}

EmbeddingTable read_embeddings(const std::filesystem::path& path, std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  return read_embeddings(in, config_hash);
}

Eigen::VectorXd temporal_encoding(int bin) {
  if (bin < 0 || bin >= kBinsPerDay)
    throw Error("invalid-bin", "time bin " + std::to_string(bin) + " outside [0, 48)");
  constexpr int half = kTemporalDim / 2;
  Eigen::VectorXd out(kTemporalDim);
  for (int j = 0; j < half; ++j) {
    const double angle = bin / std::pow(10000.0, static_cast<double>(j) / half);
    out[j] = std::sin(angle);
    out[half + j] = std::cos(angle);
  }
  return out;
}

const Eigen::MatrixXd& temporal_table() {
  static const Eigen::MatrixXd table = [] {
    Eigen::MatrixXd t(kTemporalDim, kBinsPerDay);
    for (int b = 0; b < kBinsPerDay; ++b) t.col(b) = temporal_encoding(b);
    return t;
  }();
  return table;
}

}  // namespace appgen
