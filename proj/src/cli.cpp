#include "appgen/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "appgen/analysis.hpp"
#include "appgen/common.hpp"
#include "appgen/config.hpp"
#include "appgen/metrics.hpp"

namespace fs = std::filesystem;

namespace appgen {

namespace {

const std::vector<std::string> kStages = {"gen-world", "train-encoders", "train", "generate", "evaluate", "report"};

struct Paths {
  fs::path dir;
  fs::path dataset() const { return dir / "dataset.tsv"; }
  fs::path kg() const { return dir / "world.kg"; }
  fs::path apps() const { return dir / "apps.tsv"; }
  fs::path app_emb() const { return dir / "app.emb"; }
  fs::path location_emb() const { return dir / "location.emb"; }
  fs::path checkpoint() const { return dir / "model.ckpt"; }
  fs::path train_log() const { return dir / "train_log.tsv"; }
  fs::path generated() const { return dir / "generated.tsv"; }
  fs::path metrics() const { return dir / "metrics.tsv"; }
  fs::path report() const { return dir / "report"; }
};

/// Hash named by a `#config_hash:` token in the first lines of a text file.
std::string text_artifact_hash(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  for (int n = 0; n < 4 && std::getline(in, line); ++n) {
    const auto at = line.find("#config_hash:");
    if (at == std::string::npos) continue;
    const auto begin = at + 13;
    const auto end = line.find_first_of(" \t\r", begin);
    return line.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
  }
  return "";
}

std::string artifact_hash(const fs::path& path) {
  if (path.extension() == ".ckpt") return hex64(load_checkpoint(path).config_hash);
  return text_artifact_hash(path);
}

class Runner {
 public:
  Runner(RunConfig config, bool force, bool allow_mismatch, std::ostream& out)
      : cfg_(std::move(config)), hash_(config_hash(cfg_)), paths_{cfg_.run_dir}, force_(force),
        allow_mismatch_(allow_mismatch), out_(out) {}

  void stage(const std::string& name) {
    fs::create_directories(paths_.dir);
    if (name == "gen-world") gen_world();
    else if (name == "train-encoders") train_encoders();
    else if (name == "train") train_model();
    else if (name == "generate") generate();
    else if (name == "evaluate") evaluate();
    else if (name == "report") report();
  }

 private:
  /// True when every output exists with the current hash; a foreign hash is
  /// an error unless --force.
  bool fresh(const std::string& stage, const std::vector<fs::path>& outputs) {
    bool all = true;
    for (const auto& p : outputs) {
      if (!fs::exists(p)) {
        all = false;
        continue;
      }
      const std::string h = artifact_hash(p);
      if (h == hash_) continue;
      all = false;
      if (!force_)
        throw Error("config-hash-mismatch", p.string() + " was produced by config " + (h.empty() ? "?" : h) +
                                                ", current config is " + hash_ + " (rerun with --force)");
    }
    if (all && !force_) out_ << stage << ": up to date (" << hash_ << ")\n";
    return all && !force_;
  }

  void check_input(const fs::path& p, const std::string& found) {
    if (found == hash_ || allow_mismatch_) return;
    throw Error("config-hash-mismatch", p.string() + " was produced by config " + (found.empty() ? "?" : found) +
                                            ", current config is " + hash_ + " (use --allow-hash-mismatch)");
  }

  void require(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p)) throw Error("missing-input", p.string() + " not found (run `" + producer + "` first)");
  }

  const Dataset& dataset() {
    if (!data_) {
      require(paths_.dataset(), "gen-world");
      RecordFileMeta meta;
      data_ = read_dataset(paths_.dataset(), cfg_.world.tz_offset_seconds, &meta);
      check_input(paths_.dataset(), meta.config_hash);
    }
    return *data_;
  }

  const DatasetSplit& split() {
    if (!split_) split_ = split_dataset(dataset(), cfg_.split, cfg_.split_seed());
    return *split_;
  }

  EmbeddingTable embedding(const fs::path& p) {
    require(p, "train-encoders");
    std::string h;
    EmbeddingTable t = read_embeddings(p, &h);
    check_input(p, h);
    return t;
  }

  std::vector<int> app_categories() {
    require(paths_.apps(), "gen-world");
    check_input(paths_.apps(), text_artifact_hash(paths_.apps()));
    std::ifstream in(paths_.apps());
    std::vector<int> category(cfg_.world.num_apps, -1);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("app", 0) == 0) continue;
      std::istringstream row(line);
      int app = -1, cat = -1;
      if (!(row >> app >> cat) || app < 0 || app >= cfg_.world.num_apps)
        throw Error("parse-error", paths_.apps().string() + ": malformed row '" + line + "'");
      category[app] = cat;
    }
    for (int c : category)
      if (c < 0) throw Error("parse-error", paths_.apps().string() + ": incomplete app category map");
    return category;
  }

  ModelCheckpoint checkpoint() {
    ModelCheckpoint ckpt = load_checkpoint(paths_.checkpoint());
    check_input(paths_.checkpoint(), hex64(ckpt.config_hash));
    return ckpt;
  }

  Dataset generated() {
    require(paths_.generated(), "generate");
    RecordFileMeta meta;
    Dataset g = read_dataset(paths_.generated(), cfg_.world.tz_offset_seconds, &meta);
    check_input(paths_.generated(), meta.config_hash);
    return g;
  }

  void gen_world() {
    if (fresh("gen-world", {paths_.dataset(), paths_.kg(), paths_.apps()})) return;
    const World w = generate_world(cfg_.world_spec());
    write_dataset(paths_.dataset(), w.data, {hash_});
    write_kg(paths_.kg(), build_urban_kg(w.geography), hash_);
    std::ofstream apps(paths_.apps());
    apps << "#config_hash:" << hash_ << "\napp\tcategory\n";
    for (std::size_t a = 0; a < w.app_category.size(); ++a) apps << a << "\t" << w.app_category[a] << "\n";
    if (!apps) throw Error("io-error", "cannot write " + paths_.apps().string());
    out_ << "gen-world: " << w.data.size() << " sequences, " << count_events(w.data) << " events -> "
         << paths_.dataset().string() << "\n";
  }

  void train_encoders() {
    if (fresh("train-encoders", {paths_.app_emb(), paths_.location_emb()})) return;
    std::vector<std::vector<int>> sequences;
    for (const auto& s : split().train) sequences.push_back(s.apps());
    const EmbeddingTable apps = train_app_embeddings(sequences, cfg_.world.num_apps, cfg_.skipgram_options());
    require(paths_.kg(), "gen-world");
    std::string kg_hash;
    const UrbanKG kg = read_kg(paths_.kg(), &kg_hash);
    check_input(paths_.kg(), kg_hash);
    const TuckerResult tucker = train_tucker(kg, cfg_.tucker_options());
    write_embeddings(paths_.app_emb(), apps, hash_);
    write_embeddings(paths_.location_emb(), tucker.locations, hash_);
    out_ << "train-encoders: app table " << apps.dim() << "x" << apps.size() << ", location table "
         << tucker.locations.dim() << "x" << tucker.locations.size() << ", kg loss " << tucker.loss_curve.front()
         << " -> " << tucker.loss_curve.back() << ", hits@1 " << tucker_hits_at(tucker.model, kg, 1) << "\n";
  }

  void train_model() {
    if (fresh("train", {paths_.checkpoint()})) return;
    const EmbeddingTable apps = embedding(paths_.app_emb());
    const EmbeddingTable locations = embedding(paths_.location_emb());
    const auto categories = app_categories();
    std::ofstream log(paths_.train_log());
    log << "#config_hash:" << hash_ << "\nepoch\ttrain_loss\tvalidation_loss\n";
    log.precision(10);
    ModelCheckpoint ckpt =
        train(split().train, split().validation, apps, locations, cfg_.model_config(), [&](int e, double tl, double vl) {
          log << e << "\t" << tl << "\t" << vl << "\n";
          out_ << "train: epoch " << e << " loss " << tl << " validation " << vl << "\n";
        });
    ckpt.config_text = canonical_text(cfg_);
    ckpt.config_hash = fnv1a(ckpt.config_text);
    ckpt.app_category = categories;
    save_checkpoint(ckpt, paths_.checkpoint());
    out_ << "train: best epoch " << ckpt.metadata.best_epoch << " -> " << paths_.checkpoint().string() << "\n";
  }

  void generate() {
    if (fresh("generate", {paths_.generated()})) return;
    const ModelCheckpoint ckpt = checkpoint();
    const Dataset gen = generate_corpus(ckpt, split().test, cfg_.model.variant, cfg_.generate_seed());
    write_dataset(paths_.generated(), gen, {hash_});
    out_ << "generate: " << gen.size() << " sequences (" << to_string(cfg_.model.variant) << ") -> "
         << paths_.generated().string() << "\n";
  }

  EvalReport build_report() {
    checkpoint();  // provenance: the model the corpus came from must match
    const Dataset gen = generated();
    const Dataset& real = split().test;
    const std::int64_t tz = cfg_.world.tz_offset_seconds;
    EvalReport r;
    r.config_hash = hash_;
    for (auto [domain, n] : {std::pair{PopularityDomain::app, cfg_.world.num_apps},
                             std::pair{PopularityDomain::category, cfg_.world.num_categories}}) {
      const auto entries = compare_popularity(user_activity(real, n, domain, tz), user_activity(gen, n, domain, tz));
      r.entries.insert(r.entries.end(), entries.begin(), entries.end());
    }
    const ItemsetTable rt = apriori(sessionize(real), cfg_.analysis.min_support);
    const ItemsetTable gt = apriori(sessionize(gen), cfg_.analysis.min_support);
    const ItemsetAgreement ia = itemset_agreement(rt, gt, cfg_.analysis.top_m);
    r.entries.push_back({"itemset_overlap", "app", ia.overlap});
    r.entries.push_back({"itemset_spearman", "app", ia.rank_correlation});
    r.entries.push_back({"cluster_ari", "location",
                         location_cluster_agreement(real, gen, cfg_.world.num_stations, cfg_.world.num_apps,
                                                    cfg_.analysis.k_clusters, cfg_.analysis_seed(), tz)});
    return r;
  }

  void evaluate() {
    if (fresh("evaluate", {paths_.metrics()})) return;
    const EvalReport r = build_report();
    write_metric_table(paths_.metrics(), r);
    out_ << "evaluate: " << r.entries.size() << " metrics -> " << paths_.metrics().string() << "\n";
  }

  void report() {
    const fs::path dir = paths_.report();
    if (fresh("report", {dir / "summary.txt"})) return;
    require(paths_.metrics(), "evaluate");
    const EvalReport metrics = read_metric_table(paths_.metrics());
    check_input(paths_.metrics(), metrics.config_hash);
    fs::create_directories(dir);
    const Dataset gen = generated();
    const Dataset& real = split().test;
    const std::int64_t tz = cfg_.world.tz_offset_seconds;

    write_metric_table(dir / "metrics.tsv", metrics);
    const auto real_profiles = hourly_profiles(real, PopularityDomain::category, tz);
    const auto gen_profiles = hourly_profiles(gen, PopularityDomain::category, tz);
    for (int c = 0; c < cfg_.world.num_categories; ++c) {
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(24);
      const auto r = real_profiles.find(c);
      const auto g = gen_profiles.find(c);
      write_profile(dir / ("hourly_real_category" + std::to_string(c) + ".tsv"),
                    r == real_profiles.end() ? zero : r->second, hash_);
      write_profile(dir / ("hourly_generated_category" + std::to_string(c) + ".tsv"),
                    g == gen_profiles.end() ? zero : g->second, hash_);
    }
    const ItemsetTable rt = apriori(sessionize(real), cfg_.analysis.min_support);
    const ItemsetTable gt = apriori(sessionize(gen), cfg_.analysis.min_support);
    write_itemset_table(dir / "itemsets_real.tsv", rt, cfg_.analysis.top_m, hash_);
    write_itemset_table(dir / "itemsets_generated.tsv", gt, cfg_.analysis.top_m, hash_);
    {
      std::ofstream cl(dir / "clustering.txt");
      cl << "#config_hash:" << hash_ << "\n";
      cl << "stations\t" << cfg_.world.num_stations << "\nk\t" << cfg_.analysis.k_clusters << "\nari\t"
         << metrics.value("cluster_ari", "location") << "\n";
    }
    if (cfg_.analysis.downstream) downstream(dir / "downstream.tsv");

    std::ofstream summary(dir / "summary.txt");
    summary << "#config_hash:" << hash_ << "\n\n[config]\n" << canonical_text(cfg_) << "\n[metrics]\n";
    summary.precision(6);
    for (const auto& e : metrics.entries) summary << e.metric << "\t" << e.domain << "\t" << e.value << "\n";
    if (!summary) throw Error("io-error", "cannot write " + (dir / "summary.txt").string());
    out_ << "report: -> " << dir.string() << "\n";
  }

  void downstream(const fs::path& path) {
    const EmbeddingTable apps = embedding(paths_.app_emb());
    const EmbeddingTable locations = embedding(paths_.location_emb());
    const ModelConfig mc = cfg_.model_config();
    const GeneratorFn generator = [&](const Dataset& a, const Dataset& a_prime) {
      const ModelCheckpoint ckpt = train(a, {}, apps, locations, mc);
      const std::uint64_t seed = derive_seed(cfg_.seed, "downstream-generate");
      return SyntheticPair{generate_corpus(ckpt, a, mc.variant, seed),
                           generate_corpus(ckpt, a_prime, mc.variant, splitmix64(seed))};
    };
    FrequencyPredictor freq(cfg_.world.num_apps);
    MarkovPredictor markov(cfg_.world.num_apps);
    const DownstreamReport rep = downstream_protocol(dataset(), generator, {&freq, &markov}, cfg_.world.num_apps,
                                                     derive_seed(cfg_.seed, "downstream"));
    std::ofstream out(path);
    out.precision(10);
    out << "#config_hash:" << hash_ << "\nexperiment\tpredictor\tk\taccuracy\tmrr\tndcg\trecall\tf1\n";
    for (const auto& row : rep.rows)
      for (const auto& s : row.scores)
        out << row.experiment << "\t" << row.predictor << "\t" << s.k << "\t" << s.accuracy << "\t" << s.mrr << "\t"
            << s.ndcg << "\t" << s.recall << "\t" << s.f1 << "\n";
  }

  RunConfig cfg_;
  std::string hash_;
  Paths paths_;
  bool force_;
  bool allow_mismatch_;
  std::ostream& out_;
  std::optional<Dataset> data_;
  std::optional<DatasetSplit> split_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& message) : Error("usage", message) {}
};

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || p != end) throw UsageError(origin + ": '" + text + "' is not a seed");
  return v;
}

void print_error(std::ostream& err, const std::string& tag, std::string message) {
  std::replace(message.begin(), message.end(), '\n', ' ');
  err << "appgen: error[" << tag << "]: " << message << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory-conditioned app usage generator"};
  app.name("appgen");
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string seed_text;
  std::string run_dir;
  bool force = false, allow_mismatch = false;
  std::vector<std::string> overrides;
  std::vector<std::string> commands = kStages;
  commands.push_back("pipeline");
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name, name == "pipeline" ? "run every stage in order" : "run the " + name + " stage");
    sub->add_option("-c,--config", config_path, "flat key = value config file");
    sub->add_option("--seed", seed_text, "global seed (beats APPGEN_SEED and key overrides)");
    sub->add_option("--run-dir", run_dir, "artifact directory (same as paths.run_dir=...)");
    sub->add_flag("--force", force, "recompute outputs even if present");
    sub->add_flag("--allow-hash-mismatch", allow_mismatch, "accept inputs produced by another config");
    sub->add_option("overrides", overrides, "key=value config overrides");
  }

  if (!args.empty() && args.front().rfind("-", 0) != 0 &&
      std::find(commands.begin(), commands.end(), args.front()) == commands.end()) {
    print_error(err, "usage", "unknown command '" + args.front() + "'");
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    print_error(err, "usage", e.what());
    return kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  try {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    if (const char* env = std::getenv("APPGEN_SEED")) cfg.seed = parse_seed(env, "APPGEN_SEED");
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + kv + "'");
      set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!seed_text.empty()) cfg.seed = parse_seed(seed_text, "--seed");
    if (!run_dir.empty()) cfg.run_dir = run_dir;
    cfg.validate();
  } catch (const Error& e) {
    print_error(err, e.tag(), e.what());
    return e.tag() == "missing-config" ? kExitFailure : kExitUsage;
  }

  try {
    Runner runner(cfg, force, allow_mismatch, out);
    if (command == "pipeline")
      for (const auto& s : kStages) runner.stage(s);
    else
      runner.stage(command);
  } catch (const Error& e) {
    print_error(err, e.tag(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace appgen
