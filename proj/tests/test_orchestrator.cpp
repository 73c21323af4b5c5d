#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>

#include "appgen/common.hpp"
#include "appgen/optim.hpp"
#include "appgen/orchestrator.hpp"

using namespace appgen;
namespace fs = std::filesystem;

namespace {

struct Tiny {
  World world;
  DatasetSplit split;
  EmbeddingTable apps;
  EmbeddingTable locations;
  ModelConfig config;

  Tiny() {
    WorldSpec spec;
    spec.num_users = 16;
    spec.num_apps = 6;
    spec.num_stations = 5;
    spec.num_regions = 2;
    spec.num_business_areas = 2;
    spec.num_pois = 4;
    spec.num_categories = 2;
    spec.horizon_days = 2;
    world = generate_world(spec);
    split = split_dataset(world.data, {0.6, 0.2, 0.2}, 4);
    apps = {EmbeddingDomain::app, Eigen::MatrixXd::Random(6, 6)};
    locations = {EmbeddingDomain::location, Eigen::MatrixXd::Random(4, 5)};
    config.window = 4;
    config.attn_dim = 5;
    config.value_dim = 4;
    config.diffusion_steps = 8;
    config.channels = 4;
    config.blocks = 2;
    config.step_hidden = 8;
    config.batch_size = 16;
    config.epochs = 2;
  }
};

const Tiny& tiny() {
  static const Tiny t;
  return t;
}

const ModelCheckpoint& tiny_model() {
  static const ModelCheckpoint m = [] {
    auto c = train(tiny().split.train, tiny().split.validation, tiny().apps, tiny().locations, tiny().config);
    c.app_category = tiny().world.app_category;
    return c;
  }();
  return m;
}

std::string error_tag(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.tag();
  }
  return "";
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("appgen_test_" + name); }

}  // namespace

TEST_CASE("standardized table puts centered apps on one sphere") {
  EmbeddingTable t{EmbeddingDomain::app, Eigen::MatrixXd::Random(5, 9).array() + 3.0};
  const auto s = standardize_table(t);
  const Eigen::MatrixXd centered = t.vectors.colwise() - t.vectors.rowwise().mean();
  for (Eigen::Index a = 0; a < 9; ++a) {
    CHECK(s.vectors.col(a).squaredNorm() == doctest::Approx(5.0));
    CHECK(s.vectors.col(a).normalized().dot(centered.col(a).normalized()) == doctest::Approx(1.0));
  }
  CHECK(s.vectors.squaredNorm() / s.vectors.size() == doctest::Approx(1.0));
}

TEST_CASE("ablation names and config validation") {
  for (auto v : {AblationVariant::full, AblationVariant::no_spatial, AblationVariant::no_history,
                 AblationVariant::no_current_context})
    CHECK(ablation_from_string(to_string(v)) == v);
  CHECK(error_tag([] { ablation_from_string("no_time"); }) == "invalid-config");
  ModelConfig c;
  c.beta_end = 1.0;
  CHECK(error_tag([&] { c.validate(); }) == "invalid-config");
  c = {};
  c.lambda_alpha = 1.5;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("lambda_alpha"));
}

TEST_CASE("training is deterministic and keeps the best epoch") {
  const auto& t = tiny();
  const auto& a = tiny_model();
  const auto b = train(t.split.train, t.split.validation, t.apps, t.locations, t.config);
  CHECK(flatten(a.denoiser) == flatten(b.denoiser));
  CHECK(flatten(a.attention) == flatten(b.attention));
  const auto& m = a.metadata;
  CHECK(m.epochs_run == 2);
  REQUIRE(m.validation_loss.size() == 3u);
  const auto best = std::min_element(m.validation_loss.begin(), m.validation_loss.end()) - m.validation_loss.begin();
  CHECK(m.best_epoch == best);
  for (double l : m.train_loss) CHECK(std::isfinite(l));
  CHECK(a.apps.vectors.colwise().squaredNorm().maxCoeff() == doctest::Approx(t.apps.dim()));
}

TEST_CASE("training input errors") {
  const auto& t = tiny();
  CHECK(error_tag([&] { train({}, {}, t.apps, t.locations, t.config); }) == "empty-split");
  EmbeddingTable few_locations{EmbeddingDomain::location, Eigen::MatrixXd::Random(4, 2)};
  CHECK(error_tag([&] { train(t.split.train, {}, t.apps, few_locations, t.config); }) == "unknown-location");
  EmbeddingTable few_apps{EmbeddingDomain::app, Eigen::MatrixXd::Random(6, 2)};
  CHECK(error_tag([&] { train(t.split.train, {}, few_apps, t.locations, t.config); }) == "missing-embedding");
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto& m = tiny_model();
  const auto path = temp_file("model.ckpt");
  save_checkpoint(m, path);
  const auto back = load_checkpoint(path);
  CHECK(flatten(back.denoiser) == flatten(m.denoiser));
  CHECK(flatten(back.attention) == flatten(m.attention));
  CHECK(back.apps.vectors == m.apps.vectors);
  CHECK(back.locations.vectors == m.locations.vectors);
  CHECK(back.schedule.alpha_bar == m.schedule.alpha_bar);
  CHECK(back.config_text == m.config_text);
  CHECK(back.config.window == m.config.window);
  CHECK(back.app_category == m.app_category);
  CHECK(back.metadata.validation_loss == m.metadata.validation_loss);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  write(bytes.substr(0, bytes.size() / 2));
  CHECK(error_tag([&] { load_checkpoint(path); }) == "corrupt-checkpoint");
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x5a;
  write(flipped);
  CHECK(error_tag([&] { load_checkpoint(path); }) == "corrupt-checkpoint");
  std::string versioned = bytes;
  versioned[8] = 99;
  write(versioned);
  CHECK(error_tag([&] { load_checkpoint(path); }) == "checkpoint-version");

  ModelCheckpoint wrong = m;
  wrong.config_hash ^= 1;
  save_checkpoint(wrong, path);
  CHECK(error_tag([&] { load_checkpoint(path); }) == "config-hash-mismatch");
  fs::remove(path);
  CHECK(error_tag([&] { load_checkpoint(path); }) == "missing-checkpoint");
}

TEST_CASE("corpus generation equals per-sequence generation") {
  const auto& m = tiny_model();
  const auto& test = tiny().split.test;
  const auto corpus = generate_corpus(m, test, AblationVariant::full, 99);
  REQUIRE(corpus.size() == test.size());
  for (std::size_t s = 0; s < test.size(); ++s) {
    const auto single = generate_sequence(m, test[s].trajectory(), AblationVariant::full, sequence_seed(99, s));
    CHECK(corpus[s].apps() == single);
    CHECK(corpus[s].trajectory().size() == test[s].trajectory().size());
    for (std::size_t i = 0; i < test[s].events.size(); ++i) {
      CHECK(corpus[s].events[i].timestamp == test[s].events[i].timestamp);
      CHECK(corpus[s].events[i].location_id == test[s].events[i].location_id);
      CHECK(corpus[s].events[i].category_id == m.app_category[corpus[s].events[i].app_id]);
    }
  }
  CHECK(generate_corpus(m, test, AblationVariant::full, 99) == corpus);
}

TEST_CASE("generation never reads ahead and masks are exact zeros") {
  const auto& m = tiny_model();
  const auto& seq = tiny().split.test.front();
  const auto traj = seq.trajectory();
  const int loc_dim = m.locations.dim();
  for (auto v : {AblationVariant::full, AblationVariant::no_spatial, AblationVariant::no_history,
                 AblationVariant::no_current_context}) {
    GenerationTrace trace;
    const auto apps = generate_sequence(m, traj, v, 5, &trace);
    REQUIRE(trace.conditions.size() == traj.size());
    for (std::size_t i = 1; i <= traj.size(); ++i) {
      const auto& log = trace.window_reads[i - 1];
      for (int j : log.point_reads) CHECK(j < static_cast<int>(i));
      for (int j : log.app_reads) CHECK(j < static_cast<int>(i));
      for (int j : trace.context_reads[i - 1]) CHECK(j == static_cast<int>(i));
      const auto& c = trace.conditions[i - 1];
      if (v == AblationVariant::no_history) CHECK(c.history.isZero(0.0));
      if (v == AblationVariant::no_current_context) CHECK(c.context.isZero(0.0));
      if (v == AblationVariant::no_spatial) CHECK(c.context.tail(loc_dim).isZero(0.0));
      if (v == AblationVariant::full) CHECK_FALSE(c.context.tail(loc_dim).isZero(0.0));
    }
    for (int a : apps) {
      CHECK(a >= 0);
      CHECK(a < m.apps.size());
    }
  }
}

TEST_CASE("generation rejects unknown locations") {
  Trajectory traj = {{100, 0}, {200, 42}};
  CHECK(error_tag([&] { generate_sequence(tiny_model(), traj, AblationVariant::full, 1); }) == "unknown-location");
}
