#include <doctest.h>

#include "descatter3d/config.hpp"
#include "descatter3d/errors.hpp"

using namespace descatter3d;

TEST_CASE("defaults carry the published hyperparameters") {
  const PipelineConfig cfg = PipelineConfig::defaults();

  const DatasetConfig d = cfg.dataset();
  CHECK(d.cubes_per_volume == 134);
  CHECK(d.cube_dims == std::array<int, 3>{128, 128, 64});
  CHECK(d.train_fraction == 0.95);

  const NetworkConfig n = cfg.network();
  CHECK(n.n_stages == 4);
  CHECK(n.input_dims == std::array<int, 3>{128, 128, 64});

  const TrainConfig t = cfg.train();
  CHECK(t.max_epochs == 30);
  CHECK(t.steps_per_epoch == 300);
  CHECK(t.batch_size == 3);
  CHECK(t.lr == 1e-4);

  const SpineCriteria c = cfg.eval_criteria();
  CHECK(c.min_protrusion_um == 0.75);
  CHECK(c.min_consecutive_planes == 2);
}

TEST_CASE("config echo is byte-idempotent") {
  const PipelineConfig a = PipelineConfig::defaults();
  const std::string once = a.echo();
  const PipelineConfig b = PipelineConfig::from_text(once);
  CHECK(b.echo() == once);

  const PipelineConfig c = PipelineConfig::from_text(R"({"noise": {"gain": 123.5}})");
  const std::string echoed = c.echo();
  CHECK(PipelineConfig::from_text(echoed).echo() == echoed);
  CHECK(c.noise().gain == 123.5);
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK_THROWS_WITH_AS(PipelineConfig::from_text(R"({"scatter": {"ell_sx": 1.0}})"),
                       "config: unknown key 'scatter.ell_sx'", ConfigError);
  CHECK_THROWS_WITH_AS(PipelineConfig::from_text(R"({"bogus": {}})"),
                       "config: unknown key 'bogus'", ConfigError);
}

TEST_CASE("type mismatches are rejected") {
  CHECK_THROWS_AS(PipelineConfig::from_text(R"({"noise": {"gain": "high"}})"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_text(R"({"phantom": {"dims": 12}})"), ConfigError);
}

TEST_CASE("dataset sources are validated") {
  const std::string good =
      R"({"dataset": {"sources": [{"truth": "a.dvol", "input": "b.dvol"}]}})";
  const PipelineConfig cfg = PipelineConfig::from_text(good);
  REQUIRE(cfg.dataset().sources.size() == 1);
  CHECK(cfg.dataset().sources[0].first == "a.dvol");

  CHECK_THROWS_AS(
      PipelineConfig::from_text(R"({"dataset": {"sources": [{"truth": "a.dvol"}]}})"),
      ConfigError);
  CHECK_THROWS_AS(
      PipelineConfig::from_text(
          R"({"dataset": {"sources": [{"truth": "a", "input": "b", "extra": 1}]}})"),
      ConfigError);
}

TEST_CASE("dotted overrides") {
  PipelineConfig cfg = PipelineConfig::defaults();
  cfg.apply_override("scatter.ell_s_um=42.5");
  CHECK(cfg.scatter().ell_s == 42.5);

  cfg.apply_override("tiling.blend=hann");
  CHECK(cfg.tiling().blend == BlendMode::kHann);

  cfg.apply_override("phantom.dims=[64,64,16]");
  CHECK(cfg.phantom().dims == std::array<int, 3>{64, 64, 16});

  CHECK_THROWS_AS(cfg.apply_override("scatter.nope=1"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("scatter.ell_s_um=fast"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("justakey"), ConfigError);
}

TEST_CASE("validation errors name the key path on bad values") {
  PipelineConfig cfg = PipelineConfig::defaults();
  cfg.apply_override("phantom.dims=[64,64]");
  CHECK_THROWS_WITH_AS(cfg.phantom(), "config: 'phantom.dims' must have three entries",
                       ConfigError);
}
