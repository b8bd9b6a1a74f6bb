#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "egs/core.hpp"
#include "egs/neighborhood.hpp"
#include "egs/optimizer.hpp"
#include "egs/synth.hpp"

using namespace egs;

namespace {

Schedule quick_schedule(long total, double geom, double entropy, int interval) {
  Schedule s;
  s.total_iterations = total;
  s.geom_start_fraction = geom;
  s.entropy_start_fraction = entropy;
  s.knn_freeze_fraction = entropy;
  s.entropy_update_interval = interval;
  return s;
}

LossConfig sparsity_only() {
  LossConfig c;
  c.photometric = c.depth = c.normal = c.align = false;
  c.sparsity = true;
  return c;
}

TrainerOptions small_options(double eta_floor = 0.0) {
  TrainerOptions opt;
  opt.k = 3;
  opt.thresholds = ThresholdParams::defaults(0.03);
  opt.thresholds.eta_floor = eta_floor;
  return opt;
}

}  // namespace

TEST_CASE("Schedule: phase iteration arithmetic") {
  Schedule s;
  s.total_iterations = 3000;
  s.geom_start_fraction = 0.5;
  s.entropy_start_fraction = 2.0 / 3.0;
  s.knn_freeze_fraction = 2.0 / 3.0;
  s.validate();
  CHECK(s.geom_start_iteration() == 1500);
  CHECK(s.entropy_start_iteration() == 2000);
}

TEST_CASE("Schedule: validation rejects inconsistent phases") {
  Schedule s = quick_schedule(100, 0.5, 0.75, 10);
  CHECK_NOTHROW(s.validate());

  Schedule bad = s;
  bad.total_iterations = -1;
  CHECK_THROWS_AS(bad.validate(), UsageError);

  bad = s;
  bad.entropy_update_interval = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);

  bad = s;
  bad.geom_start_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), UsageError);

  bad = s;
  bad.geom_start_fraction = 0.9;  // after the entropy phase
  CHECK_THROWS_AS(bad.validate(), UsageError);

  bad = s;
  bad.knn_freeze_fraction = 0.7;  // decoupled from entropy start
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("Trainer: effective_config gates terms by phase without overriding masters") {
  const Scene scene = make_noisy_plane(12, 0.05, 3);
  LossConfig requested;
  requested.photometric = false;
  requested.align = false;
  requested.depth = requested.normal = requested.sparsity = true;

  Supervision sup;
  sup.cameras = {make_lookat_camera(Vec3(0, 0, 6), Vec3(0, 0, 0), Vec3(0, 1, 0), 40.0, 32, 32)};
  sup.rays.resize(1);  // one (empty) bundle matching the camera count

  Trainer trainer(scene, quick_schedule(12, 0.25, 0.5, 3), requested, sup, small_options());

  const LossConfig early = trainer.effective_config(0);
  CHECK_FALSE(early.depth);
  CHECK_FALSE(early.normal);
  CHECK_FALSE(early.sparsity);
  CHECK_FALSE(early.align);
  CHECK_FALSE(early.photometric);

  const LossConfig geom = trainer.effective_config(3);
  CHECK(geom.depth);
  CHECK(geom.normal);
  CHECK_FALSE(geom.sparsity);

  const LossConfig late = trainer.effective_config(6);
  CHECK(late.depth);
  CHECK(late.sparsity);
  CHECK_FALSE(late.align);  // master switch stays off
  CHECK_FALSE(late.photometric);
}

TEST_CASE("Trainer: graph freezes at the entropy phase and the cache ages cyclically") {
  const Scene scene = make_noisy_plane(12, 0.05, 5);
  Supervision sup;
  sup.cameras = {make_lookat_camera(Vec3(0, 0, 6), Vec3(0, 0, 0), Vec3(0, 1, 0), 40.0, 32, 32)};

  Trainer trainer(scene, quick_schedule(12, 0.25, 0.5, 3), sparsity_only(), sup,
                  small_options());

  CHECK_THROWS_AS(trainer.refresh_entropy_cache(), ContractError);

  for (int i = 0; i < 6; ++i) {
    const LossBreakdown out = trainer.step();
    CHECK(out.total == 0.0);  // nothing active before the entropy phase
    CHECK(trainer.graph() == nullptr);
    CHECK_FALSE(trainer.cache().valid);
  }

  // Iteration 6: the graph appears frozen and the cache fills.
  trainer.step();
  REQUIRE(trainer.graph() != nullptr);
  CHECK(trainer.graph()->frozen);
  CHECK(trainer.graph()->k == 3);
  CHECK(trainer.graph()->built_at_iteration == 6);
  CHECK(trainer.cache().valid);
  CHECK(trainer.cache().age == 1);
  CHECK(trainer.cache().entropies.size() == 12);
  CHECK(trainer.cache().eta.size() == 12);
  CHECK(trainer.cache().image_weights == std::vector<double>(12, 1.0));

  // Unconditional screen-space snapshots: one per camera, one per window.
  REQUIRE(trainer.cache().rendered_maps.size() == 1);
  REQUIRE(trainer.cache().rendered_maps[0].size() == 1);  // fallback window
  CHECK(trainer.cache().rendered_maps[0][0].width == 32);
  CHECK(trainer.cache().rendered_maps[0][0].height == 32);

  trainer.step();
  CHECK(trainer.cache().age == 2);
  trainer.step();  // age hits the interval and refreshes
  CHECK(trainer.cache().age == 0);

  // A refresh recomputes from the post-update scene.
  const auto fresh = neighborhood_entropy_all(trainer.current_scene(), *trainer.graph());
  CHECK(trainer.cache().entropies == fresh);

  // The graph stays the same object across refreshes.
  CHECK(trainer.graph()->built_at_iteration == 6);
}

TEST_CASE("Trainer: monitor rows track iteration, loss, and the descent functional") {
  const Scene scene = make_noisy_plane(10, 0.05, 11);
  Supervision sup;
  Trainer trainer(scene, quick_schedule(8, 0.0, 0.5, 4), sparsity_only(), sup,
                  small_options());
  for (int i = 0; i < 8; ++i) trainer.step();
  const auto& rows = trainer.monitor();
  REQUIRE(rows.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(rows[i].iteration == i);
    CHECK(rows[i].v == doctest::Approx(rows[i].total_loss + 0.1 * rows[i].mean_entropy)
                           .epsilon(1e-12));
  }
  // Entropy phase starts at 4: earlier rows carry no cached entropy.
  CHECK(rows[0].mean_entropy == 0.0);
  CHECK(rows[4].mean_entropy > 0.0);
}

TEST_CASE("Trainer: sparsity descent drives neighborhood entropy down") {
  const Scene scene = make_noisy_plane(16, 0.08, 7);
  Supervision sup;
  TrainerOptions opt = small_options(0.0);
  opt.learning_rates.opacity = 2.0;
  LossConfig config = sparsity_only();
  config.lambda_sparsity = 0.5;

  Trainer trainer(scene, quick_schedule(30, 0.0, 0.0, 5), config, sup, opt);
  trainer.step();
  const double initial = trainer.mean_cached_entropy();
  REQUIRE(initial > 0.0);
  for (int i = 1; i < 30; ++i) trainer.step();
  trainer.refresh_entropy_cache();
  CHECK(trainer.mean_cached_entropy() < initial);

  // Reparameterized updates keep every primitive inside its domain.
  for (const auto& p : trainer.current_scene().primitives) {
    CHECK(p.opacity > 0.0);
    CHECK(p.opacity < 1.0);
    CHECK(p.scale.minCoeff() > 0.0);
    CHECK(p.rotation.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("Trainer: constructor validates supervision against the loss config") {
  const Scene scene = make_noisy_plane(10, 0.05, 3);
  const Schedule sched = quick_schedule(10, 0.5, 0.5, 5);

  CHECK_THROWS_AS(Trainer(Scene{}, sched, sparsity_only(), Supervision{}, small_options()),
                  UsageError);

  LossConfig photo;
  photo.photometric = true;
  photo.depth = photo.normal = photo.sparsity = photo.align = false;
  CHECK_THROWS_AS(Trainer(scene, sched, photo, Supervision{}, small_options()), UsageError);

  Supervision cam_only;
  cam_only.cameras = {make_lookat_camera(Vec3(0, 0, 6), Vec3(0, 0, 0), Vec3(0, 1, 0), 40.0,
                                         32, 32)};
  CHECK_THROWS_AS(Trainer(scene, sched, photo, cam_only, small_options()), UsageError);

  LossConfig depth_only;
  depth_only.photometric = depth_only.normal = depth_only.sparsity = depth_only.align = false;
  depth_only.depth = true;
  // One camera but zero ray bundles.
  CHECK_THROWS_AS(Trainer(scene, sched, depth_only, cam_only, small_options()), UsageError);

  LossConfig align_only;
  align_only.photometric = align_only.depth = align_only.normal = align_only.sparsity = false;
  align_only.align = true;
  CHECK_THROWS_AS(Trainer(scene, sched, align_only, cam_only, small_options()), UsageError);

  TrainerOptions guided = small_options();
  guided.image_guidance = true;
  CHECK_THROWS_AS(Trainer(scene, sched, sparsity_only(), cam_only, guided), UsageError);
}

TEST_CASE("run_gradcheck: the quadratic self-test passes at machine precision") {
  const GradCheckReport report = run_gradcheck({"quadratic"}, 1, 5);
  CHECK(report.pass);
  REQUIRE(report.terms.count("quadratic") == 1);
  const GradCheckTermReport& term = report.terms.at("quadratic");
  CHECK(term.pass);
  CHECK(term.tolerance == 1e-10);
  CHECK(term.max_rel_error <= 1e-10);
  CHECK(report.seconds >= 0.0);
}

TEST_CASE("run_gradcheck: corrupted gradients are caught (negative control)") {
  const GradCheckReport report = run_gradcheck({"sparsity"}, 1, 5, true);
  CHECK_FALSE(report.pass);
  CHECK_FALSE(report.terms.at("sparsity").pass);
}

TEST_CASE("run_gradcheck: input validation") {
  CHECK_THROWS_AS(run_gradcheck({}, 1, 5), UsageError);
  CHECK_THROWS_AS(run_gradcheck({"sparsity"}, 0, 5), UsageError);
  CHECK_THROWS_AS(run_gradcheck({"mystery"}, 1, 5), UsageError);
}
