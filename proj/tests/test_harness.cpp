#include <numbers>

#include "rfn/ablation.hpp"
#include "rfn/harness.hpp"
#include "rfn/rotation.hpp"
#include "test_util.hpp"

using namespace rfn;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.channels = {4, 8};
  s.image_size = 16;
  s.rfn.n = 4;
  s.rfn.r = 4;
  return s;
}

Dataset small_data(std::uint64_t seed, std::size_t size, double noise = 0.1) {
  return gen_dataset(seed, size, 4, OrientationPolicy::UniformRandom, noise, 16);
}

TrainOptions quick_opts(std::size_t epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = 16;
  return o;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("zero epochs leaves the model at its initialization") {
    const auto spec = small_spec();
    auto r = train(spec, small_data(1, 32), quick_opts(0), 7);
    CHECK(r.report.history.empty());
    // train() seeds the model from the first draw of the run seed.
    Rng rng(7);
    Model<float> fresh(spec, rng.next());
    REQUIRE(r.model.values().size() == fresh.values().size());
    for (std::size_t i = 0; i < fresh.values().size(); ++i)
      CHECK(test::bitwise_equal(r.model.values()[i], fresh.values()[i]));
  }

  TEST_CASE("epoch-mean loss decreases on a small set") {
    TrainOptions opts;
    opts.epochs = 5;
    const auto data = gen_dataset(1000, 256, 4, OrientationPolicy::AxisAlignedOnly, 0.1);
    auto r = train(ModelSpec{}, data, opts, 1);
    REQUIRE(r.report.history.size() == 5);
    for (std::size_t e = 1; e < 5; ++e) {
      CAPTURE(e);
      CHECK(r.report.history[e].loss_total < r.report.history[e - 1].loss_total);
    }
  }

  TEST_CASE("history records the decayed learning rate") {
    auto opts = quick_opts(3);
    opts.lr_decay_every = 1;
    auto r = train(small_spec(), small_data(2, 32), opts, 3);
    for (std::size_t e = 0; e < 3; ++e) {
      CHECK(r.report.history[e].epoch == e);
      CHECK(r.report.history[e].learning_rate == doctest::Approx(0.01 * std::pow(0.95, e)));
    }
  }

  TEST_CASE("repeat runs are bitwise identical") {
    const auto data = small_data(4, 64);
    auto a = train(small_spec(), data, quick_opts(2), 11);
    auto b = train(small_spec(), data, quick_opts(2), 11);
    CHECK(a.report.history == b.report.history);
    for (std::size_t i = 0; i < a.model.values().size(); ++i)
      CHECK(test::bitwise_equal(a.model.values()[i], b.model.values()[i]));
    CHECK(metrics_history_csv(a.report) == metrics_history_csv(b.report));
  }

  TEST_CASE("one epoch moves every connected parameter and no other") {
    auto spec = small_spec();
    spec.rfn.uniform_weights = true;  // gate has no gradient path
    Rng rng(5);
    Model<float> init(spec, rng.next());
    auto r = train(spec, small_data(5, 32), quick_opts(1), 5);
    for (std::size_t i = 0; i < init.names().size(); ++i) {
      CAPTURE(init.names()[i]);
      const bool same = test::bitwise_equal(init.values()[i], r.model.values()[i]);
      CHECK(same == init.names()[i].starts_with("rfn."));
    }
  }

  TEST_CASE("divergence is reported with its location") {
    auto opts = quick_opts(2);
    opts.learning_rate = 1e30;
    try {
      train(small_spec(), small_data(6, 64), opts, 1);
      FAIL("expected divergence");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("diverged at epoch") != std::string::npos);
    }
  }

  TEST_CASE("param_total is the sum of its parts") {
    for (bool rfn_on : {true, false}) {
      auto spec = small_spec();
      spec.use_rfn = rfn_on;
      Model<float> m(spec, 1);
      CHECK(m.param_total() == m.rfn_param_count() + m.backbone_param_count() + m.head_param_count());
      CHECK((m.rfn_param_count() > 0) == rfn_on);
      auto r = train(spec, small_data(1, 16), quick_opts(0), 1);
      CHECK(r.report.param_total == m.param_total());
    }
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("pure and repeatable") {
    auto r = train(small_spec(), small_data(1, 64), quick_opts(1), 2);
    const auto before = r.model.values();
    const auto test_set = small_data(9, 40);
    auto a = evaluate(r.model, test_set, LossConfig{});
    auto b = evaluate(r.model, test_set, LossConfig{});
    a.wall_time = b.wall_time = 0;
    CHECK(a == b);
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(test::bitwise_equal(before[i], r.model.values()[i]));
  }

  TEST_CASE("untrained accuracy sits near chance") {
    const auto test_set = small_data(10, 200);
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Model<float> m(small_spec(), seed);
      sum += evaluate(m, test_set, LossConfig{}).accuracy;
    }
    CHECK(sum / 10 >= 0.15);
    CHECK(sum / 10 <= 0.35);
  }

  TEST_CASE("invariance score bounds") {
    const auto test_set = small_data(11, 24, 0.0);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Model<float> m(small_spec(), seed);
      const auto rep = evaluate(m, test_set, LossConfig{});
      CHECK(rep.invariance_score >= 0.0);
      CHECK(rep.invariance_score <= 2.0);
      CHECK(rep.angular_mae >= 0.0);
      CHECK(rep.angular_mae <= std::numbers::pi);
    }
    auto spec = small_spec();
    spec.rfn.uniform_weights = true;
    Model<float> m(spec, 4);
    CHECK(evaluate(m, test_set, LossConfig{}).invariance_score < 1e-4);
  }

  TEST_CASE("angular error wraps around the circle") {
    CHECK(angular_error(0.1, 2 * std::numbers::pi - 0.1) == doctest::Approx(0.2));
    CHECK(angular_error(std::numbers::pi, 0.0) == doctest::Approx(std::numbers::pi));
    CHECK(angular_error(1.0, 1.0) == 0.0);
    CHECK(angular_error(-std::numbers::pi / 2, 3 * std::numbers::pi / 2) == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("metrics json round trip") {
    MetricsReport r;
    r.accuracy = 0.1 + 0.2;
    r.angular_mae = 1.0 / 3.0;
    r.invariance_score = 1e-300;
    r.param_total = 12345;
    r.wall_time = 2.5;
    r.history.push_back({0, 0.01, 1.5, 1.2, 0.3, 1e-7, 0.25});
    r.history.push_back({1, 0.0095, 1.25, 1.0, 0.25, 2e-7, 0.5});
    CHECK(metrics_from_json(metrics_to_json(r)) == r);
    CHECK_THROWS_AS(metrics_from_json("{not json"), FormatError);
  }

  TEST_CASE("history csv layout") {
    MetricsReport r;
    r.history.push_back({0, 0.01, 1.5, 1.25, 0.25, 0.0, 0.5});
    const auto csv = metrics_history_csv(r);
    CHECK(csv.starts_with("epoch,learning_rate,loss_total,loss_cls,loss_reg,loss_ri,train_accuracy\n"));
    CHECK(csv.find("\n0,") != std::string::npos);
  }
}

TEST_SUITE("grad_check_model") {
  TEST_CASE("full loss at 64-bit") {
    TrainOptions opts;
    auto spec = small_spec();
    spec.image_size = 8;
    spec.channels = {2, 3};
    spec.strides = {2, 1};
    spec.rfn.r = 2;
    for (auto pool : {PoolMode::Max, PoolMode::Avg})
      for (auto res : {ResumeMode::Sum, ResumeMode::Max}) {
        spec.rfn.pooling = pool;
        spec.rfn.resume = res;
        auto rep = grad_check_model(spec, opts, 2, 17, 0.5);
        CHECK(rep.kinks * 100 <= rep.checked);
        INFO(rep.summary());
        CHECK(rep.max_rel_error < 1e-4);
      }
  }
}

TEST_SUITE("ablation") {
  RunConfig tiny_run() {
    RunConfig rc;
    rc.model = small_spec();
    rc.ablate.r = {4};
    rc.ablate.n = {4};
    rc.ablate.pooling = {PoolMode::Max};
    rc.ablate.resume = {ResumeMode::Sum};
    rc.ablate.insertion_stage = {2};
    rc.ablate.passthrough_row = false;
    rc.ablate.seeds = {1};
    return rc;
  }

  TEST_CASE("a single-point grid yields one row") {
    auto cases = expand_grid(tiny_run());
    REQUIRE(cases.size() == 1);
    CHECK(cases[0].is_baseline);
    auto rows = run_ablation(cases, quick_opts(1), small_data(1, 16), small_data(2, 8), 1);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].metrics.param_total == Model<float>(rows[0].config.model, 1).param_total());
  }

  TEST_CASE("one axis at a time plus pass-through") {
    auto rc = tiny_run();
    rc.ablate.n = {2, 4, 6};
    rc.ablate.resume = {ResumeMode::Sum, ResumeMode::Max};
    rc.ablate.passthrough_row = true;
    rc.ablate.seeds = {1, 2};
    auto cases = expand_grid(rc);
    // baseline, n=2, n=6, resume=max, passthrough; twice.
    REQUIRE(cases.size() == 10);
    CHECK(cases[0].axis == "baseline");
    CHECK(cases[4].axis == "passthrough");
    CHECK_FALSE(cases[4].model.use_rfn);
    CHECK(cases[5].seed == 2);
    rc.ablate.product = true;
    CHECK(expand_grid(rc).size() == 2 * (3 * 2 + 1));
  }

  TEST_CASE("invalid grid values name the axis") {
    auto rc = tiny_run();
    rc.ablate.r = {3};  // 4 * 8 channels not divisible by 3
    try {
      expand_grid(rc);
      FAIL("expected an error");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("r") != std::string::npos);
    }
    rc = tiny_run();
    rc.ablate.insertion_stage = {3};
    CHECK_THROWS_AS(expand_grid(rc), InvalidArgument);
  }

  TEST_CASE("threaded runs keep grid order and results") {
    auto rc = tiny_run();
    rc.ablate.n = {2, 4, 6};
    rc.ablate.passthrough_row = true;
    auto cases = expand_grid(rc);
    const auto tr = small_data(1, 16), te = small_data(2, 8);
    auto serial = run_ablation(cases, quick_opts(1), tr, te, 1);
    auto threaded = run_ablation(cases, quick_opts(1), tr, te, 3);
    REQUIRE(serial.size() == threaded.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(serial[i].config.axis == threaded[i].config.axis);
      CHECK(serial[i].config.model.rfn.n == threaded[i].config.model.rfn.n);
      auto a = serial[i].metrics, b = threaded[i].metrics;
      a.wall_time = b.wall_time = 0;
      CHECK(a == b);
    }
    const auto csv = ablation_csv(serial);
    CHECK(csv.starts_with(ablation_csv_header()));
  }
}
