#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ddup/darn.hpp"
#include "ddup/datasets.hpp"
#include "ddup/detector.hpp"
#include "ddup/distill.hpp"
#include "ddup/forest.hpp"
#include "ddup/mdn.hpp"
#include "ddup/tvae.hpp"
#include "ddup/workload.hpp"
#include "test_support.hpp"

using namespace ddup;
using namespace ddup::testing;
namespace fs = std::filesystem;

namespace {

TrainConfig quick(int epochs = 10) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 64;
  tc.base_lr = 3e-3;
  return tc;
}

MdnModel trained_mdn(const Table& t, int epochs = 20) {
  MdnModel m(t.schema(), "x", "y", MdnConfig{4, {16}, 1e-3, 2.0, 1});
  train(m, t, quick(epochs));
  return m;
}

}  // namespace

TEST(Detector, ThresholdAndTies) {
  DetectorState st;
  st.boot_mean = 1.0;
  st.boot_std = 0.25;
  EXPECT_DOUBLE_EQ(st.threshold(), 0.5);
  EXPECT_EQ(test_mean_loss(st, 1.5).decision, Decision::ind);  // d == threshold stays IND
  EXPECT_EQ(test_mean_loss(st, 1.5001).decision, Decision::ood);
  EXPECT_EQ(test_mean_loss(st, -10.0).decision, Decision::ind);  // one-sided
  EXPECT_NEAR(test_mean_loss(st, 1.2).d, 0.2, 1e-15);
}

TEST(Detector, CalibrationShrinksWithResampleSize) {
  std::vector<double> losses;
  for (int i = 0; i < 1000; ++i) losses.push_back(i % 7);
  const auto small = calibrate_from_losses(losses, 4000, 10, 1);
  const auto large = calibrate_from_losses(losses, 4000, 160, 1);
  EXPECT_NEAR(small.boot_std / large.boot_std, 4.0, 0.4);  // 1 / sqrt(n) scaling
  EXPECT_NEAR(small.boot_mean, 3.0, 0.05);
  EXPECT_EQ(default_resample_size(48842), 488u);
  EXPECT_EQ(default_resample_size(10), 2u);
  EXPECT_THROW(calibrate_from_losses(losses, 1, 10, 1), Error);
  EXPECT_THROW(calibrate_from_losses({}, 10, 10, 1), Error);
  EXPECT_THROW(calibrate_from_losses(losses, 10, 0, 1), Error);
}

TEST(Detector, StateJsonRoundTrip) {
  DetectorState st{0.5, 0.1, 100, 32, 2.0, 3};
  const auto back = DetectorState::from_json(st.to_json());
  EXPECT_DOUBLE_EQ(back.boot_std, 0.1);
  EXPECT_EQ(back.resample_size, 32u);
  EXPECT_EQ(back.calibrated_at, 3);
}

TEST(Detector, PerturbationPoolIsGraded) {
  const auto t = datasets::make_census_like(1000, 2);
  const auto pool = perturbation_pool(t, {"age", "education"}, 0.1, 5);
  EXPECT_EQ(pool.row_count(), 200u);
  EXPECT_THROW(perturbation_pool(t, {}, 0.1, 5), Error);
  EXPECT_THROW(perturbation_pool(t, {"age"}, 0.0, 5), Error);
}

TEST(Detector, FlagsAShiftedMixture) {
  const auto base = datasets::make_mog(datasets::mog_base(), 1);
  auto m = trained_mdn(base, 10);
  const auto st = offline_calibrate(m, base, 500, 256, 3);
  const auto shifted = datasets::make_mog(datasets::mog_shifted(), 2);
  EXPECT_EQ(online_test(st, m, sample_rows(shifted, 256, 4)).decision, Decision::ood);
  const auto rates = evaluate_rates(st, m, base, shifted, 256, 50, 7);
  EXPECT_LE(rates.fpr, 0.1);
  EXPECT_EQ(rates.fnr, 0.0);
  EXPECT_THROW(evaluate_rates(st, m, base, shifted, 1u << 20, 5, 7), Error);
}

TEST(Distill, AlphaDefaultsToTheHistoryShare) {
  DistillConfig c;
  EXPECT_DOUBLE_EQ(resolve_alpha(c, 90, 10), 0.9);
  c.alpha = 0.3;
  EXPECT_DOUBLE_EQ(resolve_alpha(c, 90, 10), 0.3);
  DistillConfig bad;
  bad.lambda = 1.5;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_DOUBLE_EQ(fine_tune_lr(1e-3, 1000, 100), 1e-4);
  EXPECT_THROW(fine_tune_lr(1e-3, 0, 1), Error);
}

TEST(Distill, UpdateLowersTheObjectiveAndLeavesTheTeacher) {
  const auto base = mixed_table(400, 1);
  auto teacher = trained_mdn(base);
  const auto before = teacher.params();
  TransferSet tr{sample_rows(base, 40, 2), 0};
  const auto up_t = mixed_table(100, 3);
  InsertionBatch up{1, up_t};
  DistillConfig cfg;
  cfg.epochs = 15;
  const double alpha = resolve_alpha(cfg, 400, 100);
  const double start = total_update_loss(teacher, teacher, tr, up.data, alpha, cfg.lambda);
  const auto out = distill_update(teacher, tr, up, cfg, 400);
  EXPECT_EQ(out.branch, Branch::distill);
  EXPECT_EQ(teacher.params(), before);
  EXPECT_LT(total_update_loss(teacher, *out.new_model, tr, up.data, alpha, cfg.lambda), start);
  EXPECT_FALSE(out.loss_trace.empty());
  EXPECT_THROW(distill_update(teacher, TransferSet{Table(base.schema()), 0}, up, cfg, 400), Error);
}

TEST(Pipeline, InDistributionFineTunesAndDriftDistills) {
  const auto base = datasets::make_mog(datasets::mog_base(), 1);
  auto m = std::make_unique<MdnModel>(trained_mdn(base, 10));
  PipelineConfig cfg;
  cfg.distill.epochs = 2;
  cfg.train.epochs = 2;
  cfg.test_fraction = 1.0;
  cfg.resample_size = 256;
  auto s = start_pipeline(std::move(m), base, cfg);
  EXPECT_EQ(s.tr.data.row_count(), 1000u);

  const auto same = pipeline_step(s, {1, sample_rows(datasets::make_mog(datasets::mog_base(), 1), 256, 9)}, cfg);
  EXPECT_EQ(same.branch, Branch::fine_tune);
  const auto drift = pipeline_step(s, {2, sample_rows(datasets::make_mog(datasets::mog_shifted(), 2), 256, 9)}, cfg);
  EXPECT_EQ(drift.branch, Branch::distill);
  EXPECT_EQ(s.history_rows, 10512u);
  EXPECT_EQ(s.history.row_count(), 10512u);
  EXPECT_EQ(s.t, 2);
  EXPECT_EQ(s.detector.calibrated_at, 2);
  EXPECT_EQ(dynamic_cast<const MdnModel&>(*s.model).frequencies().total(), 10512);
  EXPECT_THROW(pipeline_step(s, {2, base.head(10)}, cfg), Error);
  EXPECT_THROW(pipeline_step(s, {3, Table(base.schema())}, cfg), Error);
}

TEST(Pipeline, HistoryCapKeepsASample) {
  const auto base = mixed_table(300, 1);
  PipelineConfig cfg;
  cfg.history_cap = 200;
  cfg.distill.epochs = 1;
  cfg.train.epochs = 1;
  auto s = start_pipeline(std::make_unique<MdnModel>(trained_mdn(base, 2)), base, cfg);
  EXPECT_EQ(s.history.row_count(), 200u);
  pipeline_step(s, {1, mixed_table(100, 2)}, cfg);
  EXPECT_EQ(s.history.row_count(), 200u);
  EXPECT_EQ(s.history_rows, 400u);
}

TEST(Mdn, CountSumAvgAgreeWithTheTable) {
  const auto t = mixed_table(3000, 5);
  auto m = trained_mdn(t, 40);
  const auto& ft = m.frequencies();
  EXPECT_EQ(ft.total(), 3000);
  Query q;
  q.filters = {{0, Op::eq, 1.0}, {1, Op::ge, -0.5}, {1, Op::le, 0.5}};
  EXPECT_LT(q_error(aqp_estimate(m, q), ground_truth(t, q)), 1.15);
  q.agg = Agg::avg;
  q.agg_column = 1;
  EXPECT_NEAR(aqp_estimate(m, q), ground_truth(t, q), 0.1);
  EXPECT_DOUBLE_EQ(aqp_count(m, ft, "k1", -3, 3), aqp_count(m, ft, "k1", -3, 3));
  EXPECT_NEAR(aqp_count(m, ft, "k1", -3, 3), static_cast<double>(ft.count(1)), 0.02 * ft.count(1));
  EXPECT_THROW(mdn_pdf(m, "zz", 0.0), Error);
  Query bad;
  bad.filters = {{1, Op::ge, 0.0}};
  EXPECT_THROW(aqp_estimate(m, bad), Error);
}

TEST(Darn, EstimatesAreDeterministicAndExactWithoutFilters) {
  const auto t = three_cat_table(500, 4);
  DarnModel m(t, DarnConfig{{16}, 2.0, 1});
  train(m, t, quick(20));
  EXPECT_DOUBLE_EQ(m.row_count(), 500.0);
  Query all;
  EXPECT_DOUBLE_EQ(ce_estimate(m, all, 10, 1), 500.0);
  Query q;
  q.filters = {{0, Op::eq, 1.0}, {2, Op::eq, 2.0}};
  EXPECT_DOUBLE_EQ(ce_estimate(m, q, 200, 5), ce_estimate(m, q, 200, 5));
  EXPECT_LT(q_error(ce_estimate(m, q, 500, 5), ground_truth(t, q)), 1.5);
  EXPECT_EQ(ce_estimate(m, q, 1, 5), std::ceil(ce_estimate(m, q, 1, 5)));
  EXPECT_THROW(ce_estimate(m, q, 0, 5), Error);
  m.absorb_metadata(t.head(100));
  EXPECT_DOUBLE_EQ(m.row_count(), 600.0);
}

TEST(Tvae, SamplesStayInsideTheSchema) {
  const auto t = datasets::make_census_like(500, 3);
  TvaeModel m(t, TvaeConfig{8, {32}, 0.01, false, 2});
  train(m, t, quick(3));
  const auto s = sample_rows(m, 200, 4);
  EXPECT_EQ(s.row_count(), 200u);
  EXPECT_EQ(s.schema(), t.schema());
  const auto again = sample_rows(m, 200, 4);
  EXPECT_EQ(s.row(17), again.row(17));
}

TEST(Checkpoint, RoundTripEveryFamily) {
  const auto dir = fs::temp_directory_path() / "ddup_ckpt";
  fs::create_directories(dir);
  const auto mixed = mixed_table(100, 1);
  const auto cats = three_cat_table(100, 2);
  std::vector<ModelPtr> models;
  models.push_back(std::make_unique<MdnModel>(trained_mdn(mixed, 2)));
  models.push_back(std::make_unique<DarnModel>(cats, DarnConfig{{8}, 2.0, 1}));
  models.push_back(std::make_unique<TvaeModel>(mixed, TvaeConfig{2, {8}, 0.01, false, 1}));
  for (const auto& m : models) {
    const auto path = (dir / (m->arch() + ".json")).string();
    save_model(*m, path);
    const auto back = load_model(path);
    EXPECT_EQ(back->arch(), m->arch());
    EXPECT_EQ(back->params(), m->params());
    const auto& data = m->arch() == "darn" ? cats : mixed;
    EXPECT_EQ(back->per_example_loss(data), m->per_example_loss(data));
  }
  std::ofstream(dir / "broken.json") << "{\"format\": \"ddup-checkpoint\", \"version\": 1, \"arch\": \"mdn\"}";
  EXPECT_THROW(load_model((dir / "broken.json").string()), Error);
  std::ofstream(dir / "junk.json") << "not json";
  EXPECT_THROW(load_model((dir / "junk.json").string()), Error);
  EXPECT_THROW(params_from_json(nlohmann::json::array({1.0, 2.0}), 3), Error);
  fs::remove_all(dir);
}

TEST(Training, RejectsBadInputsAndStopsEarly) {
  const auto t = mixed_table(200, 1);
  MdnModel m(t.schema(), "x", "y");
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(train(m, t, bad), Error);
  EXPECT_THROW(train(m, Table(t.schema()), quick()), Error);
  EXPECT_THROW(train(m, three_cat_table(10, 1), quick()), Error);
  TrainConfig tc = quick(200);
  tc.early_stop_tol = 0.5;
  EXPECT_LT(train(m, t, tc).epoch_loss.size(), 200u);
}

TEST(Forest, LearnsASimpleRule) {
  const auto t = three_cat_table(2000, 8);
  const auto train_t = t.head(1500);
  std::vector<std::size_t> rest(500);
  for (std::size_t i = 0; i < 500; ++i) rest[i] = 1500 + i;
  const auto test_t = t.take(rest);
  const auto f = RandomForest::fit(train_t, 1);
  const auto pred = f.predict(test_t);
  std::vector<std::int32_t> truth(test_t.codes(1).begin(), test_t.codes(1).end());
  EXPECT_GT(micro_f1(truth, pred), 0.7);  // b copies a 70%+ of the time
  EXPECT_THROW(RandomForest::fit(mixed_table(10, 1), 1), Error);
  EXPECT_DOUBLE_EQ(micro_f1(std::vector<std::int32_t>{1, 2, 3}, std::vector<std::int32_t>{1, 0, 3}), 2.0 / 3.0);
  const auto fid = fidelity_eval(train_t, train_t, test_t, "b");
  EXPECT_DOUBLE_EQ(fid.f1_real, fid.f1_synth);
}
