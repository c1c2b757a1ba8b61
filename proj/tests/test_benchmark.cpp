#include <gtest/gtest.h>

#include <sstream>

#include "prnu/benchmark.hpp"
#include "prnu/simulator.hpp"

using namespace prnu;

namespace {

sim::SimConfig small_sim() {
  sim::SimConfig c;
  c.n_sensors = 6;
  c.image_size = {64, 64};
  c.images_per_view = 7;
  c.n_refs = 5;
  return c;
}

BenchmarkConfig small_bench() {
  BenchmarkConfig b;
  b.pipeline.resolutions = ResolutionSpec::parse("48x48,64x64");
  return b;
}

bool owns(const GalleryEntry& g, const Query& q) { return q.query_id.rfind(g.sensor_id + "/", 0) == 0; }

}  // namespace

TEST(RunBenchmark, OracleScorerIsPerfect) {
  const auto cfg = small_sim();
  const auto m = sim::plan_dataset(cfg);
  sim::SimulatedImageSource src(cfg);
  const PairScorer oracle = [](const GalleryEntry& g, const Query& q) {
    ScoreRecord r;
    r.ncc = owns(g, q) ? 1.0 : 0.0;
    r.fused = *r.ncc;
    return r;
  };
  const auto rep = run_benchmark(m, src, small_bench(), nullptr, nullptr, oracle);
  EXPECT_EQ(rep.metrics.auc, 1.0);
  EXPECT_EQ(rep.metrics.eer, 0.0);
  EXPECT_EQ(rep.metrics.top1, 100.0);
  EXPECT_EQ(rep.metrics.top5_k, 3);  // gallery of 3 eval devices
  EXPECT_EQ(rep.rankings.size(), 3u * 7);
  for (const auto& [d, auc] : rep.per_device_auc) EXPECT_EQ(auc, 1.0);
}

TEST(RunBenchmark, ConstantScorerIsChance) {
  const auto cfg = small_sim();
  const auto m = sim::plan_dataset(cfg);
  sim::SimulatedImageSource src(cfg);
  const PairScorer flat = [](const GalleryEntry&, const Query&) {
    ScoreRecord r;
    r.ncc = 0.0;
    return r;
  };
  const auto rep = run_benchmark(m, src, small_bench(), nullptr, nullptr, flat);
  EXPECT_EQ(rep.metrics.auc, 0.5);
  EXPECT_EQ(rep.metrics.eer, 0.5);
}

TEST(RunBenchmark, AccessLogRespectsViews) {
  const auto cfg = small_sim();
  const auto m = sim::plan_dataset(cfg);
  sim::SimulatedImageSource src(cfg);
  const auto rep = run_benchmark(m, src, small_bench());
  std::size_t refs = 0, queries = 0;
  for (const auto& e : src.access_log()) {
    EXPECT_NE(e.purpose, AccessPurpose::training);
    if (e.purpose == AccessPurpose::reference) {
      EXPECT_EQ(e.view, 1);
      EXPECT_EQ(e.role, Role::reference);
      ++refs;
    } else {
      EXPECT_EQ(e.view, 2);
      EXPECT_EQ(e.role, Role::test);
      ++queries;
    }
  }
  EXPECT_EQ(refs, m.eval_devices.size() * 5);
  EXPECT_EQ(queries, m.eval_devices.size() * 7);
  EXPECT_EQ(rep.protocol["n_refs"], 5);
  EXPECT_EQ(rep.protocol["pairing"], "all_pairs");
  EXPECT_LE(rep.metrics.top1, rep.metrics.top5);
}

TEST(RunBenchmark, JointReportCarriesAblation) {
  const auto cfg = small_sim();
  const auto m = sim::plan_dataset(cfg);
  sim::SimulatedImageSource src(cfg);
  auto b = small_bench();
  b.mode = ScoreMode::joint;
  EXPECT_THROW(run_benchmark(m, src, b), InvalidArgument);
  const auto model = neural::ComparatorModel::initialized({{4, 8}}, 1);
  const auto rep = run_benchmark(m, src, b, &model);
  std::vector<std::string> names;
  for (const auto& [n, mm] : rep.ablation) names.push_back(n);
  EXPECT_EQ(names, (std::vector<std::string>{"ncc_single", "ncc_multires", "neural_single", "neural_multires",
                                             "joint_single", "joint_multires"}));
  EXPECT_EQ(rep.ablation.back().second.auc, rep.metrics.auc);
  const auto j = report_to_json(rep);
  for (const char* k : {"metrics", "protocol", "per_device_auc", "ablation", "roc_points"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["protocol"]["mode"], "joint");
}

TEST(RunBenchmark, PerQueryPairingAveragesQueries) {
  const auto cfg = small_sim();
  const auto m = sim::plan_dataset(cfg);
  sim::SimulatedImageSource src(cfg);
  auto b = small_bench();
  b.pairing = Pairing::per_query;
  const auto rep = run_benchmark(m, src, b);
  double auc = 0;
  for (std::size_t q = 0; q < rep.rankings.size(); ++q) {
    std::vector<double> s;
    std::vector<bool> y;
    for (const auto& r : rep.rankings[q]) {
      s.push_back(r.fused);
      y.push_back(r.sensor_id == rep.truths[q]);
    }
    auc += roc_auc(s, y);
  }
  EXPECT_NEAR(rep.metrics.auc, auc / rep.rankings.size(), 1e-12);
  EXPECT_EQ(rep.protocol["pairing"], "per_query");
}

TEST(RunBenchmark, UsesPreEnrolledGallery) {
  const auto cfg = small_sim();
  const auto m = sim::plan_dataset(cfg);
  sim::SimulatedImageSource src(cfg), src2(cfg);
  const auto b = small_bench();
  std::vector<GalleryEntry> gallery;
  for (const auto& d : m.eval_devices) {
    std::vector<NamedImage> refs;
    for (const auto* r : m.select(d, Role::reference)) refs.push_back({r->image_path, src2.load(*r, AccessPurpose::reference)});
    gallery.push_back(enroll_device(d, refs, b.pipeline));
  }
  const auto a = run_benchmark(m, src, b);
  const auto c = run_benchmark(m, src2, b, nullptr, &gallery);
  EXPECT_EQ(report_to_json(a), report_to_json(c));
  gallery.pop_back();
  EXPECT_THROW(run_benchmark(m, src2, b, nullptr, &gallery), InvalidArgument);
}

TEST(RunBenchmark, SchedulingDoesNotChangeReport) {
  const auto cfg = small_sim();
  const auto m = sim::plan_dataset(cfg);
  sim::SimulatedImageSource s1(cfg), s2(cfg);
  const auto b = small_bench();
  const int saved = thread_cap();
  thread_cap() = 1;
  const auto a = report_to_json(run_benchmark(m, s1, b));
  thread_cap() = 4;
  const auto c = report_to_json(run_benchmark(m, s2, b));
  thread_cap() = saved;
  EXPECT_EQ(a, c);
}

TEST(Report, CsvFormats) {
  EvalReport r;
  r.roc = {{0, 0, std::numeric_limits<double>::infinity()}, {0.5, 1, 0.25}, {1, 1, -0.125}};
  std::ostringstream os;
  write_roc_csv(os, r.roc);
  EXPECT_EQ(os.str(), "fpr,tpr,threshold\n0,0,inf\n0.5,1,0.25\n1,1,-0.125\n");
  EXPECT_EQ(round9(0.1234567891234), 0.123456789);
}
