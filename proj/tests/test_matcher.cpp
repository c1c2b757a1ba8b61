#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prnu/matcher.hpp"
#include "testing.hpp"

using namespace prnu;
using prnu::testing::make_fingerprint;
using prnu::testing::random_plane;

namespace {

Plane from(int h, int w, std::vector<float> v) { return Plane(h, w, std::move(v)); }

// Normalized cross-correlation in long double as an independent reference.
double ncc_oracle(const Plane& a, const Plane& b) {
  long double ma = 0, mb = 0;
  const auto n = a.area();
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.values()[i];
    mb += b.values()[i];
  }
  ma /= n;
  mb /= n;
  long double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double x = a.values()[i] - ma, y = b.values()[i] - mb;
    d += x * y;
    na += x * x;
    nb += y * y;
  }
  return static_cast<double>(d / std::sqrt(na * nb));
}

std::vector<Fingerprint> levels_of(const std::string& id, const std::vector<Plane>& planes) {
  std::vector<Fingerprint> out;
  for (const auto& p : planes) out.push_back(make_fingerprint(id, p));
  return out;
}

std::vector<ResidualPlane> residuals_of(const std::string& id, const std::vector<Plane>& planes) {
  std::vector<ResidualPlane> out;
  for (const auto& p : planes) out.push_back({p, id});
  return out;
}

neural::ComparatorModel zero_head_model() {
  auto m = neural::ComparatorModel::initialized({{4, 8}}, 3);
  std::fill(m.head_weights().begin(), m.head_weights().end(), 0.0);
  m.head_bias() = 0.0;
  return m;
}

}  // namespace

TEST(Ncc, HandExample) {
  EXPECT_NEAR(ncc(from(2, 2, {1, 2, 3, 4}), from(2, 2, {2, 1, 4, 3})).value, 0.6, 1e-9);
}

TEST(Ncc, SelfAndAntiCorrelation) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Plane k = random_plane(rng, 8 + t % 5, 9);
    Plane neg = k;
    for (float& v : neg.values()) v = -v;
    EXPECT_NEAR(ncc(k, k).value, 1.0, 1e-6);
    EXPECT_NEAR(ncc(k, neg).value, -1.0, 1e-6);
  }
}

TEST(Ncc, MatchesOracleAndBounded) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const int h = 2 + static_cast<int>(rng.below(20)), w = 2 + static_cast<int>(rng.below(20));
    const Plane a = random_plane(rng, h, w, rng.uniform(1e-4, 10));
    Plane b = random_plane(rng, h, w);
    const double mix = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < b.area(); ++i) b.values()[i] += static_cast<float>(mix * a.values()[i]);
    const auto s = ncc(a, b);
    EXPECT_FALSE(s.constant_input);
    EXPECT_NEAR(s.value, ncc_oracle(a, b), 1e-9);
    EXPECT_LE(std::abs(s.value), 1.0 + 1e-9);
  }
}

TEST(Ncc, AffineInvarianceAndNegation) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Plane k = random_plane(rng, 16, 16), r = random_plane(rng, 16, 16);
    const double a = rng.uniform(0.1, 5), b = rng.uniform(-3, 3);
    Plane ka = k, kn = k;
    for (float& v : ka.values()) v = static_cast<float>(a * v + b);
    for (float& v : kn.values()) v = -v;
    const double base = ncc(k, r).value;
    EXPECT_NEAR(ncc(ka, r).value, base, 1e-6);
    EXPECT_NEAR(ncc(r, ka).value, base, 1e-6);
    EXPECT_NEAR(ncc(kn, r).value, -base, 1e-6);
  }
}

TEST(Ncc, ConstantInputIsFlaggedZero) {
  Rng rng(4);
  const Plane k = random_plane(rng, 4, 4);
  for (const Plane& flat : {Plane(4, 4), Plane(4, 4, 3.0f)}) {
    auto s = ncc(k, flat);
    EXPECT_EQ(s.value, 0.0);
    EXPECT_TRUE(s.constant_input);
    EXPECT_TRUE(ncc(flat, k).constant_input);
  }
  EXPECT_THROW(ncc(Plane(2, 2), Plane(2, 3)), DimensionMismatch);
}

TEST(Hadamard, Examples) {
  Rng rng(5);
  const Plane k = random_plane(rng, 3, 3);
  const Plane hz = hadamard(k, Plane(3, 3));
  for (float v : hz.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(hadamard(k, Plane(3, 3, 1.0f)), k);
  EXPECT_EQ(hadamard(from(2, 2, {1, -2, 3, 0.5f}), from(2, 2, {2, 2, -1, 4})), from(2, 2, {2, -4, -3, 2}));
  EXPECT_THROW(hadamard(Plane(2, 2), Plane(3, 2)), DimensionMismatch);
}

TEST(ComparatorInput, MeanEqualsNcc) {
  Rng rng(6);
  const auto fp = make_fingerprint("a", random_plane(rng, 20, 24, 0.01));
  ResidualPlane r{random_plane(rng, 20, 24, 0.02), "q"};
  for (std::size_t i = 0; i < r.plane.area(); ++i) r.plane.values()[i] += 0.5f * fp.plane.values()[i];
  const Plane in = comparator_input(fp, r);
  double mean = 0;
  for (float v : in.values()) mean += v;
  mean /= in.area();
  EXPECT_NEAR(mean, ncc(fp, r).value, 1e-5);
}

TEST(ResolutionWeights, Examples) {
  EXPECT_EQ(resolution_weights(ResolutionSpec::parse("256x256")), std::vector<double>{1.0});
  auto w2 = resolution_weights(ResolutionSpec::parse("1024x1024,1400x1400"));
  EXPECT_NEAR(w2[0], 0.73142857, 1e-6);
  EXPECT_EQ(w2[1], 1.0);
  auto w3 = resolution_weights(ResolutionSpec::parse("768x768,1024x1024,1400x1400"));
  EXPECT_NEAR(w3[0], 0.548571428, 1e-6);
  EXPECT_NEAR(w3[1], 0.731428571, 1e-6);
  EXPECT_EQ(w3[2], 1.0);
}

TEST(MultiresScore, SingleLevelIsRawScore) {
  Rng rng(7);
  const auto spec = ResolutionSpec::parse("8x8");
  const auto fps = levels_of("a", {random_plane(rng, 8, 8)});
  const auto rs = residuals_of("q", {random_plane(rng, 8, 8)});
  const LevelScorer scorer = [](const Fingerprint& f, const ResidualPlane& r) { return ncc(f, r).value; };
  EXPECT_EQ(multires_score(fps, rs, spec, scorer), ncc(fps[0], rs[0]).value);
}

TEST(MultiresScore, LinearityAndRecordedExample) {
  Rng rng(8);
  const auto spec = ResolutionSpec::parse("8x8,11x11");
  const double w = 8.0 / 11.0;
  const auto fps = levels_of("a", {random_plane(rng, 8, 8), random_plane(rng, 11, 11)});
  const auto rs = residuals_of("q", {random_plane(rng, 8, 8), random_plane(rng, 11, 11)});
  EXPECT_NEAR(multires_score(fps, rs, spec, [](auto&, auto&) { return 0.3; }), 0.3 * (w + 1), 1e-12);

  const LevelScorer recorded = [](const Fingerprint& f, const ResidualPlane&) { return f.size().height == 8 ? 0.4 : 0.9; };
  const double s = 0.7314 * 0.4 + 1.0 * 0.9;
  EXPECT_NEAR(s, 1.19256, 1e-6);
  EXPECT_NEAR(multires_score(fps, rs, spec, recorded), w * 0.4 + 0.9, 1e-12);
}

TEST(MultiresScore, LevelPermutationInvariant) {
  Rng rng(9);
  const auto spec = ResolutionSpec::parse("8x8,11x11,16x16");
  const auto swapped = ResolutionSpec::parse("16x16,8x8,11x11");
  std::vector<Plane> k{random_plane(rng, 8, 8), random_plane(rng, 11, 11), random_plane(rng, 16, 16)};
  std::vector<Plane> r{random_plane(rng, 8, 8), random_plane(rng, 11, 11), random_plane(rng, 16, 16)};
  const LevelScorer scorer = [](const Fingerprint& f, const ResidualPlane& q) { return ncc(f, q).value; };
  const double a = multires_score(levels_of("a", k), residuals_of("q", r), spec, scorer);
  const double b = multires_score(levels_of("a", {k[2], k[0], k[1]}), residuals_of("q", {r[2], r[0], r[1]}), swapped, scorer);
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(MultiresScore, MisalignedLevelsRejected) {
  const auto spec = ResolutionSpec::parse("8x8,16x16");
  const auto fps = levels_of("a", {Plane(8, 8), Plane(16, 16)});
  const LevelScorer s = [](auto&, auto&) { return 0.0; };
  EXPECT_THROW(multires_score(fps, residuals_of("q", {Plane(8, 8)}), spec, s), DimensionMismatch);
  EXPECT_THROW(multires_score(fps, residuals_of("q", {Plane(16, 16), Plane(8, 8)}), spec, s), DimensionMismatch);
}

TEST(JointScore, FusedIsSumOfAggregates) {
  Rng rng(10);
  const auto spec = ResolutionSpec::parse("24x24,32x32");
  const auto model = neural::ComparatorModel::initialized({{4, 8}}, 11);
  const auto fps = levels_of("a", {random_plane(rng, 24, 24), random_plane(rng, 32, 32)});
  const auto rs = residuals_of("q", {random_plane(rng, 24, 24), random_plane(rng, 32, 32)});
  const auto rec = joint_score(fps, rs, spec, model);
  const double n = multires_score(fps, rs, spec, [&](auto& f, auto& r) { return neural_score(model, f, r); });
  const double c = multires_score(fps, rs, spec, [](auto& f, auto& r) { return ncc(f, r).value; });
  EXPECT_NEAR(rec.fused, n + c, 1e-9);
  EXPECT_NEAR(*rec.neural, n, 1e-12);
  EXPECT_NEAR(*rec.ncc, c, 1e-12);
  ASSERT_EQ(rec.per_resolution.size(), 2u);
  EXPECT_EQ(rec.per_resolution[1].resolution, (Size{32, 32}));
}

TEST(JointScore, ZeroHeadGivesHalfPerLevel) {
  Rng rng(12);
  const auto spec = ResolutionSpec::parse("24x24,32x32");
  const auto model = zero_head_model();
  const auto fps = levels_of("a", {random_plane(rng, 24, 24), random_plane(rng, 32, 32)});
  const auto rs = residuals_of("q", {random_plane(rng, 24, 24), random_plane(rng, 32, 32)});
  const double wsum = 24.0 / 32.0 + 1.0;
  const double c = multires_score(fps, rs, spec, [](auto& f, auto& r) { return ncc(f, r).value; });
  EXPECT_NEAR(joint_score(fps, rs, spec, model).fused, c + 0.5 * wsum, 1e-6);

  const auto zeros = residuals_of("q", {Plane(24, 24), Plane(32, 32)});
  const auto rec = joint_score(fps, zeros, spec, model);
  EXPECT_NEAR(rec.fused, 0.5 * wsum, 1e-6);
  EXPECT_TRUE(rec.ncc_constant_input);
}

TEST(ScorePair, ModeControlsPresentFields) {
  Rng rng(13);
  const auto spec = ResolutionSpec::parse("16x16");
  const auto fps = levels_of("a", {random_plane(rng, 16, 16)});
  const auto rs = residuals_of("q", {random_plane(rng, 16, 16)});
  const auto model = zero_head_model();
  const auto c = score_pair(fps, rs, spec, ScoreMode::ncc, nullptr);
  EXPECT_TRUE(c.ncc && !c.neural);
  EXPECT_EQ(c.fused, *c.ncc);
  const auto n = score_pair(fps, rs, spec, ScoreMode::neural, &model);
  EXPECT_TRUE(!n.ncc && n.neural);
  EXPECT_EQ(n.fused, 0.5);
  EXPECT_THROW(score_pair(fps, rs, spec, ScoreMode::joint, nullptr), InvalidArgument);
  for (auto m : {ScoreMode::ncc, ScoreMode::neural, ScoreMode::joint}) EXPECT_EQ(parse_score_mode(to_string(m)), m);
  EXPECT_THROW(parse_score_mode("pce"), InvalidArgument);
}

TEST(RankDevices, MatchesBruteForceOracle) {
  Rng rng(14);
  const auto spec = ResolutionSpec::parse("16x16,20x20");
  std::vector<GalleryEntry> gallery;
  for (int d = 0; d < 4; ++d) {
    const std::string id = "dev" + std::to_string(3 - d);
    gallery.push_back({id, levels_of(id, {random_plane(rng, 16, 16), random_plane(rng, 20, 20)})});
  }
  Query q{"q", residuals_of("q", {random_plane(rng, 16, 16), random_plane(rng, 20, 20)})};
  for (std::size_t i = 0; i < q.levels.size(); ++i)
    for (std::size_t p = 0; p < q.levels[i].plane.area(); ++p)
      q.levels[i].plane.values()[p] += 0.3f * gallery[2].levels[i].plane.values()[p];

  const auto ranked = rank_devices(gallery, q, spec, ScoreMode::ncc, nullptr);
  std::vector<std::pair<double, std::string>> oracle;
  for (const auto& g : gallery) {
    double s = 0;
    const auto w = spec.weights();
    for (std::size_t i = 0; i < 2; ++i) s += w[i] * ncc_oracle(g.levels[i].plane, q.levels[i].plane);
    oracle.emplace_back(s, g.sensor_id);
  }
  std::sort(oracle.begin(), oracle.end(), [](auto& a, auto& b) { return a.first > b.first; });
  ASSERT_EQ(ranked.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ranked[i].sensor_id, oracle[i].second);
    EXPECT_NEAR(ranked[i].fused, oracle[i].first, 1e-9);
    EXPECT_EQ(ranked[i].query_id, "q");
  }
  EXPECT_EQ(ranked[0].sensor_id, gallery[2].sensor_id);
}

TEST(RankDevices, SelfMatchFirstAndSingleGallery) {
  Rng rng(15);
  const auto spec = ResolutionSpec::parse("16x16,32x32");
  std::vector<GalleryEntry> gallery;
  for (int d = 0; d < 3; ++d) {
    const std::string id = "d" + std::to_string(d);
    gallery.push_back({id, levels_of(id, {random_plane(rng, 16, 16), random_plane(rng, 32, 32)})});
  }
  Query self{"q", residuals_of("q", {gallery[1].levels[0].plane, gallery[1].levels[1].plane})};
  const auto r = rank_devices(gallery, self, spec, ScoreMode::ncc, nullptr);
  EXPECT_EQ(r[0].sensor_id, "d1");
  EXPECT_NEAR(r[0].fused, 1.5, 1e-6);
  EXPECT_EQ(rank_devices(std::span(gallery).first(1), self, spec, ScoreMode::ncc, nullptr)[0].sensor_id, "d0");
  EXPECT_THROW(rank_devices({}, self, spec, ScoreMode::ncc, nullptr), InvalidArgument);
}

TEST(SortRanking, TieBreakAndMonotoneTransformInvariance) {
  Rng rng(16);
  for (int t = 0; t < 50; ++t) {
    std::vector<ScoreRecord> recs;
    for (int i = 0; i < 12; ++i) {
      ScoreRecord r;
      r.sensor_id = "s" + std::to_string(rng.below(100));
      r.fused = std::round(rng.uniform(-1, 1) * 4) / 4;  // plenty of ties
      recs.push_back(r);
    }
    auto a = recs;
    sort_ranking(a);
    for (std::size_t i = 1; i < a.size(); ++i) {
      EXPECT_GE(a[i - 1].fused, a[i].fused);
      if (a[i - 1].fused == a[i].fused) EXPECT_LE(a[i - 1].sensor_id, a[i].sensor_id);
    }
    auto b = recs;
    for (auto& r : b) r.fused = std::exp(3 * r.fused) + 7;
    sort_ranking(b);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].sensor_id, b[i].sensor_id);
  }
}

TEST(ScoresCsv, FormatAndEmptyFields) {
  ScoreRecord r;
  r.query_id = "s/2/003.png";
  r.sensor_id = "sensor_01";
  r.ncc = 0.1234567891234;
  r.fused = 0.1234567891234;
  std::ostringstream os;
  write_scores_csv_header(os);
  write_scores_csv_rows(os, std::span(&r, 1));
  EXPECT_EQ(os.str(), "query_id,sensor_id,ncc,neural,fused\ns/2/003.png,sensor_01,0.123456789,,0.123456789\n");
}
