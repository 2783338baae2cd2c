#include <set>

#include <gtest/gtest.h>

#include "cmfd/attacks.hpp"
#include "cmfd/matching.hpp"
#include "support.hpp"

using namespace cmfd;

namespace {

FeatureMatrix random_points(std::size_t n, std::size_t d, Rng& rng) {
  FeatureMatrix f(d);
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : row) v = rng.uniform();
    f.push_back(row);
  }
  return f;
}

// Full scan, ascending by (distance, index), query excluded.
std::vector<std::size_t> brute_force(const FeatureMatrix& f, std::size_t q, std::size_t n) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < f.rows(); ++i)
    if (i != q) all.emplace_back(feature_distance(f.row(q), f.row(i)), i);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(all[i].second);
  return out;
}

NeighborSet neighbours(std::vector<double> d) {
  NeighborSet ns;
  ns.query = 0;
  for (std::size_t i = 0; i < d.size(); ++i) ns.neighbors.push_back(i + 1);
  ns.distances = std::move(d);
  return ns;
}

std::set<std::size_t> partners(const std::vector<MatchPair>& pairs) {
  std::set<std::size_t> s;
  for (const auto& p : pairs) s.insert(p.a == 0 ? p.b : p.a);
  return s;
}

// Keypoints on the x axis so spatial distances are easy to read.
std::vector<Keypoint> line(std::initializer_list<double> xs) {
  std::vector<Keypoint> k;
  for (double x : xs) k.push_back({x, 0, 1});
  return k;
}

MatchConfig with(NnStrategy s) {
  MatchConfig c;
  c.strategy = s;
  return c;
}

}  // namespace

TEST(KnnSearch, CollinearExample) {
  const FeatureMatrix f(1, {0.0, 0.1, 0.5});
  const NeighborSet ns = knn_search(f, 0, 2);
  EXPECT_EQ(ns.neighbors, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(ns.distances[0], 0.1, 1e-15);
  EXPECT_NEAR(ns.distances[1], 0.5, 1e-15);
}

TEST(KnnSearch, SelfExcludedAndBounds) {
  Rng rng(1);
  const FeatureMatrix f = random_points(30, 4, rng);
  for (std::size_t q = 0; q < 30; ++q) EXPECT_NE(knn_search(f, q, 1).neighbors[0], q);
  EXPECT_THROW(knn_search(f, 0, 30), ArgumentError);
  EXPECT_THROW(knn_search(f, 30, 1), ArgumentError);
}

TEST(KnnSearch, TiesBrokenByLowerIndex) {
  const FeatureMatrix f(1, {0.0, 1.0, -1.0, 1.0});
  EXPECT_EQ(knn_search(f, 0, 3).neighbors, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(KnnSearch, MatchesBruteForceOn200Points) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const FeatureMatrix f = random_points(200, 1 + seed % 25, rng);
    const NeighborIndex index(f);
    for (std::size_t q = 0; q < f.rows(); q += 7)
      ASSERT_EQ(knn_search(index, q, 10).neighbors, brute_force(f, q, 10)) << seed;
  }
}

TEST(KnnSearch, TreePathMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    const FeatureMatrix f = random_points(2500, 6, rng);
    const NeighborIndex index(f);
    for (std::size_t q = 0; q < f.rows(); q += 97)
      ASSERT_EQ(knn_search(index, q, 8).neighbors, brute_force(f, q, 8));
  }
}

TEST(AllKnn, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const FeatureMatrix f = random_points(300 + 37 * seed, 25, rng);
    const auto all = all_knn(f, 10);
    for (std::size_t q = 0; q < f.rows(); ++q) {
      std::vector<std::size_t> got;
      for (const auto& nb : all[q]) got.push_back(nb.index);
      ASSERT_EQ(got, brute_force(f, q, 10)) << seed << " q " << q;
      ASSERT_NEAR(all[q][0].distance, feature_distance(f.row(q), f.row(got[0])), 1e-12);
    }
  }
}

TEST(AllKnn, DuplicatesAndTies) {
  const FeatureMatrix f(2, {0, 0, 1, 1, 0, 0, 1, 1, 0, 0});
  const auto all = all_knn(f, 2);
  EXPECT_EQ(all[0][0].index, 2u);
  EXPECT_EQ(all[0][1].index, 4u);
  EXPECT_EQ(all[0][0].distance, 0.0);
  EXPECT_THROW(all_knn(f, 5), ArgumentError);
}

TEST(NnTests, TwoNnExample) {
  EXPECT_EQ(test_2nn(neighbours({0.2, 0.5}), {}).size(), 1u);
}

TEST(NnTests, FirstNeighboursTooClose) {
  const NeighborSet ns = neighbours({0.30, 0.31, 0.9});
  const MatchConfig c;
  EXPECT_TRUE(test_2nn(ns, c).empty());
  EXPECT_TRUE(test_g2nn(ns, c).empty());
  EXPECT_EQ(partners(test_rg2nn(ns, c)), (std::set<std::size_t>{1, 2}));
}

TEST(NnTests, G2nnStopsAtFirstFailingRatio) {
  EXPECT_EQ(partners(test_g2nn(neighbours({0.1, 0.4, 0.5}), {})), (std::set<std::size_t>{1}));
}

TEST(NnTests, I2nnExamples) {
  const MatchConfig c;
  EXPECT_EQ(test_i2nn(neighbours({0.2, 0.5}), line({0, 100, 300}), c).size(), 1u);
  EXPECT_EQ(test_i2nn(neighbours({0.08, 0.09}), line({0, 120, 130}), c).size(), 2u);
  EXPECT_TRUE(test_i2nn(neighbours({0.2, 0.5}), line({0, 10, 300}), c).empty());
  EXPECT_TRUE(test_i2nn(neighbours({0.5, 0.6}), line({0, 200, 300}), c).empty());
}

TEST(NnTests, I2nnBoundariesAreInclusive) {
  const MatchConfig c;
  EXPECT_EQ(test_i2nn(neighbours({0.3, 0.5}), line({0, 50, 300}), c).size(), 1u);    // 0.6, 50
  EXPECT_EQ(test_i2nn(neighbours({0.09, 0.1}), line({0, 50, 50}), c).size(), 2u);  // d2 = 0.1
  EXPECT_TRUE(test_2nn(neighbours({0.3, 0.5}), c).empty());                         // strict <
}

TEST(NnTests, PairCountBounds) {
  Rng rng(5);
  MatchConfig c;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.integer(0, 9);
    std::vector<double> d(n);
    for (double& v : d) v = rng.uniform(0, 0.3);
    std::sort(d.begin(), d.end());
    const NeighborSet ns = neighbours(d);
    std::vector<Keypoint> kps;
    for (std::size_t i = 0; i <= n; ++i) kps.push_back({rng.uniform(0, 200), rng.uniform(0, 200), 1});
    ASSERT_LE(test_2nn(ns, c).size(), 1u);
    ASSERT_LE(test_i2nn(ns, kps, c).size(), 2u);
    ASSERT_LE(test_g2nn(ns, c).size(), n - 1);
    ASSERT_LE(test_rg2nn(ns, c).size(), n - 1);
  }
}

TEST(Deduplicate, KeepsSmallerDistance) {
  const auto out = deduplicate({{3, 5, 0.4}, {1, 2, 0.1}, {3, 5, 0.2}});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], (MatchPair{1, 2, 0.1}));
  EXPECT_EQ(out[1], (MatchPair{3, 5, 0.2}));
}

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {NnStrategy::TwoNN, NnStrategy::G2NN, NnStrategy::RG2NN, NnStrategy::I2NN})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("3nn"), ArgumentError);
}

TEST(MatchWordLevel, EmptyInput) {
  EXPECT_TRUE(match_word_level({}, MatchConfig{}).empty());
}

class CopiedScene : public ::testing::Test {
 protected:
  // One region pasted twice by exact integer translation: three identical copies.
  static void SetUpTestSuite() {
    const GrayImage base = test::texture(330, 240, 6, 77);
    const Forgery f1 = make_forgery(base, 10, 10, 90, 90, {110, 0});
    const Forgery f2 = make_forgery(f1.image, 10, 10, 90, 90, {220, 120});
    scene = new Scene{f2.image, {f1.transform, f2.transform}, {}};
    DetectorConfig dc;
    dc.normalization_target = 1;
    const auto kps = detect_keypoints(scene->image, dc);
    DescriptorConfig plain;
    plain.smoothing = 0.0;
    scene->descriptors = MomentDescriber(plain).describe_all(scene->image, kps);
  }
  static void TearDownTestSuite() { delete scene; }

  struct Scene {
    GrayImage image;
    std::vector<Affine> moves;
    std::vector<Descriptor> descriptors;
  };
  static Scene* scene;

  static std::size_t correct(const std::vector<MatchPair>& pairs) {
    std::size_t n = 0;
    for (const auto& p : pairs) {
      const Keypoint& a = scene->descriptors[p.a].keypoint;
      const Keypoint& b = scene->descriptors[p.b].keypoint;
      const Affine between = compose(scene->moves[1], scene->moves[0].inverse());
      bool hit = false;
      for (const Affine& t : {scene->moves[0], scene->moves[1], between})
        for (auto [s, d] : {std::pair{&a, &b}, std::pair{&b, &a}}) {
          const Point2 q = t.apply(s->x, s->y);
          hit = hit || std::hypot(q.x - d->x, q.y - d->y) < 1.0;
        }
      n += hit;
    }
    return n;
  }

  static MatchConfig config(NnStrategy s) {
    MatchConfig c = with(s);
    c.spatial_threshold = 20;
    return c;
  }
};

CopiedScene::Scene* CopiedScene::scene = nullptr;

TEST_F(CopiedScene, I2nnFindsBothCounterparts) {
  const auto i2nn = match_word_level(scene->descriptors, config(NnStrategy::I2NN));
  const auto two = match_word_level(scene->descriptors, config(NnStrategy::TwoNN));
  const std::size_t ci = correct(i2nn), c2 = correct(two);
  RecordProperty("i2nn_correct", std::to_string(ci));
  RecordProperty("2nn_correct", std::to_string(c2));
  // Keypoints whose support lies inside the copies have two equally good partners, which the
  // ratio test rejects and the absolute branch accepts twice.
  EXPECT_GT(ci, 40u);
  EXPECT_GE(static_cast<double>(ci), 1.8 * static_cast<double>(c2));
}

TEST_F(CopiedScene, Deterministic) {
  const auto c = config(NnStrategy::I2NN);
  EXPECT_EQ(match_word_level(scene->descriptors, c), match_word_level(scene->descriptors, c));
}

TEST_F(CopiedScene, PairsCanonicalAndUnique) {
  for (auto s : {NnStrategy::TwoNN, NnStrategy::G2NN, NnStrategy::RG2NN, NnStrategy::I2NN}) {
    const auto pairs = match_word_level(scene->descriptors, config(s));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      ASSERT_LT(pairs[i].a, pairs[i].b);
      if (i) { ASSERT_TRUE(std::tie(pairs[i - 1].a, pairs[i - 1].b) < std::tie(pairs[i].a, pairs[i].b)); }
    }
  }
}
