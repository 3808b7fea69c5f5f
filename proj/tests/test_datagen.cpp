#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "dem/datagen/dataset_io.hpp"
#include "dem/datagen/ratings.hpp"
#include "dem/lmm/information.hpp"
#include "dem/runtime/engine.hpp"
#include "fixtures.hpp"

using namespace dem;
using namespace dem::datagen;
using dem::test::SubsetSpan;

namespace {

std::uint32_t genre_bits(std::initializer_list<std::string_view> names) {
  std::uint32_t bits = 0;
  for (auto n : names) bits |= 1u << genre_index(n);
  return bits;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dem_test_" + name);
}

}  // namespace

TEST_CASE("simulation design constants") {
  const Vector beta = beta_pattern(5);
  CHECK(beta(0) == -2.0);
  CHECK(beta(1) == 2.0);
  CHECK(beta(4) == -2.0);

  const Matrix S3 = sigma_true(3);
  CHECK(S3(0, 0) == doctest::Approx(1.0));
  CHECK(S3(1, 1) == doctest::Approx(2.0));
  CHECK(S3(2, 2) == doctest::Approx(3.0));
  CHECK(S3(0, 1) == doctest::Approx(std::sqrt(2.0) * -0.4).epsilon(1e-12));
  CHECK(S3(0, 1) == doctest::Approx(-0.5657).epsilon(1e-4));
  CHECK(S3(0, 2) == doctest::Approx(std::sqrt(3.0) * 0.3).epsilon(1e-12));
  CHECK(S3(1, 2) == doctest::Approx(std::sqrt(6.0) * 0.001).epsilon(1e-12));
  CHECK((S3 - S3.transpose()).norm() == 0.0);

  const Matrix S6 = sigma_true(6);
  CHECK((S6.topLeftCorner(3, 3) - S3).norm() == 0.0);
  CHECK((S6.bottomRightCorner(3, 3) - S3).norm() == 0.0);
  CHECK(S6.topRightCorner(3, 3).isZero());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S6);
  CHECK(es.eigenvalues().minCoeff() > 0.0);

  const auto truth = theta_true(4, 3);
  CHECK(truth.tau2 == 1.0);
  CHECK((truth.Sigma() - S3).norm() < 1e-12);
}

TEST_CASE("simulate") {
  SimDesign d;
  d.m = 40;
  d.n = 400;
  d.p = 3;
  d.q = 2;
  d.seed = 5;
  const auto a = simulate(d);
  CHECK(a.m() == 40);
  CHECK(a.n_obs() == 400);
  REQUIRE(a.truth);
  for (const auto& s : a.samples) {
    CHECK(s.n() >= 1);
    CHECK(s.X().cwiseAbs().isOnes());
    CHECK(s.Z().cwiseAbs().isOnes());
  }

  SUBCASE("same seed gives a bit-identical dataset") {
    const auto b = simulate(d);
    REQUIRE(b.m() == a.m());
    for (std::size_t i = 0; i < a.m(); ++i) {
      CHECK(a.samples[i].y() == b.samples[i].y());
      CHECK(a.samples[i].X() == b.samples[i].X());
      CHECK(a.samples[i].Z() == b.samples[i].Z());
    }
    d.seed = 6;
    const auto c = simulate(d);
    CHECK(c.samples[0].y() != a.samples[0].y());
  }

  SUBCASE("invalid designs") {
    d.n = 10;
    CHECK_THROWS_AS(simulate(d), Error);
    d.n = 400;
    d.m = 0;
    CHECK_THROWS_AS(simulate(d), Error);
  }
}

TEST_CASE("simulated residuals are centred") {
  SimDesign d;
  d.m = 1000;
  d.n = 100000;
  d.p = 4;
  d.q = 3;
  d.seed = 77;
  const auto data = simulate(d);
  const auto& th = *data.truth;
  double sum = 0.0, var = 0.0;
  for (const auto& s : data.samples) {
    sum += (s.y() - s.X() * th.beta).sum();
    const Vector zsum = s.Z().colwise().sum().transpose();
    var += zsum.dot(th.Sigma() * zsum) + th.tau2 * static_cast<double>(s.n());
  }
  const double n = static_cast<double>(data.n_obs());
  CHECK(std::abs(sum / n) < 3.0 * std::sqrt(var) / n);
}

TEST_CASE("partition") {
  const auto data = test::small_dataset(100, 1000, 2, 2, 3);
  const auto parts = partition(data, 10, 4);
  REQUIRE(parts.size() == 10);
  std::size_t samples = 0, obs = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    CHECK(parts[k].id == k);
    CHECK(parts[k].samples.size() == 10);
    samples += parts[k].samples.size();
    obs += parts[k].n_obs();
  }
  CHECK(samples == 100);
  CHECK(obs == data.n_obs());

  // Disjoint and covering: match samples by their response vectors.
  std::multiset<double> seen;
  for (const auto& p : parts) {
    for (const auto& s : p.samples) seen.insert(s.y().sum() + 1e3 * s.y()(0));
  }
  std::multiset<double> expected;
  for (const auto& s : data.samples) expected.insert(s.y().sum() + 1e3 * s.y()(0));
  CHECK(seen == expected);

  const lmm::LmmModel model(2, 2);
  const auto theta = *data.truth;
  double split = 0.0;
  for (const auto& p : parts) split += model.local_loglik(theta, p);
  CHECK(split == doctest::Approx(model.local_loglik(theta, as_single_subset(data))).epsilon(1e-12));

  const auto one = partition(data, 1, 9);
  REQUIRE(one.size() == 1);
  for (std::size_t i = 0; i < data.m(); ++i) CHECK(one[0].samples[i].y() == data.samples[i].y());

  const auto uneven = partition(data, 7, 1);
  for (const auto& p : uneven) CHECK((p.samples.size() == 14 || p.samples.size() == 15));

  CHECK(partition(data, 10, 4)[3].samples[0].y() == parts[3].samples[0].y());
  CHECK_THROWS_AS(partition(data, 101, 0), Error);
  CHECK_THROWS_AS(partition(data, 0, 0), Error);
}

TEST_CASE("ECME0 recovers beta within three standard errors") {
  SimDesign d;
  d.m = 200;
  d.n = 2000;
  d.p = 4;
  d.q = 2;
  d.seed = 12;
  const auto data = simulate(d);
  const auto parts = partition(data, 4, 1);
  const lmm::LmmModel model(4, 2);
  runtime::RunConfig cfg;
  cfg.K = 4;
  cfg.tol = 1e-10;
  const auto fit = runtime::run_ecme0(cfg, model, SubsetSpan(parts), lmm::Thetad::start(4, 2));
  REQUIRE(fit.trace.converged);
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const auto info = lmm::information_matrices(fit.theta, parts, all);
  const Matrix cov = info.obs.inverse();
  for (Eigen::Index j = 0; j < 4; ++j) {
    const double se = std::sqrt(cov(j, j));
    CHECK(std::abs(fit.theta.beta(j) - data.truth->beta(j)) < 3.0 * se);
  }
}

TEST_CASE("dataset files round trip") {
  const auto data = test::small_dataset(15, 60, 3, 2, 8);
  const auto stem = temp_path("roundtrip");
  save_dataset(stem, data);
  for (const auto& path : {stem, std::filesystem::path(stem.string() + ".demd"),
                           std::filesystem::path(stem.string() + ".json")}) {
    const auto back = load_dataset(path);
    REQUIRE(back.m() == data.m());
    CHECK(back.p == 3);
    CHECK(back.q == 2);
    CHECK(back.seed == 8);
    REQUIRE(back.truth);
    CHECK(*back.truth == *data.truth);
    for (std::size_t i = 0; i < data.m(); ++i) {
      CHECK(back.samples[i].y() == data.samples[i].y());
      CHECK(back.samples[i].X() == data.samples[i].X());
      CHECK(back.samples[i].Z() == data.samples[i].Z());
    }
  }

  std::stringstream buf;
  write_dataset_binary(buf, data);
  std::string bytes = buf.str();
  CHECK(bytes.substr(0, 5) == "DEMD1");
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_dataset_binary(truncated), FormatError);
  bytes[0] = 'X';
  std::stringstream bad_magic(bytes);
  CHECK_THROWS_AS(read_dataset_binary(bad_magic), FormatError);
  CHECK_THROWS_AS(load_dataset(temp_path("does_not_exist")), FormatError);
}

TEST_CASE("genres") {
  CHECK(genre_index("Action") == 0);
  CHECK(genre_index("Children's") == genre_index("Children"));
  CHECK(genre_index("Western") == 18);
  CHECK_THROWS_AS(genre_index("Space Opera"), FormatError);
  for (auto name : {"Action", "Adventure", "Fantasy", "Horror", "Sci-Fi", "Thriller"}) {
    CHECK(genre_category(genre_index(name)) == GenreCategory::kAction);
  }
  for (auto name : {"Animation", "Children"}) {
    CHECK(genre_category(genre_index(name)) == GenreCategory::kChildren);
  }
  CHECK(genre_category(genre_index("Comedy")) == GenreCategory::kComedy);
  CHECK(genre_category(genre_index("Drama")) == GenreCategory::kDrama);
  CHECK(genre_category(genre_index("IMAX")) == GenreCategory::kNone);
  CHECK_THROWS_AS(genre_category(19), FormatError);
}

TEST_CASE("popularity") {
  CHECK(popularity(15, 30) == 0.0);
  CHECK(popularity(0, 0) == 0.0);
  CHECK(popularity(30, 30) == doctest::Approx(std::log(30.5 / 0.5)));
}

TEST_CASE("feature examples") {
  const auto comedy = genre_bits({"Comedy"});
  std::vector<RatingsRecord> recs{
      {1, 10, 4.0, 100, comedy},
      {1, 11, 2.0, 200, comedy},
      {1, 12, 5.0, 300, genre_bits({"Action", "Comedy", "Drama"})},
      {2, 10, 3.5, 50, comedy},
  };
  const auto table = compute_features(recs);
  REQUIRE(table.sorted.size() == 4);
  // Sorted by user then time: user 1 first.
  CHECK(table.sorted[0].user == 1);
  CHECK(table.sorted[3].user == 2);
  CHECK(table.features[0].previous == 0.0);
  CHECK(table.features[1].previous == 1.0);
  CHECK(table.features[2].previous == 0.0);
  CHECK(table.features[3].previous == 0.0);

  // Movie 10 at t=100 sees one earlier rating, 3.5, which counts as high.
  CHECK(table.features[0].popularity == popularity(1, 1));
  CHECK(table.features[0].popularity == doctest::Approx(std::log(3.0)));
  CHECK(table.features[3].popularity == 0.0);

  const auto& mix = table.features[2].category;
  CHECK(mix[0] == doctest::Approx(1.0 / 3.0));
  CHECK(mix[2] == doctest::Approx(1.0 / 3.0));
  CHECK(mix[3] == doctest::Approx(1.0 / 3.0));
  CHECK(mix[1] == 0.0);

  SUBCASE("thirty most recent prior ratings") {
    std::vector<RatingsRecord> many;
    for (int i = 0; i < 40; ++i) {
      many.push_back({static_cast<std::uint64_t>(100 + i), 7, i < 10 ? 5.0 : (i < 25 ? 4.5 : 1.0), i, comedy});
    }
    many.push_back({999, 7, 3.0, 1000, comedy});
    const auto t = compute_features(many);
    const auto it = std::find_if(t.sorted.begin(), t.sorted.end(), [](const auto& r) { return r.user == 999; });
    const auto idx = static_cast<std::size_t>(it - t.sorted.begin());
    // Window = ratings 10..39: 15 high (4.5) and 15 low.
    CHECK(t.features[idx].popularity == 0.0);
  }

  SUBCASE("equal timestamps do not see each other") {
    std::vector<RatingsRecord> tie{{1, 5, 5.0, 10, comedy}, {2, 5, 5.0, 10, comedy}};
    const auto t = compute_features(tie);
    CHECK(t.features[0].popularity == 0.0);
    CHECK(t.features[1].popularity == 0.0);
  }

  SUBCASE("IMAX alone maps to no category") {
    const auto t = compute_features({{1, 5, 4.0, 1, genre_bits({"IMAX"})}});
    for (double v : t.features[0].category) CHECK(v == 0.0);
  }

  SUBCASE("design matrix layout") {
    const auto data = build_movielens_features(recs);
    CHECK(data.p == 6);
    CHECK(data.q == 6);
    REQUIRE(data.m() == 2);
    const auto& u1 = data.samples[0];
    CHECK(u1.n() == 3);
    CHECK(u1.X().col(0).isOnes());
    CHECK(u1.X() == u1.Z());
    CHECK(u1.y()(0) == 4.0);
    CHECK(u1.X()(1, 5) == 1.0);
    CHECK(u1.X()(0, 2) == 1.0);
  }

  SUBCASE("shuffled input gives identical samples") {
    auto records = synthetic_ratings(500, 20, 30, 3);
    const auto a = build_movielens_features(records);
    std::mt19937_64 rng(1);
    std::shuffle(records.begin(), records.end(), rng);
    const auto b = build_movielens_features(records);
    REQUIRE(a.m() == b.m());
    for (std::size_t i = 0; i < a.m(); ++i) {
      CHECK(a.samples[i].y() == b.samples[i].y());
      CHECK(a.samples[i].X() == b.samples[i].X());
    }
  }
}

TEST_CASE("ratings validation and formats") {
  CHECK_NOTHROW(validate(RatingsRecord{1, 1, 0.5, 0, 1}));
  CHECK_NOTHROW(validate(RatingsRecord{1, 1, 5.0, 0, 1}));
  CHECK_THROWS_AS(validate(RatingsRecord{1, 1, 4.25, 0, 1}), FormatError);
  CHECK_THROWS_AS(validate(RatingsRecord{1, 1, 0.0, 0, 1}), FormatError);
  CHECK_THROWS_AS(validate(RatingsRecord{1, 1, 5.5, 0, 1}), FormatError);
  CHECK_THROWS_AS(validate(RatingsRecord{1, 1, 3.0, 0, 1u << 19}), FormatError);

  std::istringstream csv("user,movie,rating,timestamp,genres\n1,2,3.5,100,16\n2,3,4,200,1\n");
  const auto recs = read_ratings_csv(csv);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0] == RatingsRecord{1, 2, 3.5, 100, 16});
  std::ostringstream out;
  write_ratings_csv(out, recs);
  std::istringstream again(out.str());
  CHECK(read_ratings_csv(again) == recs);

  std::istringstream bad_rating("1,2,3.3,100,16\n");
  CHECK_THROWS_WITH_AS(read_ratings_csv(bad_rating), doctest::Contains("line 1"), FormatError);
  std::istringstream bad_fields("1,2,3\n");
  CHECK_THROWS_AS(read_ratings_csv(bad_fields), FormatError);
  std::istringstream bad_number("1,x,3,4,5\n");
  CHECK_THROWS_AS(read_ratings_csv(bad_number), FormatError);

  std::istringstream dat_ratings("1::10::4::978300760\n1::20::2.5::978300761\n");
  std::istringstream dat_movies("10::Toy Story (1995)::Animation|Children's|Comedy\n20::Heat (1995)::Action|Crime|Thriller\n");
  const auto joined = convert_double_colon(dat_ratings, dat_movies);
  REQUIRE(joined.size() == 2);
  CHECK(joined[0].genres == genre_bits({"Animation", "Children", "Comedy"}));
  CHECK(joined[1].rating == 2.5);
  std::istringstream orphan("1::99::4::1\n");
  std::istringstream movies2("10::A::Drama\n");
  CHECK_THROWS_AS(convert_double_colon(orphan, movies2), FormatError);
}

TEST_CASE("synthetic ratings") {
  const auto a = synthetic_ratings(1000, 50, 80, 7);
  CHECK(a.size() == 1000);
  CHECK(a == synthetic_ratings(1000, 50, 80, 7));
  std::set<std::uint64_t> users;
  for (const auto& r : a) {
    CHECK_NOTHROW(validate(r));
    users.insert(r.user);
  }
  CHECK(users.size() == 50);
  CHECK_THROWS_AS(synthetic_ratings(10, 50, 80, 7), Error);
}
