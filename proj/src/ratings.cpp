#include "dem/datagen/ratings.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <random>
#include <unordered_map>

namespace dem::datagen {

namespace {

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, const char* what) {
  field = trim(field);
  T v{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                      std::string(field) + "'");
  }
  return v;
}

}  // namespace

GenreCategory genre_category(std::size_t genre) {
  switch (genre) {
    case 0: case 1: case 8: case 10: case 15: case 16:
      return GenreCategory::kAction;
    case 2: case 3:
      return GenreCategory::kChildren;
    case 4:
      return GenreCategory::kComedy;
    case 5: case 6: case 7: case 9: case 12: case 13: case 14: case 17: case 18:
      return GenreCategory::kDrama;
    case 11:
      return GenreCategory::kNone;
    default:
      throw FormatError("unknown genre flag " + std::to_string(genre));
  }
}

std::size_t genre_index(std::string_view name) {
  if (name == "Children's") return 3;
  for (std::size_t g = 0; g < kNumGenres; ++g) {
    if (kGenreNames[g] == name) return g;
  }
  throw FormatError("unknown genre '" + std::string(name) + "'");
}

void validate(const RatingsRecord& r) {
  const double twice = 2.0 * r.rating;
  if (!(r.rating >= 0.5 && r.rating <= 5.0) || twice != std::round(twice)) {
    throw FormatError("rating " + std::to_string(r.rating) + " is not on the 0.5..5 half-point grid");
  }
  if (r.genres >> kNumGenres) throw FormatError("unknown genre flag in bitfield");
}

std::vector<RatingsRecord> read_ratings_csv(std::istream& is) {
  std::vector<RatingsRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (line_no == 1 && view.rfind("user", 0) == 0) continue;
    const auto f = split(view, ",");
    if (f.size() != 5) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                        std::to_string(f.size()));
    }
    RatingsRecord r;
    r.user = parse_number<std::uint64_t>(f[0], line_no, "user");
    r.movie = parse_number<std::uint64_t>(f[1], line_no, "movie");
    r.rating = parse_number<double>(f[2], line_no, "rating");
    r.timestamp = parse_number<std::int64_t>(f[3], line_no, "timestamp");
    r.genres = parse_number<std::uint32_t>(f[4], line_no, "genre bitfield");
    try {
      validate(r);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(r);
  }
  return out;
}

void write_ratings_csv(std::ostream& os, const std::vector<RatingsRecord>& records) {
  os << "user,movie,rating,timestamp,genres\n";
  for (const auto& r : records) {
    os << r.user << ',' << r.movie << ',' << r.rating << ',' << r.timestamp << ',' << r.genres
       << '\n';
  }
}

std::vector<RatingsRecord> convert_double_colon(std::istream& ratings, std::istream& movies) {
  std::unordered_map<std::uint64_t, std::uint32_t> genres;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(movies, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    const auto f = split(view, "::");
    if (f.size() < 3) throw FormatError("movies line " + std::to_string(line_no) + ": expected 3 fields");
    const auto id = parse_number<std::uint64_t>(f[0], line_no, "movie");
    std::uint32_t bits = 0;
    const auto names = trim(f.back());
    if (names != "(no genres listed)") {
      for (auto g : split(names, "|")) bits |= 1u << genre_index(trim(g));
    }
    genres[id] = bits;
  }

  std::vector<RatingsRecord> out;
  line_no = 0;
  while (std::getline(ratings, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    const auto f = split(view, "::");
    if (f.size() != 4) throw FormatError("ratings line " + std::to_string(line_no) + ": expected 4 fields");
    RatingsRecord r;
    r.user = parse_number<std::uint64_t>(f[0], line_no, "user");
    r.movie = parse_number<std::uint64_t>(f[1], line_no, "movie");
    r.rating = parse_number<double>(f[2], line_no, "rating");
    r.timestamp = parse_number<std::int64_t>(f[3], line_no, "timestamp");
    const auto it = genres.find(r.movie);
    if (it == genres.end()) {
      throw FormatError("ratings line " + std::to_string(line_no) + ": movie " +
                        std::to_string(r.movie) + " has no genre entry");
    }
    r.genres = it->second;
    validate(r);
    out.push_back(r);
  }
  return out;
}

double popularity(std::size_t high, std::size_t count) {
  const double pr = (static_cast<double>(high) + 0.5) / (static_cast<double>(count) + 1.0);
  return std::log(pr / (1.0 - pr));
}

FeatureTable compute_features(std::vector<RatingsRecord> records) {
  constexpr std::size_t kWindow = 30;
  for (const auto& r : records) validate(r);
  std::sort(records.begin(), records.end(), [](const RatingsRecord& a, const RatingsRecord& b) {
    return std::tie(a.user, a.timestamp, a.movie, a.rating, a.genres) <
           std::tie(b.user, b.timestamp, b.movie, b.rating, b.genres);
  });

  FeatureTable out;
  out.features.resize(records.size());

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto& f = out.features[i];
    double mapped = 0.0;
    for (std::size_t g = 0; g < kNumGenres; ++g) {
      if (!(r.genres & (1u << g))) continue;
      const auto c = genre_category(g);
      if (c == GenreCategory::kNone) continue;
      f.category[static_cast<std::size_t>(c)] += 1.0;
      mapped += 1.0;
    }
    if (mapped > 0.0) {
      for (auto& v : f.category) v /= mapped;
    }
    const bool first = i == 0 || records[i - 1].user != r.user;
    f.previous = (!first && records[i - 1].rating > 3.0) ? 1.0 : 0.0;
  }

  // Movie popularity in global time order; ratings sharing a timestamp
  // do not see each other.
  std::vector<std::size_t> by_time(records.size());
  for (std::size_t i = 0; i < by_time.size(); ++i) by_time[i] = i;
  std::stable_sort(by_time.begin(), by_time.end(), [&](std::size_t a, std::size_t b) {
    return records[a].timestamp < records[b].timestamp;
  });
  std::unordered_map<std::uint64_t, std::deque<double>> recent;
  for (std::size_t lo = 0; lo < by_time.size();) {
    std::size_t hi = lo;
    while (hi < by_time.size() && records[by_time[hi]].timestamp == records[by_time[lo]].timestamp) ++hi;
    for (std::size_t j = lo; j < hi; ++j) {
      const auto idx = by_time[j];
      const auto it = recent.find(records[idx].movie);
      std::size_t count = 0, high = 0;
      if (it != recent.end()) {
        count = it->second.size();
        high = static_cast<std::size_t>(
            std::count_if(it->second.begin(), it->second.end(), [](double v) { return v > 3.0; }));
      }
      out.features[idx].popularity = popularity(high, count);
    }
    for (std::size_t j = lo; j < hi; ++j) {
      auto& window = recent[records[by_time[j]].movie];
      window.push_back(records[by_time[j]].rating);
      if (window.size() > kWindow) window.pop_front();
    }
    lo = hi;
  }
  out.sorted = std::move(records);
  return out;
}

Dataset build_movielens_features(std::vector<RatingsRecord> records) {
  if (records.empty()) throw FormatError("no ratings records");
  const FeatureTable table = compute_features(std::move(records));
  Dataset out;
  out.p = 6;
  out.q = 6;
  out.source = "ratings";
  const auto& rs = table.sorted;
  for (std::size_t lo = 0; lo < rs.size();) {
    std::size_t hi = lo;
    while (hi < rs.size() && rs[hi].user == rs[lo].user) ++hi;
    const auto n = static_cast<Eigen::Index>(hi - lo);
    Vector y(n);
    Matrix X(n, 6);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& f = table.features[lo + static_cast<std::size_t>(r)];
      y(r) = rs[lo + static_cast<std::size_t>(r)].rating;
      X.row(r) << 1.0, f.category[1], f.category[2], f.category[3], f.popularity, f.previous;
    }
    Matrix Z = X;
    out.samples.emplace_back(std::move(y), std::move(X), std::move(Z));
    lo = hi;
  }
  return out;
}

std::vector<RatingsRecord> synthetic_ratings(std::size_t num_records, std::size_t num_users,
                                             std::size_t num_movies, std::uint64_t seed) {
  if (num_users < 1 || num_movies < 1 || num_records < num_users) {
    throw Error("synthetic_ratings: need at least one record per user and one movie");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_genre(0, kNumGenres - 1);
  std::uniform_int_distribution<int> genre_count(1, 3);

  std::vector<std::uint32_t> movie_genres(num_movies);
  std::vector<double> movie_effect(num_movies);
  for (std::size_t j = 0; j < num_movies; ++j) {
    const int c = genre_count(rng);
    for (int g = 0; g < c; ++g) movie_genres[j] |= 1u << pick_genre(rng);
    movie_effect[j] = 0.6 * normal(rng);
  }
  // Users differ in level, genre taste, sensitivity to popular movies and
  // anchoring on their previous rating, so every design column carries a
  // user-level random slope.
  struct User {
    double level;
    std::array<double, 4> taste;
    double herd;
    double anchor;
  };
  std::vector<User> users(num_users);
  for (auto& u : users) {
    u.level = 0.5 * normal(rng);
    for (auto& g : u.taste) g = 0.6 * normal(rng);
    u.herd = 1.0 + 0.5 * normal(rng);
    u.anchor = 0.3 * normal(rng);
  }

  std::vector<std::size_t> per_user(num_users, num_records / num_users);
  for (std::size_t i = 0; i < num_records % num_users; ++i) ++per_user[i];

  std::uniform_int_distribution<std::size_t> pick_movie(0, num_movies - 1);
  std::uniform_int_distribution<std::int64_t> gap(1, 86400);
  std::vector<RatingsRecord> out;
  out.reserve(num_records);
  for (std::size_t u = 0; u < num_users; ++u) {
    const auto& user = users[u];
    std::int64_t t = 1'000'000'000 + static_cast<std::int64_t>(u) * 3600;
    double previous = 3.5;
    for (std::size_t i = 0; i < per_user[u]; ++i) {
      const auto movie = pick_movie(rng);
      t += gap(rng);
      double taste = 0.0;
      int matched = 0;
      for (std::size_t g = 0; g < kNumGenres; ++g) {
        if (!(movie_genres[movie] >> g & 1u)) continue;
        const auto cat = genre_category(g);
        if (cat == GenreCategory::kNone) continue;
        taste += user.taste[static_cast<std::size_t>(cat)];
        ++matched;
      }
      if (matched > 0) taste /= matched;
      double v = 3.5 + user.level + user.herd * movie_effect[movie] + taste + user.anchor * (previous - 3.5) +
                 0.6 * normal(rng);
      v = std::clamp(std::round(2.0 * v) / 2.0, 0.5, 5.0);
      previous = v;
      out.push_back({u + 1, movie + 1, v, t, movie_genres[movie]});
    }
  }
  return out;
}

}  // namespace dem::datagen
