#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dem/datagen/simulate.hpp"

namespace dem::datagen {

inline constexpr std::size_t kNumGenres = 19;

/// Genre order of the bitfield: bit g is set when the movie has genre g.
inline constexpr std::array<std::string_view, kNumGenres> kGenreNames = {
    "Action", "Adventure", "Animation", "Children", "Comedy",  "Crime",  "Documentary",
    "Drama",  "Fantasy",   "Film-Noir", "Horror",   "IMAX",    "Musical", "Mystery",
    "Romance", "Sci-Fi",   "Thriller",  "War",      "Western"};

enum class GenreCategory { kAction, kChildren, kComedy, kDrama, kNone };

GenreCategory genre_category(std::size_t genre);

/// Bit index of a genre name; accepts "Children's" as Children. Throws
/// FormatError for unknown names.
std::size_t genre_index(std::string_view name);

struct RatingsRecord {
  std::uint64_t user = 0;
  std::uint64_t movie = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
  std::uint32_t genres = 0;

  bool operator==(const RatingsRecord&) const = default;
};

/// Throws FormatError unless the rating is on the 0.5..5 half-point grid
/// and only the 19 known genre bits are set.
void validate(const RatingsRecord& r);

/// CSV rows user,movie,rating,timestamp,genre-bitfield. A header line
/// starting with "user" is skipped.
std::vector<RatingsRecord> read_ratings_csv(std::istream& is);
void write_ratings_csv(std::ostream& os, const std::vector<RatingsRecord>& records);

/// Joins "::"-separated ratings (user::movie::rating::timestamp) with movies
/// (movie::title::Genre|Genre) into records.
std::vector<RatingsRecord> convert_double_colon(std::istream& ratings, std::istream& movies);

/// logit((l + 0.5) / (n + 1)).
double popularity(std::size_t high, std::size_t count);

/// Per-record engineered predictors.
struct RatingFeatures {
  std::array<double, 4> category{};  // Action, Children, Comedy, Drama shares
  double popularity = 0.0;
  double previous = 0.0;
};

/// Column names of the six-column design built by build_movielens_features.
inline constexpr std::array<std::string_view, 6> kFeatureNames = {
    "Action", "Children-Action", "Comedy-Action", "Drama-Action", "popularity", "previous"};

/// Records sorted by user, timestamp, movie; features[i] belongs to sorted[i].
struct FeatureTable {
  std::vector<RatingsRecord> sorted;
  std::vector<RatingFeatures> features;
};

/// Popularity uses the 30 most recent ratings of the movie strictly
/// before the record's timestamp; previous is 1 iff the user's preceding
/// rating exceeds 3, and 0 for the user's first rating.
FeatureTable compute_features(std::vector<RatingsRecord> records);

/// One sample per user with y = ratings and X = Z =
/// [1, Children share, Comedy share, Drama share, popularity, previous].
Dataset build_movielens_features(std::vector<RatingsRecord> records);

/// Synthetic ratings stream with ML-like structure, for tests and demos.
std::vector<RatingsRecord> synthetic_ratings(std::size_t num_records, std::size_t num_users,
                                             std::size_t num_movies, std::uint64_t seed);

}  // namespace dem::datagen
