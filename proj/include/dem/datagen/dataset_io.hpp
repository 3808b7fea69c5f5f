#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>

#include "dem/datagen/simulate.hpp"

namespace dem::datagen {

inline constexpr std::array<char, 5> kDatasetMagic = {'D', 'E', 'M', 'D', '1'};

/// Columnar little-endian layout:
///   magic "DEMD1" | u64 m | u64 p | u64 q | u64 n | u64 counts[m]
///   | f64 y[n] | f64 X[n*p] | f64 Z[n*q]      (X and Z row-major)
void write_dataset_binary(std::ostream& os, const Dataset& data);
Dataset read_dataset_binary(std::istream& is);

/// Writes `<stem>.demd` and the JSON sidecar `<stem>.json`.
void save_dataset(const std::filesystem::path& stem, const Dataset& data);

/// Accepts either the stem, the .demd path or the .json path.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dem::datagen
