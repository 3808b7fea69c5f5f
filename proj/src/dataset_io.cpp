#include "dem/datagen/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dem/lmm/json.hpp"

namespace dem::datagen {

namespace {

static_assert(std::endian::native == std::endian::little, "dataset IO assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError("dataset: unexpected end of file");
  }
  return v;
}

std::filesystem::path with_ext(std::filesystem::path p, const char* ext) {
  const auto e = p.extension();
  if (e == ".demd" || e == ".json") p.replace_extension();
  p += ext;
  return p;
}

}  // namespace

void write_dataset_binary(std::ostream& os, const Dataset& data) {
  os.write(kDatasetMagic.data(), kDatasetMagic.size());
  put<std::uint64_t>(os, data.m());
  put<std::uint64_t>(os, static_cast<std::uint64_t>(data.p));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(data.q));
  put<std::uint64_t>(os, data.n_obs());
  for (const auto& s : data.samples) put<std::uint64_t>(os, static_cast<std::uint64_t>(s.n()));
  for (const auto& s : data.samples) {
    for (Eigen::Index r = 0; r < s.n(); ++r) put<double>(os, s.y()(r));
  }
  for (const auto& s : data.samples) {
    for (Eigen::Index r = 0; r < s.n(); ++r) {
      for (Eigen::Index c = 0; c < data.p; ++c) put<double>(os, s.X()(r, c));
    }
  }
  for (const auto& s : data.samples) {
    for (Eigen::Index r = 0; r < s.n(); ++r) {
      for (Eigen::Index c = 0; c < data.q; ++c) put<double>(os, s.Z()(r, c));
    }
  }
  if (!os) throw FormatError("dataset: write failed");
}

Dataset read_dataset_binary(std::istream& is) {
  std::array<char, 5> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kDatasetMagic) {
    throw FormatError("dataset: missing DEMD1 header");
  }
  const auto m = get<std::uint64_t>(is);
  const auto p = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  const auto q = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  const auto n = get<std::uint64_t>(is);
  std::vector<std::uint64_t> counts(m);
  std::uint64_t total = 0;
  for (auto& c : counts) {
    c = get<std::uint64_t>(is);
    if (c == 0) throw FormatError("dataset: sample with no observations");
    total += c;
  }
  if (total != n) throw FormatError("dataset: sample counts do not sum to n");

  std::vector<Vector> ys(m);
  std::vector<Matrix> xs(m), zs(m);
  for (std::size_t i = 0; i < m; ++i) {
    ys[i].resize(static_cast<Eigen::Index>(counts[i]));
    for (auto& v : ys[i]) v = get<double>(is);
  }
  for (std::size_t i = 0; i < m; ++i) {
    xs[i].resize(static_cast<Eigen::Index>(counts[i]), p);
    for (Eigen::Index r = 0; r < xs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < p; ++c) xs[i](r, c) = get<double>(is);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    zs[i].resize(static_cast<Eigen::Index>(counts[i]), q);
    for (Eigen::Index r = 0; r < zs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < q; ++c) zs[i](r, c) = get<double>(is);
    }
  }
  Dataset out;
  out.p = p;
  out.q = q;
  out.samples.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.samples.emplace_back(std::move(ys[i]), std::move(xs[i]), std::move(zs[i]));
  }
  return out;
}

void save_dataset(const std::filesystem::path& stem, const Dataset& data) {
  const auto bin = with_ext(stem, ".demd");
  const auto side = with_ext(stem, ".json");
  {
    std::ofstream os(bin, std::ios::binary);
    if (!os) throw FormatError("cannot open " + bin.string() + " for writing");
    write_dataset_binary(os, data);
  }
  nlohmann::json j = {
      {"format", "DEMD1"},
      {"data", bin.filename().string()},
      {"m", data.m()},
      {"n", data.n_obs()},
      {"p", data.p},
      {"q", data.q},
      {"seed", data.seed},
      {"source", data.source},
  };
  if (data.truth) j["truth"] = lmm::theta_to_json(*data.truth);
  std::ofstream os(side);
  if (!os) throw FormatError("cannot open " + side.string() + " for writing");
  os << j.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto bin = with_ext(path, ".demd");
  const auto side = with_ext(path, ".json");
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw FormatError("cannot open " + bin.string());
  Dataset out = read_dataset_binary(is);
  std::ifstream js(side);
  if (js) {
    nlohmann::json j;
    try {
      js >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(side.string() + ": " + e.what());
    }
    if (j.value("p", out.p) != out.p || j.value("q", out.q) != out.q) {
      throw FormatError(side.string() + ": dimensions disagree with the binary file");
    }
    out.seed = j.value("seed", std::uint64_t{0});
    out.source = j.value("source", std::string{});
    if (j.contains("truth")) out.truth = lmm::theta_from_json(j["truth"]);
  }
  return out;
}

}  // namespace dem::datagen
