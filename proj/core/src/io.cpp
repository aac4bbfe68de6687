#include "mdspde/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace mdspde::io {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'S', 'P', 'D', 'E', 'P', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "binary format assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("truncated binary bundle");
  return v;
}

void put_series(std::ostream& os, const char* name, const TimeSeries& s) {
  const std::uint32_t len = static_cast<std::uint32_t>(std::strlen(name));
  put(os, len);
  os.write(name, len);
  put(os, static_cast<std::uint64_t>(s.rows()));
  put(os, static_cast<std::uint64_t>(s.cols()));
  os.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(sizeof(double) * s.size()));
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_paths_csv(std::ostream& os, const PathBundle& bundle) {
  os << "t,component,mode,value\n";
  const std::pair<const char*, const std::optional<TimeSeries>*> parts[] = {
      {"X", &bundle.X}, {"Y", &bundle.Y}, {"eta", &bundle.eta},
      {"Z", &bundle.Z}, {"u1", &bundle.u1}, {"u2", &bundle.u2}};
  for (std::size_t k = 0; k < bundle.times.size(); ++k) {
    const std::string t = format_double(bundle.times[k]);
    for (const auto& [name, series] : parts) {
      if (!*series) continue;
      const auto& s = **series;
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        os << t << ',' << name << ',' << j + 1 << ',' << format_double(s(static_cast<Eigen::Index>(k), j)) << '\n';
      }
    }
  }
}

void write_paths_binary(std::ostream& os, const PathBundle& bundle) {
  os.write(kMagic, sizeof kMagic);
  put(os, kVersion);
  put(os, bundle.seed);
  put(os, bundle.dt);
  put(os, static_cast<std::uint8_t>(bundle.noise_off));
  put(os, bundle.control_energy);
  put(os, static_cast<std::uint8_t>(bundle.energy_cap_hit));
  put(os, static_cast<std::uint64_t>(bundle.times.size()));
  os.write(reinterpret_cast<const char*>(bundle.times.data()),
           static_cast<std::streamsize>(sizeof(double) * bundle.times.size()));
  const std::pair<const char*, const std::optional<TimeSeries>*> parts[] = {
      {"X", &bundle.X}, {"Y", &bundle.Y}, {"eta", &bundle.eta},
      {"Z", &bundle.Z}, {"u1", &bundle.u1}, {"u2", &bundle.u2}};
  std::uint32_t count = 0;
  for (const auto& p : parts) count += *p.second ? 1 : 0;
  put(os, count);
  for (const auto& [name, series] : parts) {
    if (*series) put_series(os, name, **series);
  }
}

PathBundle read_paths_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error("not an mdspde path bundle");
  }
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported bundle version");
  PathBundle b;
  b.seed = get<std::uint64_t>(is);
  b.dt = get<double>(is);
  b.noise_off = get<std::uint8_t>(is) != 0;
  b.control_energy = get<double>(is);
  b.energy_cap_hit = get<std::uint8_t>(is) != 0;
  b.times.resize(get<std::uint64_t>(is));
  if (!is.read(reinterpret_cast<char*>(b.times.data()), static_cast<std::streamsize>(sizeof(double) * b.times.size()))) {
    throw std::runtime_error("truncated binary bundle");
  }
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated binary bundle");
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    TimeSeries s(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!is.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(sizeof(double) * s.size()))) {
      throw std::runtime_error("truncated binary bundle");
    }
    if (name == "X") b.X = std::move(s);
    else if (name == "Y") b.Y = std::move(s);
    else if (name == "eta") b.eta = std::move(s);
    else if (name == "Z") b.Z = std::move(s);
    else if (name == "u1") b.u1 = std::move(s);
    else if (name == "u2") b.u2 = std::move(s);
    else throw std::runtime_error("unknown series '" + name + "' in bundle");
  }
  return b;
}

void write_invariant_csv(std::ostream& os, const InvariantSample& sample) {
  os << "sample_index,mode,value\n";
  for (Eigen::Index i = 0; i < sample.samples.rows(); ++i) {
    for (Eigen::Index k = 0; k < sample.samples.cols(); ++k) {
      os << i << ',' << k + 1 << ',' << format_double(sample.samples(i, k)) << '\n';
    }
  }
}

void write_psi2_csv(std::ostream& os, const Psi2Matrix& psi) {
  os << "row,col,value,se\n";
  for (Eigen::Index i = 0; i < psi.entries.rows(); ++i) {
    for (Eigen::Index j = 0; j < psi.entries.cols(); ++j) {
      os << i + 1 << ',' << j + 1 << ',' << format_double(psi.entries(i, j)) << ','
         << format_double(psi.se(i, j)) << '\n';
    }
  }
}

void write_occupation_csv(std::ostream& os, const OccupationMeasure& occ, int modes) {
  os << "t,s,mode,y_value,u1_value,u2_value,weight\n";
  modes = std::min<int>(modes, static_cast<int>(occ.Y->cols()));
  for (const auto& c : occ.cells) {
    const auto s = static_cast<Eigen::Index>(c.s_index);
    const std::string t = format_double(c.t);
    const std::string sv = format_double(occ.times[c.s_index]);
    const std::string w = format_double(c.weight);
    for (int k = 0; k < modes; ++k) {
      os << t << ',' << sv << ',' << k + 1 << ',' << format_double((*occ.Y)(s, k)) << ','
         << format_double(occ.u1 ? (*occ.u1)(s, k) : 0.0) << ','
         << format_double(occ.u2 ? (*occ.u2)(s, k) : 0.0) << ',' << w << '\n';
    }
  }
}

void write_smooth_path_csv(std::ostream& os, const SmoothPath& psi) {
  os << "t,mode,value\n";
  for (std::size_t k = 0; k < psi.times.size(); ++k) {
    const std::string t = format_double(psi.times[k]);
    for (Eigen::Index j = 0; j < psi.values.cols(); ++j) {
      os << t << ',' << j + 1 << ',' << format_double(psi.values(static_cast<Eigen::Index>(k), j)) << '\n';
    }
  }
}

}  // namespace mdspde::io
