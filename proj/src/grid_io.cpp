#include "mflow/grid_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <vector>

#include "mflow/error.hpp"

namespace mflow {
namespace {

constexpr std::uint32_t kVersion = 1;
constexpr char kMagic[4] = {'M', 'F', 'L', 'O'};

// Host is assumed little-endian (x86-64 / aarch64 targets); static_assert
// guards the raw writes below.
static_assert(std::endian::native == std::endian::little);

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(errc::io, "truncated MFLO file");
  return v;
}

void write_header(std::ofstream& out, const RegularGrid& g, std::uint32_t ncomp) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.dim()));
  put<std::uint32_t>(out, ncomp);
  for (int a = 0; a < g.dim(); ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(g.count(a)));
  for (int a = 0; a < g.dim(); ++a) {
    put<double>(out, g.lower(a));
    put<double>(out, g.upper(a));
  }
}

struct Header {
  RegularGrid grid;
  std::uint32_t ncomp;
};

Header read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(errc::bad_magic, "not an MFLO file: " + path);
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw Error(errc::io, "unsupported MFLO version");
  const auto d = get<std::uint32_t>(in);
  if (d < 1 || d > 3) throw Error(errc::io, "MFLO dimension out of range");
  const auto ncomp = get<std::uint32_t>(in);
  std::vector<int> n;
  for (std::uint32_t a = 0; a < d; ++a) n.push_back(static_cast<int>(get<std::uint32_t>(in)));
  Eigen::VectorXd lo(d), hi(d);
  for (std::uint32_t a = 0; a < d; ++a) {
    lo[a] = get<double>(in);
    hi[a] = get<double>(in);
  }
  return {RegularGrid(lo, hi, n), ncomp};
}

void write_values(std::ofstream& out, const Eigen::VectorXd& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double)) * v.size());
}

Eigen::VectorXd read_values(std::ifstream& in, std::int64_t count) {
  Eigen::VectorXd v(count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double)) * count);
  if (!in) throw Error(errc::io, "truncated MFLO values");
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::io, "cannot open for writing: " + path);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_mflo(const std::string& path, const ScalarGridField& f) {
  auto out = open_out(path);
  write_header(out, f.grid, 1);
  write_values(out, f.values);
}

void write_mflo(const std::string& path, const VectorGridField& f) {
  auto out = open_out(path);
  write_header(out, f.grid, static_cast<std::uint32_t>(f.components.size()));
  for (const auto& c : f.components) write_values(out, c);
}

ScalarGridField read_mflo_scalar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io, "cannot open: " + path);
  auto header = read_header(in, path);
  if (header.ncomp != 1) throw Error(errc::io, "expected scalar MFLO field");
  return ScalarGridField(header.grid, read_values(in, header.grid.size()), "loaded");
}

VectorGridField read_mflo_vector(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io, "cannot open: " + path);
  auto header = read_header(in, path);
  if (header.ncomp != static_cast<std::uint32_t>(header.grid.dim()))
    throw Error(errc::io, "expected one MFLO component per axis");
  VectorGridField f(header.grid, "loaded");
  for (auto& c : f.components) c = read_values(in, header.grid.size());
  return f;
}

void write_csv(const std::string& path, const ScalarGridField& f) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(errc::io, "cannot open for writing: " + path);
  for (int a = 0; a < f.grid.dim(); ++a) out << "x" << (a + 1) << ",";
  out << "value\n";
  for (std::int64_t i = 0; i < f.grid.size(); ++i) {
    const auto x = f.grid.node(i);
    for (int a = 0; a < f.grid.dim(); ++a) out << format_double(x[a]) << ",";
    out << format_double(f.values[i]) << "\n";
  }
}

void write_csv(const std::string& path, const VectorGridField& f) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(errc::io, "cannot open for writing: " + path);
  for (int a = 0; a < f.grid.dim(); ++a) out << "x" << (a + 1) << ",";
  for (int a = 0; a < f.grid.dim(); ++a) out << "v" << (a + 1) << (a + 1 < f.grid.dim() ? "," : "\n");
  for (std::int64_t i = 0; i < f.grid.size(); ++i) {
    const auto x = f.grid.node(i);
    for (int a = 0; a < f.grid.dim(); ++a) out << format_double(x[a]) << ",";
    for (int a = 0; a < f.grid.dim(); ++a)
      out << format_double(f.components[static_cast<std::size_t>(a)][i])
          << (a + 1 < f.grid.dim() ? "," : "\n");
  }
}

}  // namespace mflow
