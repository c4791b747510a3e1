#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kgp/error.hpp"

namespace kgp::io {

// Binary helpers. All on-disk integers and floats are little-endian.

template <class T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void write_le(std::ostream& os, T v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(Errc::Format, "truncated " + what);
  return byteswap_if_big(v);
}

inline void write_floats(std::ostream& os, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < n; ++i) write_le(os, data[i]);
  }
}

inline void read_floats(std::istream& is, float* data, std::size_t n, const std::string& what) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw Error(Errc::Format, "truncated " + what);
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = read_le<float>(is, what);
  }
}

/// In-memory image of an "NDF1" file: n_rows x (n_modalities * dim) float32.
struct NdfMatrix {
  std::uint32_t rows = 0;
  std::uint32_t modalities = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;

  std::size_t width() const { return static_cast<std::size_t>(modalities) * dim; }
};

inline void write_ndf(const std::filesystem::path& path, const NdfMatrix& m) {
  if (m.values.size() != static_cast<std::size_t>(m.rows) * m.width())
    throw Error(Errc::FeatureShapeMismatch, "NDF buffer size does not match header for " + path.string());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  os.write("NDF1", 4);
  write_le<std::uint32_t>(os, m.rows);
  write_le<std::uint32_t>(os, m.modalities);
  write_le<std::uint32_t>(os, m.dim);
  write_floats(os, m.values.data(), m.values.size());
  if (!os) throw Error(Errc::Io, "write failed for " + path.string());
}

inline NdfMatrix read_ndf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NDF1", 4) != 0) throw Error(Errc::Format, "bad NDF1 magic in " + path.string());
  NdfMatrix m;
  m.rows = read_le<std::uint32_t>(is, path.string());
  m.modalities = read_le<std::uint32_t>(is, path.string());
  m.dim = read_le<std::uint32_t>(is, path.string());
  m.values.resize(static_cast<std::size_t>(m.rows) * m.width());
  read_floats(is, m.values.data(), m.values.size(), path.string());
  if (is.peek() != std::char_traits<char>::eof())
    throw Error(Errc::FeatureShapeMismatch, "trailing bytes after NDF1 payload in " + path.string());
  return m;
}

inline std::vector<std::string> split_tabs(std::string_view line, char sep = '\t') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

struct TsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row
};

/// Reads a TSV whose first line is a header. Rows shorter than the header are
/// padded with empty fields (a trailing empty column such as `smiles`).
inline TsvTable read_tsv(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  TsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (t.header.empty()) {
      t.header = split_tabs(line);
      if (!expected_header.empty() && t.header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : "\\t") + h;
        throw Error(Errc::Format, path.string() + ": expected header " + want);
      }
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() > t.header.size())
      throw Error(Errc::Format, path.string() + ":" + std::to_string(lineno) + ": too many fields");
    fields.resize(t.header.size());
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw Error(Errc::Format, path.string() + ": missing header");
  return t;
}

inline std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                                char sep = '\t') {
  std::string out;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += sep;
      out += r[i];
    }
    out += '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out;
}

inline void write_tsv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows, char sep = '\t') {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  os << format_table(header, rows, sep);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  os << text;
}

/// Shortest round-trippable decimal form, used by every CSV writer so that
/// byte-identical output implies bit-identical values.
inline std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace kgp::io
