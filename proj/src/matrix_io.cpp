#include "stochrom/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

namespace stochrom {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'M', 'R'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 1 + 8 + 8;

void put_u64(std::string& out, std::uint64_t v, int bytes = 8) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(std::string_view in, std::size_t pos, int bytes = 8) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string encode_matrix(const Mat& m, MatrixKind kind) {
  std::string out;
  const auto rows = static_cast<std::uint64_t>(m.rows());
  const auto cols = static_cast<std::uint64_t>(m.cols());
  out.reserve(kHeaderBytes + 8 * rows * cols);
  out.append(kMagic, 4);
  put_u64(out, kVersion, 4);
  out.push_back(static_cast<char>(kind));
  put_u64(out, rows);
  put_u64(out, cols);
  const double* d = m.data();
  for (std::uint64_t i = 0; i < rows * cols; ++i) put_u64(out, std::bit_cast<std::uint64_t>(d[i]));
  return out;
}

MatrixFile decode_matrix(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("matrix file: bad magic or truncated header");
  const auto version = static_cast<std::uint32_t>(get_u64(bytes, 4, 4));
  if (version != kVersion) throw IoError("matrix file: unsupported version " + std::to_string(version));
  const auto kind = static_cast<std::uint8_t>(bytes[8]);
  if (kind > 4) throw IoError("matrix file: unknown kind " + std::to_string(kind));
  const std::uint64_t rows = get_u64(bytes, 9);
  const std::uint64_t cols = get_u64(bytes, 17);
  if (cols != 0 && rows > (std::numeric_limits<std::uint64_t>::max() / 8) / cols)
    throw IoError("matrix file: dimensions overflow");
  if (bytes.size() != kHeaderBytes + 8 * rows * cols) throw IoError("matrix file: payload length does not match header");
  MatrixFile f;
  f.kind = static_cast<MatrixKind>(kind);
  f.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  double* d = f.data.data();
  for (std::uint64_t i = 0; i < rows * cols; ++i) d[i] = std::bit_cast<double>(get_u64(bytes, kHeaderBytes + 8 * i));
  return f;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("missing or unreadable file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_matrix(const std::filesystem::path& path, const Mat& m, MatrixKind kind) {
  write_file_atomic(path, encode_matrix(m, kind));
}

MatrixFile read_matrix(const std::filesystem::path& path) {
  try {
    return decode_matrix(read_file(path));
  } catch (const IoError& e) {
    const std::string what = e.what();
    if (what.rfind("missing", 0) == 0) throw;
    throw IoError(path.string() + ": " + what);
  }
}

Mat read_matrix(const std::filesystem::path& path, MatrixKind expected) {
  MatrixFile f = read_matrix(path);
  if (f.kind != expected)
    throw IoError(path.string() + ": expected matrix kind " + std::to_string(static_cast<int>(expected)) + ", found " +
                  std::to_string(static_cast<int>(f.kind)));
  return std::move(f.data);
}

void write_wiener(const std::filesystem::path& path, const WienerPath& w) {
  const TimeGrid& g = w.grid();
  KeyValues kv = {{"t0", format_double(g.t0)},
                  {"dt", format_double(g.dt)},
                  {"n_steps", std::to_string(g.n_steps)},
                  {"m", std::to_string(w.m())},
                  {"seed", std::to_string(w.rng().seed)},
                  {"stream_id", std::to_string(w.rng().stream_id)}};
  std::filesystem::path meta = path;
  meta += ".meta";
  write_matrix(path, w.increments(), MatrixKind::increments);
  write_file_atomic(meta, format_key_values(kv));
}

WienerPath read_wiener(const std::filesystem::path& path) {
  Mat inc = read_matrix(path, MatrixKind::increments);
  std::filesystem::path meta = path;
  meta += ".meta";
  const KeyValues kv = parse_key_values(read_file(meta));
  auto get = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : kv)
      if (k == key) return v;
    throw IoError(meta.string() + ": missing key " + key);
  };
  TimeGrid grid(parse_double(get("t0")), parse_double(get("dt")), std::stoull(get("n_steps")));
  RngSpec rng{std::stoull(get("seed")), std::stoull(get("stream_id"))};
  return WienerPath(grid, std::stoull(get("m")), rng, std::move(inc));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  s = trim(s);
  if (s == "nan" || s == "undefined") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw PreconditionError("not a number: '" + std::string(s) + "'");
  return v;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw PreconditionError("line " + std::to_string(line_no) + ": expected key=value");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw PreconditionError("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

std::string format_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += std::isnan(row[i]) ? std::string("undefined") : format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  bool first = true;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (first) {
      for (auto c : cells) t.header.emplace_back(trim(c));
      first = false;
    } else {
      if (cells.size() != t.header.size()) throw PreconditionError("csv: row width does not match header");
      std::vector<double> row;
      row.reserve(cells.size());
      for (auto c : cells) row.push_back(parse_double(c));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

}  // namespace stochrom
