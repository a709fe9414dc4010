#pragma once

// Binary matrix files, key=value text files and CSV.
//
// Matrix file layout (little-endian):
//   "SPMR" | u32 version = 1 | u8 kind | u64 rows | u64 cols | rows*cols f64, column-major
// Every write goes to a temporary file in the target directory and is renamed
// into place.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stochrom/paths.hpp"
#include "stochrom/types.hpp"

namespace stochrom {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MatrixKind : std::uint8_t { generic = 0, basis = 1, spectrum = 2, increments = 3, trajectory = 4 };

struct MatrixFile {
  MatrixKind kind = MatrixKind::generic;
  Mat data;
};

std::string encode_matrix(const Mat& m, MatrixKind kind);
MatrixFile decode_matrix(std::string_view bytes);

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Mat& m, MatrixKind kind);
MatrixFile read_matrix(const std::filesystem::path& path);
// Reads and checks the kind.
Mat read_matrix(const std::filesystem::path& path, MatrixKind expected);

// Increments plus a "<path>.meta" key=value sidecar with grid and rng fields.
void write_wiener(const std::filesystem::path& path, const WienerPath& w);
WienerPath read_wiener(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

// Ordered key=value pairs, one per line; '#' starts a comment.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
std::string format_key_values(const KeyValues& kv);
KeyValues parse_key_values(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// NaN values are written as "undefined".
std::string format_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

}  // namespace stochrom
