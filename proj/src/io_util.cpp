#include "strand/io_util.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace strand {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<double> read_two_column(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::map<long, double> by_index;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long idx;
    double value;
    if (!(ls >> idx >> value))
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected '<index>\\t<value>'");
    if (idx < 1)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": indices are 1-based");
    by_index[idx] = value;
  }
  if (by_index.empty()) return {};
  std::vector<double> values(static_cast<std::size_t>(by_index.rbegin()->first),
                             std::nan(""));
  for (const auto& [idx, value] : by_index) values[static_cast<std::size_t>(idx - 1)] = value;
  return values;
}

void write_two_column(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (std::isfinite(values[i])) out << (i + 1) << "\t" << values[i] << "\n";
  write_text_file(path, out.str());
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

}  // namespace strand
