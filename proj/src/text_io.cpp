#include "cheblap/text_io.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <system_error>

#include "cheblap/error.hpp"

namespace cheblap::io {

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error(ErrorCode::NonFinite, "cannot format value");
  return std::string(buf, ptr);
}

double parse_double(std::string_view token, const std::string& where) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || token.empty()) {
    throw Error(ErrorCode::ParseError, where + ": malformed number '" + std::string(token) + "'");
  }
  return value;
}

long long parse_integer(std::string_view token, const std::string& where) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty()) {
    throw Error(ErrorCode::ParseError, where + ": malformed integer '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

LineReader::LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

bool LineReader::next(std::string& line) {
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      comments_.push_back(line.substr(first));
      continue;
    }
    return true;
  }
  return false;
}

std::string LineReader::expect(const char* what) {
  std::string line;
  if (!next(line)) {
    throw Error(ErrorCode::ParseError, source_ + ":" + std::to_string(line_no_ + 1) +
                                           ": unexpected end of file, expected " + what);
  }
  return line;
}

std::string LineReader::where() const { return source_ + ":" + std::to_string(line_no_); }

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write '" + path.string() + "'");
  return out;
}

Matrix read_square_matrix(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  std::string line = reader.expect("matrix size");
  auto head = split_whitespace(line);
  if (head.size() != 1) throw Error(ErrorCode::ParseError, reader.where() + ": expected a single size");
  const long long n = parse_integer(head[0], reader.where());
  if (n <= 0) throw Error(ErrorCode::ParseError, reader.where() + ": size must be positive");
  Matrix m(n, n);
  for (long long i = 0; i < n; ++i) {
    line = reader.expect("matrix row");
    auto tokens = split_whitespace(line);
    if (static_cast<long long>(tokens.size()) != n) {
      throw Error(ErrorCode::ParseError, reader.where() + ": expected " + std::to_string(n) + " values");
    }
    for (long long j = 0; j < n; ++j) m(i, j) = parse_double(tokens[j], reader.where());
  }
  return m;
}

void write_rows(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_square_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << '\n';
  write_rows(out, m);
}

}  // namespace cheblap::io
