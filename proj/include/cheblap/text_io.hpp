#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cheblap/matrix.hpp"

namespace cheblap::io {

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

// Strict parse of a whole token; throws ParseError mentioning `where`.
double parse_double(std::string_view token, const std::string& where);
long long parse_integer(std::string_view token, const std::string& where);

std::vector<std::string_view> split_whitespace(std::string_view line);
// The views point into the argument, so temporaries are rejected.
std::vector<std::string_view> split_whitespace(std::string&& line) = delete;

// Reads a file line by line, keeping track of the 1-based line number for
// error messages. Blank lines are skipped; comment lines start with '#'.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source);

  // Next non-blank, non-comment line; false at end of input.
  bool next(std::string& line);
  // Like next() but throws ParseError on end of input.
  std::string expect(const char* what);

  // "source:line" for the most recently returned line.
  std::string where() const;
  const std::vector<std::string>& comments() const { return comments_; }

 private:
  std::istream& in_;
  std::string source_;
  long line_no_ = 0;
  std::vector<std::string> comments_;
};

// Opens for reading; throws MissingFile.
std::ifstream open_input(const std::filesystem::path& path);
// Opens for writing (creating parent directories); throws MissingFile when
// the target cannot be created.
std::ofstream open_output(const std::filesystem::path& path);

// Square matrix format: first line `n`, then n rows of n reals.
Matrix read_square_matrix(std::istream& in, const std::string& source);
void write_square_matrix(std::ostream& out, const Matrix& m);

// Row-major values on one line per row.
void write_rows(std::ostream& out, const Matrix& m);

}  // namespace cheblap::io
