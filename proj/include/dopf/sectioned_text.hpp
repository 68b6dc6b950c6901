#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopf {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text document made of `[section]` headers followed by lines.
/// Lines are either `key = value` pairs or comma-separated rows. `#` starts
/// a comment. Sections keep their order of appearance.
class SectionedText {
 public:
  struct Line {
    int number = 0;
    std::string text;
  };

  static SectionedText parse(std::istream& in, const std::string& origin = "<input>");
  static SectionedText load(const std::string& path);

  bool has(const std::string& section) const;
  const std::vector<Line>& lines(const std::string& section) const;
  std::vector<std::string> section_names() const { return order_; }

  /// `key = value` pairs of a section; duplicate keys are an error.
  std::map<std::string, std::string> pairs(const std::string& section) const;
  /// Comma-separated rows of a section, trimmed.
  std::vector<std::vector<std::string>> rows(const std::string& section) const;

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<Line>> sections_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
double parse_double(const std::string& s, const std::string& context);
int parse_int(const std::string& s, const std::string& context);
bool parse_bool(const std::string& s, const std::string& context);
/// Shortest text that parses back to exactly the same double.
std::string format_exact(double v);

}  // namespace dopf
