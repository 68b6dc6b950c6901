#include "dopf/sectioned_text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dopf {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || ptr != end) throw FormatError(context + ": expected a number, got '" + t + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& context) {
  const std::string t = trim(s);
  int v = 0;
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || ptr != end) throw FormatError(context + ": expected an integer, got '" + t + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& context) {
  std::string t = trim(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw FormatError(context + ": expected a boolean, got '" + t + "'");
}

std::string format_exact(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

SectionedText SectionedText::parse(std::istream& in, const std::string& origin) {
  SectionedText doc;
  doc.origin_ = origin;
  std::string current;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(origin + ":" + std::to_string(number) + ": malformed section header");
      current = trim(line.substr(1, line.size() - 2));
      if (doc.sections_.count(current)) throw FormatError(origin + ":" + std::to_string(number) + ": duplicate section [" + current + "]");
      doc.order_.push_back(current);
      doc.sections_[current];
      continue;
    }
    if (current.empty()) throw FormatError(origin + ":" + std::to_string(number) + ": content before the first section");
    doc.sections_[current].push_back({number, line});
  }
  return doc;
}

SectionedText SectionedText::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return parse(in, path);
}

bool SectionedText::has(const std::string& section) const { return sections_.count(section) > 0; }

const std::vector<SectionedText::Line>& SectionedText::lines(const std::string& section) const {
  static const std::vector<Line> empty;
  const auto it = sections_.find(section);
  return it == sections_.end() ? empty : it->second;
}

std::map<std::string, std::string> SectionedText::pairs(const std::string& section) const {
  std::map<std::string, std::string> out;
  for (const auto& line : lines(section)) {
    const auto eq = line.text.find('=');
    const std::string where = origin_ + ":" + std::to_string(line.number);
    if (eq == std::string::npos) throw FormatError(where + ": expected 'key = value' in [" + section + "]");
    const std::string key = trim(line.text.substr(0, eq));
    if (key.empty()) throw FormatError(where + ": empty key");
    if (!out.emplace(key, trim(line.text.substr(eq + 1))).second)
      throw FormatError(where + ": duplicate key '" + key + "' in [" + section + "]");
  }
  return out;
}

std::vector<std::vector<std::string>> SectionedText::rows(const std::string& section) const {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : lines(section)) out.push_back(split(line.text, ','));
  return out;
}

}  // namespace dopf
