#pragma once

// JSON Lines readers/writers for test sets and pools, plus the adapter for
// MIND-style tab-separated news dumps.

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"

namespace gate {

/// Parses {"id","body"} lines. Blank lines are skipped; ids must be unique.
inline std::vector<TestItem> read_items_jsonl(std::istream& in) {
  std::vector<TestItem> items;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim_view(line).empty()) continue;
    TestItem item;
    try {
      item = nlohmann::json::parse(line).get<TestItem>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::corrupt_record, "line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(item.id).second)
      throw Error(Errc::invalid_argument, "line " + std::to_string(lineno) + ": duplicate id \"" + item.id + "\"");
    items.push_back(std::move(item));
  }
  return items;
}

inline std::vector<TestItem> read_items_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  return read_items_jsonl(in);
}

inline void write_items_jsonl(std::ostream& out, const std::vector<TestItem>& items) {
  for (const auto& it : items) out << nlohmann::json(it).dump() << '\n';
}

/// Rows are either (id, category, title, abstract) or the full MIND news.tsv
/// layout (id, category, subcategory, title, abstract, url, ...), told apart
/// by having six or more columns. The body is "title\nabstract", abstract
/// omitted when empty. Duplicate ids keep the first row.
inline std::vector<TestItem> read_mind_tsv(std::istream& in) {
  std::vector<TestItem> items;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim_view(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 4) throw Error(Errc::corrupt_record, "line " + std::to_string(lineno) + ": expected >= 4 columns");
    const bool has_subcategory = cols.size() >= 6;
    const std::string& title = cols[has_subcategory ? 3 : 2];
    const std::string& abstract = cols[has_subcategory ? 4 : 3];
    TestItem item{cols[0], detail::trim(title)};
    if (!detail::trim_view(abstract).empty()) item.body += "\n" + detail::trim(abstract);
    if (!seen.insert(item.id).second) continue;
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace gate
