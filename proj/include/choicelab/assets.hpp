#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace choicelab::assets {

// Tab-separated table: first non-comment line is the header, '#' starts a
// comment line, and cells may contain the escapes \n \t \\.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view col) const;
  const std::string& at(std::size_t row, std::string_view col) const;
  std::size_t size() const { return rows.size(); }
};

std::string unescape(std::string_view cell);
std::string escape(std::string_view text);

Table parse_table(std::string_view text, std::string name);
// Throws MISSING_ASSET if the file is absent or unreadable.
Table load_table(const std::filesystem::path& path);

// CHOICELAB_ASSETS environment variable, else the source tree's assets/.
std::filesystem::path default_asset_dir();

// Wording templates keyed by (domain, template_id, field).
class TemplateBook {
 public:
  static TemplateBook load(const std::filesystem::path& asset_dir);

  std::vector<std::string> ids(std::string_view domain) const;
  const std::string& field(std::string_view domain, std::string_view id, std::string_view name) const;
  bool has(std::string_view domain) const;

 private:
  // domain -> ordered template ids, and (domain|id|field) -> text
  std::map<std::string, std::vector<std::string>, std::less<>> ids_;
  std::map<std::string, std::string, std::less<>> fields_;
};

// Replace {name} placeholders; an unknown placeholder is a VALIDATION error.
std::string render(std::string_view pattern, const std::map<std::string, std::string, std::less<>>& vars);

}  // namespace choicelab::assets
