#include "choicelab/assets.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "choicelab/error.hpp"

#ifndef CHOICELAB_ASSET_DIR
#define CHOICELAB_ASSET_DIR "assets"
#endif

namespace choicelab::assets {
namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cells.push_back(unescape(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start)));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cells;
}

}  // namespace

std::string unescape(std::string_view cell) {
  std::string out;
  out.reserve(cell.size());
  for (std::size_t i = 0; i < cell.size(); ++i) {
    if (cell[i] == '\\' && i + 1 < cell.size()) {
      const char c = cell[++i];
      switch (c) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '\\': out += '\\'; break;
        default:
          out += '\\';
          out += c;
      }
    } else {
      out += cell[i];
    }
  }
  return out;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out;
}

std::size_t Table::column(std::string_view col) const {
  const auto it = std::find(columns.begin(), columns.end(), col);
  if (it == columns.end()) {
    throw Error(ErrorCode::MissingAsset, name + ": no column '" + std::string(col) + "'");
  }
  return static_cast<std::size_t>(it - columns.begin());
}

const std::string& Table::at(std::size_t row, std::string_view col) const {
  return rows.at(row).at(column(col));
}

Table parse_table(std::string_view text, std::string name) {
  Table t;
  t.name = std::move(name);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_tabs(line);
    if (t.columns.empty()) {
      t.columns = std::move(cells);
      continue;
    }
    if (cells.size() != t.columns.size()) {
      throw Error(ErrorCode::Validation, t.name + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(t.columns.size()) + " cells, got " +
                                             std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.columns.empty()) throw Error(ErrorCode::Validation, t.name + ": missing header");
  return t;
}

Table load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingAsset, "cannot open asset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_table(buf.str(), path.filename().string());
}

std::filesystem::path default_asset_dir() {
  if (const char* env = std::getenv("CHOICELAB_ASSETS"); env && *env) return env;
  return CHOICELAB_ASSET_DIR;
}

TemplateBook TemplateBook::load(const std::filesystem::path& asset_dir) {
  const auto table = load_table(asset_dir / "templates.tsv");
  TemplateBook book;
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& domain = table.at(r, "domain");
    const auto& id = table.at(r, "template_id");
    auto& ids = book.ids_[domain];
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    book.fields_[domain + "|" + id + "|" + table.at(r, "field")] = table.at(r, "text");
  }
  return book;
}

std::vector<std::string> TemplateBook::ids(std::string_view domain) const {
  const auto it = ids_.find(domain);
  if (it == ids_.end()) throw Error(ErrorCode::MissingAsset, "no templates for " + std::string(domain));
  return it->second;
}

bool TemplateBook::has(std::string_view domain) const { return ids_.find(domain) != ids_.end(); }

const std::string& TemplateBook::field(std::string_view domain, std::string_view id,
                                       std::string_view name) const {
  std::string key;
  key.append(domain).append("|").append(id).append("|").append(name);
  const auto it = fields_.find(key);
  if (it == fields_.end()) throw Error(ErrorCode::MissingAsset, "template field missing: " + key);
  return it->second;
}

std::string render(std::string_view pattern, const std::map<std::string, std::string, std::less<>>& vars) {
  std::string out;
  out.reserve(pattern.size() + 64);
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '{') {
      out += pattern[i];
      continue;
    }
    const auto close = pattern.find('}', i);
    if (close == std::string_view::npos) throw Error(ErrorCode::Validation, "unterminated placeholder");
    const auto key = pattern.substr(i + 1, close - i - 1);
    const auto it = vars.find(key);
    if (it == vars.end()) throw Error(ErrorCode::Validation, "unknown placeholder {" + std::string(key) + "}");
    out += it->second;
    i = close;
  }
  return out;
}

}  // namespace choicelab::assets
