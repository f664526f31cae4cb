#include "clean/languages.hpp"

#include <cctype>

#include "binary_io.hpp"
#include "clean/error.hpp"

namespace clean {

namespace detail {
extern const std::string_view kBuiltinAliasTable;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const LanguageTable& LanguageTable::builtin() {
  static const LanguageTable table = parse(detail::kBuiltinAliasTable);
  return table;
}

LanguageTable LanguageTable::parse(std::string_view tsv) {
  LanguageTable table;
  std::size_t line_no = 0;
  while (!tsv.empty()) {
    const auto nl = tsv.find('\n');
    std::string_view line = tsv.substr(0, nl);
    tsv = nl == std::string_view::npos ? std::string_view{} : tsv.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      auto body = trim(line.substr(1));
      if (body.starts_with("version")) table.version_ = std::string(trim(body.substr(7)));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw Error(ErrorKind::SchemaViolation, "alias line needs alias<TAB>code", line_no);
    const auto alias = lower(trim(line.substr(0, tab)));
    const auto code = lower(trim(line.substr(tab + 1)));
    if (alias.empty() || code.empty())
      throw Error(ErrorKind::SchemaViolation, "empty alias or code", line_no);
    auto [it, inserted] = table.aliases_.emplace(alias, code);
    if (!inserted && it->second != code)
      throw Error(ErrorKind::SchemaViolation, "alias '" + alias + "' mapped twice", line_no);
    table.canonical_.insert(code);
  }
  for (const auto& code : table.canonical_) {
    auto [it, inserted] = table.aliases_.emplace(code, code);
    if (!inserted && it->second != code)
      throw Error(ErrorKind::SchemaViolation,
                  "canonical code '" + code + "' is itself aliased to '" + it->second + "'");
  }
  return table;
}

LanguageTable LanguageTable::load(const std::filesystem::path& path) {
  const auto data = detail::read_file(path);
  return parse(std::string_view(data.data(), data.size()));
}

std::string LanguageTable::canonicalize(std::string_view code) const {
  auto key = lower(trim(code));
  if (auto it = aliases_.find(key); it != aliases_.end()) return it->second;
  return key;
}

bool LanguageTable::is_known(std::string_view code) const {
  return canonical_.contains(canonicalize(code));
}

}  // namespace clean
