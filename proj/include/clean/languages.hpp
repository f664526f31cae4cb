#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace clean {

/// Maps the 2-letter, bibliographic and legacy codes found in crawled
/// metadata onto ISO-639-3. Canonical codes always map to themselves, so
/// canonicalize() is idempotent.
class LanguageTable {
 public:
  /// The table compiled in from data/lang_aliases.tsv.
  static const LanguageTable& builtin();

  /// Lines are `alias<TAB>iso639_3`; `#` starts a comment, and a
  /// `# version <v>` comment names the table revision.
  static LanguageTable parse(std::string_view tsv);
  static LanguageTable load(const std::filesystem::path& path);

  /// Lowercases and trims, then applies the alias map. Unknown codes come
  /// back lowercased but otherwise unchanged.
  std::string canonicalize(std::string_view code) const;
  bool is_known(std::string_view code) const;

  const std::string& version() const { return version_; }
  std::size_t size() const { return aliases_.size(); }

 private:
  std::map<std::string, std::string, std::less<>> aliases_;
  std::set<std::string, std::less<>> canonical_;
  std::string version_;
};

}  // namespace clean
