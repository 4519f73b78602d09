#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tlsa/corpus.hpp"

namespace tlsa {

/// Synonym groups extracted from WordNet synsets.
///
/// SYN text format: one group per line, lemmas separated by '|', underscores
/// stand for spaces, '#' starts a comment. Lemmas are normalized with the
/// same rules as labels. Only shared-group membership counts as synonymy;
/// hypernym and hyponym relations are not represented.
class SynonymDb {
 public:
  SynonymDb() = default;

  void add_group(std::vector<std::string> lemmas);

  bool are_synonyms(std::string_view a, std::string_view b) const;
  const std::vector<std::size_t>& groups_of(std::string_view lemma) const;

  std::size_t group_count() const noexcept { return groups_.size(); }
  const std::vector<std::string>& group(std::size_t i) const { return groups_.at(i); }
  bool empty() const noexcept { return groups_.empty(); }

 private:
  std::vector<std::vector<std::string>> groups_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

/// Throws MalformedLine (a line with no lemma) and EmptyDatabase.
SynonymDb parse_synonym_db(const std::filesystem::path& path);
SynonymDb read_synonym_db(std::istream& in);

bool are_synonyms(const SynonymDb& db, std::string_view a, std::string_view b);

struct SynonymAlignment {
  LabelSet kept{LabelKind::PrivateCandidate};
  /// removed discovered label -> source label it matched, in discovered order
  std::vector<std::pair<std::string, std::string>> rewrites;
};

/// Removes every discovered label that equals or shares a synset with some
/// source label.
SynonymAlignment synonym_align(const SynonymDb& db, const LabelSet& discovered,
                               const LabelSet& source);

}  // namespace tlsa
