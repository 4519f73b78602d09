#include "tlsa/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <istream>

#include "tlsa/error.hpp"
#include "tlsa/text.hpp"

namespace tlsa {

void SynonymDb::add_group(std::vector<std::string> lemmas) {
  std::vector<std::string> group;
  for (std::string& raw : lemmas) {
    std::replace(raw.begin(), raw.end(), '_', ' ');
    std::string lemma = normalize_label(raw);
    if (lemma.empty()) continue;
    if (std::find(group.begin(), group.end(), lemma) == group.end()) {
      group.push_back(std::move(lemma));
    }
  }
  if (group.empty()) throw Error(ErrorCode::MalformedLine, "synonym group has no lemma");
  const std::size_t id = groups_.size();
  for (const std::string& lemma : group) index_[lemma].push_back(id);
  groups_.push_back(std::move(group));
}

const std::vector<std::size_t>& SynonymDb::groups_of(std::string_view lemma) const {
  static const std::vector<std::size_t> kNone;
  auto it = index_.find(std::string(lemma));
  return it == index_.end() ? kNone : it->second;
}

bool SynonymDb::are_synonyms(std::string_view a, std::string_view b) const {
  if (a == b) return true;
  const auto& ga = groups_of(a);
  const auto& gb = groups_of(b);
  // Both lists are ascending by construction.
  auto i = ga.begin();
  auto j = gb.begin();
  while (i != ga.end() && j != gb.end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

SynonymDb read_synonym_db(std::istream& in) {
  SynonymDb db;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    if (trim(body).empty()) continue;
    try {
      db.add_group(split(body, '|'));
    } catch (const Error&) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": no lemma");
    }
  }
  if (db.empty()) throw Error(ErrorCode::EmptyDatabase, "no synonym groups");
  return db;
}

SynonymDb parse_synonym_db(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_synonym_db(in);
}

bool are_synonyms(const SynonymDb& db, std::string_view a, std::string_view b) {
  return db.are_synonyms(a, b);
}

SynonymAlignment synonym_align(const SynonymDb& db, const LabelSet& discovered,
                               const LabelSet& source) {
  SynonymAlignment out;
  for (const std::string& label : discovered) {
    auto match = std::find_if(source.begin(), source.end(),
                              [&](const std::string& s) { return db.are_synonyms(label, s); });
    if (match == source.end()) {
      out.kept.insert(label);
    } else {
      out.rewrites.emplace_back(label, *match);
    }
  }
  return out;
}

}  // namespace tlsa
