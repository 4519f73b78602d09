#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tlsa {

// NFC, lowercase, trim, collapse internal whitespace, then drop one leading
// article ("a ", "an ", "the "). Invalid UTF-8 is replaced by U+FFFD.
std::string normalize_label(std::string_view raw);

std::size_t count_words(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);

std::string_view trim(std::string_view text);

}  // namespace tlsa
