#include "tlsa/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <array>

#include "tlsa/error.hpp"

namespace tlsa {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TooFewScores: return "TooFewScores";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::LabelCollision: return "LabelCollision";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoPrivateSamples: return "NoPrivateSamples";
    case ErrorCode::MissingTruth: return "MissingTruth";
    case ErrorCode::EmptyEval: return "EmptyEval";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string unicode_fold(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::InvalidArgument, "ICU NFC normalizer unavailable");
  }
  icu::UnicodeString text = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  icu::UnicodeString normalized = nfc->normalize(text, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::InvalidArgument, "NFC normalization failed");
  }
  normalized.toLower(icu::Locale::getRoot());
  // Lowercasing can produce denormalized sequences for a few code points.
  normalized = nfc->normalize(normalized, status);
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

}  // namespace

std::string_view trim(std::string_view text) {
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

std::string normalize_label(std::string_view raw) {
  bool ascii = true;
  for (char c : raw) {
    if (static_cast<unsigned char>(c) >= 0x80) {
      ascii = false;
      break;
    }
  }
  std::string folded;
  if (ascii) {
    folded.reserve(raw.size());
    for (char c : raw) {
      folded.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
  } else {
    folded = unicode_fold(raw);
  }

  std::string collapsed;
  collapsed.reserve(folded.size());
  bool pending_space = false;
  for (char c : trim(folded)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) collapsed.push_back(' ');
    pending_space = false;
    collapsed.push_back(c);
  }

  static constexpr std::array<std::string_view, 3> kArticles{"a ", "an ", "the "};
  for (std::string_view article : kArticles) {
    if (collapsed.size() > article.size() && collapsed.starts_with(article)) {
      return collapsed.substr(article.size());
    }
  }
  return collapsed;
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      break;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

}  // namespace tlsa
