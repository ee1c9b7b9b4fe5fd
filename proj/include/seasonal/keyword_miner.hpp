#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seasonal/corpus.hpp"

namespace seasonal::keywords {

/// A normalized token plus the byte range it was read from.
struct Token {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Lowercase word tokens. Hyphens and other punctuation separate tokens;
/// apostrophes inside a word are kept together with it, a possessive "'s" or
/// trailing apostrophe is dropped ("valentine's" -> "valentine") and other
/// apostrophes are elided ("don't" -> "dont").
std::vector<std::string> tokenize(std::string_view text);
std::vector<Token> tokenize_with_spans(std::string_view text);

/// Index of the first contiguous occurrence of `phrase` in `tokens` at or after `from`.
std::optional<std::size_t> find_phrase(std::span<const std::string> tokens,
                                       std::span<const std::string> phrase, std::size_t from = 0);

/// Primary keyword phrases of an event, tokenized. Empty phrases are dropped.
std::vector<std::vector<std::string>> keyword_phrases(std::span<const std::string> keywords);

bool contains_any_phrase(std::span<const std::string> tokens,
                         std::span<const std::vector<std::string>> phrases);

/// True iff a primary keyword occurs as contiguous tokens of title + " " + body.
bool match_primary(const corpus::AdRecord& ad, const corpus::SeasonalEvent& event);

/// Ids of all ads in `ads` that match the event's primary keywords.
std::set<std::string> match_corpus(std::span<const corpus::AdRecord> ads, const corpus::SeasonalEvent& event);

struct TokenStats {
    std::string token;
    std::size_t count_event = 0;
    std::size_t count_background = 0;
    std::size_t doc_freq_event = 0;
    double lift = 0.0;

    bool operator==(const TokenStats&) const = default;
};

enum class Ranking { Lift, Frequency };

Ranking parse_ranking(std::string_view text);
const char* to_string(Ranking ranking);

struct MiningParams {
    double alpha = 1.0;           // additive smoothing, must be > 0
    std::size_t min_docs = 3;     // minimum event-subset document frequency
    std::size_t max_keywords = 0; // 0 keeps every candidate
    Ranking ranking = Ranking::Lift;
    std::set<std::string> stopwords = default_stopwords();

    static std::set<std::string> default_stopwords();
};

/// Reads one stopword per line; '#' starts a comment. Words are lowercased.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

/// Mining parameters document: {alpha, min_docs, max_keywords, stopword_path, ranking}.
/// Missing keys keep their defaults.
MiningParams load_mining_params(const std::filesystem::path& path);

/**
 * Ranks candidate secondary keywords for an event.
 *
 * The event subset is the ads in `matched_ids`; every other ad is background.
 * With c_e, c_b the token counts, T_e, T_b the total token counts of the two
 * subsets, V the corpus vocabulary size and a = alpha:
 *
 *     lift(w) = ((c_e + a) / (T_e + a V)) / ((c_b + a) / (T_b + a V))
 *
 * Tokens belonging to a primary keyword or the stopword list are never
 * returned, and neither are tokens seen in fewer than `min_docs` event ads.
 * Sorted by lift (or event count for Ranking::Frequency) descending, ties
 * lexicographic. The output is a candidate list for human review.
 */
std::vector<TokenStats> mine_secondary(std::span<const corpus::AdRecord> ads,
                                       const std::set<std::string>& matched_ids,
                                       std::span<const std::string> primary_keywords,
                                       const MiningParams& params);

struct KeywordMatchReport {
    std::set<std::string> matched_ids;
    std::optional<double> precision_estimate;
    std::optional<double> coverage_estimate;
};

/**
 * Precision = |matched ∩ gold-positive| / |matched ∩ gold-covered|,
 * coverage  = |matched ∩ gold-positive| / |gold-positive|.
 *
 * An ad is gold-positive when any gold label for it names `target_event`.
 * Coverage stays absent when the gold sample has no positives.
 * Throws Error(NoGoldOverlap) when no matched ad has a gold label.
 */
KeywordMatchReport estimate_quality(const std::set<std::string>& matched_ids,
                                    std::span<const corpus::LabeledExample> gold,
                                    std::string_view target_event);

void write_keyword_report(std::ostream& out, std::span<const TokenStats> stats);
std::vector<TokenStats> read_keyword_report(std::istream& in);

}  // namespace seasonal::keywords
