#include "seasonal/keyword_miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "seasonal/error.hpp"
#include "seasonal/jsonl.hpp"
#include "seasonal/text.hpp"

namespace seasonal::keywords {

std::vector<Token> tokenize_with_spans(std::string_view input) {
    const std::vector<text::CodePoint> cps = text::decode_utf8(input);
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (!text::is_word_char(cps[i].value)) {
            ++i;
            continue;
        }
        // A run of word characters, with apostrophes allowed between them.
        std::vector<std::string> parts(1);
        const std::size_t begin = cps[i].begin;
        std::size_t end = begin;
        while (i < cps.size()) {
            const char32_t cp = cps[i].value;
            if (text::is_word_char(cp)) {
                text::append_utf8(parts.back(), text::to_lower(cp));
                end = cps[i].end;
                ++i;
            } else if (text::is_apostrophe(cp)) {
                end = cps[i].end;
                ++i;
                if (i < cps.size() && text::is_word_char(cps[i].value)) {
                    parts.emplace_back();
                } else {
                    break;  // trailing apostrophe, as in "parents'"
                }
            } else {
                break;
            }
        }
        std::string normalized;
        if (parts.size() == 2 && parts[1] == "s") {
            normalized = std::move(parts[0]);
        } else {
            for (std::string& p : parts) {
                normalized += p;
            }
        }
        tokens.push_back({std::move(normalized), begin, end});
    }
    return tokens;
}

std::vector<std::string> tokenize(std::string_view input) {
    std::vector<std::string> out;
    for (Token& t : tokenize_with_spans(input)) {
        out.push_back(std::move(t.text));
    }
    return out;
}

std::optional<std::size_t> find_phrase(std::span<const std::string> tokens,
                                       std::span<const std::string> phrase, std::size_t from) {
    if (phrase.empty() || tokens.size() < phrase.size()) {
        return std::nullopt;
    }
    for (std::size_t i = from; i + phrase.size() <= tokens.size(); ++i) {
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::vector<std::string>> keyword_phrases(std::span<const std::string> keywords) {
    std::vector<std::vector<std::string>> phrases;
    for (const std::string& kw : keywords) {
        auto tokens = tokenize(kw);
        if (!tokens.empty()) {
            phrases.push_back(std::move(tokens));
        }
    }
    return phrases;
}

bool contains_any_phrase(std::span<const std::string> tokens,
                         std::span<const std::vector<std::string>> phrases) {
    return std::any_of(phrases.begin(), phrases.end(),
                       [&](const std::vector<std::string>& p) { return find_phrase(tokens, p).has_value(); });
}

namespace {

std::vector<std::string> ad_tokens(const corpus::AdRecord& ad) {
    return tokenize(ad.title + " " + ad.body);
}

}  // namespace

bool match_primary(const corpus::AdRecord& ad, const corpus::SeasonalEvent& event) {
    const auto phrases = keyword_phrases(event.primary_keywords);
    return contains_any_phrase(ad_tokens(ad), phrases);
}

std::set<std::string> match_corpus(std::span<const corpus::AdRecord> ads, const corpus::SeasonalEvent& event) {
    const auto phrases = keyword_phrases(event.primary_keywords);
    std::set<std::string> ids;
    for (const corpus::AdRecord& ad : ads) {
        if (contains_any_phrase(ad_tokens(ad), phrases)) {
            ids.insert(ad.id);
        }
    }
    return ids;
}

Ranking parse_ranking(std::string_view text) {
    if (text == "lift") return Ranking::Lift;
    if (text == "frequency") return Ranking::Frequency;
    throw Error(ErrorCode::Config, "ranking must be 'lift' or 'frequency', got '" + std::string(text) + "'");
}

const char* to_string(Ranking ranking) {
    return ranking == Ranking::Lift ? "lift" : "frequency";
}

std::set<std::string> MiningParams::default_stopwords() {
    return {"a",    "about", "after", "all",   "also",  "am",    "an",    "and",   "any",   "are",
            "as",   "at",    "be",    "been",  "but",   "by",    "can",   "do",    "for",   "from",
            "get",  "had",   "has",   "have",  "he",    "her",   "his",   "how",   "i",     "if",
            "in",   "into",  "is",    "it",    "its",   "just",  "me",    "more",  "most",  "my",
            "no",   "not",   "now",   "of",    "on",    "one",   "only",  "or",    "our",   "out",
            "over", "she",   "so",    "some",  "than",  "that",  "the",   "their", "them",  "then",
            "there", "these", "they", "this",  "to",    "up",    "us",    "was",   "we",    "were",
            "what", "when",  "which", "who",   "will",  "with",  "would", "you",   "your"};
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string word = text::collapse_whitespace(text::to_lower(line));
        if (!word.empty()) {
            words.insert(word);
        }
    }
    return words;
}

MiningParams load_mining_params(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Format, std::string("mining params: ") + e.what());
    }
    MiningParams params;
    for (const auto& [key, value] : doc.items()) {
        if (key == "alpha") {
            params.alpha = value.get<double>();
        } else if (key == "min_docs") {
            params.min_docs = value.get<std::size_t>();
        } else if (key == "max_keywords") {
            params.max_keywords = value.get<std::size_t>();
        } else if (key == "ranking") {
            params.ranking = parse_ranking(value.get<std::string>());
        } else if (key == "stopword_path") {
            if (!value.is_null()) {
                std::filesystem::path sw = value.get<std::string>();
                if (sw.is_relative()) {
                    sw = path.parent_path() / sw;
                }
                params.stopwords = load_stopwords(sw);
            }
        } else {
            throw Error(ErrorCode::Config, "unknown mining parameter '" + key + "'");
        }
    }
    return params;
}

std::vector<TokenStats> mine_secondary(std::span<const corpus::AdRecord> ads,
                                       const std::set<std::string>& matched_ids,
                                       std::span<const std::string> primary_keywords,
                                       const MiningParams& params) {
    if (matched_ids.empty()) {
        throw Error(ErrorCode::EmptyMatchedSet, "no ads matched the primary keywords");
    }
    if (!(params.alpha > 0.0) || !std::isfinite(params.alpha)) {
        throw Error(ErrorCode::InvalidArgument, "alpha must be a positive finite number");
    }
    std::unordered_set<std::string> corpus_ids;
    for (const corpus::AdRecord& ad : ads) {
        corpus_ids.insert(ad.id);
    }
    for (const std::string& id : matched_ids) {
        if (!corpus_ids.count(id)) {
            throw Error(ErrorCode::InvalidArgument, "matched id '" + id + "' is not in the corpus");
        }
    }

    struct Counts {
        std::size_t event = 0;
        std::size_t background = 0;
        std::size_t docs_event = 0;
    };
    std::map<std::string, Counts> counts;
    std::size_t total_event = 0;
    std::size_t total_background = 0;
    for (const corpus::AdRecord& ad : ads) {
        const bool in_event = matched_ids.count(ad.id) > 0;
        const std::vector<std::string> tokens = ad_tokens(ad);
        std::unordered_set<std::string_view> seen;
        for (const std::string& tok : tokens) {
            Counts& c = counts[tok];
            if (in_event) {
                ++c.event;
                if (seen.insert(tok).second) {
                    ++c.docs_event;
                }
            } else {
                ++c.background;
            }
        }
        (in_event ? total_event : total_background) += tokens.size();
    }

    std::unordered_set<std::string> excluded;
    for (const auto& phrase : keyword_phrases(primary_keywords)) {
        excluded.insert(phrase.begin(), phrase.end());
    }

    const double a = params.alpha;
    const double vocab = static_cast<double>(counts.size());
    const double event_denominator = static_cast<double>(total_event) + a * vocab;
    const double background_denominator = static_cast<double>(total_background) + a * vocab;

    std::vector<TokenStats> out;
    for (const auto& [token, c] : counts) {
        if (c.docs_event < params.min_docs || c.docs_event == 0 || excluded.count(token) ||
            params.stopwords.count(token)) {
            continue;
        }
        const double p_event = (static_cast<double>(c.event) + a) / event_denominator;
        const double p_background = (static_cast<double>(c.background) + a) / background_denominator;
        out.push_back({token, c.event, c.background, c.docs_event, p_event / p_background});
    }

    if (params.ranking == Ranking::Lift) {
        std::sort(out.begin(), out.end(), [](const TokenStats& x, const TokenStats& y) {
            return x.lift != y.lift ? x.lift > y.lift : x.token < y.token;
        });
    } else {
        std::sort(out.begin(), out.end(), [](const TokenStats& x, const TokenStats& y) {
            return x.count_event != y.count_event ? x.count_event > y.count_event : x.token < y.token;
        });
    }
    if (params.max_keywords > 0 && out.size() > params.max_keywords) {
        out.resize(params.max_keywords);
    }
    return out;
}

KeywordMatchReport estimate_quality(const std::set<std::string>& matched_ids,
                                    std::span<const corpus::LabeledExample> gold,
                                    std::string_view target_event) {
    std::set<std::string> covered;
    std::set<std::string> positive;
    for (const corpus::LabeledExample& g : gold) {
        covered.insert(g.ad_id);
        if (g.event_id == target_event) {
            positive.insert(g.ad_id);
        }
    }
    std::size_t matched_covered = 0;
    std::size_t matched_positive = 0;
    for (const std::string& id : matched_ids) {
        matched_covered += covered.count(id);
        matched_positive += positive.count(id);
    }
    if (matched_covered == 0) {
        throw Error(ErrorCode::NoGoldOverlap, "no matched ad carries a gold label");
    }
    KeywordMatchReport report;
    report.matched_ids = matched_ids;
    report.precision_estimate = static_cast<double>(matched_positive) / static_cast<double>(matched_covered);
    if (!positive.empty()) {
        report.coverage_estimate = static_cast<double>(matched_positive) / static_cast<double>(positive.size());
    }
    return report;
}

void write_keyword_report(std::ostream& out, std::span<const TokenStats> stats) {
    for (const TokenStats& s : stats) {
        nlohmann::ordered_json j;
        j["token"] = s.token;
        j["lift"] = s.lift;
        j["count_event"] = s.count_event;
        j["count_background"] = s.count_background;
        j["doc_freq_event"] = s.doc_freq_event;
        out << j.dump() << '\n';
    }
}

std::vector<TokenStats> read_keyword_report(std::istream& in) {
    std::vector<TokenStats> stats;
    for_each_jsonl(in, [&](const Json& r, std::size_t) {
        stats.push_back({require_string(r, "token"), static_cast<std::size_t>(require_integer(r, "count_event")),
                         static_cast<std::size_t>(require_integer(r, "count_background")),
                         static_cast<std::size_t>(require_integer(r, "doc_freq_event")),
                         require_number(r, "lift")});
    });
    return stats;
}

}  // namespace seasonal::keywords
