#include "seasonal/dataset_builder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "seasonal/error.hpp"
#include "seasonal/jsonl.hpp"
#include "seasonal/keyword_miner.hpp"
#include "seasonal/rng.hpp"
#include "seasonal/text.hpp"

namespace seasonal::dataset {

const char* to_string(Variant v) {
    return v == Variant::WithKeywords ? "with_keywords" : "keywords_removed";
}

const char* to_string(SplitName s) {
    return s == SplitName::Train ? "train" : "test";
}

Variant parse_variant(std::string_view text) {
    if (text == "with_keywords") return Variant::WithKeywords;
    if (text == "keywords_removed") return Variant::KeywordsRemoved;
    throw Error(ErrorCode::Format, "unknown variant '" + std::string(text) + "'");
}

SplitName parse_split_name(std::string_view text) {
    if (text == "train") return SplitName::Train;
    if (text == "test") return SplitName::Test;
    throw Error(ErrorCode::Format, "unknown split '" + std::string(text) + "'");
}

TaskMode parse_task_mode(std::string_view text) {
    if (text == "binary") return TaskMode::Binary;
    if (text == "multi") return TaskMode::MultiEvent;
    throw Error(ErrorCode::Config, "mode must be 'binary' or 'multi', got '" + std::string(text) + "'");
}

const char* to_string(TaskMode mode) {
    return mode == TaskMode::Binary ? "binary" : "multi";
}

void BuildConfig::validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error(ErrorCode::Config, "test_fraction must lie in (0, 1)");
    }
    if (!(target_positive_ratio > 0.0 && target_positive_ratio < 1.0)) {
        throw Error(ErrorCode::Config, "target_positive_ratio must lie in (0, 1)");
    }
    if (volume_cap && *volume_cap == 0) {
        throw Error(ErrorCode::Config, "volume_cap must be positive");
    }
}

// ---- keyword removal ------------------------------------------------------

namespace {

/// Removes phrase occurrences across an ordered list of fields that are read
/// as one token stream. Returns true if anything was deleted.
bool strip_fields(std::vector<std::string>& fields, std::span<const std::vector<std::string>> phrases) {
    if (phrases.empty()) {
        return false;
    }
    std::vector<bool> changed(fields.size(), false);
    while (true) {
        struct Located {
            std::string text;
            std::size_t field;
            std::size_t begin;
            std::size_t end;
        };
        std::vector<Located> stream;
        for (std::size_t f = 0; f < fields.size(); ++f) {
            for (keywords::Token& t : keywords::tokenize_with_spans(fields[f])) {
                stream.push_back({std::move(t.text), f, t.begin, t.end});
            }
        }
        // Byte ranges to delete per field, collected left to right.
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> cuts(fields.size());
        std::size_t i = 0;
        bool found = false;
        while (i < stream.size()) {
            std::size_t longest = 0;
            for (const auto& phrase : phrases) {
                if (phrase.size() <= longest || i + phrase.size() > stream.size()) {
                    continue;
                }
                bool match = true;
                for (std::size_t k = 0; k < phrase.size() && match; ++k) {
                    match = stream[i + k].text == phrase[k];
                }
                if (match) {
                    longest = phrase.size();
                }
            }
            if (longest == 0) {
                ++i;
                continue;
            }
            found = true;
            for (std::size_t k = i; k < i + longest; ++k) {
                auto& field_cuts = cuts[stream[k].field];
                if (k > i && stream[k - 1].field == stream[k].field) {
                    field_cuts.back().second = stream[k].end;
                } else {
                    field_cuts.emplace_back(stream[k].begin, stream[k].end);
                }
            }
            i += longest;
        }
        if (!found) {
            break;
        }
        for (std::size_t f = 0; f < fields.size(); ++f) {
            for (auto it = cuts[f].rbegin(); it != cuts[f].rend(); ++it) {
                fields[f].replace(it->first, it->second - it->first, " ");
                changed[f] = true;
            }
        }
    }
    bool any = false;
    for (std::size_t f = 0; f < fields.size(); ++f) {
        if (changed[f]) {
            fields[f] = text::collapse_whitespace(fields[f]);
            any = true;
        }
    }
    return any;
}

}  // namespace

std::string remove_keywords(std::string_view input, std::span<const std::string> keywords) {
    const auto phrases = keywords::keyword_phrases(keywords);
    std::vector<std::string> fields{std::string(input)};
    strip_fields(fields, phrases);
    return std::move(fields.front());
}

corpus::AdRecord remove_keywords(const corpus::AdRecord& ad, std::span<const std::string> keywords) {
    const auto phrases = keywords::keyword_phrases(keywords);
    std::vector<std::string> fields{ad.title, ad.body};
    corpus::AdRecord out = ad;
    if (strip_fields(fields, phrases)) {
        out.title = std::move(fields[0]);
        out.body = std::move(fields[1]);
    }
    return out;
}

std::vector<std::string> all_primary_keywords(const corpus::EventCalendar& calendar) {
    std::vector<std::string> out;
    for (const corpus::SeasonalEvent& e : calendar.events()) {
        out.insert(out.end(), e.primary_keywords.begin(), e.primary_keywords.end());
    }
    return out;
}

// ---- sampling -------------------------------------------------------------

BalanceResult balance_binary(std::span<const Example> positives, std::span<const Example> negatives,
                             const BuildConfig& config) {
    if (positives.empty()) {
        throw Error(ErrorCode::EmptyPositives, "cannot balance without positives");
    }
    config.validate();
    const double r = config.target_positive_ratio;
    const auto needed = static_cast<std::size_t>(std::llround(static_cast<double>(positives.size()) * (1.0 - r) / r));

    Rng rng(derive_seed(config.seed, "balance"));
    std::vector<std::size_t> order(negatives.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    BalanceResult result;
    result.insufficient_negatives = negatives.size() < needed;
    const std::size_t take = std::min(needed, negatives.size());
    // Keep the sampled negatives in input order before the final shuffle.
    std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(picked.begin(), picked.end());

    result.examples.assign(positives.begin(), positives.end());
    for (std::size_t idx : picked) {
        result.examples.push_back(negatives[idx]);
    }
    std::shuffle(result.examples.begin(), result.examples.end(), rng);
    return result;
}

std::vector<Example> upsample_minority(std::span<const Example> examples, std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        by_class[examples[i].event_id].push_back(i);
    }
    std::size_t majority = 0;
    for (const auto& [cls, members] : by_class) {
        majority = std::max(majority, members.size());
    }
    std::vector<Example> out(examples.begin(), examples.end());
    for (const auto& [cls, members] : by_class) {
        Rng rng(derive_seed(seed, cls));
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        for (std::size_t k = members.size(); k < majority; ++k) {
            out.push_back(examples[members[pick(rng)]]);
        }
    }
    return out;
}

std::pair<DatasetSplit, DatasetSplit> split_stratified(std::span<const Example> examples,
                                                       const BuildConfig& config) {
    config.validate();
    // Stratum of each ad = its first label; ads keep first-appearance order.
    std::unordered_map<std::string, std::string> stratum_of;
    std::map<std::string, std::vector<std::string>> ads_by_class;
    for (const Example& e : examples) {
        if (stratum_of.emplace(e.ad_id, e.event_id).second) {
            ads_by_class[e.event_id].push_back(e.ad_id);
        }
    }
    std::unordered_set<std::string> test_ads;
    for (auto& [cls, ads] : ads_by_class) {
        if (ads.size() < 2) {
            throw Error(ErrorCode::ClassTooSmall,
                        "class '" + cls + "' has " + std::to_string(ads.size()) + " ad(s), need at least 2");
        }
        const auto n = static_cast<double>(ads.size());
        auto n_test = static_cast<std::size_t>(std::llround(n * config.test_fraction));
        n_test = std::clamp<std::size_t>(n_test, 1, ads.size() - 1);
        Rng rng(derive_seed(config.seed, cls));
        std::shuffle(ads.begin(), ads.end(), rng);
        test_ads.insert(ads.begin(), ads.begin() + static_cast<std::ptrdiff_t>(n_test));
    }
    DatasetSplit train{SplitName::Train, {}, Variant::WithKeywords, config.seed};
    DatasetSplit test{SplitName::Test, {}, Variant::WithKeywords, config.seed};
    for (const Example& e : examples) {
        (test_ads.count(e.ad_id) ? test : train).examples.push_back(e);
    }
    return {std::move(train), std::move(test)};
}

DatasetSplit subsample_train(const DatasetSplit& split, std::size_t n, std::uint64_t seed) {
    const std::size_t total = split.examples.size();
    if (n > total) {
        throw Error(ErrorCode::NTooLarge,
                    "requested " + std::to_string(n) + " examples from a split of " + std::to_string(total));
    }
    if (n == 0) {
        throw Error(ErrorCode::InvalidArgument, "subsample size must be positive");
    }
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < total; ++i) {
        by_class[split.examples[i].event_id].push_back(i);
    }
    // Largest-remainder quotas; ties go to the class that sorts first.
    struct Quota {
        const std::string* cls;
        std::size_t base;
        double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [cls, members] : by_class) {
        const double exact = static_cast<double>(n) * static_cast<double>(members.size()) / static_cast<double>(total);
        const auto base = static_cast<std::size_t>(std::floor(exact));
        quotas.push_back({&cls, base, exact - static_cast<double>(base)});
        assigned += base;
    }
    std::vector<std::size_t> by_remainder(quotas.size());
    std::iota(by_remainder.begin(), by_remainder.end(), std::size_t{0});
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t k = 0; assigned < n; ++k) {
        ++quotas[by_remainder[k % by_remainder.size()]].base;
        ++assigned;
    }
    std::vector<std::size_t> keep;
    for (const Quota& q : quotas) {
        std::vector<std::size_t> members = by_class[*q.cls];
        Rng rng(derive_seed(seed, *q.cls));
        std::shuffle(members.begin(), members.end(), rng);
        keep.insert(keep.end(), members.begin(),
                    members.begin() + static_cast<std::ptrdiff_t>(std::min(q.base, members.size())));
    }
    std::sort(keep.begin(), keep.end());
    DatasetSplit out{split.name, {}, split.variant, seed};
    out.examples.reserve(keep.size());
    for (std::size_t idx : keep) {
        out.examples.push_back(split.examples[idx]);
    }
    return out;
}

std::vector<std::string> class_list(std::span<const Example> examples) {
    std::set<std::string> distinct;
    for (const Example& e : examples) {
        distinct.insert(e.event_id);
    }
    std::vector<std::string> out;
    if (distinct.erase(std::string(corpus::kNoneEvent))) {
        out.emplace_back(corpus::kNoneEvent);
    }
    out.insert(out.end(), distinct.begin(), distinct.end());
    return out;
}

// ---- pipeline -------------------------------------------------------------

std::vector<Example> resolve_labels(std::span<const corpus::AdRecord> ads,
                                    std::span<const corpus::LabeledExample> labels, const TaskSpec& task) {
    std::unordered_map<std::string, const corpus::LabeledExample*> best;
    auto better = [](const corpus::LabeledExample& a, const corpus::LabeledExample& b) {
        const int pa = corpus::source_precedence(a.source);
        const int pb = corpus::source_precedence(b.source);
        if (pa != pb) return pa > pb;
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.event_id < b.event_id;
    };
    for (const corpus::LabeledExample& l : labels) {
        if (!task.sources.empty() && !task.sources.count(l.source)) {
            continue;
        }
        auto [it, inserted] = best.emplace(l.ad_id, &l);
        if (!inserted && better(l, *it->second)) {
            it->second = &l;
        }
    }
    std::vector<Example> out;
    for (const corpus::AdRecord& ad : ads) {
        const auto it = best.find(ad.id);
        if (it != best.end()) {
            out.push_back({ad.id, it->second->event_id});
        } else if (task.unlabeled_as_none) {
            out.push_back({ad.id, std::string(corpus::kNoneEvent)});
        }
    }
    return out;
}

Build build_dataset(std::span<const corpus::AdRecord> ads, std::span<const corpus::LabeledExample> labels,
                    const corpus::EventCalendar& calendar, const TaskSpec& task, const BuildConfig& config) {
    config.validate();
    for (const corpus::LabeledExample& l : labels) {
        corpus::validate_label(l, calendar);
    }
    std::vector<Example> examples = resolve_labels(ads, labels, task);

    Build build;
    if (task.mode == TaskMode::Binary) {
        if (task.target_event.empty() || task.target_event == corpus::kNoneEvent) {
            throw Error(ErrorCode::Config, "binary mode needs a seasonal target_event");
        }
        calendar.at(task.target_event);
        std::vector<Example> pos;
        std::vector<Example> neg;
        for (Example& e : examples) {
            if (e.event_id == task.target_event) {
                pos.push_back(std::move(e));
            } else {
                neg.push_back({std::move(e.ad_id), std::string(corpus::kNoneEvent)});
            }
        }
        BalanceResult balanced = balance_binary(pos, neg, config);
        build.insufficient_negatives = balanced.insufficient_negatives;
        examples = std::move(balanced.examples);
    }

    auto [train, test] = split_stratified(examples, config);
    if (config.upsample_minority) {
        train.examples = upsample_minority(train.examples, derive_seed(config.seed, "upsample"));
    }
    if (config.volume_cap && *config.volume_cap < train.size()) {
        train = subsample_train(train, *config.volume_cap, derive_seed(config.seed, "volume"));
        train.seed = config.seed;
    }
    build.classes = class_list(examples);

    build.train_with_keywords = train;
    build.test_with_keywords = test;
    build.train_keywords_removed = train;
    build.train_keywords_removed.variant = Variant::KeywordsRemoved;
    build.test_keywords_removed = test;
    build.test_keywords_removed.variant = Variant::KeywordsRemoved;

    std::unordered_set<std::string> in_build;
    for (const Example& e : examples) {
        in_build.insert(e.ad_id);
    }
    const std::vector<std::string> keywords = all_primary_keywords(calendar);
    for (const corpus::AdRecord& ad : ads) {
        if (in_build.count(ad.id)) {
            build.keywords_removed_corpus.push_back(remove_keywords(ad, keywords));
        }
    }
    return build;
}

// ---- manifest -------------------------------------------------------------

void write_manifest(std::ostream& out, std::span<const DatasetSplit> splits) {
    for (const DatasetSplit& s : splits) {
        for (const Example& e : s.examples) {
            nlohmann::ordered_json j;
            j["split"] = to_string(s.name);
            j["variant"] = to_string(s.variant);
            j["seed"] = s.seed;
            j["ad_id"] = e.ad_id;
            j["event_id"] = e.event_id;
            out << j.dump() << '\n';
        }
    }
}

std::vector<DatasetSplit> read_manifest(std::istream& in) {
    std::vector<DatasetSplit> splits;
    for_each_jsonl(in, [&](const Json& r, std::size_t) {
        const SplitName name = parse_split_name(require_string(r, "split"));
        const Variant variant = parse_variant(require_string(r, "variant"));
        const auto seed = require_field(r, "seed").get<std::uint64_t>();
        auto it = std::find_if(splits.begin(), splits.end(), [&](const DatasetSplit& s) {
            return s.name == name && s.variant == variant;
        });
        if (it == splits.end()) {
            splits.push_back({name, {}, variant, seed});
            it = std::prev(splits.end());
        } else if (it->seed != seed) {
            throw Error(ErrorCode::Format, "seed differs within one split");
        }
        it->examples.push_back({require_string(r, "ad_id"), require_string(r, "event_id")});
    });
    return splits;
}

std::vector<DatasetSplit> load_manifest(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    return read_manifest(in);
}

void save_manifest(const std::filesystem::path& path, std::span<const DatasetSplit> splits) {
    std::ofstream out = open_output(path);
    write_manifest(out, splits);
}

const DatasetSplit& find_split(std::span<const DatasetSplit> splits, SplitName name, Variant variant) {
    for (const DatasetSplit& s : splits) {
        if (s.name == name && s.variant == variant) {
            return s;
        }
    }
    throw Error(ErrorCode::Format, std::string("manifest has no ") + to_string(name) + "/" + to_string(variant) +
                                       " split");
}

}  // namespace seasonal::dataset
