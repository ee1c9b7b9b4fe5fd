#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seasonal/corpus.hpp"

namespace seasonal::dataset {

enum class Variant { WithKeywords, KeywordsRemoved };
enum class SplitName { Train, Test };

const char* to_string(Variant v);
const char* to_string(SplitName s);
Variant parse_variant(std::string_view text);
SplitName parse_split_name(std::string_view text);

struct Example {
    std::string ad_id;
    std::string event_id;

    bool operator==(const Example&) const = default;
    auto operator<=>(const Example&) const = default;
};

struct DatasetSplit {
    SplitName name = SplitName::Train;
    std::vector<Example> examples;
    Variant variant = Variant::WithKeywords;
    std::uint64_t seed = 0;

    std::size_t size() const { return examples.size(); }
    bool operator==(const DatasetSplit&) const = default;
};

struct BuildConfig {
    std::uint64_t seed = 42;
    double test_fraction = 0.2;
    double target_positive_ratio = 0.5;
    bool upsample_minority = false;
    std::optional<std::size_t> volume_cap;

    /// Throws Error(Config) when a fraction is outside (0, 1) or the cap is zero.
    void validate() const;
};

/**
 * Deletes every occurrence of the keyword phrases from `text`. Occurrences
 * are found with the same tokenizer and contiguous-token rule as keyword
 * matching, so "Valentine's" is an occurrence of "valentine". The deleted
 * span runs from the first to the last matched token; whitespace is then
 * collapsed. Text without occurrences is returned unchanged. Deletion is
 * repeated until no occurrence is left, which also makes it idempotent.
 */
std::string remove_keywords(std::string_view text, std::span<const std::string> keywords);

/// Strips title and body together, including phrases that run from the end
/// of the title into the body.
corpus::AdRecord remove_keywords(const corpus::AdRecord& ad, std::span<const std::string> keywords);

/// Primary keywords of every calendar event.
std::vector<std::string> all_primary_keywords(const corpus::EventCalendar& calendar);

struct BalanceResult {
    std::vector<Example> examples;
    bool insufficient_negatives = false;
};

/// Keeps all positives and samples round(|pos| (1 - r) / r) negatives without
/// replacement, r = target_positive_ratio. When there are fewer negatives
/// than that, all are kept and `insufficient_negatives` is set. The result is
/// shuffled. Throws Error(EmptyPositives).
BalanceResult balance_binary(std::span<const Example> positives, std::span<const Example> negatives,
                             const BuildConfig& config);

/// Appends duplicates (drawn with replacement) of every smaller class until
/// each class has as many examples as the largest.
std::vector<Example> upsample_minority(std::span<const Example> examples, std::uint64_t seed);

/// Splits by ad id, stratified on each ad's first label. Per class the test
/// share is round(n * test_fraction) clamped to [1, n - 1]. All examples of
/// an ad land on the same side. Throws Error(ClassTooSmall) for classes with
/// fewer than 2 ads.
std::pair<DatasetSplit, DatasetSplit> split_stratified(std::span<const Example> examples,
                                                       const BuildConfig& config);

/// Stratified sample of exactly n examples; per-class quotas use largest
/// remainders. Keeps the split's order. Throws Error(NTooLarge).
DatasetSplit subsample_train(const DatasetSplit& split, std::size_t n, std::uint64_t seed);

/// Class list for a set of examples: `none` first when present, then sorted.
std::vector<std::string> class_list(std::span<const Example> examples);

enum class TaskMode { Binary, MultiEvent };

TaskMode parse_task_mode(std::string_view text);
const char* to_string(TaskMode mode);

struct TaskSpec {
    TaskMode mode = TaskMode::Binary;
    std::string target_event;                   // binary mode only
    std::set<corpus::LabelSource> sources;      // empty = every source
    bool unlabeled_as_none = false;             // ads without any label become none
};

/// One label per ad. Among an ad's labels the most precise source wins
/// (keyword > human > mlm > model), then higher confidence, then the
/// lexicographically smaller event id. Labels for ads outside `ads` are ignored.
/// Output follows the order of `ads`.
std::vector<Example> resolve_labels(std::span<const corpus::AdRecord> ads,
                                    std::span<const corpus::LabeledExample> labels, const TaskSpec& task);

struct Build {
    DatasetSplit train_with_keywords;
    DatasetSplit test_with_keywords;
    DatasetSplit train_keywords_removed;
    DatasetSplit test_keywords_removed;
    std::vector<corpus::AdRecord> keywords_removed_corpus;  // ads of the build with keywords stripped
    std::vector<std::string> classes;
    bool insufficient_negatives = false;
};

/**
 * resolve labels -> (binary) relabel non-target as none and balance ->
 * stratified split on ad ids -> optional minority upsampling of train ->
 * optional volume cap on train. Both variants share the same ad ids; the
 * keywords-removed corpus strips every calendar keyword.
 */
Build build_dataset(std::span<const corpus::AdRecord> ads, std::span<const corpus::LabeledExample> labels,
                    const corpus::EventCalendar& calendar, const TaskSpec& task, const BuildConfig& config);

// Split manifest: one line per example with split, variant, seed, ad_id and event_id.
void write_manifest(std::ostream& out, std::span<const DatasetSplit> splits);
std::vector<DatasetSplit> read_manifest(std::istream& in);
std::vector<DatasetSplit> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, std::span<const DatasetSplit> splits);

/// Finds a split in a manifest; throws Error(Format) when absent.
const DatasetSplit& find_split(std::span<const DatasetSplit> splits, SplitName name, Variant variant);

}  // namespace seasonal::dataset
