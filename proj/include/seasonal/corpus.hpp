#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "seasonal/jsonl.hpp"
#include "seasonal/timeutil.hpp"

namespace seasonal::corpus {

/// Id of the reserved non-seasonal category.
inline constexpr std::string_view kNoneEvent = "none";

struct AdRecord {
    std::string id;
    std::string title;
    std::string body;
    std::optional<std::string> image_ref;  // opaque, resolved by the embedding provider
    std::string locale;
    Timestamp created_at{};

    bool operator==(const AdRecord&) const = default;
};

/// Same month and day every year. Feb 29 is rejected since it does not recur yearly.
struct FixedDate {
    unsigned month = 1;
    unsigned day = 1;

    bool operator==(const FixedDate&) const = default;
};

/// Movable events: explicit start date per covered year.
struct LookupTable {
    std::map<int, Date> dates;

    bool operator==(const LookupTable&) const = default;
};

using DateRule = std::variant<FixedDate, LookupTable>;

/// Half-open day interval [begin, end).
struct DateInterval {
    Date begin{};
    Date end{};

    int days() const { return static_cast<int>((end - begin).count()); }
    bool contains(Date d) const { return begin <= d && d < end; }
    bool operator==(const DateInterval&) const = default;
};

struct SeasonalEvent {
    std::string event_id;
    std::string display_name;
    DateRule date_rule = FixedDate{};
    int duration_days = 1;
    std::vector<std::string> primary_keywords;  // lowercase phrases
    std::string definition_text;

    bool operator==(const SeasonalEvent&) const = default;
};

/// Validates the event invariants. `none` is the only event allowed (and
/// required) to have no primary keywords.
void validate_event(const SeasonalEvent& event);

/// Returns [event date, event date + duration_days) for `year`.
/// Throws Error(UncoveredYear) when a lookup table has no entry for the year.
DateInterval resolve_event_window(const SeasonalEvent& event, int year);

/// The set of known events. Always contains `none`; it is appended when the
/// input lacks it. Event ids are unique.
class EventCalendar {
public:
    EventCalendar();
    explicit EventCalendar(std::vector<SeasonalEvent> events);

    const std::vector<SeasonalEvent>& events() const { return events_; }
    const SeasonalEvent* find(std::string_view event_id) const;
    const SeasonalEvent& at(std::string_view event_id) const;
    bool contains(std::string_view event_id) const { return find(event_id) != nullptr; }

    /// All ids in calendar order, `none` included.
    std::vector<std::string> event_ids() const;

private:
    std::vector<SeasonalEvent> events_;
};

enum class LabelSource { Keyword, Human, Mlm, Model };

const char* to_string(LabelSource source);
LabelSource parse_label_source(std::string_view text);

/// Keyword labels are the most precise channel, model predictions the least.
int source_precedence(LabelSource source);

struct LabeledExample {
    std::string ad_id;
    std::string event_id;
    LabelSource source = LabelSource::Keyword;
    double confidence = 1.0;
    Timestamp labeled_at{};

    bool operator==(const LabeledExample&) const = default;
};

// Corpus files: one JSON object per line with id, title, body, image_ref
// (nullable), locale and created_at.
AdRecord ad_from_json(const Json& record);
nlohmann::ordered_json to_json(const AdRecord& ad);
std::vector<AdRecord> read_corpus(std::istream& in);
std::vector<AdRecord> load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, std::span<const AdRecord> ads);
void save_corpus(const std::filesystem::path& path, std::span<const AdRecord> ads);

// Calendar files: {"events": [{event_id, display_name, date_rule, duration_days,
// primary_keywords, definition_text}, ...]} where date_rule is
// {"fixed": [month, day]} or {"lookup": {"2023": "2023-01-22", ...}}.
SeasonalEvent event_from_json(const Json& record);
nlohmann::ordered_json to_json(const SeasonalEvent& event);
EventCalendar read_calendar(std::istream& in);
EventCalendar load_calendar(const std::filesystem::path& path);
void write_calendar(std::ostream& out, const EventCalendar& calendar);

// Label files: one LabeledExample per line. When a calendar is given, event
// ids are checked against it.
LabeledExample label_from_json(const Json& record);
nlohmann::ordered_json to_json(const LabeledExample& label);
void validate_label(const LabeledExample& label, const EventCalendar& calendar);
std::vector<LabeledExample> read_labels(std::istream& in, const EventCalendar* calendar = nullptr);
std::vector<LabeledExample> load_labels(const std::filesystem::path& path,
                                        const EventCalendar* calendar = nullptr);
void write_labels(std::ostream& out, std::span<const LabeledExample> labels);
void save_labels(const std::filesystem::path& path, std::span<const LabeledExample> labels);

}  // namespace seasonal::corpus
