#include "seasonal/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>
#include <unordered_set>

#include "seasonal/error.hpp"
#include "seasonal/text.hpp"

namespace seasonal::corpus {

using OrderedJson = nlohmann::ordered_json;

void validate_event(const SeasonalEvent& event) {
    if (event.event_id.empty()) {
        throw Error(ErrorCode::InvalidArgument, "event_id must be non-empty");
    }
    if (event.duration_days <= 0) {
        throw Error(ErrorCode::InvalidArgument,
                    "event '" + event.event_id + "': duration_days must be positive");
    }
    if (const auto* fixed = std::get_if<FixedDate>(&event.date_rule)) {
        // 2001 is not a leap year, so Feb 29 fails here as intended.
        const std::chrono::year_month_day ymd{std::chrono::year{2001}, std::chrono::month{fixed->month},
                                              std::chrono::day{fixed->day}};
        if (!ymd.ok()) {
            throw Error(ErrorCode::InvalidArgument,
                        "event '" + event.event_id + "': fixed date is not a valid day of every year");
        }
    }
    const bool is_none = event.event_id == kNoneEvent;
    if (is_none && !event.primary_keywords.empty()) {
        throw Error(ErrorCode::InvalidArgument, "the 'none' category must not have primary keywords");
    }
    if (!is_none && event.primary_keywords.empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "event '" + event.event_id + "' needs at least one primary keyword");
    }
    for (const std::string& kw : event.primary_keywords) {
        if (kw.empty() || kw != text::to_lower(kw)) {
            throw Error(ErrorCode::InvalidArgument,
                        "event '" + event.event_id + "': keyword '" + kw + "' must be non-empty lowercase");
        }
    }
}

DateInterval resolve_event_window(const SeasonalEvent& event, int year) {
    Date start{};
    if (const auto* fixed = std::get_if<FixedDate>(&event.date_rule)) {
        start = Date{std::chrono::year{year} / std::chrono::month{fixed->month} / std::chrono::day{fixed->day}};
    } else {
        const auto& table = std::get<LookupTable>(event.date_rule).dates;
        const auto it = table.find(year);
        if (it == table.end()) {
            throw Error(ErrorCode::UncoveredYear,
                        "event '" + event.event_id + "' has no date for " + std::to_string(year));
        }
        start = it->second;
    }
    return {start, start + std::chrono::days{event.duration_days}};
}

EventCalendar::EventCalendar() : EventCalendar(std::vector<SeasonalEvent>{}) {}

EventCalendar::EventCalendar(std::vector<SeasonalEvent> events) : events_(std::move(events)) {
    std::unordered_set<std::string> seen;
    for (const SeasonalEvent& e : events_) {
        validate_event(e);
        if (!seen.insert(e.event_id).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate event_id '" + e.event_id + "'");
        }
    }
    if (!seen.count(std::string(kNoneEvent))) {
        SeasonalEvent none;
        none.event_id = std::string(kNoneEvent);
        none.display_name = "None";
        none.definition_text = "The ad is not tied to any seasonal event.";
        events_.push_back(std::move(none));
    }
}

const SeasonalEvent* EventCalendar::find(std::string_view event_id) const {
    const auto it = std::find_if(events_.begin(), events_.end(),
                                 [&](const SeasonalEvent& e) { return e.event_id == event_id; });
    return it == events_.end() ? nullptr : &*it;
}

const SeasonalEvent& EventCalendar::at(std::string_view event_id) const {
    if (const SeasonalEvent* e = find(event_id)) {
        return *e;
    }
    throw Error(ErrorCode::UnknownEvent, "unknown event '" + std::string(event_id) + "'");
}

std::vector<std::string> EventCalendar::event_ids() const {
    std::vector<std::string> ids;
    ids.reserve(events_.size());
    for (const SeasonalEvent& e : events_) {
        ids.push_back(e.event_id);
    }
    return ids;
}

const char* to_string(LabelSource source) {
    switch (source) {
        case LabelSource::Keyword: return "keyword";
        case LabelSource::Human: return "human";
        case LabelSource::Mlm: return "mlm";
        case LabelSource::Model: return "model";
    }
    return "keyword";
}

LabelSource parse_label_source(std::string_view text) {
    if (text == "keyword") return LabelSource::Keyword;
    if (text == "human") return LabelSource::Human;
    if (text == "mlm") return LabelSource::Mlm;
    if (text == "model") return LabelSource::Model;
    throw Error(ErrorCode::Format, "unknown label source '" + std::string(text) + "'");
}

int source_precedence(LabelSource source) {
    switch (source) {
        case LabelSource::Keyword: return 3;
        case LabelSource::Human: return 2;
        case LabelSource::Mlm: return 1;
        case LabelSource::Model: return 0;
    }
    return 0;
}

// ---- corpus ---------------------------------------------------------------

AdRecord ad_from_json(const Json& record) {
    AdRecord ad;
    ad.id = require_string(record, "id");
    if (ad.id.empty()) {
        throw Error(ErrorCode::Format, "id must be non-empty");
    }
    ad.title = require_string(record, "title");
    ad.body = require_string(record, "body");
    if (const auto it = record.find("image_ref"); it != record.end() && !it->is_null()) {
        if (!it->is_string()) {
            throw Error(ErrorCode::Format, "field 'image_ref' must be a string or null");
        }
        ad.image_ref = it->get<std::string>();
    }
    ad.locale = require_string(record, "locale");
    ad.created_at = parse_utc(require_string(record, "created_at"));
    return ad;
}

OrderedJson to_json(const AdRecord& ad) {
    OrderedJson j;
    j["id"] = ad.id;
    j["title"] = ad.title;
    j["body"] = ad.body;
    j["image_ref"] = ad.image_ref ? OrderedJson(*ad.image_ref) : OrderedJson(nullptr);
    j["locale"] = ad.locale;
    j["created_at"] = format_utc(ad.created_at);
    return j;
}

std::vector<AdRecord> read_corpus(std::istream& in) {
    std::vector<AdRecord> ads;
    std::unordered_set<std::string> ids;
    for_each_jsonl(in, [&](const Json& record, std::size_t line) {
        AdRecord ad = ad_from_json(record);
        if (!ids.insert(ad.id).second) {
            throw Error(ErrorCode::DuplicateId, "duplicate ad id '" + ad.id + "'", line);
        }
        ads.push_back(std::move(ad));
    });
    return ads;
}

std::vector<AdRecord> load_corpus(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const AdRecord> ads) {
    for (const AdRecord& ad : ads) {
        out << to_json(ad).dump() << '\n';
    }
}

void save_corpus(const std::filesystem::path& path, std::span<const AdRecord> ads) {
    std::ofstream out = open_output(path);
    write_corpus(out, ads);
}

// ---- calendar -------------------------------------------------------------

SeasonalEvent event_from_json(const Json& record) {
    SeasonalEvent e;
    e.event_id = require_string(record, "event_id");
    e.display_name = record.value("display_name", e.event_id);
    e.duration_days = static_cast<int>(record.value("duration_days", 1));
    e.definition_text = record.value("definition_text", std::string{});
    if (const auto it = record.find("primary_keywords"); it != record.end()) {
        e.primary_keywords = it->get<std::vector<std::string>>();
    }
    const auto rule = record.find("date_rule");
    if (rule == record.end() || rule->is_null()) {
        if (e.event_id != kNoneEvent) {
            throw Error(ErrorCode::Format, "event '" + e.event_id + "' lacks a date_rule");
        }
        return e;
    }
    if (const auto fixed = rule->find("fixed"); fixed != rule->end()) {
        const auto md = fixed->get<std::vector<unsigned>>();
        if (md.size() != 2) {
            throw Error(ErrorCode::Format, "fixed date_rule must be [month, day]");
        }
        e.date_rule = FixedDate{md[0], md[1]};
    } else if (const auto lookup = rule->find("lookup"); lookup != rule->end()) {
        LookupTable table;
        for (const auto& [year_text, date_text] : lookup->items()) {
            int year = 0;
            try {
                std::size_t used = 0;
                year = std::stoi(year_text, &used);
                if (used != year_text.size()) {
                    throw std::invalid_argument(year_text);
                }
            } catch (const std::exception&) {
                throw Error(ErrorCode::Format, "lookup key '" + year_text + "' is not a year");
            }
            const Date d = parse_date(date_text.get<std::string>());
            if (static_cast<int>(std::chrono::year_month_day{d}.year()) != year) {
                throw Error(ErrorCode::Format, "lookup date " + date_text.get<std::string>() +
                                                   " does not fall in year " + year_text);
            }
            table.dates.emplace(year, d);
        }
        e.date_rule = std::move(table);
    } else {
        throw Error(ErrorCode::Format, "date_rule must contain 'fixed' or 'lookup'");
    }
    return e;
}

OrderedJson to_json(const SeasonalEvent& e) {
    OrderedJson j;
    j["event_id"] = e.event_id;
    j["display_name"] = e.display_name;
    if (const auto* fixed = std::get_if<FixedDate>(&e.date_rule)) {
        j["date_rule"] = {{"fixed", {fixed->month, fixed->day}}};
    } else {
        OrderedJson lookup = OrderedJson::object();
        for (const auto& [year, date] : std::get<LookupTable>(e.date_rule).dates) {
            lookup[std::to_string(year)] = format_date(date);
        }
        j["date_rule"] = {{"lookup", lookup}};
    }
    j["duration_days"] = e.duration_days;
    j["primary_keywords"] = e.primary_keywords;
    j["definition_text"] = e.definition_text;
    return j;
}

EventCalendar read_calendar(std::istream& in) {
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Format, std::string("calendar: ") + e.what());
    }
    const Json* list = &doc;
    if (doc.is_object()) {
        list = &require_field(doc, "events");
    }
    if (!list->is_array()) {
        throw Error(ErrorCode::Format, "calendar: expected an array of events");
    }
    std::vector<SeasonalEvent> events;
    try {
        for (const Json& item : *list) {
            events.push_back(event_from_json(item));
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::Format, std::string("calendar: ") + e.what());
    }
    return EventCalendar(std::move(events));
}

EventCalendar load_calendar(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    return read_calendar(in);
}

void write_calendar(std::ostream& out, const EventCalendar& calendar) {
    OrderedJson events = OrderedJson::array();
    for (const SeasonalEvent& e : calendar.events()) {
        events.push_back(to_json(e));
    }
    OrderedJson doc;
    doc["events"] = std::move(events);
    out << doc.dump(2) << '\n';
}

// ---- labels ---------------------------------------------------------------

LabeledExample label_from_json(const Json& record) {
    LabeledExample label;
    label.ad_id = require_string(record, "ad_id");
    label.event_id = require_string(record, "event_id");
    label.source = parse_label_source(require_string(record, "source"));
    label.confidence = require_number(record, "confidence");
    label.labeled_at = parse_utc(require_string(record, "labeled_at"));
    if (!(label.confidence >= 0.0 && label.confidence <= 1.0)) {
        throw Error(ErrorCode::Format, "confidence must lie in [0, 1]");
    }
    return label;
}

OrderedJson to_json(const LabeledExample& label) {
    OrderedJson j;
    j["ad_id"] = label.ad_id;
    j["event_id"] = label.event_id;
    j["source"] = to_string(label.source);
    j["confidence"] = label.confidence;
    j["labeled_at"] = format_utc(label.labeled_at);
    return j;
}

void validate_label(const LabeledExample& label, const EventCalendar& calendar) {
    if (!calendar.contains(label.event_id)) {
        throw Error(ErrorCode::UnknownEvent, "label for '" + label.ad_id + "' references unknown event '" +
                                                 label.event_id + "'");
    }
    if (!(label.confidence >= 0.0 && label.confidence <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "confidence must lie in [0, 1]");
    }
}

std::vector<LabeledExample> read_labels(std::istream& in, const EventCalendar* calendar) {
    std::vector<LabeledExample> labels;
    for_each_jsonl(in, [&](const Json& record, std::size_t) {
        LabeledExample label = label_from_json(record);
        if (calendar) {
            validate_label(label, *calendar);
        }
        labels.push_back(std::move(label));
    });
    return labels;
}

std::vector<LabeledExample> load_labels(const std::filesystem::path& path, const EventCalendar* calendar) {
    std::ifstream in = open_input(path);
    return read_labels(in, calendar);
}

void write_labels(std::ostream& out, std::span<const LabeledExample> labels) {
    for (const LabeledExample& label : labels) {
        out << to_json(label).dump() << '\n';
    }
}

void save_labels(const std::filesystem::path& path, std::span<const LabeledExample> labels) {
    std::ofstream out = open_output(path);
    write_labels(out, labels);
}

}  // namespace seasonal::corpus
