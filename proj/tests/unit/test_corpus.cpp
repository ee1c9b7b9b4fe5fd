#include <doctest.h>

#include <fstream>
#include <sstream>

#include "seasonal/corpus.hpp"
#include "seasonal/error.hpp"
#include "synthetic.hpp"

using namespace seasonal;
using namespace seasonal::corpus;
using std::chrono::days;

namespace {

Date ymd(int y, unsigned m, unsigned d) {
    return Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

SeasonalEvent fixed_event(unsigned m, unsigned d, int duration) {
    SeasonalEvent e;
    e.event_id = "ev";
    e.display_name = "Ev";
    e.date_rule = FixedDate{m, d};
    e.duration_days = duration;
    e.primary_keywords = {"ev"};
    return e;
}

}  // namespace

TEST_CASE("empty corpus file loads as an empty list") {
    const auto dir = testing::scratch_dir("corpus_empty");
    std::ofstream(dir / "c.jsonl").close();
    CHECK(load_corpus(dir / "c.jsonl").empty());
}

TEST_CASE("three lines load in order with every field") {
    std::istringstream in(
        R"({"id":"a1","title":"Roses","body":"Red roses","image_ref":"img/1.jpg","locale":"en-US","created_at":"2023-02-01T10:00:00Z"}
{"id":"a2","title":"","body":"","image_ref":null,"locale":"en-GB","created_at":"2023-02-02T00:00:00+00:00"}
{"id":"a3","title":"Grill","body":"BBQ sets","image_ref":"img/3.jpg","locale":"en-US","created_at":"2023-06-10T12:30:00Z"}
)");
    const auto ads = read_corpus(in);
    REQUIRE(ads.size() == 3);
    CHECK(ads[0].id == "a1");
    CHECK(ads[0].title == "Roses");
    CHECK(ads[0].body == "Red roses");
    CHECK(ads[0].image_ref == std::optional<std::string>("img/1.jpg"));
    CHECK(ads[0].locale == "en-US");
    CHECK(format_utc(ads[0].created_at) == "2023-02-01T10:00:00Z");
    CHECK(ads[1].title.empty());
    CHECK_FALSE(ads[1].image_ref.has_value());
    CHECK(format_utc(ads[1].created_at) == "2023-02-02T00:00:00Z");
    CHECK(ads[2].id == "a3");
}

TEST_CASE("duplicate ids are rejected by name") {
    std::istringstream in(
        R"({"id":"a1","title":"","body":"","image_ref":null,"locale":"en","created_at":"2023-01-01T00:00:00Z"}
{"id":"a1","title":"x","body":"","image_ref":null,"locale":"en","created_at":"2023-01-01T00:00:00Z"}
)");
    try {
        read_corpus(in);
        FAIL("expected DuplicateId");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DuplicateId);
        CHECK(std::string(e.what()).find("a1") != std::string::npos);
        CHECK(e.line() == std::optional<std::size_t>(2));
    }
}

TEST_CASE("malformed records carry their line number") {
    std::istringstream in(
        R"({"id":"a1","title":"","body":"","image_ref":null,"locale":"en","created_at":"2023-01-01T00:00:00Z"}
{"id":"a2","title":"","body":"","image_ref":null,"locale":"en","created_at":"yesterday"}
)");
    try {
        read_corpus(in);
        FAIL("expected Format");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Format);
        CHECK(e.line() == std::optional<std::size_t>(2));
    }
}

TEST_CASE("missing corpus file is an io error") {
    try {
        load_corpus("/nonexistent/corpus.jsonl");
        FAIL("expected Io");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Io);
    }
}

TEST_CASE("corpus serialization round trips") {
    const auto calendar = testing::shipped_calendar();
    const auto corpus = testing::make_corpus({.n_ads = 50, .seed = 3}, calendar);
    std::ostringstream out;
    write_corpus(out, corpus.ads);
    std::istringstream in(out.str());
    CHECK(read_corpus(in) == corpus.ads);
}

TEST_CASE("fixed date windows") {
    CHECK(resolve_event_window(fixed_event(2, 14, 1), 2023) == DateInterval{ymd(2023, 2, 14), ymd(2023, 2, 15)});
    const auto span = resolve_event_window(fixed_event(12, 31, 2), 2022);
    // Calendar arithmetic done independently: Dec 31 plus two days.
    CHECK(span.begin == ymd(2022, 12, 31));
    CHECK(span.end == ymd(2023, 1, 2));
    CHECK(span.days() == 2);
}

TEST_CASE("lookup tables must cover the year") {
    SeasonalEvent e = fixed_event(1, 1, 1);
    e.date_rule = LookupTable{{{2023, ymd(2023, 4, 9)}, {2024, ymd(2024, 3, 31)}}};
    CHECK(resolve_event_window(e, 2024).begin == ymd(2024, 3, 31));
    try {
        resolve_event_window(e, 2025);
        FAIL("expected UncoveredYear");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::UncoveredYear);
    }
}

TEST_CASE("every shipped event resolves to exactly duration days") {
    const auto calendar = testing::shipped_calendar();
    for (const auto& e : calendar.events()) {
        if (e.event_id == kNoneEvent) continue;
        for (int year = 2020; year <= 2030; ++year) {
            const auto span = resolve_event_window(e, year);
            CHECK(span.days() == e.duration_days);
            CHECK(span.contains(span.begin));
            CHECK_FALSE(span.contains(span.end));
        }
    }
}

TEST_CASE("event invariants") {
    CHECK_THROWS_AS(validate_event(fixed_event(2, 30, 1)), Error);
    CHECK_THROWS_AS(validate_event(fixed_event(2, 29, 1)), Error);
    CHECK_THROWS_AS(validate_event(fixed_event(1, 1, 0)), Error);
    SeasonalEvent upper = fixed_event(1, 1, 1);
    upper.primary_keywords = {"Valentine"};
    CHECK_THROWS_AS(validate_event(upper), Error);
    SeasonalEvent bare = fixed_event(1, 1, 1);
    bare.primary_keywords.clear();
    CHECK_THROWS_AS(validate_event(bare), Error);
}

TEST_CASE("calendar always holds none and unique ids") {
    EventCalendar calendar({fixed_event(2, 14, 1)});
    CHECK(calendar.contains("none"));
    CHECK(calendar.at("none").primary_keywords.empty());
    CHECK_THROWS_AS(EventCalendar({fixed_event(2, 14, 1), fixed_event(3, 1, 1)}), Error);
    try {
        calendar.at("diwali");
        FAIL("expected UnknownEvent");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownEvent);
    }
}

TEST_CASE("shipped calendar round trips") {
    const auto calendar = testing::shipped_calendar();
    CHECK(calendar.events().size() == 7);
    std::ostringstream out;
    write_calendar(out, calendar);
    std::istringstream in(out.str());
    CHECK(read_calendar(in).events() == calendar.events());
}

TEST_CASE("labels validate against the calendar") {
    const auto calendar = testing::shipped_calendar();
    std::istringstream good(
        R"({"ad_id":"a1","event_id":"valentine","source":"keyword","confidence":1.0,"labeled_at":"2023-01-01T00:00:00Z"})");
    const auto labels = read_labels(good, &calendar);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].source == LabelSource::Keyword);

    std::istringstream unknown(
        R"({"ad_id":"a1","event_id":"diwali","source":"human","confidence":1.0,"labeled_at":"2023-01-01T00:00:00Z"})");
    try {
        read_labels(unknown, &calendar);
        FAIL("expected UnknownEvent");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownEvent);
    }

    std::istringstream confidence(
        R"({"ad_id":"a1","event_id":"none","source":"mlm","confidence":1.5,"labeled_at":"2023-01-01T00:00:00Z"})");
    CHECK_THROWS_AS(read_labels(confidence, &calendar), Error);
}

TEST_CASE("label sources are ordered by precision") {
    CHECK(source_precedence(LabelSource::Keyword) > source_precedence(LabelSource::Human));
    CHECK(source_precedence(LabelSource::Human) > source_precedence(LabelSource::Mlm));
    CHECK(source_precedence(LabelSource::Mlm) > source_precedence(LabelSource::Model));
    for (auto s : {LabelSource::Keyword, LabelSource::Human, LabelSource::Mlm, LabelSource::Model}) {
        CHECK(parse_label_source(to_string(s)) == s);
    }
}
