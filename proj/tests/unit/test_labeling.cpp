#include <doctest.h>

#include <sstream>

#include "seasonal/error.hpp"
#include "seasonal/labeling.hpp"
#include "synthetic.hpp"

using namespace seasonal;
using namespace seasonal::labeling;

namespace {

corpus::AdRecord ad(std::string id, std::string title, std::string body) {
    corpus::AdRecord a;
    a.id = std::move(id);
    a.title = std::move(title);
    a.body = std::move(body);
    return a;
}

std::vector<AnnotationTask> tasks_for(std::vector<std::string> ad_ids) {
    std::vector<corpus::AdRecord> ads;
    for (auto& id : ad_ids) ads.push_back(ad(id, "t", "b"));
    return export_tasks(ads, testing::shipped_calendar(), default_task_template());
}

AnnotatorResponse vote(const std::string& ad_id, std::string annotator, std::string label, int second = 0) {
    return {task_id_for(ad_id), std::move(annotator), std::move(label),
            parse_utc("2024-01-01T00:00:00Z") + std::chrono::seconds{second}};
}

corpus::LabeledExample gold(std::string id, std::string ev) {
    corpus::LabeledExample l;
    l.ad_id = std::move(id);
    l.event_id = std::move(ev);
    return l;
}

}  // namespace

TEST_CASE("export creates one task per ad") {
    const auto calendar = testing::shipped_calendar();
    CHECK(export_tasks({}, calendar, default_task_template()).empty());

    const std::vector<corpus::AdRecord> ads{ad("a1", "Roses", "Red roses for her"), ad("a2", "Grill", "")};
    const auto tasks = export_tasks(ads, calendar, default_task_template());
    REQUIRE(tasks.size() == 2);
    const auto ids = calendar.event_ids();
    CHECK(ids.size() == 7);
    for (const auto& t : tasks) {
        CHECK(t.candidate_labels.size() == 7);
        CHECK(std::set<std::string>(t.candidate_labels.begin(), t.candidate_labels.end()) ==
              std::set<std::string>(ids.begin(), ids.end()));
    }
    CHECK(tasks[0].ad_id == "a1");
    CHECK(tasks[0].task_id == task_id_for("a1"));
    CHECK(tasks[0].question_text.find("Red roses for her") != std::string::npos);
    CHECK(export_tasks(ads, calendar, default_task_template()) == tasks);
}

TEST_CASE("templates must hold every placeholder") {
    const auto calendar = testing::shipped_calendar();
    const std::vector<corpus::AdRecord> ads{ad("a1", "x", "y")};
    try {
        export_tasks(ads, calendar, "{title} {events}");
        FAIL("expected Template");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Template);
    }
}

TEST_CASE("majority examples") {
    const auto tasks = tasks_for({"a", "b", "c"});
    const std::vector<AnnotatorResponse> responses{
        vote("a", "u1", "valentine"), vote("a", "u2", "valentine"), vote("a", "u3", "none"),
        vote("b", "u1", "easter"),    vote("b", "u2", "none"),      vote("c", "u1", "july_4th"),
    };
    const auto labels = aggregate_majority(tasks, responses);
    REQUIRE(labels.size() == 3);
    CHECK(labels[0].ad_id == "a");
    CHECK(labels[0].event_id == std::optional<std::string>("valentine"));
    CHECK(labels[0].vote_fraction == doctest::Approx(2.0 / 3.0));
    CHECK(labels[0].n_responses == 3);
    CHECK(labels[0].status == AggregateStatus::Accepted);
    CHECK(labels[1].status == AggregateStatus::Tied);
    CHECK_FALSE(labels[1].event_id.has_value());
    CHECK(labels[2].event_id == std::optional<std::string>("july_4th"));
    CHECK(labels[2].vote_fraction == 1.0);
}

TEST_CASE("responses to unknown tasks are rejected") {
    const auto tasks = tasks_for({"a"});
    const std::vector<AnnotatorResponse> responses{vote("zzz", "u1", "none")};
    try {
        aggregate_majority(tasks, responses);
        FAIL("expected UnknownTask");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownTask);
    }
}

TEST_CASE("a repeated annotator counts once, latest answer") {
    const auto tasks = tasks_for({"a"});
    const std::vector<AnnotatorResponse> responses{
        vote("a", "u1", "none", 5), vote("a", "u1", "valentine", 1), vote("a", "u2", "none", 0)};
    const auto labels = aggregate_majority(tasks, responses);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].n_responses == 2);
    CHECK(labels[0].event_id == std::optional<std::string>("none"));
    CHECK(labels[0].vote_fraction == 1.0);
}

TEST_CASE("majority matches a vote-count oracle on every small combination") {
    const std::vector<std::string> labels{"none", "valentine", "easter"};
    const auto tasks = tasks_for({"a"});
    for (int n = 1; n <= 3; ++n) {
        int combos = 1;
        for (int i = 0; i < n; ++i) combos *= 3;
        for (int code = 0; code < combos; ++code) {
            std::vector<AnnotatorResponse> responses;
            std::map<std::string, int> count;
            int c = code;
            for (int i = 0; i < n; ++i) {
                const std::string& l = labels[static_cast<std::size_t>(c % 3)];
                c /= 3;
                responses.push_back(vote("a", "u" + std::to_string(i), l));
                ++count[l];
            }
            int top = 0;
            for (auto& [l, k] : count) top = std::max(top, k);
            std::vector<std::string> leaders;
            for (auto& [l, k] : count) {
                if (k == top) leaders.push_back(l);
            }
            const auto got = aggregate_majority(tasks, responses);
            REQUIRE(got.size() == 1);
            CHECK(got[0].n_responses == static_cast<std::size_t>(n));
            CHECK(got[0].vote_fraction == doctest::Approx(static_cast<double>(top) / n));
            if (leaders.size() == 1) {
                CHECK(got[0].status == AggregateStatus::Accepted);
                CHECK(got[0].event_id == std::optional<std::string>(leaders[0]));
            } else {
                CHECK(got[0].status == AggregateStatus::Tied);
            }
        }
    }
}

TEST_CASE("score against gold") {
    SUBCASE("identical predictions") {
        const std::vector<AggregatedLabel> labels{{"a", "valentine", 1.0, 1, AggregateStatus::Accepted},
                                                  {"b", "none", 1.0, 1, AggregateStatus::Accepted}};
        const std::vector<corpus::LabeledExample> g{gold("a", "valentine"), gold("b", "none")};
        const auto s = score_against_gold(labels, g, "valentine");
        CHECK(s.precision == 1.0);
        CHECK(s.recall == 1.0);
        CHECK(s.f1 == 1.0);
    }
    SUBCASE("integer counts behind sixty and eighty-nine percent") {
        std::vector<AggregatedLabel> labels;
        std::vector<corpus::LabeledExample> g;
        auto add = [&](const std::string& prefix, int n, const char* predicted, const char* truth) {
            for (int i = 0; i < n; ++i) {
                const std::string id = prefix + std::to_string(i);
                labels.push_back({id, std::string(predicted), 1.0, 1, AggregateStatus::Accepted});
                g.push_back(gold(id, truth));
            }
        };
        add("tp", 534, "valentine", "valentine");
        add("fp", 356, "valentine", "none");
        add("fn", 66, "none", "valentine");
        add("tn", 100, "none", "none");
        const auto s = score_against_gold(labels, g, "valentine");
        CHECK(s.precision == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(s.recall == doctest::Approx(0.89).epsilon(1e-12));
        const double f1 = 2 * 0.6 * 0.89 / (0.6 + 0.89);
        CHECK(s.f1 == doctest::Approx(f1).epsilon(1e-12));
        CHECK(std::abs(s.f1 - 0.7168) <= 5e-4);
    }
    SUBCASE("tied labels count as negative") {
        const std::vector<AggregatedLabel> labels{{"a", std::nullopt, 0.5, 2, AggregateStatus::Tied}};
        const std::vector<corpus::LabeledExample> g{gold("a", "valentine")};
        const auto s = score_against_gold(labels, g, "valentine");
        CHECK(s.recall == 0.0);
    }
    SUBCASE("gold without positives") {
        const std::vector<corpus::LabeledExample> g{gold("a", "none")};
        try {
            score_against_gold({}, g, "valentine");
            FAIL("expected NoGoldPositives");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NoGoldPositives);
        }
    }
}

TEST_CASE("f1 lies between precision and recall") {
    Rng rng(3);
    std::uniform_int_distribution<std::size_t> d(0, 50);
    for (int i = 0; i < 500; ++i) {
        const auto s = eval::score_counts(d(rng) + 1, d(rng), d(rng));
        CHECK(s.f1 >= std::min(s.precision, s.recall) - 1e-12);
        CHECK(s.f1 <= std::max(s.precision, s.recall) + 1e-12);
    }
    const auto eq = eval::score_counts(5, 5, 5);
    CHECK(eq.f1 == doctest::Approx(eq.precision));
}

TEST_CASE("export then import of untouched responses is lossless") {
    const auto tasks = tasks_for({"a", "b"});
    std::ostringstream exported;
    write_tasks(exported, tasks);
    std::istringstream back(exported.str());
    const auto read_back = read_tasks(back);
    CHECK(read_back == tasks);

    std::istringstream unfilled(exported.str());
    CHECK(read_responses(unfilled, read_back).empty());

    const std::vector<AnnotatorResponse> responses{vote("a", "u1", "valentine", 3), vote("b", "u2", "none", 4)};
    std::ostringstream filled;
    write_responses(filled, responses, tasks);
    std::istringstream filled_in(filled.str());
    CHECK(read_responses(filled_in, tasks) == responses);
    std::istringstream as_tasks(filled.str());
    CHECK(read_tasks(as_tasks) == tasks);
}

TEST_CASE("responses must pick a candidate label") {
    const auto tasks = tasks_for({"a"});
    const std::vector<AnnotatorResponse> responses{vote("a", "u1", "diwali")};
    auto copy = tasks;
    copy[0].candidate_labels.push_back("diwali");
    std::ostringstream out;
    write_responses(out, responses, copy);
    std::istringstream in(out.str());
    CHECK_THROWS_AS(read_responses(in, tasks), Error);
}

TEST_CASE("accepted labels become human examples") {
    const std::vector<AggregatedLabel> labels{{"a", "valentine", 2.0 / 3.0, 3, AggregateStatus::Accepted},
                                              {"b", std::nullopt, 0.5, 2, AggregateStatus::Tied}};
    const auto examples = to_labeled_examples(labels, parse_utc("2024-01-01T00:00:00Z"));
    REQUIRE(examples.size() == 1);
    CHECK(examples[0].source == corpus::LabelSource::Human);
    CHECK(examples[0].confidence == doctest::Approx(2.0 / 3.0));
}
