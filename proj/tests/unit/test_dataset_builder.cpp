#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "seasonal/dataset_builder.hpp"
#include "seasonal/error.hpp"
#include "seasonal/keyword_miner.hpp"
#include "synthetic.hpp"

using namespace seasonal;
using namespace seasonal::dataset;
using Strings = std::vector<std::string>;

namespace {

std::vector<Example> examples(const std::string& cls, std::size_t n, const std::string& prefix = "") {
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({prefix + cls + std::to_string(i), cls});
    return out;
}

std::map<std::string, std::size_t> class_counts(std::span<const Example> ex) {
    std::map<std::string, std::size_t> c;
    for (const auto& e : ex) ++c[e.event_id];
    return c;
}

std::set<std::string> ad_ids(const DatasetSplit& s) {
    std::set<std::string> ids;
    for (const auto& e : s.examples) ids.insert(e.ad_id);
    return ids;
}

corpus::LabeledExample label(std::string id, std::string ev, corpus::LabelSource src = corpus::LabelSource::Keyword,
                             double confidence = 1.0) {
    return {std::move(id), std::move(ev), src, confidence, {}};
}

}  // namespace

TEST_CASE("keyword removal examples") {
    const Strings kw{"valentine"};
    CHECK(remove_keywords("Best Valentine's Day gifts", kw) == "Best Day gifts");
    CHECK(remove_keywords("Best gifts", kw) == "Best gifts");
    CHECK(remove_keywords("  odd   spacing kept ", kw) == "  odd   spacing kept ");
    CHECK(remove_keywords("VALENTINE-valentine’s!", kw) == "- !");
    const Strings phrase{"mother's day"};
    CHECK(remove_keywords("Happy MOTHERS-DAY... and mother's day!", Strings{"mothers day", "mother's day"}) ==
          "Happy ... and !");
    CHECK(remove_keywords("mother's weekend day", phrase) == "mother's weekend day");
}

TEST_CASE("keyword removal on an ad spans title and body") {
    corpus::AdRecord ad;
    ad.title = "Happy Mother's";
    ad.body = "Day flowers";
    const auto stripped = remove_keywords(ad, Strings{"mother's day"});
    corpus::EventCalendar calendar = testing::shipped_calendar();
    CHECK_FALSE(keywords::match_primary(stripped, calendar.at("mothers_day")));
    CHECK(stripped.body.find("flowers") != std::string::npos);
}

TEST_CASE("keyword removal is idempotent and complete on fuzzed text") {
    const auto calendar = testing::shipped_calendar();
    const auto all = all_primary_keywords(calendar);
    Rng rng(99);
    for (int i = 0; i < 2000; ++i) {
        const std::string text = testing::fuzz_keyword_text(rng, calendar);
        const std::string once = remove_keywords(text, all);
        CHECK(remove_keywords(once, all) == once);
        corpus::AdRecord ad;
        ad.body = once;
        for (const auto& e : calendar.events()) {
            if (e.event_id == "none") continue;
            CHECK_FALSE(keywords::match_primary(ad, e));
        }
    }
}

TEST_CASE("balancing examples") {
    BuildConfig config;
    const auto pos = examples("valentine", 100);
    const auto neg = examples("none", 900);
    const auto r = balance_binary(pos, neg, config);
    CHECK(class_counts(r.examples) == std::map<std::string, std::size_t>{{"none", 100}, {"valentine", 100}});
    CHECK_FALSE(r.insufficient_negatives);
    CHECK(balance_binary(pos, neg, config).examples == r.examples);

    const auto few = balance_binary(pos, examples("none", 50), config);
    CHECK(few.examples.size() == 150);
    CHECK(few.insufficient_negatives);

    try {
        balance_binary({}, neg, config);
        FAIL("expected EmptyPositives");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyPositives);
    }
}

TEST_CASE("balancing samples distinct negatives and keeps every positive") {
    BuildConfig config;
    config.target_positive_ratio = 0.25;
    const auto pos = examples("valentine", 40);
    const auto neg = examples("none", 500);
    const auto r = balance_binary(pos, neg, config);
    const auto counts = class_counts(r.examples);
    CHECK(counts.at("valentine") == 40);
    CHECK(counts.at("none") == 120);
    std::set<Example> unique(r.examples.begin(), r.examples.end());
    CHECK(unique.size() == r.examples.size());
    config.seed = 7;
    CHECK(balance_binary(pos, neg, config).examples != r.examples);
}

TEST_CASE("upsampling examples") {
    const auto even = [] {
        auto v = examples("a", 3);
        auto b = examples("b", 3);
        v.insert(v.end(), b.begin(), b.end());
        return v;
    }();
    CHECK(upsample_minority(even, 1) == even);

    auto skew = examples("a", 4);
    skew.push_back({"b0", "b"});
    const auto up = upsample_minority(skew, 1);
    CHECK(class_counts(up) == std::map<std::string, std::size_t>{{"a", 4}, {"b", 4}});
    for (const auto& e : up) {
        if (e.event_id == "b") CHECK(e.ad_id == "b0");
    }

    const auto single = examples("a", 5);
    CHECK(upsample_minority(single, 1) == single);
}

TEST_CASE("upsampling equalizes random class mixes") {
    Rng rng(4);
    std::uniform_int_distribution<std::size_t> size(1, 40), classes(1, 6);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Example> ex;
        const std::size_t k = classes(rng);
        for (std::size_t c = 0; c < k; ++c) {
            const auto part = examples("c" + std::to_string(c), size(rng));
            ex.insert(ex.end(), part.begin(), part.end());
        }
        const auto counts = class_counts(upsample_minority(ex, trial));
        std::size_t top = 0;
        for (auto& [c, n] : class_counts(ex)) top = std::max(top, n);
        for (auto& [c, n] : counts) CHECK(n == top);
    }
}

TEST_CASE("stratified split examples") {
    auto ex = examples("a", 10);
    const auto b = examples("b", 10);
    ex.insert(ex.end(), b.begin(), b.end());
    BuildConfig config;
    const auto [train, test] = split_stratified(ex, config);
    CHECK(class_counts(test.examples) == std::map<std::string, std::size_t>{{"a", 2}, {"b", 2}});
    CHECK(class_counts(train.examples) == std::map<std::string, std::size_t>{{"a", 8}, {"b", 8}});
    CHECK(train.name == SplitName::Train);
    CHECK(test.name == SplitName::Test);
    const auto tr = ad_ids(train), te = ad_ids(test);
    std::set<std::string> both;
    std::set_intersection(tr.begin(), tr.end(), te.begin(), te.end(), std::inserter(both, both.begin()));
    CHECK(both.empty());

    const auto again = split_stratified(ex, config);
    CHECK(again.first == train);
    CHECK(again.second == test);

    auto tiny = examples("a", 10);
    tiny.push_back({"lonely", "b"});
    try {
        split_stratified(tiny, config);
        FAIL("expected ClassTooSmall");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ClassTooSmall);
    }
}

TEST_CASE("split honors the fraction within one example per class") {
    Rng rng(8);
    std::uniform_int_distribution<std::size_t> size(2, 60);
    std::uniform_real_distribution<double> frac(0.05, 0.95);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Example> ex;
        for (int c = 0; c < 3; ++c) {
            const auto part = examples("c" + std::to_string(c), size(rng));
            ex.insert(ex.end(), part.begin(), part.end());
        }
        BuildConfig config;
        config.test_fraction = frac(rng);
        config.seed = static_cast<std::uint64_t>(trial);
        const auto [train, test] = split_stratified(ex, config);
        const auto all = class_counts(ex);
        const auto held = class_counts(test.examples);
        for (auto& [c, n] : all) {
            const double want = static_cast<double>(n) * config.test_fraction;
            CHECK(std::abs(static_cast<double>(held.at(c)) - want) <= 1.0);
        }
        CHECK(train.size() + test.size() == ex.size());
    }
}

TEST_CASE("split keeps all examples of an ad together") {
    std::vector<Example> ex = examples("a", 6);
    const auto b = examples("b", 6);
    ex.insert(ex.end(), b.begin(), b.end());
    ex.push_back({"a0", "a"});  // an upsampled duplicate
    const auto [train, test] = split_stratified(ex, BuildConfig{});
    const auto tr = ad_ids(train), te = ad_ids(test);
    CHECK((tr.count("a0") + te.count("a0")) == 1);
}

TEST_CASE("subsampling examples") {
    DatasetSplit split;
    split.examples = examples("a", 50);
    const auto b = examples("b", 50);
    split.examples.insert(split.examples.end(), b.begin(), b.end());

    const auto full = subsample_train(split, 100, 1);
    auto x = full.examples, y = split.examples;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    CHECK(x == y);

    const auto ten = subsample_train(split, 10, 1);
    CHECK(class_counts(ten.examples) == std::map<std::string, std::size_t>{{"a", 5}, {"b", 5}});
    CHECK(subsample_train(split, 10, 1) == ten);

    try {
        subsample_train(split, 101, 1);
        FAIL("expected NTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NTooLarge);
    }
}

TEST_CASE("subsampling is exact with largest remainders") {
    DatasetSplit split;
    for (auto& [c, n] : std::map<std::string, std::size_t>{{"a", 7}, {"b", 13}, {"c", 30}}) {
        const auto part = examples(c, n);
        split.examples.insert(split.examples.end(), part.begin(), part.end());
    }
    for (std::size_t n = 1; n <= 50; ++n) {
        const auto s = subsample_train(split, n, n);
        CHECK(s.size() == n);
        for (auto& [c, k] : class_counts(s.examples)) {
            const double share = static_cast<double>(class_counts(split.examples).at(c)) * n / 50.0;
            CHECK(std::abs(static_cast<double>(k) - share) < 1.0 + 1e-9);
        }
    }
}

TEST_CASE("label resolution prefers precise sources") {
    std::vector<corpus::AdRecord> ads(4);
    for (int i = 0; i < 4; ++i) ads[static_cast<std::size_t>(i)].id = "a" + std::to_string(i);
    const std::vector<corpus::LabeledExample> labels{
        label("a0", "easter", corpus::LabelSource::Mlm),
        label("a0", "valentine", corpus::LabelSource::Keyword),
        label("a1", "none", corpus::LabelSource::Human, 0.6),
        label("a1", "easter", corpus::LabelSource::Human, 0.9),
        label("a2", "valentine", corpus::LabelSource::Model),
        label("a2", "easter", corpus::LabelSource::Model),
        label("zz", "easter"),
    };
    TaskSpec task;
    task.mode = TaskMode::MultiEvent;
    const auto got = resolve_labels(ads, labels, task);
    CHECK(got == std::vector<Example>{{"a0", "valentine"}, {"a1", "easter"}, {"a2", "easter"}});

    task.unlabeled_as_none = true;
    CHECK(resolve_labels(ads, labels, task).back() == Example{"a3", "none"});

    task.unlabeled_as_none = false;
    task.sources = {corpus::LabelSource::Mlm};
    CHECK(resolve_labels(ads, labels, task) == std::vector<Example>{{"a0", "easter"}});
}

TEST_CASE("binary build balances, splits and strips keywords") {
    const auto calendar = testing::shipped_calendar();
    const auto corpus = testing::make_corpus({.n_ads = 600, .seasonal_rate = 0.2, .seed = 5}, calendar);
    const auto labels = testing::keyword_labels(corpus.ads, calendar);
    TaskSpec task;
    task.target_event = "valentine";
    task.unlabeled_as_none = true;
    BuildConfig config;
    const Build build = build_dataset(corpus.ads, labels, calendar, task, config);

    CHECK(build.classes == Strings{"none", "valentine"});
    std::vector<Example> all = build.train_with_keywords.examples;
    all.insert(all.end(), build.test_with_keywords.examples.begin(), build.test_with_keywords.examples.end());
    const auto counts = class_counts(all);
    const double ratio = static_cast<double>(counts.at("valentine")) / static_cast<double>(all.size());
    CHECK(ratio >= 0.49);
    CHECK(ratio <= 0.51);

    CHECK(ad_ids(build.train_with_keywords) == ad_ids(build.train_keywords_removed));
    CHECK(ad_ids(build.test_with_keywords) == ad_ids(build.test_keywords_removed));
    for (const auto& id : ad_ids(build.test_keywords_removed)) {
        CHECK(ad_ids(build.train_with_keywords).count(id) == 0);
        CHECK(ad_ids(build.train_keywords_removed).count(id) == 0);
    }
    CHECK(build.train_keywords_removed.variant == Variant::KeywordsRemoved);
    CHECK(build.train_keywords_removed.examples == build.train_with_keywords.examples);

    CHECK(build.keywords_removed_corpus.size() == ad_ids(build.train_with_keywords).size() +
                                                      ad_ids(build.test_with_keywords).size());
    for (const auto& ad : build.keywords_removed_corpus) {
        for (const auto& e : calendar.events()) {
            if (e.event_id != "none") CHECK_FALSE(keywords::match_primary(ad, e));
        }
    }

    const Build again = build_dataset(corpus.ads, labels, calendar, task, config);
    CHECK(again.train_with_keywords == build.train_with_keywords);
    CHECK(again.test_keywords_removed == build.test_keywords_removed);
    CHECK(again.keywords_removed_corpus == build.keywords_removed_corpus);
}

TEST_CASE("multi-event build upsamples train and caps volume") {
    const auto calendar = testing::shipped_calendar();
    const auto corpus = testing::make_corpus(
        {.n_ads = 700, .events = {"valentine", "easter", "july_4th"}, .seasonal_rate = 0.5, .seed = 6}, calendar);
    const auto labels = testing::keyword_labels(corpus.ads, calendar);
    TaskSpec task;
    task.mode = TaskMode::MultiEvent;
    task.unlabeled_as_none = true;
    BuildConfig config;
    config.upsample_minority = true;
    const Build build = build_dataset(corpus.ads, labels, calendar, task, config);
    const auto counts = class_counts(build.train_with_keywords.examples);
    std::set<std::size_t> distinct;
    for (auto& [c, n] : counts) distinct.insert(n);
    CHECK(distinct.size() == 1);

    config.volume_cap = 50;
    const Build capped = build_dataset(corpus.ads, labels, calendar, task, config);
    CHECK(capped.train_with_keywords.size() == 50);
    CHECK(capped.test_with_keywords == build.test_with_keywords);
}

TEST_CASE("labels outside the calendar are rejected") {
    const auto calendar = testing::shipped_calendar();
    std::vector<corpus::AdRecord> ads(1);
    ads[0].id = "a";
    const std::vector<corpus::LabeledExample> labels{label("a", "diwali")};
    CHECK_THROWS_AS(build_dataset(ads, labels, calendar, TaskSpec{TaskMode::MultiEvent, "", {}, false}, BuildConfig{}),
                    Error);
}

TEST_CASE("manifest round trip") {
    DatasetSplit a{SplitName::Train, {{"x", "none"}, {"y", "valentine"}}, Variant::WithKeywords, 42};
    DatasetSplit b{SplitName::Test, {{"z", "valentine"}}, Variant::KeywordsRemoved, 42};
    const std::vector<DatasetSplit> splits{a, b};
    std::ostringstream out;
    write_manifest(out, splits);
    std::istringstream in(out.str());
    const auto back = read_manifest(in);
    REQUIRE(back.size() == 2);
    CHECK(find_split(back, SplitName::Train, Variant::WithKeywords) == a);
    CHECK(find_split(back, SplitName::Test, Variant::KeywordsRemoved) == b);
    CHECK_THROWS_AS(find_split(back, SplitName::Test, Variant::WithKeywords), Error);
}

TEST_CASE("config validation") {
    BuildConfig c;
    c.test_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = BuildConfig{};
    c.target_positive_ratio = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = BuildConfig{};
    c.volume_cap = 0;
    CHECK_THROWS_AS(c.validate(), Error);
}
