// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seasonal/calibration_monitor.hpp"
#include "seasonal/cli.hpp"
#include "seasonal/dataset_builder.hpp"
#include "seasonal/error.hpp"
#include "seasonal/evaluator.hpp"
#include "seasonal/fusion_classifier.hpp"
#include "seasonal/keyword_miner.hpp"
#include "seasonal/mlm_annotator.hpp"
#include "stub_server.hpp"
#include "synthetic.hpp"

using namespace seasonal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c);
    return buf;
}

// ---- 1, 2 -----------------------------------------------------------------

Outcome clusters_benchmark(const std::vector<std::string>& classes, std::size_t train_per_class,
                           std::size_t test_per_class, double floor, bool binary) {
    double worst = 1.0;
    std::string scores;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        testing::ClusterSpec spec;
        spec.classes = classes;
        spec.train_per_class = train_per_class;
        spec.test_per_class = test_per_class;
        spec.text_dim = 32;
        spec.image_dim = 32;
        spec.separation = 4.0;
        spec.seed = seed;
        const auto data = testing::make_clusters(spec);
        fusion::TrainConfig config;
        config.seed = seed;
        const auto [model, unused] = eval::train_on_split(data.store, data.train, data.classes, config);
        const auto result = eval::evaluate(model, data.store, data.test);
        const double f1 = binary ? result.report.of(classes.back()).f1 : result.report.macro_f1;
        worst = std::min(worst, f1);
        scores += fmt("%.4f ", f1);
    }
    return {worst >= floor, (binary ? "F1 per seed: " : "macro F1 per seed: ") + scores + fmt("(floor %.2f)", floor)};
}

Outcome criterion_1() {
    return clusters_benchmark({"none", "valentine"}, 1000, 250, 0.98, true);
}

Outcome criterion_2() {
    return clusters_benchmark(testing::multi_event_classes(), 300, 75, 0.95, false);
}

// ---- 3 --------------------------------------------------------------------

Outcome criterion_3() {
    Rng rng(derive_seed(3, "gradcheck"));
    std::uniform_int_distribution<std::size_t> width(2, 8);
    std::uniform_int_distribution<std::size_t> depth(0, 2);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int net = 0; net < 10; ++net) {
        std::vector<std::size_t> sizes{width(rng)};
        const std::size_t hidden = depth(rng) + 1;
        for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(width(rng));
        sizes.push_back(std::max<std::size_t>(2, width(rng) / 2));
        auto model = fusion::init_model(sizes, rng());
        for (auto& b : model.biases) {
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.1 * normal(rng);
        }
        const std::size_t n = 12;
        Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sizes.front()));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = normal(rng);
        }
        std::vector<std::size_t> labels(n);
        for (auto& l : labels) l = rng() % sizes.back();
        worst = std::max(worst, fusion::gradient_check(model, x, labels, net % 2 ? 1e-3 : 0.0));
    }
    return {worst <= 1e-4, fmt("max relative error %.3g over 10 nets (limit 1e-4)", worst)};
}

// ---- 4 --------------------------------------------------------------------

std::vector<dataset::Example> examples_of(const std::string& cls, std::size_t n) {
    std::vector<dataset::Example> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({cls + "-" + std::to_string(i), cls});
    return out;
}

Outcome criterion_4() {
    Rng rng(derive_seed(4, "balance"));
    std::uniform_int_distribution<std::size_t> pos_size(1, 2000);
    double lo = 1.0, hi = 0.0;
    bool flags_ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t pos = pos_size(rng);
        std::uniform_int_distribution<std::size_t> neg_size(pos, 20 * pos);
        const std::size_t neg = neg_size(rng);
        dataset::BuildConfig config;
        config.seed = rng();
        const auto p = examples_of("valentine", pos);
        const auto n = examples_of("none", neg);
        const auto result = dataset::balance_binary(p, n, config);
        const auto positives = static_cast<double>(
            std::count_if(result.examples.begin(), result.examples.end(),
                          [](const dataset::Example& e) { return e.event_id == "valentine"; }));
        const double ratio = positives / static_cast<double>(result.examples.size());
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        flags_ok = flags_ok && !result.insufficient_negatives;
    }

    bool equal = true;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<dataset::Example> mixed;
        const std::size_t k = 2 + rng() % 6;
        for (std::size_t c = 0; c < k; ++c) {
            const auto part = examples_of("class" + std::to_string(c), 1 + rng() % 300);
            mixed.insert(mixed.end(), part.begin(), part.end());
        }
        std::map<std::string, std::size_t> counts;
        for (const auto& e : dataset::upsample_minority(mixed, rng())) ++counts[e.event_id];
        std::set<std::size_t> distinct;
        for (const auto& [cls, c] : counts) distinct.insert(c);
        equal = equal && counts.size() == k && distinct.size() == 1;
    }
    return {lo >= 0.49 && hi <= 0.51 && flags_ok && equal,
            fmt("positive ratio in [%.4f, %.4f] over 50 pairs; upsampling equal: ", lo, hi) + (equal ? "yes" : "no")};
}

// ---- 5 --------------------------------------------------------------------

Outcome criterion_5() {
    const auto calendar = testing::shipped_calendar();
    const auto keywords = dataset::all_primary_keywords(calendar);
    Rng rng(derive_seed(5, "fuzz"));
    std::size_t leftover = 0, not_idempotent = 0, seeded = 0;
    for (int i = 0; i < 10000; ++i) {
        corpus::AdRecord ad;
        ad.id = "fuzz";
        ad.title = testing::fuzz_keyword_text(rng, calendar);
        ad.body = testing::fuzz_keyword_text(rng, calendar);
        for (const auto& e : calendar.events()) {
            if (keywords::match_primary(ad, e)) {
                ++seeded;
                break;
            }
        }
        const auto once = dataset::remove_keywords(ad, keywords);
        for (const auto& e : calendar.events()) {
            if (keywords::match_primary(once, e)) {
                ++leftover;
                break;
            }
        }
        const auto twice = dataset::remove_keywords(once, keywords);
        if (twice.title != once.title || twice.body != once.body) ++not_idempotent;
    }
    std::ostringstream detail;
    detail << seeded << "/10000 texts held keywords; " << leftover << " with leftovers, " << not_idempotent
           << " not idempotent";
    return {leftover == 0 && not_idempotent == 0 && seeded > 9000, detail.str()};
}

// ---- 6 --------------------------------------------------------------------

Outcome criterion_6() {
    const auto& filler = testing::filler_words();
    const std::vector<std::string> primary{"valentine"};
    std::size_t hits = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(derive_seed(seed, "planted"));
        std::vector<corpus::AdRecord> ads;
        std::set<std::string> matched;
        for (std::size_t i = 0; i < 1000; ++i) {
            const bool event = i < 200;
            std::string text = event ? "valentine" : "";
            for (int w = 0; w < 10; ++w) text += " " + filler[rng() % filler.size()];
            if (std::bernoulli_distribution(event ? 0.40 : 0.02)(rng)) text += " zephyrine";
            corpus::AdRecord ad;
            ad.id = "ad-" + std::to_string(i);
            ad.body = text;
            if (event) matched.insert(ad.id);
            ads.push_back(std::move(ad));
        }
        keywords::MiningParams params;
        params.stopwords.clear();
        const auto ranked = keywords::mine_secondary(ads, matched, primary, params);
        for (std::size_t r = 0; r < std::min<std::size_t>(3, ranked.size()); ++r) {
            if (ranked[r].token == "zephyrine") {
                ++hits;
                break;
            }
        }
    }

    // Equal share: the token makes up a quarter of both subsets' tokens.
    std::vector<corpus::AdRecord> ads;
    std::set<std::string> matched;
    Rng rng(derive_seed(6, "equal"));
    for (std::size_t i = 0; i < 60; ++i) {
        corpus::AdRecord ad;
        ad.id = "eq-" + std::to_string(i);
        const bool event = i < 20;
        ad.body = event ? "valentine" : filler[rng() % filler.size()];
        ad.body += " " + filler[rng() % filler.size()] + " " + filler[rng() % filler.size()] + " tally";
        if (event) matched.insert(ad.id);
        ads.push_back(std::move(ad));
    }
    keywords::MiningParams params;
    params.alpha = 1e-12;
    params.min_docs = 1;
    params.stopwords.clear();
    double lift = -1;
    for (const auto& s : keywords::mine_secondary(ads, matched, primary, params)) {
        if (s.token == "tally") lift = s.lift;
    }
    return {hits == 20 && std::abs(lift - 1.0) <= 1e-9,
            fmt("planted token top-3 in %.0f/20 corpora; equal-share lift %.12f", static_cast<double>(hits), lift)};
}

// ---- 7 --------------------------------------------------------------------

Outcome criterion_7() {
    const std::vector<std::string> classes{"x", "y", "z"};
    std::size_t cases = 0, mismatches = 0;
    for (std::size_t len = 1; len <= 6; ++len) {
        std::size_t combos = 1;
        for (std::size_t i = 0; i < 2 * len; ++i) combos *= 3;
        for (std::size_t code = 0; code < combos; ++code) {
            std::vector<std::string> g(len), p(len);
            std::size_t c = code;
            for (std::size_t i = 0; i < len; ++i, c /= 3) g[i] = classes[c % 3];
            for (std::size_t i = 0; i < len; ++i, c /= 3) p[i] = classes[c % 3];
            const auto r = eval::metrics(eval::confusion(g, p, classes));
            double f1_sum = 0;
            int present = 0;
            bool ok = true;
            for (const auto& k : classes) {
                std::size_t tp = 0, fp = 0, fn = 0;
                for (std::size_t i = 0; i < len; ++i) {
                    tp += g[i] == k && p[i] == k;
                    fp += g[i] != k && p[i] == k;
                    fn += g[i] == k && p[i] != k;
                }
                const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
                const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
                const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
                const auto& m = r.of(k);
                ok = ok && std::abs(m.precision - prec) <= 1e-12 && std::abs(m.recall - rec) <= 1e-12 &&
                     std::abs(m.f1 - f1) <= 1e-12;
                if (tp + fp + fn > 0) {
                    f1_sum += f1;
                    ++present;
                }
            }
            ok = ok && std::abs(r.macro_f1 - f1_sum / present) <= 1e-12;
            mismatches += !ok;
            ++cases;
        }
    }
    eval::ConfusionMatrix cm;
    cm.classes = {"none", "valentine"};
    cm.counts = {{0, 356}, {66, 534}};
    const auto& v = eval::metrics(cm).of("valentine");
    const bool paper = std::abs(v.precision - 0.600) <= 5e-4 && std::abs(v.recall - 0.890) <= 5e-4 &&
                       std::abs(v.f1 - 0.7168) <= 5e-4;
    std::ostringstream detail;
    detail << cases << " sequences, " << mismatches << " mismatches; "
           << fmt("534/356/66 gives P=%.4f R=%.4f F1=%.4f", v.precision, v.recall, v.f1);
    return {mismatches == 0 && cases == 597870 && paper, detail.str()};
}

// ---- 8 --------------------------------------------------------------------

struct RobustnessFixture {
    dataset::Build build;
    std::vector<corpus::AdRecord> ads;
    std::map<std::string, std::string> truth;
};

RobustnessFixture robustness_fixture(std::uint64_t seed) {
    const auto calendar = testing::shipped_calendar();
    RobustnessFixture f;
    auto corpus = testing::make_corpus({.n_ads = 3000, .seasonal_rate = 0.3, .seed = seed}, calendar);
    f.ads = std::move(corpus.ads);
    f.truth = std::move(corpus.truth);
    std::vector<corpus::LabeledExample> labels;
    for (const auto& ad : f.ads) {
        labels.push_back({ad.id, f.truth.at(ad.id), corpus::LabelSource::Human, 1.0, ad.created_at});
    }
    dataset::TaskSpec task;
    task.target_event = "valentine";
    dataset::BuildConfig config;
    config.seed = seed;
    f.build = dataset::build_dataset(f.ads, labels, calendar, task, config);
    return f;
}

eval::RobustnessReport robustness_run(const RobustnessFixture& f, bool content_signal, std::uint64_t seed) {
    const auto calendar = testing::shipped_calendar();
    testing::EncoderSpec spec;
    spec.content_signal = content_signal;
    spec.seed = seed;
    const auto with = testing::encode(f.ads, f.truth, calendar, spec);
    const auto without = testing::encode(f.build.keywords_removed_corpus, f.truth, calendar, spec);
    fusion::TrainConfig config;
    config.seed = seed;
    const auto [model, unused] = eval::train_on_split(with, f.build.train_with_keywords, f.build.classes, config);
    return eval::robustness_compare(model, with, without, f.build.test_with_keywords, f.build.test_keywords_removed);
}

Outcome criterion_8() {
    const auto f = robustness_fixture(8);
    const auto keyword_only = robustness_run(f, false, 8);
    const auto content = robustness_run(f, true, 8);
    const double kr = keyword_only.keywords_removed.macro_f1;
    const double kr_pos = keyword_only.keywords_removed.of("valentine").f1;
    const double gap = content.f1_gap;
    return {kr <= 0.55 && kr_pos <= 0.55 && std::abs(gap) <= 0.05,
            fmt("keyword-only model: keywords_removed macro F1 %.4f (valentine F1 %.4f); content model gap %.4f",
                kr, kr_pos, gap)};
}

// ---- 9 --------------------------------------------------------------------

Outcome criterion_9() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        testing::ClusterSpec spec;
        spec.train_per_class = 5000;
        spec.test_per_class = 500;
        spec.seed = 100 + seed;
        const auto data = testing::make_clusters(spec);
        fusion::TrainConfig config;
        config.seed = seed;
        const std::vector<std::size_t> volumes{100, 1000, 10000};
        const auto sweep = eval::volume_sweep(data.store, data.train, data.test, data.classes, volumes, config);
        const double f100 = sweep[0].report.macro_f1;
        const double f1k = sweep[1].report.macro_f1;
        const double f10k = sweep[2].report.macro_f1;
        ok = ok && f10k >= f100 && std::abs(f1k - f10k) <= 0.02;
        detail += fmt("[%.4f %.4f %.4f] ", f100, f1k, f10k);
    }
    return {ok, "macro F1 at 100/1k/10k per seed: " + detail};
}

// ---- 10 -------------------------------------------------------------------

Outcome criterion_10() {
    calibration::MonitorConfig config;
    const auto calibrated = calibration::monitor(testing::make_stream(60, 1000, 10), config);
    std::size_t inside = 0;
    for (const auto& r : calibrated.smoothed) inside += r && *r >= 0.95 && *r <= 1.05;
    const double share = static_cast<double>(inside) / 60.0;
    const bool a = share >= 0.95 && calibrated.episodes.empty();

    const std::size_t from = 25, to = 35;
    const auto scaled = calibration::monitor(testing::make_stream(60, 1000, 11, from, to, 0.7), config);
    bool b = false;
    std::size_t covered = 0;
    double extreme = 0;
    if (scaled.episodes.size() == 1 && scaled.episodes[0].direction == calibration::Direction::Under) {
        const auto& ep = scaled.episodes[0];
        for (std::size_t w = from; w < to; ++w) covered += w >= ep.start_window && w <= ep.end_window;
        extreme = ep.extreme_ratio;
        b = covered >= 8 && std::abs(extreme - 0.7) <= 0.05;
    }
    std::ostringstream detail;
    detail << fmt("(a) %.1f%% of smoothed ratios in [0.95, 1.05], ", 100 * share) << calibrated.episodes.size()
           << " episodes; (b) " << scaled.episodes.size() << " episodes, " << covered
           << "/10 scaled windows covered" << fmt(", min ratio %.4f", extreme);
    return {a && b, detail.str()};
}

// ---- 11 -------------------------------------------------------------------

Outcome criterion_11() {
    const auto calendar = testing::shipped_calendar();
    const auto ads = testing::make_corpus({.n_ads = 100, .seed = 11}, calendar).ads;
    stub::StubServer server;
    server.start();
    mlm::HttpInferenceClient client(server.base_url(), std::chrono::seconds{10});
    mlm::RetryPolicy policy;
    policy.initial_backoff = std::chrono::milliseconds{5};
    policy.max_in_flight = 4;
    const auto labeled_at = parse_utc("2024-03-01T00:00:00Z");
    const auto& event = calendar.at("valentine");

    auto run_batch = [&] {
        return mlm::annotate_batch(ads, event, client, policy, mlm::PromptTemplate::defaults(), labeled_at);
    };
    const auto first = run_batch();
    const auto second = run_batch();

    std::vector<std::string> seen;
    for (const auto& l : first.labels) seen.push_back(l.ad_id);
    for (const auto& s : first.skipped) seen.push_back(s.ad_id);
    std::sort(seen.begin(), seen.end());
    std::vector<std::string> expected;
    for (const auto& ad : ads) expected.push_back(ad.id);
    std::sort(expected.begin(), expected.end());
    const bool partition = !first.aborted && seen == expected;

    auto key = [](const mlm::BatchResult& r) {
        std::vector<std::string> k;
        for (const auto& l : r.labels) k.push_back(l.ad_id + "=" + l.event_id);
        for (const auto& s : r.skipped) k.push_back(s.ad_id + "!" + s.reason);
        std::sort(k.begin(), k.end());
        return k;
    };
    const bool idempotent = !second.aborted && key(first) == key(second);

    auto decides = [](const std::string& raw, mlm::Decision want) {
        try {
            return mlm::parse_response(raw).decision == want;
        } catch (const Error&) {
            return false;
        }
    };
    auto unparseable = [](const std::string& raw) {
        try {
            mlm::parse_response(raw);
            return false;
        } catch (const Error& e) {
            return e.code() == ErrorCode::UnparseableResponse;
        }
    };
    const bool parser = decides(stub::generate_reply("stub:yes"), mlm::Decision::Yes) &&
                        decides(stub::generate_reply("stub:no"), mlm::Decision::No) &&
                        mlm::parse_response(stub::generate_reply("stub:loquacious")).rationale.has_value() &&
                        unparseable(stub::generate_reply("stub:unparseable")) &&
                        decides("ANSWER: yes", mlm::Decision::Yes) &&
                        decides("The ad mentions roses and a February date, so yes, it is seasonal.",
                                mlm::Decision::Yes) &&
                        unparseable("I cannot tell from this ad.");
    server.stop();

    std::ostringstream detail;
    detail << first.labels.size() << " labels + " << first.skipped.size() << " skipped of " << ads.size()
           << "; partition " << (partition ? "ok" : "broken") << ", rerun " << (idempotent ? "identical" : "differs")
           << ", parser " << (parser ? "ok" : "wrong");
    return {partition && idempotent && parser, detail.str()};
}

// ---- 12 -------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir).generic_string();
        if (rel.rfind("metadata/", 0) == 0) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream bytes;
        bytes << in.rdbuf();
        files[rel] = bytes.str();
    }
    return files;
}

Outcome criterion_12() {
    const auto dir = testing::scratch_dir("acceptance_determinism");
    const auto files = testing::write_pipeline_fixture(dir, 600, 12);
    const std::vector<std::string> flags{
        "--paths.corpus",           files.corpus.string(),
        "--paths.calendar",         files.calendar.string(),
        "--paths.labels",           files.labels.string(),
        "--paths.text_embeddings",  files.text_embeddings.string(),
        "--paths.image_embeddings", files.image_embeddings.string(),
        "--paths.text_embeddings_keywords_removed", files.text_embeddings_keywords_removed.string(),
        "--paths.output_dir",       (dir / "out").string(),
        "--build.target_event",     "valentine",
        "--build.unlabeled_as_none", "true",
        "--train.epochs",           "5"};
    std::vector<std::map<std::string, std::string>> runs;
    for (int pass = 0; pass < 2; ++pass) {
        fs::remove_all(dir / "out");
        for (const char* command : {"build-dataset", "train", "eval"}) {
            std::vector<std::string> args{command};
            args.insert(args.end(), flags.begin(), flags.end());
            std::ostringstream out, err;
            if (cli::run(args, out, err) != cli::kOk) {
                return {false, std::string(command) + " failed: " + err.str()};
            }
        }
        runs.push_back(snapshot(dir / "out"));
    }
    std::vector<std::string> differing;
    for (const auto& [name, bytes] : runs[0]) {
        const auto it = runs[1].find(name);
        if (it == runs[1].end() || it->second != bytes) differing.push_back(name);
    }
    std::ostringstream detail;
    detail << runs[0].size() << " artifacts compared, " << differing.size() << " differ";
    for (const auto& d : differing) detail << " " << d;
    return {differing.empty() && runs[0].size() == runs[1].size() && runs[0].size() >= 5, detail.str()};
}

struct Criterion {
    int number;
    const char* name;
    double limit_seconds;  // 0 = no stated limit
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "single-event synthetic benchmark", 60, criterion_1},
        {2, "multi-event synthetic benchmark", 120, criterion_2},
        {3, "gradient check", 10, criterion_3},
        {4, "balancing", 0, criterion_4},
        {5, "keyword removal", 0, criterion_5},
        {6, "secondary keyword recovery", 0, criterion_6},
        {7, "metrics oracle", 0, criterion_7},
        {8, "robustness protocol", 0, criterion_8},
        {9, "volume sweep", 0, criterion_9},
        {10, "calibration", 0, criterion_10},
        {11, "annotator against the stub", 0, criterion_11},
        {12, "determinism", 0, criterion_12},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_seconds > 0 && seconds > c.limit_seconds) {
            outcome.pass = false;
            outcome.detail += fmt("; took %.1f s, limit %.0f s", seconds, c.limit_seconds);
        }
        failures += !outcome.pass;
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", outcome.pass ? "PASS" : "FAIL", c.number, c.name,
                    outcome.detail.c_str(), seconds);
        std::fflush(stdout);
    }
    std::printf("SKIP criterion 13 (adapter conformance): secondary component, not built here\n");
    return failures == 0 ? 0 : 1;
}
