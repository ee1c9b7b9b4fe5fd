#include "seasonal/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "seasonal/calibration_monitor.hpp"
#include "seasonal/corpus.hpp"
#include "seasonal/dataset_builder.hpp"
#include "seasonal/embed_client.hpp"
#include "seasonal/error.hpp"
#include "seasonal/evaluator.hpp"
#include "seasonal/fusion_classifier.hpp"
#include "seasonal/keyword_miner.hpp"
#include "seasonal/labeling.hpp"
#include "seasonal/mlm_annotator.hpp"

namespace seasonal::cli {

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

namespace {

enum class Kind { String, Count, Real, Bool, StringList, CountList };

struct Field {
    const char* section;
    const char* key;
    Kind kind;
    OJson value;
    const char* help;
};

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = {
        {"paths", "corpus", Kind::String, "", "ad corpus (JSONL)"},
        {"paths", "calendar", Kind::String, "", "event calendar (JSON)"},
        {"paths", "labels", Kind::StringList, OJson::array(), "label files used by build-dataset"},
        {"paths", "gold", Kind::String, "", "gold label sample for quality estimates"},
        {"paths", "tasks", Kind::String, "", "annotation task file (default <output_dir>/tasks.jsonl)"},
        {"paths", "responses", Kind::String, "", "filled-in annotation responses"},
        {"paths", "stream", Kind::String, "", "delivery stream for calibrate"},
        {"paths", "text_embeddings", Kind::String, "", "text embedding file"},
        {"paths", "image_embeddings", Kind::String, "", "image embedding file"},
        {"paths", "text_embeddings_keywords_removed", Kind::String, "",
         "text embedding file of the keywords-removed corpus"},
        {"paths", "model", Kind::String, "", "model file (default <output_dir>/model.bin)"},
        {"paths", "predictions", Kind::String, "", "score this predictions file instead of a model"},
        {"paths", "output_dir", Kind::String, "out", "directory for all outputs"},

        {"mining", "target_event", Kind::String, "", "mine one event only (default: all)"},
        {"mining", "alpha", Kind::Real, 1.0, "additive smoothing"},
        {"mining", "min_docs", Kind::Count, 3, "minimum event document frequency"},
        {"mining", "max_keywords", Kind::Count, 0, "keep at most this many candidates (0 = all)"},
        {"mining", "ranking", Kind::String, "lift", "lift or frequency"},
        {"mining", "stopword_path", Kind::String, "", "stopword list (default: built-in English list)"},

        {"labeling", "task_template_path", Kind::String, "", "task question template"},
        {"labeling", "target_event", Kind::String, "", "event scored against gold on import"},

        {"annotator", "endpoint", Kind::String, "http://127.0.0.1:8080", "inference endpoint base URL"},
        {"annotator", "event", Kind::String, "", "event to ask about"},
        {"annotator", "prompt_template_path", Kind::String, "", "prompt template (JSON)"},
        {"annotator", "max_retries", Kind::Count, 2, "retries per ad"},
        {"annotator", "timeout_ms", Kind::Count, 60000, "request timeout"},
        {"annotator", "initial_backoff_ms", Kind::Count, 500, "first retry delay"},
        {"annotator", "backoff_multiplier", Kind::Real, 2.0, "retry delay growth"},
        {"annotator", "max_in_flight", Kind::Count, 1, "concurrent requests"},
        {"annotator", "labeled_at", Kind::String, "", "timestamp stored on labels (default: now)"},

        {"embedder", "endpoint", Kind::String, "", "embedding endpoint; when set, build-dataset fills the embedding files"},
        {"embedder", "model_id", Kind::String, "", "embedding model id recorded in the files"},
        {"embedder", "batch_size", Kind::Count, 64, "items per request"},
        {"embedder", "max_in_flight", Kind::Count, 1, "concurrent requests"},
        {"embedder", "timeout_ms", Kind::Count, 60000, "request timeout"},

        {"build", "mode", Kind::String, "binary", "binary or multi"},
        {"build", "target_event", Kind::String, "", "positive event in binary mode"},
        {"build", "sources", Kind::StringList, OJson::array(), "label sources to use (default: all)"},
        {"build", "unlabeled_as_none", Kind::Bool, false, "treat ads without labels as none"},
        {"build", "seed", Kind::Count, 42, "sampling seed"},
        {"build", "test_fraction", Kind::Real, 0.2, "test share per class"},
        {"build", "target_positive_ratio", Kind::Real, 0.5, "positive share after balancing"},
        {"build", "upsample_minority", Kind::Bool, false, "duplicate minority classes in train"},
        {"build", "volume_cap", Kind::Count, 0, "cap on train examples (0 = none)"},

        {"train", "variant", Kind::String, "with_keywords", "with_keywords or keywords_removed"},
        {"train", "learning_rate", Kind::Real, 1e-3, "Adam step size"},
        {"train", "batch_size", Kind::Count, 64, "mini-batch size"},
        {"train", "epochs", Kind::Count, 20, "passes over the data"},
        {"train", "seed", Kind::Count, 0, "initialization and shuffling seed"},
        {"train", "l2", Kind::Real, 1e-5, "weight penalty"},
        {"train", "hidden_sizes", Kind::CountList, OJson::array({256, 64}), "hidden layer widths"},

        {"eval", "variant", Kind::String, "with_keywords", "test variant for eval"},
        {"eval", "averaging", Kind::String, "macro", "macro or micro"},
        {"eval", "modalities", Kind::String, "both", "both, text or image"},
        {"eval", "volumes", Kind::CountList, OJson::array(), "train volumes for sweep"},

        {"calibration", "window_seconds", Kind::Count, 86400, "window length"},
        {"calibration", "k", Kind::Count, 7, "smoothing width (odd)"},
        {"calibration", "delta", Kind::Real, 0.1, "episode threshold"},
        {"calibration", "min_run", Kind::Count, 3, "minimum episode length in windows"},
    };
    return fields;
}

const Field* find_field(std::string_view section, std::string_view key) {
    for (const Field& f : schema()) {
        if (section == f.section && key == f.key) {
            return &f;
        }
    }
    return nullptr;
}

bool is_count(const Json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

OJson checked_value(const Field& f, const Json& v) {
    const std::string name = std::string(f.section) + "." + f.key;
    auto bad = [&](const char* what) { return Error(ErrorCode::Config, name + " must be " + what); };
    switch (f.kind) {
        case Kind::String:
            if (!v.is_string()) throw bad("a string");
            return v.get<std::string>();
        case Kind::Count:
            if (!is_count(v)) throw bad("a non-negative integer");
            return v.get<std::uint64_t>();
        case Kind::Real:
            if (!v.is_number()) throw bad("a number");
            return v.get<double>();
        case Kind::Bool:
            if (!v.is_boolean()) throw bad("true or false");
            return v.get<bool>();
        case Kind::StringList: {
            if (!v.is_array()) throw bad("a list of strings");
            OJson out = OJson::array();
            for (const Json& x : v) {
                if (!x.is_string()) throw bad("a list of strings");
                out.push_back(x.get<std::string>());
            }
            return out;
        }
        case Kind::CountList: {
            if (!v.is_array()) throw bad("a list of non-negative integers");
            OJson out = OJson::array();
            for (const Json& x : v) {
                if (!is_count(x)) throw bad("a list of non-negative integers");
                out.push_back(x.get<std::uint64_t>());
            }
            return out;
        }
    }
    return {};
}

Json parse_flag_scalar(Kind kind, const std::string& text) {
    switch (kind) {
        case Kind::String:
        case Kind::StringList:
            return text;
        case Kind::Bool:
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            return text;  // rejected by checked_value
        default:
            try {
                return Json::parse(text);
            } catch (const Json::exception&) {
                return text;
            }
    }
}

// ---- run context ----------------------------------------------------------

class Context {
public:
    Context(OJson config, std::ostream& out, std::ostream& err)
        : config_(std::move(config)), out(out), err(err) {
        output_dir = get_string("paths", "output_dir");
        if (output_dir.empty()) {
            throw Error(ErrorCode::Config, "paths.output_dir must not be empty");
        }
    }

    std::string get_string(const char* s, const char* k) const { return config_[s][k].get<std::string>(); }
    std::uint64_t get_count(const char* s, const char* k) const { return config_[s][k].get<std::uint64_t>(); }
    double get_real(const char* s, const char* k) const { return config_[s][k].get<double>(); }
    bool get_bool(const char* s, const char* k) const { return config_[s][k].get<bool>(); }
    std::vector<std::string> get_strings(const char* s, const char* k) const {
        return config_[s][k].get<std::vector<std::string>>();
    }
    std::vector<std::size_t> get_counts(const char* s, const char* k) const {
        return config_[s][k].get<std::vector<std::size_t>>();
    }

    /// A configured input file that must exist.
    fs::path input(const char* key) const {
        const std::string p = get_string("paths", key);
        if (p.empty()) {
            throw Error(ErrorCode::Config, std::string("paths.") + key + " is required for this command");
        }
        check_exists(std::string("paths.") + key, p);
        return p;
    }

    std::optional<fs::path> optional_input(const char* key) const {
        const std::string p = get_string("paths", key);
        if (p.empty()) {
            return std::nullopt;
        }
        check_exists(std::string("paths.") + key, p);
        return fs::path(p);
    }

    static void check_exists(const std::string& name, const fs::path& p) {
        if (!fs::exists(p)) {
            throw Error(ErrorCode::Config, name + ": " + p.string() + " does not exist");
        }
    }

    fs::path output(const std::string& name) const { return output_dir / name; }

    fs::path tasks_path() const {
        const std::string p = get_string("paths", "tasks");
        return p.empty() ? output("tasks.jsonl") : fs::path(p);
    }
    fs::path model_path() const {
        const std::string p = get_string("paths", "model");
        return p.empty() ? output("model.bin") : fs::path(p);
    }
    fs::path manifest_path() const { return output("manifest.jsonl"); }

    void log(const std::string& line) const { err << "[seasonal] " << line << '\n'; }

private:
    OJson config_;

public:
    std::ostream& out;
    std::ostream& err;
    fs::path output_dir;
};

void write_json(const fs::path& path, const OJson& doc) {
    std::ofstream f = open_output(path);
    f << doc.dump(2) << '\n';
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
    std::ofstream f = open_output(path);
    fn(f);
    if (!f) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

const corpus::SeasonalEvent& configured_event(const corpus::EventCalendar& calendar, const std::string& id,
                                              const char* option) {
    const corpus::SeasonalEvent* e = calendar.find(id);
    if (id.empty() || e == nullptr || id == corpus::kNoneEvent) {
        throw Error(ErrorCode::Config, std::string(option) + " must name a seasonal event of the calendar, got '" +
                                           id + "'");
    }
    return *e;
}

std::string now_utc() {
    return format_utc(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

dataset::Variant config_variant(const Context& ctx, const char* section) {
    try {
        return dataset::parse_variant(ctx.get_string(section, "variant"));
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, std::string(section) + ".variant: " + e.what());
    }
}

embed::EmbeddingStore load_variant_store(const Context& ctx, dataset::Variant variant) {
    std::vector<fs::path> files;
    const char* text_key =
        variant == dataset::Variant::WithKeywords ? "text_embeddings" : "text_embeddings_keywords_removed";
    if (auto p = ctx.optional_input(text_key)) files.push_back(*p);
    if (auto p = ctx.optional_input("image_embeddings")) files.push_back(*p);
    if (files.empty()) {
        throw Error(ErrorCode::Config, std::string("no embeddings configured for ") + dataset::to_string(variant) +
                                           " (set paths." + text_key + " and/or paths.image_embeddings)");
    }
    return embed::load_stores(files);
}

std::string store_model_id(const embed::EmbeddingStore& store) {
    std::string id;
    for (auto m : {embed::Modality::Text, embed::Modality::Image}) {
        if (auto mid = store.model_id(m)) {
            if (!id.empty()) id += "+";
            id += std::string(embed::to_string(m)) + ":" + *mid;
        }
    }
    return id;
}

std::vector<dataset::DatasetSplit> load_manifest_checked(const Context& ctx) {
    const fs::path p = ctx.manifest_path();
    if (!fs::exists(p)) {
        throw Error(ErrorCode::Config, p.string() + " does not exist; run build-dataset first");
    }
    return dataset::load_manifest(p);
}

std::vector<std::string> classes_of(const dataset::DatasetSplit& a, const dataset::DatasetSplit& b) {
    std::vector<dataset::Example> all = a.examples;
    all.insert(all.end(), b.examples.begin(), b.examples.end());
    return dataset::class_list(all);
}

fusion::TrainConfig train_config(const Context& ctx) {
    fusion::TrainConfig c;
    c.learning_rate = ctx.get_real("train", "learning_rate");
    c.batch_size = ctx.get_count("train", "batch_size");
    c.epochs = ctx.get_count("train", "epochs");
    c.seed = ctx.get_count("train", "seed");
    c.l2 = ctx.get_real("train", "l2");
    c.hidden_sizes = ctx.get_counts("train", "hidden_sizes");
    c.validate();
    return c;
}

// ---- subcommands ----------------------------------------------------------

int cmd_mine_keywords(const Context& ctx) {
    const auto ads = corpus::load_corpus(ctx.input("corpus"));
    const auto calendar = corpus::load_calendar(ctx.input("calendar"));
    const auto gold_path = ctx.optional_input("gold");

    keywords::MiningParams params;
    params.alpha = ctx.get_real("mining", "alpha");
    params.min_docs = ctx.get_count("mining", "min_docs");
    params.max_keywords = ctx.get_count("mining", "max_keywords");
    params.ranking = keywords::parse_ranking(ctx.get_string("mining", "ranking"));
    if (const std::string sw = ctx.get_string("mining", "stopword_path"); !sw.empty()) {
        Context::check_exists("mining.stopword_path", sw);
        params.stopwords = keywords::load_stopwords(sw);
    }
    if (!(params.alpha > 0.0)) {
        throw Error(ErrorCode::Config, "mining.alpha must be positive");
    }

    std::vector<const corpus::SeasonalEvent*> events;
    if (const std::string target = ctx.get_string("mining", "target_event"); !target.empty()) {
        events.push_back(&configured_event(calendar, target, "mining.target_event"));
    } else {
        for (const auto& e : calendar.events()) {
            if (e.event_id != corpus::kNoneEvent) events.push_back(&e);
        }
    }
    std::vector<corpus::LabeledExample> gold;
    if (gold_path) {
        gold = corpus::load_labels(*gold_path, &calendar);
    }

    std::map<std::string, std::set<std::string>> matched;
    OJson quality = OJson::object();
    for (const corpus::SeasonalEvent* event : events) {
        auto& ids = matched[event->event_id] = keywords::match_corpus(ads, *event);
        ctx.out << event->event_id << ": " << ids.size() << " primary matches";
        if (ids.empty()) {
            ctx.out << ", no secondary candidates\n";
            continue;
        }
        const auto stats = keywords::mine_secondary(ads, ids, event->primary_keywords, params);
        write_file(ctx.output("keywords/" + event->event_id + ".jsonl"),
                   [&](std::ostream& f) { keywords::write_keyword_report(f, stats); });
        ctx.out << ", " << stats.size() << " secondary candidates";
        for (std::size_t i = 0; i < std::min<std::size_t>(5, stats.size()); ++i) {
            ctx.out << (i == 0 ? ": " : ", ") << stats[i].token;
        }
        ctx.out << '\n';
        if (gold_path) {
            OJson q;
            try {
                const auto report = keywords::estimate_quality(ids, gold, event->event_id);
                q["precision"] = report.precision_estimate ? OJson(*report.precision_estimate) : OJson();
                q["coverage"] = report.coverage_estimate ? OJson(*report.coverage_estimate) : OJson();
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoGoldOverlap) throw;
                q["error"] = to_string(e.code());
            }
            quality[event->event_id] = std::move(q);
        }
    }

    std::vector<corpus::LabeledExample> labels;
    for (const corpus::AdRecord& ad : ads) {
        for (const corpus::SeasonalEvent* event : events) {
            if (matched[event->event_id].count(ad.id)) {
                labels.push_back({ad.id, event->event_id, corpus::LabelSource::Keyword, 1.0, ad.created_at});
            }
        }
    }
    write_file(ctx.output("keyword_labels.jsonl"), [&](std::ostream& f) {
        for (const auto& l : labels) f << corpus::to_json(l).dump() << '\n';
    });
    if (gold_path) {
        write_json(ctx.output("keyword_quality.json"), quality);
    }
    ctx.log("wrote " + std::to_string(labels.size()) + " keyword labels");
    return kOk;
}

int cmd_export_labels(const Context& ctx) {
    const auto ads = corpus::load_corpus(ctx.input("corpus"));
    const auto calendar = corpus::load_calendar(ctx.input("calendar"));
    std::string tpl = labeling::default_task_template();
    if (const std::string p = ctx.get_string("labeling", "task_template_path"); !p.empty()) {
        Context::check_exists("labeling.task_template_path", p);
        std::ifstream in = open_input(p);
        std::ostringstream ss;
        ss << in.rdbuf();
        tpl = ss.str();
    }
    const auto tasks = labeling::export_tasks(ads, calendar, tpl);
    write_file(ctx.tasks_path(), [&](std::ostream& f) { labeling::write_tasks(f, tasks); });
    ctx.out << "exported " << tasks.size() << " tasks to " << ctx.tasks_path().string() << '\n';
    return kOk;
}

int cmd_import_labels(const Context& ctx) {
    const fs::path tasks_path = ctx.tasks_path();
    Context::check_exists("paths.tasks", tasks_path);
    const auto tasks = labeling::load_tasks(tasks_path);
    std::ifstream rin = open_input(ctx.input("responses"));
    const auto responses = labeling::read_responses(rin, tasks);
    const auto aggregated = labeling::aggregate_majority(tasks, responses);

    Timestamp labeled_at{};
    for (const auto& r : responses) labeled_at = std::max(labeled_at, r.responded_at);
    const auto human = labeling::to_labeled_examples(aggregated, labeled_at);

    write_file(ctx.output("aggregated_labels.jsonl"),
               [&](std::ostream& f) { labeling::write_aggregated(f, aggregated); });
    write_file(ctx.output("human_labels.jsonl"), [&](std::ostream& f) {
        for (const auto& l : human) f << corpus::to_json(l).dump() << '\n';
    });
    const auto tied = static_cast<std::size_t>(std::count_if(aggregated.begin(), aggregated.end(), [](const auto& a) {
        return a.status == labeling::AggregateStatus::Tied;
    }));
    ctx.out << responses.size() << " responses, " << aggregated.size() << " ads, " << human.size() << " accepted, "
            << tied << " tied\n";

    if (const auto gold_path = ctx.optional_input("gold")) {
        const std::string target = ctx.get_string("labeling", "target_event");
        if (target.empty()) {
            throw Error(ErrorCode::Config, "labeling.target_event is required to score against paths.gold");
        }
        const auto gold = corpus::load_labels(*gold_path);
        const auto s = labeling::score_against_gold(aggregated, gold, target);
        OJson q{{"target_event", target}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
        write_json(ctx.output("label_quality.json"), q);
        ctx.out << "against gold: precision " << s.precision << ", recall " << s.recall << ", f1 " << s.f1 << '\n';
    }
    return kOk;
}

int cmd_annotate(const Context& ctx) {
    const auto ads = corpus::load_corpus(ctx.input("corpus"));
    const auto calendar = corpus::load_calendar(ctx.input("calendar"));
    const auto& event = configured_event(calendar, ctx.get_string("annotator", "event"), "annotator.event");
    mlm::PromptTemplate tpl = mlm::PromptTemplate::defaults();
    if (const std::string p = ctx.get_string("annotator", "prompt_template_path"); !p.empty()) {
        Context::check_exists("annotator.prompt_template_path", p);
        tpl = mlm::load_prompt_template(p);
    }
    mlm::RetryPolicy policy;
    policy.max_retries = static_cast<int>(ctx.get_count("annotator", "max_retries"));
    policy.timeout = std::chrono::milliseconds(ctx.get_count("annotator", "timeout_ms"));
    policy.initial_backoff = std::chrono::milliseconds(ctx.get_count("annotator", "initial_backoff_ms"));
    policy.backoff_multiplier = ctx.get_real("annotator", "backoff_multiplier");
    policy.max_in_flight = ctx.get_count("annotator", "max_in_flight");
    std::string at = ctx.get_string("annotator", "labeled_at");
    const Timestamp labeled_at = parse_utc(at.empty() ? now_utc() : at);

    mlm::HttpInferenceClient client(ctx.get_string("annotator", "endpoint"), policy.timeout);
    const auto result = mlm::annotate_batch(ads, event, client, policy, tpl, labeled_at);
    for (const auto& r : result.retries) {
        ctx.log("retry " + r.ad_id + " after attempt " + std::to_string(r.attempt) + ": " + r.reason);
    }
    write_file(ctx.output("mlm_labels_" + event.event_id + ".jsonl"), [&](std::ostream& f) {
        for (const auto& l : result.labels) f << corpus::to_json(l).dump() << '\n';
    });
    write_file(ctx.output("mlm_skipped_" + event.event_id + ".jsonl"), [&](std::ostream& f) {
        for (const auto& s : result.skipped) f << OJson{{"ad_id", s.ad_id}, {"reason", s.reason}}.dump() << '\n';
    });
    ctx.out << result.labels.size() << " labeled, " << result.skipped.size() << " skipped\n";
    if (result.aborted) {
        ctx.err << "annotation stopped: " << *result.aborted << '\n';
        return kRuntimeError;
    }
    return kOk;
}

void fill_embeddings(const Context& ctx, const std::vector<corpus::AdRecord>& ads,
                     const std::vector<corpus::AdRecord>& stripped) {
    const std::string endpoint = ctx.get_string("embedder", "endpoint");
    if (endpoint.empty()) {
        return;
    }
    embed::HttpEmbeddingProvider provider(endpoint, ctx.get_string("embedder", "model_id"),
                                          std::chrono::milliseconds(ctx.get_count("embedder", "timeout_ms")));
    embed::FetchOptions options;
    options.batch_size = ctx.get_count("embedder", "batch_size");
    options.max_in_flight = ctx.get_count("embedder", "max_in_flight");
    auto fill = [&](const char* key, const std::vector<corpus::AdRecord>& source, embed::Modality m) {
        const std::string p = ctx.get_string("paths", key);
        if (p.empty()) {
            return;
        }
        embed::EmbeddingStore store = fs::exists(p) ? embed::load_store(p) : embed::EmbeddingStore{};
        const auto report = embed::fetch(source, m, provider, store, options);
        embed::save_store(p, store, m);
        ctx.log(std::string("paths.") + key + ": fetched " + std::to_string(report.requested) + " vectors, " +
                std::to_string(report.missing_content.size()) + " ads without content");
    };
    fill("text_embeddings", ads, embed::Modality::Text);
    fill("text_embeddings_keywords_removed", stripped, embed::Modality::Text);
    fill("image_embeddings", ads, embed::Modality::Image);
}

int cmd_build_dataset(const Context& ctx) {
    const auto ads = corpus::load_corpus(ctx.input("corpus"));
    const auto calendar = corpus::load_calendar(ctx.input("calendar"));
    std::vector<corpus::LabeledExample> labels;
    for (const std::string& p : ctx.get_strings("paths", "labels")) {
        Context::check_exists("paths.labels", p);
        auto part = corpus::load_labels(p, &calendar);
        labels.insert(labels.end(), part.begin(), part.end());
    }

    dataset::TaskSpec task;
    task.mode = dataset::parse_task_mode(ctx.get_string("build", "mode"));
    task.target_event = ctx.get_string("build", "target_event");
    if (task.mode == dataset::TaskMode::Binary) {
        configured_event(calendar, task.target_event, "build.target_event");
    }
    for (const std::string& s : ctx.get_strings("build", "sources")) {
        try {
            task.sources.insert(corpus::parse_label_source(s));
        } catch (const Error& e) {
            throw Error(ErrorCode::Config, std::string("build.sources: ") + e.what());
        }
    }
    task.unlabeled_as_none = ctx.get_bool("build", "unlabeled_as_none");

    dataset::BuildConfig config;
    config.seed = ctx.get_count("build", "seed");
    config.test_fraction = ctx.get_real("build", "test_fraction");
    config.target_positive_ratio = ctx.get_real("build", "target_positive_ratio");
    config.upsample_minority = ctx.get_bool("build", "upsample_minority");
    if (const auto cap = ctx.get_count("build", "volume_cap"); cap > 0) {
        config.volume_cap = cap;
    }
    config.validate();

    const dataset::Build build = dataset::build_dataset(ads, labels, calendar, task, config);
    const std::vector<dataset::DatasetSplit> splits{build.train_with_keywords, build.test_with_keywords,
                                                    build.train_keywords_removed, build.test_keywords_removed};
    dataset::save_manifest(ctx.manifest_path(), splits);
    corpus::save_corpus(ctx.output("corpus_keywords_removed.jsonl"), build.keywords_removed_corpus);

    OJson summary;
    summary["mode"] = dataset::to_string(task.mode);
    summary["classes"] = build.classes;
    summary["train"] = build.train_with_keywords.size();
    summary["test"] = build.test_with_keywords.size();
    summary["insufficient_negatives"] = build.insufficient_negatives;
    OJson counts = OJson::object();
    for (const auto& c : build.classes) {
        std::size_t tr = 0;
        std::size_t te = 0;
        for (const auto& e : build.train_with_keywords.examples) tr += e.event_id == c;
        for (const auto& e : build.test_with_keywords.examples) te += e.event_id == c;
        counts[c] = {{"train", tr}, {"test", te}};
    }
    summary["class_counts"] = counts;
    write_json(ctx.output("build_summary.json"), summary);

    std::vector<corpus::AdRecord> in_build;
    {
        std::set<std::string> ids;
        for (const auto& s : splits) for (const auto& e : s.examples) ids.insert(e.ad_id);
        for (const auto& ad : ads) if (ids.count(ad.id)) in_build.push_back(ad);
    }
    fill_embeddings(ctx, in_build, build.keywords_removed_corpus);

    if (build.insufficient_negatives) {
        ctx.log("warning: fewer negatives than the target ratio asks for; all were kept");
    }
    ctx.out << "train " << build.train_with_keywords.size() << ", test " << build.test_with_keywords.size()
            << ", classes " << build.classes.size() << '\n';
    return kOk;
}

int cmd_train(const Context& ctx) {
    const auto splits = load_manifest_checked(ctx);
    const dataset::Variant variant = config_variant(ctx, "train");
    const auto& train = dataset::find_split(splits, dataset::SplitName::Train, variant);
    const auto& test = dataset::find_split(splits, dataset::SplitName::Test, variant);
    const auto store = load_variant_store(ctx, variant);
    const auto classes = classes_of(train, test);
    const fusion::TrainConfig config = train_config(ctx);

    auto [model, report] = eval::train_on_split(store, train, classes, config, store_model_id(store));
    fusion::save_model(ctx.model_path(), model);
    OJson doc;
    doc["variant"] = dataset::to_string(variant);
    doc["n"] = train.size();
    doc["classes"] = classes;
    doc["layer_sizes"] = model.layer_sizes;
    doc["epoch_losses"] = report.epoch_losses;
    doc["train_accuracy"] = report.train_accuracy;
    write_json(ctx.output("train_report.json"), doc);
    ctx.out << "trained on " << train.size() << " examples, final loss "
            << (report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back()) << ", train accuracy "
            << report.train_accuracy << '\n';
    return kOk;
}

int cmd_eval(const Context& ctx) {
    const auto averaging = eval::parse_averaging(ctx.get_string("eval", "averaging"));
    if (const auto pred_path = ctx.optional_input("predictions")) {
        std::ifstream in = open_input(*pred_path);
        const auto preds = eval::read_predictions(in);
        const auto report = eval::evaluate_predictions(preds, {}, averaging);
        write_json(ctx.output("eval_predictions.json"), eval::to_json(report));
        ctx.out << eval::render_table(report);
        return kOk;
    }
    const dataset::Variant variant = config_variant(ctx, "eval");
    const auto mask = eval::parse_modality_mask(ctx.get_string("eval", "modalities"));
    const auto splits = load_manifest_checked(ctx);
    const auto& test = dataset::find_split(splits, dataset::SplitName::Test, variant);
    const fs::path model_path = ctx.model_path();
    Context::check_exists("paths.model", model_path);
    const auto model = fusion::load_model(model_path);
    const auto store = load_variant_store(ctx, variant);

    const auto result = eval::evaluate(model, store, test, mask, averaging);
    const std::string stem = std::string("eval_") + dataset::to_string(variant);
    write_json(ctx.output(stem + ".json"), eval::to_json(result.report));
    write_file(ctx.output(stem + ".txt"), [&](std::ostream& f) { f << eval::render_table(result.report); });
    write_file(ctx.output(std::string("predictions_") + dataset::to_string(variant) + ".jsonl"),
               [&](std::ostream& f) { eval::write_predictions(f, result.predictions); });
    ctx.out << eval::render_table(result.report);
    return kOk;
}

int cmd_robustness(const Context& ctx) {
    const auto averaging = eval::parse_averaging(ctx.get_string("eval", "averaging"));
    const auto mask = eval::parse_modality_mask(ctx.get_string("eval", "modalities"));
    const auto splits = load_manifest_checked(ctx);
    const fs::path model_path = ctx.model_path();
    Context::check_exists("paths.model", model_path);
    const auto model = fusion::load_model(model_path);
    const auto with = load_variant_store(ctx, dataset::Variant::WithKeywords);
    const auto removed = load_variant_store(ctx, dataset::Variant::KeywordsRemoved);
    const auto report = eval::robustness_compare(
        model, with, removed, dataset::find_split(splits, dataset::SplitName::Test, dataset::Variant::WithKeywords),
        dataset::find_split(splits, dataset::SplitName::Test, dataset::Variant::KeywordsRemoved), mask, averaging);
    write_json(ctx.output("robustness.json"), eval::to_json(report));
    ctx.out << "with keywords:\n"
            << eval::render_table(report.with_keywords) << "keywords removed:\n"
            << eval::render_table(report.keywords_removed) << "f1 gap: " << report.f1_gap << '\n';
    return kOk;
}

int cmd_sweep(const Context& ctx) {
    const auto averaging = eval::parse_averaging(ctx.get_string("eval", "averaging"));
    const auto mask = eval::parse_modality_mask(ctx.get_string("eval", "modalities"));
    const dataset::Variant variant = config_variant(ctx, "train");
    const auto splits = load_manifest_checked(ctx);
    const auto& train = dataset::find_split(splits, dataset::SplitName::Train, variant);
    const auto& test = dataset::find_split(splits, dataset::SplitName::Test, variant);
    const auto store = load_variant_store(ctx, variant);
    const auto volumes = ctx.get_counts("eval", "volumes");
    const auto sweep =
        eval::volume_sweep(store, train, test, classes_of(train, test), volumes, train_config(ctx), mask, averaging);
    write_json(ctx.output("sweep.json"), eval::to_json(sweep));
    write_file(ctx.output("sweep.tsv"), [&](std::ostream& f) { eval::write_sweep_tsv(f, sweep); });
    eval::write_sweep_tsv(ctx.out, sweep);
    return kOk;
}

int cmd_calibrate(const Context& ctx) {
    std::ifstream in = open_input(ctx.input("stream"));
    const auto events = calibration::read_stream(in);
    std::optional<corpus::EventCalendar> calendar;
    if (const auto p = ctx.optional_input("calendar")) {
        calendar = corpus::load_calendar(*p);
    }
    calibration::MonitorConfig config;
    config.window_length = std::chrono::seconds(ctx.get_count("calibration", "window_seconds"));
    config.k = ctx.get_count("calibration", "k");
    config.delta = ctx.get_real("calibration", "delta");
    config.min_run = ctx.get_count("calibration", "min_run");
    const auto report = calibration::monitor(events, config, calendar ? &*calendar : nullptr);
    write_json(ctx.output("calibration.json"), calibration::to_json(report, config));
    write_file(ctx.output("calibration_series.tsv"),
               [&](std::ostream& f) { calibration::write_series_tsv(f, report); });
    ctx.out << report.windows.size() << " windows, " << report.episodes.size() << " episodes\n";
    for (const auto& ep : report.episodes) {
        ctx.out << "  " << calibration::to_string(ep.direction) << " windows " << ep.start_window << ".."
                << ep.end_window << " extreme " << ep.extreme_ratio;
        for (const auto& id : ep.overlapping_events) ctx.out << ' ' << id;
        ctx.out << '\n';
    }
    return kOk;
}

struct Command {
    const char* name;
    const char* help;
    int (*fn)(const Context&);
};

constexpr Command kCommands[] = {
    {"mine-keywords", "match primary keywords and rank secondary keyword candidates", cmd_mine_keywords},
    {"export-labels", "write annotation tasks for human labeling", cmd_export_labels},
    {"import-labels", "aggregate annotation responses into labels", cmd_import_labels},
    {"annotate", "label ads through a multimodal language model endpoint", cmd_annotate},
    {"build-dataset", "balance, split and strip keywords into train/test manifests", cmd_build_dataset},
    {"train", "train the fused-embedding classifier", cmd_train},
    {"eval", "score the classifier (or a predictions file) on the test split", cmd_eval},
    {"robustness", "compare scores with and without keywords", cmd_robustness},
    {"sweep", "train and score at increasing training volumes", cmd_sweep},
    {"calibrate", "windowed calibration ratios and episode detection", cmd_calibrate},
};

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config:
        case ErrorCode::Template:
            return kUsageError;
        case ErrorCode::Format:
        case ErrorCode::DuplicateId:
        case ErrorCode::VersionMismatch:
        case ErrorCode::UnknownEvent:
        case ErrorCode::UnknownTask:
        case ErrorCode::UnknownLabel:
        case ErrorCode::DimMismatch:
            return kDataFormatError;
        default:
            return kRuntimeError;
    }
}

}  // namespace

nlohmann::ordered_json default_config() {
    OJson doc = OJson::object();
    for (const Field& f : schema()) {
        doc[f.section][f.key] = f.value;
    }
    return doc;
}

nlohmann::ordered_json merge_config(const Json& document) {
    OJson merged = default_config();
    if (!document.is_object()) {
        throw Error(ErrorCode::Config, "config must be a JSON object");
    }
    for (const auto& [section, body] : document.items()) {
        if (!merged.contains(section)) {
            throw Error(ErrorCode::Config, "unknown config section '" + section + "'");
        }
        if (!body.is_object()) {
            throw Error(ErrorCode::Config, "config section '" + section + "' must be an object");
        }
        for (const auto& [key, value] : body.items()) {
            const Field* f = find_field(section, key);
            if (f == nullptr) {
                throw Error(ErrorCode::Config, "unknown config key '" + section + "." + key + "'");
            }
            merged[section][key] = checked_value(*f, value);
        }
    }
    return merged;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Seasonal ad detection toolkit", "seasonal"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    bool print_config = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_flag("--print-config", print_config, "print the effective config and exit");

    std::vector<std::pair<const Field*, std::vector<std::string>>> overrides;
    overrides.reserve(schema().size());
    for (const Field& f : schema()) {
        overrides.emplace_back(&f, std::vector<std::string>{});
        const std::string flag = std::string("--") + f.section + "." + f.key;
        auto* opt = app.add_option(flag, overrides.back().second, f.help);
        if (f.kind == Kind::StringList || f.kind == Kind::CountList) {
            opt->delimiter(',')->allow_extra_args();
        } else {
            opt->expected(1);
        }
        opt->group("Config overrides");
    }
    for (const Command& c : kCommands) {
        app.add_subcommand(c.name, c.help);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsageError;
    }

    const std::string started_at = now_utc();
    const Command* command = nullptr;
    for (const Command& c : kCommands) {
        if (app.got_subcommand(c.name)) {
            command = &c;
        }
    }

    try {
        Json document = Json::object();
        if (!config_path.empty()) {
            std::ifstream in = open_input(config_path);
            try {
                document = Json::parse(in);
            } catch (const Json::parse_error& e) {
                throw Error(ErrorCode::Config, config_path + ": " + e.what());
            }
        }
        OJson config = merge_config(document);
        for (const auto& [field, values] : overrides) {
            if (values.empty() && app.count(std::string("--") + field->section + "." + field->key) == 0) {
                continue;
            }
            Json v;
            if (field->kind == Kind::StringList || field->kind == Kind::CountList) {
                v = Json::array();
                for (const std::string& s : values) {
                    if (!s.empty()) v.push_back(parse_flag_scalar(field->kind, s));
                }
            } else {
                v = parse_flag_scalar(field->kind, values.back());
            }
            config[field->section][field->key] = checked_value(*field, v);
        }
        if (print_config) {
            out << config.dump(2) << '\n';
            return kOk;
        }

        const Context ctx(config, out, err);
        const int code = command->fn(ctx);

        OJson meta;
        meta["subcommand"] = command->name;
        meta["args"] = args;
        meta["started_at"] = started_at;
        meta["finished_at"] = now_utc();
        meta["exit_code"] = code;
        write_json(ctx.output(std::string("metadata/") + command->name + ".json"), meta);
        return code;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

}  // namespace seasonal::cli
