#include "seasonal/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "seasonal/error.hpp"
#include "seasonal/rng.hpp"

namespace seasonal::eval {

BinaryScore score_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    BinaryScore s;
    const auto t = static_cast<double>(tp);
    if (tp + fp > 0) {
        s.precision = t / static_cast<double>(tp + fp);
    }
    if (tp + fn > 0) {
        s.recall = t / static_cast<double>(tp + fn);
    }
    if (s.precision + s.recall > 0.0) {
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    return s;
}

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
        for (std::size_t c : row) {
            n += c;
        }
    }
    return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t c) const {
    std::size_t n = 0;
    for (std::size_t x : counts[c]) {
        n += x;
    }
    return n;
}

std::size_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::size_t n = 0;
    for (const auto& row : counts) {
        n += row[c];
    }
    return n;
}

ConfusionMatrix confusion(std::span<const std::string> gold, std::span<const std::string> pred,
                          std::vector<std::string> classes) {
    if (gold.size() != pred.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(gold.size()) + " gold labels but " +
                                                   std::to_string(pred.size()) + " predictions");
    }
    std::map<std::string_view, std::size_t> index;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        if (!index.emplace(classes[k], k).second) {
            throw Error(ErrorCode::InvalidArgument, "class '" + classes[k] + "' listed twice");
        }
    }
    auto lookup = [&](const std::string& label) {
        const auto it = index.find(label);
        if (it == index.end()) {
            throw Error(ErrorCode::UnknownLabel, "label '" + label + "' is not a known class");
        }
        return it->second;
    };
    ConfusionMatrix cm;
    cm.counts.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
    for (std::size_t i = 0; i < gold.size(); ++i) {
        ++cm.counts[lookup(gold[i])][lookup(pred[i])];
    }
    cm.classes = std::move(classes);
    return cm;
}

const char* to_string(Averaging a) {
    return a == Averaging::Macro ? "macro" : "micro";
}

Averaging parse_averaging(std::string_view text) {
    if (text == "macro") return Averaging::Macro;
    if (text == "micro") return Averaging::Micro;
    throw Error(ErrorCode::Config, "averaging must be 'macro' or 'micro', got '" + std::string(text) + "'");
}

const ClassMetrics& EvalReport::of(std::string_view class_id) const {
    for (const ClassMetrics& c : per_class) {
        if (c.class_id == class_id) {
            return c;
        }
    }
    throw Error(ErrorCode::UnknownLabel, "report has no class '" + std::string(class_id) + "'");
}

EvalReport metrics(const ConfusionMatrix& cm, Averaging averaging) {
    EvalReport report;
    report.averaging = averaging;
    report.matrix = cm;
    report.n = cm.total();
    std::size_t diagonal = 0;
    double f1_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < cm.classes.size(); ++c) {
        ClassMetrics m;
        m.class_id = cm.classes[c];
        const std::size_t tp = cm.counts[c][c];
        m.support = cm.row_sum(c);
        m.predicted = cm.col_sum(c);
        m.precision_undefined = m.predicted == 0;
        m.recall_undefined = m.support == 0;
        const BinaryScore s = score_counts(tp, m.predicted - tp, m.support - tp);
        m.precision = s.precision;
        m.recall = s.recall;
        m.f1 = s.f1;
        if (!m.absent()) {
            f1_sum += m.f1;
            ++counted;
        }
        diagonal += tp;
        report.per_class.push_back(std::move(m));
    }
    report.macro_f1 = counted > 0 ? f1_sum / static_cast<double>(counted) : 0.0;
    // Single-label classification: pooled precision, recall and F1 all equal accuracy.
    report.accuracy = report.n > 0 ? static_cast<double>(diagonal) / static_cast<double>(report.n) : 0.0;
    report.micro_f1 = report.accuracy;
    return report;
}

ModalityMask parse_modality_mask(std::string_view text) {
    if (text == "both") return {true, true};
    if (text == "text") return {true, false};
    if (text == "image") return {false, true};
    throw Error(ErrorCode::Config, "modalities must be 'both', 'text' or 'image', got '" + std::string(text) + "'");
}

const char* to_string(const ModalityMask& mask) {
    if (mask.text && mask.image) return "both";
    if (mask.text) return "text";
    if (mask.image) return "image";
    return "none";
}

void apply_mask(Eigen::MatrixXd& features, fusion::FeatureDims dims, const ModalityMask& mask) {
    const auto t = static_cast<Eigen::Index>(dims.text);
    const auto im = static_cast<Eigen::Index>(dims.image);
    if (!mask.text) {
        features.leftCols(t).setZero();
        features.col(t + im).setZero();
    }
    if (!mask.image) {
        features.middleCols(t, im).setZero();
        features.col(t + im + 1).setZero();
    }
}

Eigen::MatrixXd features_for(const embed::EmbeddingStore& store, std::span<const dataset::Example> examples,
                             fusion::FeatureDims dims, const ModalityMask& mask) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(dims.input_size()));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const fusion::FusedFeature f = fusion::fuse(store, examples[i].ad_id, dims);
        for (std::size_t j = 0; j < f.values.size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f.values[j];
        }
    }
    apply_mask(m, dims, mask);
    return m;
}

std::vector<std::size_t> labels_for(std::span<const dataset::Example> examples, std::span<const std::string> classes) {
    std::map<std::string_view, std::size_t> index;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        index.emplace(classes[k], k);
    }
    std::vector<std::size_t> out;
    out.reserve(examples.size());
    for (const dataset::Example& e : examples) {
        const auto it = index.find(e.event_id);
        if (it == index.end()) {
            throw Error(ErrorCode::UnknownLabel, "ad " + e.ad_id + " has label '" + e.event_id +
                                                     "' outside the class list");
        }
        out.push_back(it->second);
    }
    return out;
}

std::pair<fusion::MlpModel, fusion::TrainReport> train_on_split(const embed::EmbeddingStore& store,
                                                                const dataset::DatasetSplit& split,
                                                                std::span<const std::string> classes,
                                                                const fusion::TrainConfig& config,
                                                                const std::string& model_id) {
    const fusion::FeatureDims dims = fusion::dims_of(store);
    const Eigen::MatrixXd x = features_for(store, split.examples, dims);
    const std::vector<std::size_t> y = labels_for(split.examples, classes);
    auto result = fusion::train(x, y, classes.size(), config);
    result.first.dims = dims;
    result.first.model_id = model_id;
    result.first.classes.assign(classes.begin(), classes.end());
    return result;
}

Evaluation evaluate(const fusion::MlpModel& model, const embed::EmbeddingStore& store,
                    const dataset::DatasetSplit& split, const ModalityMask& mask, Averaging averaging) {
    if (model.classes.size() != model.n_classes()) {
        throw Error(ErrorCode::InvalidArgument, "model carries no class names");
    }
    const Eigen::MatrixXd x = features_for(store, split.examples, model.dims, mask);
    const std::vector<fusion::Prediction> preds = fusion::predict(model, x);
    Evaluation out;
    std::vector<std::string> gold;
    std::vector<std::string> pred;
    for (std::size_t i = 0; i < split.examples.size(); ++i) {
        const std::string& p = model.classes[preds[i].class_index];
        out.predictions.push_back({split.examples[i].ad_id, split.examples[i].event_id, p, preds[i].probability});
        gold.push_back(split.examples[i].event_id);
        pred.push_back(p);
    }
    out.report = metrics(confusion(gold, pred, model.classes), averaging);
    out.report.variant = split.variant;
    return out;
}

EvalReport evaluate_predictions(std::span<const PredictionRecord> predictions, std::vector<std::string> classes,
                                Averaging averaging) {
    std::vector<std::string> gold;
    std::vector<std::string> pred;
    std::vector<dataset::Example> seen;
    for (const PredictionRecord& p : predictions) {
        gold.push_back(p.gold);
        pred.push_back(p.predicted);
        seen.push_back({p.ad_id, p.gold});
        seen.push_back({p.ad_id, p.predicted});
    }
    if (classes.empty()) {
        classes = dataset::class_list(seen);
    }
    return metrics(confusion(gold, pred, std::move(classes)), averaging);
}

RobustnessReport robustness_compare(const fusion::MlpModel& model, const embed::EmbeddingStore& store_with_keywords,
                                    const embed::EmbeddingStore& store_keywords_removed,
                                    const dataset::DatasetSplit& test_with_keywords,
                                    const dataset::DatasetSplit& test_keywords_removed, const ModalityMask& mask,
                                    Averaging averaging) {
    std::multiset<std::string> a;
    std::multiset<std::string> b;
    for (const auto& e : test_with_keywords.examples) a.insert(e.ad_id);
    for (const auto& e : test_keywords_removed.examples) b.insert(e.ad_id);
    if (a != b) {
        throw Error(ErrorCode::InvalidArgument, "the two test variants hold different ad ids");
    }
    RobustnessReport r;
    r.with_keywords = evaluate(model, store_with_keywords, test_with_keywords, mask, averaging).report;
    r.keywords_removed = evaluate(model, store_keywords_removed, test_keywords_removed, mask, averaging).report;
    r.f1_gap = r.with_keywords.averaged_f1() - r.keywords_removed.averaged_f1();
    return r;
}

std::vector<SweepPoint> volume_sweep(const embed::EmbeddingStore& store, const dataset::DatasetSplit& train,
                                     const dataset::DatasetSplit& test, std::span<const std::string> classes,
                                     std::span<const std::size_t> volumes, const fusion::TrainConfig& config,
                                     const ModalityMask& mask, Averaging averaging) {
    for (std::size_t k = 0; k < volumes.size(); ++k) {
        if (k > 0 && volumes[k] <= volumes[k - 1]) {
            throw Error(ErrorCode::InvalidArgument, "volumes must be strictly ascending");
        }
        if (volumes[k] > train.size()) {
            throw Error(ErrorCode::NTooLarge, "volume " + std::to_string(volumes[k]) + " exceeds the " +
                                                  std::to_string(train.size()) + " training examples");
        }
    }
    std::vector<SweepPoint> out;
    for (std::size_t volume : volumes) {
        const dataset::DatasetSplit sub = dataset::subsample_train(train, volume, derive_seed(config.seed, volume));
        auto [model, training] = train_on_split(store, sub, classes, config);
        SweepPoint point;
        point.volume = volume;
        point.report = evaluate(model, store, test, mask, averaging).report;
        point.training = std::move(training);
        out.push_back(std::move(point));
    }
    return out;
}

// ---- output ---------------------------------------------------------------

nlohmann::ordered_json to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["n"] = report.n;
    j["variant"] = report.variant ? Json(dataset::to_string(*report.variant)) : Json(nullptr);
    j["averaging"] = to_string(report.averaging);
    j["macro_f1"] = report.macro_f1;
    j["micro_f1"] = report.micro_f1;
    j["accuracy"] = report.accuracy;
    auto& classes = j["per_class"] = nlohmann::ordered_json::array();
    for (const ClassMetrics& c : report.per_class) {
        nlohmann::ordered_json cj;
        cj["class"] = c.class_id;
        cj["precision"] = c.precision;
        cj["recall"] = c.recall;
        cj["f1"] = c.f1;
        cj["support"] = c.support;
        cj["predicted"] = c.predicted;
        cj["precision_undefined"] = c.precision_undefined;
        cj["recall_undefined"] = c.recall_undefined;
        classes.push_back(std::move(cj));
    }
    j["confusion"] = {{"classes", report.matrix.classes}, {"counts", report.matrix.counts}};
    return j;
}

nlohmann::ordered_json to_json(const RobustnessReport& report) {
    nlohmann::ordered_json j;
    j["with_keywords"] = to_json(report.with_keywords);
    j["keywords_removed"] = to_json(report.keywords_removed);
    j["f1_gap"] = report.f1_gap;
    return j;
}

nlohmann::ordered_json to_json(std::span<const SweepPoint> sweep) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const SweepPoint& p : sweep) {
        nlohmann::ordered_json pj;
        pj["volume"] = p.volume;
        pj["report"] = to_json(p.report);
        pj["epoch_losses"] = p.training.epoch_losses;
        pj["train_accuracy"] = p.training.train_accuracy;
        j.push_back(std::move(pj));
    }
    return j;
}

std::string render_table(const EvalReport& report) {
    std::size_t width = 5;
    for (const ClassMetrics& c : report.per_class) {
        width = std::max(width, c.class_id.size());
    }
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %9s  %9s  %7s\n", static_cast<int>(width), "class", "precision",
                  "recall", "f1", "support");
    out << buf;
    for (const ClassMetrics& c : report.per_class) {
        std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %9.4f  %9.4f  %7zu%s\n", static_cast<int>(width),
                      c.class_id.c_str(), c.precision, c.recall, c.f1, c.support,
                      c.absent() ? "  (absent)" : (c.precision_undefined || c.recall_undefined ? "  (degenerate)" : ""));
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "n=%zu  macro_f1=%.4f  micro_f1=%.4f  accuracy=%.4f\n", report.n, report.macro_f1,
                  report.micro_f1, report.accuracy);
    out << buf;
    return out.str();
}

void write_sweep_tsv(std::ostream& out, std::span<const SweepPoint> sweep) {
    out << "volume\tmacro_f1\tmicro_f1\taccuracy\n";
    for (const SweepPoint& p : sweep) {
        out << p.volume << '\t' << format_double(p.report.macro_f1) << '\t' << format_double(p.report.micro_f1)
            << '\t' << format_double(p.report.accuracy) << '\n';
    }
}

void write_predictions(std::ostream& out, std::span<const PredictionRecord> predictions) {
    for (const PredictionRecord& p : predictions) {
        nlohmann::ordered_json j;
        j["ad_id"] = p.ad_id;
        j["gold"] = p.gold;
        j["predicted"] = p.predicted;
        j["probability"] = p.probability;
        out << j.dump() << '\n';
    }
}

std::vector<PredictionRecord> read_predictions(std::istream& in) {
    std::vector<PredictionRecord> out;
    for_each_jsonl(in, [&](const Json& r, std::size_t) {
        PredictionRecord p;
        p.ad_id = require_string(r, "ad_id");
        p.gold = require_string(r, "gold");
        p.predicted = require_string(r, "predicted");
        if (const auto it = r.find("probability"); it != r.end() && !it->is_null()) {
            p.probability = it->get<double>();
        }
        out.push_back(std::move(p));
    });
    return out;
}

}  // namespace seasonal::eval
