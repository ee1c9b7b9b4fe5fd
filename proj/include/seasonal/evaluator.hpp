#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seasonal/dataset_builder.hpp"
#include "seasonal/embed_client.hpp"
#include "seasonal/fusion_classifier.hpp"
#include "seasonal/jsonl.hpp"

namespace seasonal::eval {

struct BinaryScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Precision, recall and F1 from raw counts; a zero denominator gives 0.
BinaryScore score_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Rows are gold labels, columns predictions.
struct ConfusionMatrix {
    std::vector<std::string> classes;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t total() const;
    std::size_t row_sum(std::size_t c) const;
    std::size_t col_sum(std::size_t c) const;
};

/// Throws Error(LengthMismatch) or Error(UnknownLabel).
ConfusionMatrix confusion(std::span<const std::string> gold, std::span<const std::string> pred,
                          std::vector<std::string> classes);

enum class Averaging { Macro, Micro };

const char* to_string(Averaging a);
Averaging parse_averaging(std::string_view text);

struct ClassMetrics {
    std::string class_id;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;    // gold count
    std::size_t predicted = 0;  // predicted count
    bool precision_undefined = false;  // never predicted
    bool recall_undefined = false;     // never gold

    /// Never gold and never predicted: reported but left out of the macro mean.
    bool absent() const { return precision_undefined && recall_undefined; }
};

struct EvalReport {
    std::vector<ClassMetrics> per_class;
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    double accuracy = 0.0;
    Averaging averaging = Averaging::Macro;
    std::optional<dataset::Variant> variant;
    std::size_t n = 0;
    ConfusionMatrix matrix;

    /// macro_f1 or micro_f1 depending on `averaging`.
    double averaged_f1() const { return averaging == Averaging::Macro ? macro_f1 : micro_f1; }
    /// Scores of a single class; throws Error(UnknownLabel).
    const ClassMetrics& of(std::string_view class_id) const;
};

EvalReport metrics(const ConfusionMatrix& cm, Averaging averaging = Averaging::Macro);

/// Which embedding blocks the classifier sees; a masked block and its flag are zeroed.
struct ModalityMask {
    bool text = true;
    bool image = true;
};

ModalityMask parse_modality_mask(std::string_view text);  // "both", "text" or "image"
const char* to_string(const ModalityMask& mask);

void apply_mask(Eigen::MatrixXd& features, fusion::FeatureDims dims, const ModalityMask& mask);

/// Fused feature rows for the examples, in order.
Eigen::MatrixXd features_for(const embed::EmbeddingStore& store, std::span<const dataset::Example> examples,
                             fusion::FeatureDims dims, const ModalityMask& mask = {});

/// Class indices of the examples' labels; throws Error(UnknownLabel).
std::vector<std::size_t> labels_for(std::span<const dataset::Example> examples, std::span<const std::string> classes);

/// Trains a classifier for a split. The model records the classes, the store
/// dimensions and `model_id`.
std::pair<fusion::MlpModel, fusion::TrainReport> train_on_split(const embed::EmbeddingStore& store,
                                                                const dataset::DatasetSplit& split,
                                                                std::span<const std::string> classes,
                                                                const fusion::TrainConfig& config,
                                                                const std::string& model_id = {});

struct PredictionRecord {
    std::string ad_id;
    std::string gold;
    std::string predicted;
    double probability = 0.0;
};

struct Evaluation {
    EvalReport report;
    std::vector<PredictionRecord> predictions;
};

/// Scores a model on a split. The model must carry class names.
Evaluation evaluate(const fusion::MlpModel& model, const embed::EmbeddingStore& store,
                    const dataset::DatasetSplit& split, const ModalityMask& mask = {},
                    Averaging averaging = Averaging::Macro);

/// Scores stored predictions; classes default to the labels seen, `none` first.
EvalReport evaluate_predictions(std::span<const PredictionRecord> predictions,
                                std::vector<std::string> classes = {}, Averaging averaging = Averaging::Macro);

struct RobustnessReport {
    EvalReport with_keywords;
    EvalReport keywords_removed;
    double f1_gap = 0.0;  // averaged F1 with keywords minus without
};

/// Evaluates one model on both variants of the test split, each against the
/// embeddings of its own variant. Throws Error(InvalidArgument) when the two
/// splits do not hold the same ad ids.
RobustnessReport robustness_compare(const fusion::MlpModel& model, const embed::EmbeddingStore& store_with_keywords,
                                    const embed::EmbeddingStore& store_keywords_removed,
                                    const dataset::DatasetSplit& test_with_keywords,
                                    const dataset::DatasetSplit& test_keywords_removed,
                                    const ModalityMask& mask = {}, Averaging averaging = Averaging::Macro);

struct SweepPoint {
    std::size_t volume = 0;
    EvalReport report;
    fusion::TrainReport training;
};

/**
 * One model per volume, trained on subsample_train(train, volume) with a
 * seed derived from config.seed and the volume, and scored on `test`.
 * Volumes must be strictly ascending. Throws Error(NTooLarge).
 */
std::vector<SweepPoint> volume_sweep(const embed::EmbeddingStore& store, const dataset::DatasetSplit& train,
                                     const dataset::DatasetSplit& test, std::span<const std::string> classes,
                                     std::span<const std::size_t> volumes, const fusion::TrainConfig& config,
                                     const ModalityMask& mask = {}, Averaging averaging = Averaging::Macro);

// Output formats.
nlohmann::ordered_json to_json(const EvalReport& report);
nlohmann::ordered_json to_json(const RobustnessReport& report);
nlohmann::ordered_json to_json(std::span<const SweepPoint> sweep);
std::string render_table(const EvalReport& report);
/// volume, macro_f1, micro_f1, accuracy; tab-separated with a header row.
void write_sweep_tsv(std::ostream& out, std::span<const SweepPoint> sweep);

void write_predictions(std::ostream& out, std::span<const PredictionRecord> predictions);
std::vector<PredictionRecord> read_predictions(std::istream& in);

}  // namespace seasonal::eval
