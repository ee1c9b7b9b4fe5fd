#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seasonal/embed_client.hpp"

namespace seasonal::fusion {

struct FeatureDims {
    std::size_t text = 0;
    std::size_t image = 0;

    std::size_t input_size() const { return text + image + 2; }
    bool operator==(const FeatureDims&) const = default;
};

/// [text block | image block | text present | image present]
struct FusedFeature {
    std::vector<double> values;
    FeatureDims dims;

    bool text_present() const { return values[dims.text + dims.image] != 0.0; }
    bool image_present() const { return values[dims.text + dims.image + 1] != 0.0; }
};

/// Throws Error(BothAbsent) or Error(DimMismatch).
FusedFeature fuse(const std::optional<embed::EmbeddingVector>& text, const std::optional<embed::EmbeddingVector>& image,
                  FeatureDims dims);

/// Same, pulling both vectors of `ad_id` from a store.
FusedFeature fuse(const embed::EmbeddingStore& store, const std::string& ad_id, FeatureDims dims);

/// Dimensions of the vectors held in a store; a modality without vectors has dimension 0.
FeatureDims dims_of(const embed::EmbeddingStore& store);

/// Stacks features as rows.
Eigen::MatrixXd to_matrix(std::span<const FusedFeature> features);

/**
 * Multilayer perceptron with rectifier hidden layers and a softmax head.
 * weights[l] has shape (layer_sizes[l + 1], layer_sizes[l]).
 */
struct MlpModel {
    std::vector<std::size_t> layer_sizes;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    std::uint64_t seed = 0;
    FeatureDims dims;
    std::string model_id;              // embedding model(s) the features came from
    std::vector<std::string> classes;  // class names by output index, may be empty

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t n_classes() const { return layer_sizes.back(); }
    std::size_t parameter_count() const;

    /// Throws Error(InvalidArgument) when shapes do not chain, there are
    /// fewer than 2 classes or a parameter is not finite.
    void validate() const;
};

/// Uniform fan-based initialization, U(-a, a) with a = sqrt(6 / (fan_in + fan_out));
/// biases start at zero.
MlpModel init_model(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

/// Class probabilities for one feature vector. Throws Error(DimMismatch).
std::vector<double> forward(const MlpModel& model, std::span<const double> feature);
std::vector<double> forward(const MlpModel& model, const FusedFeature& feature);

/// Row-wise probabilities for a batch (rows = examples).
Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& features);

struct Prediction {
    std::size_t class_index = 0;
    double probability = 0.0;

    bool operator==(const Prediction&) const = default;
};

/// Argmax per row; ties go to the lowest class index.
Prediction argmax(std::span<const double> probabilities);
std::vector<Prediction> predict(const MlpModel& model, std::span<const FusedFeature> features);
std::vector<Prediction> predict(const MlpModel& model, const Eigen::MatrixXd& features);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    double l2 = 1e-5;
    std::vector<std::size_t> hidden_sizes{256, 64};

    /// Throws Error(Config). epochs may be 0.
    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_losses;
    double train_accuracy = 0.0;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Mean cross-entropy over the rows plus (l2 / 2) times the squared norm of
/// the weights (biases are not penalized), and its gradient.
double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                         double l2, Gradients* gradients);

/**
 * Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) from `initial`. Rows
 * are reshuffled every epoch from the config seed. Throws Error(BadClassIndex)
 * and Error(NonFiniteLoss).
 */
std::pair<MlpModel, TrainReport> train(MlpModel initial, const Eigen::MatrixXd& features,
                                       std::span<const std::size_t> labels, const TrainConfig& config);

/// Initializes [input, hidden..., n_classes] from config.seed and trains.
std::pair<MlpModel, TrainReport> train(const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                                       std::size_t n_classes, const TrainConfig& config);

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) over all
/// parameters, numeric gradients by central differences with h = 1e-5.
double gradient_check(const MlpModel& model, const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                      double l2 = 0.0);

// Model file: a JSON header line followed by the parameters as little-endian
// IEEE doubles, layer by layer, weights row-major then biases.
inline constexpr int kModelFormatVersion = 1;

void write_model(std::ostream& out, const MlpModel& model);
MlpModel read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace seasonal::fusion
