#include "seasonal/fusion_classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "seasonal/error.hpp"
#include "seasonal/jsonl.hpp"
#include "seasonal/rng.hpp"

namespace seasonal::fusion {

namespace {

void copy_block(const std::optional<embed::EmbeddingVector>& v, std::size_t dim, const char* name,
                std::vector<double>& out, std::size_t offset) {
    if (!v) {
        return;
    }
    if (v->dim() != dim) {
        throw Error(ErrorCode::DimMismatch, std::string(name) + " vector has dimension " + std::to_string(v->dim()) +
                                                ", expected " + std::to_string(dim));
    }
    for (double x : v->values) {
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::InvalidArgument, std::string(name) + " vector holds a non-finite value");
        }
    }
    std::copy(v->values.begin(), v->values.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
}

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - m).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

struct ForwardPass {
    std::vector<Eigen::MatrixXd> activations;  // activations[0] = input, then one per layer (pre-softmax last)
};

ForwardPass run_layers(const MlpModel& model, const Eigen::MatrixXd& features) {
    if (static_cast<std::size_t>(features.cols()) != model.input_size()) {
        throw Error(ErrorCode::DimMismatch, "feature length " + std::to_string(features.cols()) +
                                                " does not match model input " + std::to_string(model.input_size()));
    }
    ForwardPass pass;
    pass.activations.reserve(model.weights.size() + 1);
    pass.activations.push_back(features);
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        Eigen::MatrixXd z = pass.activations.back() * model.weights[l].transpose();
        z.rowwise() += model.biases[l].transpose();
        if (l + 1 < model.weights.size()) {
            z = z.cwiseMax(0.0);
        }
        pass.activations.push_back(std::move(z));
    }
    return pass;
}

void check_labels(std::span<const std::size_t> labels, std::size_t n_rows, std::size_t n_classes) {
    if (labels.size() != n_rows) {
        throw Error(ErrorCode::LengthMismatch, "label count differs from feature rows");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes) {
            throw Error(ErrorCode::BadClassIndex, "label " + std::to_string(labels[i]) + " at row " +
                                                      std::to_string(i) + " but model has " +
                                                      std::to_string(n_classes) + " classes");
        }
    }
}

}  // namespace

FusedFeature fuse(const std::optional<embed::EmbeddingVector>& text, const std::optional<embed::EmbeddingVector>& image,
                  FeatureDims dims) {
    if (!text && !image) {
        throw Error(ErrorCode::BothAbsent, "neither a text nor an image vector is present");
    }
    FusedFeature f;
    f.dims = dims;
    f.values.assign(dims.input_size(), 0.0);
    copy_block(text, dims.text, "text", f.values, 0);
    copy_block(image, dims.image, "image", f.values, dims.text);
    f.values[dims.text + dims.image] = text ? 1.0 : 0.0;
    f.values[dims.text + dims.image + 1] = image ? 1.0 : 0.0;
    return f;
}

FusedFeature fuse(const embed::EmbeddingStore& store, const std::string& ad_id, FeatureDims dims) {
    try {
        return fuse(store.get(ad_id, embed::Modality::Text), store.get(ad_id, embed::Modality::Image), dims);
    } catch (const Error& e) {
        throw Error(e.code(), "ad " + ad_id + ": " + e.what());
    }
}

FeatureDims dims_of(const embed::EmbeddingStore& store) {
    return {store.dim(embed::Modality::Text).value_or(0), store.dim(embed::Modality::Image).value_or(0)};
}

Eigen::MatrixXd to_matrix(std::span<const FusedFeature> features) {
    if (features.empty()) {
        return {};
    }
    const std::size_t cols = features.front().values.size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].values.size() != cols) {
            throw Error(ErrorCode::DimMismatch, "feature rows differ in length");
        }
        for (std::size_t j = 0; j < cols; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i].values[j];
        }
    }
    return m;
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    }
    return n;
}

void MlpModel::validate() const {
    if (layer_sizes.size() < 2 || layer_sizes.back() < 2) {
        throw Error(ErrorCode::InvalidArgument, "a model needs an input layer and at least 2 classes");
    }
    if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size()) {
        throw Error(ErrorCode::InvalidArgument, "layer count does not match parameters");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const auto out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
        const auto in = static_cast<Eigen::Index>(layer_sizes[l]);
        if (layer_sizes[l] == 0 || weights[l].rows() != out || weights[l].cols() != in || biases[l].size() != out) {
            throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(l) + " has the wrong shape");
        }
        if (!weights[l].allFinite() || !biases[l].allFinite()) {
            throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(l) + " holds non-finite parameters");
        }
    }
    if (!classes.empty() && classes.size() != n_classes()) {
        throw Error(ErrorCode::InvalidArgument, "class names do not match the output size");
    }
}

MlpModel init_model(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
    MlpModel model;
    model.layer_sizes = std::move(layer_sizes);
    model.seed = seed;
    if (model.layer_sizes.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "a model needs at least input and output layers");
    }
    Rng rng(derive_seed(seed, "init"));
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const std::size_t in = model.layer_sizes[l];
        const std::size_t out = model.layer_sizes[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-a, a);
        Eigen::MatrixXd w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = dist(rng);
            }
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out)));
    }
    model.validate();
    return model;
}

Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& features) {
    ForwardPass pass = run_layers(model, features);
    return softmax_rows(std::move(pass.activations.back()));
}

std::vector<double> forward(const MlpModel& model, std::span<const double> feature) {
    const Eigen::MatrixXd row =
        Eigen::Map<const Eigen::RowVectorXd>(feature.data(), static_cast<Eigen::Index>(feature.size()));
    const Eigen::MatrixXd p = forward_batch(model, row);
    return {p.data(), p.data() + p.size()};
}

std::vector<double> forward(const MlpModel& model, const FusedFeature& feature) {
    return forward(model, std::span<const double>(feature.values));
}

Prediction argmax(std::span<const double> probabilities) {
    Prediction best{0, probabilities.empty() ? 0.0 : probabilities[0]};
    for (std::size_t k = 1; k < probabilities.size(); ++k) {
        if (probabilities[k] > best.probability) {
            best = {k, probabilities[k]};
        }
    }
    return best;
}

std::vector<Prediction> predict(const MlpModel& model, const Eigen::MatrixXd& features) {
    if (features.rows() == 0) {
        return {};
    }
    const Eigen::MatrixXd p = forward_batch(model, features);
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(p.rows()));
    std::vector<double> row(static_cast<std::size_t>(p.cols()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index k = 0; k < p.cols(); ++k) {
            row[static_cast<std::size_t>(k)] = p(i, k);
        }
        out.push_back(argmax(row));
    }
    return out;
}

std::vector<Prediction> predict(const MlpModel& model, std::span<const FusedFeature> features) {
    return predict(model, to_matrix(features));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorCode::Config, "learning_rate must be positive");
    }
    if (batch_size == 0) {
        throw Error(ErrorCode::Config, "batch_size must be positive");
    }
    if (!(l2 >= 0.0) || !std::isfinite(l2)) {
        throw Error(ErrorCode::Config, "l2 must be non-negative");
    }
    for (std::size_t h : hidden_sizes) {
        if (h == 0) {
            throw Error(ErrorCode::Config, "hidden layer sizes must be positive");
        }
    }
}

double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                         double l2, Gradients* gradients) {
    check_labels(labels, static_cast<std::size_t>(features.rows()), model.n_classes());
    const ForwardPass pass = run_layers(model, features);
    const Eigen::MatrixXd& logits = pass.activations.back();
    const auto n = static_cast<double>(features.rows());

    double data_loss = 0.0;
    Eigen::MatrixXd delta(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        const double s = e.sum();
        const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
        data_loss += std::log(s) + m - logits(i, y);
        delta.row(i) = e / s;
        delta(i, y) -= 1.0;
    }
    double penalty = 0.0;
    for (const Eigen::MatrixXd& w : model.weights) {
        penalty += w.squaredNorm();
    }
    const double loss = data_loss / n + 0.5 * l2 * penalty;
    if (gradients == nullptr) {
        return loss;
    }

    const std::size_t layers = model.weights.size();
    gradients->weights.resize(layers);
    gradients->biases.resize(layers);
    delta /= n;
    for (std::size_t l = layers; l-- > 0;) {
        const Eigen::MatrixXd& input = pass.activations[l];
        gradients->weights[l] = delta.transpose() * input + l2 * model.weights[l];
        gradients->biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd back = delta * model.weights[l];
            // input holds relu(z); the rectifier passes gradient where z > 0.
            delta = back.array() * (input.array() > 0.0).cast<double>();
        }
    }
    return loss;
}

std::pair<MlpModel, TrainReport> train(MlpModel model, const Eigen::MatrixXd& features,
                                       std::span<const std::size_t> labels, const TrainConfig& config) {
    config.validate();
    model.validate();
    if (features.rows() == 0) {
        throw Error(ErrorCode::InvalidArgument, "training data is empty");
    }
    if (static_cast<std::size_t>(features.cols()) != model.input_size()) {
        throw Error(ErrorCode::DimMismatch, "feature length does not match model input");
    }
    check_labels(labels, static_cast<std::size_t>(features.rows()), model.n_classes());

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    const std::size_t layers = model.weights.size();
    Gradients m;
    Gradients v;
    for (std::size_t l = 0; l < layers; ++l) {
        m.weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        m.biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    v = m;

    const auto n = static_cast<std::size_t>(features.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, "shuffle"));

    TrainReport report;
    Gradients g;
    Eigen::MatrixXd batch;
    std::vector<std::size_t> batch_labels;
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            batch.resize(static_cast<Eigen::Index>(stop - start), features.cols());
            batch_labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.row(static_cast<Eigen::Index>(i - start)) = features.row(static_cast<Eigen::Index>(order[i]));
                batch_labels.push_back(labels[order[i]]);
            }
            const double loss = loss_and_gradient(model, batch, batch_labels, config.l2, &g);
            if (!std::isfinite(loss)) {
                throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite in epoch " + std::to_string(epoch + 1) +
                                                          " at row offset " + std::to_string(start) +
                                                          "; lower learning_rate or check the features");
            }
            epoch_loss += loss * static_cast<double>(stop - start);

            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            const double lr = config.learning_rate;
            for (std::size_t l = 0; l < layers; ++l) {
                m.weights[l] = beta1 * m.weights[l] + (1.0 - beta1) * g.weights[l];
                v.weights[l] = beta2 * v.weights[l] + (1.0 - beta2) * g.weights[l].cwiseAbs2();
                model.weights[l].array() -=
                    lr * (m.weights[l].array() / c1) / ((v.weights[l].array() / c2).sqrt() + eps);
                m.biases[l] = beta1 * m.biases[l] + (1.0 - beta1) * g.biases[l];
                v.biases[l] = beta2 * v.biases[l] + (1.0 - beta2) * g.biases[l].cwiseAbs2();
                model.biases[l].array() -= lr * (m.biases[l].array() / c1) / ((v.biases[l].array() / c2).sqrt() + eps);
            }
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }

    const std::vector<Prediction> preds = predict(model, features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        correct += preds[i].class_index == labels[i] ? 1 : 0;
    }
    report.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return {std::move(model), std::move(report)};
}

std::pair<MlpModel, TrainReport> train(const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                                       std::size_t n_classes, const TrainConfig& config) {
    config.validate();
    std::vector<std::size_t> sizes{static_cast<std::size_t>(features.cols())};
    sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
    sizes.push_back(n_classes);
    return train(init_model(std::move(sizes), config.seed), features, labels, config);
}

double gradient_check(const MlpModel& model, const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                      double l2) {
    constexpr double h = 1e-5;
    Gradients analytic;
    loss_and_gradient(model, features, labels, l2, &analytic);
    MlpModel probe = model;
    double worst = 0.0;
    auto compare = [&](double& param, double a) {
        const double saved = param;
        param = saved + h;
        const double up = loss_and_gradient(probe, features, labels, l2, nullptr);
        param = saved - h;
        const double down = loss_and_gradient(probe, features, labels, l2, nullptr);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        worst = std::max(worst, err);
    };
    for (std::size_t l = 0; l < probe.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < probe.weights[l].size(); ++i) {
            compare(probe.weights[l].data()[i], analytic.weights[l].data()[i]);
        }
        for (Eigen::Index i = 0; i < probe.biases[l].size(); ++i) {
            compare(probe.biases[l].data()[i], analytic.biases[l].data()[i]);
        }
    }
    return worst;
}

// ---- persistence ----------------------------------------------------------

namespace {

constexpr const char* kModelFormat = "seasonal-mlp";

void put_double(std::ostream& out, double x) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    char bytes[8];
    for (char& b : bytes) {
        b = static_cast<char>(bits & 0xFFu);
        bits >>= 8;
    }
    out.write(bytes, 8);
}

double get_double(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw Error(ErrorCode::Format, "model file is truncated");
    }
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) {
        bits = (bits << 8) | bytes[k];
    }
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_model(std::ostream& out, const MlpModel& model) {
    model.validate();
    nlohmann::ordered_json header;
    header["format"] = kModelFormat;
    header["version"] = kModelFormatVersion;
    header["layer_sizes"] = model.layer_sizes;
    header["seed"] = model.seed;
    header["text_dim"] = model.dims.text;
    header["image_dim"] = model.dims.image;
    header["model_id"] = model.model_id;
    header["classes"] = model.classes;
    out << header.dump() << '\n';
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        const Eigen::MatrixXd& w = model.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                put_double(out, w(r, c));
            }
        }
        for (Eigen::Index r = 0; r < model.biases[l].size(); ++r) {
            put_double(out, model.biases[l](r));
        }
    }
}

MlpModel read_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::Format, "model file is empty");
    }
    MlpModel model;
    try {
        const Json header = Json::parse(line);
        if (!header.is_object() || header.value("format", std::string{}) != kModelFormat) {
            throw Error(ErrorCode::Format, "not a model file");
        }
        const int version = header.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) +
                                                        ", this build reads version " +
                                                        std::to_string(kModelFormatVersion));
        }
        model.layer_sizes = header.at("layer_sizes").get<std::vector<std::size_t>>();
        model.seed = header.at("seed").get<std::uint64_t>();
        model.dims = {header.at("text_dim").get<std::size_t>(), header.at("image_dim").get<std::size_t>()};
        model.model_id = header.at("model_id").get<std::string>();
        model.classes = header.at("classes").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::Format, std::string("bad model header: ") + e.what());
    }
    // Zero dims mean the model was not tied to an embedding store.
    const bool dims_unset = model.dims == FeatureDims{};
    if (model.layer_sizes.size() < 2 || (!dims_unset && model.dims.input_size() != model.layer_sizes.front())) {
        throw Error(ErrorCode::Format, "model header layer sizes are inconsistent");
    }
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const auto out = static_cast<Eigen::Index>(model.layer_sizes[l + 1]);
        const auto inp = static_cast<Eigen::Index>(model.layer_sizes[l]);
        Eigen::MatrixXd w(out, inp);
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < inp; ++c) {
                w(r, c) = get_double(in);
            }
        }
        Eigen::VectorXd b(out);
        for (Eigen::Index r = 0; r < out; ++r) {
            b(r) = get_double(in);
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::Format, "model file has trailing bytes");
    }
    try {
        model.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Format, e.what());
    }
    return model;
}

void save_model(const std::filesystem::path& path, const MlpModel& model) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    write_model(out, model);
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read " + path.string());
    }
    return read_model(in);
}

}  // namespace seasonal::fusion
