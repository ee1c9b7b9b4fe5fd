#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seasonal/corpus.hpp"
#include "seasonal/jsonl.hpp"

namespace seasonal::embed {

enum class Modality { Text, Image };

const char* to_string(Modality m);
Modality parse_modality(std::string_view text);

struct EmbeddingVector {
    std::vector<double> values;
    Modality modality = Modality::Text;
    std::string model_id;

    std::size_t dim() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

/**
 * Vectors keyed by (ad_id, modality). Every vector of a modality has the same
 * dimension and model id, fixed by the first vector inserted. Stored vectors
 * are never replaced. Reads take a shared lock and inserts an exclusive one,
 * so a store can be read and filled from several threads.
 */
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(const EmbeddingStore& other);
    EmbeddingStore& operator=(const EmbeddingStore& other);
    EmbeddingStore(EmbeddingStore&& other) noexcept;
    EmbeddingStore& operator=(EmbeddingStore&& other) noexcept;

    /// Returns false (and keeps the stored vector) when the key already exists.
    /// Throws Error(DimMismatch) or Error(InvalidArgument) on invariant violations.
    bool insert(std::string ad_id, EmbeddingVector vector);

    std::optional<EmbeddingVector> get(std::string_view ad_id, Modality modality) const;
    bool contains(std::string_view ad_id, Modality modality) const;

    std::optional<std::size_t> dim(Modality modality) const;
    std::optional<std::string> model_id(Modality modality) const;
    std::size_t size() const;
    std::size_t size(Modality modality) const;

    /// Ad ids holding a vector of the modality, sorted.
    std::vector<std::string> ids(Modality modality) const;

private:
    struct ModalityState {
        std::optional<std::size_t> dim;
        std::optional<std::string> model_id;
    };

    using Key = std::pair<std::string, Modality>;

    mutable std::shared_mutex mutex_;
    std::map<Key, EmbeddingVector, std::less<>> vectors_;
    ModalityState text_;
    ModalityState image_;

    ModalityState& state(Modality m) { return m == Modality::Text ? text_ : image_; }
    const ModalityState& state(Modality m) const { return m == Modality::Text ? text_ : image_; }
};

// Embedding files: a header line "<modality> <dim> <model_id>" followed by
// "<ad_id> v1 v2 ... v_dim" lines. An empty file is an empty store.
void read_store_into(std::istream& in, EmbeddingStore& store);
EmbeddingStore load_store(const std::filesystem::path& path);
EmbeddingStore load_stores(std::span<const std::filesystem::path> paths);
void write_store(std::ostream& out, const EmbeddingStore& store, Modality modality);
void save_store(const std::filesystem::path& path, const EmbeddingStore& store, Modality modality);

/// One item of an /v1/embed request.
struct EmbedItem {
    std::string id;
    std::optional<std::string> text;
    std::optional<std::string> image_ref;
};

/// Anything that maps items to vectors; throws Error(Endpoint) on failure.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<std::pair<std::string, std::vector<double>>> embed(Modality modality,
                                                                          std::span<const EmbedItem> items) = 0;
    virtual std::string model_id() const = 0;
};

/// Wire body of POST /v1/embed: {items: [{id, text?} | {id, image_ref}], modality}.
Json embed_request_to_wire(Modality modality, std::span<const EmbedItem> items);
/// Parses {vectors: [{id, values}]}.
std::vector<std::pair<std::string, std::vector<double>>> embed_response_from_wire(const Json& body);

class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string base_url, std::string model_id,
                          std::chrono::milliseconds timeout = std::chrono::seconds{60});

    std::vector<std::pair<std::string, std::vector<double>>> embed(Modality modality,
                                                                  std::span<const EmbedItem> items) override;
    std::string model_id() const override { return model_id_; }

private:
    std::string base_url_;
    std::string model_id_;
    std::chrono::milliseconds timeout_;
};

/// Text content sent for an ad: title and body joined by a newline.
std::string text_content(const corpus::AdRecord& ad);

struct FetchOptions {
    std::size_t batch_size = 64;
    std::size_t max_in_flight = 1;
};

struct FetchReport {
    std::size_t requested = 0;       // ads that needed a vector
    std::size_t provider_calls = 0;  // HTTP requests issued
    std::vector<std::string> missing_content;  // MissingContent, reported per ad
};

/**
 * Fills `store` with vectors for `ads`. Ads already cached are not requested
 * again. An ad without an image_ref is reported as MissingContent for the
 * image modality and the rest of the batch continues. Provider failures raise
 * Error(Endpoint); vectors from completed requests stay in the store.
 */
FetchReport fetch(std::span<const corpus::AdRecord> ads, Modality modality, EmbeddingProvider& provider,
                  EmbeddingStore& store, const FetchOptions& options = {});

}  // namespace seasonal::embed
