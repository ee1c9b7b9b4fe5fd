#include "seasonal/embed_client.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "seasonal/error.hpp"

namespace seasonal::embed {

const char* to_string(Modality m) {
    return m == Modality::Text ? "text" : "image";
}

Modality parse_modality(std::string_view text) {
    if (text == "text") return Modality::Text;
    if (text == "image") return Modality::Image;
    throw Error(ErrorCode::Format, "unknown modality '" + std::string(text) + "'");
}

EmbeddingStore::EmbeddingStore(const EmbeddingStore& other) {
    std::shared_lock lock(other.mutex_);
    vectors_ = other.vectors_;
    text_ = other.text_;
    image_ = other.image_;
}

EmbeddingStore& EmbeddingStore::operator=(const EmbeddingStore& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        vectors_ = other.vectors_;
        text_ = other.text_;
        image_ = other.image_;
    }
    return *this;
}

EmbeddingStore::EmbeddingStore(EmbeddingStore&& other) noexcept
    : vectors_(std::move(other.vectors_)), text_(std::move(other.text_)), image_(std::move(other.image_)) {}

EmbeddingStore& EmbeddingStore::operator=(EmbeddingStore&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        vectors_ = std::move(other.vectors_);
        text_ = std::move(other.text_);
        image_ = std::move(other.image_);
    }
    return *this;
}

bool EmbeddingStore::insert(std::string ad_id, EmbeddingVector vector) {
    if (ad_id.empty()) {
        throw Error(ErrorCode::InvalidArgument, "embedding needs a non-empty ad id");
    }
    if (vector.values.empty()) {
        throw Error(ErrorCode::InvalidArgument, "embedding for '" + ad_id + "' is empty");
    }
    for (double v : vector.values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::InvalidArgument, "embedding for '" + ad_id + "' has a non-finite value");
        }
    }
    std::unique_lock lock(mutex_);
    ModalityState& st = state(vector.modality);
    if (st.dim && *st.dim != vector.dim()) {
        throw Error(ErrorCode::DimMismatch, std::string(to_string(vector.modality)) + " vector for '" + ad_id +
                                                "' has " + std::to_string(vector.dim()) + " values, store holds " +
                                                std::to_string(*st.dim));
    }
    if (st.model_id && *st.model_id != vector.model_id) {
        throw Error(ErrorCode::InvalidArgument, "model id '" + vector.model_id + "' differs from store's '" +
                                                    *st.model_id + "'");
    }
    Key key{std::move(ad_id), vector.modality};
    if (vectors_.count(key)) {
        return false;
    }
    st.dim = vector.dim();
    st.model_id = vector.model_id;
    vectors_.emplace(std::move(key), std::move(vector));
    return true;
}

std::optional<EmbeddingVector> EmbeddingStore::get(std::string_view ad_id, Modality modality) const {
    std::shared_lock lock(mutex_);
    const auto it = vectors_.find(Key{std::string(ad_id), modality});
    if (it == vectors_.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool EmbeddingStore::contains(std::string_view ad_id, Modality modality) const {
    std::shared_lock lock(mutex_);
    return vectors_.count(Key{std::string(ad_id), modality}) > 0;
}

std::optional<std::size_t> EmbeddingStore::dim(Modality modality) const {
    std::shared_lock lock(mutex_);
    return state(modality).dim;
}

std::optional<std::string> EmbeddingStore::model_id(Modality modality) const {
    std::shared_lock lock(mutex_);
    return state(modality).model_id;
}

std::size_t EmbeddingStore::size() const {
    std::shared_lock lock(mutex_);
    return vectors_.size();
}

std::size_t EmbeddingStore::size(Modality modality) const {
    std::shared_lock lock(mutex_);
    std::size_t n = 0;
    for (const auto& [key, v] : vectors_) {
        n += key.second == modality;
    }
    return n;
}

std::vector<std::string> EmbeddingStore::ids(Modality modality) const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [key, v] : vectors_) {
        if (key.second == modality) {
            out.push_back(key.first);
        }
    }
    return out;
}

void read_store_into(std::istream& in, EmbeddingStore& store) {
    std::string line;
    std::size_t line_no = 0;
    std::optional<Modality> modality;
    std::size_t dim = 0;
    std::string model_id;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        if (!modality) {
            std::string modality_text;
            long long declared = 0;
            if (!(fields >> modality_text >> declared >> model_id) || declared <= 0) {
                throw Error(ErrorCode::Format, "expected header '<modality> <dim> <model_id>'", line_no);
            }
            try {
                modality = parse_modality(modality_text);
            } catch (const Error& e) {
                throw Error(ErrorCode::Format, e.what(), line_no);
            }
            dim = static_cast<std::size_t>(declared);
            continue;
        }
        std::string ad_id;
        fields >> ad_id;
        std::vector<double> values;
        std::string token;
        while (fields >> token) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(token, &used));
                if (used != token.size()) {
                    throw std::invalid_argument(token);
                }
            } catch (const std::exception&) {
                throw Error(ErrorCode::Format, "'" + token + "' is not a number", line_no);
            }
        }
        if (values.size() != dim) {
            throw Error(ErrorCode::DimMismatch,
                        "vector for '" + ad_id + "' has " + std::to_string(values.size()) + " values, header says " +
                            std::to_string(dim),
                        line_no);
        }
        try {
            if (!store.insert(ad_id, {std::move(values), *modality, model_id})) {
                throw Error(ErrorCode::DuplicateId, "duplicate vector for '" + ad_id + "'");
            }
        } catch (const Error& e) {
            throw Error(e.code(), e.what(), line_no);
        }
    }
}

EmbeddingStore load_store(const std::filesystem::path& path) {
    EmbeddingStore store;
    std::ifstream in = open_input(path);
    read_store_into(in, store);
    return store;
}

EmbeddingStore load_stores(std::span<const std::filesystem::path> paths) {
    EmbeddingStore store;
    for (const auto& p : paths) {
        std::ifstream in = open_input(p);
        read_store_into(in, store);
    }
    return store;
}

void write_store(std::ostream& out, const EmbeddingStore& store, Modality modality) {
    const auto dim = store.dim(modality);
    if (!dim) {
        return;
    }
    out << to_string(modality) << ' ' << *dim << ' ' << store.model_id(modality).value_or("unknown") << '\n';
    for (const std::string& id : store.ids(modality)) {
        out << id;
        const auto vector = store.get(id, modality);
        for (double v : vector->values) {
            out << ' ' << format_double(v);
        }
        out << '\n';
    }
}

void save_store(const std::filesystem::path& path, const EmbeddingStore& store, Modality modality) {
    std::ofstream out = open_output(path);
    write_store(out, store, modality);
}

Json embed_request_to_wire(Modality modality, std::span<const EmbedItem> items) {
    Json list = Json::array();
    for (const EmbedItem& item : items) {
        Json j;
        j["id"] = item.id;
        if (item.text) {
            j["text"] = *item.text;
        }
        if (item.image_ref) {
            j["image_ref"] = *item.image_ref;
        }
        list.push_back(std::move(j));
    }
    return Json{{"items", std::move(list)}, {"modality", to_string(modality)}};
}

std::vector<std::pair<std::string, std::vector<double>>> embed_response_from_wire(const Json& body) {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    try {
        for (const Json& v : body.at("vectors")) {
            out.emplace_back(v.at("id").get<std::string>(), v.at("values").get<std::vector<double>>());
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::Endpoint, std::string("malformed /v1/embed response: ") + e.what());
    }
    return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, std::string model_id,
                                             std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), model_id_(std::move(model_id)), timeout_(timeout) {}

std::vector<std::pair<std::string, std::vector<double>>> HttpEmbeddingProvider::embed(
    Modality modality, std::span<const EmbedItem> items) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const auto res = client.Post("/v1/embed", embed_request_to_wire(modality, items).dump(), "application/json");
    if (!res) {
        throw Error(ErrorCode::Endpoint, base_url_ + "/v1/embed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::Endpoint, base_url_ + "/v1/embed returned HTTP " + std::to_string(res->status));
    }
    Json body;
    try {
        body = Json::parse(res->body);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Endpoint, std::string("malformed /v1/embed response: ") + e.what());
    }
    return embed_response_from_wire(body);
}

std::string text_content(const corpus::AdRecord& ad) {
    return ad.title + "\n" + ad.body;
}

FetchReport fetch(std::span<const corpus::AdRecord> ads, Modality modality, EmbeddingProvider& provider,
                  EmbeddingStore& store, const FetchOptions& options) {
    FetchReport report;
    std::vector<EmbedItem> pending;
    std::set<std::string> queued;
    for (const corpus::AdRecord& ad : ads) {
        if (store.contains(ad.id, modality) || queued.count(ad.id)) {
            continue;
        }
        if (modality == Modality::Image && !ad.image_ref) {
            report.missing_content.push_back(ad.id);
            continue;
        }
        EmbedItem item{ad.id, std::nullopt, std::nullopt};
        if (modality == Modality::Text) {
            item.text = text_content(ad);
        } else {
            item.image_ref = ad.image_ref;
        }
        queued.insert(ad.id);
        pending.push_back(std::move(item));
    }
    report.requested = pending.size();

    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    std::vector<std::span<const EmbedItem>> batches;
    for (std::size_t i = 0; i < pending.size(); i += batch) {
        batches.push_back(std::span<const EmbedItem>(pending).subspan(i, std::min(batch, pending.size() - i)));
    }

    const std::string model_id = provider.model_id();
    auto run_batch = [&](std::span<const EmbedItem> items) {
        auto vectors = provider.embed(modality, items);
        std::set<std::string> expected;
        for (const EmbedItem& item : items) {
            expected.insert(item.id);
        }
        std::set<std::string> returned;
        for (auto& [id, values] : vectors) {
            if (!expected.count(id) || !returned.insert(id).second) {
                throw Error(ErrorCode::Endpoint, "provider returned unexpected vector '" + id + "'");
            }
        }
        if (returned.size() != expected.size()) {
            throw Error(ErrorCode::Endpoint, "provider omitted " + std::to_string(expected.size() - returned.size()) +
                                                 " requested vectors");
        }
        return vectors;
    };

    const std::size_t width = std::max<std::size_t>(1, options.max_in_flight);
    for (std::size_t start = 0; start < batches.size(); start += width) {
        const std::size_t stop = std::min(batches.size(), start + width);
        std::vector<std::future<std::vector<std::pair<std::string, std::vector<double>>>>> futures;
        for (std::size_t b = start; b < stop; ++b) {
            futures.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async,
                                         run_batch, batches[b]));
        }
        report.provider_calls += futures.size();
        // Insert in request order so the final store does not depend on timing.
        std::optional<Error> failure;
        for (auto& f : futures) {
            try {
                for (auto& [id, values] : f.get()) {
                    store.insert(id, {std::move(values), modality, model_id});
                }
            } catch (const Error& e) {
                if (!failure) {
                    failure = e;
                }
            }
        }
        if (failure) {
            throw *failure;
        }
    }
    return report;
}

}  // namespace seasonal::embed
