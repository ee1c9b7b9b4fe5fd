#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seasonal/corpus.hpp"
#include "seasonal/jsonl.hpp"

namespace seasonal::mlm {

struct PromptTemplate {
    std::string system_text;
    std::string user_template;  // needs {title}, {body}, {event_name}, {event_definition}
    std::string answer_instruction;

    /// Throws Error(Template) if a placeholder is missing or the answer instruction is empty.
    void validate() const;

    static PromptTemplate defaults();
};

/// JSON document with system_text, user_template and answer_instruction.
PromptTemplate load_prompt_template(const std::filesystem::path& path);

struct InferenceRequest {
    std::string prompt_text;
    std::optional<std::string> image_ref;
    int max_tokens = 512;
    double temperature = 0.0;

    bool operator==(const InferenceRequest&) const = default;
};

/// Body of POST /v1/generate: {prompt, image_ref?, max_tokens, temperature}.
Json to_wire(const InferenceRequest& request);
InferenceRequest request_from_wire(const Json& body);

InferenceRequest build_prompt(const corpus::AdRecord& ad, const corpus::SeasonalEvent& event,
                              const PromptTemplate& prompt_template);

enum class Decision { Yes, No };

const char* to_string(Decision d);

struct ParsedLabel {
    Decision decision = Decision::No;
    std::optional<std::string> rationale;
    std::string raw_response;
};

/**
 * Two rules, in order:
 *  1. the last line starting with "ANSWER:" (any case) decides, if its value
 *     starts with yes or no; the text before that line is the rationale;
 *  2. otherwise the first standalone "yes"/"no" token decides and the text
 *     before it is the rationale.
 * Throws Error(UnparseableResponse) when neither rule fires.
 */
ParsedLabel parse_response(std::string_view raw);

/// Any endpoint that turns a request into generated text. Implementations
/// throw Error(Endpoint) on transport failure. They must be thread safe when
/// used with RetryPolicy::max_in_flight > 1.
class InferenceClient {
public:
    virtual ~InferenceClient() = default;
    virtual std::string generate(const InferenceRequest& request) = 0;
};

/// Client for the /v1/generate wire protocol.
class HttpInferenceClient final : public InferenceClient {
public:
    explicit HttpInferenceClient(std::string base_url,
                                 std::chrono::milliseconds timeout = std::chrono::seconds{60});

    std::string generate(const InferenceRequest& request) override;

private:
    std::string base_url_;
    std::chrono::milliseconds timeout_;
};

struct RetryPolicy {
    int max_retries = 2;
    std::chrono::milliseconds timeout{60'000};
    std::chrono::milliseconds initial_backoff{500};
    double backoff_multiplier = 2.0;
    std::size_t max_in_flight = 1;
};

struct RetryEvent {
    std::string ad_id;
    int attempt = 0;  // 1-based attempt that failed
    std::string reason;
};

struct SkippedAd {
    std::string ad_id;
    std::string reason;
};

struct BatchResult {
    std::vector<corpus::LabeledExample> labels;
    std::vector<SkippedAd> skipped;
    std::vector<RetryEvent> retries;
    std::optional<std::string> aborted;  // endpoint failure that stopped the batch
};

/**
 * Labels every ad with one binary query for `event`: "yes" maps to the event,
 * "no" to `none`. Transport failures and unparseable responses are retried up
 * to policy.max_retries times with exponential backoff. An ad whose responses
 * stay unparseable is skipped with a reason; persistent transport failure
 * aborts the batch and `labels`/`skipped` hold the ads before the failing one.
 * Labels carry source mlm, confidence 1.0 and the given timestamp.
 */
BatchResult annotate_batch(std::span<const corpus::AdRecord> ads, const corpus::SeasonalEvent& event,
                           InferenceClient& client, const RetryPolicy& policy,
                           const PromptTemplate& prompt_template, Timestamp labeled_at);

}  // namespace seasonal::mlm
