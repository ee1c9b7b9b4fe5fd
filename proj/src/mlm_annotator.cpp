#include "seasonal/mlm_annotator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <thread>

#include <httplib.h>

#include "seasonal/error.hpp"
#include "seasonal/keyword_miner.hpp"

namespace seasonal::mlm {

namespace {

constexpr std::string_view kSlots[] = {"{title}", "{body}", "{event_name}", "{event_definition}"};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::optional<std::string> non_empty(std::string s) {
    if (s.empty()) {
        return std::nullopt;
    }
    return s;
}

}  // namespace

void PromptTemplate::validate() const {
    for (const std::string_view slot : kSlots) {
        if (user_template.find(slot) == std::string::npos) {
            throw Error(ErrorCode::Template, "user_template lacks the " + std::string(slot) + " placeholder");
        }
    }
    if (trim(answer_instruction).empty()) {
        throw Error(ErrorCode::Template, "answer_instruction must not be empty");
    }
}

PromptTemplate PromptTemplate::defaults() {
    PromptTemplate t;
    t.system_text =
        "You review advertisements. A seasonal ad is one designed and scheduled around a particular "
        "event, holiday or time of year. You will be told about one event and shown one ad. Work through "
        "the title, body and image step by step, then decide whether the ad is made for that event.";
    t.user_template =
        "Event: {event_name}\nWhat the event is: {event_definition}\n\nAd title: {title}\nAd body: {body}";
    t.answer_instruction = "End your reply with a single line reading \"ANSWER: yes\" or \"ANSWER: no\".";
    return t;
}

PromptTemplate load_prompt_template(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Format, std::string("prompt template: ") + e.what());
    }
    PromptTemplate t;
    t.system_text = doc.value("system_text", std::string{});
    t.user_template = require_string(doc, "user_template");
    t.answer_instruction = require_string(doc, "answer_instruction");
    t.validate();
    return t;
}

Json to_wire(const InferenceRequest& request) {
    Json body;
    body["prompt"] = request.prompt_text;
    if (request.image_ref) {
        body["image_ref"] = *request.image_ref;
    }
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.temperature;
    return body;
}

InferenceRequest request_from_wire(const Json& body) {
    InferenceRequest r;
    r.prompt_text = require_string(body, "prompt");
    if (const auto it = body.find("image_ref"); it != body.end() && !it->is_null()) {
        r.image_ref = it->get<std::string>();
    }
    r.max_tokens = static_cast<int>(require_integer(body, "max_tokens"));
    r.temperature = require_number(body, "temperature");
    if (r.max_tokens <= 0 || r.temperature < 0.0) {
        throw Error(ErrorCode::Format, "max_tokens must be positive and temperature non-negative");
    }
    return r;
}

InferenceRequest build_prompt(const corpus::AdRecord& ad, const corpus::SeasonalEvent& event,
                              const PromptTemplate& prompt_template) {
    prompt_template.validate();
    const std::string_view values[] = {ad.title, ad.body, event.display_name, event.definition_text};
    const std::string_view tpl = prompt_template.user_template;
    std::string user;
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        bool replaced = false;
        for (std::size_t k = 0; k < std::size(kSlots); ++k) {
            if (tpl.substr(pos).starts_with(kSlots[k])) {
                user += values[k];
                pos += kSlots[k].size();
                replaced = true;
                break;
            }
        }
        if (!replaced) {
            user += tpl[pos++];
        }
    }
    InferenceRequest request;
    if (!prompt_template.system_text.empty()) {
        request.prompt_text = prompt_template.system_text + "\n\n";
    }
    request.prompt_text += user + "\n\n" + prompt_template.answer_instruction;
    request.image_ref = ad.image_ref;
    return request;
}

const char* to_string(Decision d) {
    return d == Decision::Yes ? "yes" : "no";
}

ParsedLabel parse_response(std::string_view raw) {
    ParsedLabel parsed;
    parsed.raw_response = std::string(raw);

    // Rule 1: the last "ANSWER:" line.
    std::size_t line_end = raw.size();
    while (true) {
        const std::size_t nl = line_end == 0 ? std::string_view::npos : raw.rfind('\n', line_end - 1);
        const std::size_t line_begin = nl == std::string_view::npos ? 0 : nl + 1;
        const std::string line = trim(raw.substr(line_begin, line_end - line_begin));
        std::string lowered = line.substr(0, std::min<std::size_t>(line.size(), 7));
        std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (lowered == "answer:") {
            const auto tokens = keywords::tokenize(line.substr(7));
            if (!tokens.empty() && (tokens.front() == "yes" || tokens.front() == "no")) {
                parsed.decision = tokens.front() == "yes" ? Decision::Yes : Decision::No;
                parsed.rationale = non_empty(trim(raw.substr(0, line_begin)));
                return parsed;
            }
            break;
        }
        if (line_begin == 0) {
            break;
        }
        line_end = line_begin - 1;
    }

    // Rule 2: first standalone yes/no.
    for (const keywords::Token& tok : keywords::tokenize_with_spans(raw)) {
        if (tok.text == "yes" || tok.text == "no") {
            parsed.decision = tok.text == "yes" ? Decision::Yes : Decision::No;
            parsed.rationale = non_empty(trim(raw.substr(0, tok.begin)));
            return parsed;
        }
    }
    throw Error(ErrorCode::UnparseableResponse, "no ANSWER line and no standalone yes/no");
}

HttpInferenceClient::HttpInferenceClient(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

std::string HttpInferenceClient::generate(const InferenceRequest& request) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const auto res = client.Post("/v1/generate", to_wire(request).dump(), "application/json");
    if (!res) {
        throw Error(ErrorCode::Endpoint, base_url_ + "/v1/generate: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::Endpoint, base_url_ + "/v1/generate returned HTTP " + std::to_string(res->status));
    }
    try {
        const Json body = Json::parse(res->body);
        return body.at("text").get<std::string>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::Endpoint, std::string("malformed /v1/generate response: ") + e.what());
    }
}

namespace {

struct AdOutcome {
    enum class Kind { Labeled, Skipped, Aborted } kind = Kind::Labeled;
    std::string ad_id;
    corpus::LabeledExample label;
    std::string reason;
    std::vector<RetryEvent> retries;
};

AdOutcome annotate_one(const corpus::AdRecord& ad, const corpus::SeasonalEvent& event, InferenceClient& client,
                       const RetryPolicy& policy, const PromptTemplate& prompt_template, Timestamp labeled_at) {
    AdOutcome outcome;
    outcome.ad_id = ad.id;
    const InferenceRequest request = build_prompt(ad, event, prompt_template);
    const int attempts = 1 + std::max(0, policy.max_retries);
    auto backoff = policy.initial_backoff;
    bool last_was_transport = false;
    std::string last_reason;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        try {
            const ParsedLabel parsed = parse_response(client.generate(request));
            const std::string event_id =
                parsed.decision == Decision::Yes ? event.event_id : std::string(corpus::kNoneEvent);
            outcome.label = {ad.id, event_id, corpus::LabelSource::Mlm, 1.0, labeled_at};
            return outcome;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Endpoint && e.code() != ErrorCode::UnparseableResponse) {
                throw;
            }
            last_was_transport = e.code() == ErrorCode::Endpoint;
            last_reason = e.what();
        }
        if (attempt < attempts) {
            outcome.retries.push_back({ad.id, attempt, last_reason});
            if (backoff.count() > 0) {
                std::this_thread::sleep_for(backoff);
                backoff = std::chrono::milliseconds(
                    static_cast<long long>(std::llround(static_cast<double>(backoff.count()) * policy.backoff_multiplier)));
            }
        }
    }
    outcome.kind = last_was_transport ? AdOutcome::Kind::Aborted : AdOutcome::Kind::Skipped;
    outcome.reason = last_reason;
    return outcome;
}

}  // namespace

BatchResult annotate_batch(std::span<const corpus::AdRecord> ads, const corpus::SeasonalEvent& event,
                           InferenceClient& client, const RetryPolicy& policy,
                           const PromptTemplate& prompt_template, Timestamp labeled_at) {
    prompt_template.validate();
    BatchResult result;
    const std::size_t width = std::max<std::size_t>(1, policy.max_in_flight);
    for (std::size_t start = 0; start < ads.size(); start += width) {
        const std::size_t stop = std::min(ads.size(), start + width);
        std::vector<AdOutcome> outcomes;
        if (width == 1) {
            outcomes.push_back(annotate_one(ads[start], event, client, policy, prompt_template, labeled_at));
        } else {
            std::vector<std::future<AdOutcome>> futures;
            for (std::size_t i = start; i < stop; ++i) {
                futures.push_back(std::async(std::launch::async, [&, i] {
                    return annotate_one(ads[i], event, client, policy, prompt_template, labeled_at);
                }));
            }
            for (auto& f : futures) {
                outcomes.push_back(f.get());
            }
        }
        // Assemble in input order; the first abort ends the batch.
        for (AdOutcome& o : outcomes) {
            result.retries.insert(result.retries.end(), o.retries.begin(), o.retries.end());
            if (o.kind == AdOutcome::Kind::Aborted) {
                result.aborted = o.reason;
                return result;
            }
            if (o.kind == AdOutcome::Kind::Skipped) {
                result.skipped.push_back({o.ad_id, o.reason});
            } else {
                result.labels.push_back(std::move(o.label));
            }
        }
    }
    return result;
}

}  // namespace seasonal::mlm
