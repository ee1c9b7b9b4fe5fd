#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seasonal/corpus.hpp"
#include "seasonal/evaluator.hpp"

namespace seasonal::labeling {

struct AnnotationTask {
    std::string task_id;
    std::string ad_id;
    std::string question_text;
    std::vector<std::string> candidate_labels;

    bool operator==(const AnnotationTask&) const = default;
};

struct AnnotatorResponse {
    std::string task_id;
    std::string annotator_id;
    std::string chosen_label;
    Timestamp responded_at{};

    bool operator==(const AnnotatorResponse&) const = default;
};

enum class AggregateStatus { Accepted, Tied };

const char* to_string(AggregateStatus status);

struct AggregatedLabel {
    std::string ad_id;
    std::optional<std::string> event_id;  // empty when tied
    double vote_fraction = 0.0;           // winning (or tied top) votes / n_responses
    std::size_t n_responses = 0;
    AggregateStatus status = AggregateStatus::Accepted;

    bool operator==(const AggregatedLabel&) const = default;
};

/// Placeholders every task template must contain.
inline constexpr std::string_view kTitleSlot = "{title}";
inline constexpr std::string_view kBodySlot = "{body}";
inline constexpr std::string_view kEventsSlot = "{events}";

std::string default_task_template();

/// Task id for an ad, stable across exports.
std::string task_id_for(std::string_view ad_id);

/// One task per ad, candidate labels = every calendar event including `none`.
/// Throws Error(Template) when the template lacks {title}, {body} or {events}.
std::vector<AnnotationTask> export_tasks(std::span<const corpus::AdRecord> ads,
                                         const corpus::EventCalendar& calendar, std::string_view task_template);

/**
 * Majority vote per ad. A strict plurality wins; an exact tie at the top is
 * reported with status Tied and no event. Repeated responses by one annotator
 * to one task count once (the latest responded_at, later lines winning ties).
 * Output sorted by ad_id. Throws Error(UnknownTask) for responses that name a
 * task not in `tasks`.
 */
std::vector<AggregatedLabel> aggregate_majority(std::span<const AnnotationTask> tasks,
                                                std::span<const AnnotatorResponse> responses);

/// Accepted labels as LabeledExamples (source human, confidence = vote fraction).
std::vector<corpus::LabeledExample> to_labeled_examples(std::span<const AggregatedLabel> labels,
                                                        Timestamp labeled_at);

/**
 * Binary precision/recall/F1 with `target_event` as the positive class over
 * the ads that carry a gold label. Tied or missing aggregated labels count as
 * negative predictions. Throws Error(NoGoldPositives) when no gold label names
 * the target.
 */
eval::BinaryScore score_against_gold(std::span<const AggregatedLabel> labels,
                                     std::span<const corpus::LabeledExample> gold, std::string_view target_event);

// Task export lines carry annotator_id, chosen_label and responded_at as
// nulls; vendors fill those three fields and send the file back.
void write_tasks(std::ostream& out, std::span<const AnnotationTask> tasks);
std::vector<AnnotationTask> read_tasks(std::istream& in);
std::vector<AnnotationTask> load_tasks(const std::filesystem::path& path);

/// Reads filled-in response lines; lines whose chosen_label is still null are
/// skipped. Every response must reference a task in `tasks` and choose one of
/// its candidate labels.
std::vector<AnnotatorResponse> read_responses(std::istream& in, std::span<const AnnotationTask> tasks);
void write_responses(std::ostream& out, std::span<const AnnotatorResponse> responses,
                     std::span<const AnnotationTask> tasks);

void write_aggregated(std::ostream& out, std::span<const AggregatedLabel> labels);

}  // namespace seasonal::labeling
