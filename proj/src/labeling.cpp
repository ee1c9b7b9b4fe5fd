#include "seasonal/labeling.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <tuple>
#include <unordered_map>

#include "seasonal/error.hpp"
#include "seasonal/jsonl.hpp"

namespace seasonal::labeling {

using OrderedJson = nlohmann::ordered_json;

const char* to_string(AggregateStatus status) {
    return status == AggregateStatus::Accepted ? "accepted" : "tied";
}

std::string default_task_template() {
    return "Read the ad below and pick the seasonal event it is made for, or 'none' if it is not tied to "
           "any of them.\n\nTitle: {title}\nBody: {body}\n\nEvents:\n{events}";
}

std::string task_id_for(std::string_view ad_id) {
    return "task-" + std::string(ad_id);
}

namespace {

std::string render(std::string_view task_template, const corpus::AdRecord& ad, const std::string& events) {
    // Single left-to-right pass so slot text inside ad content is never expanded.
    std::string out;
    std::size_t pos = 0;
    while (pos < task_template.size()) {
        const std::string_view rest = task_template.substr(pos);
        if (rest.starts_with(kTitleSlot)) {
            out += ad.title;
            pos += kTitleSlot.size();
        } else if (rest.starts_with(kBodySlot)) {
            out += ad.body;
            pos += kBodySlot.size();
        } else if (rest.starts_with(kEventsSlot)) {
            out += events;
            pos += kEventsSlot.size();
        } else {
            out += task_template[pos++];
        }
    }
    return out;
}

}  // namespace

std::vector<AnnotationTask> export_tasks(std::span<const corpus::AdRecord> ads,
                                         const corpus::EventCalendar& calendar, std::string_view task_template) {
    for (const std::string_view slot : {kTitleSlot, kBodySlot, kEventsSlot}) {
        if (task_template.find(slot) == std::string_view::npos) {
            throw Error(ErrorCode::Template, "task template lacks the " + std::string(slot) + " placeholder");
        }
    }
    std::string events;
    for (const corpus::SeasonalEvent& e : calendar.events()) {
        events += "- " + e.event_id + " (" + e.display_name + ")";
        if (!e.definition_text.empty()) {
            events += ": " + e.definition_text;
        }
        events += "\n";
    }
    const std::vector<std::string> candidates = calendar.event_ids();
    std::vector<AnnotationTask> tasks;
    tasks.reserve(ads.size());
    for (const corpus::AdRecord& ad : ads) {
        tasks.push_back({task_id_for(ad.id), ad.id, render(task_template, ad, events), candidates});
    }
    return tasks;
}

std::vector<AggregatedLabel> aggregate_majority(std::span<const AnnotationTask> tasks,
                                                std::span<const AnnotatorResponse> responses) {
    std::unordered_map<std::string, const AnnotationTask*> by_task;
    for (const AnnotationTask& t : tasks) {
        by_task.emplace(t.task_id, &t);
    }
    // (ad, task, annotator) -> winning response index
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> latest;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const AnnotatorResponse& r = responses[i];
        const auto it = by_task.find(r.task_id);
        if (it == by_task.end()) {
            throw Error(ErrorCode::UnknownTask, "response references unknown task '" + r.task_id + "'");
        }
        auto key = std::make_tuple(it->second->ad_id, r.task_id, r.annotator_id);
        const auto [slot, inserted] = latest.emplace(std::move(key), i);
        if (!inserted && responses[slot->second].responded_at <= r.responded_at) {
            slot->second = i;
        }
    }
    std::map<std::string, std::map<std::string, std::size_t>> votes;
    for (const auto& [key, index] : latest) {
        ++votes[std::get<0>(key)][responses[index].chosen_label];
    }
    std::vector<AggregatedLabel> out;
    out.reserve(votes.size());
    for (const auto& [ad_id, tally] : votes) {
        std::size_t total = 0;
        std::size_t best = 0;
        std::size_t best_count = 0;  // number of labels reaching `best`
        std::string winner;
        for (const auto& [label, count] : tally) {
            total += count;
            if (count > best) {
                best = count;
                best_count = 1;
                winner = label;
            } else if (count == best) {
                ++best_count;
            }
        }
        AggregatedLabel agg;
        agg.ad_id = ad_id;
        agg.n_responses = total;
        agg.vote_fraction = static_cast<double>(best) / static_cast<double>(total);
        if (best_count == 1) {
            agg.event_id = winner;
            agg.status = AggregateStatus::Accepted;
        } else {
            agg.status = AggregateStatus::Tied;
        }
        out.push_back(std::move(agg));
    }
    return out;
}

std::vector<corpus::LabeledExample> to_labeled_examples(std::span<const AggregatedLabel> labels,
                                                        Timestamp labeled_at) {
    std::vector<corpus::LabeledExample> out;
    for (const AggregatedLabel& l : labels) {
        if (l.status == AggregateStatus::Accepted && l.event_id) {
            out.push_back({l.ad_id, *l.event_id, corpus::LabelSource::Human, l.vote_fraction, labeled_at});
        }
    }
    return out;
}

eval::BinaryScore score_against_gold(std::span<const AggregatedLabel> labels,
                                     std::span<const corpus::LabeledExample> gold, std::string_view target_event) {
    std::map<std::string, bool> gold_positive;
    for (const corpus::LabeledExample& g : gold) {
        bool& pos = gold_positive[g.ad_id];
        pos = pos || g.event_id == target_event;
    }
    const bool any_positive =
        std::any_of(gold_positive.begin(), gold_positive.end(), [](const auto& kv) { return kv.second; });
    if (!any_positive) {
        throw Error(ErrorCode::NoGoldPositives, "gold has no positives for '" + std::string(target_event) + "'");
    }
    std::map<std::string, bool> predicted_positive;
    for (const AggregatedLabel& l : labels) {
        predicted_positive[l.ad_id] =
            l.status == AggregateStatus::Accepted && l.event_id && *l.event_id == target_event;
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& [ad_id, is_gold] : gold_positive) {
        const auto it = predicted_positive.find(ad_id);
        const bool predicted = it != predicted_positive.end() && it->second;
        if (predicted && is_gold) {
            ++tp;
        } else if (predicted) {
            ++fp;
        } else if (is_gold) {
            ++fn;
        }
    }
    return eval::score_counts(tp, fp, fn);
}

void write_tasks(std::ostream& out, std::span<const AnnotationTask> tasks) {
    for (const AnnotationTask& t : tasks) {
        OrderedJson j;
        j["task_id"] = t.task_id;
        j["ad_id"] = t.ad_id;
        j["question_text"] = t.question_text;
        j["candidate_labels"] = t.candidate_labels;
        j["annotator_id"] = nullptr;
        j["chosen_label"] = nullptr;
        j["responded_at"] = nullptr;
        out << j.dump() << '\n';
    }
}

namespace {

AnnotationTask task_from_json(const Json& r) {
    AnnotationTask t;
    t.task_id = require_string(r, "task_id");
    t.ad_id = require_string(r, "ad_id");
    t.question_text = require_string(r, "question_text");
    t.candidate_labels = require_field(r, "candidate_labels").get<std::vector<std::string>>();
    if (std::find(t.candidate_labels.begin(), t.candidate_labels.end(), corpus::kNoneEvent) ==
        t.candidate_labels.end()) {
        throw Error(ErrorCode::Format, "task '" + t.task_id + "' lacks the 'none' candidate");
    }
    return t;
}

}  // namespace

std::vector<AnnotationTask> read_tasks(std::istream& in) {
    std::vector<AnnotationTask> tasks;
    std::map<std::string, std::string> ad_of_task;
    for_each_jsonl(in, [&](const Json& r, std::size_t line) {
        AnnotationTask t = task_from_json(r);
        // Response files repeat a task once per annotator; keep the first copy.
        const auto [it, inserted] = ad_of_task.emplace(t.task_id, t.ad_id);
        if (inserted) {
            tasks.push_back(std::move(t));
        } else if (it->second != t.ad_id) {
            throw Error(ErrorCode::Format, "task '" + t.task_id + "' appears with different ads", line);
        }
    });
    return tasks;
}

std::vector<AnnotationTask> load_tasks(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    return read_tasks(in);
}

std::vector<AnnotatorResponse> read_responses(std::istream& in, std::span<const AnnotationTask> tasks) {
    std::unordered_map<std::string, const AnnotationTask*> by_task;
    for (const AnnotationTask& t : tasks) {
        by_task.emplace(t.task_id, &t);
    }
    std::vector<AnnotatorResponse> responses;
    for_each_jsonl(in, [&](const Json& r, std::size_t) {
        const auto chosen = r.find("chosen_label");
        if (chosen == r.end() || chosen->is_null()) {
            return;
        }
        AnnotatorResponse resp;
        resp.task_id = require_string(r, "task_id");
        resp.annotator_id = require_string(r, "annotator_id");
        resp.chosen_label = require_string(r, "chosen_label");
        resp.responded_at = parse_utc(require_string(r, "responded_at"));
        const auto it = by_task.find(resp.task_id);
        if (it == by_task.end()) {
            throw Error(ErrorCode::UnknownTask, "response references unknown task '" + resp.task_id + "'");
        }
        const auto& candidates = it->second->candidate_labels;
        if (std::find(candidates.begin(), candidates.end(), resp.chosen_label) == candidates.end()) {
            throw Error(ErrorCode::Format,
                        "chosen_label '" + resp.chosen_label + "' is not a candidate of task '" + resp.task_id + "'");
        }
        responses.push_back(std::move(resp));
    });
    return responses;
}

void write_responses(std::ostream& out, std::span<const AnnotatorResponse> responses,
                     std::span<const AnnotationTask> tasks) {
    std::unordered_map<std::string, const AnnotationTask*> by_task;
    for (const AnnotationTask& t : tasks) {
        by_task.emplace(t.task_id, &t);
    }
    for (const AnnotatorResponse& r : responses) {
        const auto it = by_task.find(r.task_id);
        if (it == by_task.end()) {
            throw Error(ErrorCode::UnknownTask, "response references unknown task '" + r.task_id + "'");
        }
        const AnnotationTask& t = *it->second;
        OrderedJson j;
        j["task_id"] = t.task_id;
        j["ad_id"] = t.ad_id;
        j["question_text"] = t.question_text;
        j["candidate_labels"] = t.candidate_labels;
        j["annotator_id"] = r.annotator_id;
        j["chosen_label"] = r.chosen_label;
        j["responded_at"] = format_utc(r.responded_at);
        out << j.dump() << '\n';
    }
}

void write_aggregated(std::ostream& out, std::span<const AggregatedLabel> labels) {
    for (const AggregatedLabel& l : labels) {
        OrderedJson j;
        j["ad_id"] = l.ad_id;
        j["event_id"] = l.event_id ? OrderedJson(*l.event_id) : OrderedJson(nullptr);
        j["vote_fraction"] = l.vote_fraction;
        j["n_responses"] = l.n_responses;
        j["status"] = to_string(l.status);
        out << j.dump() << '\n';
    }
}

}  // namespace seasonal::labeling
