#pragma once

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seasonal/corpus.hpp"
#include "seasonal/jsonl.hpp"
#include "seasonal/timeutil.hpp"

namespace seasonal::calibration {

struct DeliveryEvent {
    std::string ad_id;
    double predicted = 0.0;  // predicted conversion probability
    int observed = 0;        // 1 if the conversion happened
    Timestamp at;
};

/// Throws Error(InvalidArgument) unless predicted is in [0, 1] and observed is 0 or 1.
void validate_event(const DeliveryEvent& e);

struct CalibrationWindow {
    Timestamp start;  // inclusive
    Timestamp end;    // exclusive
    double sum_predicted = 0.0;
    std::size_t sum_observed = 0;
    std::size_t n = 0;

    /// sum_predicted / sum_observed; absent when nothing converted.
    std::optional<double> ratio() const;
};

/**
 * Buckets events into consecutive half-open windows starting at the earliest
 * timestamp. Windows without events are kept so indices map to time. Sums
 * use compensated addition. Throws Error(EmptyStream).
 */
std::vector<CalibrationWindow> window_ratios(std::span<const DeliveryEvent> events, std::chrono::seconds window_length);

using Series = std::vector<std::optional<double>>;

Series ratios(std::span<const CalibrationWindow> windows);

/// Centered moving average over k windows, averaging only the defined
/// ratios in reach. k must be odd and at most the number of defined ratios
/// (Error(KTooLarge)); a series with no defined ratio comes back unchanged.
Series smooth(const Series& ratios, std::size_t k);

enum class Direction { Under, Over };
const char* to_string(Direction d);

struct Episode {
    std::size_t start_window = 0;
    std::size_t end_window = 0;  // inclusive
    Direction direction = Direction::Under;
    double extreme_ratio = 0.0;  // minimum for under, maximum for over
    std::vector<std::string> overlapping_events;

    bool operator==(const Episode&) const = default;
};

/// Maximal runs of at least min_run windows below 1 - delta or above
/// 1 + delta. Undefined ratios end a run.
std::vector<Episode> detect_episodes(const Series& smoothed, double delta, std::size_t min_run);

/// Fills overlapping_events with every calendar event (except none) whose
/// window in [first_year, last_year] intersects the episode's time span, sorted.
/// Propagates Error(UncoveredYear).
std::vector<Episode> overlay_calendar(std::vector<Episode> episodes, std::span<const CalibrationWindow> windows,
                                      const corpus::EventCalendar& calendar, int first_year, int last_year);

struct MonitorConfig {
    std::chrono::seconds window_length{std::chrono::hours{24}};
    std::size_t k = 7;
    double delta = 0.1;
    std::size_t min_run = 3;

    void validate() const;  // Error(Config)
};

struct MonitorReport {
    std::vector<CalibrationWindow> windows;
    Series raw;
    Series smoothed;
    std::vector<Episode> episodes;
};

/// window_ratios -> smooth -> detect_episodes, plus the calendar overlay when
/// a calendar is given (years taken from the stream's time span).
MonitorReport monitor(std::span<const DeliveryEvent> events, const MonitorConfig& config,
                      const corpus::EventCalendar* calendar = nullptr);

std::vector<DeliveryEvent> read_stream(std::istream& in);
void write_stream(std::ostream& out, std::span<const DeliveryEvent> events);

nlohmann::ordered_json to_json(const MonitorReport& report, const MonitorConfig& config);
/// window, start, end, n, sum_predicted, sum_observed, ratio, smoothed; undefined values are empty.
void write_series_tsv(std::ostream& out, const MonitorReport& report);

}  // namespace seasonal::calibration
