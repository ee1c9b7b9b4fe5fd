#include "seasonal/calibration_monitor.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "seasonal/error.hpp"

namespace seasonal::calibration {

namespace {

/// Neumaier's variant of Kahan summation.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + carry; }
};

int year_of(Timestamp t) {
    return static_cast<int>(std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(t)}.year());
}

}  // namespace

void validate_event(const DeliveryEvent& e) {
    if (!(e.predicted >= 0.0 && e.predicted <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "ad " + e.ad_id + ": predicted must lie in [0, 1]");
    }
    if (e.observed != 0 && e.observed != 1) {
        throw Error(ErrorCode::InvalidArgument, "ad " + e.ad_id + ": observed must be 0 or 1");
    }
}

std::optional<double> CalibrationWindow::ratio() const {
    if (sum_observed == 0) {
        return std::nullopt;
    }
    return sum_predicted / static_cast<double>(sum_observed);
}

std::vector<CalibrationWindow> window_ratios(std::span<const DeliveryEvent> events,
                                             std::chrono::seconds window_length) {
    if (events.empty()) {
        throw Error(ErrorCode::EmptyStream, "delivery stream has no events");
    }
    if (window_length.count() <= 0) {
        throw Error(ErrorCode::InvalidArgument, "window length must be positive");
    }
    Timestamp first = events.front().at;
    Timestamp last = first;
    for (const DeliveryEvent& e : events) {
        validate_event(e);
        first = std::min(first, e.at);
        last = std::max(last, e.at);
    }
    const auto count = static_cast<std::size_t>((last - first) / window_length) + 1;
    std::vector<CalibrationWindow> windows(count);
    std::vector<CompensatedSum> sums(count);
    for (std::size_t w = 0; w < count; ++w) {
        windows[w].start = first + window_length * static_cast<long long>(w);
        windows[w].end = windows[w].start + window_length;
    }
    for (const DeliveryEvent& e : events) {
        const auto w = static_cast<std::size_t>((e.at - first) / window_length);
        sums[w].add(e.predicted);
        windows[w].sum_observed += static_cast<std::size_t>(e.observed);
        ++windows[w].n;
    }
    for (std::size_t w = 0; w < count; ++w) {
        windows[w].sum_predicted = sums[w].value();
    }
    return windows;
}

Series ratios(std::span<const CalibrationWindow> windows) {
    Series out;
    out.reserve(windows.size());
    for (const CalibrationWindow& w : windows) {
        out.push_back(w.ratio());
    }
    return out;
}

Series smooth(const Series& ratios, std::size_t k) {
    if (k == 0 || k % 2 == 0) {
        throw Error(ErrorCode::InvalidArgument, "smoothing width must be odd and positive");
    }
    const auto defined = static_cast<std::size_t>(
        std::count_if(ratios.begin(), ratios.end(), [](const auto& r) { return r.has_value(); }));
    if (defined == 0) {
        return ratios;
    }
    if (k > defined) {
        throw Error(ErrorCode::KTooLarge, "smoothing width " + std::to_string(k) + " exceeds the " +
                                              std::to_string(defined) + " defined ratios");
    }
    const std::size_t half = k / 2;
    Series out(ratios.size());
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(ratios.size() - 1, i + half);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t j = lo; j <= hi; ++j) {
            if (ratios[j]) {
                sum += *ratios[j];
                ++n;
            }
        }
        if (n > 0) {
            out[i] = sum / static_cast<double>(n);
        }
    }
    return out;
}

const char* to_string(Direction d) {
    return d == Direction::Under ? "under" : "over";
}

std::vector<Episode> detect_episodes(const Series& smoothed, double delta, std::size_t min_run) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
    }
    if (min_run == 0) {
        throw Error(ErrorCode::InvalidArgument, "min_run must be positive");
    }
    auto breach = [&](const std::optional<double>& r) -> std::optional<Direction> {
        if (!r) return std::nullopt;
        if (*r < 1.0 - delta) return Direction::Under;
        if (*r > 1.0 + delta) return Direction::Over;
        return std::nullopt;
    };
    std::vector<Episode> out;
    std::size_t i = 0;
    while (i < smoothed.size()) {
        const auto dir = breach(smoothed[i]);
        if (!dir) {
            ++i;
            continue;
        }
        std::size_t j = i;
        double extreme = *smoothed[i];
        while (j + 1 < smoothed.size() && breach(smoothed[j + 1]) == dir) {
            ++j;
            extreme = *dir == Direction::Under ? std::min(extreme, *smoothed[j]) : std::max(extreme, *smoothed[j]);
        }
        if (j - i + 1 >= min_run) {
            out.push_back({i, j, *dir, extreme, {}});
        }
        i = j + 1;
    }
    return out;
}

std::vector<Episode> overlay_calendar(std::vector<Episode> episodes, std::span<const CalibrationWindow> windows,
                                      const corpus::EventCalendar& calendar, int first_year, int last_year) {
    struct Span {
        std::string id;
        Timestamp begin;
        Timestamp end;
    };
    std::vector<Span> spans;
    for (const corpus::SeasonalEvent& event : calendar.events()) {
        if (event.event_id == corpus::kNoneEvent) {
            continue;
        }
        for (int year = first_year; year <= last_year; ++year) {
            const corpus::DateInterval d = corpus::resolve_event_window(event, year);
            spans.push_back({event.event_id, Timestamp(d.begin), Timestamp(d.end)});
        }
    }
    for (Episode& ep : episodes) {
        if (ep.end_window >= windows.size() || ep.start_window > ep.end_window) {
            throw Error(ErrorCode::InvalidArgument, "episode does not fit the window list");
        }
        const Timestamp begin = windows[ep.start_window].start;
        const Timestamp end = windows[ep.end_window].end;
        std::set<std::string> hits;
        for (const Span& s : spans) {
            if (s.begin < end && begin < s.end) {
                hits.insert(s.id);
            }
        }
        ep.overlapping_events.assign(hits.begin(), hits.end());
    }
    return episodes;
}

void MonitorConfig::validate() const {
    if (window_length.count() <= 0) {
        throw Error(ErrorCode::Config, "window length must be positive");
    }
    if (k == 0 || k % 2 == 0) {
        throw Error(ErrorCode::Config, "smoothing width k must be odd and positive");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
        throw Error(ErrorCode::Config, "delta must lie in (0, 1)");
    }
    if (min_run == 0) {
        throw Error(ErrorCode::Config, "min_run must be positive");
    }
}

MonitorReport monitor(std::span<const DeliveryEvent> events, const MonitorConfig& config,
                      const corpus::EventCalendar* calendar) {
    config.validate();
    MonitorReport report;
    report.windows = window_ratios(events, config.window_length);
    report.raw = ratios(report.windows);
    report.smoothed = smooth(report.raw, config.k);
    report.episodes = detect_episodes(report.smoothed, config.delta, config.min_run);
    if (calendar != nullptr) {
        const int first = year_of(report.windows.front().start);
        const int last = year_of(report.windows.back().end - std::chrono::seconds{1});
        report.episodes = overlay_calendar(std::move(report.episodes), report.windows, *calendar, first, last);
    }
    return report;
}

std::vector<DeliveryEvent> read_stream(std::istream& in) {
    std::vector<DeliveryEvent> out;
    for_each_jsonl(in, [&](const Json& r, std::size_t) {
        DeliveryEvent e;
        e.ad_id = require_string(r, "ad_id");
        e.predicted = require_number(r, "predicted");
        e.observed = static_cast<int>(require_integer(r, "observed"));
        e.at = parse_utc(require_string(r, "at"));
        validate_event(e);
        out.push_back(std::move(e));
    });
    return out;
}

void write_stream(std::ostream& out, std::span<const DeliveryEvent> events) {
    for (const DeliveryEvent& e : events) {
        nlohmann::ordered_json j;
        j["ad_id"] = e.ad_id;
        j["predicted"] = e.predicted;
        j["observed"] = e.observed;
        j["at"] = format_utc(e.at);
        out << j.dump() << '\n';
    }
}

nlohmann::ordered_json to_json(const MonitorReport& report, const MonitorConfig& config) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j;
    j["config"] = {{"window_seconds", config.window_length.count()},
                   {"k", config.k},
                   {"delta", config.delta},
                   {"min_run", config.min_run}};
    auto& windows = j["windows"] = nlohmann::ordered_json::array();
    for (std::size_t w = 0; w < report.windows.size(); ++w) {
        const CalibrationWindow& cw = report.windows[w];
        nlohmann::ordered_json wj;
        wj["index"] = w;
        wj["start"] = format_utc(cw.start);
        wj["end"] = format_utc(cw.end);
        wj["n"] = cw.n;
        wj["sum_predicted"] = cw.sum_predicted;
        wj["sum_observed"] = cw.sum_observed;
        wj["ratio"] = opt(report.raw[w]);
        wj["smoothed"] = opt(report.smoothed[w]);
        windows.push_back(std::move(wj));
    }
    auto& episodes = j["episodes"] = nlohmann::ordered_json::array();
    for (const Episode& ep : report.episodes) {
        nlohmann::ordered_json ej;
        ej["start_window"] = ep.start_window;
        ej["end_window"] = ep.end_window;
        ej["start"] = format_utc(report.windows[ep.start_window].start);
        ej["end"] = format_utc(report.windows[ep.end_window].end);
        ej["direction"] = to_string(ep.direction);
        ej["extreme_ratio"] = ep.extreme_ratio;
        ej["overlapping_events"] = ep.overlapping_events;
        episodes.push_back(std::move(ej));
    }
    return j;
}

void write_series_tsv(std::ostream& out, const MonitorReport& report) {
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; };
    out << "window\tstart\tend\tn\tsum_predicted\tsum_observed\tratio\tsmoothed\n";
    for (std::size_t w = 0; w < report.windows.size(); ++w) {
        const CalibrationWindow& cw = report.windows[w];
        out << w << '\t' << format_utc(cw.start) << '\t' << format_utc(cw.end) << '\t' << cw.n << '\t'
            << format_double(cw.sum_predicted) << '\t' << cw.sum_observed << '\t' << opt(report.raw[w]) << '\t'
            << opt(report.smoothed[w]) << '\n';
    }
}

}  // namespace seasonal::calibration
