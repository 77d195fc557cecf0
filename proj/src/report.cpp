#include "capi/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

namespace capi {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::optional<double> metric(const IterationRecord& rec, std::size_t i, bool timing) {
    switch (i) {
        case 0: return rec.empirical_loss;
        case 1: return rec.sup_eval_error;
        case 2: return rec.performance_loss;
        case 3: return rec.mc_steps;
        case 4: return rec.mc_return;
        case 5: return timing ? std::optional<double>(rec.wall_ms) : std::nullopt;
    }
    return std::nullopt;
}

namespace {

void set_metric(IterationRecord& rec, std::size_t i, std::optional<double> v) {
    switch (i) {
        case 0: rec.empirical_loss = v; break;
        case 1: rec.sup_eval_error = v; break;
        case 2: rec.performance_loss = v; break;
        case 3: rec.mc_steps = v; break;
        case 4: rec.mc_return = v; break;
        case 5: rec.wall_ms = v.value_or(0.0); break;
    }
}

std::string cell(std::optional<double> v) { return v ? format_double(*v) : std::string(); }

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(line);
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_records_csv(std::ostream& out, const std::vector<RecordRow>& rows, bool timing) {
    out << "experiment,grid_key,grid_value,run,iteration";
    for (auto name : kMetricNames) out << ',' << name;
    out << '\n';
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.grid_key << ',' << r.grid_value << ',' << r.run << ',' << r.record.k;
        for (std::size_t i = 0; i < kMetricNames.size(); ++i) out << ',' << cell(metric(r.record, i, timing));
        out << '\n';
    }
}

std::vector<RecordRow> read_records_csv(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "records CSV has no header");
    std::vector<RecordRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line);
        require(f.size() == 5 + kMetricNames.size(), "records CSV row has the wrong number of fields");
        RecordRow r;
        r.experiment = f[0];
        r.grid_key = f[1];
        r.grid_value = f[2];
        r.run = std::stoul(f[3]);
        r.record.k = std::stoul(f[4]);
        for (std::size_t i = 0; i < kMetricNames.size(); ++i)
            set_metric(r.record, i, f[5 + i].empty() ? std::nullopt : std::optional<double>(std::stod(f[5 + i])));
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<SummaryRow> summarize(const std::vector<RecordRow>& rows, bool timing) {
    using Key = std::tuple<std::string, std::string, std::string, std::size_t>;
    std::map<Key, std::size_t> index;
    std::vector<SummaryRow> out;
    std::vector<std::array<std::vector<double>, kMetricNames.size()>> values;
    for (const auto& r : rows) {
        Key key{r.experiment, r.grid_key, r.grid_value, r.record.k};
        auto [it, fresh] = index.emplace(key, out.size());
        if (fresh) {
            SummaryRow s;
            s.experiment = r.experiment;
            s.grid_key = r.grid_key;
            s.grid_value = r.grid_value;
            s.iteration = r.record.k;
            out.push_back(s);
            values.emplace_back();
        }
        auto& s = out[it->second];
        ++s.runs;
        for (std::size_t i = 0; i < kMetricNames.size(); ++i)
            if (auto v = metric(r.record, i, timing)) values[it->second][i].push_back(*v);
    }
    for (std::size_t j = 0; j < out.size(); ++j) {
        for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
            const auto& v = values[j][i];
            if (v.empty()) continue;
            MetricSummary m;
            m.count = v.size();
            double sum = 0.0;
            for (double x : v) sum += x;
            m.mean = sum / static_cast<double>(v.size());
            if (v.size() > 1) {
                double ss = 0.0;
                for (double x : v) ss += (x - m.mean) * (x - m.mean);
                m.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
            }
            out[j].metrics[i] = m;
        }
    }
    return out;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "experiment,grid_key,grid_value,iteration,runs";
    for (auto name : kMetricNames) out << ',' << name << "_mean," << name << "_se";
    out << '\n';
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.grid_key << ',' << r.grid_value << ',' << r.iteration << ',' << r.runs;
        for (const auto& m : r.metrics) {
            if (m)
                out << ',' << format_double(m->mean) << ',' << format_double(m->std_error);
            else
                out << ",,";
        }
        out << '\n';
    }
}

bool write_svg(std::ostream& out, const std::vector<SummaryRow>& rows, std::size_t metric_index,
               const std::string& title) {
    struct Point {
        double x, y, e;
    };
    std::vector<std::string> names;
    std::map<std::string, std::vector<Point>> series;
    for (const auto& r : rows) {
        const auto& m = r.metrics[metric_index];
        if (!m) continue;
        std::string name = r.experiment + (r.grid_key.empty() ? "" : " " + r.grid_key + "=" + r.grid_value);
        if (!series.count(name)) names.push_back(name);
        series[name].push_back({static_cast<double>(r.iteration), m->mean, m->std_error});
    }
    if (names.empty()) return false;

    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& [_, pts] : series) {
        for (const auto& p : pts) {
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y - p.e);
            y1 = std::max(y1, p.y + p.e);
        }
    }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    const double W = 720, H = 440, L = 70, R = 220, T = 40, B = 50;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double y = y0 + (y1 - y0) * i / 4.0;
        double x = x0 + (x1 - x0) * i / 4.0;
        out << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_double(std::round(y * 1e4) / 1e4) << "</text>\n";
        out << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << format_double(std::round(x * 100) / 100) << "</text>\n";
    }
    out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">iteration</text>\n";
    for (std::size_t s = 0; s < names.size(); ++s) {
        const char* color = colors[s % 8];
        const auto& pts = series[names[s]];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : pts) out << px(p.x) << ',' << py(p.y) << ' ';
        out << "\"/>\n";
        for (const auto& p : pts) {
            if (p.e <= 0.0) continue;
            out << "<line x1=\"" << px(p.x) << "\" y1=\"" << py(p.y - p.e) << "\" x2=\"" << px(p.x) << "\" y2=\""
                << py(p.y + p.e) << "\" stroke=\"" << color << "\"/>\n";
        }
        double ly = T + 16.0 * static_cast<double>(s);
        out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << W - R + 34 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
            << names[s] << "</text>\n";
    }
    out << "</svg>\n";
    return true;
}

}  // namespace capi
