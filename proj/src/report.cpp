#include "skillstack/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <string_view>

namespace skillstack {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string printf_cell(const char* fmt, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, value);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

ordered_json metrics_block(const DatasetMetrics& m) {
    return ordered_json{{"se", m.se},
                        {"sg", m.sg},
                        {"cpf", m.cpf},
                        {"bm", m.bm},
                        {"attempts_mean", m.attempts_mean},
                        {"n", m.n},
                        {"bm_excluded", m.bm_excluded}};
}

ordered_json composition_block(const std::map<int, std::map<std::string, double>>& table) {
    ordered_json block = ordered_json::object();
    for (const auto& [round, fractions] : table) {
        ordered_json row = ordered_json::object();
        for (const auto& [category, fraction] : fractions) row[category] = fraction;
        block[std::to_string(round)] = std::move(row);
    }
    return block;
}

long total_invocations(const std::vector<TaskRecord>& records) {
    long n = 0;
    for (const TaskRecord& rec : records) n += rec.attempts;
    return n;
}

long total_tokens(const std::vector<TaskRecord>& records) {
    long n = 0;
    for (const TaskRecord& rec : records) n += rec.llm_tokens;
    return n;
}

// ---- plots ------------------------------------------------------------

std::string svg_num(double v) { return printf_cell("%.2f", v); }

// fixed, colorblind-safe palette; Infrastructure never appears in plots
const std::map<std::string, std::string>& category_colors() {
    static const std::map<std::string, std::string> colors = {
        {"TensorIndexOOB", "#d55e00"},
        {"ApiMisuse", "#0072b2"},
        {"GradientError", "#cc79a7"},
        {"NoCodeNoSolution", "#e69f00"},
    };
    return colors;
}

std::string passk_svg(const std::vector<double>& baseline, const std::vector<double>& post) {
    const double width = 480, height = 300, left = 56, right = 16, top = 20, bottom = 44;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    const int kmax = static_cast<int>(baseline.size());
    const auto x_of = [&](int k) {
        return left + (kmax == 1 ? 0.5 : (k - 1) / double(kmax - 1)) * plot_w;
    };
    const auto y_of = [&](double frac) { return top + (1.0 - frac) * plot_h; };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(width) +
                    "\" height=\"" + svg_num(height) + "\" font-family=\"sans-serif\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double y = y_of(tick);
        s += "<line x1=\"" + svg_num(left) + "\" y1=\"" + svg_num(y) + "\" x2=\"" +
             svg_num(left + plot_w) + "\" y2=\"" + svg_num(y) +
             "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
        s += "<text x=\"" + svg_num(left - 8) + "\" y=\"" + svg_num(y + 4) +
             "\" font-size=\"11\" text-anchor=\"end\">" + svg_num(tick) + "</text>\n";
    }
    for (int k = 1; k <= kmax; ++k) {
        s += "<text x=\"" + svg_num(x_of(k)) + "\" y=\"" + svg_num(top + plot_h + 16) +
             "\" font-size=\"11\" text-anchor=\"middle\">" + std::to_string(k) + "</text>\n";
    }
    const auto polyline = [&](const std::vector<double>& ys, const char* color) {
        std::string pts;
        for (int k = 1; k <= kmax; ++k)
            pts += svg_num(x_of(k)) + "," + svg_num(y_of(ys[k - 1])) + " ";
        return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    };
    s += polyline(baseline, "#888888");
    s += polyline(post, "#0072b2");
    s += "<text x=\"" + svg_num(left) + "\" y=\"14\" font-size=\"12\">Pass@K "
         "(gray: baseline, blue: post)</text>\n";
    s += "<text x=\"" + svg_num(left + plot_w / 2) + "\" y=\"" + svg_num(height - 8) +
         "\" font-size=\"12\" text-anchor=\"middle\">K</text>\n";
    s += "</svg>\n";
    return s;
}

struct BoxStats {
    double lo = 0, q1 = 0, median = 0, q3 = 0, hi = 0;
};

BoxStats box_stats(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const auto median_of = [&](std::size_t a, std::size_t b) { // half-open [a, b)
        const std::size_t m = b - a;
        return m % 2 ? values[a + m / 2] : 0.5 * (values[a + m / 2 - 1] + values[a + m / 2]);
    };
    BoxStats stats;
    stats.lo = values.front();
    stats.hi = values.back();
    stats.median = median_of(0, n);
    // Tukey hinges: odd-length halves keep the median element
    stats.q1 = median_of(0, n / 2 + n % 2);
    stats.q3 = median_of(n / 2, n);
    return stats;
}

std::string attempts_svg(const std::vector<TaskRecord>& baseline,
                         const std::vector<TaskRecord>& post, int pass_k_max) {
    const double width = 360, height = 300, top = 20, bottom = 40, left = 48;
    const double plot_h = height - top - bottom;
    const double y_span = std::max(pass_k_max, 1);
    const auto y_of = [&](double attempts) { return top + (1.0 - attempts / y_span) * plot_h; };
    const auto attempts_of = [](const std::vector<TaskRecord>& records) {
        std::vector<double> a;
        a.reserve(records.size());
        for (const TaskRecord& rec : records) a.push_back(rec.attempts);
        return a;
    };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(width) +
                    "\" height=\"" + svg_num(height) + "\" font-family=\"sans-serif\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const struct {
        const char* label;
        const char* color;
        double x;
        const std::vector<TaskRecord>* records;
    } groups[] = {{"baseline", "#888888", left + 70, &baseline},
                  {"post", "#0072b2", left + 200, &post}};
    for (const auto& g : groups) {
        if (g.records->empty()) continue;
        const BoxStats b = box_stats(attempts_of(*g.records));
        const double half_w = 34;
        s += "<line x1=\"" + svg_num(g.x) + "\" y1=\"" + svg_num(y_of(b.lo)) + "\" x2=\"" +
             svg_num(g.x) + "\" y2=\"" + svg_num(y_of(b.hi)) + "\" stroke=\"" + g.color +
             "\" stroke-width=\"1.5\"/>\n";
        s += "<rect x=\"" + svg_num(g.x - half_w) + "\" y=\"" + svg_num(y_of(b.q3)) +
             "\" width=\"" + svg_num(2 * half_w) + "\" height=\"" +
             svg_num(y_of(b.q1) - y_of(b.q3)) + "\" fill=\"" + g.color +
             "\" fill-opacity=\"0.25\" stroke=\"" + g.color + "\"/>\n";
        s += "<line x1=\"" + svg_num(g.x - half_w) + "\" y1=\"" + svg_num(y_of(b.median)) +
             "\" x2=\"" + svg_num(g.x + half_w) + "\" y2=\"" + svg_num(y_of(b.median)) +
             "\" stroke=\"" + g.color + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + svg_num(g.x) + "\" y=\"" + svg_num(height - 12) +
             "\" font-size=\"12\" text-anchor=\"middle\">" + g.label + "</text>\n";
    }
    for (int tick = 0; tick <= pass_k_max; tick += std::max(pass_k_max / 5, 1)) {
        s += "<text x=\"" + svg_num(left - 8) + "\" y=\"" + svg_num(y_of(tick) + 4) +
             "\" font-size=\"11\" text-anchor=\"end\">" + std::to_string(tick) + "</text>\n";
    }
    s += "<text x=\"" + svg_num(left) + "\" y=\"14\" font-size=\"12\">Attempts per task</text>\n";
    s += "</svg>\n";
    return s;
}

std::string errors_svg(const std::map<int, std::map<std::string, double>>& baseline,
                       const std::map<int, std::map<std::string, double>>& post) {
    const double width = 520, height = 320, top = 20, bottom = 56, left = 48;
    const double plot_h = height - top - bottom;
    const double bar_w = 30, gap = 14;

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(width) +
                    "\" height=\"" + svg_num(height) + "\" font-family=\"sans-serif\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    double x = left;
    const auto draw_condition = [&](const char* prefix,
                                    const std::map<int, std::map<std::string, double>>& table) {
        for (const auto& [round, fractions] : table) {
            double y = top + plot_h;
            for (const auto& [category, fraction] : fractions) {
                const double h = fraction * plot_h;
                y -= h;
                s += "<rect x=\"" + svg_num(x) + "\" y=\"" + svg_num(y) + "\" width=\"" +
                     svg_num(bar_w) + "\" height=\"" + svg_num(h) + "\" fill=\"" +
                     category_colors().at(category) + "\"/>\n";
            }
            s += "<text x=\"" + svg_num(x + bar_w / 2) + "\" y=\"" + svg_num(top + plot_h + 14) +
                 "\" font-size=\"11\" text-anchor=\"middle\">" + prefix + std::to_string(round) +
                 "</text>\n";
            x += bar_w + gap;
        }
    };
    draw_condition("B", baseline);
    x += gap; // visual gap between the two conditions
    draw_condition("P", post);

    double legend_x = left;
    const double legend_y = height - 26;
    for (const auto& [category, color] : category_colors()) {
        s += "<rect x=\"" + svg_num(legend_x) + "\" y=\"" + svg_num(legend_y) +
             "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
        s += "<text x=\"" + svg_num(legend_x + 14) + "\" y=\"" + svg_num(legend_y + 9) +
             "\" font-size=\"10\">" + category + "</text>\n";
        legend_x += 14 + 7.0 * category.size() + 12;
    }
    s += "<text x=\"" + svg_num(left) +
         "\" y=\"14\" font-size=\"12\">Error composition by round (B: baseline, P: post)"
         "</text>\n";
    s += "</svg>\n";
    return s;
}

} // namespace

std::string format_percent(double fraction) { return printf_cell("%.1f%%", fraction * 100.0); }
std::string format_percent_delta(double fraction) {
    return printf_cell("%+.1fpp", fraction * 100.0);
}
std::string format_level(double value) { return printf_cell("%.3f", value); }
std::string format_level_delta(double value) { return printf_cell("%+.3f", value); }
std::string format_attempts(double value) { return printf_cell("%.2f", value); }
std::string format_attempts_delta(double value) { return printf_cell("%+.2f", value); }

std::string format_metrics_row(const DatasetMetrics& m) {
    return format_percent(m.sg) + " / " + format_percent(m.se) + " / " + format_level(m.cpf) +
           " / " + format_level(m.bm) + " / " + format_attempts(m.attempts_mean);
}

void write_report(const std::filesystem::path& dir, const std::vector<TaskRecord>& baseline,
                  const std::vector<TaskRecord>& post, const ReportOptions& options) {
    std::filesystem::create_directories(dir / "plots");

    const DatasetMetrics base_m = aggregate(baseline);
    const DatasetMetrics post_m = aggregate(post);
    const TransitionCounts moves = transitions(baseline, post);
    const auto base_errors = error_composition(baseline);
    const auto post_errors = error_composition(post);

    // table1.csv — summary layout with a delta row
    std::string table = "Dataset,Condition,SG,SE,CPF,BM,Attempts\n";
    table += options.dataset_label + ",Starter-skill baseline," + format_percent(base_m.sg) + "," +
             format_percent(base_m.se) + "," + format_level(base_m.cpf) + "," +
             format_level(base_m.bm) + "," + format_attempts(base_m.attempts_mean) + "\n";
    table += options.dataset_label + ",Post-train," + format_percent(post_m.sg) + "," +
             format_percent(post_m.se) + "," + format_level(post_m.cpf) + "," +
             format_level(post_m.bm) + "," + format_attempts(post_m.attempts_mean) + "\n";
    table += options.dataset_label + ",Delta," + format_percent_delta(post_m.sg - base_m.sg) +
             "," + format_percent_delta(post_m.se - base_m.se) + "," +
             format_level_delta(post_m.cpf - base_m.cpf) + "," +
             format_level_delta(post_m.bm - base_m.bm) + "," +
             format_attempts_delta(post_m.attempts_mean - base_m.attempts_mean) + "\n";
    write_text(dir / "table1.csv", table);

    // passk.csv + the curve data reused by metrics.json and the plot
    std::vector<double> base_curve, post_curve;
    std::string passk = "K,baseline,post\n";
    for (int k = 1; k <= options.pass_k_max; ++k) {
        base_curve.push_back(pass_at_k(baseline, k));
        post_curve.push_back(pass_at_k(post, k));
        passk += std::to_string(k) + "," + printf_cell("%.4f", base_curve.back()) + "," +
                 printf_cell("%.4f", post_curve.back()) + "\n";
    }
    write_text(dir / "passk.csv", passk);

    std::string trans = "transition,count\n";
    trans += "pass->pass," + std::to_string(moves.pass_pass) + "\n";
    trans += "pass->fail," + std::to_string(moves.pass_fail) + "\n";
    trans += "fail->pass," + std::to_string(moves.fail_pass) + "\n";
    trans += "fail->fail," + std::to_string(moves.fail_fail) + "\n";
    write_text(dir / "transitions.csv", trans);

    std::string errors = "condition,round,category,fraction\n";
    const auto emit_errors = [&](const char* condition,
                                 const std::map<int, std::map<std::string, double>>& table_) {
        for (const auto& [round, fractions] : table_)
            for (const auto& [category, fraction] : fractions)
                errors += std::string(condition) + "," + std::to_string(round) + "," + category +
                          "," + printf_cell("%.4f", fraction) + "\n";
    };
    emit_errors("baseline", base_errors);
    emit_errors("post", post_errors);
    write_text(dir / "errors_by_round.csv", errors);

    ordered_json doc;
    doc["dataset"] = options.dataset_label;
    doc["baseline"] = metrics_block(base_m);
    doc["post"] = metrics_block(post_m);
    doc["delta"] = ordered_json{{"sg", post_m.sg - base_m.sg},
                                {"se", post_m.se - base_m.se},
                                {"cpf", post_m.cpf - base_m.cpf},
                                {"bm", post_m.bm - base_m.bm},
                                {"attempts_mean", post_m.attempts_mean - base_m.attempts_mean}};
    doc["summary_rows"] = ordered_json{{"baseline", format_metrics_row(base_m)},
                                       {"post", format_metrics_row(post_m)}};
    doc["transitions"] = ordered_json{{"pass_pass", moves.pass_pass},
                                      {"pass_fail", moves.pass_fail},
                                      {"fail_pass", moves.fail_pass},
                                      {"fail_fail", moves.fail_fail}};
    ordered_json ks = ordered_json::array();
    for (int k = 1; k <= options.pass_k_max; ++k) ks.push_back(k);
    doc["pass_at_k"] =
        ordered_json{{"k", std::move(ks)}, {"baseline", base_curve}, {"post", post_curve}};
    doc["error_composition"] = ordered_json{{"baseline", composition_block(base_errors)},
                                            {"post", composition_block(post_errors)}};
    doc["cost"] = ordered_json{
        {"usd_per_token", options.usd_per_token},
        {"baseline",
         ordered_json{{"generator_invocations", total_invocations(baseline)},
                      {"llm_tokens", total_tokens(baseline)},
                      {"usd", total_tokens(baseline) * options.usd_per_token}}},
        {"post", ordered_json{{"generator_invocations", total_invocations(post)},
                              {"llm_tokens", total_tokens(post)},
                              {"usd", total_tokens(post) * options.usd_per_token}}}};
    write_text(dir / "metrics.json", doc.dump(2) + "\n");

    write_text(dir / "plots" / "passk.svg", passk_svg(base_curve, post_curve));
    write_text(dir / "plots" / "attempts.svg", attempts_svg(baseline, post, options.pass_k_max));
    write_text(dir / "plots" / "errors.svg", errors_svg(base_errors, post_errors));
}

} // namespace skillstack
