#include "skillstack/metrics.hpp"

#include <algorithm>

namespace skillstack {

DatasetMetrics aggregate(const std::vector<TaskRecord>& records) {
    if (records.empty())
        throw MetricsError(MetricsError::Code::EmptyInput, "no records to aggregate");

    DatasetMetrics m;
    m.n = static_cast<int>(records.size());
    double bm_sum = 0.0;
    int bm_count = 0;
    for (const TaskRecord& rec : records) {
        if (rec.bm > 0.0 && rec.sg != 1.0)
            throw MetricsError(MetricsError::Code::InconsistentRecord,
                               rec.task_id + ": positive bm requires sg = 1");
        m.se += rec.se;
        m.sg += rec.sg;
        m.cpf += rec.cpf;
        m.attempts_mean += rec.attempts;
        if (rec.best) {
            bm_sum += rec.bm;
            ++bm_count;
        }
    }
    m.se /= m.n;
    m.sg /= m.n;
    m.cpf /= m.n;
    m.attempts_mean /= m.n;
    m.bm = bm_count > 0 ? bm_sum / bm_count : 0.0;
    m.bm_excluded = m.n - bm_count;
    return m;
}

double pass_at_k(const std::vector<TaskRecord>& records, int K) {
    if (K < 1) throw std::invalid_argument("pass_at_k needs K >= 1");
    if (records.empty()) return 0.0;
    int hits = 0;
    for (const TaskRecord& rec : records)
        if (rec.first_success_attempt && *rec.first_success_attempt <= K) ++hits;
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

TransitionCounts transitions(const std::vector<TaskRecord>& baseline,
                             const std::vector<TaskRecord>& post) {
    std::map<std::string, double> base_sg;
    for (const TaskRecord& rec : baseline)
        if (!base_sg.emplace(rec.task_id, rec.sg).second)
            throw MetricsError(MetricsError::Code::IdMismatch,
                               "duplicate baseline task_id " + rec.task_id);
    if (base_sg.size() != post.size())
        throw MetricsError(MetricsError::Code::IdMismatch, "record sets differ in size");

    TransitionCounts counts;
    std::map<std::string, bool> seen;
    for (const TaskRecord& rec : post) {
        const auto it = base_sg.find(rec.task_id);
        if (it == base_sg.end() || !seen.emplace(rec.task_id, true).second)
            throw MetricsError(MetricsError::Code::IdMismatch,
                               "post task_id " + rec.task_id + " does not match baseline");
        const bool was = it->second == 1.0;
        const bool now = rec.sg == 1.0;
        if (was && now) ++counts.pass_pass;
        else if (was && !now) ++counts.pass_fail;
        else if (!was && now) ++counts.fail_pass;
        else ++counts.fail_fail;
    }
    return counts;
}

std::map<int, std::map<std::string, double>>
error_composition(const std::vector<TaskRecord>& records) {
    std::map<int, std::map<std::string, int>> counts;
    std::map<int, int> totals;
    for (const TaskRecord& rec : records) {
        for (const CandidateRecord& cand : rec.all_candidates) {
            if (cand.report) continue;
            if (excluded_from_composition(cand.outcome.category)) continue;
            ++counts[cand.round][std::string(error_category_name(cand.outcome.category))];
            ++totals[cand.round];
        }
    }
    std::map<int, std::map<std::string, double>> fractions;
    for (const auto& [round, by_category] : counts) {
        const double total = totals.at(round);
        for (const auto& [category, count] : by_category)
            fractions[round][category] = count / total;
    }
    return fractions;
}

} // namespace skillstack
