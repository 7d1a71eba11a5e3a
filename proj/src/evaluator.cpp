#include "apie/evaluator.hpp"

#include <cstdio>
#include <sstream>

namespace apie {

namespace {

double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

TupleKind kind_of(EvalTask task) { return task == EvalTask::ner ? TupleKind::entity : TupleKind::relation; }

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
    return buf;
}

}  // namespace

std::string to_string(EvalTask t) { return t == EvalTask::ner ? "ner" : "re"; }

MatchCounts score_sample(const ParseOutcome& pred, const ExtractionSet& gold, EvalTask task) {
    const auto gold_k = gold.of_kind(kind_of(task));
    MatchCounts c;
    if (!pred.valid()) {
        c.fn = static_cast<long>(gold_k.size());
        return c;
    }
    const auto pred_k = pred.extractions->of_kind(kind_of(task));
    for (const auto& t : pred_k) {
        if (gold_k.contains(t)) {
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    c.fn = static_cast<long>(gold_k.size()) - c.tp;
    return c;
}

EvalReport micro_f1(EvalTask task, std::vector<SampleCounts> per_sample) {
    EvalReport r;
    r.task = task;
    for (const auto& s : per_sample) {
        r.tp += s.counts.tp;
        r.fp += s.counts.fp;
        r.fn += s.counts.fn;
    }
    r.precision = ratio(r.tp, r.tp + r.fp);
    r.recall = ratio(r.tp, r.tp + r.fn);
    r.f1 = (r.precision + r.recall) == 0 ? 0.0 : 2 * r.precision * r.recall / (r.precision + r.recall);
    r.per_sample = std::move(per_sample);
    return r;
}

RunReports evaluate_run(const std::map<std::string, ParseOutcome>& predictions, std::span<const Sample> test,
                        const SchemaSpec& schema) {
    std::vector<SampleCounts> ner, re;
    const bool joint = schema.task == TaskKind::joint_ner_re;
    for (const auto& s : test) {
        if (!s.gold) throw DataError("MissingGold", "test sample '" + s.id + "' has no gold labels");
        auto it = predictions.find(s.id);
        if (it == predictions.end()) throw DataError("MissingPrediction", "no prediction for '" + s.id + "'");
        const bool failed = !it->second.valid();
        ner.push_back(SampleCounts{s.id, score_sample(it->second, *s.gold, EvalTask::ner), failed});
        if (joint) re.push_back(SampleCounts{s.id, score_sample(it->second, *s.gold, EvalTask::re), failed});
    }
    RunReports out{micro_f1(EvalTask::ner, std::move(ner)), std::nullopt};
    if (joint) out.re = micro_f1(EvalTask::re, std::move(re));
    return out;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["task"] = to_string(r.task);
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["fn"] = r.fn;
    auto per = nlohmann::ordered_json::array();
    for (const auto& s : r.per_sample) {
        nlohmann::ordered_json o;
        o["id"] = s.id;
        o["tp"] = s.counts.tp;
        o["fp"] = s.counts.fp;
        o["fn"] = s.counts.fn;
        o["parse_failed"] = s.parse_failed;
        per.push_back(std::move(o));
    }
    j["per_sample"] = std::move(per);
    return j;
}

nlohmann::ordered_json reports_to_json(const RunReports& r) {
    nlohmann::ordered_json j;
    j["ner"] = report_to_json(r.ner);
    if (r.re) j["re"] = report_to_json(*r.re);
    return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.task = j.at("task").get<std::string>() == "re" ? EvalTask::re : EvalTask::ner;
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.tp = j.at("tp").get<long>();
    r.fp = j.at("fp").get<long>();
    r.fn = j.at("fn").get<long>();
    for (const auto& o : j.at("per_sample")) {
        r.per_sample.push_back(SampleCounts{o.at("id").get<std::string>(),
                                            {o.at("tp").get<long>(), o.at("fp").get<long>(), o.at("fn").get<long>()},
                                            o.at("parse_failed").get<bool>()});
    }
    return r;
}

std::string render_f1_table(const std::vector<std::pair<std::string, RunReports>>& rows) {
    std::size_t width = 8;
    for (const auto& [name, r] : rows) width = std::max(width, name.size());
    std::ostringstream out;
    const auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
    out << pad("Run", width) << "  " << pad("NER F1", 8) << "  RE F1\n";
    out << std::string(width, '-') << "  " << std::string(8, '-') << "  " << std::string(8, '-') << "\n";
    for (const auto& [name, r] : rows) {
        out << pad(name, width) << "  " << pad(pct(r.ner.f1), 8) << "  " << (r.re ? pct(r.re->f1) : "-") << "\n";
    }
    return out.str();
}

}  // namespace apie
