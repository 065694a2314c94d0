#pragma once
// Multi-seed suite driver and report emission. Reports are line-delimited
// task records plus aggregates that are always recomputable from the records;
// everything serialized here is deterministic for a fixed (scenario, seed,
// config) triple.

#include "opmend/metrics.hpp"

#include <future>
#include <iomanip>
#include <sstream>

namespace opmend {

struct Aggregates {
    double sr = 0.0;  // percent
    double rfr_obs = 0.0;
    double rfr_term = 0.0;
    double csr = -1.0;  // percent; negative when no canary ran
    size_t accepted_patches = 0;
    size_t proposals = 0;
    size_t escalations = 0;
    size_t queued = 0;
    size_t rollbacks = 0;
    size_t recovered = 0;  // tasks ending in success
    std::map<std::string, TtaResult> tta;
    std::vector<size_t> cumulative_target;  // running target-class failure count
    double holdout_target_fail = -1.0;      // percent over holdout tasks
    double holdout_sr = -1.0;
};

inline Aggregates compute_aggregates(const std::vector<TaskRecord>& records,
                                     const Scenario& scenario) {
    Aggregates a;
    if (records.empty()) return a;
    size_t ok = 0;
    double csr_sum = 0.0;
    size_t csr_n = 0;
    std::set<std::string> classes;
    for (const auto& r : records) {
        if (r.success) ++ok;
        a.proposals += r.patches_proposed;
        a.escalations += r.patches_escalated;
        a.queued += r.patches_queued;
        a.rollbacks += r.rollbacks;
        a.accepted_patches += r.commits.size();
        for (const auto& c : r.commits)
            if (c.csr >= 0.0) {
                csr_sum += c.csr;
                ++csr_n;
            }
        for (const auto& f : r.failures) classes.insert(f.error_class);
    }
    a.recovered = ok;
    a.sr = 100.0 * static_cast<double>(ok) / static_cast<double>(records.size());
    a.rfr_obs = metric_rfr(records, 100, false);
    a.rfr_term = metric_rfr(records, 100, true);
    if (csr_n > 0) a.csr = 100.0 * csr_sum / static_cast<double>(csr_n);
    for (const auto& c : classes) a.tta[c] = metric_tta(records, c);

    const std::string& target = scenario.stress.target_error_class;
    if (!target.empty()) {
        size_t running = 0;
        for (const auto& r : records) {
            bool hit = std::any_of(r.failures.begin(), r.failures.end(),
                                   [&](const TaskFailure& f) {
                                       return f.error_class == target;
                                   });
            if (hit) ++running;  // a task counts once however often it retried
            a.cumulative_target.push_back(running);
        }
        if (scenario.stress.holdout_start >= 0) {
            size_t lo = static_cast<size_t>(scenario.stress.holdout_start);
            size_t n = 0, hit = 0, hok = 0;
            for (const auto& r : records) {
                if (r.index < lo) continue;
                ++n;
                if (r.success) ++hok;
                if (std::any_of(r.failures.begin(), r.failures.end(),
                                [&](const TaskFailure& f) {
                                    return f.error_class == target;
                                }))
                    ++hit;
            }
            if (n > 0) {
                a.holdout_target_fail = 100.0 * static_cast<double>(hit) /
                                        static_cast<double>(n);
                a.holdout_sr = 100.0 * static_cast<double>(hok) / static_cast<double>(n);
            }
        }
    }
    return a;
}

inline json to_json(const TaskRecord& r) {
    json j;
    j["task"] = r.task_id;
    j["index"] = r.index;
    j["success"] = r.success;
    j["terminal_reason"] = r.terminal_reason;
    j["pathways"] = {{"s1", r.s1}, {"s2", r.s2}, {"verify", r.verify}};
    j["repairs"] = r.repairs;
    json fails = json::array();
    for (const auto& f : r.failures)
        fails.push_back({{"class", f.error_class}, {"op", f.op_name}, {"terminal", f.terminal}});
    j["failures"] = fails;
    j["patches"] = {{"proposed", r.patches_proposed},
                    {"escalated", r.patches_escalated},
                    {"queued", r.patches_queued},
                    {"rejected", r.patches_rejected},
                    {"value_vetoes", r.value_vetoes}};
    json commits = json::array();
    for (const auto& c : r.commits)
        commits.push_back({{"key", c.key},
                           {"class", c.error_class},
                           {"op", c.op_name},
                           {"edit_type", c.edit_type},
                           {"csr", c.csr}});
    j["commits"] = commits;
    j["rollbacks"] = r.rollbacks;
    j["budget_spent"] = r.budget_spent;
    j["fdka_seconds"] = r.fdka_seconds;
    j["signals"] = {{"u", r.final_u}, {"p_viol", r.final_p_viol}};
    return j;
}

inline TaskRecord task_record_from_json(const json& j) {
    TaskRecord r;
    r.task_id = j.at("task").get<std::string>();
    r.index = j.at("index").get<size_t>();
    r.success = j.at("success").get<bool>();
    r.terminal_reason = j.value("terminal_reason", "");
    r.s1 = j.at("pathways").value("s1", size_t{0});
    r.s2 = j.at("pathways").value("s2", size_t{0});
    r.verify = j.at("pathways").value("verify", size_t{0});
    r.repairs = j.value("repairs", size_t{0});
    for (const auto& f : j.value("failures", json::array()))
        r.failures.push_back({f.at("class").get<std::string>(),
                              f.value("op", ""), f.value("terminal", false)});
    const auto& p = j.at("patches");
    r.patches_proposed = p.value("proposed", size_t{0});
    r.patches_escalated = p.value("escalated", size_t{0});
    r.patches_queued = p.value("queued", size_t{0});
    r.patches_rejected = p.value("rejected", size_t{0});
    r.value_vetoes = p.value("value_vetoes", size_t{0});
    for (const auto& c : j.value("commits", json::array()))
        r.commits.push_back({c.at("key").get<std::string>(), c.value("class", ""),
                             c.value("op", ""), c.value("edit_type", ""),
                             c.value("csr", -1.0)});
    r.rollbacks = j.value("rollbacks", size_t{0});
    r.budget_spent = j.value("budget_spent", 0.0);
    r.fdka_seconds = j.value("fdka_seconds", 0.0);
    r.final_u = j.at("signals").value("u", 0.0);
    r.final_p_viol = j.at("signals").value("p_viol", 0.0);
    return r;
}

struct RunReport {
    std::string scenario;
    std::string config;
    uint64_t seed = 0;
    std::vector<TaskRecord> records;
    Aggregates agg;

    json to_json() const {
        json j;
        j["scenario"] = scenario;
        j["config"] = config;
        j["seed"] = seed;
        json recs = json::array();
        for (const auto& r : records) recs.push_back(opmend::to_json(r));
        j["records"] = recs;
        json t;
        for (const auto& [c, v] : agg.tta) t[c] = v.str();
        j["aggregates"] = {{"sr", agg.sr},
                           {"rfr_obs", agg.rfr_obs},
                           {"rfr_term", agg.rfr_term},
                           {"csr", agg.csr},
                           {"accepted_patches", agg.accepted_patches},
                           {"proposals", agg.proposals},
                           {"escalations", agg.escalations},
                           {"queued", agg.queued},
                           {"rollbacks", agg.rollbacks},
                           {"recovered", agg.recovered},
                           {"tta", t},
                           {"cumulative_target", agg.cumulative_target},
                           {"holdout_target_fail", agg.holdout_target_fail},
                           {"holdout_sr", agg.holdout_sr}};
        return j;
    }

    // One line per task record, then one aggregate line.
    std::string to_jsonl() const {
        std::string out;
        for (const auto& r : records) {
            json line = opmend::to_json(r);
            line["scenario"] = scenario;
            line["config"] = config;
            line["seed"] = seed;
            out += line.dump() + "\n";
        }
        json agg_line = to_json();
        agg_line.erase("records");
        agg_line["kind"] = "aggregates";
        out += agg_line.dump() + "\n";
        return out;
    }
};

inline RunReport run_one(const Scenario& scenario, const AgentConfig& cfg, uint64_t seed,
                         const std::string& ledger_path = "",
                         Proposer* proposer_override = nullptr) {
    Engine engine(scenario, cfg, seed, ledger_path, proposer_override);
    RunReport rep;
    rep.scenario = scenario.name;
    rep.config = cfg.name;
    rep.seed = seed;
    rep.records = engine.run_all();
    rep.agg = compute_aggregates(rep.records, scenario);
    return rep;
}

struct MeanStd {
    double mean = 0.0;
    double std_dev = 0.0;

    std::string str(int precision = 1) const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(precision) << mean << "+-" << std_dev;
        return os.str();
    }
};

// Population standard deviation (n in the denominator), matching the 3-seed
// table convention.
inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd m;
    if (xs.empty()) return m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    for (double x : xs) m.std_dev += (x - m.mean) * (x - m.mean);
    m.std_dev = std::sqrt(m.std_dev / static_cast<double>(xs.size()));
    return m;
}

struct SuiteResult {
    std::string scenario;
    std::string config;
    std::vector<RunReport> reports;

    std::vector<double> column(const std::function<double(const RunReport&)>& f) const {
        std::vector<double> out;
        for (const auto& r : reports) out.push_back(f(r));
        return out;
    }

    MeanStd sr() const {
        return mean_std(column([](const RunReport& r) { return r.agg.sr; }));
    }
    MeanStd rfr_term() const {
        return mean_std(column([](const RunReport& r) { return r.agg.rfr_term; }));
    }
    MeanStd patches() const {
        return mean_std(column(
            [](const RunReport& r) { return static_cast<double>(r.agg.accepted_patches); }));
    }
    MeanStd holdout_fail() const {
        return mean_std(column([](const RunReport& r) { return r.agg.holdout_target_fail; }));
    }
    MeanStd csr() const {
        return mean_std(column([](const RunReport& r) { return r.agg.csr; }));
    }
};

// Runs (seed) cells in parallel when jobs > 1; collection order is fixed by
// seed index either way, so output bytes do not depend on scheduling.
inline SuiteResult run_suite(const Scenario& scenario, const AgentConfig& cfg,
                             const std::vector<uint64_t>& seeds,
                             const std::string& ledger_dir = "", size_t jobs = 1,
                             Proposer* proposer_override = nullptr) {
    if (seeds.empty()) throw ContractViolation("run_suite needs at least one seed");
    SuiteResult out;
    out.scenario = scenario.name;
    out.config = cfg.name;
    auto path_for = [&](uint64_t seed) {
        return ledger_dir.empty() ? std::string{}
                                  : ledger_dir + "/" + scenario.name + "_" + cfg.name +
                                        "_seed" + std::to_string(seed) + ".ledger.jsonl";
    };
    if (jobs <= 1) {
        for (uint64_t s : seeds)
            out.reports.push_back(run_one(scenario, cfg, s, path_for(s), proposer_override));
        return out;
    }
    std::vector<std::future<RunReport>> futures;
    for (uint64_t s : seeds)
        futures.push_back(std::async(std::launch::async, [&, s] {
            return run_one(scenario, cfg, s, path_for(s), proposer_override);
        }));
    for (auto& f : futures) out.reports.push_back(f.get());
    return out;
}

// --- rendering ----------------------------------------------------------------

inline std::string summary_table(const std::vector<SuiteResult>& suites) {
    std::ostringstream os;
    os << std::left << std::setw(24) << "scenario" << std::setw(16) << "config"
       << std::setw(14) << "SR%" << std::setw(14) << "RFR_term" << std::setw(14) << "CSR%"
       << std::setw(12) << "patches" << std::setw(16) << "holdout_fail%" << "\n";
    os << std::string(110, '-') << "\n";
    for (const auto& s : suites) {
        auto hf = s.holdout_fail();
        auto csr = s.csr();
        os << std::left << std::setw(24) << s.scenario << std::setw(16) << s.config
           << std::setw(14) << s.sr().str() << std::setw(14) << s.rfr_term().str()
           << std::setw(14) << (csr.mean < 0 ? std::string("-") : csr.str())
           << std::setw(12) << s.patches().str()
           << std::setw(16) << (hf.mean < 0 ? std::string("-") : hf.str()) << "\n";
    }
    return os.str();
}

inline std::string summary_csv(const std::vector<SuiteResult>& suites) {
    std::ostringstream os;
    os << "scenario,config,seed,sr,rfr_obs,rfr_term,csr,accepted_patches,proposals,"
          "escalations,recovered,holdout_target_fail\n";
    for (const auto& s : suites)
        for (const auto& r : s.reports)
            os << r.scenario << "," << r.config << "," << r.seed << "," << r.agg.sr << ","
               << r.agg.rfr_obs << "," << r.agg.rfr_term << "," << r.agg.csr << ","
               << r.agg.accepted_patches << "," << r.agg.proposals << ","
               << r.agg.escalations << "," << r.agg.recovered << ","
               << r.agg.holdout_target_fail << "\n";
    return os.str();
}

// Cumulative target-class failure series: one column per seed, for plotting.
inline std::string cumulative_csv(const SuiteResult& suite) {
    std::ostringstream os;
    os << "task";
    for (const auto& r : suite.reports) os << ",seed" << r.seed;
    os << "\n";
    size_t n = 0;
    for (const auto& r : suite.reports) n = std::max(n, r.agg.cumulative_target.size());
    for (size_t i = 0; i < n; ++i) {
        os << i;
        for (const auto& r : suite.reports) {
            os << ",";
            if (i < r.agg.cumulative_target.size()) os << r.agg.cumulative_target[i];
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace opmend
