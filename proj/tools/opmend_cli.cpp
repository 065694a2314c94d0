// Command-line front end: run benchmark suites, sweep ablation grids, manage
// the review queue on a persisted ledger, re-render reports, and check the
// adaptation-time bound by Monte Carlo.

#include <opmend/audit.hpp>
#include <opmend/suite.hpp>

#include <CLI11.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace opmend;

namespace {

std::vector<uint64_t> parse_seeds(const std::string& csv) {
    std::vector<uint64_t> seeds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) seeds.push_back(std::stoull(item));
    return seeds;
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

void write_suite_outputs(const SuiteResult& suite, const fs::path& dir) {
    for (const auto& rep : suite.reports) {
        fs::path p = dir / (rep.scenario + "_" + rep.config + "_seed" +
                            std::to_string(rep.seed) + ".jsonl");
        write_file(p, rep.to_jsonl());
    }
    if (!suite.reports.empty() && !suite.reports.front().agg.cumulative_target.empty())
        write_file(dir / (suite.scenario + "_" + suite.config + "_cumulative.csv"),
                   cumulative_csv(suite));
}

// Exclusive advisory lock guarding review-queue edits on a shared ledger file.
class FileLock {
public:
    explicit FileLock(const std::string& path) {
        fd_ = ::open(path.c_str(), O_RDONLY);
        if (fd_ >= 0) ::flock(fd_, LOCK_EX);
    }
    ~FileLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

private:
    int fd_ = -1;
};

int cmd_run(const std::string& scenario_arg, const std::string& configs_csv,
            const std::string& seeds_csv, const std::string& out_dir, size_t jobs) {
    Scenario scenario = load_scenario(resolve_scenario_path(scenario_arg));
    std::vector<uint64_t> seeds = parse_seeds(seeds_csv);
    fs::create_directories(out_dir);
    std::vector<SuiteResult> suites;
    for (const auto& cfg_name : split_csv(configs_csv)) {
        AgentConfig cfg = AgentConfig::preset(cfg_name);
        SuiteResult suite = run_suite(scenario, cfg, seeds, out_dir, jobs);
        write_suite_outputs(suite, out_dir);
        suites.push_back(std::move(suite));
    }
    std::string table = summary_table(suites);
    write_file(fs::path(out_dir) / "summary.txt", table);
    write_file(fs::path(out_dir) / "summary.csv", summary_csv(suites));
    std::cout << table;
    return 0;
}

int cmd_ablate(const std::string& scenarios_csv, const std::string& configs_csv,
               const std::string& seeds_csv, const std::string& out_dir, size_t jobs) {
    std::vector<uint64_t> seeds = parse_seeds(seeds_csv);
    fs::create_directories(out_dir);
    std::vector<SuiteResult> suites;
    for (const auto& sc_name : split_csv(scenarios_csv)) {
        Scenario scenario = load_scenario(resolve_scenario_path(sc_name));
        for (const auto& cfg_name : split_csv(configs_csv)) {
            SuiteResult suite =
                run_suite(scenario, AgentConfig::preset(cfg_name), seeds, out_dir, jobs);
            write_suite_outputs(suite, out_dir);
            suites.push_back(std::move(suite));
        }
    }
    std::string table = summary_table(suites);
    write_file(fs::path(out_dir) / "summary.txt", table);
    write_file(fs::path(out_dir) / "summary.csv", summary_csv(suites));
    std::cout << table;
    return 0;
}

int cmd_review(const std::string& action, const std::string& ledger_path,
               const std::string& key, const std::string& rationale) {
    FileLock lock(ledger_path);
    auto events = GovernanceLedger::load_events(ledger_path);
    GovernanceLedger ledger = GovernanceLedger::replay(events, nullptr);
    if (action == "list") {
        auto queue = ledger.review_queue();
        if (queue.empty()) {
            std::cout << "review queue empty\n";
            return 0;
        }
        for (const LedgerEntry* e : queue)
            std::cout << e->key << "  " << to_string(e->status) << "  "
                      << e->patch.summary() << "\n";
        return 0;
    }
    if (key.empty()) {
        std::cerr << "review " << action << " requires --key\n";
        return 2;
    }
    std::ofstream sink(ledger_path, std::ios::app);
    try {
        if (action == "approve") {
            LedgerEntry& e = ledger.approve(key);
            sink << ledger.events().back().dump() << "\n";
            std::cout << "approved " << key << "; entry staged for canary (rho="
                      << e.trust.rho() << ")\n";
        } else if (action == "deny") {
            LedgerEntry& e = ledger.deny(key, rationale.empty() ? "denied via cli" : rationale);
            sink << ledger.events().back().dump() << "\n";
            std::cout << "denied " << key << " (rho=" << e.trust.rho() << ")\n";
        } else {
            std::cerr << "unknown review action '" << action << "'\n";
            return 2;
        }
    } catch (const GovernanceError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
    std::vector<RunReport> reports;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
        if (entry.path().extension() != ".jsonl") continue;
        if (entry.path().filename().string().find(".ledger.") != std::string::npos) continue;
        std::ifstream in(entry.path());
        RunReport rep;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            if (j.value("kind", "") == "aggregates") {
                rep.scenario = j.at("scenario").get<std::string>();
                rep.config = j.at("config").get<std::string>();
                rep.seed = j.at("seed").get<uint64_t>();
            } else {
                rep.records.push_back(task_record_from_json(j));
            }
        }
        if (rep.records.empty()) continue;
        // Aggregates are recomputed from records; stress metadata is not
        // recoverable from a bare record stream, so holdout columns are blank.
        Scenario shell;
        shell.tasks.resize(rep.records.size());
        rep.agg = compute_aggregates(rep.records, shell);
        reports.push_back(std::move(rep));
    }
    std::sort(reports.begin(), reports.end(), [](const RunReport& a, const RunReport& b) {
        return std::tie(a.scenario, a.config, a.seed) < std::tie(b.scenario, b.config, b.seed);
    });
    std::map<std::pair<std::string, std::string>, SuiteResult> grouped;
    for (auto& r : reports) {
        auto& suite = grouped[{r.scenario, r.config}];
        suite.scenario = r.scenario;
        suite.config = r.config;
        suite.reports.push_back(std::move(r));
    }
    std::vector<SuiteResult> suites;
    for (auto& [k, s] : grouped) suites.push_back(std::move(s));
    if (format == "table") {
        std::cout << summary_table(suites);
    } else if (format == "csv") {
        std::cout << summary_csv(suites);
    } else {
        for (const auto& s : suites)
            for (const auto& r : s.reports) std::cout << r.to_json().dump() << "\n";
    }
    return 0;
}

int cmd_tta_bound(double p, double eps, double delta, size_t trials) {
    TtaBoundCheck check = tta_bound_check(p, eps, delta, trials);
    std::cout << "p_success=" << check.p_success << " bound=" << check.bound
              << " empirical_quantile=" << check.empirical_quantile << " holds="
              << (check.holds ? "yes" : "no") << "\n";
    return check.holds ? 0 : 1;
}

int cmd_audit(const std::string& spec_path) {
    AuditSpec spec = load_audit_spec(resolve_scenario_path(spec_path));
    AuditResult result = run_audit(spec);
    for (const auto& o : result.outcomes)
        std::cout << (o.match() ? "PASS " : "FAIL ") << o.label << ": expected " << o.expected
                  << ", got " << o.actual << "\n";
    std::cout << "decision accuracy " << result.matches << "/" << result.outcomes.size()
              << "; value vetoes " << result.value_vetoes << "; causal escalations "
              << result.causal_escalations << "; safe canary passes "
              << result.safe_canary_passes << "/" << result.safe_expected << "\n";
    return result.all_match() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"governed self-repair benchmark engine"};
    app.require_subcommand(1);

    std::string scenario, configs = "full", seeds = "7,13,31", out_dir = "out";
    std::string scenarios_csv, ledger_path, key, rationale, in_dir, format = "table";
    std::string review_action, audit_spec = "governance-audit-8";
    size_t jobs = 1, trials = 100000;
    double p = 0.8, eps = 0.1, delta = 0.05;

    auto* run = app.add_subcommand("run", "run a scenario suite across seeds");
    run->add_option("--scenario", scenario, "scenario name or path")->required();
    run->add_option("--config", configs, "comma-separated config presets");
    run->add_option("--seeds", seeds, "comma-separated run seeds");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--jobs", jobs, "parallel (seed) cells");

    auto* ablate = app.add_subcommand("ablate", "run a scenario x config grid");
    ablate->add_option("--scenarios", scenarios_csv, "comma-separated scenarios")->required();
    ablate->add_option("--grid", configs, "comma-separated config presets");
    ablate->add_option("--seeds", seeds, "comma-separated run seeds");
    ablate->add_option("--out", out_dir, "output directory");
    ablate->add_option("--jobs", jobs, "parallel (seed) cells");

    auto* review = app.add_subcommand("review", "inspect or resolve the human review queue");
    review->add_option("action", review_action, "list | approve | deny")->required();
    review->add_option("--ledger", ledger_path, "ledger event-log file")->required();
    review->add_option("--key", key, "edit key");
    review->add_option("--rationale", rationale, "denial rationale");

    auto* report = app.add_subcommand("report", "re-render reports from task records");
    report->add_option("--in", in_dir, "directory of .jsonl record files")->required();
    report->add_option("--format", format, "table | csv | jsonl");

    auto* tta = app.add_subcommand("tta-bound", "Monte Carlo check of the adaptation bound");
    tta->add_option("--p", p, "detection probability");
    tta->add_option("--eps", eps, "false-positive filter rate");
    tta->add_option("--delta", delta, "tail probability");
    tta->add_option("--trials", trials, "sample count");

    auto* audit = app.add_subcommand("audit", "run the synthetic governance audit");
    audit->add_option("--spec", audit_spec, "audit spec name or path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(scenario, configs, seeds, out_dir, jobs);
        if (ablate->parsed()) return cmd_ablate(scenarios_csv, configs, seeds, out_dir, jobs);
        if (review->parsed()) return cmd_review(review_action, ledger_path, key, rationale);
        if (report->parsed()) return cmd_report(in_dir, format);
        if (tta->parsed()) return cmd_tta_bound(p, eps, delta, trials);
        if (audit->parsed()) return cmd_audit(audit_spec);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
