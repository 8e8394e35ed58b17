#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "roughskew/harness.hpp"
#include "roughskew/validate.hpp"

namespace {

void print_report(const roughskew::harness::RunReport& rep) {
    std::cout << "command = " << rep.command << "\n";
    for (const auto& line : rep.info) std::cout << line << "\n";
    for (const auto& c : rep.checks)
        std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << "\n";
    std::cout << "overall = " << (rep.all_passed() ? "PASS" : "FAIL") << "\n";
    if (!rep.out_dir.empty()) std::cout << "outputs in " << rep.out_dir << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation laboratory for short-maturity implied-volatility skew"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string level = "quick";
    bool mutate = false;

    app.add_option("--config", config_path, "configuration file of 'key = value' lines");
    auto* seed_opt = app.add_option("--seed", seed, "override mc.seed");
    auto* out_opt = app.add_option("--out", out_dir, "override output.dir");
    auto* thr_opt =
        app.add_option("--threads", threads,
                       "worker threads (0: use ROUGHSKEW_THREADS or run single-threaded)");

    auto* sub_sts = app.add_subcommand("skew-term-structure",
                                       "sweep maturities, fit the skew power law");
    auto* sub_val = app.add_subcommand("validate", "run the self-check battery");
    sub_val->add_option("--level", level, "quick (deterministic) or full (statistical)")
        ->check(CLI::IsMember({"quick", "full"}));
    sub_val->add_flag("--mutate-alpha-sign", mutate,
                      "flip the skew-correction sign on purpose; proves the consistency "
                      "check has teeth");
    auto* sub_dyn = app.add_subcommand(
        "dynamic-consistency", "restart from a serialized state; exponent and law must persist");
    auto* sub_fbm = app.add_subcommand("simulate-fbm", "dump driver paths and state snapshots");
    auto* sub_price = app.add_subcommand("price", "one Monte Carlo put quote with implied vol");

    CLI11_PARSE(app, argc, argv);

    try {
        roughskew::harness::KvConfig kv;
        if (!config_path.empty()) kv = roughskew::harness::KvConfig::parse_file(config_path);
        if (seed_opt->count() > 0) kv.set("mc.seed", std::to_string(seed));
        if (out_opt->count() > 0) kv.set("output.dir", out_dir);
        if (thr_opt->count() > 0) kv.set("run.threads", std::to_string(threads));

        roughskew::harness::RunReport rep;
        if (*sub_sts) {
            rep = roughskew::harness::cmd_skew_term_structure(kv);
        } else if (*sub_val) {
            const auto lvl = level == "full" ? roughskew::harness::ValidateLevel::full
                                             : roughskew::harness::ValidateLevel::quick;
            rep = roughskew::harness::cmd_validate(kv, lvl, mutate);
        } else if (*sub_dyn) {
            rep = roughskew::harness::cmd_dynamic_consistency(kv);
        } else if (*sub_fbm) {
            rep = roughskew::harness::cmd_simulate_fbm(kv);
        } else if (*sub_price) {
            rep = roughskew::harness::cmd_price(kv);
        }
        print_report(rep);
        return rep.all_passed() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
