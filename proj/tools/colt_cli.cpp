#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "colt/cli.hpp"

namespace {

struct Shared {
    std::string config_path;
    std::optional<std::string> preset;
    bool force = false;
};

void add_shared(CLI::App* cmd, Shared& shared) {
    cmd->add_option("--config", shared.config_path, "run config JSON");
    cmd->add_option("--preset", shared.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_flag("--force", shared.force, "overwrite differing outputs");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"colt: continual tool learning on a small video-LLM stand-in"};
    app.require_subcommand(1);

    std::string corpus, registry, report_path;
    auto* validate = app.add_subcommand("validate", "check a JSONL corpus against the tool registry");
    validate->add_option("corpus", corpus, "JSONL corpus")->required();
    validate->add_option("--registry", registry, "registry JSON (default: built-in)");
    validate->add_option("--report", report_path, "also write violations here");
    bool validate_force = false;
    validate->add_flag("--force", validate_force, "overwrite a differing report");

    colt::SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus directory");
    synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--registry", synth.registry, "registry JSON (default: built-in)");
    synth_cmd->add_option("--tools", synth.tools, "restrict to these tools")->delimiter(',');
    synth_cmd->add_option("--per-tool", synth.per_tool, "records per tool")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--plain", synth.plain, "plain instruction records")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_flag("--force", synth.force, "overwrite differing files");

    Shared train_shared;
    std::string stage = "all";
    auto* train = app.add_subcommand("train", "run the three training stages");
    add_shared(train, train_shared);
    train->add_option("--stage", stage, "1, 2, 3 or all");

    Shared cont_shared;
    std::vector<std::string> strategies;
    std::string groups;
    auto* continual = app.add_subcommand("continual", "run the tool stream for one or more strategies");
    add_shared(continual, cont_shared);
    continual->add_option("--strategy", strategies, "joint, sequential, rehearsal:<n>, colt (repeatable)");
    continual->add_option("--groups", groups, "AxB or a groups file");

    std::string run_dir;
    bool report_force = false;
    auto* report = app.add_subcommand("report", "summarize AA/AF across strategies of a run");
    report->add_option("run_dir", run_dir, "run directory")->required();
    report->add_flag("--force", report_force, "overwrite a differing report.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return colt::cmd_validate(corpus, registry, report_path, validate_force, std::cout);
        if (synth_cmd->parsed()) {
            const auto manifest = colt::cmd_synth(synth);
            std::cout << "wrote " << synth.out_dir << " (checksum " << manifest["checksum"].get<std::string>() << ")\n";
            return colt::kExitOk;
        }
        if (train->parsed()) {
            const auto cfg = colt::load_run_config(train_shared.config_path, train_shared.preset);
            return colt::cmd_train(cfg, stage, train_shared.force, std::cout);
        }
        if (continual->parsed()) {
            auto cfg = colt::load_run_config(cont_shared.config_path, cont_shared.preset);
            if (!strategies.empty()) {
                for (const auto& s : strategies) colt::Strategy::parse(s);
                cfg.strategies = strategies;
            }
            if (!groups.empty()) cfg.groups = groups;
            colt::cmd_continual(cfg, cont_shared.force, std::cout);
            return colt::kExitOk;
        }
        if (report->parsed()) return colt::cmd_report(run_dir, report_force, std::cout, std::cerr);
    } catch (const colt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return colt::exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return colt::kExitEnvironment;
    }
    return colt::kExitDomain;
}
