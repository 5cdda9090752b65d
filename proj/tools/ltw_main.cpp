#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltw/cli.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

ltw::RunConfig resolve(const CommonArgs& args) {
    ltw::RunConfig config;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + args.config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        config = ltw::parse_config_text(ss.str());
    }
    for (const auto& assignment : args.overrides) {
        ltw::apply_override(config, assignment);
    }
    return config;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective watermarking for n-gram language models"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string in_path;

    auto* train_lm = app.add_subcommand("train-lm", "fit the n-gram model on a corpus");
    add_common(train_lm, args);
    auto* train_selector =
        app.add_subcommand("train-selector", "train the selection network");
    add_common(train_selector, args);
    auto* generate = app.add_subcommand("generate", "write watermarked generation records");
    add_common(generate, args);
    auto* detect = app.add_subcommand("detect", "score a record or token-id file");
    add_common(detect, args);
    detect->add_option("--in", in_path, "record or ids file to score")->required();
    auto* eval = app.add_subcommand("eval", "run the full metric suite");
    add_common(eval, args);
    auto* attack = app.add_subcommand("attack", "substitution-attack a generation record");
    add_common(attack, args);
    attack->add_option("--in", in_path, "record to attack")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the parse error
        return code == 0 ? 0 : 1;
    }

    try {
        const auto config = resolve(args);
        if (train_lm->parsed()) return ltw::cmd_train_lm(config, std::cout);
        if (train_selector->parsed()) return ltw::cmd_train_selector(config, std::cout);
        if (generate->parsed()) return ltw::cmd_generate(config, std::cout);
        if (detect->parsed()) return ltw::cmd_detect(config, in_path, std::cout);
        if (eval->parsed()) return ltw::cmd_eval(config, std::cout);
        if (attack->parsed()) return ltw::cmd_attack(config, in_path, std::cout);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
