// paradiff: paraphrase-conditioned diffusion pipeline driver.

#include "paradiff/errors.hpp"
#include "paradiff/pipeline.hpp"
#include "paradiff/version.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <functional>
#include <iostream>
#include <map>

namespace {

enum ExitCode { ok = 0, usage = 2, dependency = 3, runtime = 4 };

struct Options {
    std::string config;
    std::string work_dir = "work";
    std::vector<std::string> overrides;
    bool force = false;
    bool quiet = false;
};

paradiff::RunConfig resolve(const Options& o) {
    paradiff::Json doc = paradiff::Json::object();
    if (!o.config.empty()) {
        try {
            doc = paradiff::Json::parse(paradiff::read_text_file(o.config));
        } catch (const paradiff::Json::parse_error& e) {
            throw paradiff::ConfigError(o.config + ": " + e.what());
        }
    }
    for (const auto& s : o.overrides) paradiff::apply_override(doc, s);
    return paradiff::run_config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Paraphrase-conditioned text diffusion with gradient-guided style transfer"};
    app.set_version_flag("--version", std::string(paradiff::version()) + " (" + std::string(paradiff::git_describe()) + ")");
    app.require_subcommand(1);
    Options opt;

    using Stage = std::function<void(const paradiff::RunConfig&, const paradiff::WorkLayout&, const paradiff::StageOptions&)>;
    const std::vector<std::tuple<std::string, std::string, Stage>> stages{
        {"gen-corpus", "Generate the toy style corpus", [](auto& c, auto& w, auto& s) { paradiff::run_gen_corpus(c, w, s); }},
        {"build-pairs", "Paraphrase every corpus text", [](auto& c, auto& w, auto& s) { paradiff::run_build_pairs(c, w, s); }},
        {"train", "Train the denoiser", [](auto& c, auto& w, auto& s) { paradiff::run_train(c, w, s); }},
        {"train-classifier", "Train internal/external attribute classifiers and the fluency scorer",
         [](auto& c, auto& w, auto& s) { paradiff::run_train_classifier(c, w, s); }},
        {"train-embedder", "Train internal/external style embedders",
         [](auto& c, auto& w, auto& s) { paradiff::run_train_embedder(c, w, s); }},
        {"transfer", "Run guided style transfer on the evaluation requests",
         [](auto& c, auto& w, auto& s) { paradiff::run_transfer(c, w, s); }},
        {"evaluate", "Score the transfer records", [](auto& c, auto& w, auto& s) { paradiff::run_evaluate(c, w, s); }},
        {"sweep", "Transfer and evaluate over eval.lambdas", [](auto& c, auto& w, auto& s) { paradiff::run_sweep(c, w, s); }},
    };

    std::map<std::string, Stage> by_name;
    for (const auto& [name, help, fn] : stages) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("-w,--work-dir", opt.work_dir, "Directory holding all stage outputs")->capture_default_str();
        sub->add_option("-s,--set", opt.overrides, "Override a config value: key.path=value (repeatable)");
        sub->add_flag("-f,--force", opt.force, "Overwrite a completed stage");
        sub->add_flag("-q,--quiet", opt.quiet, "Only log warnings and errors");
        by_name[name] = fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ExitCode::ok : ExitCode::usage;
    }
    if (opt.quiet) spdlog::set_level(spdlog::level::warn);

    try {
        const paradiff::RunConfig cfg = resolve(opt);
        const std::string name = app.get_subcommands().front()->get_name();
        by_name.at(name)(cfg, paradiff::WorkLayout{opt.work_dir}, paradiff::StageOptions{opt.force});
        return ExitCode::ok;
    } catch (const paradiff::ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return ExitCode::usage;
    } catch (const paradiff::DependencyError& e) {
        spdlog::error("dependency: {}", e.what());
        return ExitCode::dependency;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return ExitCode::runtime;
    }
}
