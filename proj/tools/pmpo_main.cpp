// pmpo: loss-guided prompt optimization from the command line.
//
// Subcommands:
//   optimize      full refinement run into a run directory
//   score         batch loss of one prompt on one dataset
//   mask-analyze  per-unit loss deltas for one prompt
//   split         seeded train/holdout split of a JSONL dataset
//   report        regenerate report.csv / report.json from a run directory

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pmpo/cache.hpp"
#include "pmpo/dataset_io.hpp"
#include "pmpo/http_backend.hpp"
#include "pmpo/masking.hpp"
#include "pmpo/metrics.hpp"
#include "pmpo/ngram.hpp"
#include "pmpo/optimizer.hpp"
#include "pmpo/run_io.hpp"
#include "pmpo/scripted.hpp"
#include "pmpo/util.hpp"

namespace {

using namespace pmpo;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CliUsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::FileNotFound, "cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

nlohmann::json load_config_json(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw CliUsageError("config file " + path + " is not valid JSON: " + e.what());
    }
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.top_k = j.value("top_k", c.top_k);
    c.variants_per_sample = j.value("variants_per_sample", c.variants_per_sample);
    c.beta = j.value("beta", c.beta);
    c.neutral_epsilon_fraction = j.value("neutral_epsilon_fraction", c.neutral_epsilon_fraction);
    if (j.contains("sampling")) {
        const auto& s = j["sampling"];
        c.sampling.temperature = s.value("temperature", c.sampling.temperature);
        c.sampling.top_p = s.value("top_p", c.sampling.top_p);
        c.sampling.max_tokens = s.value("max_tokens", c.sampling.max_tokens);
    }
    if (j.contains("rewrite_template")) {
        const std::string t = j["rewrite_template"].get<std::string>();
        if (t != "large" && t != "small") throw CliUsageError("rewrite_template must be large|small");
        c.rewrite_template = t == "large" ? RewriteTemplateKind::large : RewriteTemplateKind::small;
    }
    if (j.contains("loss_normalization")) {
        const std::string n = j["loss_normalization"].get<std::string>();
        if (n != "sum" && n != "per_token_mean") {
            throw CliUsageError("loss_normalization must be sum|per_token_mean");
        }
        c.loss_normalization =
            n == "sum" ? LossNormalization::sum : LossNormalization::per_token_mean;
    }
    c.max_parse_retries = j.value("max_parse_retries", c.max_parse_retries);
    c.seed = j.value("seed", c.seed);
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    c.enable_tim = j.value("enable_tim", c.enable_tim);
    c.enable_bca = j.value("enable_bca", c.enable_bca);
    c.enable_prefloss = j.value("enable_prefloss", c.enable_prefloss);
    return c;
}

struct BackendArgs {
    std::string scorer_kind;     // ngram | http
    std::string generator_kind;  // scripted | http | none
    std::string corpus_path;
    int ngram_order = 3;
    std::string script_path;
};

std::shared_ptr<ScorerBackend> build_scorer(const BackendArgs& args,
                                            const nlohmann::json& config_json) {
    if (args.scorer_kind == "ngram") {
        if (args.corpus_path.empty()) {
            throw CliUsageError("--backend ngram requires --corpus <file>");
        }
        NGramModel model = NGramModel::train(read_text_file(args.corpus_path), args.ngram_order);
        return std::make_shared<CachingScorer>(std::make_shared<NGramScorer>(std::move(model)));
    }
    if (args.scorer_kind == "http") {
        HttpBackendConfig http = config_json.contains("http")
                                     ? HttpBackendConfig::from_json(config_json["http"])
                                     : HttpBackendConfig{};
        http.apply_env_overrides();
        if (http.endpoint.empty()) {
            throw CliUsageError("http backend needs an endpoint (config file or PMPO_ENDPOINT)");
        }
        return std::make_shared<CachingScorer>(std::make_shared<HttpScorer>(std::move(http)));
    }
    throw CliUsageError("unknown scorer backend '" + args.scorer_kind + "' (ngram|http)");
}

std::vector<std::string> load_script(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw CliUsageError("script file " + path + " is not valid JSON: " + e.what());
    }
    if (j.is_object() && j.contains("responses")) j = j["responses"];
    if (!j.is_array()) throw CliUsageError("script file must be a JSON array of strings");
    std::vector<std::string> responses;
    for (const auto& r : j) {
        if (!r.is_string()) throw CliUsageError("script entries must be strings");
        responses.push_back(r.get<std::string>());
    }
    return responses;
}

std::shared_ptr<GeneratorBackend> build_generator(const BackendArgs& args,
                                                  const nlohmann::json& config_json) {
    if (args.generator_kind == "scripted") {
        if (args.script_path.empty()) {
            throw CliUsageError("--generator scripted requires --script <file>");
        }
        return std::make_shared<ScriptedGenerator>(load_script(args.script_path));
    }
    if (args.generator_kind == "http") {
        HttpBackendConfig http = config_json.contains("http")
                                     ? HttpBackendConfig::from_json(config_json["http"])
                                     : HttpBackendConfig{};
        http.apply_env_overrides();
        if (http.endpoint.empty()) {
            throw CliUsageError("http generator needs an endpoint (config file or PMPO_ENDPOINT)");
        }
        return std::make_shared<HttpGenerator>(std::move(http));
    }
    throw CliUsageError("unknown generator backend '" + args.generator_kind +
                        "' (scripted|http)");
}

Prompt load_prompt(const std::string& path) {
    return Prompt::make(trim_trailing(read_text_file(path)), "initial");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PMPO: loss-guided prompt optimization"};
    app.require_subcommand(1);

    std::string config_path, data_path, prompt_path, out_path, run_path;
    BackendArgs backend_args;
    uint64_t seed = 0;
    bool seed_set = false;
    bool tim = true, bca = true, prefloss = true;
    std::string template_kind;
    double fraction = 0.2;
    std::size_t cap = 50;

    auto add_backend_flags = [&](CLI::App* cmd, bool with_generator) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--backend", backend_args.scorer_kind, "scorer backend (ngram|http)")
            ->default_val("ngram");
        cmd->add_option("--corpus", backend_args.corpus_path, "training corpus for --backend ngram");
        cmd->add_option("--order", backend_args.ngram_order, "n-gram order")->default_val(3);
        if (with_generator) {
            cmd->add_option("--generator", backend_args.generator_kind,
                            "generator backend (scripted|http)")
                ->default_val("scripted");
            cmd->add_option("--script", backend_args.script_path,
                            "response queue for --generator scripted");
        }
    };

    CLI::App* optimize_cmd = app.add_subcommand("optimize", "run the full optimization loop");
    optimize_cmd->add_option("--data", data_path, "dataset JSONL")->required();
    optimize_cmd->add_option("--prompt", prompt_path, "initial prompt text file")->required();
    optimize_cmd->add_option("--out", out_path, "run directory")->required();
    add_backend_flags(optimize_cmd, true);
    optimize_cmd->add_option("--seed", seed, "run seed")->each([&](const std::string&) {
        seed_set = true;
    });
    optimize_cmd->add_flag("--toggle-tim,!--no-tim", tim, "token-importance masking");
    optimize_cmd->add_flag("--toggle-bca,!--no-bca", bca, "hard-example (bad case) analysis");
    optimize_cmd->add_flag("--toggle-prefloss,!--no-prefloss", prefloss, "preference-loss selection");
    optimize_cmd->add_option("--template", template_kind, "rewrite template (large|small)");

    CLI::App* score_cmd = app.add_subcommand("score", "score one prompt against a dataset");
    score_cmd->add_option("--data", data_path, "dataset JSONL")->required();
    score_cmd->add_option("--prompt", prompt_path, "prompt text file")->required();
    add_backend_flags(score_cmd, false);

    CLI::App* mask_cmd = app.add_subcommand("mask-analyze", "per-unit loss deltas for one prompt");
    mask_cmd->add_option("--data", data_path, "dataset JSONL")->required();
    mask_cmd->add_option("--prompt", prompt_path, "prompt text file")->required();
    mask_cmd->add_option("--out", out_path, "write the mask report JSON here (default stdout)");
    add_backend_flags(mask_cmd, true);
    mask_cmd->get_option("--generator")->default_val("none");
    mask_cmd->add_option("--seed", seed, "segmentation seed")->each([&](const std::string&) {
        seed_set = true;
    });

    CLI::App* split_cmd = app.add_subcommand("split", "seeded train/holdout split");
    split_cmd->add_option("--data", data_path, "dataset JSONL")->required();
    split_cmd->add_option("--out", out_path, "output directory")->required();
    split_cmd->add_option("--fraction", fraction, "training fraction")->default_val(0.2);
    split_cmd->add_option("--cap", cap, "training size cap")->default_val(50);
    split_cmd->add_option("--seed", seed, "shuffle seed");

    CLI::App* report_cmd = app.add_subcommand("report", "regenerate reports from a run directory");
    report_cmd->add_option("--run", run_path, "run directory with history.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        const nlohmann::json config_json = load_config_json(config_path);

        if (optimize_cmd->parsed()) {
            RunConfig config = run_config_from_json(config_json);
            if (seed_set) config.seed = seed;
            config.enable_tim = tim;
            config.enable_bca = bca;
            config.enable_prefloss = prefloss;
            if (!template_kind.empty()) {
                if (template_kind != "large" && template_kind != "small") {
                    throw CliUsageError("--template must be large or small");
                }
                config.rewrite_template = template_kind == "large" ? RewriteTemplateKind::large
                                                                   : RewriteTemplateKind::small;
            }
            config.validate();

            RenderTemplate tmpl;
            if (config_json.contains("render_context_format")) {
                tmpl.context_format = config_json["render_context_format"].get<std::string>();
            }

            Backends backends;
            backends.scorer = build_scorer(backend_args, config_json);
            backends.generator = build_generator(backend_args, config_json);

            const Dataset dataset = load_dataset(data_path);
            const Prompt initial = load_prompt(prompt_path);

            RunDirectoryWriter sink{std::filesystem::path(out_path)};
            const RunResult result = optimize(dataset, initial, backends, config, tmpl, &sink);
            emit_report(result, sink.dir());

            if (!result.best_loss) {
                // every iteration failed before scoring anything; the run
                // directory still holds the failure records
                std::cerr << "error: no iteration produced a loss ("
                          << (result.history.empty() || !result.history.front().error
                                  ? "unknown failure"
                                  : *result.history.front().error)
                          << ")\n";
                return kExitRuntime;
            }
            std::cout << "best_loss " << format_fixed_half_even(*result.best_loss, 6) << "\n";
            std::cout << "best_prompt_id " << result.best_prompt.id << "\n";
            std::cout << "run_dir " << sink.dir().string() << "\n";
            return kExitOk;
        }

        if (score_cmd->parsed()) {
            RunConfig config = run_config_from_json(config_json);
            config.validate();
            RenderTemplate tmpl;
            if (config_json.contains("render_context_format")) {
                tmpl.context_format = config_json["render_context_format"].get<std::string>();
            }
            auto scorer = build_scorer(backend_args, config_json);
            const Dataset dataset = load_dataset(data_path);
            const Prompt prompt = load_prompt(prompt_path);
            const LossReport report = objective(*scorer, prompt, dataset, config, tmpl);
            std::cout << "batch_loss " << format_fixed_half_even(report.batch, 6) << "\n";
            return kExitOk;
        }

        if (mask_cmd->parsed()) {
            RunConfig config = run_config_from_json(config_json);
            if (seed_set) config.seed = seed;
            config.validate();
            RenderTemplate tmpl;
            if (config_json.contains("render_context_format")) {
                tmpl.context_format = config_json["render_context_format"].get<std::string>();
            }
            auto scorer = build_scorer(backend_args, config_json);
            const Dataset dataset = load_dataset(data_path);
            const Prompt prompt = load_prompt(prompt_path);

            SegmentedPrompt segmented;
            SegmentationSource source = SegmentationSource::fallback;
            if (backend_args.generator_kind != "none") {
                auto generator = build_generator(backend_args, config_json);
                SegmentationOutcome outcome =
                    segment_with_retries(prompt, *generator, config, config.seed);
                segmented = outcome.segmented;
                source = outcome.source;
            } else {
                segmented = fallback_segmentation(prompt);
            }
            MaskReport report = mask_deltas(segmented, dataset, *scorer, config, tmpl);
            report.source = source;

            const std::string payload = report.to_json().dump(2) + "\n";
            if (out_path.empty()) {
                std::cout << payload;
            } else {
                std::ofstream out(out_path, std::ios::binary);
                if (!out) throw Error(Errc::IoFailure, "cannot write " + out_path);
                out << payload;
            }
            return kExitOk;
        }

        if (split_cmd->parsed()) {
            SplitSpec spec{fraction, cap, seed};
            const Dataset dataset = load_dataset(data_path);
            auto [train, holdout] = split_dataset(dataset, spec);
            std::filesystem::create_directories(out_path);
            save_dataset(train, std::filesystem::path(out_path) / "train.jsonl");
            save_dataset(holdout, std::filesystem::path(out_path) / "holdout.jsonl");
            std::cout << "train " << train.size() << "\n";
            std::cout << "holdout " << holdout.size() << "\n";
            return kExitOk;
        }

        if (report_cmd->parsed()) {
            emit_report_from_run_dir(run_path);
            std::cout << "reports written to " << run_path << "\n";
            return kExitOk;
        }

        return kExitUsage;
    } catch (const CliUsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::InvalidConfig ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
