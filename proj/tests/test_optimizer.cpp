#include <cmath>
#include <cstdio>
#include <limits>

#include "counting.hpp"
#include "doctest.h"
#include "oracle.hpp"
#include "pmpo/cache.hpp"
#include "pmpo/ngram.hpp"
#include "pmpo/optimizer.hpp"
#include "pmpo/scripted.hpp"

using namespace pmpo;

namespace {

CandidateRecord cand(const std::string& id, const std::string& text, double loss, int iter,
                     int order) {
    CandidateRecord c;
    c.prompt = Prompt::make(text, id);
    c.loss = loss;
    c.evaluated_at_iteration = iter;
    c.variant_order = order;
    return c;
}

// Shared synthetic landscape: outputs start with a marker sentence; prompts
// whose tail matches more of the reference prompt score strictly better
// (windows reach into the prompt tail because the input is short).
struct MarkerScenario {
    static constexpr int kOrder = 12;
    std::string reference = "Reply: All clear.";
    std::string corpus;
    Dataset dataset;

    MarkerScenario(int n_examples = 20) {
        const std::string rendered_prefix = "Reply: All clear.\n\nq\nAll clear. item00 fine\n";
        for (int i = 0; i < 3; ++i) corpus += rendered_prefix;
        dataset.kind = DatasetKind::supervised;
        dataset.task_description = "always acknowledge";
        for (int i = 1; i <= n_examples; ++i) {
            char num[8];
            std::snprintf(num, sizeof(num), "%02d", i);
            dataset.examples.push_back(
                {"ex" + std::string(num), "q", "All clear. item" + std::string(num) + " ok", 1.0});
        }
    }

    double oracle_batch(const std::string& prompt_text) const {
        oracle::NGramOracle ora = oracle::NGramOracle::build(corpus, kOrder);
        std::vector<double> losses;
        for (const Example& ex : dataset.examples) {
            losses.push_back(ora.ce_sum(oracle::render_context(prompt_text, ex.input), ex.output));
        }
        return oracle::mean(losses);
    }

    std::shared_ptr<ScorerBackend> scorer() const {
        return std::make_shared<NGramScorer>(NGramModel::train(corpus, kOrder));
    }
};

std::string tagged(const std::string& text) { return "<prompt>" + text + "</prompt>"; }

}  // namespace

TEST_CASE("select_best picks the strict minimum") {
    CandidateRecord incumbent = cand("inc", "I", 2.0, 0, 0);
    std::vector<CandidateRecord> pool{incumbent, cand("a", "A", 1.5, 1, 0),
                                      cand("b", "B", 1.8, 1, 1)};
    auto [winner, accepted] = select_best(pool, incumbent);
    CHECK(accepted);
    CHECK(winner.prompt.id == "a");
}

TEST_CASE("select_best rejects exact ties with the incumbent") {
    CandidateRecord incumbent = cand("inc", "I", 2.0, 0, 0);
    std::vector<CandidateRecord> pool{incumbent, cand("a", "A", 2.0, 1, 0)};
    auto [winner, accepted] = select_best(pool, incumbent);
    CHECK_FALSE(accepted);
    CHECK(winner.prompt.id == "inc");
}

TEST_CASE("select_best breaks candidate ties by generation order") {
    CandidateRecord incumbent = cand("inc", "I", 2.0, 0, 0);
    std::vector<CandidateRecord> pool{incumbent, cand("late", "L", 1.5, 1, 3),
                                      cand("early", "E", 1.5, 1, 1)};
    auto [winner, accepted] = select_best(pool, incumbent);
    CHECK(accepted);
    CHECK(winner.prompt.id == "early");

    // earlier iteration outranks variant order
    std::vector<CandidateRecord> cross{incumbent, cand("old", "O", 1.5, 1, 5),
                                       cand("new", "N", 1.5, 2, 0)};
    auto [w2, a2] = select_best(cross, incumbent);
    CHECK(a2);
    CHECK(w2.prompt.id == "old");
}

TEST_CASE("select_best rejects an empty pool") {
    CandidateRecord incumbent = cand("inc", "I", 2.0, 0, 0);
    CHECK_THROWS_AS(select_best({}, incumbent), Error);
}

TEST_CASE("pick_hard_indices is loss-ranked with BCA and seed-driven without") {
    LossReport report;
    report.per_record = {{"a", 1.0}, {"b", 9.0}, {"c", 5.0}, {"d", 3.0}};
    LossReport permuted;
    permuted.per_record = {{"a", 9.0}, {"b", 3.0}, {"c", 1.0}, {"d", 5.0}};

    RunConfig config;
    config.top_k = 2;
    config.seed = 11;

    auto ranked = pick_hard_indices(report, config, 1);
    CHECK(ranked == std::vector<std::size_t>{1, 2});
    CHECK(pick_hard_indices(permuted, config, 1) != ranked);  // loss-dependent

    config.enable_bca = false;
    auto uniform = pick_hard_indices(report, config, 1);
    CHECK(pick_hard_indices(permuted, config, 1) == uniform);  // loss-independent
    CHECK(uniform.size() == 2);
    // different iterations draw different samples, same seed reproduces
    RunConfig same = config;
    CHECK(pick_hard_indices(report, same, 1) == uniform);
}

TEST_CASE("optimize with an empty rewrite script keeps the initial prompt") {
    MarkerScenario scenario(4);
    Backends backends{scenario.scorer(), std::make_shared<ScriptedGenerator>(
                                             std::vector<std::string>{})};
    RunConfig config;
    config.max_iterations = 3;
    config.top_k = 2;
    config.variants_per_sample = 2;
    config.enable_tim = false;
    config.seed = 5;

    Prompt initial = Prompt::make("Let's think step by step", "initial");
    RunResult result = optimize(scenario.dataset, initial, backends, config);

    CHECK(result.history.size() == 3);
    for (const auto& rec : result.history) {
        CHECK_FALSE(rec.accepted);
        CHECK(rec.incumbent_after == "initial");
        CHECK(rec.error.has_value());
    }
    CHECK(result.best_prompt.id == "initial");
    CHECK(result.best_prompt.text == initial.text);
    REQUIRE(result.best_loss.has_value());
    CHECK(*result.best_loss == doctest::Approx(scenario.oracle_batch(initial.text)).epsilon(1e-9));
}

TEST_CASE("optimize rejects invalid configs and empty datasets") {
    MarkerScenario scenario(2);
    Backends backends{scenario.scorer(),
                      std::make_shared<ScriptedGenerator>(std::vector<std::string>{})};
    Prompt initial = Prompt::make("p", "initial");

    RunConfig zero;
    zero.max_iterations = 0;
    CHECK_THROWS_AS(optimize(scenario.dataset, initial, backends, zero), Error);

    RunConfig ok;
    Dataset empty;
    CHECK_THROWS_AS(optimize(empty, initial, backends, ok), Error);
}

TEST_CASE("a strictly better scripted variant is accepted, worse ones are not") {
    MarkerScenario scenario(6);
    const std::string good = scenario.reference;
    const std::string initial_text = "Let's think step by step";
    const double loss_initial = scenario.oracle_batch(initial_text);
    const double loss_good = scenario.oracle_batch(good);
    REQUIRE(loss_good < loss_initial);

    RunConfig config;
    config.max_iterations = 1;
    config.top_k = 1;
    config.variants_per_sample = 2;
    config.enable_tim = false;
    config.seed = 3;

    SUBCASE("better variant switches the incumbent") {
        Backends backends{scenario.scorer(),
                          std::make_shared<ScriptedGenerator>(std::vector<std::string>{
                              tagged("decoy one"), tagged(good)})};
        RunResult result =
            optimize(scenario.dataset, Prompt::make(initial_text, "initial"), backends, config);
        REQUIRE(result.history.size() == 1);
        CHECK(result.history[0].accepted);
        CHECK(result.best_prompt.text == good);
        CHECK(*result.best_loss == doctest::Approx(loss_good).epsilon(1e-9));
    }

    SUBCASE("all-worse variants leave the incumbent unchanged") {
        Backends backends{scenario.scorer(),
                          std::make_shared<ScriptedGenerator>(std::vector<std::string>{
                              tagged("decoy one"), tagged("decoy two")})};
        RunResult result =
            optimize(scenario.dataset, Prompt::make(initial_text, "initial"), backends, config);
        REQUIRE(result.history.size() == 1);
        CHECK_FALSE(result.history[0].accepted);
        CHECK(result.best_prompt.text == initial_text);
    }
}

TEST_CASE("incumbent loss sequence is non-increasing across a staged run") {
    MarkerScenario scenario(8);
    const std::string p_weak = "Finish with r.";     // tail matches 2 reference chars
    const std::string p_mid = "End on lear.";        // tail matches 5
    const std::string p_full = scenario.reference;   // full match
    const std::string initial_text = "Let's think step by step";

    const double l0 = scenario.oracle_batch(initial_text);
    const double l1 = scenario.oracle_batch(p_weak);
    const double l2 = scenario.oracle_batch(p_mid);
    const double l3 = scenario.oracle_batch(p_full);
    REQUIRE(l1 < l0);
    REQUIRE(l2 < l1);
    REQUIRE(l3 < l2);

    RunConfig config;
    config.max_iterations = 8;
    config.top_k = 2;
    config.variants_per_sample = 2;
    config.max_parse_retries = 2;
    config.enable_tim = true;
    config.seed = 17;

    // per iteration: 3 failed segmentation attempts (fallback) + 4 rewrites
    auto build_script = [&]() {
        std::vector<std::string> script;
        for (int t = 1; t <= config.max_iterations; ++t) {
            for (int s = 0; s < 3; ++s) script.push_back("seg noise " + std::to_string(t));
            for (int v = 0; v < 4; ++v) {
                std::string text = "noise t" + std::to_string(t) + " v" + std::to_string(v);
                if (t == 2 && v == 0) text = p_weak;
                if (t == 4 && v == 1) text = p_mid;
                if (t == 6 && v == 3) text = p_full;
                script.push_back(tagged(text));
            }
        }
        return script;
    };

    Backends backends{scenario.scorer(), std::make_shared<ScriptedGenerator>(build_script())};
    RunResult result =
        optimize(scenario.dataset, Prompt::make(initial_text, "initial"), backends, config);

    REQUIRE(result.history.size() == 8);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& rec : result.history) {
        REQUIRE(rec.incumbent_loss_before.has_value());
        CHECK(*rec.incumbent_loss_before <= prev);
        prev = *rec.incumbent_loss_before;
        CHECK(rec.mask_report_ref.has_value() == false);  // no sink attached
    }
    CHECK(result.history[1].accepted);
    CHECK(result.history[3].accepted);
    CHECK(result.history[5].accepted);
    CHECK_FALSE(result.history[0].accepted);
    CHECK_FALSE(result.history[7].accepted);
    CHECK(result.best_prompt.text == p_full);
    CHECK(*result.best_loss == doctest::Approx(l3).epsilon(1e-9));
}

TEST_CASE("optimize is a pure function of dataset, prompt, config, and script") {
    MarkerScenario scenario(5);
    RunConfig config;
    config.max_iterations = 4;
    config.top_k = 2;
    config.variants_per_sample = 2;
    config.enable_tim = true;
    config.seed = 23;

    auto run = [&]() {
        std::vector<std::string> script;
        for (int t = 1; t <= 4; ++t) {
            for (int s = 0; s < 3; ++s) script.push_back("junk");
            for (int v = 0; v < 4; ++v) {
                script.push_back(tagged("cand t" + std::to_string(t) + " v" + std::to_string(v)));
            }
        }
        script[3 + 1] = tagged(scenario.reference);  // iteration 1, second rewrite
        Backends backends{scenario.scorer(), std::make_shared<ScriptedGenerator>(script)};
        return optimize(scenario.dataset, Prompt::make("Let's think step by step", "initial"),
                        backends, config)
            .to_json()
            .dump();
    };
    CHECK(run() == run());
}

TEST_CASE("pool members never share prompt text within an iteration") {
    MarkerScenario scenario(4);
    RunConfig config;
    config.max_iterations = 1;
    config.top_k = 2;
    config.variants_per_sample = 2;
    config.enable_tim = false;
    config.seed = 9;

    // duplicates: same text twice and one equal to the incumbent
    const std::string initial_text = "Let's think step by step";
    Backends backends{scenario.scorer(),
                      std::make_shared<ScriptedGenerator>(std::vector<std::string>{
                          tagged("dup"), tagged("dup"), tagged(initial_text), tagged("other")})};
    RunResult result =
        optimize(scenario.dataset, Prompt::make(initial_text, "initial"), backends, config);

    REQUIRE(result.history.size() == 1);
    CHECK(result.history[0].num_variants_generated == 4);
    CHECK(result.history[0].num_variants_evaluated == 2);  // dup + other
}

TEST_CASE("backend failure mid-run yields a failed record and the loop continues") {
    MarkerScenario scenario(4);
    RunConfig config;
    config.max_iterations = 2;
    config.top_k = 1;
    config.variants_per_sample = 1;
    config.enable_tim = false;
    config.seed = 2;

    // only iteration 1 has a response; iteration 2 starves
    Backends backends{scenario.scorer(), std::make_shared<ScriptedGenerator>(
                                             std::vector<std::string>{tagged("worse cand")})};
    RunResult result = optimize(scenario.dataset, Prompt::make("Let's think step by step", "initial"),
                                backends, config);
    REQUIRE(result.history.size() == 2);
    CHECK_FALSE(result.history[0].accepted);
    CHECK_FALSE(result.history[0].error.has_value());
    CHECK(result.history[1].error.has_value());
    CHECK(result.history[1].incumbent_after == "initial");
}

namespace {

// Fails segmentation requests at the transport level, delegates the rest.
class SegmentationDeadGenerator : public GeneratorBackend {
  public:
    explicit SegmentationDeadGenerator(std::shared_ptr<GeneratorBackend> inner)
        : inner_(std::move(inner)) {}
    const std::string& name() const override { return inner_->name(); }
    std::string generate(const std::string& prompt_text, const SamplingParams& params,
                         uint64_t seed) override {
        if (prompt_text.find("masked segments") != std::string::npos) {
            throw Error(Errc::BackendUnavailable, "segmentation endpoint down");
        }
        return inner_->generate(prompt_text, params, seed);
    }

  private:
    std::shared_ptr<GeneratorBackend> inner_;
};

}  // namespace

TEST_CASE("segmentation transport failure skips the mask report but not the iteration") {
    MarkerScenario scenario(5);
    RunConfig config;
    config.max_iterations = 1;
    config.top_k = 1;
    config.variants_per_sample = 2;
    config.enable_tim = true;  // analysis requested but its transport is dead
    config.seed = 8;

    auto gen = std::make_shared<SegmentationDeadGenerator>(std::make_shared<ScriptedGenerator>(
        std::vector<std::string>{tagged(scenario.reference), tagged("decoy")}));
    RunResult result = optimize(scenario.dataset,
                                Prompt::make("Let's think step by step", "initial"),
                                Backends{scenario.scorer(), gen}, config);

    const IterationRecord& rec = result.history.at(0);
    CHECK_FALSE(rec.mask_report_ref.has_value());
    CHECK_FALSE(rec.error.has_value());  // the iteration itself still ran
    CHECK(rec.accepted);                 // rewriting worked without the analysis
    CHECK(result.best_prompt.text == scenario.reference);
}

TEST_CASE("ablation toggles change exactly the accounted backend traffic") {
    MarkerScenario scenario(6);

    SUBCASE("TIM off: no segmentation requests, no masked-context scoring") {
        auto scorer = std::make_shared<testutil::CountingScorer>(scenario.scorer());
        auto gen = std::make_shared<testutil::CountingGenerator>(
            std::make_shared<ScriptedGenerator>(std::vector<std::string>{
                tagged("c1"), tagged("c2"), tagged("c3"), tagged("c4")}));
        RunConfig config;
        config.max_iterations = 2;
        config.top_k = 1;
        config.variants_per_sample = 2;
        config.enable_tim = false;
        config.seed = 1;

        optimize(scenario.dataset, Prompt::make("Let's think step by step", "initial"),
                 Backends{scorer, gen}, config);

        for (const std::string& req : gen->requests()) {
            CHECK(req.find("masked segments") == std::string::npos);
        }
        CHECK(gen->requests().size() == 4);  // rewrite calls only
        for (const std::string& ctx : scorer->contexts()) {
            CHECK(ctx.find("<MASK>") == std::string::npos);
        }
    }

    SUBCASE("TIM on: segmentation requests occur and masked variants are scored") {
        auto scorer = std::make_shared<testutil::CountingScorer>(scenario.scorer());
        std::vector<std::string> script;
        for (int s = 0; s < 3; ++s) script.push_back("junk");
        script.push_back(tagged("c1"));
        script.push_back(tagged("c2"));
        auto gen = std::make_shared<testutil::CountingGenerator>(
            std::make_shared<ScriptedGenerator>(script));
        RunConfig config;
        config.max_iterations = 1;
        config.top_k = 1;
        config.variants_per_sample = 2;
        config.seed = 1;

        optimize(scenario.dataset, Prompt::make("Let's think step by step", "initial"),
                 Backends{scorer, gen}, config);

        bool saw_segmentation = false;
        for (const std::string& req : gen->requests()) {
            if (req.find("masked segments") != std::string::npos) saw_segmentation = true;
        }
        CHECK(saw_segmentation);
        bool saw_masked_context = false;
        for (const std::string& ctx : scorer->contexts()) {
            if (ctx.find("<MASK>") != std::string::npos) saw_masked_context = true;
        }
        CHECK(saw_masked_context);
    }

    SUBCASE("PrefLoss off: only preferred outputs are scored") {
        Dataset pref;
        pref.kind = DatasetKind::preference;
        pref.task_description = "prefer the marker";
        for (int i = 0; i < 5; ++i) {
            pref.pairs.push_back({"p" + std::to_string(i), "q",
                                  "All clear. item0" + std::to_string(i) + " ok",
                                  "nope " + std::to_string(i)});
        }

        auto run_with = [&](bool prefloss) {
            auto scorer = std::make_shared<testutil::CountingScorer>(scenario.scorer());
            auto gen = std::make_shared<ScriptedGenerator>(
                std::vector<std::string>{tagged("c1"), tagged("c2")});
            RunConfig config;
            config.max_iterations = 1;
            config.top_k = 1;
            config.variants_per_sample = 2;
            config.enable_tim = false;
            config.enable_prefloss = prefloss;
            config.seed = 4;
            optimize(pref, Prompt::make("Let's think step by step", "initial"),
                     Backends{scorer, gen}, config);
            return scorer->targets();
        };

        auto is_preferred = [&](const std::string& t) {
            for (const auto& p : pref.pairs) {
                if (t == p.preferred) return true;
            }
            return false;
        };
        auto is_dispreferred = [&](const std::string& t) {
            for (const auto& p : pref.pairs) {
                if (t == p.dispreferred) return true;
            }
            return false;
        };

        auto off_targets = run_with(false);
        for (const std::string& t : off_targets) {
            CHECK(is_preferred(t));
            CHECK_FALSE(is_dispreferred(t));
        }

        bool saw_dispreferred = false;
        for (const std::string& t : run_with(true)) {
            if (is_dispreferred(t)) saw_dispreferred = true;
        }
        CHECK(saw_dispreferred);
    }
}
