#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracle.hpp"
#include "pmpo/masking.hpp"
#include "pmpo/ngram.hpp"
#include "pmpo/scripted.hpp"

using namespace pmpo;

TEST_CASE("build_segmentation_request instantiates the meta-prompt") {
    Prompt p = Prompt::make("Solve the task carefully.", "p");
    const std::string request = build_segmentation_request(p);
    CHECK(request.find("wrap it in <mask></mask> tags") != std::string::npos);
    CHECK(request.find("Wrap the entire prompt in <prompt></prompt> tags") != std::string::npos);
    CHECK(request.find("Do not exceed 5 masked segments") != std::string::npos);
    // both {prompt} slots filled
    std::size_t first = request.find(p.text);
    REQUIRE(first != std::string::npos);
    CHECK(request.find(p.text, first + 1) != std::string::npos);
    CHECK(request.find("{prompt}") == std::string::npos);

    // substitution is verbatim even for collision-prone text
    Prompt tricky = Prompt::make("has a literal </mask> inside", "p2");
    CHECK(build_segmentation_request(tricky).find("literal </mask> inside") != std::string::npos);

    Prompt empty;
    empty.text = "  ";
    empty.id = "p3";
    CHECK_THROWS_AS(build_segmentation_request(empty), Error);
}

TEST_CASE("parse_segmentation extracts mask spans") {
    Prompt original = Prompt::make("A B C", "p");
    SegmentedPrompt seg = parse_segmentation("<prompt>A <mask>B</mask> C</prompt>", original);
    REQUIRE(seg.units.size() == 1);
    CHECK(seg.units[0].byte_start == 2);
    CHECK(seg.units[0].byte_end == 3);
    CHECK(seg.units[0].text == "B");
}

TEST_CASE("parse_segmentation accepts zero masks") {
    Prompt original = Prompt::make("A B C", "p");
    SegmentedPrompt seg = parse_segmentation("junk <prompt>A B C</prompt> trailing", original);
    CHECK(seg.units.empty());
}

TEST_CASE("parse_segmentation rejects malformed responses with the right codes") {
    Prompt original = Prompt::make("A B C", "p");

    auto code_of = [&](const std::string& response) {
        try {
            parse_segmentation(response, original);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::IoFailure;  // sentinel for "did not throw"
    };

    CHECK(code_of("no tags at all") == Errc::MissingPromptTags);
    CHECK(code_of("<prompt>unterminated") == Errc::MissingPromptTags);
    CHECK(code_of("<prompt>A X C</prompt>") == Errc::ReconstructionMismatch);
    CHECK(code_of("<prompt>A <mask>B</mask><mask></mask><mask></mask><mask></mask><mask></mask>"
                  "<mask></mask> C</prompt>") == Errc::TooManyMasks);
    CHECK(code_of("<prompt>A <mask>B<mask>C</mask></mask></prompt>") ==
          Errc::NestedOrOverlappingMasks);
    CHECK(code_of("<prompt>A </mask>B C</prompt>") == Errc::NestedOrOverlappingMasks);
    CHECK(code_of("<prompt>A <mask>B C</prompt>") == Errc::NestedOrOverlappingMasks);
}

TEST_CASE("parse_segmentation takes the first prompt block") {
    Prompt original = Prompt::make("A", "p");
    SegmentedPrompt seg = parse_segmentation("<prompt>A</prompt> <prompt>B</prompt>", original);
    CHECK(seg.units.empty());
    CHECK(seg.original.text == "A");
}

TEST_CASE("masked_variant replaces the unit span with the literal <MASK>") {
    Prompt original = Prompt::make("A B C", "p");
    SegmentedPrompt seg = parse_segmentation("<prompt>A <mask>B</mask> C</prompt>", original);

    Prompt variant = masked_variant(seg, 0);
    CHECK(variant.text == "A <MASK> C");
    CHECK(provenance_tag(variant.provenance) == "masked-variant");

    CHECK_THROWS_AS(masked_variant(seg, 1), Error);
    try {
        masked_variant(seg, 1);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::IndexOutOfRange);
    }
}

TEST_CASE("masked_variant with an empty unit inserts <MASK>") {
    Prompt original = Prompt::make("AC", "p");
    SegmentedPrompt seg;
    seg.original = original;
    seg.units.push_back({1, 1, ""});
    CHECK(masked_variant(seg, 0).text == "A<MASK>C");
}

TEST_CASE("classify_units applies the relative epsilon band") {
    RunConfig config;
    config.neutral_epsilon_fraction = 0.005;
    double eps = 0.0;
    auto labels = classify_units({0.1, -0.1, 0.005}, 2.0, config, &eps);
    CHECK(eps == doctest::Approx(0.01).epsilon(1e-15));
    REQUIRE(labels.size() == 3);
    CHECK(labels[0] == UnitLabel::positive);
    CHECK(labels[1] == UnitLabel::negative);
    CHECK(labels[2] == UnitLabel::neutral);

    // exhaustive over the three labels for any delta
    for (double d : {-1.0, -0.01, -0.005, 0.0, 0.005, 0.01, 1.0}) {
        auto l = classify_units({d}, 2.0, config);
        CHECK((l[0] == UnitLabel::positive || l[0] == UnitLabel::negative ||
               l[0] == UnitLabel::neutral));
    }
}

TEST_CASE("mask_deltas computes per-unit deltas against the oracle") {
    // The prompt carries the exact target string; inputs are short enough
    // that scoring windows reach into the prompt tail, so masking the unit
    // starves the matching counts and the loss rises.
    const std::string marker = "say yes.";
    const std::string corpus = "say yes.\n\nq\nsay yes. done say yes.\n\nq\nsay yes. done ";
    const int order = 8;
    NGramScorer scorer(NGramModel::train(corpus, order));

    Prompt prompt = Prompt::make("Always say yes.", "p");
    SegmentedPrompt seg =
        parse_segmentation("<prompt>Always <mask>say yes.</mask></prompt>", prompt);
    REQUIRE(seg.units.size() == 1);

    Dataset d;
    d.kind = DatasetKind::supervised;
    d.examples = {{"a", "q", "say yes. done", 1.0}, {"b", "q", "say yes. done", 1.0}};

    RunConfig config;
    MaskReport report = mask_deltas(seg, d, scorer, config);

    oracle::NGramOracle ora = oracle::NGramOracle::build(corpus, order);
    auto oracle_batch = [&](const std::string& prompt_text) {
        std::vector<double> losses;
        for (const Example& ex : d.examples) {
            losses.push_back(ora.ce_sum(oracle::render_context(prompt_text, ex.input), ex.output));
        }
        return oracle::mean(losses);
    };
    const double base = oracle_batch("Always say yes.");
    const double masked = oracle_batch("Always <MASK>");

    CHECK(report.base_loss == doctest::Approx(base).epsilon(1e-9));
    REQUIRE(report.deltas.size() == 1);
    CHECK(report.deltas[0] == doctest::Approx(masked - base).epsilon(1e-9));
    CHECK(report.deltas[0] > 0.0);
    CHECK(report.labels[0] == UnitLabel::positive);
}

TEST_CASE("mask delta is antisymmetric under role swap") {
    NGramScorer scorer(NGramModel::train("alpha beta gamma alpha beta", 4));
    RunConfig config;
    Dataset d;
    d.kind = DatasetKind::supervised;
    d.examples = {{"a", "x", "beta", 1.0}};

    Prompt base = Prompt::make("alpha beta", "p");
    SegmentedPrompt seg = parse_segmentation("<prompt>alpha <mask>beta</mask></prompt>", base);
    MaskReport fwd = mask_deltas(seg, d, scorer, config);

    // swap roles: treat the masked text as the original and vice versa
    Prompt swapped = Prompt::make("alpha <MASK>", "p2");
    const double loss_swapped = objective(scorer, swapped, d, config).batch;
    const double loss_base = objective(scorer, base, d, config).batch;
    CHECK(fwd.deltas[0] == loss_swapped - loss_base);
    CHECK(-(loss_base - loss_swapped) == fwd.deltas[0]);
}

TEST_CASE("format_mask_analysis renders labels, deltas, and the sentinel") {
    MaskReport empty;
    empty.segmented.original = Prompt::make("A", "p");
    CHECK(format_mask_analysis(empty) == "(no independent units identified)");

    MaskReport two;
    two.segmented.original = Prompt::make("one two", "p");
    two.segmented.units = {{0, 3, "one"}, {4, 7, "two"}};
    two.deltas = {0.12345, -0.5};
    two.labels = {UnitLabel::positive, UnitLabel::negative};
    const std::string text = format_mask_analysis(two);
    CHECK(text.find("+0.1234") != std::string::npos);  // round-half-even
    CHECK(text.find("-0.5000") != std::string::npos);
    CHECK(text.find("positive") != std::string::npos);
    CHECK(text.find("negative") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);  // two lines
}

TEST_CASE("format_mask_analysis truncates long unit texts") {
    MaskReport r;
    r.segmented.original = Prompt::make(std::string(300, 'x'), "p");
    r.segmented.units = {{0, 300, std::string(300, 'x')}};
    r.deltas = {0.0};
    r.labels = {UnitLabel::neutral};
    const std::string text = format_mask_analysis(r);
    CHECK(text.find(std::string(200, 'x') + "...") != std::string::npos);
    CHECK(text.find(std::string(201, 'x')) == std::string::npos);
}

TEST_CASE("fallback_segmentation splits on blank lines") {
    Prompt p = Prompt::make("first rule\n\nsecond rule\n\nthird", "p");
    SegmentedPrompt seg = fallback_segmentation(p);
    REQUIRE(seg.units.size() == 3);
    CHECK(seg.units[0].text == "first rule");
    CHECK(seg.units[1].text == "second rule");
    CHECK(seg.units[2].text == "third");

    // more than five paragraphs: keep the largest five (stable on ties)
    Prompt many =
        Prompt::make("aaaaaa\n\nbb\n\ncccccc\n\ndddddd\n\neeeeee\n\nffffff\n\ngggggg", "p2");
    SegmentedPrompt capped = fallback_segmentation(many);
    REQUIRE(capped.units.size() == 5);
    for (const auto& u : capped.units) {
        CHECK(u.text != "bb");        // shortest paragraph dropped
        CHECK(u.text != "gggggg");    // last of the tied six-char paragraphs dropped
    }
    // units stay in ascending byte order
    for (std::size_t i = 1; i < capped.units.size(); ++i) {
        CHECK(capped.units[i - 1].byte_end <= capped.units[i].byte_start);
    }
}

TEST_CASE("segment_with_retries falls back after repeated parse failures") {
    Prompt p = Prompt::make("rule one\n\nrule two", "p");
    RunConfig config;
    config.max_parse_retries = 2;

    ScriptedGenerator bad({"garbage", "more garbage", "still no tags"});
    SegmentationOutcome outcome = segment_with_retries(p, bad, config, 7);
    CHECK(outcome.source == SegmentationSource::fallback);
    CHECK(outcome.transcripts.size() == 3);  // 1 + max_parse_retries attempts
    CHECK(outcome.segmented.units.size() == 2);

    // a later attempt can succeed before the budget runs out
    ScriptedGenerator eventually(
        {"junk", "<prompt>rule one\n\n<mask>rule two</mask></prompt>"});
    SegmentationOutcome ok = segment_with_retries(p, eventually, config, 7);
    CHECK(ok.source == SegmentationSource::model);
    CHECK(ok.transcripts.size() == 2);
    REQUIRE(ok.segmented.units.size() == 1);
    CHECK(ok.segmented.units[0].text == "rule two");

    // transport failure propagates (the caller skips mask analysis)
    ScriptedGenerator exhausted({});
    CHECK_THROWS_AS(segment_with_retries(p, exhausted, config, 7), Error);
}
