#include <map>
#include <random>
#include <utility>

#include "doctest.h"
#include "pmpo/masking.hpp"
#include "pmpo/types.hpp"

using namespace pmpo;

TEST_CASE("render_scoring_text follows the default template") {
    Prompt p = Prompt::make("Be brief.", "p0");
    CHECK(render_scoring_text(p, "Q: 2+2?") == "Be brief.\n\nQ: 2+2?\n");
}

TEST_CASE("render_scoring_text trims trailing prompt whitespace first") {
    Prompt p = Prompt::make("Be brief.\n\n", "p0");
    // exactly one blank line separates prompt and input
    CHECK(render_scoring_text(p, "x") == "Be brief.\n\nx\n");
}

TEST_CASE("render_scoring_text rejects empty prompts") {
    Prompt p;
    p.text = "   \n";
    p.id = "p0";
    CHECK_THROWS_AS(render_scoring_text(p, "x"), Error);
    try {
        render_scoring_text(p, "x");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyPrompt);
    }
    CHECK_THROWS_AS(Prompt::make("", "p1"), Error);
}

TEST_CASE("render_scoring_text is deterministic and collision-free on clean inputs") {
    std::mt19937_64 rng(1234);
    auto rand_text = [&](std::size_t max_len) {
        static const std::string chars = "abcdefgh ij.k-?";
        std::string s;
        const std::size_t len = 1 + rng() % max_len;
        for (std::size_t i = 0; i < len; ++i) s += chars[rng() % chars.size()];
        // no trailing whitespace, no "\n\n" (the collision caveats)
        while (!s.empty() && s.back() == ' ') s.pop_back();
        return s.empty() ? std::string("x") : s;
    };

    std::map<std::string, std::pair<std::string, std::string>> seen;
    for (int i = 0; i < 500; ++i) {
        const std::string ptext = rand_text(30);
        const std::string input = rand_text(30);
        Prompt p = Prompt::make(ptext, "p");
        const std::string ctx = render_scoring_text(p, input);
        CHECK(ctx == render_scoring_text(p, input));
        auto [it, inserted] = seen.emplace(ctx, std::make_pair(ptext, input));
        if (!inserted) {
            CHECK(it->second == std::make_pair(ptext, input));
        }
    }
}

TEST_CASE("validate_dataset reports findings") {
    Dataset d;
    d.kind = DatasetKind::supervised;
    d.examples = {{"a", "in", "out", 1.0}, {"b", "in2", "out2", 1.0}, {"c", "in3", "out3", 1.0}};
    CHECK(validate_dataset(d).valid());

    d.examples.push_back({"a", "in4", "out4", 1.0});
    auto report = validate_dataset(d);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0].kind == FindingKind::DuplicateId);

    Dataset pref;
    pref.kind = DatasetKind::preference;
    pref.pairs = {{"p1", "x", "same", "same"}};
    auto pr = validate_dataset(pref);
    REQUIRE(pr.findings.size() == 1);
    CHECK(pr.findings[0].kind == FindingKind::DegeneratePair);

    Dataset empty;
    auto er = validate_dataset(empty);
    REQUIRE(er.findings.size() == 1);
    CHECK(er.findings[0].kind == FindingKind::EmptyDataset);
}

TEST_CASE("RunConfig::validate enforces bounds") {
    RunConfig ok;
    CHECK_NOTHROW(ok.validate());

    RunConfig bad = ok;
    bad.max_iterations = 0;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = ok;
    bad.beta = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = ok;
    bad.sampling.top_p = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("segmented prompt round-trips through tagging") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = 1 + rng() % 60;
        std::string text;
        for (std::size_t i = 0; i < len; ++i) text += static_cast<char>('a' + rng() % 26);
        Prompt original = Prompt::make(text, "p");

        // random non-overlapping spans in ascending order
        SegmentedPrompt seg;
        seg.original = original;
        std::size_t pos = 0;
        const std::size_t n_units = rng() % 6;
        for (std::size_t u = 0; u < n_units && pos < text.size(); ++u) {
            std::size_t start = pos + rng() % (text.size() - pos + 1);
            std::size_t end = start + rng() % (text.size() - start + 1);
            seg.units.push_back({start, end, text.substr(start, end - start)});
            pos = end;
        }

        const std::string tagged = seg.to_tagged_string();
        SegmentedPrompt parsed = parse_segmentation(tagged, original);
        CHECK(parsed.units.size() == seg.units.size());
        for (std::size_t u = 0; u < parsed.units.size(); ++u) {
            CHECK(parsed.units[u].byte_start == seg.units[u].byte_start);
            CHECK(parsed.units[u].byte_end == seg.units[u].byte_end);
            CHECK(parsed.units[u].text == seg.units[u].text);
        }
    }
}
