#include <catch2/catch_amalgamated.hpp>

#include "toolrl/rng.hpp"
#include "toolrl/toolparse.hpp"

using namespace toolrl;
using namespace toolrl::toolparse;

namespace {

AgentAction random_action(Rng& rng) {
    if (rng.bernoulli(0.4)) return AnswerAction{rng.uniform_int(1000)};
    InvokeAction inv;
    inv.tool = static_cast<ToolKind>(rng.uniform_int(kToolKindCount));
    if (inv.tool == ToolKind::SegmentRetrieve) {
        Embedding q(4 + rng.uniform_int(16));
        for (auto& x : q) x = rng.normal() * std::pow(10.0, rng.uniform_int(5) - 2);
        inv.args.query = q;
    }
    return inv;
}

}  // namespace

TEST_CASE("serialize emits the documented wire format", "[toolparse]") {
    CHECK(serialize(InvokeAction{ToolKind::Browse, {}}) ==
          "<tool_call>{\"name\": \"browse\", \"arguments\": {}}</tool_call>");
    CHECK(serialize(AnswerAction{2}) == "<answer>2</answer>");
    auto seg = serialize(InvokeAction{ToolKind::SegmentRetrieve, {Embedding{0.5, -0.25}}});
    CHECK(seg ==
          "<tool_call>{\"name\": \"segment_retrieve\", \"arguments\": {\"query\": "
          "[0.5,-0.25]}}</tool_call>");
}

TEST_CASE("strict parse accepts serializer output", "[toolparse]") {
    auto out = parse_strict(serialize(InvokeAction{ToolKind::ZoomIn, {}}));
    REQUIRE(out.status == ParseStatus::Parsed);
    REQUIRE(is_invoke(out.action));
    CHECK(std::get<InvokeAction>(out.action).tool == ToolKind::ZoomIn);
}

TEST_CASE("strict parse reports the first violation", "[toolparse]") {
    CHECK(parse_strict("<tool_call>{\"name\": \"browse\",}</tool_call>").reason ==
          "trailing-comma");
    CHECK(parse_strict("").reason == "no-tag");
    CHECK(parse_strict("hello").reason == "no-tag");
    CHECK(parse_strict("say <answer>1</answer>").reason == "leading-text");
    CHECK(parse_strict("<answer>1</answer> done").reason == "trailing-text");
    CHECK(parse_strict("<answer>1</answer><answer>2</answer>").reason == "trailing-text");
    CHECK(parse_strict("<answer></answer>").reason == "bad-answer-body");
    CHECK(parse_strict("<answer>-1</answer>").reason == "bad-answer-body");
    CHECK(parse_strict("<tool_call>{\"name\": \"fetch\", \"arguments\": {}}</tool_call>").reason ==
          "unknown-tool");
    CHECK(parse_strict("<tool_call>{\"name\": \"browse\"}</tool_call>").reason ==
          "missing-arguments");
    CHECK(parse_strict("<tool_call>{\"name\": \"browse\", \"arguments\": {}, \"x\": 1}"
                       "</tool_call>").reason == "unexpected-key");
    CHECK(parse_strict("<tool_call>{\"name\": \"browse\", \"arguments\": {\"k\": 1}}"
                       "</tool_call>").reason == "bad-arguments");
    CHECK(parse_strict("<tool_call>{\"name\": \"segment_retrieve\", \"arguments\": {\"query\": []}}"
                       "</tool_call>").reason == "bad-arguments");
}

TEST_CASE("repair normalizes single quotes", "[toolparse]") {
    auto out = parse_with_repair("<tool_call>{'name': 'browse', 'arguments': {}}</tool_call>");
    REQUIRE(out.status == ParseStatus::Repaired);
    REQUIRE(out.passes == std::vector<std::string>{"quote-normalize"});
    CHECK(std::get<InvokeAction>(out.action).tool == ToolKind::Browse);
}

TEST_CASE("repair never fires on strictly valid strings", "[toolparse]") {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        auto raw = serialize(random_action(rng));
        auto out = parse_with_repair(raw);
        CHECK(out.status == ParseStatus::Parsed);
        CHECK(out.passes.empty());
    }
}

TEST_CASE("repair balances truncated braces and tags", "[toolparse]") {
    auto out = parse_with_repair("<tool_call>{\"name\": \"browse\", \"arguments\": {");
    REQUIRE(out.status == ParseStatus::Repaired);
    REQUIRE(is_invoke(out.action));
    CHECK(std::get<InvokeAction>(out.action).tool == ToolKind::Browse);
    bool balanced = false;
    for (const auto& pass : out.passes)
        if (pass == "balance-delims") balanced = true;
    CHECK(balanced);
}

TEST_CASE("serialize then parse is the identity for random actions", "[toolparse]") {
    Rng rng(99);
    for (int i = 0; i < 10000; ++i) {
        AgentAction a = random_action(rng);
        auto out = parse_strict(serialize(a));
        REQUIRE(out.status == ParseStatus::Parsed);
        REQUIRE(out.action == a);
    }
}

TEST_CASE("each repair pass fixes its corruption family", "[toolparse]") {
    Rng rng(123);
    int fenced = 0, quoted = 0, bare = 0, comma = 0, truncated = 0;
    for (int i = 0; i < 400; ++i) {
        AgentAction a = random_action(rng);
        std::string raw = serialize(a);

        {  // strip-fence
            auto out = parse_with_repair("```json\n" + raw + "\n```");
            REQUIRE(out.status == ParseStatus::Repaired);
            REQUIRE(out.action == a);
            ++fenced;
        }
        if (raw.find('"') != std::string::npos) {  // quote-normalize
            std::string corrupted = raw;
            for (auto& c : corrupted)
                if (c == '"') c = '\'';
            auto out = parse_with_repair(corrupted);
            REQUIRE(out.status == ParseStatus::Repaired);
            REQUIRE(out.action == a);
            ++quoted;
        }
        if (size_t name = raw.find("\"name\""); name != std::string::npos) {  // quote-keys
            std::string corrupted = raw;
            corrupted.replace(name, 6, "name");
            size_t args = corrupted.find("\"arguments\"");
            if (args != std::string::npos) corrupted.replace(args, 11, "arguments");
            auto out = parse_with_repair(corrupted);
            REQUIRE(out.status == ParseStatus::Repaired);
            REQUIRE(out.action == a);
            ++bare;
        }
        if (size_t brace = raw.rfind('}'); brace != std::string::npos) {  // strip-trailing-comma
            std::string corrupted = raw;
            corrupted.insert(brace, ",");
            auto out = parse_with_repair(corrupted);
            REQUIRE(out.status == ParseStatus::Repaired);
            REQUIRE(out.action == a);
            ++comma;
        }
        if (size_t open = raw.find("arguments\": {"); open != std::string::npos) {
            // balance-delims: cut right after the arguments object opens
            std::string corrupted = raw.substr(0, open + 13);
            auto out = parse_with_repair(corrupted);
            REQUIRE(out.status == ParseStatus::Repaired);
            if (std::get<InvokeAction>(a).tool != ToolKind::SegmentRetrieve) REQUIRE(out.action == a);
            ++truncated;
        }
    }
    CHECK(fenced == 400);
    CHECK(quoted > 100);
    CHECK(bare > 100);
    CHECK(comma > 100);
    CHECK(truncated > 100);
}

TEST_CASE("format quality counts strictly parsing episodes only", "[toolparse]") {
    auto make_episode = [](std::vector<std::string> raws) {
        Trajectory t;
        for (auto& r : raws) {
            Turn turn;
            turn.raw = std::move(r);
            t.turns.push_back(std::move(turn));
        }
        t.final_answer = 0;
        return t;
    };
    std::string good = "<answer>1</answer>";
    std::string repairable = "<answer>1</answer> ";  // trailing space: repaired, not strict

    std::vector<Trajectory> all_valid{make_episode({good, good}), make_episode({good})};
    CHECK(toolparse::format_quality(all_valid) == 1.0);

    std::vector<Trajectory> half{make_episode({good}), make_episode({good, "garbage"})};
    CHECK(toolparse::format_quality(half) == 0.5);

    std::vector<Trajectory> repaired_only{make_episode({repairable}), make_episode({repairable})};
    CHECK(parse_with_repair(repairable).status == ParseStatus::Repaired);
    CHECK(toolparse::format_quality(repaired_only) == 0.0);

    std::vector<Trajectory> empty;
    CHECK_THROWS_AS(toolparse::format_quality(empty), std::invalid_argument);
}
