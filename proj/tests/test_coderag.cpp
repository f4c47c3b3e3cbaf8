#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "repogen/coderag.hpp"
#include "repogen/error.hpp"
#include "repogen/sandbox.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace repogen;
using nlohmann::json;
using testsupport::blueprint_of;
using testsupport::TempDir;

namespace {

RelationshipTuple tuple(const std::string& repo, const std::string& file, const std::string& target, double conf) {
  return {repo, file, target, "utility", conf, {}, ""};
}

SourceSummary summary_of(const std::string& path) {
  SourceSummary s;
  s.path = path;
  s.purpose = "helpers";
  return s;
}

const std::string kSource = "def a():\n    return 1\n\n\ndef b():\n    return 2\n";

}  // namespace

TEST(RagIndex, PerTargetOrderAndTies) {
  const RagIndex index({tuple("r", "z.py", "t.py", 0.5), tuple("r", "a.py", "t.py", 0.5), tuple("q", "a.py", "t.py", 0.5),
                        tuple("r", "m.py", "t.py", 0.9), tuple("r", "m.py", "u.py", 0.1)},
                       {});
  const auto& list = index.for_target("t.py");
  ASSERT_EQ(list.size(), 4u);
  EXPECT_EQ(list[0].source_file, "m.py");
  EXPECT_EQ(list[1].source_repo, "q");
  EXPECT_EQ(list[2].source_repo, "r");
  EXPECT_EQ(list[2].source_file, "a.py");
  EXPECT_EQ(list[3].source_file, "z.py");
  EXPECT_TRUE(index.for_target("none.py").empty());
  EXPECT_EQ(index.per_target().size(), 2u);
}

TEST(RagIndex, JsonRoundTrip) {
  RelationshipTuple t = tuple("r", "a.py", "t.py", 0.75);
  t.snippets = {{"a.py", 1, 2, "x\ny\n"}};
  t.usage_notes = "adapt";
  const RagIndex index({t}, {{"r", {"a.py"}, false}, {"bad", {}, true}}, {"w"});
  const RagIndex back = RagIndex::from_json(json::parse(index.to_json().dump()));
  EXPECT_EQ(back.to_json(), index.to_json());
  EXPECT_EQ(back.for_target("t.py")[0].snippets[0].text, "x\ny\n");
  EXPECT_TRUE(back.repo_manifest()[1].failed);
}

TEST(Retrieve, MaxConfidenceOrNoTuple) {
  const RagIndex index({tuple("r", "low.py", "t.py", 0.2), tuple("r", "high.py", "t.py", 0.8)}, {});
  const auto a = retrieve(index, "t.py");
  EXPECT_EQ(a.source_file, "high.py");
  EXPECT_DOUBLE_EQ(a.confidence, 0.8);
  try {
    retrieve(index, "u.py");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoTuple);
  }
}

TEST(RetrieveProperty, ReturnsATupleWithMaximalConfidence) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<RelationshipTuple> ts;
    const int n = std::uniform_int_distribution<int>(1, 20)(rng);
    for (int k = 0; k < n; ++k) {
      ts.push_back(tuple("r" + std::to_string(k % 3), "f" + std::to_string(k) + ".py",
                         std::bernoulli_distribution(0.5)(rng) ? "t.py" : "u.py",
                         std::uniform_real_distribution<double>(0.0, 1.0)(rng)));
    }
    const RagIndex index(ts, {});
    for (const std::string target : {"t.py", "u.py"}) {
      double best = -1;
      for (const auto& t : ts) {
        if (t.target_file == target) best = std::max(best, t.confidence);
      }
      if (best < 0) {
        EXPECT_THROW(retrieve(index, target), Error);
        continue;
      }
      ASSERT_EQ(retrieve(index, target).confidence, best);
      const auto& list = index.for_target(target);
      for (std::size_t k = 1; k < list.size(); ++k) ASSERT_GE(list[k - 1].confidence, list[k].confidence);
    }
  }
}

TEST(Filter, StaticExclusions) {
  EXPECT_TRUE(statically_excluded("vendor/lib.py", "x"));
  EXPECT_TRUE(statically_excluded("a/node_modules/b.js", "x"));
  EXPECT_TRUE(statically_excluded("weights.PT", "x"));
  EXPECT_TRUE(statically_excluded("data.txt", std::string_view("ab\0cd", 5)));
  EXPECT_FALSE(statically_excluded("build.py", "x"));
  EXPECT_FALSE(statically_excluded("src/model.py", "import os\n"));
}

TEST(Filter, DropsUnlistedPicksAndHonorsBlacklist) {
  TempDir dir;
  Sandbox sandbox(SandboxOptions{dir.path()});
  sandbox.write_file("ref/a.py", "x = 1\n");
  sandbox.write_file("ref/secret/b.py", "y = 2\n");
  sandbox.write_file("ref/vendor/c.py", "z = 3\n");
  auto provider = std::make_shared<ScriptedProvider>();
  provider->add(testsupport::rule("rag_filter", {"- a.py (1 lines)"}, R"({"files": ["./a.py", "a.py", "vendor/c.py"]})"));
  auto gw = testsupport::live_gateway(provider);
  RagOptions o;
  o.blacklist = {"secret"};
  const auto r = filter_relevant_files(sandbox, "ref", "ref", blueprint_of({{"t.py"}}), *gw, o);
  EXPECT_EQ(r.files, (std::vector<std::string>{"a.py"}));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("vendor/c.py"), std::string::npos);
  EXPECT_EQ(gw->records()[0].prompt.find("secret"), std::string::npos);
}

TEST(Filter, NothingLeftIsEmptyRepo) {
  TempDir dir;
  Sandbox sandbox(SandboxOptions{dir.path()});
  sandbox.write_file("ref/node_modules/x.js", "1");
  auto gw = testsupport::live_gateway(std::make_shared<ScriptedProvider>());
  try {
    filter_relevant_files(sandbox, "ref", "ref", blueprint_of({{"t.py"}}), *gw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyRepo);
  }
  EXPECT_TRUE(gw->records().empty());
}

TEST(Map, SanitizesModelOutput) {
  auto provider = std::make_shared<ScriptedProvider>();
  provider->add(testsupport::rule("rag_map", {"Reference file: u.py (6 lines)"}, R"({"relationships": [
      {"target": "t.py", "type": "utility", "confidence": 1.7, "snippets": [{"start_line": 1, "end_line": 2},
                                                                            {"start_line": 5, "end_line": 9}]},
      {"target": "ghost.py", "type": "utility", "confidence": 0.5},
      {"target": "t.py", "type": "inspiration", "confidence": 0.5},
      {"target": "t.py", "type": "conceptual", "confidence": -0.2, "notes": "idea only"}]})"));
  auto gw = testsupport::live_gateway(provider);
  const auto r = map_relationships(summary_of("u.py"), kSource, "ref", blueprint_of({{"t.py"}}), *gw);
  ASSERT_EQ(r.tuples.size(), 2u);
  EXPECT_DOUBLE_EQ(r.tuples[0].confidence, 1.0);
  ASSERT_EQ(r.tuples[0].snippets.size(), 1u);
  EXPECT_EQ(r.tuples[0].snippets[0].text, "def a():\n    return 1\n");
  EXPECT_DOUBLE_EQ(r.tuples[1].confidence, 0.0);
  EXPECT_EQ(r.tuples[1].usage_notes, "idea only");
  EXPECT_EQ(r.warnings.size(), 5u);
}

TEST(Understand, RetriesThenParses) {
  auto provider = std::make_shared<ScriptedProvider>();
  provider->add(testsupport::rule("rag_understand", {}, R"({"purpose": ""})", 1));
  provider->add(testsupport::rule("rag_understand", {}, R"j({"purpose": "helpers", "concepts": ["sgd"],
      "public_interface": [{"kind": "function", "name": "a", "signature": "a()"}]})j"));
  auto gw = testsupport::live_gateway(provider);
  const auto s = understand_source("u.py", kSource, *gw);
  EXPECT_EQ(s.retries, 1);
  EXPECT_EQ(s.line_count, 6u);
  EXPECT_EQ(s.concepts, (std::vector<std::string>{"sgd"}));
  EXPECT_NE(s.render().find("- function a()"), std::string::npos);
}

TEST(BuildIndex, FailedRepositoryIsRecordedAndOthersContinue) {
  TempDir dir;
  Sandbox sandbox(SandboxOptions{dir.path()});
  sandbox.write_file("good/u.py", kSource);
  sandbox.write_file("empty/vendor/x.py", "1\n");
  auto provider = std::make_shared<ScriptedProvider>();
  provider->add(testsupport::rule("rag_filter", {}, R"({"files": ["u.py"]})"));
  provider->add(testsupport::rule("rag_understand", {}, R"({"purpose": "helpers", "public_interface": []})"));
  provider->add(testsupport::rule("rag_map", {}, R"({"relationships": [{"target": "t.py", "type": "utility", "confidence": 0.6}]})"));
  auto gw = testsupport::live_gateway(provider);
  RagOptions o;
  o.blacklist = {"banned"};
  const auto index = build_index({{"good", "good"}, {"empty", "empty"}, {"banned", "good"}}, blueprint_of({{"t.py"}}),
                                 *gw, sandbox, o);
  ASSERT_EQ(index.tuples().size(), 1u);
  ASSERT_EQ(index.repo_manifest().size(), 3u);
  EXPECT_FALSE(index.repo_manifest()[0].failed);
  EXPECT_TRUE(index.repo_manifest()[1].failed);
  EXPECT_TRUE(index.repo_manifest()[2].failed);
  EXPECT_EQ(gw->records().size(), 3u);
}

TEST(BuildIndex, EveryRepositoryFailingIsAnError) {
  TempDir dir;
  Sandbox sandbox(SandboxOptions{dir.path()});
  sandbox.write_file("empty/vendor/x.py", "1\n");
  auto gw = testsupport::live_gateway(std::make_shared<ScriptedProvider>());
  try {
    build_index({{"empty", "empty"}}, blueprint_of({{"t.py"}}), *gw, sandbox);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyRepo);
  }
  EXPECT_TRUE(build_index({}, blueprint_of({{"t.py"}}), *gw, sandbox).empty());
}

TEST(BuildIndex, ToyReferencesProduceOrderedIndex) {
  TempDir dir;
  const auto index = scenarios::build_toy_rag(dir.path());
  EXPECT_EQ(index.tuples().size(), 4u);
  for (const auto& [target, list] : index.per_target()) {
    for (std::size_t k = 1; k < list.size(); ++k) EXPECT_GE(list[k - 1].confidence, list[k].confidence) << target;
  }
  // The fixture replies exercise each sanitizer once.
  EXPECT_EQ(index.warnings(), (std::vector<std::string>{
                                  "sgd-reference: dropped selection 'schedulers.py' (not in listing)",
                                  "data-tools:datasets.py: confidence 1.3 clamped to 1.0",
                                  "data-tools:datasets.py: dropped tuple for unplanned target 'utils.py'"}));
}

TEST(Decision, DetailAndComplexity) {
  auto bp = blueprint_of({{"full.py"}, {"bare.py", {}, {"E1", "E2", "A1"}}, {"half.py"}},
                         {{"E1", "equation", "y"}, {"E2", "equation", "z"}, {"A1", "pseudocode", "loop"}});
  bp.component_specs["full.py"].symbols = {{"function", "f", "f(x)", "does f"}};
  bp.component_specs["half.py"].symbols = {{"function", "f", "f(x)", ""}, {"function", "g", "", ""}};
  EXPECT_DOUBLE_EQ(detail_score(bp.spec("full.py")), 1.0);
  EXPECT_DOUBLE_EQ(detail_score(bp.spec("half.py")), 0.25);
  EXPECT_DOUBLE_EQ(detail_score(bp.spec("bare.py")), 0.0);
  EXPECT_DOUBLE_EQ(detail_score(nullptr), 0.0);
  EXPECT_EQ(linked_complexity(bp, "bare.py"), 3u);
  EXPECT_EQ(linked_complexity(bp, "full.py"), 0u);

  const RagIndex index({tuple("r", "a.py", "full.py", 0.9), tuple("r", "a.py", "half.py", 0.9)}, {});
  GenerationContext ctx;
  ctx.target = "full.py";
  EXPECT_FALSE(decide_retrieval(ctx, bp, index));
  ctx.target = "half.py";
  EXPECT_TRUE(decide_retrieval(ctx, bp, index));
  ctx.target = "bare.py";
  EXPECT_FALSE(decide_retrieval(ctx, bp, index));
  EXPECT_TRUE(decide_retrieval(ctx, bp, RagIndex({tuple("r", "a.py", "bare.py", 0.1)}, {})));

  EXPECT_FALSE(make_retrieval_hook(nullptr, bp)(ctx, "bare.py").has_value());
  const auto hook = make_retrieval_hook(std::make_shared<const RagIndex>(index), bp);
  ctx.target = "half.py";
  ASSERT_TRUE(hook(ctx, "half.py").has_value());
  EXPECT_EQ(hook(ctx, "half.py")->source_file, "a.py");
}
