#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "repogen/error.hpp"
#include "repogen/sandbox.hpp"
#include "repogen/verifier.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace repogen;
using nlohmann::json;
using testsupport::blueprint_of;
using testsupport::TempDir;

namespace {

PatchInstruction patch(std::vector<LineEdit> edits) { return {"f.py", std::move(edits), ""}; }

// Forward rebuild: walk the original lines, emitting a replacement where an
// edit starts and skipping the lines it replaces.
std::string apply_oracle(const std::vector<std::string>& lines, std::vector<LineEdit> edits) {
  std::sort(edits.begin(), edits.end(), [](const LineEdit& a, const LineEdit& b) { return a.start_line < b.start_line; });
  std::string out;
  std::size_t e = 0;
  int line = 1;
  while (true) {
    if (e < edits.size() && edits[e].start_line == line) {
      out += edits[e].text;
      if (!edits[e].text.empty() && edits[e].text.back() != '\n') out += "\n";
      line = edits[e].end_line + 1;
      ++e;
      continue;
    }
    if (line > static_cast<int>(lines.size())) break;
    out += lines[static_cast<std::size_t>(line - 1)] + "\n";
    ++line;
  }
  return out;
}

std::unique_ptr<Sandbox> sandbox_at(const TempDir& dir) {
  return std::make_unique<Sandbox>(SandboxOptions{dir.path()});
}

VerifierOptions quick(int max_iter = 3) {
  VerifierOptions o;
  o.max_iter = max_iter;
  o.timeout = std::chrono::seconds(20);
  return o;
}

}  // namespace

TEST(Patch, ReplaceInsertDelete) {
  const std::string text = "a\nb\nc\nd\n";
  EXPECT_EQ(apply_patch(text, patch({{2, 2, "B\n"}})), "a\nB\nc\nd\n");
  EXPECT_EQ(apply_patch(text, patch({{2, 1, "x\ny"}})), "a\nx\ny\nb\nc\nd\n");
  EXPECT_EQ(apply_patch(text, patch({{2, 3, ""}})), "a\nd\n");
  EXPECT_EQ(apply_patch(text, patch({{5, 4, "e\n"}})), "a\nb\nc\nd\ne\n");
  EXPECT_EQ(apply_patch("a\nb", patch({{3, 2, "c\n"}})), "a\nb\nc\n");
  EXPECT_EQ(apply_patch(text, patch({{1, 1, "A\n"}, {4, 4, "D\n"}})), "A\nb\nc\nD\n");
  EXPECT_EQ(apply_patch("", patch({{1, 0, "x\n"}})), "x\n");
}

TEST(Patch, InvalidRangesAreRejected) {
  const std::string text = "a\nb\n";
  for (const LineEdit& bad : {LineEdit{0, 0, ""}, LineEdit{4, 3, ""}, LineEdit{2, 3, ""}, LineEdit{2, 0, ""}}) {
    try {
      apply_patch(text, patch({bad}));
      FAIL() << bad.start_line << "-" << bad.end_line;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::RangeOutOfBounds);
    }
  }
  for (const auto& pair : std::vector<std::vector<LineEdit>>{{{1, 2, ""}, {2, 2, ""}}, {{1, 0, "x"}, {1, 0, "y"}}}) {
    try {
      apply_patch(text, patch(pair));
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::OverlappingEdits);
    }
  }
}

TEST(PatchProperty, MatchesForwardOracleAndStaysLocal) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(0, 25)(rng);
    std::vector<std::string> lines;
    std::string text;
    for (int i = 0; i < n; ++i) {
      lines.push_back("line" + std::to_string(i) + "_" + std::to_string(rng() % 1000));
      text += lines.back() + "\n";
    }
    // Non-overlapping edits: walk forward choosing replace, insert or skip.
    std::vector<LineEdit> edits;
    int line = 1;
    while (line <= n + 1 && edits.size() < 4) {
      const int action = std::uniform_int_distribution<int>(0, 3)(rng);
      std::string repl;
      for (int k = std::uniform_int_distribution<int>(0, 3)(rng); k > 0; --k) repl += "new" + std::to_string(rng() % 100) + "\n";
      if (action == 0 && line <= n) {
        const int end = std::min(n, line + std::uniform_int_distribution<int>(0, 3)(rng));
        edits.push_back({line, end, repl});
        line = end + 2;
      } else if (action == 1) {
        edits.push_back({line, line - 1, repl.empty() ? "ins\n" : repl});
        line += 1;
      } else {
        line += std::uniform_int_distribution<int>(1, 4)(rng);
      }
    }
    if (edits.empty()) continue;
    std::shuffle(edits.begin(), edits.end(), rng);
    const PatchInstruction p = patch(edits);
    const std::string got = apply_patch(text, p);
    ASSERT_EQ(got, apply_oracle(lines, edits)) << "trial " << trial;
    ASSERT_FALSE(scenarios::locality_violation(p, text, got).has_value()) << "trial " << trial;
  }
}

TEST(Locality, OracleDetectsChangesOutsideTheEdits) {
  const std::string before = "a\nb\nc\nd\ne\n";
  const PatchInstruction p = patch({{2, 2, "B\n"}, {4, 4, "D\n"}});
  EXPECT_FALSE(scenarios::locality_violation(p, before, "a\nB\nc\nD\ne\n").has_value());
  EXPECT_TRUE(scenarios::locality_violation(p, before, "A\nB\nc\nD\ne\n").has_value());
  EXPECT_TRUE(scenarios::locality_violation(p, before, "a\nB\nc\nD\nE\n").has_value());
  EXPECT_TRUE(scenarios::locality_violation(p, before, "a\nB\nX\nD\ne\n").has_value());
}

TEST(ErrorRecords, TracebackUsesDeepestRepositoryFrame) {
  const std::string err =
      "Traceback (most recent call last):\n"
      "  File \"main.py\", line 9, in <module>\n"
      "    run()\n"
      "  File \"train.py\", line 15, in run\n"
      "    step(grad_bias)\n"
      "  File \"/usr/lib/python3/x.py\", line 2, in step\n"
      "    pass\n"
      "NameError: name 'grad_bias' is not defined\n";
  const auto r = parse_error_records(err, 1, default_error_patterns());
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], (ErrorRecord{"train.py", 15, "NameError: name 'grad_bias' is not defined"}));
}

TEST(ErrorRecords, PatternsAndFallback) {
  EXPECT_TRUE(parse_error_records("train.py:3: warning\n", 0, default_error_patterns()).empty());
  const auto r = parse_error_records("model.cpp:12:5: error: bad\nreproduce.sh: line 4: foo: command not found\n"
                                     "/abs/x.py:1: no\n",
                                     2, default_error_patterns());
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], (ErrorRecord{"model.cpp", 12, "error: bad"}));
  EXPECT_EQ(r[1], (ErrorRecord{"reproduce.sh", 4, "foo: command not found"}));
  const auto fallback = parse_error_records("\nloss 0.9 above tolerance\n\n", 1, default_error_patterns());
  ASSERT_EQ(fallback.size(), 1u);
  EXPECT_EQ(fallback[0], (ErrorRecord{"", 0, "loss 0.9 above tolerance"}));
  EXPECT_EQ(parse_error_records("", 7, {})[0].message, "exited with code 7");
}

TEST(Static, StructuralIssuesNeverCallTheModel) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->write_file("repo/a.py", "x = 1\n");
  sb->write_file("repo/b.py", "");
  const auto bp = blueprint_of({{"a.py"}, {"b.py"}, {"c.py"}});
  auto gw = testsupport::live_gateway(std::make_shared<ScriptedProvider>());
  VerifierOptions o;
  o.quality_pass = false;
  const auto r = static_analyze(*sb, "repo", bp, *gw, o);
  ASSERT_EQ(r.issues.size(), 2u);
  EXPECT_EQ(r.issues[0].file, "b.py");
  EXPECT_EQ(r.issues[0].id, "S1");
  EXPECT_EQ(r.issues[1].file, "c.py");
  EXPECT_EQ(r.count(kStructural), 2u);
  EXPECT_TRUE(gw->records().empty());
}

TEST(Static, QualityReviewClampsAndDropsOutOfRangeIssues) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->write_file("repo/a.py", "x = 1\ny = 2\n");
  auto provider = std::make_shared<ScriptedProvider>();
  provider->add(testsupport::rule("quality_review", {"File: a.py\n"}, R"({"score": 1.4, "issues": [
      {"start_line": 2, "end_line": 2, "description": "unused", "instruction": "remove y"},
      {"start_line": 3, "end_line": 9, "description": "beyond"}]})"));
  auto gw = testsupport::live_gateway(provider);
  const auto r = static_analyze(*sb, "repo", blueprint_of({{"a.py"}}), *gw);
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].id, "Q1");
  EXPECT_EQ(r.issues[0].location(), "2");
  EXPECT_DOUBLE_EQ(r.quality_scores.at("a.py"), 1.0);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Static, RefineFixesBottomUpAndGivesUpAfterTwoRejections) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->write_file("repo/a.py", "l1\nl2\nl3\nl4\n");
  sb->write_file("repo/b.py", "k1\n");
  const auto bp = blueprint_of({{"a.py"}, {"b.py"}, {"c.py"}});
  StaticReport report;
  report.issues = {{"Q1", kQuality, "a.py", 1, 1, "first", "fix"},
                   {"Q2", kQuality, "a.py", 3, 4, "second", "fix"},
                   {"Q3", kQuality, "b.py", 1, 1, "third", "fix"},
                   {"S1", kStructural, "c.py", 0, 0, "planned file is missing", "create"}};
  auto provider = std::make_shared<ScriptedProvider>();
  provider->add(testsupport::rule("synthesize_missing", {"c.py"}, "```python\nC = 3\n```"));
  provider->add(testsupport::rule("quality_fix", {"Issue Q1 in a.py (lines 1)"},
                                  R"({"patches": [{"file": "a.py", "edits": [{"start_line": 1, "end_line": 1, "text": "L1\n"}]}]})"));
  provider->add(testsupport::rule("quality_fix", {"Issue Q2 in a.py (lines 3-4)", "   4| l4"},
                                  R"({"patches": [{"file": "a.py", "edits": [{"start_line": 3, "end_line": 4, "text": ""}]}]})"));
  provider->add(testsupport::rule("quality_fix", {"Issue Q3"},
                                  R"({"patches": [{"file": "../escape.py", "edits": [{"start_line": 1, "end_line": 1, "text": "x"}]}]})"));
  auto gw = testsupport::live_gateway(provider);
  std::size_t observed = 0;
  VerifierOptions o;
  o.on_patch = [&](const PatchInstruction&, const std::string&, const std::string&) { ++observed; };
  const auto r = refine_static(*sb, "repo", report, bp, *gw, o);
  EXPECT_EQ(read_text_file(dir / "repo" / "a.py"), "L1\nl2\n");
  EXPECT_EQ(read_text_file(dir / "repo" / "c.py"), "C = 3\n");
  EXPECT_EQ(read_text_file(dir / "repo" / "b.py"), "k1\n");
  EXPECT_EQ(observed, 2u);
  std::map<std::string, std::string> status;
  for (const auto& out : r.outcomes) status[out.id] = out.status;
  EXPECT_EQ(status, (std::map<std::string, std::string>{{"Q1", "fixed"}, {"Q2", "fixed"}, {"Q3", "unfixable"}, {"S1", "fixed"}}));
  EXPECT_TRUE(r.rescan.issues.empty());
  std::size_t q3_calls = 0;
  for (const auto& rec : gw->records()) q3_calls += rec.prompt.find("Issue Q3") != std::string::npos;
  EXPECT_EQ(q3_calls, 2u);
}

TEST(Setup, ReconcilesManifestWithBlueprint) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->write_file("repo/requirements.txt", "# deps\nNumPy>=1.0\nscikit_learn==1.2");
  auto bp = blueprint_of({{"a.py"}});
  bp.execution_environment.dependencies = {{"numpy", "1.26"}, {"scikit-learn", ""}, {"toymath", "0.1"}, {"rich", ">=13"}};
  auto o = quick();
  o.install_command = "cat requirements.txt";
  const auto r = setup_environment(*sb, "repo", bp, o);
  EXPECT_EQ(r.added_dependencies, (std::vector<std::string>{"toymath==0.1", "rich>=13"}));
  EXPECT_EQ(read_text_file(dir / "repo" / "requirements.txt"), "# deps\nNumPy>=1.0\nscikit_learn==1.2\ntoymath==0.1\nrich>=13\n");
  EXPECT_NE(r.stdout_text.find("rich>=13"), std::string::npos);
}

TEST(Setup, FailingInstallStopsTheLoop) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->write_file("repo/main.py", "print(1)\n");
  auto o = quick();
  o.install_command = "echo resolver conflict >&2; exit 3";
  auto gw = testsupport::live_gateway(std::make_shared<ScriptedProvider>());
  try {
    setup_environment(*sb, "repo", blueprint_of({{"main.py"}}), o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SetupFailed);
    EXPECT_NE(std::string(e.what()).find("resolver conflict"), std::string::npos);
  }
  const auto r = refine_loop(*sb, "repo", blueprint_of({{"main.py"}}), *gw, o);
  EXPECT_EQ(r.status, VerifyStatus::SetupFailed);
  EXPECT_EQ(r.executions, 0);
  EXPECT_TRUE(gw->records().empty());
}

TEST(Execute, EntryDiscoveryAndPathNormalization) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  auto bp = blueprint_of({{"main.py"}});
  bp.staged_plan = {{"a", {"main.py"}, "python3 main.py"}, {"b", {}, " "}, {"c", {}, "true"}};
  sb->write_file("repo/main.py", "import os, sys\nsys.stderr.write(os.getcwd() + '/main.py:1: boom\\n')\nsys.exit(1)\n");
  EXPECT_EQ(discover_entry(*sb, "repo", bp), "python3 main.py && true");
  const auto t = execute(*sb, "repo", "python3 main.py", std::chrono::seconds(20));
  EXPECT_EQ(t.exit_code, 1);
  EXPECT_EQ(t.stderr_text, "main.py:1: boom\n");
  ASSERT_EQ(t.error_records.size(), 1u);
  EXPECT_EQ(t.error_records[0], (ErrorRecord{"main.py", 1, "boom"}));
  sb->write_file("repo/reproduce.sh", "true\n");
  EXPECT_EQ(discover_entry(*sb, "repo", bp), "bash reproduce.sh");
}

TEST(Execute, TimeoutBecomesAnErrorRecord) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->create_directories("repo");
  const auto t = execute(*sb, "repo", "sleep 5", std::chrono::milliseconds(300));
  EXPECT_TRUE(t.timed_out);
  EXPECT_FALSE(t.clean());
  ASSERT_EQ(t.error_records.size(), 1u);
  EXPECT_EQ(t.error_records[0].message, "timed out after 0.3 s");
}

TEST(Refine, CleanRunNeedsNoModel) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->write_file("repo/main.py", "print('ok')\n");
  auto bp = blueprint_of({{"main.py"}});
  bp.staged_plan[0].check = "python3 main.py";
  auto gw = testsupport::live_gateway(std::make_shared<ScriptedProvider>());
  const auto r = refine_loop(*sb, "repo", bp, *gw, quick());
  EXPECT_EQ(r.status, VerifyStatus::Clean);
  EXPECT_EQ(r.executions, 1);
  EXPECT_TRUE(gw->records().empty());
  EXPECT_THROW(refine_loop(*sb, "repo", bp, *gw, quick(0)), std::invalid_argument);
}

TEST(Refine, PatchOutsideRepositoryIsRejected) {
  TempDir dir;
  auto sb = sandbox_at(dir);
  sb->write_file("repo/main.py", "import sys\nsys.exit(1)\n");
  sb->write_file("outside.txt", "keep\n");
  auto bp = blueprint_of({{"main.py"}});
  bp.staged_plan[0].check = "python3 main.py";
  auto provider = std::make_shared<ScriptedProvider>();
  provider->add(testsupport::rule("fault_localize", {}, R"({"files": ["main.py", "ghost.py"]})"));
  provider->add(testsupport::rule("runtime_fix", {},
                                  R"({"patches": [{"file": "../outside.txt", "edits": [{"start_line": 1, "end_line": 1, "text": "gone\n"}]}]})"));
  auto gw = testsupport::live_gateway(provider);
  auto o = quick(2);
  o.max_retries = 0;
  const auto r = refine_loop(*sb, "repo", bp, *gw, o);
  EXPECT_EQ(r.status, VerifyStatus::MaxIterations);
  EXPECT_EQ(r.executions, 2);
  EXPECT_EQ(read_text_file(dir / "outside.txt"), "keep\n");
  ASSERT_EQ(r.iterations.size(), 2u);
  EXPECT_EQ(r.iterations[0].localized_files, (std::vector<std::string>{"main.py"}));
  EXPECT_EQ(r.iterations[0].warnings.size(), 2u);
  EXPECT_TRUE(r.iterations[0].patches.empty());
}

TEST(RefineFixtures, SingleFaultsAreRepairedLocally) {
  for (const std::string name : {"typo", "missing_dependency", "wrong_cli_argument"}) {
    TempDir dir;
    const auto f = scenarios::run_fault_fixture(name, dir.path());
    EXPECT_EQ(f.result.status, VerifyStatus::Clean) << name;
    EXPECT_EQ(f.result.executions, 2) << name;
    EXPECT_EQ(f.patches_seen, 1u) << name;
    EXPECT_EQ(f.locality_violations, 0u) << name;
  }
}

TEST(RefineFixtures, MissingDependencyRerunsSetup) {
  TempDir dir;
  const auto f = scenarios::run_fault_fixture("missing_dependency", dir.path());
  ASSERT_EQ(f.result.iterations.size(), 2u);
  EXPECT_TRUE(f.result.iterations[0].setup_rerun);
  EXPECT_EQ(f.final_repo.at("requirements.txt"), "# pinned packages\ntoymath==0.1\n");
}

TEST(RefineFixtures, CombinedFaultsResolveInOrder) {
  TempDir dir;
  const auto f = scenarios::run_fault_fixture("combined", dir.path());
  EXPECT_EQ(f.result.status, VerifyStatus::Clean);
  EXPECT_EQ(f.result.executions, 4);
  EXPECT_EQ(f.patches_seen, 3u);
  EXPECT_EQ(f.locality_violations, 0u);
  // The overlay's manifest keeps its comment line; everything else is golden.
  auto expected = testsupport::read_tree(testsupport::toy() / "golden_repo");
  expected["requirements.txt"] = "# pinned packages\ntoymath==0.1\n";
  EXPECT_EQ(f.final_repo, expected);
}

TEST(RefineFixtures, UnfixableStopsAtMaxIterWithoutTrailingPatch) {
  for (int max_iter : {1, 3, 5}) {
    TempDir dir;
    const auto f = scenarios::run_fault_fixture("unfixable", dir.path(), max_iter);
    EXPECT_EQ(f.result.status, VerifyStatus::MaxIterations);
    EXPECT_EQ(f.result.executions, max_iter);
    EXPECT_EQ(f.patches_seen, static_cast<std::size_t>(max_iter - 1));
    ASSERT_EQ(f.result.iterations.size(), static_cast<std::size_t>(max_iter));
    EXPECT_TRUE(f.result.iterations.back().patches.empty());
    EXPECT_EQ(f.locality_violations, 0u);
  }
}
