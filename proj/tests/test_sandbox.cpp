#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "repogen/error.hpp"
#include "repogen/sandbox.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace repogen;
using nlohmann::json;
using testsupport::TempDir;

namespace {

std::vector<json> audit_records(const fs::path& root) {
  std::vector<json> out;
  std::ifstream in(root / "sandbox_audit.jsonl");
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

void expect_violation(const std::function<void()>& f) {
  try {
    f();
    FAIL() << "no SandboxViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SandboxViolation);
  }
}

}  // namespace

TEST(Sandbox, FileOperationsStayInsideAndAreAudited) {
  TempDir dir;
  Sandbox sb(SandboxOptions{dir.path()});
  sb.set_phase("generate");
  sb.write_file("repo/a.py", "x\n");
  EXPECT_EQ(sb.read_file(dir / "repo" / "a.py"), "x\n");
  EXPECT_TRUE(sb.exists("repo/./a.py"));
  EXPECT_EQ(sb.file_size("repo/a.py"), 2u);
  sb.copy_tree("repo", "copy");
  EXPECT_EQ(sb.list_files("copy"), (std::vector<std::string>{"a.py"}));
  sb.remove("copy/a.py");
  const auto recs = audit_records(dir.path());
  ASSERT_EQ(recs.size(), 5u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i]["seq"], i);
    EXPECT_EQ(recs[i]["phase"], "generate");
    EXPECT_FALSE(fs::path(recs[i]["path"].get<std::string>()).is_absolute());
  }
  EXPECT_EQ(recs[0]["op"], "write");
  EXPECT_EQ(recs[0]["path"], "repo/a.py");
  EXPECT_EQ(recs[2]["op"], "copy");
  EXPECT_EQ(recs[2]["from"], "repo");
}

TEST(Sandbox, EscapesAreDeniedAndLogged) {
  TempDir dir;
  TempDir outside;
  Sandbox sb(SandboxOptions{dir / "ws"});
  fs::create_symlink(outside.path(), dir / "ws" / "out");
  fs::create_directories(dir / "ws" / "real");
  fs::create_symlink(dir / "ws" / "real", dir / "ws" / "in");
  expect_violation([&] { sb.write_file("../x", "1"); });
  expect_violation([&] { sb.write_file("repo/../../x", "1"); });
  expect_violation([&] { sb.read_file("/etc/hostname"); });
  expect_violation([&] { sb.write_file("out/x", "1"); });
  expect_violation([&] { sb.list_files(".."); });
  expect_violation([&] { sb.run("true", "..", std::chrono::seconds(5)); });
  expect_violation([&] { sb.remove_all("."); });
  sb.write_file("in/ok.txt", "1");
  EXPECT_TRUE(fs::exists(dir / "ws" / "real" / "ok.txt"));
  EXPECT_TRUE(fs::is_empty(outside.path()));
  EXPECT_FALSE(fs::exists(dir / "x"));

  const auto s = check_audit_log(dir / "ws" / "sandbox_audit.jsonl");
  EXPECT_EQ(s.denied, 6u);
  EXPECT_EQ(s.outside_root, 0u);
  const auto t = scenarios::scan_audit_logs(dir / "ws");
  EXPECT_EQ(t.denied, 6u);
  EXPECT_EQ(t.outside_root, 0u);
  for (const auto& r : audit_records(dir / "ws")) {
    if (r.value("denied", false)) EXPECT_TRUE(fs::path(r["path"].get<std::string>()).is_absolute());
  }
}

TEST(Sandbox, AuditCheckersAgreeOnForgedBreaches) {
  TempDir dir;
  {
    std::ofstream out(dir / "sandbox_audit.jsonl");
    out << R"({"op":"write","path":"repo/a.py","seq":0,"phase":"p"})" << "\n"
        << R"({"op":"write","path":"/etc/passwd","seq":1,"phase":"p"})" << "\n"
        << R"({"op":"read","path":"repo/../../x","seq":2,"phase":"p"})" << "\n"
        << R"({"op":"copy","path":"repo","from":"../elsewhere","seq":3,"phase":"p"})" << "\n"
        << R"({"op":"deny","path":"/tmp/x","denied":true,"seq":4,"phase":"p"})" << "\n";
  }
  const auto s = check_audit_log(dir / "sandbox_audit.jsonl");
  EXPECT_EQ(s.records, 5u);
  EXPECT_EQ(s.denied, 1u);
  EXPECT_EQ(s.outside_root, 3u);
  const auto t = scenarios::scan_audit_logs(dir.path());
  EXPECT_EQ(t.records, 5u);
  EXPECT_EQ(t.denied, 1u);
  EXPECT_EQ(t.outside_root, 3u);
}

TEST(Sandbox, RunCapturesOutputAndUsesWorkspaceEnvironment) {
  TempDir dir;
  SandboxOptions o{dir.path()};
  o.env["EXTRA"] = "base";
  Sandbox sb(o);
  const auto r = sb.run("pwd; echo \"$HOME|$EXTRA|$OVERRIDE|$PYTHONHASHSEED\"; echo err >&2; exit 3", "work",
                        std::chrono::seconds(10), {{"OVERRIDE", "x"}});
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(r.timed_out);
  const fs::path root = fs::weakly_canonical(dir.path());
  EXPECT_EQ(r.stdout_text, (root / "work").string() + "\n" + (root / "env" / "home").string() + "|base|x|0\n");
  EXPECT_EQ(r.stderr_text, "err\n");
  const auto recs = audit_records(dir.path());
  ASSERT_FALSE(recs.empty());
  EXPECT_EQ(recs.back()["op"], "exec");
  EXPECT_EQ(recs.back()["path"], "work");
  EXPECT_EQ(recs.back()["exit_code"], 3);
}

TEST(Sandbox, TimeoutKillsTheWholeProcessGroup) {
  TempDir dir;
  Sandbox sb(SandboxOptions{dir.path()});
  const auto start = std::chrono::steady_clock::now();
  const auto r = sb.run("(sleep 1; touch late) & sleep 30", ".", std::chrono::milliseconds(300));
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
  EXPECT_TRUE(r.timed_out);
  EXPECT_EQ(r.exit_code, 124);
  std::this_thread::sleep_for(std::chrono::milliseconds(1500));
  EXPECT_FALSE(fs::exists(dir / "late"));
}

TEST(Sandbox, ContainerCommandLine) {
  TempDir dir;
  SandboxOptions o{dir.path()};
  o.backend = SandboxBackend::Container;
  o.container_image = "img:1";
  o.env["K"] = "V";
  Sandbox sb(o);
  const std::string root = sb.root().string();
  const auto argv = sb.command_line("make", sb.root() / "repo");
  EXPECT_EQ(argv, (std::vector<std::string>{"docker", "run", "--rm", "--network", "none", "-v", root + ":" + root, "-w",
                                            root + "/repo", "-e", "K=V", "img:1", "/bin/sh", "-c", "make"}));
  Sandbox plain(SandboxOptions{dir / "p"});
  EXPECT_EQ(plain.command_line("make", "x"), (std::vector<std::string>{"/bin/sh", "-c", "make"}));
}

TEST(Sandbox, ConcurrentWritesKeepADenseSequence) {
  TempDir dir;
  Sandbox sb(SandboxOptions{dir.path()});
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) sb.write_file("t" + std::to_string(t) + "/" + std::to_string(i), "x");
    });
  }
  for (auto& th : threads) th.join();
  const auto recs = audit_records(dir.path());
  ASSERT_EQ(recs.size(), 100u);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(recs[i]["seq"], i);
}

TEST(Sandbox, EmptyRootIsAConfigError) {
  try {
    Sandbox sb(SandboxOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}
