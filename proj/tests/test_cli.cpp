#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#ifndef KOOPMAN_ROM_EXECUTABLE
#error "KOOPMAN_ROM_EXECUTABLE must name the built koopman_rom binary"
#endif

namespace {

namespace fs = std::filesystem;

struct Workdir {
  fs::path dir;

  explicit Workdir(const std::string& name)
      : dir(fs::temp_directory_path() / ("koopman_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  fs::path config(const std::string& extra) const {
    const fs::path path = dir / "run.cfg";
    std::ofstream out(path);
    out << "nx = 16\nny = 9\nsnapshot_dt = 30\nn_snapshots = 6\n"
        << "output_dir = " << (dir / "out").string() << "\n"
        << extra;
    return path;
  }
};

// Exit status of the binary with the given arguments; output is discarded.
int run(const std::string& args) {
  const std::string cmd = std::string("\"") + KOOPMAN_ROM_EXECUTABLE + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

TEST(Cli, FullPipelineSucceeds) {
  const Workdir w("pipeline");
  const auto cfg = quoted(w.config("epsilon = 0.5\n"));
  ASSERT_EQ(run("simulate --config " + cfg), 0);
  EXPECT_TRUE(fs::exists(w.dir / "out" / "h.ksnp"));
  ASSERT_EQ(run("rom --config " + cfg), 0);
  EXPECT_TRUE(fs::exists(w.dir / "out" / "summary.csv"));
  EXPECT_EQ(run("reconstruct --config " + cfg + " --field u --time 60s"), 0);
  EXPECT_TRUE(fs::exists(w.dir / "out" / "u_rom_t2.csv"));
  EXPECT_EQ(run("vorticity --config " + cfg + " --time 3"), 0);
  EXPECT_TRUE(fs::exists(w.dir / "out" / "vorticity_diff_t3.csv"));
}

TEST(Cli, OutOverridesConfig) {
  const Workdir w("out_override");
  const auto cfg = quoted(w.config(""));
  ASSERT_EQ(run("simulate --config " + cfg + " --out " + quoted(w.dir / "elsewhere")), 0);
  EXPECT_TRUE(fs::exists(w.dir / "elsewhere" / "v.ksnp"));
  EXPECT_FALSE(fs::exists(w.dir / "out"));
}

TEST(Cli, UnmetThresholdExitsOne) {
  const Workdir w("not_converged");
  const auto cfg = quoted(w.config("epsilon = 1e-12\n"));
  ASSERT_EQ(run("simulate --config " + cfg), 0);
  EXPECT_EQ(run("rom --config " + cfg), 1);
  // The reports are still written.
  EXPECT_TRUE(fs::exists(w.dir / "out" / "summary.csv"));
  EXPECT_EQ(run("rom --config " + cfg + " --eps 0.5"), 0);
}

TEST(Cli, SolverFailureExitsTwo) {
  const Workdir w("cfl");
  EXPECT_EQ(run("simulate --config " + quoted(w.config("cfl = 10\n"))), 2);
}

TEST(Cli, InputProblemsExitThree) {
  const Workdir w("inputs");
  EXPECT_EQ(run("simulate --config " + quoted(w.dir / "missing.cfg")), 3);
  EXPECT_EQ(run("rom --config " + quoted(w.config(""))), 3);
  EXPECT_EQ(run("simulate --config " + quoted(w.config("colour = blue\n"))), 3);
  EXPECT_EQ(run("rom --config " + quoted(w.config("")) + " --eps 2"), 3);
  EXPECT_EQ(run("rom --config " + quoted(w.config("")) + " --field w"), 3);
  EXPECT_EQ(run("teleport"), 3);
  EXPECT_EQ(run(""), 3);

  const auto cfg = quoted(w.config("epsilon = 0.5\n"));
  ASSERT_EQ(run("simulate --config " + cfg), 0);
  ASSERT_EQ(run("rom --config " + cfg), 0);
  EXPECT_EQ(run("reconstruct --config " + cfg + " --time 50h"), 3);
  EXPECT_EQ(run("reconstruct --config " + cfg + " --time later"), 3);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

}  // namespace
