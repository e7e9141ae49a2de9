#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "support.hpp"

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(JOINTSSL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command line verbs run end to end and map errors to exit codes") {
  const auto out = testing::scratch_dir("cli");
  const std::string common = std::string("--config ") + JOINTSSL_CONFIG_DIR + "/smoke.jsonc --out " + out.string();

  CHECK(run("train " + common + " --fold 0") == 3);  // no splits yet
  CHECK(run("prepare " + common) == 0);
  CHECK(std::filesystem::exists(out / "splits" / "fold_0.json"));
  CHECK(run("train " + common + " --fold 0") == 0);
  CHECK(std::filesystem::exists(out / "train" / "fold_0" / "best.ckpt"));
  CHECK(run("evaluate " + common + " --fold 0") == 0);
  CHECK(std::filesystem::exists(out / "eval" / "fold_0" / "report.json"));
  CHECK(std::filesystem::exists(out / "eval" / "fold_0" / "noise_sweep.csv"));

  CHECK(run("") == 1);
  CHECK(run("train " + common + " --fold 9") == 1);
  CHECK(run("evaluate " + common + " --fold 0 --checkpoint " + (out / "none.ckpt").string()) == 3);
  std::ofstream(out / "bad.jsonc") << R"({"train": {"epochz": 1}})";
  CHECK(run("prepare --config " + (out / "bad.jsonc").string() + " --out " + out.string()) == 1);
}
