// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "support.hpp"

namespace {

using dkrn::test::read_file;
using dkrn::test::TempDir;
using dkrn::test::write_file;

std::string cli() {
  if (const char* p = std::getenv("DKRN_CLI_PATH")) return p;
  return DKRN_CLI_PATH;
}

// Exit status of `prefix dkrn args`, with output sent to `log`.
int run(const std::string& args, const std::filesystem::path& log, const std::string& prefix = "env -u DKRN_SEED") {
  const std::string cmd = prefix + " '" + cli() + "' " + args + " > '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  REQUIRE(raw != -1);
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : 128;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Corpus, vocabulary, splits and graph for a small synthetic run.
struct Artifacts {
  TempDir dir;
  std::filesystem::path log = dir / "log.txt";

  Artifacts() {
    REQUIRE(run("gen-synthetic --conversations 90 --seed 3 --out-corpus " + q(dir / "corpus.jsonl") +
                    " --out-embeddings " + q(dir / "emb.txt") + " --out-lexicon " + q(dir / "lex.txt"),
                log) == 0);
    REQUIRE(run("build-vocab --corpus " + q(dir / "corpus.jsonl") + " --lexicon " + q(dir / "lex.txt") +
                    " --min-frequency 1 --out-vocab " + q(dir / "vocab.tsv") + " --out-train " +
                    q(dir / "train.jsonl") + " --out-valid " + q(dir / "valid.jsonl") + " --out-test " +
                    q(dir / "test.jsonl"),
                log) == 0);
    REQUIRE(run("build-graph --train " + q(dir / "train.jsonl") + " --vocab " + q(dir / "vocab.tsv") +
                    " --out-graph " + q(dir / "graph.bin"),
                log) == 0);
  }

  std::string common() const {
    return " --train " + q(dir / "train.jsonl") + " --vocab " + q(dir / "vocab.tsv") + " --embeddings " +
           q(dir / "emb.txt");
  }
};

const Artifacts& artifacts() {
  static const Artifacts a;
  return a;
}

// Trains every model into `out` and runs self-play over all variants.
std::string train_and_play(const Artifacts& a, const std::filesystem::path& out) {
  const auto& log = a.log;
  const std::string small = " --epochs 1 --hidden-dim 6 --seed 2";
  const std::string small_retrieval = " --epochs 1 --hidden-dim 16 --seed 2";
  REQUIRE(run("train-predictor" + a.common() + " --graph " + q(a.dir / "graph.bin") + small +
                  " --embedding-dim 16 --batch-size 8 --out " + q(out / "dkrn.ckpt"),
              log) == 0);
  REQUIRE(run("train-predictor" + a.common() + " --routing false" + small + " --embedding-dim 16 --batch-size 8 --out " +
                  q(out / "neural.ckpt"),
              log) == 0);
  REQUIRE(run("train-retrieval" + a.common() + small_retrieval + " --batch-size 4 --out " + q(out / "rk.ckpt"), log) == 0);
  REQUIRE(run("train-retrieval" + a.common() + " --keyword false" + small_retrieval + " --batch-size 4 --out " +
                  q(out / "rp.ckpt"),
              log) == 0);
  REQUIRE(run("selfplay" + a.common() + " --test " + q(a.dir / "test.jsonl") + " --graph " + q(a.dir / "graph.bin") +
                  " --dkrn " + q(out / "dkrn.ckpt") + " --neural " + q(out / "neural.ckpt") +
                  " --retrieval-keyword " + q(out / "rk.ckpt") + " --retrieval-plain " + q(out / "rp.ckpt") +
                  " --variant all --episodes 6 --pool-size 60 --seed 5 --out " + q(out / "selfplay.txt"),
              log) == 0);
  return read_file(out / "selfplay.txt");
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  TempDir dir;
  const auto log = dir / "log.txt";
  CHECK(run("", log) == 1);
  CHECK(run("no-such-command", log) == 1);
  CHECK(run("gen-synthetic", log) == 1);
  CHECK(read_file(log).find("--out-corpus") != std::string::npos);
  CHECK(run("gen-synthetic --out-corpus x --conversations many", log) == 1);
  CHECK(run("gen-synthetic --help", log) == 0);
  CHECK(read_file(log).find("DKRN_") != std::string::npos);
}

TEST_CASE("missing input files exit with 2") {
  TempDir dir;
  const auto log = dir / "log.txt";
  CHECK(run("build-graph --train " + q(dir / "none.jsonl") + " --vocab " + q(dir / "none.tsv") + " --out-graph " +
                q(dir / "g.bin"),
            log) == 2);
  CHECK(read_file(log).find("none") != std::string::npos);
}

TEST_CASE("config file keys are validated per command") {
  TempDir dir;
  const auto log = dir / "log.txt";
  write_file(dir / "bad.cfg", "seed = 1\nepisodes = 3\n");
  CHECK(run("gen-synthetic --config " + q(dir / "bad.cfg") + " --out-corpus " + q(dir / "c.jsonl"), log) == 1);
  CHECK(read_file(log).find("episodes") != std::string::npos);
  write_file(dir / "broken.cfg", "seed\n");
  CHECK(run("gen-synthetic --config " + q(dir / "broken.cfg") + " --out-corpus " + q(dir / "c.jsonl"), log) == 1);
  CHECK(run("gen-synthetic --config " + q(dir / "absent.cfg") + " --out-corpus " + q(dir / "c.jsonl"), log) == 2);
}

TEST_CASE("flags override environment, which overrides the config file") {
  TempDir dir;
  const auto log = dir / "log.txt";
  const std::string base = "gen-synthetic --conversations 12 --out-corpus ";
  for (int seed : {5, 6, 7}) REQUIRE(run(base + q(dir / ("seed" + std::to_string(seed))) + " --seed " + std::to_string(seed), log) == 0);
  const auto s5 = read_file(dir / "seed5"), s6 = read_file(dir / "seed6"), s7 = read_file(dir / "seed7");
  REQUIRE(s5 != s6);
  REQUIRE(s6 != s7);

  write_file(dir / "run.cfg", "seed = 5\nconversations = 12\n");
  const std::string with_cfg = "gen-synthetic --config " + q(dir / "run.cfg") + " --out-corpus ";
  CHECK(run(with_cfg + q(dir / "a"), log) == 0);
  CHECK(read_file(dir / "a") == s5);
  CHECK(run(with_cfg + q(dir / "b"), log, "env DKRN_SEED=6") == 0);
  CHECK(read_file(dir / "b") == s6);
  CHECK(run(with_cfg + q(dir / "c") + " --seed 7", log, "env DKRN_SEED=6") == 0);
  CHECK(read_file(dir / "c") == s7);
  CHECK(run("gen-synthetic --out-corpus " + q(dir / "d") + " --conversations 12", log,
            "env DKRN_SEED=6 DKRN_CONFIG=" + q(dir / "run.cfg")) == 0);
  CHECK(read_file(dir / "d") == s6);
}

TEST_CASE("bad option values are usage errors") {
  const auto& a = artifacts();
  TempDir dir;
  const auto log = dir / "log.txt";
  CHECK(run("selfplay" + a.common() + " --test " + q(a.dir / "test.jsonl") + " --variant oracle --out " +
                q(dir / "s.txt"),
            log) == 1);
  CHECK(run("selfplay" + a.common() + " --test " + q(a.dir / "test.jsonl") + " --variant dkrn --out " +
                q(dir / "s.txt"),
            log) == 1);
}

TEST_CASE("training and self-play are byte-identical across runs") {
  const auto& a = artifacts();
  TempDir one, two;
  const auto first = train_and_play(a, one.path());
  const auto second = train_and_play(a, two.path());
  CHECK(first == second);
  CHECK(read_file(one / "dkrn.ckpt") == read_file(two / "dkrn.ckpt"));
  CHECK(first.find("# selfplay variant=dkrn") != std::string::npos);
  CHECK(first.find("# selfplay variant=retrieval-stgy") != std::string::npos);
  CHECK(first.find("# table\n") != std::string::npos);
}
