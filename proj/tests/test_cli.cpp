#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "mmlm/io.hpp"
#include "mmlm/synthetic.hpp"
#include "test_util.hpp"

using namespace mmlm;
using namespace mmlm::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
  // Last stdout line: the run directory.
  fs::path dir() const {
    auto end = out.find_last_not_of('\n');
    auto start = out.rfind('\n', end);
    return out.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
  }
};

Run run_tool(const std::string& args, const fs::path& scratch) {
  const char* bin = std::getenv("MMLM_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "MMLM_BIN must point at the mmlm executable");
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(bin) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(read_file(dir / "manifest.json")); }

std::string prepare_args(const fs::path& raw, const fs::path& runs, bool features = true) {
  return "prepare --captions de=" + (raw / "captions.de.txt").string() + " --captions en=" +
         (raw / "captions.en.txt").string() + (features ? " --features " + (raw / "images.mmf").string() : "") +
         " --set min_count=1 --set val_fraction=0.2 --set test_fraction=0.2 -o " + runs.string();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("prepare is hash-identical on rerun and records its inputs") {
    const fs::path s = scratch_dir("cli_prepare");
    write_grounded_files(grounded_disambiguation(30, 3), s / "raw");
    const Run a = run_tool(prepare_args(s / "raw", s / "runs"), s);
    REQUIRE_MESSAGE(a.code == 0, a.err);
    CHECK(a.out.find("vocabulary") != std::string::npos);
    const auto first = manifest(a.dir());
    const Run b = run_tool(prepare_args(s / "raw", s / "runs"), s);
    REQUIRE(b.code == 0);
    CHECK(b.dir() == a.dir());
    CHECK(manifest(b.dir()) == first);
    CHECK(first["inputs"].contains("captions.en"));
    CHECK(first["config"]["min_count"] == 1);
    CHECK(first["outputs"].contains("vocab.en.tsv"));
    CHECK(a.dir().filename().string().rfind("prepare-", 0) == 0);
  }

  TEST_CASE("evaluate on identical files reports BLEU 100") {
    const fs::path s = scratch_dir("cli_eval");
    write_text(s / "h.txt", "a\ta man rides a red bicycle\nb\ttwo dogs run on the beach\n");
    const Run r = run_tool("evaluate --hypotheses " + (s / "h.txt").string() + " --references " + (s / "h.txt").string() +
                           " -o " + (s / "runs").string(),
                       s);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.rfind("BLEU = 100.00", 0) == 0);
    const auto bleu = nlohmann::json::parse(read_file(r.dir() / "bleu.json"));
    CHECK(bleu["bleu"].get<double>() == doctest::Approx(100.0));
    CHECK(read_file(r.dir() / "sentence_scores.tsv") == "a\t100.000000\nb\t100.000000\n");
  }

  TEST_CASE("analyze --compare produces the per-bin histogram") {
    const fs::path s = scratch_dir("cli_analyze");
    write_text(s / "a.tsv", "i1\t5\ni2\t8\ni3\t42\ni4\t100\n");
    write_text(s / "b.tsv", "i1\t15\ni2\t10\ni3\t40\ni4\t100\n");
    const Run r = run_tool("analyze --compare " + (s / "a.tsv").string() + " " + (s / "b.tsv").string() + " -o " +
                           (s / "runs").string(),
                       s);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(read_file(r.dir() / "histogram.csv") ==
          "bin,count,mean_delta\n0,2,6\n10,0,0\n20,0,0\n30,0,0\n40,1,-2\n50,0,0\n60,0,0\n70,0,0\n80,0,0\n90,1,0\n");
  }

  TEST_CASE("full chain: prepare, train, extract, train with source features, generate, evaluate") {
    const fs::path s = scratch_dir("cli_chain");
    const fs::path runs = s / "runs";
    write_grounded_files(grounded_disambiguation(30, 3), s / "raw");
    const Run prep = run_tool(prepare_args(s / "raw", runs), s);
    REQUIRE_MESSAGE(prep.code == 0, prep.err);
    const std::string data = prep.dir().string();
    write_text(s / "train.json", R"({"model": {"hidden_size": 6, "embedding_size": 5},
                                     "trainer": {"max_epochs": 2, "batch_size": 8}})");

    const Run src = run_tool("train --config " + (s / "train.json").string() + " --dataset " + data +
                             " --language de --set visual=true -o " + runs.string(),
                         s);
    REQUIRE_MESSAGE(src.code == 0, src.err);
    CHECK(fs::exists(src.dir() / "model.ckpt"));
    CHECK(fs::exists(src.dir() / "train.log.jsonl"));

    const Run ext = run_tool("extract --checkpoint " + (src.dir() / "model.ckpt").string() + " --dataset " + data +
                             " --language de -o " + runs.string(),
                         s);
    REQUIRE_MESSAGE(ext.code == 0, ext.err);
    CHECK(fs::exists(ext.dir() / "transfer.test.mmf.json"));

    const Run tgt = run_tool("train --config " + (s / "train.json").string() + " --dataset " + data +
                             " --language en --set source_features.train=" + (ext.dir() / "transfer.train.mmf").string() +
                             " --set source_features.val=" + (ext.dir() / "transfer.val.mmf").string() + " -o " +
                             runs.string(),
                         s);
    REQUIRE_MESSAGE(tgt.code == 0, tgt.err);

    const Run gen = run_tool("generate --checkpoint " + (tgt.dir() / "model.ckpt").string() + " --dataset " + data +
                             " --language en --source-features " + (ext.dir() / "transfer.test.mmf").string() + " -o " +
                             runs.string(),
                         s);
    REQUIRE_MESSAGE(gen.code == 0, gen.err);
    const Run ev = run_tool("evaluate --hypotheses " + (gen.dir() / "generations.txt").string() + " --references " + data +
                            "/test.en.tsv -o " + runs.string(),
                        s);
    REQUIRE_MESSAGE(ev.code == 0, ev.err);
    CHECK(ev.out.rfind("BLEU = ", 0) == 0);

    // Missing source features for a source-conditioned checkpoint.
    const Run bad = run_tool("generate --checkpoint " + (tgt.dir() / "model.ckpt").string() + " --dataset " + data +
                             " --language en -o " + runs.string(),
                         s);
    CHECK(bad.code != 0);
    CHECK(bad.err.find("source_features") != std::string::npos);
  }

  TEST_CASE("experiment with a single-model variant") {
    const fs::path s = scratch_dir("cli_experiment");
    write_grounded_files(grounded_disambiguation(30, 3), s / "raw");
    const Run prep = run_tool(prepare_args(s / "raw", s / "runs"), s);
    REQUIRE(prep.code == 0);
    write_text(s / "exp.json", R"({"variant": "MLM_only", "seeds": [4],
                                   "target_model": {"hidden_size": 6, "embedding_size": 5},
                                   "trainer": {"max_epochs": 2, "batch_size": 8}})");
    const Run r = run_tool("experiment --config " + (s / "exp.json").string() + " --dataset " + prep.dir().string() +
                           " -o " + (s / "runs").string(),
                       s);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("En MLM") != std::string::npos);
    CHECK(r.dir().filename().string().find("-s4") != std::string::npos);
    CHECK(fs::exists(r.dir() / "seed-4/target.ckpt"));
    CHECK_FALSE(fs::exists(r.dir() / "seed-4/source.ckpt"));
  }

  TEST_CASE("errors exit nonzero and quarantine partial output") {
    const fs::path s = scratch_dir("cli_errors");
    write_grounded_files(grounded_disambiguation(30, 3), s / "raw");
    const Run prep = run_tool(prepare_args(s / "raw", s / "runs", false), s);
    REQUIRE(prep.code == 0);

    const Run mlm = run_tool("train --dataset " + prep.dir().string() + " --language en --set visual=true -o " +
                             (s / "runs").string(),
                         s);
    CHECK(mlm.code != 0);
    CHECK(mlm.err.find("no image features") != std::string::npos);
    CHECK(fs::exists(s / "runs" / "failed"));

    CHECK(run_tool("frobnicate", s).code != 0);
    CHECK(run_tool("train --set nokey -o " + (s / "runs").string(), s).code != 0);
    const Run typo = run_tool("train --dataset " + prep.dir().string() + " --language en --set trainer.lr=1 -o " +
                              (s / "runs").string(),
                          s);
    CHECK(typo.code != 0);
    CHECK(typo.err.find("unknown key 'lr'") != std::string::npos);
    CHECK(run_tool("prepare --captions en=/nonexistent -o " + (s / "runs").string(), s).code != 0);
  }

  TEST_CASE("a run manifest repeats the run") {
    const fs::path s = scratch_dir("cli_manifest");
    write_text(s / "h.txt", "a\tx y z\n");
    write_text(s / "r.txt", "a\tx y w\n");
    const Run first = run_tool("evaluate --hypotheses " + (s / "h.txt").string() + " --references " +
                               (s / "r.txt").string() + " -o " + (s / "runs").string(),
                           s);
    REQUIRE(first.code == 0);
    const std::string before = read_file(first.dir() / "manifest.json");
    fs::copy_file(first.dir() / "manifest.json", s / "m.json");
    const Run again = run_tool("evaluate --config " + (s / "m.json").string() + " -o " + (s / "runs").string(), s);
    REQUIRE(again.code == 0);
    CHECK(again.dir() == first.dir());
    CHECK(read_file(again.dir() / "manifest.json") == before);
  }
}
