#include <doctest.h>

#include <fstream>

#include "mmlm/checkpoint.hpp"
#include "mmlm/dataset.hpp"
#include "mmlm/errors.hpp"
#include "mmlm/io.hpp"
#include "mmlm/pipeline.hpp"
#include "mmlm/synthetic.hpp"
#include "test_util.hpp"

using namespace mmlm;
using namespace mmlm::testing;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

// Small grounded dataset prepared once per call site.
fs::path grounded_dataset(const std::string& name, std::size_t items = 40, bool with_features = true) {
  const fs::path root = scratch_dir(name);
  write_grounded_files(grounded_disambiguation(items, 7), root / "raw");
  PrepareConfig pc;
  pc.captions = {{"de", root / "raw/captions.de.txt"}, {"en", root / "raw/captions.en.txt"}};
  if (with_features) pc.features = root / "raw/images.mmf";
  pc.fractions = {0.2, 0.2};
  pc.min_count = 1;
  prepare_dataset(pc, root / "data");
  return root / "data";
}

ExperimentConfig tiny_experiment(Variant v) {
  ExperimentConfig c;
  c.variant = v;
  c.source_model = {6, 5};
  c.target_model = {7, 5};
  c.trainer.max_epochs = 3;
  c.trainer.batch_size = 8;
  c.trainer.learning_rate = 1e-2;
  c.seeds = {1, 2};
  return c;
}

std::map<std::string, std::string> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = git_blob_sha1_file(e.path());
  }
  return out;
}

ExperimentReport fake_report(Variant v, double bleu, std::string split = "en:abc") {
  ExperimentReport r;
  r.variant = v;
  r.source_language = is_transfer(v) ? "de" : "";
  r.target_language = "en";
  r.test_split = std::move(split);
  r.bleu = {bleu, 0.1};
  r.perplexity = {10, 0.5};
  return r;
}

}  // namespace

TEST_SUITE("data_pipeline") {
  TEST_CASE("prepare_dataset: vocabulary, splits and token statistics") {
    const fs::path root = scratch_dir("prepare");
    write_text(root / "en.txt",
               "i1\tA red house.\ni1\tsecond description ignored\ni2\ta red bicycle\ni3\ta blue house\n"
               "i4\ta red house\ni5\tthe zebra\ni9\tonly english\n");
    write_text(root / "de.txt", "i1\tein rotes Haus\ni2\tein rotes Rad\ni3\tein blaues Haus\ni4\tein rotes Haus\ni5\tdas Zebra\n");
    write_text(root / "splits.tsv", "# manual\ntrain\ti1\ntrain\ti2\ntrain\ti3\nval\ti4\ntest\ti5\n");
    PrepareConfig pc;
    pc.captions = {{"en", root / "en.txt"}, {"de", root / "de.txt"}};
    pc.split_manifest = root / "splits.tsv";
    pc.min_count = 2;
    const PrepareReport r = prepare_dataset(pc, root / "data");
    CHECK(r.dropped_items == 1);
    CHECK(r.train_items == 3);
    const LanguageStats& en = r.languages.at("en");
    // train en: "a red house ." "a red bicycle" "a blue house" -> a:3 red:2 house:2 kept.
    CHECK(en.training_tokens == 10);
    CHECK(en.training_types == 6);
    CHECK(en.vocabulary_size == 4 + 3);
    CHECK(en.training_unk_tokens == 3);
    CHECK(en.kept_tokens() == 7);
    CHECK(r.str().find("7 in vocabulary") != std::string::npos);

    const PreparedDataset d = PreparedDataset::load(root / "data");
    CHECK(d.languages() == std::vector<std::string>{"de", "en"});
    CHECK_FALSE(d.has_features());
    CHECK(d.vocabulary("en").token(4) == "a");
    CHECK(d.corpus("en", "train").find("i1")->tokens == std::vector<std::string>{"a", "red", "house", "."});
    CHECK(d.corpus("en", "test").find("i5")->indices ==
          std::vector<Index>{Vocabulary::kBos, Vocabulary::kUnk, Vocabulary::kUnk, Vocabulary::kEos});
    CHECK(d.split("val") == std::vector<std::string>{"i4"});
    CHECK_THROWS_AS(d.corpus("fr", "train"), ConfigError);
    CHECK_THROWS_AS(d.split("dev"), ConfigError);
    CHECK_THROWS_AS(d.features(), DataError);
  }

  TEST_CASE("prepare_dataset is deterministic and fails fast on missing inputs") {
    const fs::path a = grounded_dataset("prepare_a");
    const fs::path b = grounded_dataset("prepare_b");
    CHECK(tree_hashes(a) == tree_hashes(b));
    CHECK(PreparedDataset::load(a).features().size() == 40);

    const fs::path root = scratch_dir("prepare_bad");
    write_text(root / "en.txt", "x1\ta b\nx2\tc d\n");
    PrepareConfig pc;
    pc.captions = {{"en", root / "en.txt"}};
    pc.features = root / "missing.mmf";
    CHECK_THROWS_AS(prepare_dataset(pc, root / "out"), DataError);

    FeatureStore partial(2);
    partial.insert("x1", Tensor::vector({1, 2}));
    save_features(root / "partial.mmf", partial);
    pc.features = root / "partial.mmf";
    CHECK_THROWS_AS(prepare_dataset(pc, root / "out"), DataError);
    CHECK_THROWS_AS(PreparedDataset::load(root / "nothing"), DataError);
  }

  TEST_CASE("vocabulary files round-trip") {
    const Vocabulary v = toy_vocab(5);
    CHECK(parse_vocabulary(format_vocabulary(v), 1, "mem") == v);
  }
}

TEST_SUITE("transfer_pipeline") {
  TEST_CASE("variants") {
    for (Variant v : {Variant::LM_only, Variant::MLM_only, Variant::LM_to_LM, Variant::MLM_to_MLM, Variant::LM_to_MLM,
                      Variant::MLM_to_LM}) {
      CHECK(parse_variant(variant_name(v)) == v);
    }
    CHECK(variant_label(Variant::MLM_to_LM, "de", "en") == "De MLM -> En LM");
    CHECK(variant_label(Variant::MLM_only, "de", "en") == "En MLM");
    CHECK(variant_label(Variant::LM_to_MLM, "en", "de") == "En LM -> De MLM");
    CHECK_THROWS_AS(parse_variant("MLM"), ConfigError);
  }

  TEST_CASE("experiment config round-trips through JSON and validates") {
    ExperimentConfig c = tiny_experiment(Variant::LM_to_MLM);
    c.jobs = 3;
    const nlohmann::ordered_json j = c;
    const ExperimentConfig back = j.get<ExperimentConfig>();
    CHECK(nlohmann::ordered_json(back).dump() == j.dump());

    nlohmann::ordered_json typo = j;
    typo["trainer"]["learnig_rate"] = 1;
    CHECK_THROWS_AS(typo.get<ExperimentConfig>(), ConfigError);

    ExperimentConfig same = c;
    same.source_language = "en";
    CHECK_THROWS_AS(same.validate(), ConfigError);
    ExperimentConfig none = c;
    none.seeds.clear();
    CHECK_THROWS_AS(none.validate(), ConfigError);
  }

  TEST_CASE("extract_stage: bit-identical reruns, dimension and provenance") {
    const fs::path data_dir = grounded_dataset("extract");
    const PreparedDataset data = PreparedDataset::load(data_dir);
    const Vocabulary& vocab = data.vocabulary("de");
    ModelConfig mc = toy_config(vocab.size(), 4, 256);
    Rng rng(3);
    const ConditionedSequenceModel model(mc, vocab, initialize_params(mc, rng));
    const fs::path dir = scratch_dir("extract_out");
    save_checkpoint(dir / "src.ckpt", model);

    const auto a = extract_stage(dir / "src.ckpt", data.corpus("de", "val"), vocab, nullptr);
    save_transfer_features(dir / "a.mmf", a);
    save_transfer_features(dir / "b.mmf", extract_stage(dir / "src.ckpt", data.corpus("de", "val"), vocab, nullptr));
    CHECK(read_file(dir / "a.mmf") == read_file(dir / "b.mmf"));
    CHECK(a.store.dim() == 256);
    const std::string bytes = read_file(dir / "a.mmf");
    CHECK(static_cast<unsigned char>(bytes[8]) == 0);
    CHECK(static_cast<unsigned char>(bytes[9]) == 1);  // little-endian 256
    CHECK(a.source_checkpoint == git_blob_sha1_file(dir / "src.ckpt"));
    CHECK(a.split == "val");
    for (const auto& item : data.corpus("de", "val").items()) {
      CHECK(a.store.at(item.id) == model.forward(item.indices, {}).final_hidden);
    }

    const TransferFeatures back = load_transfer_features(dir / "a.mmf");
    CHECK(back.source_checkpoint == a.source_checkpoint);
    // Stored as float32.
    for (const auto& [id, v] : a.store.entries()) {
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(back.store.at(id)[i] == static_cast<Real>(static_cast<float>(v[i])));
    }

    // Tampering with the vectors breaks the recorded hash.
    std::string tampered = bytes;
    tampered.back() ^= 1;
    write_file_atomic(dir / "a.mmf", tampered);
    CHECK_THROWS_AS(load_transfer_features(dir / "a.mmf"), DataError);
    CHECK_THROWS_AS(extract_stage(dir / "src.ckpt", data.corpus("en", "val"), data.vocabulary("en"), nullptr), DataError);
  }

  TEST_CASE("run_experiment: single-model variant writes its artifacts") {
    const PreparedDataset data = PreparedDataset::load(grounded_dataset("exp_mlm"));
    const fs::path out = scratch_dir("exp_mlm_out");
    const ExperimentReport r = run_experiment(tiny_experiment(Variant::MLM_only), data, out);
    CHECK(r.seeds.size() == 2);
    CHECK(r.seeds[0].ok());
    CHECK_FALSE(r.seeds[0].source.has_value());
    CHECK_FALSE(r.source_bleu.has_value());
    CHECK(fs::exists(out / "seed-1/target.ckpt"));
    CHECK(fs::exists(out / "seed-2/target.test.gen"));
    CHECK_FALSE(fs::exists(out / "seed-1/source.ckpt"));
    CHECK(fs::exists(out / "report.json"));
    CHECK(r.label() == "En MLM");
    const ExperimentReport back = ExperimentReport::from_json(read_file(out / "report.json"));
    CHECK(back.json() == r.json());
  }

  TEST_CASE("run_experiment: transfer variant is reproducible and independent of --jobs") {
    const PreparedDataset data = PreparedDataset::load(grounded_dataset("exp_transfer"));
    ExperimentConfig cfg = tiny_experiment(Variant::MLM_to_LM);
    const fs::path a = scratch_dir("exp_transfer_a"), b = scratch_dir("exp_transfer_b");
    const ExperimentReport ra = run_experiment(cfg, data, a);
    cfg.jobs = 2;
    const ExperimentReport rb = run_experiment(cfg, data, b);
    CHECK(ra.json() == rb.json());
    auto ha = tree_hashes(a), hb = tree_hashes(b);
    ha.erase("config.json");
    hb.erase("config.json");
    CHECK(ha == hb);
    CHECK(ra.seeds[0].source.has_value());
    const TransferFeatures t = load_transfer_features(a / "seed-1/transfer.test.mmf");
    CHECK(t.source_checkpoint == git_blob_sha1_file(a / "seed-1/source.ckpt"));
    CHECK(t.store.dim() == 6);
    CHECK(load_checkpoint(a / "seed-1/target.ckpt").conditioning() == ConditioningSpec::source(6));
  }

  TEST_CASE("run_experiment: image variants need features before anything trains") {
    const PreparedDataset data = PreparedDataset::load(grounded_dataset("exp_nofeat", 40, false));
    const fs::path out = scratch_dir("exp_nofeat_out");
    CHECK_THROWS_AS(run_experiment(tiny_experiment(Variant::LM_to_MLM), data, out), ConfigError);
    CHECK_FALSE(fs::exists(out / "seed-1"));
    CHECK_NOTHROW(run_experiment(tiny_experiment(Variant::LM_to_LM), data, out));
  }

  TEST_CASE("zero source features train exactly like the unconditioned model") {
    const PreparedDataset data = PreparedDataset::load(grounded_dataset("zero_src"));
    const Vocabulary& vocab = data.vocabulary("en");
    TrainerConfig tc;
    tc.max_epochs = 3;
    tc.batch_size = 8;
    tc.dropout_p = 0;
    tc.learning_rate = 1e-2;

    ModelConfig lm_cfg = toy_config(vocab.size(), 5, 7);
    ModelConfig cond_cfg = lm_cfg;
    cond_cfg.conditioning = ConditioningSpec::source(6);
    Rng r1(9), r2(9);
    const ConditionedSequenceModel lm(lm_cfg, vocab, initialize_params(lm_cfg, r1));
    const ConditionedSequenceModel cond(cond_cfg, vocab, initialize_params(cond_cfg, r2));

    FeatureStore zeros(6);
    for (const char* s : {"train", "val"}) {
      for (const auto& id : data.split(s)) zeros.insert(id, Tensor::zeros(6));
    }
    for (const double p : {0.0, 0.5}) {
      CAPTURE(p);
      tc.dropout_p = p;
      const auto a = train(lm, {&data.corpus("en", "train")}, {&data.corpus("en", "val")}, tc);
      const auto b = train(cond, {&data.corpus("en", "train"), nullptr, &zeros},
                           {&data.corpus("en", "val"), nullptr, &zeros}, tc);
      CHECK(a.log.same_trajectory(b.log));
      // Zero inputs leave the projection without influence on any prediction.
      CHECK(b.log.jsonl() == a.log.jsonl());
    }
  }

  TEST_CASE("compare_variants") {
    const std::vector<ExperimentReport> one = {fake_report(Variant::MLM_only, 14.2)};
    const auto single = compare_variants(one);
    REQUIRE(single.size() == 1);
    CHECK(*single[0].delta_bleu == 0.0);

    const std::vector<ExperimentReport> equal = {fake_report(Variant::MLM_only, 14.2), fake_report(Variant::LM_to_LM, 14.2)};
    for (const auto& row : compare_variants(equal)) CHECK(*row.delta_bleu == 0.0);

    const std::vector<ExperimentReport> three = {fake_report(Variant::LM_to_LM, 16.0), fake_report(Variant::MLM_only, 14.2),
                                                 fake_report(Variant::MLM_to_LM, 23.1)};
    const auto ranked = compare_variants(three);
    CHECK(ranked[0].label == "De MLM -> En LM");
    CHECK(ranked[1].label == "De LM -> En LM");
    CHECK(ranked[2].label == "En MLM");
    CHECK(*ranked[0].delta_bleu == doctest::Approx(8.9));
    CHECK(*ranked[1].delta_bleu == doctest::Approx(1.8));
    CHECK(format_comparison(ranked).find("+8.90") != std::string::npos);

    const std::vector<ExperimentReport> no_base = {fake_report(Variant::LM_to_LM, 1)};
    CHECK_FALSE(compare_variants(no_base)[0].delta_bleu.has_value());
    const std::vector<ExperimentReport> mixed = {fake_report(Variant::MLM_only, 1), fake_report(Variant::LM_to_LM, 2, "en:other")};
    CHECK_THROWS_AS(compare_variants(mixed), DataError);
  }
}
