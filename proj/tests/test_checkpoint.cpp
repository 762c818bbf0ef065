#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "sgg/checkpoint.hpp"
#include "sgg/util.hpp"

using namespace sgg;
using namespace sgg::nn;

namespace fs = std::filesystem;

static void fill_random(ParamStore& ps, uint64_t seed) {
  Rng rng(seed);
  for (Parameter* p : ps.all())
    for (float& x : p->value.data) x = static_cast<float>(rng.uniform(-2, 2));
}

TEST_CASE("checkpoint round trip restores exact values and config") {
  fs::path dir = fs::temp_directory_path() / "sgg_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "model.json").string();

  ParamStore ps;
  ps.add("enc.w", 4, 8);
  ps.add("enc.b", 1, 8);
  ps.add("head.w", 8, 3);
  fill_random(ps, 11);
  std::vector<float> saved;
  for (Parameter* p : ps.all())
    saved.insert(saved.end(), p->value.data.begin(), p->value.data.end());

  nlohmann::json cfg{{"seed", 7}, {"d_model", 8}};
  save_checkpoint(path, ps.all(), cfg);

  fill_random(ps, 99);  // clobber
  nlohmann::json loaded = load_checkpoint(path, ps.all());
  CHECK(loaded == cfg);
  CHECK(peek_checkpoint_config(path) == cfg);

  std::vector<float> restored;
  for (Parameter* p : ps.all())
    restored.insert(restored.end(), p->value.data.begin(), p->value.data.end());
  CHECK(saved == restored);

  fs::remove_all(dir);
}

TEST_CASE("checkpoint validates blob length and parameter identity") {
  fs::path dir = fs::temp_directory_path() / "sgg_ckpt_test2";
  fs::create_directories(dir);
  std::string path = (dir / "model.json").string();

  ParamStore ps;
  ps.add("a", 2, 2);
  fill_random(ps, 1);
  save_checkpoint(path, ps.all(), {});

  // truncated blob
  std::string blob = read_file(path + ".bin");
  write_file(path + ".bin", blob.substr(0, blob.size() - 4));
  CHECK_THROWS_AS(load_checkpoint(path, ps.all()), std::runtime_error);
  write_file(path + ".bin", blob);

  // wrong name
  ParamStore other;
  other.add("b", 2, 2);
  CHECK_THROWS_AS(load_checkpoint(path, other.all()), std::runtime_error);

  // wrong shape
  ParamStore shaped;
  shaped.add("a", 4, 1);
  CHECK_THROWS_AS(load_checkpoint(path, shaped.all()), std::runtime_error);

  fs::remove_all(dir);
}
