#include <doctest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "apot/dataset.hpp"
#include "apot/errors.hpp"
#include "apot/tensor_io.hpp"
#include "apot/train.hpp"

using namespace apot;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("apot_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("tensor files") {
  TempDir dir;
  const std::vector<double> v{0.0, -1.5, 3.25, 1e-3};
  write_tensor_f32(dir.file("t.f32"), v);
  CHECK(fs::file_size(dir.file("t.f32")) == 8 + 4 * v.size());
  const auto back = read_tensor_f32(dir.file("t.f32"));
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(v[i])));

  write_text(dir.file("bad.f32"), "XXXXYYYY");
  CHECK_THROWS_AS(read_tensor_f32(dir.file("bad.f32")), InputError);

  // Truncated payload and trailing bytes.
  std::string raw;
  {
    std::ifstream in(dir.file("t.f32"), std::ios::binary);
    raw.assign(std::istreambuf_iterator<char>(in), {});
  }
  write_text(dir.file("short.f32"), raw.substr(0, raw.size() - 2));
  CHECK_THROWS_AS(read_tensor_f32(dir.file("short.f32")), InputError);
  write_text(dir.file("long.f32"), raw + "z");
  CHECK_THROWS_AS(read_tensor_f32(dir.file("long.f32")), InputError);
  CHECK_THROWS_AS(read_tensor_f32(dir.file("missing.f32")), IoError);
}

TEST_CASE("CSV datasets") {
  TempDir dir;
  write_text(dir.file("d.csv"), "label,a,b\n0,1.0,2.0\n2,-1,0.5\n1,3,3\n");
  const Dataset ds = load_csv_dataset(dir.file("d.csv"));
  CHECK(ds.size() == 3);
  CHECK(ds.features == 2);
  CHECK(ds.classes == 3);
  CHECK(ds.y == std::vector<int>{0, 2, 1});
  CHECK(ds.row(1)[0] == -1.0);

  write_text(dir.file("ragged.csv"), "0,1,2\n1,3\n");
  CHECK_THROWS_AS(load_csv_dataset(dir.file("ragged.csv")), InputError);
  write_text(dir.file("junk.csv"), "0,1,2\n1,x,3\n");
  CHECK_THROWS_AS(load_csv_dataset(dir.file("junk.csv")), InputError);
  CHECK_THROWS_AS(load_csv_dataset(dir.file("nope.csv")), IoError);

  Dataset s = ds;
  min_max_scale(s, 2.0);
  for (double v : s.x) {
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
  CHECK_THROWS_AS(min_max_scale(s, 0.0), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  ModelConfig mc;
  mc.inputs = 3;
  mc.hidden = {5, 4};
  mc.classes = 3;
  mc.quant.weight_bits = 5;
  mc.quant.act_bits = 3;
  mc.first_last_8bit = true;
  MlpModel m = make_mlp(mc, 7);
  for (auto& l : m.layers()) {
    for (double& w : l.w) w = static_cast<float>(w);
    l.alpha_w = 2.5;
    l.alpha_x = 0.75;
    l.b.assign(l.b.size(), 0.125);
  }
  save_checkpoint(m, dir.file("m.ckpt"));
  const MlpModel r = load_checkpoint(dir.file("m.ckpt"));
  CHECK(r.config().hidden == mc.hidden);
  CHECK(r.config().classes == 3);
  CHECK(r.config().first_last_8bit);
  CHECK(r.config().quant.weight_bits == 5);
  CHECK(r.config().quant.act_bits == 3);
  REQUIRE(r.layers().size() == m.layers().size());
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    CHECK(r.layers()[l].w == m.layers()[l].w);
    CHECK(r.layers()[l].b == m.layers()[l].b);
    CHECK(r.layers()[l].alpha_w == 2.5);
    CHECK(r.layers()[l].alpha_x == 0.75);
  }

  write_text(dir.file("bad.ckpt"), "NOT-A-CHECKPOINT\n");
  CHECK_THROWS_AS(load_checkpoint(dir.file("bad.ckpt")), InputError);
  CHECK_THROWS_AS(load_checkpoint(dir.file("absent.ckpt")), IoError);
}
