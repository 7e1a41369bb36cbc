#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "specbias/config.hpp"
#include "specbias/dataset.hpp"
#include "specbias/io.hpp"
#include "test_util.hpp"

using namespace specbias;
using specbias::testing::random_tensor;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("specbias_io_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void overwrite(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

io::Dataset mixed_dataset() {
  std::mt19937_64 rng(3);
  io::Dataset d;
  auto a = io::Field::from_tensor("a", random_tensor<float>(Shape{2, 3, 4, 5}, rng));
  a.dt = 0.25;
  a.norm_min = -3.5;
  a.norm_max = 7.0;
  d.fields.push_back(a);
  d.fields.push_back(io::Field::from_tensor("b", random_tensor<double>(Shape{1, 1, 3, 3}, rng)));
  std::vector<std::uint8_t> mask(2 * 4 * 5);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<std::uint8_t>(i % 3 == 0);
  d.fields.push_back(io::Field::from_mask("m", Shape{2, 1, 4, 5}, mask));
  d.manifest["kind"] = "test";
  d.manifest["split"] = {{"train", {0}}, {"val", {1}}, {"test", nlohmann::json::array()}};
  return d;
}

ModelConfig small_model(ScalingVariant v) {
  ModelConfig c;
  c.in_channels = 3;
  c.out_channels = 2;
  c.levels = 2;
  c.height = 16;
  c.width = 16;
  c.base_width = 4;
  c.multipliers = {1, 2, 2};
  c.scaling = v;
  c.patch_size = 4;
  c.max_groups = 2;
  return c;
}

}  // namespace

TEST(Dataset, RoundTripIsBitExactForAllDtypes) {
  const auto dir = scratch_dir("roundtrip");
  const auto d = mixed_dataset();
  io::write_dataset(dir / "d.sbds", d);
  const auto r = io::read_dataset(dir / "d.sbds");
  ASSERT_EQ(r.fields.size(), d.fields.size());
  for (std::size_t i = 0; i < d.fields.size(); ++i) {
    EXPECT_EQ(r.fields[i].name, d.fields[i].name);
    EXPECT_EQ(r.fields[i].dtype, d.fields[i].dtype);
    EXPECT_EQ(r.fields[i].shape, d.fields[i].shape);
    EXPECT_EQ(r.fields[i].dt, d.fields[i].dt);
    EXPECT_EQ(r.fields[i].norm_min, d.fields[i].norm_min);
    EXPECT_EQ(r.fields[i].norm_max, d.fields[i].norm_max);
    EXPECT_EQ(r.fields[i].bytes, d.fields[i].bytes);
  }
  EXPECT_EQ(r.manifest, d.manifest);

  // Rewriting what was read reproduces the file byte for byte.
  io::write_dataset(dir / "e.sbds", r);
  EXPECT_EQ(file_bytes(dir / "d.sbds"), file_bytes(dir / "e.sbds"));
  EXPECT_EQ(file_bytes(io::manifest_path(dir / "d.sbds")), file_bytes(io::manifest_path(dir / "e.sbds")));
}

TEST(Dataset, TensorAndMaskAccessors) {
  std::mt19937_64 rng(4);
  const auto t = random_tensor<float>(Shape{1, 2, 3, 3}, rng);
  const auto f = io::Field::from_tensor("x", t);
  EXPECT_EQ(f.tensor<float>().vec(), t.vec());
  const auto td = f.tensor<double>();
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(td[i], static_cast<double>(t[i]));
  EXPECT_THROW(f.mask(), ValidationError);
  const auto m = io::Field::from_mask("m", Shape{1, 1, 2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(m.mask(), (std::vector<std::uint8_t>{1, 0, 0, 1}));
  EXPECT_THROW(m.tensor<float>(), ValidationError);
  EXPECT_THROW(io::Field::from_mask("m", Shape{1, 1, 2, 2}, {1, 0}), ValidationError);
}

TEST(Dataset, NormalizationIsAnInvertibleAffineMap) {
  io::Field f;
  f.norm_min = -2.0;
  f.norm_max = 6.0;
  EXPECT_DOUBLE_EQ(f.normalize(-2.0), -1.0);
  EXPECT_DOUBLE_EQ(f.normalize(6.0), 1.0);
  EXPECT_DOUBLE_EQ(f.normalize(2.0), 0.0);
  for (double raw : {-2.0, -0.3, 1.7, 6.0}) EXPECT_NEAR(f.denormalize(f.normalize(raw)), raw, 1e-14);
}

TEST(Dataset, RejectsCorruptFiles) {
  const auto dir = scratch_dir("corrupt");
  io::write_dataset(dir / "d.sbds", mixed_dataset());
  const auto good = file_bytes(dir / "d.sbds");

  overwrite(dir / "d.sbds", "XXXX" + good.substr(4));
  EXPECT_THROW(io::read_dataset(dir / "d.sbds"), ValidationError);

  overwrite(dir / "d.sbds", good.substr(0, good.size() - 7));
  EXPECT_THROW(io::read_dataset(dir / "d.sbds"), ValidationError);

  overwrite(dir / "d.sbds", good + "x");
  EXPECT_THROW(io::read_dataset(dir / "d.sbds"), ValidationError);

  overwrite(dir / "d.sbds", good);
  io::write_text(io::manifest_path(dir / "d.sbds"), "{ not json");
  EXPECT_THROW(io::read_dataset(dir / "d.sbds"), ValidationError);

  EXPECT_THROW(io::read_dataset(dir / "missing.sbds"), ValidationError);
}

TEST(Dataset, ReadingDoesNotModifyTheFile) {
  const auto dir = scratch_dir("readonly");
  io::write_dataset(dir / "d.sbds", mixed_dataset());
  const auto before = file_bytes(dir / "d.sbds");
  const auto time = std::filesystem::last_write_time(dir / "d.sbds");
  (void)io::read_dataset(dir / "d.sbds");
  EXPECT_EQ(file_bytes(dir / "d.sbds"), before);
  EXPECT_EQ(std::filesystem::last_write_time(dir / "d.sbds"), time);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = scratch_dir("ckpt");
  for (auto v : {ScalingVariant::none, ScalingVariant::hfs, ScalingVariant::fourier}) {
    ResUNet<float> a(small_model(v), 5);
    // Move the parameters off their initial values so the copy is visible.
    std::mt19937_64 rng(6);
    for (auto& p : a.parameters()) p.value = random_tensor<float>(p.value.shape(), rng);
    io::save_checkpoint(dir / "m.sblb", a);

    ResUNet<float> b(small_model(v), 99);
    io::load_checkpoint(dir / "m.sblb", b);
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      EXPECT_EQ(a.parameters()[i].value.vec(), b.parameters()[i].value.vec()) << a.parameters()[i].name;
    }
    auto c = io::load_model<float>(dir / "m.sblb");
    EXPECT_EQ(io::model_config_text(c.config()), io::model_config_text(a.config()));
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      EXPECT_EQ(a.parameters()[i].value.vec(), c.parameters()[i].value.vec());
    }
    io::save_checkpoint(dir / "n.sblb", c);
    EXPECT_EQ(file_bytes(dir / "m.sblb"), file_bytes(dir / "n.sblb"));
  }
}

TEST(Checkpoint, HeaderCarriesConfigAndDigest) {
  const auto dir = scratch_dir("header");
  ResUNet<double> m(small_model(ScalingVariant::hfs), 1);
  io::save_checkpoint(dir / "m.sblb", m);
  const auto h = io::read_checkpoint_header(dir / "m.sblb");
  EXPECT_EQ(h.dtype, io::DType::f64);
  EXPECT_EQ(h.parameters, m.parameters().size());
  EXPECT_EQ(h.digest, io::fnv1a64(io::model_config_text(m.config())));
  EXPECT_EQ(io::model_config_text(h.config), io::model_config_text(m.config()));
}

TEST(Checkpoint, MismatchesAndCorruptionLeaveModelUntouched) {
  const auto dir = scratch_dir("mismatch");
  ResUNet<float> a(small_model(ScalingVariant::hfs), 1);
  io::save_checkpoint(dir / "m.sblb", a);

  ResUNet<float> other(small_model(ScalingVariant::none), 2);
  const auto before = other.parameters().front().value.vec();
  EXPECT_THROW(io::load_checkpoint(dir / "m.sblb", other), ValidationError);
  EXPECT_EQ(other.parameters().front().value.vec(), before);

  ResUNet<double> wrong_type(small_model(ScalingVariant::hfs), 1);
  EXPECT_THROW(io::load_checkpoint(dir / "m.sblb", wrong_type), ValidationError);

  const auto good = file_bytes(dir / "m.sblb");
  ResUNet<float> target(small_model(ScalingVariant::hfs), 3);
  const auto target_before = target.parameters().back().value.vec();
  overwrite(dir / "m.sblb", good.substr(0, good.size() - 5));
  EXPECT_THROW(io::load_checkpoint(dir / "m.sblb", target), ValidationError);
  EXPECT_EQ(target.parameters().back().value.vec(), target_before);

  // Flip one byte inside the stored config text: the digest no longer matches.
  std::string bad = good;
  const auto pos = bad.find("levels");
  ASSERT_NE(pos, std::string::npos);
  bad[pos] = 'L';
  overwrite(dir / "m.sblb", bad);
  EXPECT_THROW(io::load_checkpoint(dir / "m.sblb", target), ValidationError);
  EXPECT_EQ(target.parameters().back().value.vec(), target_before);
}

TEST(Checkpoint, Fnv1aKnownVectors) {
  EXPECT_EQ(io::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(io::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(ModelConfigText, RoundTrips) {
  ModelConfig c = small_model(ScalingVariant::fourier);
  c.lambda_dc_init = 0.85;
  c.lambda_hfc_init = 1.15;
  c.tau = 0.3;
  c.residual_blocks = false;
  const auto text = io::model_config_text(c);
  EXPECT_EQ(io::model_config_text(io::parse_model_config_text(text)), text);
}

TEST(Pgm, WriteReadRoundTripWithinQuantization) {
  const auto dir = scratch_dir("pgm");
  const int h = 5, w = 7;
  std::vector<double> f(h * w);
  for (int i = 0; i < h * w; ++i) f[i] = std::sin(0.37 * i) * 3.0 + 1.0;
  io::write_pgm(dir / "f.pgm", f.data(), h, w);
  const auto r = io::read_pgm(dir / "f.pgm");
  ASSERT_EQ(r.shape(), (Shape{1, 1, h, w}));
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  for (int i = 0; i < h * w; ++i) {
    EXPECT_NEAR(r[i], (f[i] - *lo) / (*hi - *lo), 1.0 / 65535.0);
  }
}

TEST(Pgm, ReadsAsciiGraymap) {
  const auto dir = scratch_dir("pgm_ascii");
  io::write_text(dir / "a.pgm", "P2\n# comment\n3 2\n4\n0 1 2\n3 4 0\n");
  const auto r = io::read_pgm(dir / "a.pgm");
  ASSERT_EQ(r.shape(), (Shape{1, 1, 2, 3}));
  const std::vector<double> want{0, 0.25, 0.5, 0.75, 1.0, 0};
  EXPECT_EQ(r.vec(), want);
  io::write_text(dir / "b.pgm", "P6\n1 1\n255\nabc");
  EXPECT_THROW(io::read_pgm(dir / "b.pgm"), ValidationError);
  io::write_text(dir / "c.pgm", "P5\n4 4\n255\nab");
  EXPECT_THROW(io::read_pgm(dir / "c.pgm"), ValidationError);
}

TEST(KeyValuesTest, ParsesCommentsOverridesAndTypes) {
  auto kv = KeyValues::parse(
      "# header\n"
      "a = 3\n"
      "b=2.5   # trailing\n"
      "\n"
      "flag = true\n"
      "list = 1, 2, 3\n"
      "a = 4\n");
  kv.assign("b=0.125");
  int a = 0;
  double b = 0;
  bool flag = false;
  std::vector<int> list;
  kv.read("a", a);
  kv.read("b", b);
  kv.read("flag", flag);
  kv.read("list", list);
  EXPECT_EQ(a, 4);
  EXPECT_EQ(b, 0.125);
  EXPECT_TRUE(flag);
  EXPECT_EQ(list, (std::vector<int>{1, 2, 3}));
  EXPECT_NO_THROW(kv.reject_unused());

  int untouched = 7;
  kv.read("absent", untouched);
  EXPECT_EQ(untouched, 7);
}

TEST(KeyValuesTest, RejectsMalformedInput) {
  EXPECT_THROW(KeyValues::parse("no equals sign\n"), ValidationError);
  EXPECT_THROW(KeyValues::parse("= 3\n"), ValidationError);
  auto kv = KeyValues::parse("n = 3x\nd = abc\nb = maybe\n");
  int n = 0;
  double d = 0;
  bool b = false;
  EXPECT_THROW(kv.read("n", n), ValidationError);
  EXPECT_THROW(kv.read("d", d), ValidationError);
  EXPECT_THROW(kv.read("b", b), ValidationError);
  EXPECT_THROW(kv.assign("novalue"), ValidationError);

  auto typo = KeyValues::parse("train.epocs = 3\n");
  EXPECT_THROW(RunConfig::from(typo), ValidationError);
}

TEST(RunConfigTest, ResolvedTextReparsesToTheSameConfig) {
  auto kv = KeyValues::parse(
      "model.preset = desk\n"
      "model.scaling = hfs\n"
      "train.epochs = 12\n"
      "train.lr = 0.0003\n"
      "solver.nu = 0.002\n"
      "bands.low = 0.05\n"
      "seed = 17\n"
      "sweep.widths = desk, 1.7M\n");
  const auto c = RunConfig::from(kv);
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.model.scaling, ScalingVariant::hfs);
  const auto text = c.resolved_text();
  const auto again = RunConfig::from(KeyValues::parse(text));
  EXPECT_EQ(again.resolved_text(), text);
  EXPECT_EQ(again.train.lr, 0.0003);
  EXPECT_EQ(again.solver.nu, 0.002);
}

TEST(RunConfigTest, ValidatesBeforeCompute) {
  EXPECT_THROW(RunConfig::from(KeyValues::parse("train.epochs = 0\n")), ValidationError);
  EXPECT_THROW(RunConfig::from(KeyValues::parse("model.levels = 7\n")), ValidationError);
  EXPECT_THROW(RunConfig::from(KeyValues::parse("model.scaling = wavelet\n")), ValidationError);
  EXPECT_THROW(RunConfig::from(KeyValues::parse("data.train_fraction = 0.95\n")), ValidationError);
  EXPECT_THROW(RunConfig::from(KeyValues::parse("model.preset = huge\n")), ValidationError);
}

namespace {

kolmogorov::SolverConfig tiny_solver() {
  kolmogorov::SolverConfig s;
  s.grid = 16;
  s.t_final = 1.0;
  s.record_dt = 0.25;
  s.dt = 0.05;
  return s;
}

DataConfig ten_samples() {
  DataConfig d;
  d.samples = 10;
  d.first_seed = 40;
  d.history = 2;
  return d;
}

}  // namespace

TEST(GenData, TenSeedsSplitEightOneOne) {
  const auto d = generate_kolmogorov(tiny_solver(), ten_samples());
  const auto& f = d.field("omega");
  EXPECT_EQ(f.shape, (Shape{10, 4, 16, 16}));
  EXPECT_EQ(split_indices(d, Split::train).size(), 8u);
  EXPECT_EQ(split_indices(d, Split::val).size(), 1u);
  EXPECT_EQ(split_indices(d, Split::test).size(), 1u);
  EXPECT_EQ(d.manifest["seeds"].size(), 10u);
  EXPECT_EQ(d.manifest["seeds"][0].get<int>(), 40);

  const auto train = make_samples(d, Split::train, 2);
  EXPECT_EQ(train.inputs.shape(), (Shape{8, 2, 16, 16}));
  EXPECT_EQ(train.targets.shape(), (Shape{8, 2, 16, 16}));

  // The train split spans exactly [-1, 1].
  const auto t = f.tensor<float>();
  const std::size_t train_len = 8 * f.shape.numel() / 10;
  const auto [lo, hi] = std::minmax_element(t.data(), t.data() + train_len);
  EXPECT_EQ(*lo, -1.0f);
  EXPECT_EQ(*hi, 1.0f);
}

TEST(GenData, RegenerationIsBitIdentical) {
  const auto dir = scratch_dir("gen");
  io::write_dataset(dir / "a.sbds", generate_kolmogorov(tiny_solver(), ten_samples()));
  io::write_dataset(dir / "b.sbds", generate_kolmogorov(tiny_solver(), ten_samples()));
  EXPECT_EQ(file_bytes(dir / "a.sbds"), file_bytes(dir / "b.sbds"));
  EXPECT_EQ(file_bytes(io::manifest_path(dir / "a.sbds")), file_bytes(io::manifest_path(dir / "b.sbds")));
}

TEST(GenData, ManifestBoundsReproduceRawFields) {
  const auto s = tiny_solver();
  const auto dc = ten_samples();
  const auto d = generate_kolmogorov(s, dc);
  const auto& f = d.field("omega");
  EXPECT_EQ(d.manifest["normalization"]["min"].get<double>(), f.norm_min);
  EXPECT_EQ(d.manifest["normalization"]["max"].get<double>(), f.norm_max);
  const auto t = f.tensor<float>();
  const kolmogorov::Solver solver(s);
  for (int i : {0, 9}) {
    const auto traj = solver.solve(dc.first_seed + i);
    for (int j = 0; j < f.shape.c; ++j) {
      for (int k = 0; k < 16 * 16; ++k) {
        const double stored = t[(static_cast<std::size_t>(i) * f.shape.c + j) * 256 + k];
        EXPECT_NEAR(f.denormalize(stored), traj.snapshots[j][k], 1e-6);
      }
    }
  }
}

TEST(GenData, RejectsHistoryWithoutTargets) {
  auto dc = ten_samples();
  dc.history = 4;
  EXPECT_THROW(generate_kolmogorov(tiny_solver(), dc), ValidationError);
  const auto d = generate_kolmogorov(tiny_solver(), ten_samples());
  EXPECT_THROW(make_samples(d, Split::train, 4), ValidationError);
  EXPECT_THROW(parse_split("holdout"), ValidationError);
}
