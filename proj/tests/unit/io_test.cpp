#include <gtest/gtest.h>

#include <cstring>

#include "aggnet/aggn_format.hpp"
#include "aggnet/checkpoint.hpp"
#include "aggnet/dataset.hpp"
#include "aggnet/errors.hpp"
#include "aggnet/file_io.hpp"
#include "aggnet/netpbm.hpp"
#include "aggnet/rng.hpp"
#include "aggnet/run_config.hpp"
#include "temp_dir.hpp"

using namespace aggnet;

namespace {

DepthMap random_depth(int h, int w, std::uint64_t seed) {
  CounterRng rng(seed);
  DepthMap d(h, w);
  for (float& v : d.meters) v = rng.bernoulli(0.1) ? 0.0f : static_cast<float>(rng.uniform(0.1, 60.0));
  return d;
}

RgbImage random_rgb(int h, int w, std::uint64_t seed) {
  CounterRng rng(seed);
  RgbImage img(h, w);
  // Exact multiples of 1/255 survive the 8-bit round trip.
  for (float& v : img.planes) v = static_cast<float>(static_cast<int>(rng.uniform(0.0, 256.0))) / 255.0f;
  return img;
}

// Expects a ParseError thrown at `offset`.
template <typename F>
void expect_parse_error_at(F&& f, std::size_t offset) {
  try {
    f();
    ADD_FAILURE() << "expected a ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), offset) << e.what();
  }
}

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.m = 2;
  cfg.c0 = 4;
  cfg.height = 16;
  cfg.width = 16;
  cfg.prefill_channels = 4;
  return cfg;
}

}  // namespace

TEST(Netpbm, MillimeterConversion) {
  EXPECT_EQ(netpbm::meters_to_mm(1.234f), 1234);
  EXPECT_EQ(netpbm::meters_to_mm(0.0f), 0);
  EXPECT_EQ(netpbm::meters_to_mm(0.0004f), 0);
  EXPECT_EQ(netpbm::meters_to_mm(65.535f), 65535);
  EXPECT_FLOAT_EQ(netpbm::mm_to_meters(1234), 1.234f);
}

TEST(Netpbm, DepthRoundTripIsMillimeterQuantized) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DepthMap d = random_depth(7, 13, seed);
    netpbm::HeaderComments in{{"seed=" + std::to_string(seed), "spec_hash=abc"}}, out;
    const DepthMap back = netpbm::decode_depth(netpbm::encode_depth(d, in), &out);
    EXPECT_EQ(back, netpbm::quantize_mm(d));
    EXPECT_EQ(out.lines, in.lines);
    for (std::size_t i = 0; i < d.size(); ++i) {
      ASSERT_NEAR(back.meters[i], d.meters[i], 0.0005 + 1e-6);
      ASSERT_EQ(back.meters[i] == 0.0f, d.meters[i] == 0.0f);
    }
  }
}

TEST(Netpbm, RgbRoundTripIsExact) {
  const RgbImage img = random_rgb(5, 9, 3);
  netpbm::HeaderComments out;
  EXPECT_EQ(netpbm::decode_rgb(netpbm::encode_rgb(img, {{"seed=3"}}), &out), img);
  EXPECT_EQ(out.lines, std::vector<std::string>{"seed=3"});
}

TEST(Netpbm, EightBitDepthIsReadAsMillimeters) {
  const std::string bytes = std::string("P5\n2 1\n255\n") + '\x07' + '\xff';
  const DepthMap d = netpbm::decode_depth(bytes);
  EXPECT_FLOAT_EQ(d.at(0, 0), 0.007f);
  EXPECT_FLOAT_EQ(d.at(0, 1), 0.255f);
}

TEST(Netpbm, MalformedHeaders) {
  expect_parse_error_at([] { netpbm::decode_depth("P6\n1 1\n255\n\x01\x02\x03"); }, 0);
  expect_parse_error_at([] { netpbm::decode_rgb("P5\n1 1\n255\n\x01"); }, 0);
  EXPECT_THROW(netpbm::decode_depth("P5\n0 1\n255\n"), ParseError);
  EXPECT_THROW(netpbm::decode_depth("P5\n1 1\n70000\n\x01\x02"), ParseError);
  EXPECT_THROW(netpbm::decode_depth("P5\n1 1\n0\n\x01"), ParseError);
  EXPECT_THROW(netpbm::decode_depth("P5\nx 1\n255\n\x01"), ParseError);
  EXPECT_THROW(netpbm::decode_depth("P5\n1 1\n255"), ParseError);
  EXPECT_THROW(netpbm::decode_depth(""), ParseError);
  EXPECT_THROW(netpbm::decode_rgb("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06"), ParseError);
}

TEST(Netpbm, TruncatedRasterReportsOffset) {
  const std::string good = netpbm::encode_depth(random_depth(4, 4, 9));
  // Reported where the bytes run out.
  expect_parse_error_at([&] { netpbm::decode_depth(good.substr(0, good.size() - 1)); },
                        good.size() - 1);
  const std::string rgb = netpbm::encode_rgb(random_rgb(2, 2, 1));
  EXPECT_THROW(netpbm::decode_rgb(rgb.substr(0, rgb.size() - 3)), ParseError);
}

TEST(Netpbm, SampleAboveMaxval) {
  const std::string bytes = std::string("P5\n1 2\n1000\n") + '\x03' + '\xe8' + '\x03' + '\xe9';
  expect_parse_error_at([&] { netpbm::decode_depth(bytes); }, 14);
}

TEST(Netpbm, FileErrorsNameThePath) {
  TempDir dir("netpbm");
  write_file(dir / "bad.pgm", "P5\n1 1\n");
  try {
    netpbm::read_depth(dir / "bad.pgm");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.pgm"), std::string::npos);
  }
  EXPECT_THROW(netpbm::read_depth(dir / "missing.pgm"), IoError);
}

TEST(AggnFormat, RoundTrip) {
  std::vector<aggn::Entry> entries = {
      {"a.weight", {2, 3}, {1, 2, 3, 4, 5, 6}},
      {"", {0}, {}},
      {"scalar", {}, {0.5f}},
  };
  const std::string bytes = aggn::encode(entries);
  EXPECT_EQ(bytes.substr(0, 4), "AGGN");
  const auto back = aggn::decode(bytes);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].name, entries[i].name);
    EXPECT_EQ(back[i].dims, entries[i].dims);
    EXPECT_EQ(back[i].values, entries[i].values);
  }
  // Little-endian layout: count sits at byte 8.
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 8, 4);
  EXPECT_EQ(count, 3u);
}

TEST(AggnFormat, MalformedInputs) {
  const std::string good = aggn::encode({{"w", {4}, {1, 2, 3, 4}}});
  expect_parse_error_at([] { aggn::decode("NOPE\x01\0\0\0"); }, 0);
  std::string bad_version = good;
  bad_version[4] = 7;
  expect_parse_error_at([&] { aggn::decode(bad_version); }, 4);
  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    EXPECT_THROW(aggn::decode(good.substr(0, cut)), ParseError) << cut;
  }
  std::string huge = good;
  huge[good.size() - 16 - 4] = '\x7f';  // dims[0] of the only entry
  EXPECT_THROW(aggn::decode(huge), ParseError);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const AggNet model(small_model(), 21);
  const std::string bytes = encode_checkpoint(model);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(*back), bytes);
  EXPECT_EQ(back->config().scheme, model.config().scheme);
  EXPECT_EQ(encode_checkpoint(AggNet(small_model(), 21)), bytes);
  EXPECT_NE(encode_checkpoint(AggNet(small_model(), 22)), bytes);
}

TEST(Checkpoint, MalformedInputs) {
  const std::string bytes = encode_checkpoint(AggNet(small_model(), 1));
  const std::size_t body = bytes.find('\n') + 1;
  expect_parse_error_at([] { decode_checkpoint("{}"); }, 0);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 5)), ParseError);
  std::string corrupt = bytes;
  corrupt[body] = 'X';
  expect_parse_error_at([&] { decode_checkpoint(corrupt); }, body);

  // A header for a different architecture does not match the parameters.
  ModelConfig other = small_model();
  other.c0 = 8;
  const std::string foreign = encode_checkpoint(AggNet(other, 1));
  const std::string mixed = bytes.substr(0, body) + foreign.substr(foreign.find('\n') + 1);
  EXPECT_THROW(decode_checkpoint(mixed), ShapeError);
}

TEST(Dataset, SynthesizeWritesFilesAndManifest) {
  TempDir dir("dataset");
  SceneSpec spec;
  spec.height = 16;
  spec.width = 32;
  spec.seed = 4;
  const auto entries = Dataset::synthesize(dir.path(), spec, "train", 3);
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(Dataset::rgb_path(dir.path(), "train", 2)));
  EXPECT_EQ(Dataset::raw_path(dir.path(), "train", 1).filename(), "00001_raw.pgm");
  const auto manifest = Dataset::read_manifest(dir.path());
  ASSERT_EQ(manifest.size(), 3u);
  EXPECT_EQ(manifest[2].seed, Dataset::sample_seed(4, "train", 2));

  netpbm::HeaderComments c;
  netpbm::read_depth(Dataset::gt_path(dir.path(), "train", 0), &c);
  ASSERT_EQ(c.lines.size(), 2u);
  EXPECT_EQ(c.lines[0], "seed=" + std::to_string(manifest[0].seed));
  EXPECT_EQ(c.lines[1].rfind("spec_hash=", 0), 0u);

  // Loaded samples equal the in-memory corpus up to millimeter quantization.
  const auto loaded = Dataset::load_split(dir.path(), "train");
  const auto memory = synthesize_in_memory(spec, "train", 3);
  ASSERT_EQ(loaded.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded[i].gt_depth, netpbm::quantize_mm(memory[i].gt_depth));
    EXPECT_EQ(loaded[i].hole_mask, memory[i].hole_mask);
    EXPECT_EQ(loaded[i].seed, memory[i].seed);
  }
}

TEST(Dataset, SynthesisIsByteIdentical) {
  TempDir a("synth_a"), b("synth_b");
  SceneSpec spec;
  spec.height = 16;
  spec.width = 16;
  Dataset::synthesize(a.path(), spec, "test", 2);
  Dataset::synthesize(b.path(), spec, "test", 2);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(read_file(Dataset::rgb_path(a.path(), "test", i)),
              read_file(Dataset::rgb_path(b.path(), "test", i)));
    EXPECT_EQ(read_file(Dataset::raw_path(a.path(), "test", i)),
              read_file(Dataset::raw_path(b.path(), "test", i)));
  }
  EXPECT_EQ(read_file(Dataset::manifest_path(a.path())), read_file(Dataset::manifest_path(b.path())));
}

TEST(Dataset, Errors) {
  TempDir dir("dataset_err");
  SceneSpec spec;
  EXPECT_THROW(Dataset::synthesize(dir.path(), spec, "../up", 1), ConfigError);
  EXPECT_THROW(Dataset::synthesize(dir.path(), spec, "train", -1), ConfigError);
  EXPECT_THROW(Dataset::load_split(dir.path(), "train"), IoError);
  write_file(Dataset::manifest_path(dir.path()), "train zero 1\n");
  EXPECT_THROW(Dataset::read_manifest(dir.path()), ParseError);
}

TEST(RunConfig, DumpParseRoundTrip) {
  RunConfig cfg;
  cfg.model.scheme = Scheme::D;
  cfg.train.lr = 0.0123;
  cfg.scene.seed = 123456789012345ull;
  cfg.train.crop_resize = true;
  const std::string text = dump_run_config(cfg);
  EXPECT_EQ(dump_run_config(parse_run_config(text)), text);
  EXPECT_NE(text.find("train.lr = 0.0123\n"), std::string::npos);
  EXPECT_NE(text.find("model.scheme = D\n"), std::string::npos);
  const auto keys = config_keys();
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
}

TEST(RunConfig, CommentsAndBlankLines) {
  const RunConfig cfg = parse_run_config("# a comment\n\n  train.epochs = 3  \nmodel.scheme=A\n");
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_EQ(cfg.model.scheme, Scheme::A);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("train.nope = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("train.epochs = 1\ntrain.epochs = 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("train.epochs 1\n"), ParseError);
  EXPECT_THROW(parse_run_config("train.epochs = -1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("train.epochs = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_run_config("train.crop_resize = yes\n"), ConfigError);
  EXPECT_THROW(parse_run_config("model.scheme = H\n"), ConfigError);
  EXPECT_THROW(parse_run_config("train.lr = 0.001\ntrain.min_lr = 0.01\n"), ConfigError);
}

TEST(RunConfig, OverridesValidateTogether) {
  RunConfig cfg;
  // Individually out of order, jointly valid.
  const RunConfig out = apply_overrides(cfg, {"train.min_lr=0.5", "train.lr=1"});
  EXPECT_EQ(out.train.lr, 1.0);
  EXPECT_EQ(out.train.min_lr, 0.5);
  EXPECT_EQ(cfg.train.lr, 1e-2);
  EXPECT_THROW(apply_overrides(cfg, {"train.lr"}), ConfigError);
  EXPECT_THROW(apply_overrides(cfg, {"train.min_lr=0.5"}), ConfigError);
}
