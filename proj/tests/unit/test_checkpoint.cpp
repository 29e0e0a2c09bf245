#include <fstream>

#include <gtest/gtest.h>

#include "cubic/checkpoint.hpp"
#include "cubic/errors.hpp"
#include "helpers.hpp"

using namespace cubic;
using cubic::testing::TempDir;

namespace {

Checkpoint sample_checkpoint(uint64_t seed) {
  const PuzzleNetwork net(BackboneConfig::make(BackboneVariant::kTiny), 64, 48);
  Rng rng(seed);
  Checkpoint ck{{net.backbone().config(), GeometryConfig::desk(), HeadKind::kPuzzle, 48, 64, 1234},
                net.build(rng)};
  for (const std::string& name : ck.params.names()) {
    for (float& v : ck.params.momentum(name).data()) v = static_cast<float>(rng.normal());
  }
  for (const std::string& name : ck.params.norm_names()) {
    RunningStats& s = ck.params.norm_stats(name);
    for (float& v : s.mean.data()) v = static_cast<float>(rng.normal());
    s.updates = 17;
  }
  // Values whose bit patterns must survive: signed zero, denormal, extremes.
  Tensor& w = ck.params.at("conv1.weight");
  w[0] = -0.0f;
  w[1] = 1e-40f;
  w[2] = 3.4e38f;
  return ck;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  const Checkpoint ck = sample_checkpoint(1);
  save_checkpoint(ck, dir / "a.stck");
  const Checkpoint back = load_checkpoint(dir / "a.stck");
  EXPECT_EQ(back.header, ck.header);
  EXPECT_TRUE(back.params.bit_equal(ck.params));
  EXPECT_EQ(back.params.names(), ck.params.names());
  EXPECT_EQ(back.params.norm_stats("bn1").updates, 17);
  // Saving the loaded checkpoint reproduces the same bytes.
  save_checkpoint(back, dir / "b.stck");
  EXPECT_EQ(read_bytes(dir / "a.stck"), read_bytes(dir / "b.stck"));
  EXPECT_FALSE(std::filesystem::exists(dir / "a.stck.tmp"));
}

TEST(Checkpoint, CorruptedFilesAreRejected) {
  TempDir dir;
  save_checkpoint(sample_checkpoint(2), dir / "good.stck");
  const std::vector<char> good = read_bytes(dir / "good.stck");
  auto expect_rejected = [&](std::vector<char> bytes, const char* what) {
    write_bytes(dir / "bad.stck", bytes);
    EXPECT_THROW(load_checkpoint(dir / "bad.stck"), FormatError) << what;
  };
  std::vector<char> b = good;
  b[0] = 'X';
  expect_rejected(b, "magic");
  b = good;
  b[4] = 9;
  expect_rejected(b, "version");
  b = good;
  b[8] = 7;
  expect_rejected(b, "variant code");
  expect_rejected(std::vector<char>(good.begin(), good.begin() + 6), "truncated header");
  expect_rejected(std::vector<char>(good.begin(), good.end() - 3), "truncated payload");
  b = good;
  b.push_back(0);
  expect_rejected(b, "trailing bytes");
  expect_rejected({}, "empty");
  EXPECT_THROW(load_checkpoint(dir / "missing.stck"), FormatError);
}

TEST(Checkpoint, LoadIntoReportsShapeMismatchAndMissingNames) {
  const Checkpoint ck = sample_checkpoint(3);
  BackboneConfig wide = BackboneConfig::make(BackboneVariant::kTiny);
  wide.stage_channels = {8, 32};
  Rng rng(4);
  NetworkParams target = PuzzleNetwork(wide, 64, 48).build(rng);
  EXPECT_THROW(load_into(target, ck.params, {}), FormatError);

  NetworkParams action = ActionNetwork(ck.header.backbone, 5).build(rng);
  const NetworkParams before = action;
  EXPECT_THROW(load_into(action, ck.params, {}), FormatError);
  LoadOptions opts;
  opts.include_momentum = false;
  opts.skip = is_action_head_param;
  const LoadReport r = load_into(action, ck.params, opts);
  EXPECT_EQ(r.kept.size(), 2u);
  EXPECT_TRUE(action.at("conv1.weight").bit_equal(ck.params.at("conv1.weight")));
  EXPECT_TRUE(action.momentum("conv1.weight").bit_equal(before.momentum("conv1.weight")));
  EXPECT_TRUE(action.at("action.fc.weight").bit_equal(before.at("action.fc.weight")));
}

TEST(Checkpoint, RequireBackboneRejectsOtherVariant) {
  const Checkpoint ck = sample_checkpoint(5);
  EXPECT_NO_THROW(require_backbone(ck.header, BackboneConfig::make(BackboneVariant::kTiny)));
  EXPECT_THROW(require_backbone(ck.header, BackboneConfig::make(BackboneVariant::kResNet10)), FormatError);
}
