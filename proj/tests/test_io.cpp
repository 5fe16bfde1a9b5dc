#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "posegrid/io.hpp"
#include "posegrid/pipeline.hpp"
#include "support.hpp"

using namespace posegrid;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

FeatureGrid f32_grid(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
  FeatureGrid g = random_grid(rng, h, w, c);
  for (double& x : g.data()) x = static_cast<float>(x);
  return g;
}

std::vector<TemplateRecord> sample_records(std::mt19937_64& rng) {
  std::vector<TemplateRecord> out;
  for (std::uint32_t obj : {3u, 7u})
    for (std::uint32_t idx : {0u, 4u, 9u}) {
      TemplateRecord r;
      r.object_id = obj;
      r.template_index = idx;
      r.viewpoint = Viewpoint({0.1 * idx, -0.3, 0.9}, 12.5 * idx);
      r.rotation = viewpoint_to_rotation(r.viewpoint);
      r.features = normalize_cells(f32_grid(rng, 3, 4, 5));
      for (double& x : r.features.data()) x = static_cast<float>(x);
      r.mask = random_mask(rng, 3, 4);
      r.render_meta = {600.0 + idx, 90.0 + obj, 572.0, {320.0, 240.0 + idx}};
      out.push_back(r);
    }
  return out;
}

void expect_same_record(const TemplateRecord& a, const TemplateRecord& b) {
  EXPECT_EQ(a.object_id, b.object_id);
  EXPECT_EQ(a.template_index, b.template_index);
  EXPECT_EQ(a.viewpoint.direction(), b.viewpoint.direction());
  EXPECT_EQ(a.viewpoint.inplane_deg(), b.viewpoint.inplane_deg());
  EXPECT_EQ(a.rotation.m, b.rotation.m);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.render_meta.t_temp_z_mm, b.render_meta.t_temp_z_mm);
  EXPECT_EQ(a.render_meta.bb_diag_px, b.render_meta.bb_diag_px);
  EXPECT_EQ(a.render_meta.focal_px, b.render_meta.focal_px);
  EXPECT_EQ(a.render_meta.bb_center_px, b.render_meta.bb_center_px);
  EXPECT_EQ(a.features, b.features);
}

std::vector<std::uint8_t> tpdb_bytes(const std::vector<TemplateRecord>& records, const fs::path& dir) {
  io::write_tpdb(dir / "db.tpdb", records);
  return io::read_file(dir / "db.tpdb");
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_f32(std::vector<std::uint8_t>& b, std::size_t off, float f) {
  put_u32(b, off, std::bit_cast<std::uint32_t>(f));
}

void put_f64(std::vector<std::uint8_t>& b, std::size_t off, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST(Fgrd, RoundTripIsBitwise) {
  std::mt19937_64 rng(1);
  const fs::path dir = temp_dir("fgrd");
  for (auto [h, w, c] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 4, 5}, {25, 25, 16}}) {
    const FeatureGrid g = f32_grid(rng, h, w, c);
    io::write_fgrd(dir / "g.fgrd", g);
    EXPECT_EQ(io::read_fgrd(dir / "g.fgrd"), g);
    EXPECT_EQ(fs::file_size(dir / "g.fgrd"), io::kFgrdHeaderBytes + 4 * h * w * c);
    EXPECT_EQ(io::decode_fgrd(io::encode_fgrd(g)), g);
  }
}

TEST(Fgrd, ByteLayoutIsLittleEndian) {
  const FeatureGrid g(1, 2, 1, {1.0, -2.5});
  const std::vector<std::uint8_t> want{'F', 'G', 'R', 'D', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0,
                                       0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
  EXPECT_EQ(io::encode_fgrd(g), want);
  EXPECT_EQ(io::decode_fgrd(want), g);
}

TEST(Fgrd, CorruptionFixtures) {
  std::mt19937_64 rng(2);
  const auto good = io::encode_fgrd(f32_grid(rng, 2, 3, 4));
  auto bytes = good;
  bytes[0] = 'X';
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::bad_magic);
  bytes = good;
  put_u32(bytes, 4, 2);
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::bad_version);
  bytes = good;
  put_u32(bytes, 4, 0);
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::bad_version);
  bytes = good;
  bytes.pop_back();
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::truncated);
  bytes = good;
  bytes.push_back(0);
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::count_mismatch);
  bytes = good;
  put_u32(bytes, 8, 0);
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::count_mismatch);
  bytes = good;
  put_f32(bytes, 24, std::numeric_limits<float>::quiet_NaN());
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::non_finite);
  bytes = good;
  put_f32(bytes, 24, std::numeric_limits<float>::infinity());
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::non_finite);
  bytes.assign(good.begin(), good.begin() + 10);
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::truncated);
  bytes.clear();
  EXPECT_ERRC(io::decode_fgrd(bytes), Errc::truncated);
  EXPECT_ERRC(io::read_fgrd(temp_dir("fgrd_missing") / "nope.fgrd"), Errc::io);
}

TEST(Tpdb, RecordsRoundTripBitwise) {
  std::mt19937_64 rng(3);
  const fs::path dir = temp_dir("tpdb");
  const auto records = sample_records(rng);
  io::write_tpdb(dir / "r.tpdb", records);
  EXPECT_EQ(fs::file_size(dir / "r.tpdb"), io::tpdb_size(2, 6, 3, 4, 5));
  const auto back = io::read_tpdb_records(dir / "r.tpdb");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) expect_same_record(back[i], records[i]);
}

TEST(Tpdb, DatabaseRoundTripBitwise) {
  std::mt19937_64 rng(4);
  const fs::path dir = temp_dir("tpdb_db");
  const TemplateDB db = build_db(sample_records(rng));
  io::write_tpdb(dir / "d.tpdb", db);
  const TemplateDB back = io::read_tpdb(dir / "d.tpdb");
  ASSERT_EQ(back.size(), db.size());
  EXPECT_TRUE(std::equal(db.feature_arena().begin(), db.feature_arena().end(), back.feature_arena().begin()));
  for (std::size_t i = 0; i < db.size(); ++i) expect_same_record(back.record(i), db.record(i));
  // A second write is byte-identical.
  io::write_tpdb(dir / "e.tpdb", back);
  EXPECT_EQ(io::read_file(dir / "d.tpdb"), io::read_file(dir / "e.tpdb"));
}

TEST(Tpdb, SizeArithmetic) {
  EXPECT_EQ(io::kTpdbTemplateMetaBytes, 148u);
  EXPECT_EQ(io::tpdb_size(1, 0, 25, 25, 16), 24u + 8u);
  EXPECT_EQ(io::tpdb_size(1, 1, 25, 25, 16), 24u + 8u + 148u + 625u + 4u * 625u * 16u);
  EXPECT_EQ(io::tpdb_size(1, 21672, 25, 25, 16), 24u + 8u + 21672ull * (148u + 625u + 40000u));
}

TEST(Tpdb, CorruptionFixtures) {
  std::mt19937_64 rng(5);
  const fs::path dir = temp_dir("tpdb_bad");
  const auto good = tpdb_bytes(sample_records(rng), dir);
  const std::size_t first_template = io::kTpdbHeaderBytes + io::kTpdbObjectHeaderBytes;
  const std::size_t first_mask = first_template + io::kTpdbTemplateMetaBytes;
  auto check = [&](std::vector<std::uint8_t> bytes, Errc want) {
    EXPECT_ERRC(io::decode_tpdb_records(bytes), want);
    io::write_file(dir / "bad.tpdb", bytes);
    EXPECT_ERRC(io::read_tpdb(dir / "bad.tpdb"), want);
  };
  auto bytes = good;
  bytes[3] = 'X';
  check(bytes, Errc::bad_magic);
  bytes = good;
  put_u32(bytes, 4, 9);
  check(bytes, Errc::bad_version);
  bytes = good;
  bytes.resize(bytes.size() - 1);
  check(bytes, Errc::truncated);
  bytes.resize(30);
  check(bytes, Errc::truncated);
  bytes = good;
  bytes.push_back(7);
  check(bytes, Errc::count_mismatch);
  bytes = good;
  put_u32(bytes, 20, 3);  // one object too many
  check(bytes, Errc::truncated);
  bytes = good;
  put_u32(bytes, 20, 1);  // second object left over as trailing bytes
  check(bytes, Errc::count_mismatch);
  bytes = good;
  put_u32(bytes, io::kTpdbHeaderBytes + 4, 1000);  // template count too large
  check(bytes, Errc::truncated);
  bytes = good;
  put_u32(bytes, 8, 0);
  check(bytes, Errc::count_mismatch);
  bytes = good;
  bytes[first_mask] = 2;
  check(bytes, Errc::bad_mask);
  bytes = good;
  put_f32(bytes, first_mask + 12, std::numeric_limits<float>::quiet_NaN());
  check(bytes, Errc::non_finite);
  bytes = good;
  put_f64(bytes, first_template + 4, std::numeric_limits<double>::infinity());
  check(bytes, Errc::non_finite);
  bytes = good;
  for (int i = 0; i < 3; ++i) put_f64(bytes, first_template + 4 + 8 * i, 0.0);  // zero direction
  check(bytes, Errc::validation);
}

TEST(Tpdb, DatabaseReaderValidatesContents) {
  std::mt19937_64 rng(6);
  const fs::path dir = temp_dir("tpdb_db_bad");
  auto records = sample_records(rng);
  records[1].features = f32_grid(rng, 3, 4, 5);  // raw, not unit cells
  io::write_tpdb(dir / "raw.tpdb", records);
  EXPECT_EQ(io::read_tpdb_records(dir / "raw.tpdb").size(), 6u);
  EXPECT_ERRC(io::read_tpdb(dir / "raw.tpdb"), Errc::build);
  records = sample_records(rng);
  records[2].template_index = records[1].template_index;
  io::write_tpdb(dir / "dup.tpdb", records);
  EXPECT_ERRC(io::read_tpdb(dir / "dup.tpdb"), Errc::build);
  records = sample_records(rng);
  records[0].mask = BinaryMask(3, 4);
  io::write_tpdb(dir / "empty.tpdb", records);
  EXPECT_ERRC(io::read_tpdb(dir / "empty.tpdb"), Errc::build);
  EXPECT_ERRC(io::write_tpdb(dir / "none.tpdb", std::vector<TemplateRecord>{}), Errc::build);
}

TEST(Embd, RoundTripBothVersions) {
  const fs::path dir = temp_dir("embd");
  TrainConfig cfg;
  cfg.c_out = 6;
  for (std::size_t hidden : {0u, 5u}) {
    cfg.hidden_channels = hidden;
    cfg.seed = 3 + hidden;
    const Embedding e = initial_embedding(4, cfg);
    io::write_embd(dir / "e.embd", e);
    EXPECT_EQ(io::read_embd(dir / "e.embd"), e);
    EXPECT_EQ(io::decode_embd(io::encode_embd(e)), e);
    const std::size_t params = e.parameter_count();
    EXPECT_EQ(fs::file_size(dir / "e.embd"), (hidden ? 20u : 16u) + 8 * params);
  }
}

TEST(Embd, ByteLayoutAndCorruption) {
  LinearEmbedding layer{1, 1, {2.0}, {-1.0}};
  Embedding e;
  e.output = layer;
  const std::vector<std::uint8_t> want{'E', 'M', 'B', 'D', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0,
                                       0, 0, 0, 0, 0, 0, 0, 0x40, 0, 0, 0, 0, 0, 0, 0xf0, 0xbf};
  EXPECT_EQ(io::encode_embd(e), want);
  auto bytes = want;
  bytes[0] = 'e';
  EXPECT_ERRC(io::decode_embd(bytes), Errc::bad_magic);
  bytes = want;
  put_u32(bytes, 4, 3);
  EXPECT_ERRC(io::decode_embd(bytes), Errc::bad_version);
  bytes = want;
  bytes.pop_back();
  EXPECT_ERRC(io::decode_embd(bytes), Errc::truncated);
  bytes = want;
  bytes.push_back(0);
  EXPECT_ERRC(io::decode_embd(bytes), Errc::count_mismatch);
  bytes = want;
  put_f64(bytes, 16, std::numeric_limits<double>::quiet_NaN());
  EXPECT_ERRC(io::decode_embd(bytes), Errc::non_finite);
  bytes = want;
  put_u32(bytes, 12, 0);
  EXPECT_ERRC(io::decode_embd(bytes), Errc::count_mismatch);
}

TEST(Vpts, RoundTripBitwise) {
  const fs::path dir = temp_dir("vpts");
  std::vector<io::IndexedViewpoint> views;
  const auto vps = enumerate_viewpoints(1, 0.0, 3);
  for (std::uint32_t i = 0; i < vps.size(); ++i) views.push_back({i * 2, vps[i], viewpoint_to_rotation(vps[i])});
  io::write_viewpoints(dir / "v.vpts", views);
  const auto back = io::read_viewpoints(dir / "v.vpts");
  ASSERT_EQ(back.size(), views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    EXPECT_EQ(back[i].index, views[i].index);
    EXPECT_EQ(back[i].viewpoint.direction(), views[i].viewpoint.direction());
    EXPECT_EQ(back[i].viewpoint.inplane_deg(), views[i].viewpoint.inplane_deg());
    EXPECT_EQ(back[i].rotation.m, views[i].rotation.m);
  }
  auto bytes = io::read_file(dir / "v.vpts");
  bytes.resize(bytes.size() - 3);
  io::write_file(dir / "t.vpts", bytes);
  EXPECT_ERRC(io::read_viewpoints(dir / "t.vpts"), Errc::truncated);
}

TEST(AtomicWrite, ReplacesWholeFileAndLeavesNoTemp) {
  const fs::path dir = temp_dir("atomic");
  const std::vector<std::uint8_t> a(1000, 1), b{9, 8, 7};
  io::write_file(dir / "f.bin", a);
  io::write_file(dir / "f.bin", b);
  EXPECT_EQ(io::read_file(dir / "f.bin"), b);
  EXPECT_FALSE(fs::exists(dir / "f.bin.tmp"));
  EXPECT_ERRC(io::write_file(dir / "missing_dir" / "f.bin", b), Errc::io);
  // A failed encode leaves the previous file intact.
  FeatureGrid huge(1, 1, 1, {1e300});
  io::write_fgrd(dir / "g.fgrd", FeatureGrid(1, 1, 1, {1.0}));
  EXPECT_ERRC(io::write_fgrd(dir / "g.fgrd", huge), Errc::non_finite);
  EXPECT_EQ(io::read_fgrd(dir / "g.fgrd"), FeatureGrid(1, 1, 1, {1.0}));
  EXPECT_FALSE(fs::exists(dir / "g.fgrd.tmp"));
}
