#include "posegrid/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "posegrid/error.hpp"

namespace posegrid::io {
namespace {

constexpr char kFgrdMagic[4] = {'F', 'G', 'R', 'D'};
constexpr char kTpdbMagic[4] = {'T', 'P', 'D', 'B'};
constexpr char kEmbdMagic[4] = {'E', 'M', 'B', 'D'};
constexpr char kVptsMagic[4] = {'V', 'P', 'T', 'S'};

constexpr bool kLittleHost = std::endian::native == std::endian::little;

template <typename U>
U byteswap(U v) {
  U out = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out = static_cast<U>((out << 8) | (v & 0xff));
    v = static_cast<U>(v >> 8);
  }
  return out;
}

// ---- output -----------------------------------------------------------------

class VectorSink {
 public:
  explicit VectorSink(std::vector<std::uint8_t>& out) : out_(out) {}
  void put(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class FileSink {
 public:
  explicit FileSink(std::ofstream& out) : out_(out) {}
  void put(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }

 private:
  std::ofstream& out_;
};

template <typename Sink>
class Writer {
 public:
  explicit Writer(Sink& sink) : sink_(sink) {}

  void magic(const char (&m)[4]) { sink_.put(m, 4); }
  void u32(std::uint32_t v) {
    if constexpr (!kLittleHost) v = byteswap(v);
    sink_.put(&v, 4);
  }
  void f64(double d) {
    auto v = std::bit_cast<std::uint64_t>(d);
    if constexpr (!kLittleHost) v = byteswap(v);
    sink_.put(&v, 8);
  }
  void f32_array(std::span<const float> values) {
    if constexpr (kLittleHost) {
      sink_.put(values.data(), values.size_bytes());
    } else {
      for (float f : values) {
        auto v = byteswap(std::bit_cast<std::uint32_t>(f));
        sink_.put(&v, 4);
      }
    }
  }
  void f32_from_doubles(std::span<const double> values) {
    std::vector<float> tmp(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      tmp[i] = static_cast<float>(values[i]);
      if (!std::isfinite(tmp[i])) throw Error(Errc::non_finite, "value does not fit in f32");
    }
    f32_array(tmp);
  }
  void bytes(std::span<const std::uint8_t> b) { sink_.put(b.data(), b.size()); }

 private:
  Sink& sink_;
};

// ---- input ------------------------------------------------------------------

class MemorySource {
 public:
  explicit MemorySource(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint64_t size() const { return bytes_.size(); }
  void get(std::uint64_t offset, void* dst, std::size_t n) { std::memcpy(dst, bytes_.data() + offset, n); }

 private:
  std::span<const std::uint8_t> bytes_;
};

class FileSource {
 public:
  explicit FileSource(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(Errc::io, "cannot open " + path.string());
    std::error_code ec;
    size_ = std::filesystem::file_size(path, ec);
    if (ec) throw Error(Errc::io, "cannot stat " + path.string());
  }
  std::uint64_t size() const { return size_; }
  // Reads are strictly sequential.
  void get(std::uint64_t, void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw Error(Errc::io, "read failed");
  }

 private:
  std::ifstream in_;
  std::uint64_t size_ = 0;
};

template <typename Source>
class Reader {
 public:
  Reader(Source& src, const char* format) : src_(src), format_(format) {}

  std::uint64_t offset() const { return offset_; }
  std::uint64_t size() const { return src_.size(); }

  void need(std::uint64_t n) {
    if (offset_ + n > src_.size()) {
      throw Error(Errc::truncated, std::string(format_) + " truncated: expected at least " +
                                       std::to_string(offset_ + n) + " bytes, got " + std::to_string(src_.size()));
    }
  }
  void expect_size(std::uint64_t total) {
    if (src_.size() < total) {
      throw Error(Errc::truncated, std::string(format_) + " truncated: expected " + std::to_string(total) +
                                       " bytes, got " + std::to_string(src_.size()));
    }
    if (src_.size() > total) {
      throw Error(Errc::count_mismatch, std::string(format_) + " has trailing data: expected " +
                                            std::to_string(total) + " bytes, got " + std::to_string(src_.size()));
    }
  }
  void expect_end() { expect_size(offset_); }

  void magic(const char (&m)[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, m, 4) != 0) {
      throw Error(Errc::bad_magic, std::string("not a ") + format_ + " file (bad magic)");
    }
  }
  std::uint32_t version(std::uint32_t max_supported) {
    const std::uint32_t v = u32();
    if (v < 1 || v > max_supported) {
      throw Error(Errc::bad_version, std::string(format_) + " version " + std::to_string(v) + " is not supported");
    }
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    if constexpr (!kLittleHost) v = byteswap(v);
    return v;
  }
  double f64() {
    std::uint64_t v;
    raw(&v, 8);
    if constexpr (!kLittleHost) v = byteswap(v);
    const double d = std::bit_cast<double>(v);
    if (!std::isfinite(d)) throw Error(Errc::non_finite, std::string(format_) + " contains a non-finite value");
    return d;
  }
  void f32_array(float* out, std::size_t n) {
    raw(out, n * 4);
    for (std::size_t i = 0; i < n; ++i) {
      if constexpr (!kLittleHost) out[i] = std::bit_cast<float>(byteswap(std::bit_cast<std::uint32_t>(out[i])));
      if (!std::isfinite(out[i])) {
        throw Error(Errc::non_finite, std::string(format_) + " contains a non-finite feature value");
      }
    }
  }
  void mask_bytes(std::uint8_t* out, std::size_t n) {
    raw(out, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i] > 1) {
        throw Error(Errc::bad_mask, std::string(format_) + " mask byte " + std::to_string(out[i]) + " at offset " +
                                        std::to_string(offset_ - n + i) + " is not 0 or 1");
      }
    }
  }

 private:
  void raw(void* dst, std::size_t n) {
    need(n);
    src_.get(offset_, dst, n);
    offset_ += n;
  }

  Source& src_;
  const char* format_;
  std::uint64_t offset_ = 0;
};

template <typename Fn>
void atomic_write(const std::filesystem::path& path, Fn&& fill) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot open " + tmp.string() + " for writing");
    try {
      FileSink sink(out);
      Writer<FileSink> w(sink);
      fill(w);
    } catch (...) {
      out.close();
      std::filesystem::remove(tmp);
      throw;
    }
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error(Errc::io, "write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(Errc::io, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw Error(Errc::parameter, std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

// ---- FGRD -------------------------------------------------------------------

template <typename W>
void put_fgrd(W& w, const FeatureGrid& grid) {
  w.magic(kFgrdMagic);
  w.u32(kFormatVersion);
  w.u32(checked_u32(grid.height(), "height"));
  w.u32(checked_u32(grid.width(), "width"));
  w.u32(checked_u32(grid.channels(), "channels"));
  w.f32_from_doubles(grid.data());
}

template <typename Source>
FeatureGrid get_fgrd(Source& src) {
  Reader r(src, "FGRD");
  r.magic(kFgrdMagic);
  r.version(kFormatVersion);
  const std::uint64_t h = r.u32(), w = r.u32(), c = r.u32();
  if (h == 0 || w == 0 || c == 0) throw Error(Errc::count_mismatch, "FGRD declares an empty grid");
  r.expect_size(kFgrdHeaderBytes + 4 * h * w * c);
  std::vector<float> values(h * w * c);
  r.f32_array(values.data(), values.size());
  return FeatureGrid(h, w, c, std::vector<double>(values.begin(), values.end()));
}

// ---- pose section (shared by TPDB and VPTS) ---------------------------------

template <typename W>
void put_pose(W& w, const Viewpoint& v, const RotationMatrix& r) {
  for (double x : v.direction()) w.f64(x);
  w.f64(v.inplane_deg());
  for (double x : r.m) w.f64(x);
}

template <typename R>
std::pair<Viewpoint, RotationMatrix> get_pose(R& r) {
  Vec3 dir;
  for (double& x : dir) x = r.f64();
  const double inplane = r.f64();
  RotationMatrix rot;
  for (double& x : rot.m) x = r.f64();
  try {
    return {Viewpoint(dir, inplane), rot};
  } catch (const Error& e) {
    throw Error(Errc::validation, std::string("invalid viewpoint in file: ") + e.what());
  }
}

// ---- TPDB -------------------------------------------------------------------

template <typename W, typename GetMask, typename PutFeatures>
void put_tpdb(W& w, std::size_t h, std::size_t wd, std::size_t c, std::span<const TemplateEntry> entries,
              GetMask&& mask_of, PutFeatures&& put_features) {
  w.magic(kTpdbMagic);
  w.u32(kFormatVersion);
  w.u32(checked_u32(h, "height"));
  w.u32(checked_u32(wd, "width"));
  w.u32(checked_u32(c, "channels"));
  // Entries arrive grouped by object.
  std::vector<std::pair<std::uint32_t, std::size_t>> groups;
  for (const auto& e : entries) {
    if (groups.empty() || groups.back().first != e.object_id) {
      groups.emplace_back(e.object_id, 0);
    }
    ++groups.back().second;
  }
  w.u32(checked_u32(groups.size(), "object count"));
  std::size_t pos = 0;
  for (const auto& [id, count] : groups) {
    w.u32(id);
    w.u32(checked_u32(count, "template count"));
    for (std::size_t t = 0; t < count; ++t, ++pos) {
      const auto& e = entries[pos];
      w.u32(e.template_index);
      put_pose(w, e.viewpoint, e.rotation);
      w.f64(e.render_meta.t_temp_z_mm);
      w.f64(e.render_meta.bb_diag_px);
      w.f64(e.render_meta.focal_px);
      w.f64(e.render_meta.bb_center_px[0]);
      w.f64(e.render_meta.bb_center_px[1]);
      w.bytes(mask_of(pos));
      put_features(w, pos);
    }
  }
}

struct TpdbHeader {
  std::size_t height, width, channels, objects;
};

// Walks the file: on_header once, on_object(count) per object, then
// on_template(entry, read_mask, read_features) per template.
template <typename Source, typename OnHeader, typename OnObject, typename OnTemplate>
TpdbHeader get_tpdb(Source& src, OnHeader&& on_header, OnObject&& on_object, OnTemplate&& on_template) {
  Reader r(src, "TPDB");
  r.magic(kTpdbMagic);
  r.version(kFormatVersion);
  TpdbHeader hdr{r.u32(), r.u32(), r.u32(), r.u32()};
  if (hdr.height == 0 || hdr.width == 0 || hdr.channels == 0) {
    throw Error(Errc::count_mismatch, "TPDB declares an empty grid");
  }
  on_header(hdr);
  const std::size_t cells = hdr.height * hdr.width;
  const std::uint64_t per_template = kTpdbTemplateMetaBytes + cells + 4 * cells * hdr.channels;
  for (std::size_t o = 0; o < hdr.objects; ++o) {
    const std::uint32_t id = r.u32();
    const std::uint32_t count = r.u32();
    r.need(per_template * count);
    on_object(count);
    for (std::uint32_t t = 0; t < count; ++t) {
      TemplateEntry e;
      e.object_id = id;
      e.template_index = r.u32();
      std::tie(e.viewpoint, e.rotation) = get_pose(r);
      e.render_meta.t_temp_z_mm = r.f64();
      e.render_meta.bb_diag_px = r.f64();
      e.render_meta.focal_px = r.f64();
      e.render_meta.bb_center_px = {r.f64(), r.f64()};
      on_template(e, [&](std::uint8_t* dst) { r.mask_bytes(dst, cells); },
                  [&](float* dst) { r.f32_array(dst, cells * hdr.channels); });
    }
  }
  r.expect_end();
  return hdr;
}

template <typename Source>
std::vector<TemplateRecord> get_tpdb_records(Source& src) {
  std::vector<TemplateRecord> records;
  std::vector<std::uint8_t> mask;
  std::vector<float> feats;
  TpdbHeader dims{};
  get_tpdb(
      src,
      [&](const TpdbHeader& hdr) {
        dims = hdr;
        mask.resize(hdr.height * hdr.width);
        feats.resize(hdr.height * hdr.width * hdr.channels);
      },
      [&](std::uint32_t count) { records.reserve(records.size() + count); },
      [&](const TemplateEntry& e, auto&& read_mask, auto&& read_features) {
        read_mask(mask.data());
        read_features(feats.data());
        TemplateRecord rec;
        rec.object_id = e.object_id;
        rec.template_index = e.template_index;
        rec.viewpoint = e.viewpoint;
        rec.rotation = e.rotation;
        rec.render_meta = e.render_meta;
        rec.mask = BinaryMask(dims.height, dims.width, mask);
        rec.features =
            FeatureGrid(dims.height, dims.width, dims.channels, std::vector<double>(feats.begin(), feats.end()));
        records.push_back(std::move(rec));
      });
  return records;
}

// ---- EMBD -------------------------------------------------------------------

template <typename W>
void put_layer(W& w, const LinearEmbedding& layer) {
  for (double x : layer.weight) w.f64(x);
  for (double x : layer.bias) w.f64(x);
}

template <typename W>
void put_embd(W& w, const Embedding& e) {
  w.magic(kEmbdMagic);
  if (!e.hidden) {
    w.u32(kFormatVersion);
    w.u32(checked_u32(e.output.c_in, "C_in"));
    w.u32(checked_u32(e.output.c_out, "C_out"));
    put_layer(w, e.output);
  } else {
    w.u32(kEmbdTwoLayerVersion);
    w.u32(checked_u32(e.hidden->c_in, "C_in"));
    w.u32(checked_u32(e.hidden->c_out, "C_hidden"));
    w.u32(checked_u32(e.output.c_out, "C_out"));
    put_layer(w, *e.hidden);
    put_layer(w, e.output);
  }
}

template <typename R>
LinearEmbedding get_layer(R& r, std::size_t c_in, std::size_t c_out) {
  LinearEmbedding layer;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.weight.resize(c_in * c_out);
  layer.bias.resize(c_out);
  for (double& x : layer.weight) x = r.f64();
  for (double& x : layer.bias) x = r.f64();
  return layer;
}

template <typename Source>
Embedding get_embd(Source& src) {
  Reader r(src, "EMBD");
  r.magic(kEmbdMagic);
  const std::uint32_t version = r.version(kEmbdTwoLayerVersion);
  Embedding e;
  if (version == kFormatVersion) {
    const std::uint64_t c_in = r.u32(), c_out = r.u32();
    if (c_in == 0 || c_out == 0) throw Error(Errc::count_mismatch, "EMBD declares an empty layer");
    r.expect_size(16 + 8 * (c_in * c_out + c_out));
    e.output = get_layer(r, c_in, c_out);
  } else {
    const std::uint64_t c_in = r.u32(), c_hidden = r.u32(), c_out = r.u32();
    if (c_in == 0 || c_hidden == 0 || c_out == 0) throw Error(Errc::count_mismatch, "EMBD declares an empty layer");
    r.expect_size(20 + 8 * (c_in * c_hidden + c_hidden + c_hidden * c_out + c_out));
    e.hidden = get_layer(r, c_in, c_hidden);
    e.output = get_layer(r, c_hidden, c_out);
  }
  return e;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  atomic_write(path, [&](auto& w) { w.bytes(bytes); });
}

std::vector<std::uint8_t> encode_fgrd(const FeatureGrid& grid) {
  std::vector<std::uint8_t> out;
  VectorSink sink(out);
  Writer w(sink);
  put_fgrd(w, grid);
  return out;
}

FeatureGrid decode_fgrd(std::span<const std::uint8_t> bytes) {
  MemorySource src(bytes);
  return get_fgrd(src);
}

void write_fgrd(const std::filesystem::path& path, const FeatureGrid& grid) {
  atomic_write(path, [&](auto& w) { put_fgrd(w, grid); });
}

FeatureGrid read_fgrd(const std::filesystem::path& path) {
  FileSource src(path);
  return get_fgrd(src);
}

void write_tpdb(const std::filesystem::path& path, const TemplateDB& db) {
  atomic_write(path, [&](auto& w) {
    put_tpdb(
        w, db.height(), db.width(), db.channels(), db.entries(), [&](std::size_t pos) { return db.mask_bytes(pos); },
        [&](auto& out, std::size_t pos) { out.f32_array(db.features(pos)); });
  });
}

void write_tpdb(const std::filesystem::path& path, std::span<const TemplateRecord> records) {
  if (records.empty()) throw Error(Errc::build, "cannot write an empty template set");
  const auto& first = records.front().features;
  std::vector<TemplateEntry> entries;
  entries.reserve(records.size());
  for (const auto& r : records) {
    if (!r.features.same_shape(first) || r.mask.height() != first.height() || r.mask.width() != first.width()) {
      throw Error(Errc::build, "all templates must share one grid shape");
    }
    entries.push_back({r.object_id, r.template_index, r.viewpoint, r.rotation, r.render_meta,
                       static_cast<std::uint32_t>(r.mask.popcount())});
  }
  atomic_write(path, [&](auto& w) {
    put_tpdb(
        w, first.height(), first.width(), first.channels(), entries,
        [&](std::size_t pos) { return records[pos].mask.bytes(); },
        [&](auto& out, std::size_t pos) { out.f32_from_doubles(records[pos].features.data()); });
  });
}

TemplateDB read_tpdb(const std::filesystem::path& path) {
  FileSource src(path);
  std::vector<TemplateEntry> entries;
  std::vector<float> arena;
  std::vector<std::uint8_t> masks;
  std::size_t cells = 0, channels = 0;
  const auto hdr = get_tpdb(
      src,
      [&](const TpdbHeader& h) {
        cells = h.height * h.width;
        channels = h.channels;
      },
      [&](std::uint32_t count) {
        entries.reserve(entries.size() + count);
        arena.reserve(arena.size() + std::size_t{count} * cells * channels);
        masks.reserve(masks.size() + std::size_t{count} * cells);
      },
      [&](const TemplateEntry& e, auto&& read_mask, auto&& read_features) {
        entries.push_back(e);
        masks.resize(masks.size() + cells);
        read_mask(masks.data() + masks.size() - cells);
        arena.resize(arena.size() + cells * channels);
        read_features(arena.data() + arena.size() - cells * channels);
      });
  return TemplateDB::from_arenas(hdr.height, hdr.width, hdr.channels, std::move(entries), std::move(arena),
                                 std::move(masks));
}

std::vector<TemplateRecord> read_tpdb_records(const std::filesystem::path& path) {
  FileSource src(path);
  return get_tpdb_records(src);
}

std::vector<TemplateRecord> decode_tpdb_records(std::span<const std::uint8_t> bytes) {
  MemorySource src(bytes);
  return get_tpdb_records(src);
}

std::vector<std::uint8_t> encode_embd(const Embedding& embedding) {
  std::vector<std::uint8_t> out;
  VectorSink sink(out);
  Writer w(sink);
  put_embd(w, embedding);
  return out;
}

Embedding decode_embd(std::span<const std::uint8_t> bytes) {
  MemorySource src(bytes);
  return get_embd(src);
}

void write_embd(const std::filesystem::path& path, const Embedding& embedding) {
  atomic_write(path, [&](auto& w) { put_embd(w, embedding); });
}

Embedding read_embd(const std::filesystem::path& path) {
  FileSource src(path);
  return get_embd(src);
}

void write_viewpoints(const std::filesystem::path& path, std::span<const IndexedViewpoint> views) {
  atomic_write(path, [&](auto& w) {
    w.magic(kVptsMagic);
    w.u32(kFormatVersion);
    w.u32(checked_u32(views.size(), "viewpoint count"));
    for (const auto& v : views) {
      w.u32(v.index);
      put_pose(w, v.viewpoint, v.rotation);
    }
  });
}

std::vector<IndexedViewpoint> read_viewpoints(const std::filesystem::path& path) {
  FileSource src(path);
  Reader r(src, "VPTS");
  r.magic(kVptsMagic);
  r.version(kFormatVersion);
  const std::uint64_t count = r.u32();
  r.expect_size(12 + count * (4 + 8 * 13));
  std::vector<IndexedViewpoint> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexedViewpoint v;
    v.index = r.u32();
    std::tie(v.viewpoint, v.rotation) = get_pose(r);
    out.push_back(v);
  }
  return out;
}

std::uint64_t tpdb_size(std::size_t objects, std::size_t templates, std::size_t height, std::size_t width,
                        std::size_t channels) {
  const std::uint64_t cells = std::uint64_t{height} * width;
  return kTpdbHeaderBytes + std::uint64_t{objects} * kTpdbObjectHeaderBytes +
         std::uint64_t{templates} * (kTpdbTemplateMetaBytes + cells + 4 * cells * channels);
}

}  // namespace posegrid::io
