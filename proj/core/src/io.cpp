#include "tdl/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace tdl {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void str(const std::string& s) {
    put<uint32_t>(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish(std::ostream& out) {
    Fnv1a h;
    h.update(buf_.data(), buf_.size());
    put<uint64_t>(h.digest());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw FormatError("write failed after " + std::to_string(buf_.size()) + " bytes");
  }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::istream& in, const char* what) : what_(what) {
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(std::string(what_) + " truncated at byte offset " + std::to_string(buf_.size()) + ": needed " +
                        std::to_string(n) + " bytes at offset " + std::to_string(pos_));
    }
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const auto n = get<uint32_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t offset() const { return pos_; }

  void magic(const char (&expected)[5]) {
    char m[4];
    bytes(m, 4);
    if (std::memcmp(m, expected, 4) != 0) {
      throw FormatError(std::string(what_) + ": bad magic at byte offset 0, expected \"" + expected + "\"");
    }
  }
  void version(uint32_t expected) {
    const std::size_t at = pos_;
    const auto v = get<uint32_t>();
    if (v != expected) {
      throw FormatError(std::string(what_) + ": unsupported version " + std::to_string(v) + " at byte offset " +
                        std::to_string(at));
    }
  }
  /// Checks the trailing digest; the payload must end exactly where it starts.
  void verify() {
    const std::size_t at = pos_;
    Fnv1a h;
    h.update(buf_.data(), at);
    const auto stored = get<uint64_t>();
    if (stored != h.digest()) {
      throw FormatError(std::string(what_) + ": checksum mismatch at byte offset " + std::to_string(at) + " (stored " +
                        hex64(stored) + ", computed " + hex64(h.digest()) + ")");
    }
    if (pos_ != buf_.size()) {
      throw FormatError(std::string(what_) + ": " + std::to_string(buf_.size() - pos_) +
                        " trailing bytes after checksum at byte offset " + std::to_string(pos_));
    }
  }

 private:
  const char* what_;
  std::string buf_;
  std::size_t pos_ = 0;
};

enum class Dtype : uint8_t { u8 = 1, f32 = 2, f64 = 3 };

// Column order of the modality table. "expert" stores K x 2 doubles.
enum Column : uint8_t { col_image, col_seg_cam, col_seg_map, col_depth, col_expert, col_count };

struct ColumnInfo {
  bool present = false;
  Dtype dtype = Dtype::u8;
  uint32_t h = 0, w = 0, c = 0;
  friend bool operator==(const ColumnInfo&, const ColumnInfo&) = default;
};

std::array<ColumnInfo, col_count> columns_of(const Sample& s) {
  std::array<ColumnInfo, col_count> t{};
  auto u = [](int v) { return static_cast<uint32_t>(v); };
  if (!s.image.rgb.empty()) t[col_image] = {true, Dtype::u8, u(s.image.height), u(s.image.width), 3};
  if (!s.seg_cam.ids.empty()) t[col_seg_cam] = {true, Dtype::u8, u(s.seg_cam.height), u(s.seg_cam.width), 1};
  if (!s.seg_map.ids.empty()) t[col_seg_map] = {true, Dtype::u8, u(s.seg_map.height), u(s.seg_map.width), 1};
  if (!s.depth.meters.empty()) t[col_depth] = {true, Dtype::f32, u(s.depth.height), u(s.depth.width), 1};
  if (!s.expert.points.empty()) t[col_expert] = {true, Dtype::f64, static_cast<uint32_t>(s.expert.points.size()), 2, 1};
  return t;
}

std::size_t dtype_size(Dtype d) { return d == Dtype::u8 ? 1 : d == Dtype::f32 ? 4 : 8; }

void check_column(const ColumnInfo& c, std::size_t at, int col) {
  const bool known = c.dtype == Dtype::u8 || c.dtype == Dtype::f32 || c.dtype == Dtype::f64;
  const uint64_t n = uint64_t{c.h} * c.w * c.c;
  if (!known || (c.present && (n == 0 || n > (uint64_t{1} << 28)))) {
    throw FormatError("dataset: invalid modality table entry " + std::to_string(col) + " at byte offset " +
                      std::to_string(at));
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  return out;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data) {
  Writer w;
  w.bytes("TDL1", 4);
  w.put<uint32_t>(kDatasetVersion);
  w.put<uint64_t>(data.size());
  const auto table = data.empty() ? std::array<ColumnInfo, col_count>{} : columns_of(data.front());
  for (const auto& c : table) {
    w.put<uint8_t>(c.present ? 1 : 0);
    w.put<uint8_t>(static_cast<uint8_t>(c.dtype));
    w.put<uint32_t>(c.h);
    w.put<uint32_t>(c.w);
    w.put<uint32_t>(c.c);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data[i];
    if (columns_of(s) != table) {
      throw FormatError("dataset: sample " + std::to_string(i) + " differs from sample 0 in its modality set or shapes");
    }
    const AgentState& p = s.pose;
    for (double v : {p.position.x, p.position.y, p.heading, p.speed, p.odometer, p.time}) w.put<double>(v);
    if (table[col_image].present) w.bytes(s.image.rgb.data(), s.image.rgb.size());
    if (table[col_seg_cam].present) w.bytes(s.seg_cam.ids.data(), s.seg_cam.ids.size());
    if (table[col_seg_map].present) w.bytes(s.seg_map.ids.data(), s.seg_map.ids.size());
    if (table[col_depth].present) w.bytes(s.depth.meters.data(), s.depth.meters.size() * sizeof(float));
    if (table[col_expert].present) {
      for (Vec2 q : s.expert.points) {
        w.put<double>(q.x);
        w.put<double>(q.y);
      }
    }
  }
  w.finish(out);
}

Dataset read_dataset(std::istream& in) {
  Reader r(in, "dataset");
  r.magic("TDL1");
  r.version(kDatasetVersion);
  const auto count = r.get<uint64_t>();
  std::array<ColumnInfo, col_count> table{};
  for (int k = 0; k < col_count; ++k) {
    const std::size_t at = r.offset();
    ColumnInfo& c = table[static_cast<std::size_t>(k)];
    c.present = r.get<uint8_t>() != 0;
    c.dtype = static_cast<Dtype>(r.get<uint8_t>());
    c.h = r.get<uint32_t>();
    c.w = r.get<uint32_t>();
    c.c = r.get<uint32_t>();
    check_column(c, at, k);
  }
  std::size_t per_sample = 6 * sizeof(double);
  for (const auto& c : table) {
    if (c.present) per_sample += std::size_t{c.h} * c.w * c.c * dtype_size(c.dtype);
  }
  // Refuse absurd counts before allocating.
  r.need(std::min<uint64_t>(count, uint64_t{1} << 40) * per_sample);

  Dataset data(count);
  for (auto& s : data) {
    AgentState& p = s.pose;
    for (double* v : {&p.position.x, &p.position.y, &p.heading, &p.speed, &p.odometer, &p.time}) *v = r.get<double>();
    auto h = [&](Column c) { return static_cast<int>(table[c].h); };
    auto wd = [&](Column c) { return static_cast<int>(table[c].w); };
    if (table[col_image].present) {
      s.image = Image(h(col_image), wd(col_image));
      r.bytes(s.image.rgb.data(), s.image.rgb.size());
    }
    if (table[col_seg_cam].present) {
      s.seg_cam = SegMap(h(col_seg_cam), wd(col_seg_cam));
      r.bytes(s.seg_cam.ids.data(), s.seg_cam.ids.size());
    }
    if (table[col_seg_map].present) {
      s.seg_map = SegMap(h(col_seg_map), wd(col_seg_map));
      r.bytes(s.seg_map.ids.data(), s.seg_map.ids.size());
    }
    if (table[col_depth].present) {
      s.depth = DepthMap(h(col_depth), wd(col_depth));
      r.bytes(s.depth.meters.data(), s.depth.meters.size() * sizeof(float));
    }
    if (table[col_expert].present) {
      s.expert.points.resize(table[col_expert].h);
      for (Vec2& q : s.expert.points) {
        q.x = r.get<double>();
        q.y = r.get<double>();
      }
    }
  }
  r.verify();
  return data;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  auto out = open_out(path);
  write_dataset(out, data);
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_dataset(in);
}

void write_checkpoint(std::ostream& out, const Model& model) {
  const ModelSpec& s = model.spec();
  Writer w;
  w.bytes("TDLC", 4);
  w.put<uint32_t>(kCheckpointVersion);
  w.put<uint8_t>(static_cast<uint8_t>(s.input));
  for (int v : {s.in_height, s.in_width, s.in_channels}) w.put<int32_t>(v);
  w.put<uint8_t>(static_cast<uint8_t>(s.head.kind));
  for (int v : {s.head.num_waypoints, s.head.num_classes, s.head.out_height, s.head.out_width}) w.put<int32_t>(v);
  for (int v : s.widths) w.put<int32_t>(v);
  w.put<int32_t>(s.hidden);
  w.put<uint64_t>(s.seed);
  const auto& params = model.named_parameters();
  w.put<uint32_t>(static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.put<uint32_t>(static_cast<uint32_t>(t.shape().size()));
    for (int64_t d : t.shape()) w.put<int64_t>(d);
    w.bytes(t.data().data(), t.data().size() * sizeof(double));
  }
  w.finish(out);
}

Model read_checkpoint(std::istream& in) {
  Reader r(in, "checkpoint");
  r.magic("TDLC");
  r.version(kCheckpointVersion);
  ModelSpec s;
  const std::size_t spec_at = r.offset();
  const auto input = r.get<uint8_t>();
  if (input > static_cast<uint8_t>(Modality::depth)) {
    throw FormatError("checkpoint: unknown input modality at byte offset " + std::to_string(spec_at));
  }
  s.input = static_cast<Modality>(input);
  for (int* v : {&s.in_height, &s.in_width, &s.in_channels}) *v = r.get<int32_t>();
  const auto head = r.get<uint8_t>();
  if (head > static_cast<uint8_t>(HeadKind::segmentation)) {
    throw FormatError("checkpoint: unknown head kind at byte offset " + std::to_string(r.offset() - 1));
  }
  s.head.kind = static_cast<HeadKind>(head);
  for (int* v : {&s.head.num_waypoints, &s.head.num_classes, &s.head.out_height, &s.head.out_width}) *v = r.get<int32_t>();
  for (int& v : s.widths) v = r.get<int32_t>();
  s.hidden = r.get<int32_t>();
  s.seed = r.get<uint64_t>();
  try {
    validate(s);
  } catch (const Error& e) {
    throw FormatError("checkpoint: invalid model spec at byte offset " + std::to_string(spec_at) + ": " + e.what());
  }
  Model model(s);
  auto& params = model.named_parameters();
  const std::size_t count_at = r.offset();
  const auto count = r.get<uint32_t>();
  if (count != params.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " tensors at byte offset " + std::to_string(count_at) +
                      ", architecture has " + std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const std::size_t at = r.offset();
    const std::string stored = r.str();
    const auto rank = r.get<uint32_t>();
    if (rank > 8) throw FormatError("checkpoint: rank " + std::to_string(rank) + " at byte offset " + std::to_string(at));
    Shape shape(rank);
    for (auto& d : shape) d = r.get<int64_t>();
    if (stored != name || shape != t.shape()) {
      throw FormatError("checkpoint: tensor \"" + stored + "\" " + shape_str(shape) + " at byte offset " +
                        std::to_string(at) + " does not match \"" + name + "\" " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    r.bytes(dst.data(), dst.size() * sizeof(double));
  }
  r.verify();
  return model;
}

void write_checkpoint(const std::filesystem::path& path, const Model& model) {
  auto out = open_out(path);
  write_checkpoint(out, model);
}

Model read_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

std::string file_digest(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Fnv1a h;
  h.update(bytes.data(), bytes.size());
  return hex64(h.digest());
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  auto out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

void write_pgm(const std::filesystem::path& path, const SegMap& seg) {
  auto out = open_out(path);
  out << "P5\n" << seg.width << ' ' << seg.height << "\n255\n";
  std::string px(seg.ids.size(), '\0');
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<char>(std::min(255, seg.ids[i] * 255 / (kNumClasses - 1)));
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
}

void write_pgm(const std::filesystem::path& path, const DepthMap& depth) {
  auto out = open_out(path);
  out << "P5\n" << depth.width << ' ' << depth.height << "\n255\n";
  std::string px(depth.meters.size(), '\0');
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp(static_cast<double>(depth.meters[i]) / kMaxDepth, 0.0, 1.0);
    px[i] = static_cast<char>(static_cast<int>(std::lround(v * 255.0)));
  }
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
}

std::filesystem::path default_output_root() {
  const char* env = std::getenv("TDL_OUT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("out");
}

}  // namespace tdl
