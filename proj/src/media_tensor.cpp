#include "nnn/media_tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nnn/errors.hpp"
#include "nnn/rng.hpp"

namespace nnn {

namespace {

constexpr char kMagic[4] = {'N', 'N', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "dataset payloads are read and written as host little-endian floats");

template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    fail(ErrorCategory::format, std::string("truncated dataset file while reading ") + what);
  }
  return value;
}

}  // namespace

std::string_view to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::target: return "target";
    case ChannelKind::organic: return "organic";
    case ChannelKind::media: return "media";
  }
  return "media";
}

ChannelKind channel_kind_from_string(std::string_view s) {
  if (s == "target") return ChannelKind::target;
  if (s == "organic") return ChannelKind::organic;
  if (s == "media") return ChannelKind::media;
  fail(ErrorCategory::format, "unknown channel kind '" + std::string(s) + "'");
}

MediaTensor::MediaTensor(int geos, int times, std::vector<ChannelSpec> channels, int dim,
                         std::vector<std::int64_t> time_index)
    : geos_(geos), times_(times), dim_(dim), channels_(std::move(channels)), time_index_(std::move(time_index)) {
  if (geos <= 0 || times <= 0 || dim <= 0 || channels_.empty()) {
    fail(ErrorCategory::shape_mismatch, "media tensor dimensions must be positive");
  }
  if (time_index_.empty()) {
    time_index_.resize(times);
    std::iota(time_index_.begin(), time_index_.end(), std::int64_t{0});
  }
  if (static_cast<int>(time_index_.size()) != times) {
    fail(ErrorCategory::shape_mismatch, "time index length differs from T");
  }
  data_.assign(static_cast<std::size_t>(geos) * times * channels_.size() * dim, 0.0f);
}

int MediaTensor::channel_index(std::string_view name) const {
  for (int c = 0; c < num_channels(); ++c) {
    if (channels_[c].name == name) return c;
  }
  fail(ErrorCategory::unknown_channel, "unknown channel '" + std::string(name) + "'");
}

int MediaTensor::target_channel() const {
  for (int c = 0; c < num_channels(); ++c) {
    if (channels_[c].kind == ChannelKind::target) return c;
  }
  fail(ErrorCategory::config, "no target channel registered");
}

int MediaTensor::organic_channel() const {
  for (int c = 0; c < num_channels(); ++c) {
    if (channels_[c].kind == ChannelKind::organic) return c;
  }
  fail(ErrorCategory::config, "no organic channel registered");
}

std::vector<int> MediaTensor::media_channels() const {
  std::vector<int> out;
  for (int c = 0; c < num_channels(); ++c) {
    if (channels_[c].kind == ChannelKind::media) out.push_back(c);
  }
  return out;
}

void MediaTensor::set_scalar(int g, int t, int c, float value) {
  auto s = slice(g, t, c);
  std::fill(s.begin(), s.end(), 0.0f);
  s[0] = value;
}

void MediaTensor::zero_channel(int c) {
  for (int g = 0; g < geos_; ++g) {
    for (int t = 0; t < times_; ++t) {
      auto s = slice(g, t, c);
      std::fill(s.begin(), s.end(), 0.0f);
    }
  }
}

MediaTensor MediaTensor::time_slice(int begin, int end) const {
  if (begin < 0 || end > times_ || begin >= end) {
    fail(ErrorCategory::shape_mismatch, "invalid time slice");
  }
  std::vector<std::int64_t> labels(time_index_.begin() + begin, time_index_.begin() + end);
  MediaTensor out(geos_, end - begin, channels_, dim_, std::move(labels));
  const std::size_t row = channels_.size() * dim_;
  for (int g = 0; g < geos_; ++g) {
    const float* src = data_.data() + offset(g, begin, 0);
    std::copy(src, src + row * (end - begin), out.data_.data() + out.offset(g, 0, 0));
  }
  return out;
}

void MediaTensor::validate() const {
  int targets = 0;
  int organics = 0;
  for (const auto& ch : channels_) {
    targets += ch.kind == ChannelKind::target;
    organics += ch.kind == ChannelKind::organic;
    if (ch.native_dim < 1 || ch.native_dim > dim_) {
      fail(ErrorCategory::shape_mismatch, "channel '" + ch.name + "' native_dim outside [1, D]");
    }
  }
  if (targets != 1) fail(ErrorCategory::config, "exactly one target channel is required");
  if (organics < 1) fail(ErrorCategory::config, "at least one organic channel is required");
  for (std::size_t i = 1; i < time_index_.size(); ++i) {
    const auto step = time_index_[i] - time_index_[i - 1];
    if (step <= 0 || (i > 1 && step != time_index_[1] - time_index_[0])) {
      fail(ErrorCategory::format, "time index must be strictly increasing with uniform spacing");
    }
  }
  for (int g = 0; g < geos_; ++g) {
    for (int t = 0; t < times_; ++t) {
      for (int c = 0; c < num_channels(); ++c) {
        auto s = slice(g, t, c);
        for (int d = channels_[c].native_dim; d < dim_; ++d) {
          if (s[d] != 0.0f) {
            fail(ErrorCategory::format, "nonzero padding in channel '" + channels_[c].name + "'");
          }
        }
      }
    }
  }
}

bool MediaTensor::operator==(const MediaTensor& other) const {
  return geos_ == other.geos_ && times_ == other.times_ && dim_ == other.dim_ &&
         channels_ == other.channels_ && time_index_ == other.time_index_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0 &&
         data_.size() == other.data_.size();
}

double channel_volume(const MediaTensor& x, int g, int t, int c) {
  double sum = 0.0;
  for (float v : x.slice(g, t, c)) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

MediaTensor mask_target(const MediaTensor& x) {
  MediaTensor out = x;
  out.zero_channel(x.target_channel());
  return out;
}

MediaTensor pad_scalar_channel(const Eigen::MatrixXd& values, int dim, ChannelSpec spec) {
  if (dim < 1) fail(ErrorCategory::shape_mismatch, "padding width must be at least 1");
  spec.native_dim = 1;
  MediaTensor out(static_cast<int>(values.rows()), static_cast<int>(values.cols()), {spec}, dim);
  for (int g = 0; g < out.geos(); ++g) {
    for (int t = 0; t < out.times(); ++t) out.set_scalar(g, t, 0, static_cast<float>(values(g, t)));
  }
  return out;
}

MediaTensor to_volume_only(const MediaTensor& x) {
  auto channels = x.channels();
  for (auto& ch : channels) ch.native_dim = 1;
  MediaTensor out(x.geos(), x.times(), channels, x.dim(), x.time_index());
  const int target = x.target_channel();
  for (int g = 0; g < x.geos(); ++g) {
    for (int t = 0; t < x.times(); ++t) {
      for (int c = 0; c < x.num_channels(); ++c) {
        // The target keeps its signed scalar; other channels become volumes.
        const double v = c == target ? x.at(g, t, c, 0) : channel_volume(x, g, t, c);
        out.set_scalar(g, t, c, static_cast<float>(v));
      }
    }
  }
  return out;
}

SplitSets split(const MediaTensor& x, const SplitSpec& spec, std::uint64_t seed) {
  if (spec.test_start >= x.times()) fail(ErrorCategory::config, "empty test window");
  if (spec.test_start <= spec.train_end) fail(ErrorCategory::config, "test_start must follow train_end");
  if (spec.train_end < 0) fail(ErrorCategory::config, "train_end must be nonnegative");
  if (!(spec.val_fraction >= 0.0 && spec.val_fraction < 1.0)) {
    fail(ErrorCategory::config, "val_fraction must lie in [0, 1)");
  }
  SplitSets out;
  std::vector<Cell> window;
  for (int g = 0; g < x.geos(); ++g) {
    for (int t = 0; t < x.times(); ++t) {
      if (t <= spec.train_end) {
        window.push_back({g, t});
      } else if (t >= spec.test_start) {
        out.test.push_back({g, t});
      }
    }
  }
  CounterRng rng(seed, 0x5b1175);
  std::shuffle(window.begin(), window.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * window.size()));
  out.val.assign(window.begin(), window.begin() + n_val);
  out.train.assign(window.begin() + n_val, window.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

void write_dataset(const MediaTensor& x, std::ostream& out) {
  nlohmann::json header;
  header["G"] = x.geos();
  header["T"] = x.times();
  header["C"] = x.num_channels();
  header["D"] = x.dim();
  header["time_index"] = x.time_index();
  auto& channels = header["channels"] = nlohmann::json::array();
  for (const auto& ch : x.channels()) {
    channels.push_back({{"name", ch.name}, {"kind", std::string(to_string(ch.kind))}, {"native_dim", ch.native_dim}});
  }
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(x.data().data()),
            static_cast<std::streamsize>(x.data().size() * sizeof(float)));
}

MediaTensor read_dataset(std::istream& in) {
  char magic[4];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCategory::format, "not a dataset file (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kVersion) {
    fail(ErrorCategory::format, "unsupported dataset version " + std::to_string(version));
  }
  const auto header_len = read_le<std::uint64_t>(in, "header length");
  if (header_len > (1u << 28)) fail(ErrorCategory::format, "implausible dataset header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    fail(ErrorCategory::format, "truncated dataset header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::format, std::string("malformed dataset header: ") + e.what());
  }
  std::vector<ChannelSpec> channels;
  int G = 0, T = 0, C = 0, D = 0;
  std::vector<std::int64_t> time_index;
  try {
    G = header.at("G").get<int>();
    T = header.at("T").get<int>();
    C = header.at("C").get<int>();
    D = header.at("D").get<int>();
    time_index = header.at("time_index").get<std::vector<std::int64_t>>();
    for (const auto& ch : header.at("channels")) {
      channels.push_back({ch.at("name").get<std::string>(), channel_kind_from_string(ch.at("kind").get<std::string>()),
                          ch.at("native_dim").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::format, std::string("incomplete dataset header: ") + e.what());
  }
  if (static_cast<int>(channels.size()) != C) {
    fail(ErrorCategory::shape_mismatch, "channel registry length differs from C");
  }
  MediaTensor x(G, T, std::move(channels), D, std::move(time_index));
  auto payload = x.data();
  const auto bytes = static_cast<std::streamsize>(payload.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(payload.data()), bytes);
  if (in.gcount() != bytes) {
    fail(ErrorCategory::shape_mismatch, "payload shorter than G*T*C*D floats (truncated or shape mismatch)");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorCategory::shape_mismatch, "payload longer than G*T*C*D floats");
  }
  return x;
}

void save_dataset(const MediaTensor& x, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::missing_file, "cannot open '" + path.string() + "' for writing");
  write_dataset(x, out);
}

MediaTensor load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::missing_file, "cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

MediaTensor load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::missing_file, "cannot open dataset '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCategory::format, "empty CSV dataset");
  const auto columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  const int D = columns - 3;
  if (D < 1) fail(ErrorCategory::format, "CSV needs geo,time,channel and at least one value column");

  struct Row {
    int g;
    std::int64_t t;
    std::string channel;
    std::vector<float> values;
  };
  std::vector<Row> rows;
  std::vector<std::string> channel_order;
  std::map<std::int64_t, int> times;
  int G = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Row row;
    std::getline(ss, field, ',');
    row.g = std::stoi(field);
    std::getline(ss, field, ',');
    row.t = std::stoll(field);
    std::getline(ss, row.channel, ',');
    while (std::getline(ss, field, ',')) row.values.push_back(std::stof(field));
    if (static_cast<int>(row.values.size()) != D) fail(ErrorCategory::shape_mismatch, "CSV row width differs from header");
    if (std::find(channel_order.begin(), channel_order.end(), row.channel) == channel_order.end()) {
      channel_order.push_back(row.channel);
    }
    times[row.t] = 0;
    G = std::max(G, row.g + 1);
    rows.push_back(std::move(row));
  }
  std::vector<std::int64_t> labels;
  for (auto& [label, pos] : times) {
    pos = static_cast<int>(labels.size());
    labels.push_back(label);
  }
  std::vector<ChannelSpec> specs;
  for (const auto& name : channel_order) {
    ChannelKind kind = name == "sales" ? ChannelKind::target : name == "search" ? ChannelKind::organic : ChannelKind::media;
    specs.push_back({name, kind, 1});
  }
  MediaTensor x(G, static_cast<int>(labels.size()), specs, D, labels);
  std::vector<int> widths(specs.size(), 1);
  for (const auto& row : rows) {
    const int c = x.channel_index(row.channel);
    auto s = x.slice(row.g, times[row.t], c);
    std::copy(row.values.begin(), row.values.end(), s.begin());
    for (int d = D - 1; d >= 0; --d) {
      if (row.values[d] != 0.0f) {
        widths[c] = std::max(widths[c], d + 1);
        break;
      }
    }
  }
  auto channels = x.channels();
  for (std::size_t c = 0; c < channels.size(); ++c) channels[c].native_dim = widths[c];
  MediaTensor out(x.geos(), x.times(), channels, D, labels);
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  return out;
}

std::uint64_t dataset_hash(const MediaTensor& x) {
  std::ostringstream buffer;
  write_dataset(x, buffer);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char byte : buffer.str()) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace nnn
