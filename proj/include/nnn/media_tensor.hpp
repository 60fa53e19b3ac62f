#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace nnn {

enum class ChannelKind { target, organic, media };

std::string_view to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(std::string_view s);

struct ChannelSpec {
  std::string name;
  ChannelKind kind = ChannelKind::media;
  int native_dim = 1;  // true embedding width before zero padding

  bool operator==(const ChannelSpec&) const = default;
};

/// Rank-4 (G, T, C, D) data tensor with its channel registry. Storage is
/// row-major 32-bit floats, the same order as the payload of a `.nnt` file.
class MediaTensor {
 public:
  MediaTensor() = default;
  MediaTensor(int geos, int times, std::vector<ChannelSpec> channels, int dim,
              std::vector<std::int64_t> time_index = {});

  int geos() const { return geos_; }
  int times() const { return times_; }
  int num_channels() const { return static_cast<int>(channels_.size()); }
  int dim() const { return dim_; }

  const std::vector<ChannelSpec>& channels() const { return channels_; }
  const ChannelSpec& channel(int c) const { return channels_.at(c); }
  const std::vector<std::int64_t>& time_index() const { return time_index_; }

  /// Index of the channel called `name`; throws unknown_channel.
  int channel_index(std::string_view name) const;
  /// Index of the single target channel; throws config if none is registered.
  int target_channel() const;
  /// Index of the first organic channel; throws config if none is registered.
  int organic_channel() const;
  std::vector<int> media_channels() const;

  float& at(int g, int t, int c, int d) { return data_[offset(g, t, c) + d]; }
  float at(int g, int t, int c, int d) const { return data_[offset(g, t, c) + d]; }

  std::span<float> slice(int g, int t, int c) { return {data_.data() + offset(g, t, c), static_cast<std::size_t>(dim_)}; }
  std::span<const float> slice(int g, int t, int c) const {
    return {data_.data() + offset(g, t, c), static_cast<std::size_t>(dim_)};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// Writes `value` into element 0 of the slice and zeroes the rest.
  void set_scalar(int g, int t, int c, float value);
  void zero_channel(int c);

  /// Sub-tensor of the time steps [begin, end).
  MediaTensor time_slice(int begin, int end) const;

  /// Checks registry and padding invariants; throws on violation.
  void validate() const;

  bool operator==(const MediaTensor& other) const;

 private:
  std::size_t offset(int g, int t, int c) const {
    return ((static_cast<std::size_t>(g) * times_ + t) * channels_.size() + c) * dim_;
  }

  int geos_ = 0;
  int times_ = 0;
  int dim_ = 0;
  std::vector<ChannelSpec> channels_;
  std::vector<std::int64_t> time_index_;
  std::vector<float> data_;
};

/// Euclidean norm of X[g, t, c, :], accumulated in double.
double channel_volume(const MediaTensor& x, int g, int t, int c);

/// Copy of `x` with the target channel zeroed at every (g, t).
MediaTensor mask_target(const MediaTensor& x);

/// Pads a (G, T) scalar array to a one-channel (G, T, 1, D) tensor.
MediaTensor pad_scalar_channel(const Eigen::MatrixXd& values, int dim,
                               ChannelSpec spec = {"scalar", ChannelKind::media, 1});

/// Replaces every channel slice by its padded volume, discarding direction.
MediaTensor to_volume_only(const MediaTensor& x);

struct Cell {
  int g = 0;
  int t = 0;
  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

struct SplitSpec {
  int train_end = 0;          // last time position of the training window
  double val_fraction = 0.1;  // share of in-window cells held out
  int test_start = 0;         // first time position of the test window
};

struct SplitSets {
  std::vector<Cell> train;
  std::vector<Cell> val;
  std::vector<Cell> test;
};

SplitSets split(const MediaTensor& x, const SplitSpec& spec, std::uint64_t seed);

/// Binary dataset container; see README for the layout.
void save_dataset(const MediaTensor& x, const std::filesystem::path& path);
MediaTensor load_dataset(const std::filesystem::path& path);
void write_dataset(const MediaTensor& x, std::ostream& out);
MediaTensor read_dataset(std::istream& in);

/// CSV fixture form: header `geo,time,channel,v0..v{D-1}`, one row per cell.
/// Channel kinds default to target for "sales", organic for "search" and
/// media otherwise; native_dim is inferred from the widest nonzero entry.
MediaTensor load_dataset_csv(const std::filesystem::path& path);

/// FNV-1a of the serialized dataset, used for provenance.
std::uint64_t dataset_hash(const MediaTensor& x);

}  // namespace nnn
