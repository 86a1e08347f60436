#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "famf/tensor.hpp"

namespace famf::data {

enum class Modality { kFace, kAudio, kBody, kText };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

enum class FrameQuality : std::uint8_t { kCorrupt = 0, kClean = 1, kUnknown = 2 };

// One labeled clip. `face` holds one row per detected face frame; the other
// modalities are single D-wide rows and may be absent.
struct Episode {
  std::uint64_t id = 0;
  std::uint32_t label = 0;
  Tensor face;
  std::optional<Tensor> audio, body, text;
  std::vector<FrameQuality> quality;

  const std::optional<Tensor>& modality(Modality m) const;
  std::size_t face_frames() const { return face.rank() == 2 ? face.rows() : 0; }
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<Episode> episodes;
};

struct SynthSpec {
  std::size_t num_classes = 50;
  std::size_t dim = 64;
  std::size_t episodes_per_class = 20;
  std::size_t frames_min = 8;
  std::size_t frames_max = 40;
  double corrupt_fraction = 0.3;
  double sigma_clean = 0.1;
  double sigma_corrupt = 0.5;  // 5 x sigma_clean
  double corrupt_shrink = 0.2;
  double sigma_modality = 0.1;
  double dropout_audio = 0.1;
  double dropout_body = 0.1;
  double dropout_text = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

// Every class owns one unit latent per modality. Clean face frames are the
// latent plus N(0, sigma_clean^2) noise; corrupt frames are the shrunk latent
// plus N(0, sigma_corrupt^2) noise. Each face frame is corrupt independently
// with probability corrupt_fraction. Episode ids are 0..n-1 in class-major
// order.
Dataset generate(const SynthSpec& spec);

// Row indices drawn by the frame sampler. With at least `target` rows a
// uniform draw without replacement; otherwise every row once plus uniform
// draws with replacement up to `target`. Order is shuffled.
std::vector<std::size_t> sample_frame_indices(std::size_t available, std::size_t target, std::uint64_t seed);
Tensor sample_frames(const Tensor& features, std::size_t target, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;  // indices into Dataset::episodes
  std::vector<std::size_t> validation;
};

// Per label, ceil(val_fraction * count) episodes go to validation (at most
// count - 1 when a label has more than one episode).
Split split_dataset(const Dataset& dataset, double val_fraction, std::uint64_t seed);

// Feature file + manifest. See docs/formats.md for the byte layout.
struct ManifestEntry {
  std::uint64_t id;
  std::uint32_t label;
};

struct Manifest {
  std::string features_file;  // relative to the manifest's directory
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<ManifestEntry> entries;
};

std::vector<char> encode_features(const Dataset& dataset);
std::string format_manifest(const Manifest& manifest);
Manifest parse_manifest(const std::string& text);

Dataset load_features(const std::string& path, const Manifest& manifest);
Dataset decode_features(std::string_view bytes, const Manifest& manifest);

// Writes <dir>/features.bin and <dir>/manifest.txt.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& manifest_path);

}  // namespace famf::data
