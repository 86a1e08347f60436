#include "famf/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "famf/binary_io.hpp"

namespace famf::data {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kFace: return "face";
    case Modality::kAudio: return "audio";
    case Modality::kBody: return "body";
    case Modality::kText: return "text";
  }
  return "?";
}

Modality modality_from_string(const std::string& s) {
  if (s == "face") return Modality::kFace;
  if (s == "audio") return Modality::kAudio;
  if (s == "body") return Modality::kBody;
  if (s == "text") return Modality::kText;
  throw std::invalid_argument("unknown modality '" + s + "'");
}

const std::optional<Tensor>& Episode::modality(Modality m) const {
  switch (m) {
    case Modality::kAudio: return audio;
    case Modality::kBody: return body;
    case Modality::kText: return text;
    case Modality::kFace: break;
  }
  throw std::invalid_argument("face is not a single-row modality");
}

void SynthSpec::validate() const {
  if (num_classes == 0) throw std::invalid_argument("synth: num_classes must be positive");
  if (dim == 0) throw std::invalid_argument("synth: dim must be positive");
  if (episodes_per_class == 0) throw std::invalid_argument("synth: episodes_per_class must be positive");
  if (frames_min == 0 || frames_max < frames_min) {
    throw std::invalid_argument("synth: need 1 <= frames_min <= frames_max");
  }
  for (double p : {corrupt_fraction, dropout_audio, dropout_body, dropout_text}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("synth: probabilities must lie in [0, 1]");
  }
  for (double s : {sigma_clean, sigma_corrupt, sigma_modality}) {
    if (!(s >= 0.0)) throw std::invalid_argument("synth: noise scales must be non-negative");
  }
}

namespace {

std::vector<Tensor> unit_latents(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    Tensor v = Tensor::zeros(1, dim);
    double norm = 0.0;
    for (double& x : v.data()) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v.data()) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t d = spec.dim;
  auto face_latent = unit_latents(spec.num_classes, d, rng);
  auto audio_latent = unit_latents(spec.num_classes, d, rng);
  auto body_latent = unit_latents(spec.num_classes, d, rng);
  auto text_latent = unit_latents(spec.num_classes, d, rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> frames(spec.frames_min, spec.frames_max);

  auto noisy_row = [&](const Tensor& latent, double shrink, double sigma) {
    Tensor row = Tensor::zeros(1, d);
    for (std::size_t j = 0; j < d; ++j) row[j] = shrink * latent[j] + sigma * normal(rng);
    return row;
  };

  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.dim = d;
  std::uint64_t next_id = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t e = 0; e < spec.episodes_per_class; ++e) {
      Episode ep;
      ep.id = next_id++;
      ep.label = static_cast<std::uint32_t>(c);
      const std::size_t n = frames(rng);
      ep.face = Tensor::zeros(n, d);
      ep.quality.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const bool corrupt = unit(rng) < spec.corrupt_fraction;
        ep.quality[i] = corrupt ? FrameQuality::kCorrupt : FrameQuality::kClean;
        Tensor row = corrupt ? noisy_row(face_latent[c], spec.corrupt_shrink, spec.sigma_corrupt)
                             : noisy_row(face_latent[c], 1.0, spec.sigma_clean);
        std::copy(row.data().begin(), row.data().end(), ep.face.row_span(i).begin());
      }
      // Draw every modality even when dropped so the stream does not depend on dropout.
      Tensor audio = noisy_row(audio_latent[c], 1.0, spec.sigma_modality);
      Tensor body = noisy_row(body_latent[c], 1.0, spec.sigma_modality);
      Tensor text = noisy_row(text_latent[c], 1.0, spec.sigma_modality);
      if (unit(rng) >= spec.dropout_audio) ep.audio = std::move(audio);
      if (unit(rng) >= spec.dropout_body) ep.body = std::move(body);
      if (unit(rng) >= spec.dropout_text) ep.text = std::move(text);
      ds.episodes.push_back(std::move(ep));
    }
  }
  return ds;
}

std::vector<std::size_t> sample_frame_indices(std::size_t available, std::size_t target, std::uint64_t seed) {
  if (available == 0) throw std::invalid_argument("cannot sample frames from an empty feature set");
  if (target == 0) throw std::invalid_argument("frame sampling target must be positive");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(available);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (available >= target) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(target);
    return idx;
  }
  std::uniform_int_distribution<std::size_t> pick(0, available - 1);
  while (idx.size() < target) idx.push_back(pick(rng));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Tensor sample_frames(const Tensor& features, std::size_t target, std::uint64_t seed) {
  const std::size_t n = features.rank() == 2 ? features.rows() : 0;
  const auto idx = sample_frame_indices(n, target, seed);
  Tensor out = Tensor::zeros(target, features.cols());
  for (std::size_t i = 0; i < target; ++i) {
    auto src = features.row_span(idx[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

Split split_dataset(const Dataset& dataset, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must lie in [0, 1)");
  }
  std::map<std::uint32_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < dataset.episodes.size(); ++i) by_label[dataset.episodes[i].label].push_back(i);
  std::mt19937_64 rng(seed);
  Split split;
  for (auto& [label, members] : by_label) {
    std::shuffle(members.begin(), members.end(), rng);
    auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(members.size())));
    if (members.size() > 1) n_val = std::min(n_val, members.size() - 1);
    if (members.size() == 1) n_val = 0;
    split.validation.insert(split.validation.end(), members.begin(), members.begin() + static_cast<long>(n_val));
    split.train.insert(split.train.end(), members.begin() + static_cast<long>(n_val), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

namespace {

constexpr std::string_view kFeatureMagic = "FAMFFEAT";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::string_view kManifestMagic = "famf-manifest 1";

void check_row(const Tensor& t, std::size_t dim, std::uint64_t id, const char* what) {
  if (t.rank() != 2 || t.rows() != 1 || t.cols() != dim) {
    throw DimensionError("episode " + std::to_string(id) + ": " + what + " must be 1x" + std::to_string(dim));
  }
}

}  // namespace

std::vector<char> encode_features(const Dataset& dataset) {
  io::Writer w;
  w.put_bytes(kFeatureMagic);
  w.put<std::uint32_t>(kFeatureVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.dim));
  w.put<std::uint64_t>(dataset.episodes.size());
  for (const Episode& ep : dataset.episodes) {
    const std::size_t n = ep.face_frames();
    if (n && ep.face.cols() != dataset.dim) {
      throw DimensionError("episode " + std::to_string(ep.id) + ": face width differs from dataset dim");
    }
    w.put<std::uint64_t>(ep.id);
    w.put<std::uint32_t>(ep.label);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n));
    std::uint8_t mask = 0;
    if (ep.audio) mask |= 1;
    if (ep.body) mask |= 2;
    if (ep.text) mask |= 4;
    w.put<std::uint8_t>(mask);
    for (std::size_t i = 0; i < n; ++i) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(i < ep.quality.size() ? ep.quality[i] : FrameQuality::kUnknown));
    }
    w.put_doubles(ep.face.data().data(), n * dataset.dim);
    for (const auto* m : {&ep.audio, &ep.body, &ep.text}) {
      if (!*m) continue;
      check_row(**m, dataset.dim, ep.id, "modality row");
      w.put_doubles((*m)->data().data(), dataset.dim);
    }
  }
  return w.bytes();
}

std::string format_manifest(const Manifest& manifest) {
  std::ostringstream os;
  os << kManifestMagic << '\n';
  os << "features " << manifest.features_file << '\n';
  os << "dim " << manifest.dim << '\n';
  os << "classes " << manifest.num_classes << '\n';
  for (const auto& e : manifest.entries) os << "episode " << e.id << ' ' << e.label << '\n';
  return os.str();
}

Manifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kManifestMagic) {
    throw std::invalid_argument("manifest line 1: expected '" + std::string(kManifestMagic) + "'");
  }
  Manifest m;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    bool ok = true;
    if (key == "features") {
      ok = static_cast<bool>(ls >> m.features_file);
    } else if (key == "dim") {
      ok = static_cast<bool>(ls >> m.dim);
    } else if (key == "classes") {
      ok = static_cast<bool>(ls >> m.num_classes);
    } else if (key == "episode") {
      ManifestEntry e{};
      ok = static_cast<bool>(ls >> e.id >> e.label);
      if (ok) m.entries.push_back(e);
    } else {
      throw std::invalid_argument("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!ok) throw std::invalid_argument("manifest line " + std::to_string(lineno) + ": malformed '" + key + "' entry");
  }
  return m;
}

Dataset decode_features(std::string_view bytes, const Manifest& manifest) {
  Dataset ds;
  ds.dim = manifest.dim;
  ds.num_classes = manifest.num_classes;
  if (manifest.entries.empty()) return ds;
  io::Reader r(bytes);
  if (r.get_bytes(kFeatureMagic.size(), "magic") != kFeatureMagic) throw io::ParseError("not a feature file", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureVersion) throw io::ParseError("unsupported feature file version " + std::to_string(version), 8);
  const auto dim = r.get<std::uint32_t>("dim");
  if (dim != manifest.dim) {
    throw io::ParseError("feature file dim " + std::to_string(dim) + " does not match manifest dim " +
                             std::to_string(manifest.dim), 12);
  }
  const auto count = r.get<std::uint64_t>("record count");
  if (count != manifest.entries.size()) {
    throw io::ParseError("feature file holds " + std::to_string(count) + " records, manifest lists " +
                             std::to_string(manifest.entries.size()), 16);
  }
  for (const ManifestEntry& expected : manifest.entries) {
    const std::string who = "episode " + std::to_string(expected.id);
    try {
      Episode ep;
      ep.id = r.get<std::uint64_t>("id");
      if (ep.id != expected.id) {
        throw io::ParseError("record id " + std::to_string(ep.id) + " out of manifest order", r.offset() - 8);
      }
      ep.label = r.get<std::uint32_t>("label");
      if (ep.label != expected.label) throw io::ParseError("label differs from manifest", r.offset() - 4);
      if (manifest.num_classes && ep.label >= manifest.num_classes) {
        throw io::ParseError("label " + std::to_string(ep.label) + " out of range", r.offset() - 4);
      }
      const auto n = r.get<std::uint32_t>("face row count");
      const auto mask = r.get<std::uint8_t>("modality mask");
      if (mask > 7) throw io::ParseError("invalid modality mask", r.offset() - 1);
      ep.quality.resize(n);
      for (auto& q : ep.quality) {
        const auto raw = r.get<std::uint8_t>("frame quality");
        if (raw > 2) throw io::ParseError("invalid frame quality code", r.offset() - 1);
        q = static_cast<FrameQuality>(raw);
      }
      ep.face = Tensor::zeros(n, dim);
      r.get_doubles(ep.face.data().data(), std::size_t{n} * dim, "face features");
      auto read_row = [&](const char* what) {
        Tensor t = Tensor::zeros(1, dim);
        r.get_doubles(t.data().data(), dim, what);
        return t;
      };
      if (mask & 1) ep.audio = read_row("audio row");
      if (mask & 2) ep.body = read_row("body row");
      if (mask & 4) ep.text = read_row("text row");
      if (!ep.face.all_finite() || (ep.audio && !ep.audio->all_finite()) ||
          (ep.body && !ep.body->all_finite()) || (ep.text && !ep.text->all_finite())) {
        throw io::ParseError("non-finite feature value", r.offset());
      }
      ds.episodes.push_back(std::move(ep));
    } catch (const io::ParseError& e) {
      throw io::ParseError(who + ": " + e.what(), e.offset());
    }
  }
  if (!r.at_end()) throw io::ParseError("trailing bytes after last record", r.offset());
  return ds;
}

Dataset load_features(const std::string& path, const Manifest& manifest) {
  if (manifest.entries.empty()) return decode_features({}, manifest);
  return decode_features(io::read_file(path), manifest);
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.features_file = "features.bin";
  m.dim = dataset.dim;
  m.num_classes = dataset.num_classes;
  for (const auto& ep : dataset.episodes) m.entries.push_back({ep.id, ep.label});
  io::write_file((std::filesystem::path(dir) / m.features_file).string(), encode_features(dataset));
  io::write_text((std::filesystem::path(dir) / "manifest.txt").string(), format_manifest(m));
}

Dataset load_dataset(const std::string& manifest_path) {
  const Manifest m = parse_manifest(io::read_file(manifest_path));
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  return load_features((dir / m.features_file).string(), m);
}

}  // namespace famf::data
