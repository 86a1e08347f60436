#include "famf/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace famf::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Line of the key at `path` in `text`, found by scanning for each quoted
// component in turn. Returns 0 when not found.
std::size_t line_of(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const auto& comp : path) {
    pos = text.find("\"" + comp + "\"", pos);
    if (pos == std::string::npos) return 0;
  }
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n')) + 1;
}

std::string dotted(const std::vector<std::string>& path) {
  std::string s;
  for (const auto& p : path) s += (s.empty() ? "" : ".") + p;
  return s;
}

class Section {
 public:
  Section(const json& j, std::vector<std::string> path, const std::string& text)
      : j_(j), path_(std::move(path)), text_(text) {
    if (!j_.is_object()) fail(path_, "must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(child(key), "has the wrong type");
    }
  }

  template <typename T, typename F>
  void get_mapped(const std::string& key, T& out, F convert) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = convert(j_.at(key));
    } catch (const json::exception&) {
      fail(child(key), "has the wrong type");
    } catch (const std::invalid_argument& e) {
      fail(child(key), e.what());
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, child(key), text_);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(child(key), "is not a recognized key");
    }
  }

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& what) const {
    const std::size_t line = line_of(text_, path);
    throw ConfigError("config key '" + dotted(path) + "'" + (line ? " (line " + std::to_string(line) + ")" : "") +
                      " " + what);
  }

  std::vector<std::string> child(const std::string& key) const {
    auto p = path_;
    p.push_back(key);
    return p;
  }

 private:
  const json& j_;
  std::vector<std::string> path_;
  const std::string& text_;
  std::set<std::string> seen_;
};

std::vector<data::Modality> modalities_from(const json& j) {
  std::vector<data::Modality> out;
  for (const auto& m : j) out.push_back(data::modality_from_string(m.get<std::string>()));
  return out;
}

ordered_json modalities_to(const std::vector<data::Modality>& ms) {
  ordered_json a = ordered_json::array();
  for (auto m : ms) a.push_back(data::to_string(m));
  return a;
}

void read_model(Section& s, FamfConfig& m) {
  s.get("dim", m.dim);
  s.get("clusters", m.clusters);
  s.get("ghosts", m.ghosts);
  s.get("frames", m.frames);
  s.get("num_classes", m.num_classes);
  s.get("hidden_dim", m.hidden_dim);
  s.get("fusion_hidden1", m.fusion_hidden1);
  s.get("fusion_hidden2", m.fusion_hidden2);
  s.get_mapped("aggregation", m.aggregation, [](const json& j) { return aggregation::variant_from_string(j.get<std::string>()); });
  s.get_mapped("fusion", m.fusion, [](const json& j) { return fusion::variant_from_string(j.get<std::string>()); });
  s.get_mapped("modalities", m.modalities, modalities_from);
  s.get_mapped("phi_activation", m.phi_activation,
               [](const json& j) { return aggregation::phi_activation_from_string(j.get<std::string>()); });
  s.get("intra_normalize", m.intra_normalize);
  s.get("global_normalize", m.global_normalize);
  s.get("pooled_face", m.pooled_face);
  s.get("assign_sigma", m.assign_sigma);
  s.get("bn_eps", m.bn_eps);
  s.get("bn_momentum", m.bn_momentum);
  std::string activation = "relu";
  s.get("activation", activation);
  if (activation != "relu") s.fail(s.child("activation"), "must be \"relu\"");
  s.reject_unknown();
}

void set_path(json& doc, const std::string& path, const json& value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' is malformed");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
    start = dot + 1;
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) { return parse_run_config(text, {}); }

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must look like key.path=value");
    const std::string value = o.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;
    set_path(doc, o.substr(0, eq), v);
  }

  RunConfig c;
  Section root(doc, {}, text);
  root.get("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion) {
    root.fail({"schema_version"}, "must be " + std::to_string(kSchemaVersion));
  }
  root.get("seed", c.seed);
  root.get("run_dir", c.run_dir);

  {
    Section s = root.sub("synth");
    auto& p = c.synth;
    p.seed = c.seed;
    s.get("num_classes", p.num_classes);
    s.get("dim", p.dim);
    s.get("episodes_per_class", p.episodes_per_class);
    s.get("frames_min", p.frames_min);
    s.get("frames_max", p.frames_max);
    s.get("corrupt_fraction", p.corrupt_fraction);
    s.get("sigma_clean", p.sigma_clean);
    s.get("sigma_corrupt", p.sigma_corrupt);
    s.get("corrupt_shrink", p.corrupt_shrink);
    s.get("sigma_modality", p.sigma_modality);
    s.get("dropout_audio", p.dropout_audio);
    s.get("dropout_body", p.dropout_body);
    s.get("dropout_text", p.dropout_text);
    s.get("seed", p.seed);
    s.reject_unknown();
  }
  {
    c.model.dim = c.synth.dim;
    c.model.num_classes = c.synth.num_classes;
    Section s = root.sub("model");
    read_model(s, c.model);
    // Unset fusion widths shrink to fit a small feature dimension.
    if (!s.has("fusion_hidden1")) c.model.fusion_hidden1 = std::min(c.model.fusion_hidden1, c.model.dim);
    if (!s.has("fusion_hidden2")) c.model.fusion_hidden2 = std::min(c.model.fusion_hidden2, c.model.fusion_hidden1);
  }
  {
    Section s = root.sub("training");
    auto& t = c.training;
    s.get("lr_agg", t.lr_agg);
    s.get("lr_rest", t.lr_rest);
    s.get("decay_start", t.decay_start);
    s.get("decay_every", t.decay_every);
    s.get("decay_factor", t.decay_factor);
    s.get("batch_size", t.batch_size);
    s.get("epochs", t.epochs);
    s.reject_unknown();
  }
  {
    Section s = root.sub("adam");
    s.get("beta1", c.adam.beta1);
    s.get("beta2", c.adam.beta2);
    s.get("eps", c.adam.eps);
    s.reject_unknown();
  }
  {
    Section s = root.sub("eval");
    s.get("cutoff", c.eval.cutoff);
    s.get("val_fraction", c.eval.val_fraction);
    s.get_mapped("frames", c.eval.frames, [](const json& j) { return std::optional<std::size_t>(j.get<std::size_t>()); });
    s.reject_unknown();
  }
  {
    Section s = root.sub("ablation");
    auto& a = c.ablation;
    s.get_mapped("aggregations", a.aggregations, [](const json& j) {
      std::vector<aggregation::Variant> v;
      for (const auto& x : j) v.push_back(aggregation::variant_from_string(x.get<std::string>()));
      return v;
    });
    s.get_mapped("fusions", a.fusions, [](const json& j) {
      std::vector<fusion::Variant> v;
      for (const auto& x : j) v.push_back(fusion::variant_from_string(x.get<std::string>()));
      return v;
    });
    s.get_mapped("modality_subsets", a.modality_subsets, [](const json& j) {
      std::vector<std::vector<data::Modality>> v;
      for (const auto& x : j) v.push_back(modalities_from(x));
      return v;
    });
    s.get("clusters", a.clusters);
    s.get("seeds", a.seeds);
    s.get("jobs", a.jobs);
    s.reject_unknown();
  }
  {
    Section s = root.sub("inspect");
    s.get("episodes", c.inspect.episodes);
    s.get("max_episodes", c.inspect.max_episodes);
    s.reject_unknown();
  }
  root.reject_unknown();

  try {
    c.synth.validate();
    c.model.validate();
    c.training.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.model.dim != c.synth.dim) throw ConfigError("model.dim must equal synth.dim");
  if (c.model.num_classes != c.synth.num_classes) throw ConfigError("model.num_classes must equal synth.num_classes");
  if (c.eval.cutoff == 0) throw ConfigError("eval.cutoff must be positive");
  if (!(c.eval.val_fraction > 0.0 && c.eval.val_fraction < 1.0)) throw ConfigError("eval.val_fraction must lie in (0, 1)");
  if (c.ablation.jobs == 0) throw ConfigError("ablation.jobs must be positive");
  return c;
}

ordered_json to_json(const FamfConfig& m) {
  ordered_json j;
  j["dim"] = m.dim;
  j["clusters"] = m.clusters;
  j["ghosts"] = m.ghosts;
  j["frames"] = m.frames;
  j["num_classes"] = m.num_classes;
  j["hidden_dim"] = m.hidden_dim;
  j["fusion_hidden1"] = m.fusion_hidden1;
  j["fusion_hidden2"] = m.fusion_hidden2;
  j["aggregation"] = aggregation::to_string(m.aggregation);
  j["fusion"] = fusion::to_string(m.fusion);
  j["modalities"] = modalities_to(m.modalities);
  j["phi_activation"] = aggregation::to_string(m.phi_activation);
  j["intra_normalize"] = m.intra_normalize;
  j["global_normalize"] = m.global_normalize;
  j["pooled_face"] = m.pooled_face;
  j["assign_sigma"] = m.assign_sigma;
  j["bn_eps"] = m.bn_eps;
  j["bn_momentum"] = m.bn_momentum;
  j["activation"] = "relu";
  return j;
}

ordered_json to_json(const training::Schedule& t) {
  ordered_json j;
  j["lr_agg"] = t.lr_agg;
  j["lr_rest"] = t.lr_rest;
  j["decay_start"] = t.decay_start;
  j["decay_every"] = t.decay_every;
  j["decay_factor"] = t.decay_factor;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  return j;
}

ordered_json to_json(const data::SynthSpec& p) {
  ordered_json j;
  j["num_classes"] = p.num_classes;
  j["dim"] = p.dim;
  j["episodes_per_class"] = p.episodes_per_class;
  j["frames_min"] = p.frames_min;
  j["frames_max"] = p.frames_max;
  j["corrupt_fraction"] = p.corrupt_fraction;
  j["sigma_clean"] = p.sigma_clean;
  j["sigma_corrupt"] = p.sigma_corrupt;
  j["corrupt_shrink"] = p.corrupt_shrink;
  j["sigma_modality"] = p.sigma_modality;
  j["dropout_audio"] = p.dropout_audio;
  j["dropout_body"] = p.dropout_body;
  j["dropout_text"] = p.dropout_text;
  j["seed"] = p.seed;
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["run_dir"] = c.run_dir;
  j["synth"] = to_json(c.synth);
  j["model"] = to_json(c.model);
  j["training"] = to_json(c.training);
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  ordered_json ev;
  ev["cutoff"] = c.eval.cutoff;
  ev["val_fraction"] = c.eval.val_fraction;
  if (c.eval.frames) ev["frames"] = *c.eval.frames;
  j["eval"] = ev;
  ordered_json ab;
  ab["aggregations"] = ordered_json::array();
  for (auto v : c.ablation.aggregations) ab["aggregations"].push_back(aggregation::to_string(v));
  ab["fusions"] = ordered_json::array();
  for (auto v : c.ablation.fusions) ab["fusions"].push_back(fusion::to_string(v));
  ab["modality_subsets"] = ordered_json::array();
  for (const auto& s : c.ablation.modality_subsets) ab["modality_subsets"].push_back(modalities_to(s));
  ab["clusters"] = c.ablation.clusters;
  ab["seeds"] = c.ablation.seeds;
  ab["jobs"] = c.ablation.jobs;
  j["ablation"] = ab;
  j["inspect"] = {{"episodes", c.inspect.episodes}, {"max_episodes", c.inspect.max_episodes}};
  return j;
}

FamfConfig model_from_json(const json& j) {
  FamfConfig m;
  const std::string text = j.dump();
  Section s(j, {"model"}, text);
  read_model(s, m);
  m.validate();
  return m;
}

std::string fingerprint(const ordered_json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string model_fingerprint(const FamfConfig& c) { return fingerprint(to_json(c)); }

std::string checkpoint_header(const FamfConfig& c) {
  ordered_json j;
  j["fingerprint"] = model_fingerprint(c);
  j["model"] = to_json(c);
  return j.dump(2);
}

CheckpointHeader parse_checkpoint_header(const std::string& header) {
  json j = json::parse(header, nullptr, false);
  if (j.is_discarded() || !j.contains("fingerprint") || !j.contains("model")) {
    throw ConfigError("checkpoint header is not a model description");
  }
  return {j.at("fingerprint").get<std::string>(), model_from_json(j.at("model"))};
}

}  // namespace famf::config
