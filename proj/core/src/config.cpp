#include "kandu/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kandu {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& what, const std::string& value) {
  throw std::invalid_argument("expected " + what + ", got '" + value + "'");
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) bad_value("a non-negative integer", v);
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) bad_value("a non-negative integer", v);
  return out;
}

double to_double(const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) bad_value("a number", v);
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value("true or false", v);
}

template <typename Fn>
auto to_list(const std::string& v, Fn&& item) {
  std::vector<decltype(item(std::string{}))> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(item(trim(part)));
  if (out.empty()) bad_value("a comma-separated list", v);
  return out;
}

std::string str_double(double d) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  (void)ec;
  return std::string(buf, p);
}

template <typename V, typename Fn>
std::string join(const std::vector<V>& v, Fn&& item) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + item(v[i]);
  return out;
}

std::string str_bool(bool b) { return b ? "true" : "false"; }

Split to_split(const std::string& v) {
  if (v == "train") return Split::train;
  if (v == "val") return Split::val;
  if (v == "test") return Split::test;
  bad_value("train, val or test", v);
}

std::vector<ConfigKey> build_keys() {
  using C = RunConfig;
  auto sz = [](std::size_t v) { return std::to_string(v); };
  std::vector<ConfigKey> k;
  auto add = [&](std::string name, std::string help, auto set, auto get) {
    k.push_back({std::move(name), std::move(help), set, get});
  };
  add("in_channels", "input image channels",
      [](C& c, const std::string& v) { c.model.in_channels = to_size(v); },
      [=](const C& c) { return sz(c.model.in_channels); });
  add("widths", "encoder stage widths, comma separated",
      [](C& c, const std::string& v) { c.model.widths = to_list(v, to_size); },
      [=](const C& c) { return join(c.model.widths, sz); });
  add("bottleneck", "bottleneck width",
      [](C& c, const std::string& v) { c.model.bottleneck = to_size(v); },
      [=](const C& c) { return sz(c.model.bottleneck); });
  add("out_channels", "output mask channels",
      [](C& c, const std::string& v) { c.model.out_channels = to_size(v); },
      [=](const C& c) { return sz(c.model.out_channels); });
  add("model_seed", "weight initialization seed",
      [](C& c, const std::string& v) { c.model.seed = to_u64(v); },
      [](const C& c) { return std::to_string(c.model.seed); });
  add("seed", "data order, augmentation and synthetic data seed",
      [](C& c, const std::string& v) { c.train.seed = to_u64(v); },
      [](const C& c) { return std::to_string(c.train.seed); });
  add("main_lr", "learning rate of the main parameter group",
      [](C& c, const std::string& v) { c.train.main_lr = to_double(v); },
      [](const C& c) { return str_double(c.train.main_lr); });
  add("aux_lr", "learning rate of the fusion-block group",
      [](C& c, const std::string& v) { c.train.aux_lr = to_double(v); },
      [](const C& c) { return str_double(c.train.aux_lr); });
  add("aux_loss_weight", "weight of the dice term in the total loss",
      [](C& c, const std::string& v) { c.train.aux_loss_weight = to_double(v); },
      [](const C& c) { return str_double(c.train.aux_loss_weight); });
  add("weight_decay", "L2 coefficient added to every gradient",
      [](C& c, const std::string& v) { c.train.weight_decay = to_double(v); },
      [](const C& c) { return str_double(c.train.weight_decay); });
  add("epochs", "number of training epochs",
      [](C& c, const std::string& v) { c.train.epochs = to_size(v); },
      [=](const C& c) { return sz(c.train.epochs); });
  add("batch_size", "images per optimizer step",
      [](C& c, const std::string& v) { c.train.batch_size = to_size(v); },
      [=](const C& c) { return sz(c.train.batch_size); });
  add("decay_milestones", "fractions of epochs where the rates decay",
      [](C& c, const std::string& v) { c.train.decay_milestones = to_list(v, to_double); },
      [](const C& c) { return join(c.train.decay_milestones, str_double); });
  add("decay_factor", "rate multiplier at each milestone",
      [](C& c, const std::string& v) { c.train.decay_factor = to_double(v); },
      [](const C& c) { return str_double(c.train.decay_factor); });
  add("augment", "random flips, rotations and crops during training",
      [](C& c, const std::string& v) { c.train.augment = to_bool(v); },
      [](const C& c) { return str_bool(c.train.augment); });
  add("train_manifest", "manifest of training pairs",
      [](C& c, const std::string& v) { c.train_manifest = v; },
      [](const C& c) { return c.train_manifest; });
  add("val_manifest", "manifest of validation pairs",
      [](C& c, const std::string& v) { c.val_manifest = v; },
      [](const C& c) { return c.val_manifest; });
  add("test_manifest", "manifest of test pairs",
      [](C& c, const std::string& v) { c.test_manifest = v; },
      [](const C& c) { return c.test_manifest; });
  add("image_size", "square extent manifest images are resized to",
      [](C& c, const std::string& v) { c.image_size = to_size(v); },
      [=](const C& c) { return sz(c.image_size); });
  add("synth", "use generated data split 80/10/10 instead of manifests",
      [](C& c, const std::string& v) { c.synth = to_bool(v); },
      [](const C& c) { return str_bool(c.synth); });
  add("synth_count", "number of generated samples",
      [](C& c, const std::string& v) { c.synth_count = to_size(v); },
      [=](const C& c) { return sz(c.synth_count); });
  add("synth_size", "extent of generated samples",
      [](C& c, const std::string& v) { c.synth_size = to_size(v); },
      [=](const C& c) { return sz(c.synth_size); });
  add("output_dir", "directory for checkpoints, CSVs and generated files",
      [](C& c, const std::string& v) { c.output_dir = v; },
      [](const C& c) { return c.output_dir; });
  add("checkpoint", "checkpoint to evaluate or predict with",
      [](C& c, const std::string& v) { c.checkpoint = v; },
      [](const C& c) { return c.checkpoint; });
  add("resume", "checkpoint to continue training from",
      [](C& c, const std::string& v) { c.resume = v; },
      [](const C& c) { return c.resume; });
  add("eval_split", "split evaluated by eval: train, val or test",
      [](C& c, const std::string& v) { c.eval_split = to_split(v); },
      [](const C& c) { return split_name(c.eval_split); });
  add("input", "image to predict",
      [](C& c, const std::string& v) { c.input = v; },
      [](const C& c) { return c.input; });
  add("output", "mask PNG written by predict",
      [](C& c, const std::string& v) { c.output = v; },
      [](const C& c) { return c.output; });
  return k;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (image_size == 0 || image_size % model.spatial_multiple() != 0)
    throw std::invalid_argument("config: image_size " + std::to_string(image_size) +
                                " must be a positive multiple of " +
                                std::to_string(model.spatial_multiple()));
  if (synth && (synth_size == 0 || synth_size % model.spatial_multiple() != 0))
    throw std::invalid_argument("config: synth_size " + std::to_string(synth_size) +
                                " must be a positive multiple of " +
                                std::to_string(model.spatial_multiple()));
  if (synth && synth_count == 0) throw std::invalid_argument("config: synth_count must be positive");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name != key) continue;
    try {
      k.set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("key '" + key + "': " + e.what());
    }
    return;
  }
  throw std::invalid_argument("unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text, const std::string& source, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(where + "expected key = value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    try {
      apply_setting(base, key, trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config " + path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), std::move(base));
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace kandu
