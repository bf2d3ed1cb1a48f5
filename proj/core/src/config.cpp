#include "tdl/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace tdl {

namespace {

struct Entry {
  std::string field;  // "section.key"
  std::string value;
  int line = 0;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::vector<Entry> tokenize(std::string_view text) {
  std::vector<Entry> entries;
  std::map<std::string, int> seen;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, std::string(line), "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(line_no, "[]", "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, std::string(line), "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(line_no, section, "missing key before '='");
    if (section.empty()) throw ConfigError(line_no, key, "key outside any section");
    Entry e{section + "." + key, std::string(trim(line.substr(eq + 1))), line_no};
    if (auto it = seen.find(e.field); it != seen.end()) {
      throw ConfigError(line_no, e.field, "duplicate key (first set on line " + std::to_string(it->second) + ")");
    }
    seen[e.field] = line_no;
    entries.push_back(std::move(e));
  }
  return entries;
}

// Value parsers; each throws ConfigError naming the entry.

double to_double(const Entry& e, std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(e.line, e.field, "expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

double to_double(const Entry& e) { return to_double(e, e.value); }

int64_t to_int(const Entry& e, std::string_view s) {
  int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(e.line, e.field, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

int to_int32(const Entry& e) {
  const int64_t v = to_int(e, e.value);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(e.line, e.field, "integer out of range");
  return static_cast<int>(v);
}

uint64_t to_u64(const Entry& e) {
  uint64_t v = 0;
  const std::string_view s = e.value;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(e.line, e.field, "expected a non-negative integer, got '" + e.value + "'");
  }
  return v;
}

bool to_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  throw ConfigError(e.line, e.field, "expected true or false, got '" + e.value + "'");
}

std::vector<double> to_doubles(const Entry& e) {
  std::vector<double> out;
  if (trim(e.value).empty()) return out;
  for (auto part : split(e.value, ',')) out.push_back(to_double(e, part));
  return out;
}

template <typename F>
auto wrap(const Entry& e, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw ConfigError(e.line, e.field, err.what());
  }
}

Modality to_modality(const Entry& e) {
  return wrap(e, [&] { return parse_modality(e.value); });
}

std::array<int, 4> to_widths(const Entry& e) {
  const auto parts = split(e.value, ',');
  if (parts.size() != 4) throw ConfigError(e.line, e.field, "expected four comma-separated widths");
  std::array<int, 4> w{};
  for (std::size_t i = 0; i < 4; ++i) {
    const int64_t v = to_int(e, parts[i]);
    if (v < 1 || v > 1024) throw ConfigError(e.line, e.field, "width must be within [1, 1024]");
    w[i] = static_cast<int>(v);
  }
  return w;
}

std::array<double, 3> to_rgb(const Entry& e) {
  const auto parts = split(e.value, ',');
  if (parts.size() != 3) throw ConfigError(e.line, e.field, "expected r, g, b");
  return {to_double(e, parts[0]), to_double(e, parts[1]), to_double(e, parts[2])};
}

using Handler = std::function<void(ExperimentConfig&, const Entry&)>;

void add_world(std::map<std::string, Handler>& h, const std::string& sec, WorldSpec ExperimentConfig::*member) {
  // kind and style presets are applied before any other key of the section.
  h[sec + ".kind"] = [](ExperimentConfig&, const Entry&) {};
  h[sec + ".style"] = [](ExperimentConfig&, const Entry&) {};
  h[sec + ".seed"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).seed = to_u64(e); };
  h[sec + ".length"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).length = to_double(e); };
  h[sec + ".width"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).width = to_double(e); };
  h[sec + ".obstacle_density"] = [member](ExperimentConfig& c, const Entry& e) {
    (c.*member).obstacle_density = to_double(e);
  };
  h[sec + ".distractor_density"] = [member](ExperimentConfig& c, const Entry& e) {
    (c.*member).distractor_density = to_double(e);
  };
  h[sec + ".texture_noise"] = [member](ExperimentConfig& c, const Entry& e) {
    (c.*member).style.texture_noise = to_double(e);
  };
  h[sec + ".lighting_gain"] = [member](ExperimentConfig& c, const Entry& e) {
    (c.*member).style.lighting_gain = to_double(e);
  };
  h[sec + ".sprite_rate"] = [member](ExperimentConfig& c, const Entry& e) {
    (c.*member).style.sprite_rate = to_double(e);
  };
  for (int k = 0; k < kNumClasses; ++k) {
    h[sec + ".palette." + std::to_string(k)] = [member, k](ExperimentConfig& c, const Entry& e) {
      (c.*member).style.palette[static_cast<std::size_t>(k)] = to_rgb(e);
    };
  }
}

void add_stage(std::map<std::string, Handler>& h, const std::string& sec, StageSettings ExperimentConfig::*member) {
  h[sec + ".epochs"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).epochs = to_int32(e); };
  h[sec + ".batch_size"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).batch_size = to_int32(e); };
  h[sec + ".lr"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).lr = to_double(e); };
  h[sec + ".momentum"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).momentum = to_double(e); };
  h[sec + ".holdout"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).holdout_fraction = to_double(e); };
  h[sec + ".widths"] = [member](ExperimentConfig& c, const Entry& e) { (c.*member).widths = to_widths(e); };
  h[sec + ".max_heldout_loss"] = [member](ExperimentConfig& c, const Entry& e) {
    (c.*member).max_heldout_loss = to_double(e);
  };
}

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = [] {
    std::map<std::string, Handler> h;
    h["experiment.name"] = [](ExperimentConfig& c, const Entry& e) {
      if (e.value.empty()) throw ConfigError(e.line, e.field, "name must not be empty");
      c.name = e.value;
    };
    h["experiment.seed"] = [](ExperimentConfig& c, const Entry& e) { c.seed = to_u64(e); };
    h["experiment.proxy"] = [](ExperimentConfig& c, const Entry& e) { c.proxy = to_modality(e); };
    h["experiment.class_map"] = [](ExperimentConfig& c, const Entry& e) {
      c.class_map = wrap(e, [&] { return parse_class_map(e.value); });
    };
    h["experiment.source_n"] = [](ExperimentConfig& c, const Entry& e) { c.source_n = to_int32(e); };
    h["experiment.target_n"] = [](ExperimentConfig& c, const Entry& e) { c.target_n = to_int32(e); };
    h["experiment.test_n"] = [](ExperimentConfig& c, const Entry& e) { c.test_n = to_int32(e); };
    h["experiment.measure_factors"] = [](ExperimentConfig& c, const Entry& e) { c.measure_factors = to_bool(e); };
    add_world(h, "source", &ExperimentConfig::source);
    add_world(h, "target", &ExperimentConfig::target);
    h["data.placement"] = [](ExperimentConfig& c, const Entry& e) {
      if (e.value == "expert_path") c.data.placement = Placement::on_expert_path;
      else if (e.value == "random_pose") c.data.placement = Placement::random_pose;
      else throw ConfigError(e.line, e.field, "expected expert_path or random_pose, got '" + e.value + "'");
    };
    h["data.lateral_perturbation"] = [](ExperimentConfig& c, const Entry& e) { c.data.lateral_perturbation = to_double(e); };
    h["data.heading_perturbation"] = [](ExperimentConfig& c, const Entry& e) { c.data.heading_perturbation = to_double(e); };
    h["data.lighting_jitter"] = [](ExperimentConfig& c, const Entry& e) { c.data.lighting_jitter = to_double(e); };
    h["data.time_span"] = [](ExperimentConfig& c, const Entry& e) { c.data.time_span = to_double(e); };
    h["noise.hole_pool"] = [](ExperimentConfig& c, const Entry& e) { c.noise.hole_pool = to_int32(e); };
    h["noise.hole_rate"] = [](ExperimentConfig& c, const Entry& e) { c.noise.hole_rate = to_double(e); };
    h["noise.sigma"] = [](ExperimentConfig& c, const Entry& e) { c.noise.sigma = to_double(e); };
    h["noise.augment_source"] = [](ExperimentConfig& c, const Entry& e) { c.noise.augment_source = to_bool(e); };
    add_stage(h, "train.source", &ExperimentConfig::source_stage);
    add_stage(h, "train.proxy", &ExperimentConfig::proxy_stage);
    add_stage(h, "train.target", &ExperimentConfig::target_stage);
    add_stage(h, "train.recognizer", &ExperimentConfig::recognizer_stage);
    h["eval.episodes_per_controller"] = [](ExperimentConfig& c, const Entry& e) {
      c.eval.episodes_per_controller = to_int32(e);
    };
    h["eval.cap"] = [](ExperimentConfig& c, const Entry& e) { c.eval.cap = to_int32(e); };
    h["eval.lighting_jitter"] = [](ExperimentConfig& c, const Entry& e) { c.eval.lighting_jitter = to_double(e); };
    h["eval.thresholds"] = [](ExperimentConfig& c, const Entry& e) { c.eval.thresholds = to_doubles(e); };
    return h;
  }();
  return table;
}

void apply_world_presets(ExperimentConfig& cfg, const std::vector<Entry>& entries) {
  for (const char* sec : {"source", "target"}) {
    WorldSpec& w = std::string_view(sec) == "source" ? cfg.source : cfg.target;
    const Entry* kind = nullptr;
    const Entry* style = nullptr;
    for (const auto& e : entries) {
      if (e.field == std::string(sec) + ".kind") kind = &e;
      if (e.field == std::string(sec) + ".style") style = &e;
    }
    if (kind) {
      w.kind = wrap(*kind, [&] { return parse_world_kind(kind->value); });
      w.style = default_style(w.kind);
    }
    if (style) {
      // A preset names the world kind whose default look to borrow.
      w.style = style->value == "default" ? default_style(w.kind)
                                          : default_style(wrap(*style, [&] { return parse_world_kind(style->value); }));
    }
  }
}

std::string num(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  auto check = [](bool ok, const char* field, const std::string& what) {
    if (!ok) throw ConfigError(0, field, what);
  };
  auto world = [](const WorldSpec& w, const char* sec) {
    try {
      validate(w);
    } catch (const Error& e) {
      throw ConfigError(0, sec, e.what());
    }
  };
  world(cfg.source, "source");
  world(cfg.target, "target");
  check(cfg.source_n > 0, "experiment.source_n", "must be positive");
  check(cfg.target_n > 0, "experiment.target_n", "must be positive");
  check(cfg.test_n > 0, "experiment.test_n", "must be positive");
  check(static_cast<int>(cfg.class_map.table.size()) == kNumClasses, "experiment.class_map",
        "must cover all " + std::to_string(kNumClasses) + " source classes");
  try {
    validate(cfg.class_map);
  } catch (const Error& e) {
    throw ConfigError(0, "experiment.class_map", e.what());
  }
  check(cfg.data.lateral_perturbation >= 0.0, "data.lateral_perturbation", "must be >= 0");
  check(cfg.data.heading_perturbation >= 0.0, "data.heading_perturbation", "must be >= 0");
  check(cfg.data.lighting_jitter >= 0.0 && cfg.data.lighting_jitter < 1.0, "data.lighting_jitter", "must be in [0,1)");
  check(cfg.data.time_span >= 0.0, "data.time_span", "must be >= 0");
  check(cfg.noise.hole_pool >= 0, "noise.hole_pool", "must be >= 0");
  check(cfg.noise.hole_rate >= 0.0 && cfg.noise.hole_rate <= 1.0, "noise.hole_rate", "must be within [0,1]");
  check(cfg.noise.hole_rate == 0.0 || cfg.noise.hole_pool > 0, "noise.hole_pool", "a positive hole rate needs masks");
  check(cfg.noise.sigma >= 0.0, "noise.sigma", "must be >= 0");
  const std::pair<const StageSettings*, const char*> stages[] = {{&cfg.source_stage, "train.source"},
                                                                 {&cfg.proxy_stage, "train.proxy"},
                                                                 {&cfg.target_stage, "train.target"},
                                                                 {&cfg.recognizer_stage, "train.recognizer"}};
  for (const auto& [st, sec] : stages) {
    const std::string s(sec);
    check(st->epochs >= 0, (s + ".epochs").c_str(), "must be >= 0");
    check(st->batch_size > 0, (s + ".batch_size").c_str(), "must be positive");
    check(st->lr > 0.0, (s + ".lr").c_str(), "must be positive");
    check(st->momentum >= 0.0 && st->momentum < 1.0, (s + ".momentum").c_str(), "must be within [0,1)");
    check(st->holdout_fraction >= 0.0 && st->holdout_fraction < 1.0, (s + ".holdout").c_str(), "must be within [0,1)");
    check(st->max_heldout_loss > 0.0, (s + ".max_heldout_loss").c_str(), "must be positive");
  }
  check(cfg.eval.episodes_per_controller > 0, "eval.episodes_per_controller", "must be positive");
  check(cfg.eval.cap > 0, "eval.cap", "must be positive");
  check(cfg.eval.lighting_jitter >= 0.0 && cfg.eval.lighting_jitter < 1.0, "eval.lighting_jitter", "must be in [0,1)");
  check(std::is_sorted(cfg.eval.thresholds.begin(), cfg.eval.thresholds.end()), "eval.thresholds",
        "must be ascending");
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  const auto entries = tokenize(text);
  ExperimentConfig cfg;
  apply_world_presets(cfg, entries);
  const auto& table = handlers();
  for (const auto& e : entries) {
    const auto it = table.find(e.field);
    if (it == table.end()) throw ConfigError(e.line, e.field, "unknown key");
    it->second(cfg, e);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, path.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto widths = [](const std::array<int, 4>& w) {
    return std::to_string(w[0]) + ", " + std::to_string(w[1]) + ", " + std::to_string(w[2]) + ", " +
           std::to_string(w[3]);
  };
  o << "[experiment]\n"
    << "name = " << c.name << "\n"
    << "seed = " << c.seed << "\n"
    << "proxy = " << to_string(c.proxy) << "\n"
    << "class_map = " << format_class_map(c.class_map) << "\n"
    << "source_n = " << c.source_n << "\n"
    << "target_n = " << c.target_n << "\n"
    << "test_n = " << c.test_n << "\n"
    << "measure_factors = " << (c.measure_factors ? "true" : "false") << "\n";
  for (const auto& [sec, w] : {std::pair<const char*, const WorldSpec*>{"source", &c.source}, {"target", &c.target}}) {
    o << "\n[" << sec << "]\n"
      << "kind = " << to_string(w->kind) << "\n"
      << "seed = " << w->seed << "\n"
      << "length = " << num(w->length) << "\n"
      << "width = " << num(w->width) << "\n"
      << "obstacle_density = " << num(w->obstacle_density) << "\n"
      << "distractor_density = " << num(w->distractor_density) << "\n"
      << "texture_noise = " << num(w->style.texture_noise) << "\n"
      << "lighting_gain = " << num(w->style.lighting_gain) << "\n"
      << "sprite_rate = " << num(w->style.sprite_rate) << "\n";
    for (int k = 0; k < kNumClasses; ++k) {
      const auto& rgb = w->style.palette[static_cast<std::size_t>(k)];
      o << "palette." << k << " = " << num(rgb[0]) << ", " << num(rgb[1]) << ", " << num(rgb[2]) << "\n";
    }
  }
  o << "\n[data]\n"
    << "placement = " << (c.data.placement == Placement::on_expert_path ? "expert_path" : "random_pose") << "\n"
    << "lateral_perturbation = " << num(c.data.lateral_perturbation) << "\n"
    << "heading_perturbation = " << num(c.data.heading_perturbation) << "\n"
    << "lighting_jitter = " << num(c.data.lighting_jitter) << "\n"
    << "time_span = " << num(c.data.time_span) << "\n";
  o << "\n[noise]\n"
    << "hole_pool = " << c.noise.hole_pool << "\n"
    << "hole_rate = " << num(c.noise.hole_rate) << "\n"
    << "sigma = " << num(c.noise.sigma) << "\n"
    << "augment_source = " << (c.noise.augment_source ? "true" : "false") << "\n";
  const std::pair<const char*, const StageSettings*> stages[] = {{"train.source", &c.source_stage},
                                                                 {"train.proxy", &c.proxy_stage},
                                                                 {"train.target", &c.target_stage},
                                                                 {"train.recognizer", &c.recognizer_stage}};
  for (const auto& [sec, st] : stages) {
    o << "\n[" << sec << "]\n"
      << "epochs = " << st->epochs << "\n"
      << "batch_size = " << st->batch_size << "\n"
      << "lr = " << num(st->lr) << "\n"
      << "momentum = " << num(st->momentum) << "\n"
      << "holdout = " << num(st->holdout_fraction) << "\n"
      << "widths = " << widths(st->widths) << "\n"
      << "max_heldout_loss = " << num(st->max_heldout_loss) << "\n";
  }
  o << "\n[eval]\n"
    << "episodes_per_controller = " << c.eval.episodes_per_controller << "\n"
    << "cap = " << c.eval.cap << "\n"
    << "lighting_jitter = " << num(c.eval.lighting_jitter) << "\n"
    << "thresholds = ";
  for (std::size_t i = 0; i < c.eval.thresholds.size(); ++i) o << (i ? ", " : "") << num(c.eval.thresholds[i]);
  o << "\n";
  return o.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = format_config(cfg);
  Fnv1a h;
  h.update(text.data(), text.size());
  return hex64(h.digest());
}

}  // namespace tdl
