#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "texsr/error.hpp"
#include "texsr/pipeline.hpp"

namespace texsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(Errc::invalid_argument, "bad value '" + v + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(Errc::invalid_argument, "bad boolean '" + v + "' for " + key);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

const char* extractor_name(ExtractorKind k) { return k == ExtractorKind::scattering ? "scattering" : "random_conv"; }

// Ordered key/value view of a config; the single source for text and JSON.
std::vector<std::pair<std::string, std::string>> entries(const TrainConfig& c) {
  return {
      {"sr_factor", std::to_string(c.sr_factor)},
      {"patch_size", std::to_string(c.patch_size)},
      {"crops_per_slice", std::to_string(c.crops_per_slice)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr", format_double(c.lr)},
      {"steps", std::to_string(c.steps)},
      {"seed", std::to_string(c.seed)},
      {"scatter_J", std::to_string(c.scatter.J)},
      {"scatter_L", std::to_string(c.scatter.L)},
      {"w_rec", format_double(c.weights.w_rec)},
      {"w_p", format_double(c.weights.w_p)},
      {"w_t", format_double(c.weights.w_t)},
      {"reference_paths", join_list(c.reference_paths)},
      {"degradation", c.degradation},
      {"eval_interval", std::to_string(c.eval_interval)},
      {"validation_pairs", std::to_string(c.validation_pairs)},
      {"width1", std::to_string(c.width1)},
      {"width2", std::to_string(c.width2)},
      {"residual", c.residual ? "true" : "false"},
      {"extractor", extractor_name(c.extractor)},
      {"extractor_seed", std::to_string(c.extractor_seed)},
      {"normalized_gram", c.normalized_gram ? "true" : "false"},
      {"match_patch_size", std::to_string(c.match_patch_size)},
  };
}

} // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::invalid_argument, m); };
  if (sr_factor < 2) fail("sr_factor must be >= 2");
  if (patch_size < 1 || patch_size % sr_factor != 0) fail("patch_size must be a positive multiple of sr_factor");
  if (crops_per_slice < 1) fail("crops_per_slice must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (steps < 0) fail("steps must be >= 0");
  if (eval_interval < 0) fail("eval_interval must be >= 0");
  if (validation_pairs < 0) fail("validation_pairs must be >= 0");
  if (width1 < 1 || width2 < 1) fail("layer widths must be >= 1");
  if (degradation != "bicubic") fail("degradation '" + degradation + "' is not supported (bicubic only)");
  if (match_patch_size < 1 || match_patch_size % 2 == 0) fail("match_patch_size must be odd");
  scatter.validate();
  weights.validate();
  if (texture_transfer() && scatter.subsample) fail("texture transfer needs scatter subsample off");
  if (!texture_transfer() && weights.w_t > 0.0) {
    fail("w_t > 0 needs reference_paths; set w_t=0 for a run without texture transfer");
  }
}

LossConfig TrainConfig::loss_config() const {
  LossConfig l;
  l.weights = weights;
  l.scatter = scatter;
  l.extractor = extractor;
  l.extractor_seed = extractor_seed;
  l.normalized_gram = normalized_gram;
  return l;
}

SrcnnShape TrainConfig::network_shape() const {
  SrcnnShape s;
  s.width1 = width1;
  s.width2 = width2;
  s.residual = residual;
  s.concat_channels = texture_transfer() ? scatter.channel_count() : 0;
  return s;
}

void apply_override(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "sr_factor") c.sr_factor = parse_number<int>(key, v);
  else if (key == "patch_size") c.patch_size = parse_number<int>(key, v);
  else if (key == "crops_per_slice") c.crops_per_slice = parse_number<int>(key, v);
  else if (key == "batch_size") c.batch_size = parse_number<int>(key, v);
  else if (key == "lr") c.lr = parse_number<double>(key, v);
  else if (key == "steps") c.steps = parse_number<std::int64_t>(key, v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "scatter_J") c.scatter.J = parse_number<int>(key, v);
  else if (key == "scatter_L") c.scatter.L = parse_number<int>(key, v);
  else if (key == "w_rec") c.weights.w_rec = parse_number<double>(key, v);
  else if (key == "w_p") c.weights.w_p = parse_number<double>(key, v);
  else if (key == "w_t") c.weights.w_t = parse_number<double>(key, v);
  else if (key == "reference_paths") c.reference_paths = split_list(v);
  else if (key == "degradation") c.degradation = v;
  else if (key == "eval_interval") c.eval_interval = parse_number<std::int64_t>(key, v);
  else if (key == "validation_pairs") c.validation_pairs = parse_number<int>(key, v);
  else if (key == "width1") c.width1 = parse_number<int>(key, v);
  else if (key == "width2") c.width2 = parse_number<int>(key, v);
  else if (key == "residual") c.residual = parse_bool(key, v);
  else if (key == "extractor") {
    if (v == "scattering") c.extractor = ExtractorKind::scattering;
    else if (v == "random_conv") c.extractor = ExtractorKind::random_conv;
    else throw Error(Errc::invalid_argument, "unknown extractor '" + v + "'");
  } else if (key == "extractor_seed") c.extractor_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "normalized_gram") c.normalized_gram = parse_bool(key, v);
  else if (key == "match_patch_size") c.match_patch_size = parse_number<int>(key, v);
  else throw Error(Errc::invalid_argument, "unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig cfg) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::invalid_argument, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_override(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io_failure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

std::string to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : entries(cfg)) j[k] = v;
  j["reference_paths"] = cfg.reference_paths;
  return j.dump();
}

} // namespace texsr
