#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "melody/config.hpp"
#include "melody/errors.hpp"
#include "melody/rng.hpp"

namespace fs = std::filesystem;

namespace melody {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ArgumentError("invalid number for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "no" || value == "0") return false;
  throw ArgumentError("invalid boolean for " + key + ": '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ArgumentError("empty list for " + key);
  return out;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

}  // namespace

ModelConfig model_preset(const std::string& name) {
  if (name == "desk") return ModelConfig::desk();
  if (name == "large") return ModelConfig::large();
  throw ArgumentError("unknown model preset: " + name);
}

RunConfig parse_config(std::istream& in, const fs::path& base_dir) {
  RunConfig c;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ArgumentError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"corpus", "output", "model", "train", "ssl", "select", "run"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
        throw ArgumentError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;

    if (full == "corpus.root") c.corpus = resolve(base_dir, value);
    else if (full == "output.dir") c.output = resolve(base_dir, value);
    else if (full == "model.preset") {
      c.ssl.model = model_preset(value);
      c.preset = value;
    } else if (full == "train.epochs") c.ssl.train.epochs = parse_number<int>(full, value);
    else if (full == "train.batch") c.ssl.train.batch_patches = parse_number<int>(full, value);
    else if (full == "train.learning_rate") c.ssl.train.adam.learning_rate = parse_number<double>(full, value);
    else if (full == "train.pitch_shifts") c.pitch_shifts = value == "none" ? std::vector<int>{} : parse_list<int>(full, value);
    else if (full == "train.seeds") c.seeds = parse_list<std::uint64_t>(full, value);
    else if (full == "ssl.mode") c.ssl.mode = ts_mode_from_string(value);
    else if (full == "ssl.schedule") c.ssl.schedule = schedule_from_string(value);
    else if (full == "ssl.iterations") c.ssl.iterations = parse_number<int>(full, value);
    else if (full == "ssl.form") c.ssl.form = label_form_from_string(value);
    else if (full == "ssl.mix") {
      const auto colon = value.find(':');
      if (colon == std::string::npos) throw ArgumentError(where + "ssl.mix expects L:U");
      c.ssl.mix_labeled = parse_number<int>(full, trim(value.substr(0, colon)));
      c.ssl.mix_unlabeled = parse_number<int>(full, trim(value.substr(colon + 1)));
    } else if (full == "ssl.warm_start") c.ssl.warm_start = parse_bool(full, value);
    else if (full == "select.enabled") c.select = parse_bool(full, value);
    else if (full == "select.detector") c.detector = detector_kind_from_string(value);
    else if (full == "select.threshold") c.threshold = parse_number<double>(full, value);
    else if (full == "run.threads") c.threads = parse_number<int>(full, value);
    else throw ArgumentError(where + "unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
  }
  validate(c.ssl);
  if (c.seeds.empty()) throw ArgumentError("at least one seed is required");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw ArgumentError("select.threshold must lie in [0, 1]");
  if (c.threads < 1) throw ArgumentError("run.threads must be positive");
  for (int s : c.pitch_shifts) {
    if (s == 0 || s < -12 || s > 12) throw ArgumentError("pitch shifts must be non-zero and within +-12");
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read config " + path.string());
  return parse_config(in, fs::absolute(path).parent_path());
}

std::string canonical_text(const RunConfig& c) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "corpus.root = " << c.corpus.generic_string() << '\n'
    << "model.preset = " << c.preset << '\n'
    << "train.epochs = " << c.ssl.train.epochs << '\n'
    << "train.batch = " << c.ssl.train.batch_patches << '\n'
    << "train.learning_rate = " << c.ssl.train.adam.learning_rate << '\n'
    << "train.pitch_shifts = " << (c.pitch_shifts.empty() ? std::string("none") : join(c.pitch_shifts)) << '\n'
    << "train.seeds = " << join(c.seeds) << '\n'
    << "ssl.mode = " << to_string(c.ssl.mode) << '\n'
    << "ssl.schedule = " << to_string(c.ssl.schedule) << '\n'
    << "ssl.iterations = " << c.ssl.iterations << '\n'
    << "ssl.form = " << to_string(c.ssl.form) << '\n'
    << "ssl.mix = " << c.ssl.mix_labeled << ':' << c.ssl.mix_unlabeled << '\n'
    << "ssl.warm_start = " << (c.ssl.warm_start ? "true" : "false") << '\n'
    << "select.enabled = " << (c.select ? "true" : "false") << '\n'
    << "select.detector = " << to_string(c.detector) << '\n'
    << "select.threshold = " << c.threshold << '\n';
  return s.str();
}

std::string config_hash(const RunConfig& config, const std::string& extra) {
  const std::uint64_t h = splitmix64(hash_name(canonical_text(config) + extra));
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

}  // namespace melody
