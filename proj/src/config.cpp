#include "geotomo/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <vector>

#include "geotomo/errors.hpp"
#include "geotomo/expr.hpp"
#include "geotomo/io.hpp"

namespace geotomo {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool is_comment_start(char c) { return c == '#' || c == ';'; }

// Splits the value token off a line tail: either a double-quoted string or a
// bare token running to the first comment character.
std::string parse_value(std::string_view tail, int line, const std::string& key) {
  tail = trim(tail);
  if (tail.empty()) throw ConfigError("missing value", line, key);
  if (tail.front() == '"') {
    const size_t close = tail.find('"', 1);
    if (close == std::string_view::npos)
      throw ConfigError("unterminated quoted value", line, key);
    const std::string_view rest = trim(tail.substr(close + 1));
    if (!rest.empty() && !is_comment_start(rest.front()))
      throw ConfigError("trailing characters after quoted value", line, key);
    return std::string(tail.substr(1, close - 1));
  }
  size_t cut = tail.size();
  for (size_t i = 0; i < tail.size(); ++i)
    if (is_comment_start(tail[i])) {
      cut = i;
      break;
    }
  const std::string_view bare = trim(tail.substr(0, cut));
  if (bare.empty()) throw ConfigError("missing value", line, key);
  return std::string(bare);
}

int parse_int(const std::string& v, int line, const std::string& key) {
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ConfigError("expected an integer, got '" + v + "'", line, key);
  return out;
}

std::uint64_t parse_u64(const std::string& v, int line, const std::string& key) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ConfigError("expected a non-negative integer, got '" + v + "'", line, key);
  return out;
}

double parse_real(const std::string& v, int line, const std::string& key) {
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ConfigError("expected a number, got '" + v + "'", line, key);
  return out;
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::string section;
  std::vector<std::string> seen;
  int line = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    const std::string_view raw =
        std::string_view(text).substr(pos, nl == std::string::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line;

    const std::string_view s = trim(raw);
    if (s.empty() || is_comment_start(s.front())) continue;

    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("section header missing closing ']'", line);
      section = std::string(trim(s.substr(1, s.size() - 2)));
      if (section != "metric" && section != "grid" && section != "solver" && section != "run")
        throw ConfigError("unknown section '" + section + "'", line);
      continue;
    }

    const size_t eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("expected 'key = value'", line);
    const std::string key(trim(s.substr(0, eq)));
    if (key.empty()) throw ConfigError("empty key", line);
    if (section.empty())
      throw ConfigError("key appears before any [section]", line, key);

    const std::string full = section + "." + key;
    if (std::find(seen.begin(), seen.end(), full) != seen.end())
      throw ConfigError("duplicate key", line, full);
    seen.push_back(full);

    const std::string v = parse_value(s.substr(eq + 1), line, full);

    if (section == "metric") {
      if (key == "lambda") c.lambda = v;
      else if (key == "g11") c.g11 = v;
      else if (key == "g12") c.g12 = v;
      else if (key == "g22") c.g22 = v;
      else throw ConfigError("unknown key", line, full);
    } else if (section == "grid") {
      if (key == "ns") c.ns = parse_int(v, line, full);
      else if (key == "nphi") c.nphi = parse_int(v, line, full);
      else if (key == "nb") c.nb = parse_int(v, line, full);
      else if (key == "nr") c.nr = parse_int(v, line, full);
      else if (key == "nth") c.nth = parse_int(v, line, full);
      else throw ConfigError("unknown key", line, full);
    } else if (section == "solver") {
      if (key == "step") c.step = parse_real(v, line, full);
      else if (key == "dt") c.dt = parse_real(v, line, full);
      else if (key == "cutoff") c.cutoff = parse_real(v, line, full);
      else if (key == "delta") c.delta = parse_real(v, line, full);
      else if (key == "cg_tol") c.cg_tol = parse_real(v, line, full);
      else if (key == "cg_max") c.cg_max = parse_int(v, line, full);
      else throw ConfigError("unknown key", line, full);
    } else {
      if (key == "seed") c.seed = parse_u64(v, line, full);
      else throw ConfigError("unknown key", line, full);
    }
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

void validate_config(const ExperimentConfig& c) {
  const bool conformal = !c.lambda.empty();
  const bool general = !c.g11.empty() || !c.g12.empty() || !c.g22.empty();
  if (conformal && general)
    throw ConfigError("give either lambda or g11/g12/g22, not both", 0, "metric");
  if (!conformal && !general)
    throw ConfigError("missing metric: set lambda or g11/g12/g22", 0, "metric");
  if (general) {
    if (c.g11.empty()) throw ConfigError("general metric needs g11", 0, "metric.g11");
    if (c.g12.empty()) throw ConfigError("general metric needs g12", 0, "metric.g12");
    if (c.g22.empty()) throw ConfigError("general metric needs g22", 0, "metric.g22");
  }

  const std::pair<const char*, int> sizes[] = {
      {"grid.ns", c.ns}, {"grid.nphi", c.nphi}, {"grid.nb", c.nb},
      {"grid.nr", c.nr}, {"grid.nth", c.nth}};
  for (const auto& [key, v] : sizes)
    if (v < 8) throw ConfigError("size must be at least 8", 0, key);
  if ((c.nb & (c.nb - 1)) != 0)
    throw ConfigError("must be a power of two", 0, "grid.nb");

  if (!(c.delta > 0.0 && c.delta <= 0.5))
    throw ConfigError("must lie in (0, 0.5]", 0, "solver.delta");
  if (!(c.step > 0.0)) throw ConfigError("must be positive", 0, "solver.step");
  if (!(c.dt > 0.0)) throw ConfigError("must be positive", 0, "solver.dt");
  if (!(c.cutoff > 0.0 && c.cutoff < 1.0))
    throw ConfigError("must lie in (0, 1)", 0, "solver.cutoff");
  if (!(c.cg_tol > 0.0)) throw ConfigError("must be positive", 0, "solver.cg_tol");
  if (c.cg_max < 1) throw ConfigError("must be at least 1", 0, "solver.cg_max");
}

MetricField make_metric(const ExperimentConfig& c) {
  if (!c.lambda.empty()) return MetricField::conformal(Expr::parse(c.lambda));
  return MetricField::general(Expr::parse(c.g11), Expr::parse(c.g12), Expr::parse(c.g22));
}

std::string canonical_metric(const ExperimentConfig& c) {
  std::string out;
  if (!c.lambda.empty()) {
    out += "metric.lambda=" + Expr::parse(c.lambda).pretty() + "\n";
  } else {
    out += "metric.g11=" + Expr::parse(c.g11).pretty() + "\n";
    out += "metric.g12=" + Expr::parse(c.g12).pretty() + "\n";
    out += "metric.g22=" + Expr::parse(c.g22).pretty() + "\n";
  }
  return out;
}

std::string canonical_config(const ExperimentConfig& c) {
  std::vector<std::string> lines;
  auto add = [&](const std::string& k, const std::string& v) { lines.push_back(k + "=" + v); };
  add("grid.nb", std::to_string(c.nb));
  add("grid.nphi", std::to_string(c.nphi));
  add("grid.nr", std::to_string(c.nr));
  add("grid.ns", std::to_string(c.ns));
  add("grid.nth", std::to_string(c.nth));
  add("run.seed", std::to_string(c.seed));
  add("solver.cg_max", std::to_string(c.cg_max));
  add("solver.cg_tol", format_double(c.cg_tol));
  add("solver.cutoff", format_double(c.cutoff));
  add("solver.delta", format_double(c.delta));
  add("solver.dt", format_double(c.dt));
  add("solver.step", format_double(c.step));
  std::sort(lines.begin(), lines.end());
  std::string out = canonical_metric(c);
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::string_view s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(s)));
  return std::string(buf);
}

std::string config_hash(const ExperimentConfig& c) { return hash_hex(canonical_config(c)); }

std::string metric_hash(const ExperimentConfig& c) { return hash_hex(canonical_metric(c)); }

} // namespace geotomo
