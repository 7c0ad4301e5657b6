#include "odcal/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace odcal {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const LinkSpec* NetworkSpec::find_link(const std::string& id) const {
  auto it = std::find_if(links.begin(), links.end(),
                         [&](const LinkSpec& l) { return l.id == id; });
  return it == links.end() ? nullptr : &*it;
}

int NetworkSpec::link_index(const std::string& id) const {
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (links[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

bool NetworkSpec::has_node(const std::string& id) const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [&](const NodeSpec& n) { return n.id == id; });
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

struct Where {
  int line = 0;
  std::string section;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("line " + std::to_string(line) + " [" + section + "]: " + msg);
  }
};

double to_double(const std::string& s, const Where& w, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) w.fail("trailing characters in " + key + "='" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    w.fail("expected a number for " + key + ", got '" + s + "'");
  }
}

long long to_int(const std::string& s, const Where& w, const std::string& key) {
  const double v = to_double(s, w, key);
  if (std::floor(v) != v) w.fail("expected an integer for " + key + ", got '" + s + "'");
  return static_cast<long long>(v);
}

/// A record line: `keyword pos1 pos2 key=value ...`.
struct Record {
  std::string keyword;
  std::vector<std::string> positional;
  std::map<std::string, std::string> attrs;

  const std::string& attr(const std::string& key, const Where& w) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) w.fail(keyword + ": missing attribute '" + key + "'");
    return it->second;
  }
  std::optional<std::string> opt(const std::string& key) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) return std::nullopt;
    return it->second;
  }
  double num(const std::string& key, double fallback, const Where& w) const {
    auto v = opt(key);
    return v ? to_double(*v, w, key) : fallback;
  }
};

Record parse_record(const std::string& line, const Where& w) {
  Record r;
  auto toks = tokens(line);
  r.keyword = toks.front();
  for (std::size_t i = 1; i < toks.size(); ++i) {
    const auto eq = toks[i].find('=');
    if (eq == std::string::npos) {
      r.positional.push_back(toks[i]);
    } else {
      const std::string key = toks[i].substr(0, eq);
      if (key.empty()) w.fail("empty attribute name in '" + toks[i] + "'");
      if (!r.attrs.emplace(key, toks[i].substr(eq + 1)).second) {
        w.fail("duplicate attribute '" + key + "'");
      }
    }
  }
  return r;
}

bool is_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) return false;
  const std::string lhs = trim(std::string_view(line).substr(0, eq));
  return !lhs.empty() && lhs.find_first_of(" \t") == std::string::npos;
}

MatrixXd read_profile_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, ',');
    if (rows.empty() && !cells.empty() &&
        (cells[0].empty() || std::isalpha(static_cast<unsigned char>(cells[0][0])))) {
      continue;  // header
    }
    std::vector<double> row;
    Where w{lineno, path.filename().string()};
    for (std::size_t i = 1; i < cells.size(); ++i) {
      row.push_back(to_double(cells[i], w, "profile cell"));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      w.fail("ragged profile row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return MatrixXd(0, 0);
  MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  ScenarioConfig cfg;
  std::vector<std::vector<double>> inline_mean;
  std::optional<std::filesystem::path> mean_file;
  std::set<std::string> seen_sections;

  Where w;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++w.line;
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') w.fail("unterminated section header");
      w.section = trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> known{"scenario", "network", "signals", "od",
                                               "profile",  "incidents", "hyper"};
      if (!known.count(w.section)) w.fail("unknown section");
      seen_sections.insert(w.section);
      continue;
    }
    if (w.section.empty()) w.fail("content before the first section header");

    if (is_assignment(line)) {
      const auto eq = line.find('=');
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (w.section == "scenario") {
        if (key == "name") cfg.name = value;
        else if (key == "horizon") cfg.horizon = static_cast<int>(to_int(value, w, key));
        else if (key == "interval_s") cfg.interval_s = to_double(value, w, key);
        else if (key == "tick_s") cfg.tick_s = to_double(value, w, key);
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(value, w, key));
        else w.fail("unknown key '" + key + "'");
      } else if (w.section == "network") {
        if (key == "backward_wave_kmh") cfg.network.backward_wave_kmh = to_double(value, w, key);
        else w.fail("unknown key '" + key + "'");
      } else if (w.section == "profile") {
        if (key == "cv") cfg.demand_profile.cv = to_double(value, w, key);
        else if (key == "mean_file") mean_file = base_dir / value;
        else if (key == "mean") {
          std::vector<double> row;
          for (const auto& t : tokens(value)) row.push_back(to_double(t, w, key));
          inline_mean.push_back(std::move(row));
        } else w.fail("unknown key '" + key + "'");
      } else if (w.section == "hyper") {
        auto& h = cfg.hyper;
        if (key == "delta") h.delta = to_double(value, w, key);
        else if (key == "learning_rate") h.learning_rate = to_double(value, w, key);
        else if (key == "hidden_layers") h.hidden_layers = static_cast<int>(to_int(value, w, key));
        else if (key == "hidden_nodes") h.hidden_nodes = static_cast<int>(to_int(value, w, key));
        else if (key == "online_steps_per_interval") h.online_steps_per_interval = static_cast<int>(to_int(value, w, key));
        else if (key == "demand_clip_max") h.demand_clip_max = to_double(value, w, key);
        else if (key == "demand_scale_vph") h.demand_scale_vph = to_double(value, w, key);
        else if (key == "time_bins") h.time_bins = static_cast<int>(to_int(value, w, key));
        else if (key == "pretrain_epochs") h.pretrain_epochs = static_cast<int>(to_int(value, w, key));
        else if (key == "trace_params") h.trace_params = static_cast<int>(to_int(value, w, key));
        else w.fail("unknown key '" + key + "'");
      } else {
        w.fail("assignments are not allowed in this section");
      }
      continue;
    }

    const Record r = parse_record(line, w);
    if (w.section == "network" && r.keyword == "node") {
      if (r.positional.size() != 1) w.fail("node takes exactly one id");
      cfg.network.nodes.push_back({r.positional[0]});
    } else if (w.section == "network" && r.keyword == "link") {
      if (r.positional.size() != 1) w.fail("link takes exactly one id");
      LinkSpec l;
      l.id = r.positional[0];
      l.from = r.attr("from", w);
      l.to = r.attr("to", w);
      l.length_m = to_double(r.attr("length_m", w), w, "length_m");
      l.lanes = static_cast<int>(r.num("lanes", 1, w));
      l.free_speed_kmh = r.num("free_speed_kmh", l.free_speed_kmh, w);
      l.capacity_per_lane_vph = r.num("capacity_per_lane_vph", l.capacity_per_lane_vph, w);
      l.jam_density_per_lane_vpkm = r.num("jam_density_per_lane_vpkm", l.jam_density_per_lane_vpkm, w);
      cfg.network.links.push_back(std::move(l));
    } else if (w.section == "network" && r.keyword == "detector") {
      if (r.positional.size() != 1) w.fail("detector takes exactly one id");
      DetectorSpec d;
      d.id = r.positional[0];
      d.link_id = r.attr("link", w);
      d.position = r.num("position", d.position, w);
      cfg.detectors.push_back(std::move(d));
    } else if (w.section == "signals" && r.keyword == "signal") {
      if (r.positional.size() != 1) w.fail("signal takes exactly one node id");
      SignalSpec s;
      s.node_id = r.positional[0];
      s.cycle_s = to_double(r.attr("cycle_s", w), w, "cycle_s");
      s.offset_s = r.num("offset_s", 0.0, w);
      cfg.network.signals.push_back(std::move(s));
    } else if (w.section == "signals" && r.keyword == "phase") {
      if (r.positional.size() != 1) w.fail("phase takes exactly one node id");
      auto it = std::find_if(cfg.network.signals.begin(), cfg.network.signals.end(),
                             [&](const SignalSpec& s) { return s.node_id == r.positional[0]; });
      if (it == cfg.network.signals.end()) w.fail("phase before its signal '" + r.positional[0] + "'");
      PhaseSpec p;
      p.duration_s = to_double(r.attr("duration_s", w), w, "duration_s");
      if (auto g = r.opt("green")) p.green_links = split(*g, ',');
      it->phases.push_back(std::move(p));
    } else if (w.section == "od" && r.keyword == "od") {
      if (r.positional.size() != 2) w.fail("od takes origin and destination");
      ODPair p{r.positional[0], r.positional[1], static_cast<int>(cfg.od_pairs.size())};
      cfg.network.od_paths[p.index] = split(r.attr("path", w), ',');
      cfg.od_pairs.push_back(std::move(p));
    } else if (w.section == "incidents" && r.keyword == "incident") {
      IncidentSpec inc;
      inc.link_id = r.attr("link", w);
      inc.start_interval = static_cast<int>(to_int(r.attr("start", w), w, "start"));
      inc.end_interval = static_cast<int>(to_int(r.attr("end", w), w, "end"));
      inc.lanes_closed = static_cast<int>(to_int(r.attr("lanes_closed", w), w, "lanes_closed"));
      cfg.incidents.push_back(std::move(inc));
    } else {
      w.fail("unknown record '" + r.keyword + "'");
    }
  }

  for (const char* s : {"scenario", "network", "od", "profile"}) {
    if (!seen_sections.count(s)) throw ParseError(std::string("missing section [") + s + "]");
  }

  if (mean_file && !inline_mean.empty()) {
    throw ParseError("[profile]: use either mean_file or inline mean rows, not both");
  }
  if (mean_file) {
    cfg.demand_profile.mean = read_profile_csv(*mean_file);
  } else if (!inline_mean.empty()) {
    const std::size_t cols = inline_mean.front().size();
    cfg.demand_profile.mean.resize(static_cast<Eigen::Index>(inline_mean.size()),
                                   static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < inline_mean.size(); ++r) {
      if (inline_mean[r].size() != cols) throw ParseError("[profile]: ragged mean rows");
      for (std::size_t c = 0; c < cols; ++c) cfg.demand_profile.mean(r, c) = inline_mean[r][c];
    }
    // A single inline row is a constant profile over the horizon.
    if (inline_mean.size() == 1 && cfg.horizon > 1) {
      const MatrixXd row = cfg.demand_profile.mean.row(0);  // evaluated first: the source aliases the target
      cfg.demand_profile.mean = row.replicate(cfg.horizon, 1);
    }
  }

  validate(cfg);
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path());
}

void validate(const ScenarioConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  const auto& net = cfg.network;

  if (!(cfg.interval_s > 0)) fail("scenario.interval_s: must be > 0");
  if (cfg.horizon <= 0) fail("scenario.horizon: must be > 0");
  if (!(cfg.tick_s > 0)) fail("scenario.tick_s: must be > 0");
  if (!(net.backward_wave_kmh > 0)) fail("network.backward_wave_kmh: must be > 0");

  std::set<std::string> node_ids;
  for (const auto& n : net.nodes) {
    if (!node_ids.insert(n.id).second) fail("network.node[" + n.id + "]: duplicate id");
  }
  std::set<std::string> link_ids;
  for (const auto& l : net.links) {
    const std::string at = "network.link[" + l.id + "]";
    if (!link_ids.insert(l.id).second) fail(at + ": duplicate id");
    if (!node_ids.count(l.from)) fail(at + ".from: unknown node '" + l.from + "'");
    if (!node_ids.count(l.to)) fail(at + ".to: unknown node '" + l.to + "'");
    if (l.lanes < 1) fail(at + ".lanes: must be >= 1");
    if (!(l.length_m > 0)) fail(at + ".length_m: must be > 0");
    if (!(l.free_speed_kmh > 0)) fail(at + ".free_speed_kmh: must be > 0");
    if (!(l.capacity_per_lane_vph > 0)) fail(at + ".capacity_per_lane_vph: must be > 0");
    if (!(l.jam_density_per_lane_vpkm > 0)) fail(at + ".jam_density_per_lane_vpkm: must be > 0");
    if (!(net.backward_wave_kmh <= l.free_speed_kmh)) {
      fail(at + ": backward wave speed exceeds free speed");
    }
  }

  std::set<std::string> signal_nodes;
  for (const auto& s : net.signals) {
    const std::string at = "signals[" + s.node_id + "]";
    if (!node_ids.count(s.node_id)) fail(at + ": unknown node");
    if (!signal_nodes.insert(s.node_id).second) fail(at + ": duplicate signal");
    if (!(s.cycle_s > 0)) fail(at + ".cycle_s: must be > 0");
    if (s.phases.empty()) fail(at + ": no phases");
    double sum = 0.0;
    for (const auto& p : s.phases) {
      if (!(p.duration_s > 0)) fail(at + ".phase.duration_s: must be > 0");
      sum += p.duration_s;
      for (const auto& g : p.green_links) {
        const LinkSpec* l = net.find_link(g);
        if (!l) fail(at + ".phase.green: unknown link '" + g + "'");
        if (l->to != s.node_id) fail(at + ".phase.green: link '" + g + "' does not end at the signal node");
      }
    }
    for (const auto& l : net.links) {
      if (l.to != s.node_id) continue;
      const bool served = std::any_of(s.phases.begin(), s.phases.end(), [&](const PhaseSpec& p) {
        return std::find(p.green_links.begin(), p.green_links.end(), l.id) != p.green_links.end();
      });
      if (!served) fail(at + ": approach link '" + l.id + "' is never green");
    }
    if (std::abs(sum - s.cycle_s) > 1e-9) {
      std::ostringstream m;
      m << at << ": phase durations sum to " << sum << " s but cycle_s is " << s.cycle_s;
      fail(m.str());
    }
  }

  for (const auto& p : cfg.od_pairs) {
    const std::string at = "od[" + std::to_string(p.index) + "](" + p.origin + "->" + p.destination + ")";
    if (!node_ids.count(p.origin)) fail(at + ".origin: unknown node '" + p.origin + "'");
    if (!node_ids.count(p.destination)) fail(at + ".destination: unknown node '" + p.destination + "'");
    auto it = net.od_paths.find(p.index);
    if (it == net.od_paths.end() || it->second.empty()) fail(at + ".path: empty");
    const auto& path = it->second;
    std::string at_node = p.origin;
    std::set<std::string> visited;
    for (const auto& lid : path) {
      const LinkSpec* l = net.find_link(lid);
      if (!l) fail(at + ".path: unknown link '" + lid + "'");
      if (l->from != at_node) fail(at + ".path: link '" + lid + "' does not start at '" + at_node + "'");
      if (!visited.insert(lid).second) fail(at + ".path: link '" + lid + "' repeated");
      at_node = l->to;
    }
    if (at_node != p.destination) fail(at + ".path: does not end at the destination");
  }
  for (std::size_t i = 0; i < cfg.od_pairs.size(); ++i) {
    if (cfg.od_pairs[i].index != static_cast<int>(i)) fail("od: indices are not 0..|OD|-1");
  }

  std::set<std::string> det_ids;
  for (const auto& d : cfg.detectors) {
    const std::string at = "network.detector[" + d.id + "]";
    if (!det_ids.insert(d.id).second) fail(at + ": duplicate id");
    if (!net.find_link(d.link_id)) fail(at + ".link: unknown link '" + d.link_id + "'");
    if (!(d.position >= 0.0 && d.position < 1.0)) fail(at + ".position: must be in [0, 1)");
    bool on_path = false;
    for (const auto& [idx, path] : net.od_paths) {
      on_path = on_path || std::find(path.begin(), path.end(), d.link_id) != path.end();
    }
    if (!on_path) fail(at + ": link '" + d.link_id + "' is not on any OD path");
  }

  const auto& prof = cfg.demand_profile;
  if (prof.mean.rows() != cfg.horizon) {
    fail("profile.mean: " + std::to_string(prof.mean.rows()) + " rows, horizon is " +
         std::to_string(cfg.horizon));
  }
  if (prof.mean.cols() != cfg.num_od()) {
    fail("profile.mean: " + std::to_string(prof.mean.cols()) + " columns, " +
         std::to_string(cfg.num_od()) + " OD pairs");
  }
  if (prof.mean.size() > 0 && !(prof.mean.array() >= 0.0).all()) fail("profile.mean: negative entry");
  if (!prof.mean.allFinite()) fail("profile.mean: non-finite entry");
  if (!(prof.cv >= 0.0)) fail("profile.cv: must be >= 0");

  for (std::size_t i = 0; i < cfg.incidents.size(); ++i) {
    const auto& inc = cfg.incidents[i];
    const std::string at = "incidents[" + std::to_string(i) + "]";
    const LinkSpec* l = net.find_link(inc.link_id);
    if (!l) fail(at + ".link: unknown link '" + inc.link_id + "'");
    if (inc.lanes_closed < 0 || inc.lanes_closed >= l->lanes) {
      fail(at + ".lanes_closed: must be in [0, lanes of '" + inc.link_id + "')");
    }
    if (inc.start_interval < 0 || inc.start_interval > inc.end_interval) {
      fail(at + ": need 0 <= start <= end");
    }
  }

  const auto& h = cfg.hyper;
  if (!(h.delta >= 0)) fail("hyper.delta: must be >= 0");
  if (!(h.learning_rate > 0)) fail("hyper.learning_rate: must be > 0");
  if (h.hidden_layers < 0) fail("hyper.hidden_layers: must be >= 0");
  if (h.hidden_nodes < 1) fail("hyper.hidden_nodes: must be >= 1");
  if (h.online_steps_per_interval < 0) fail("hyper.online_steps_per_interval: must be >= 0");
  if (!(h.demand_clip_max > 0)) fail("hyper.demand_clip_max: must be > 0");
  if (!(h.demand_scale_vph > 0)) fail("hyper.demand_scale_vph: must be > 0");
  if (h.time_bins < 0) fail("hyper.time_bins: must be >= 0");
  if (h.pretrain_epochs < 0) fail("hyper.pretrain_epochs: must be >= 0");
  if (h.trace_params < 0) fail("hyper.trace_params: must be >= 0");
}

ScenarioConfig without_incidents(const ScenarioConfig& cfg) {
  ScenarioConfig out = cfg;
  out.incidents.clear();
  return out;
}

DemandVector sample_true_demand(const DemandProfile& profile, int interval, Rng& rng) {
  const DemandVector mean = apriori_demand(profile, interval);
  std::normal_distribution<double> z(0.0, 1.0);
  DemandVector out(mean.size());
  for (Eigen::Index l = 0; l < mean.size(); ++l) {
    // One draw per entry regardless of the mean keeps the stream aligned.
    const double draw = mean[l] + profile.cv * mean[l] * z(rng);
    out[l] = std::max(0.0, draw);
  }
  return out;
}

DemandVector apriori_demand(const DemandProfile& profile, int interval) {
  if (interval < 0 || interval >= profile.mean.rows()) {
    throw std::out_of_range("apriori_demand: interval " + std::to_string(interval) +
                            " outside [0, " + std::to_string(profile.mean.rows()) + ")");
  }
  return profile.mean.row(interval).transpose();
}

}  // namespace odcal
