#include "ptw/harness/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "ptw/errors.hpp"
#include "ptw/harness/plot.hpp"

namespace ptw::harness {

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.capacity <= b.capacity && a.fid <= b.fid && (a.capacity < b.capacity || a.fid < b.fid);
}

std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points) {
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      dominated = j != i && dominates(points[j], points[i]);
    }
    if (!dominated) front.push_back(i);
  }
  return front;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty sequence");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound(path.string() + " does not exist");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error&) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + " is not a JSON record");
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw InvalidArgument("cannot append to " + path.string());
  out << record.dump() << '\n';
}

namespace {

std::vector<nlohmann::json> collect(const std::vector<std::filesystem::path>& runs,
                                    const char* file) {
  std::vector<nlohmann::json> out;
  for (const auto& run : runs) {
    if (!std::filesystem::exists(run / file)) continue;
    for (auto& r : read_jsonl(run / file)) {
      r["run"] = run.filename().string();
      out.push_back(std::move(r));
    }
  }
  return out;
}

/// Median of `field` for each distinct value of `key` (ascending key).
std::map<double, double> medians_by(const std::vector<nlohmann::json>& rows, const char* key,
                                    const char* field) {
  std::map<double, std::vector<double>> groups;
  for (const auto& r : rows) groups[r.at(key).get<double>()].push_back(r.at(field).get<double>());
  std::map<double, double> out;
  for (auto& [k, v] : groups) out[k] = median(v);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

Report build_report(const std::vector<std::filesystem::path>& runs) {
  Report rep;
  std::ostringstream md;
  md << "# Experiment report\n\nRuns:";
  for (const auto& r : runs) md << ' ' << r.filename().string();
  md << "\n";

  const auto sweep = collect(runs, kSweepFile);
  if (!sweep.empty()) {
    const auto cap = medians_by(sweep, "n", "capacity");
    const auto deg = medians_by(sweep, "n", "fid_degradation");
    nlohmann::json table = nlohmann::json::array();
    md << "\n## Capacity / utility\n\n| n | median capacity (bits) | median FID degradation |\n|---|---|---|\n";
    for (const auto& [n, c] : cap) {
      table.push_back({{"n", n}, {"capacity", c}, {"fid_degradation", deg.at(n)}});
      md << "| " << n << " | " << fmt(c) << " | " << fmt(deg.at(n)) << " |\n";
    }
    rep.tables["capacity_utility"] = table;
  }

  const auto attacks = collect(runs, kAttackFile);
  if (!attacks.empty()) {
    std::vector<ParetoPoint> points;
    for (const auto& a : attacks) {
      points.push_back({a.at("capacity").get<double>(), a.at("fid").get<double>(),
                        a.at("attack").get<std::string>() + "@" + fmt(a.at("parameter").get<double>())});
    }
    const auto front = pareto_front(points);
    nlohmann::json table = nlohmann::json::array();
    md << "\n## Attacks\n\n| attack | parameter | capacity | FID | FID degradation | Pareto |\n|---|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < attacks.size(); ++i) {
      const bool on_front = std::binary_search(front.begin(), front.end(), i);
      auto row = attacks[i];
      row["pareto"] = on_front;
      table.push_back(row);
      md << "| " << row.at("attack").get<std::string>() << " | " << fmt(row.at("parameter").get<double>())
         << " | " << fmt(row.at("capacity").get<double>()) << " | " << fmt(row.at("fid").get<double>())
         << " | " << fmt(row.value("fid_degradation", 0.0)) << " | " << (on_front ? "yes" : "") << " |\n";
    }
    rep.tables["attacks"] = table;
  }

  const auto rpt = collect(runs, kRptFile);
  if (!rpt.empty()) {
    const auto cap = medians_by(rpt, "R", "capacity");
    const auto deg = medians_by(rpt, "R", "fid_degradation");
    nlohmann::json table = nlohmann::json::array();
    md << "\n## Reverse pivotal tuning\n\n| R | median capacity | median FID degradation |\n|---|---|---|\n";
    for (const auto& [r, c] : cap) {
      table.push_back({{"R", r}, {"capacity", c}, {"fid_degradation", deg.at(r)}});
      md << "| " << r << " | " << fmt(c) << " | " << fmt(deg.at(r)) << " |\n";
    }
    rep.tables["rpt"] = table;
  }

  const auto detect = collect(runs, kDetectFile);
  if (!detect.empty()) {
    std::map<std::string, std::vector<nlohmann::json>> by_axis;
    for (const auto& d : detect) by_axis[d.at("axis").get<std::string>()].push_back(d);
    nlohmann::json tables = nlohmann::json::object();
    md << "\n## Detectability\n";
    for (const auto& [axis, rows] : by_axis) {
      md << "\n| " << axis << " | median accuracy |\n|---|---|\n";
      nlohmann::json table = nlohmann::json::array();
      for (const auto& [v, acc] : medians_by(rows, "value", "accuracy")) {
        table.push_back({{"value", v}, {"accuracy", acc}});
        md << "| " << v << " | " << fmt(acc) << " |\n";
      }
      tables[axis] = table;
    }
    rep.tables["detection"] = tables;
  }

  const auto games = collect(runs, kGameSummaryFile);
  if (!games.empty()) {
    md << "\n## Robustness games\n\n| attack | evasion rate | FID | succ_evasion |\n|---|---|---|---|\n";
    for (const auto& g : games) {
      md << "| " << g.at("attack").get<std::string>() << " | " << fmt(g.at("evasion_rate").get<double>())
         << " | " << fmt(g.at("fid").get<double>()) << " | " << fmt(g.at("succ_evasion").get<double>())
         << " |\n";
    }
    rep.tables["games"] = games;
  }
  rep.markdown = md.str();
  return rep;
}

std::vector<std::string> write_report(const Report& report, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  std::vector<std::string> files{"report.json", "report.md"};
  {
    std::ofstream f(out / "report.json");
    f << report.tables.dump(2) << '\n';
  }
  {
    std::ofstream f(out / "report.md");
    f << report.markdown;
  }
  const auto& t = report.tables;
  if (t.contains("capacity_utility")) {
    Series cap{"capacity", {}, {}}, deg{"FID degradation", {}, {}};
    for (const auto& r : t["capacity_utility"]) {
      cap.x.push_back(r["n"]);
      cap.y.push_back(r["capacity"]);
      deg.x.push_back(r["n"]);
      deg.y.push_back(r["fid_degradation"]);
    }
    write_svg_plot(out / "capacity_utility.svg", "Capacity vs message length", "n (bits)",
                   "capacity (bits)", {cap});
    write_svg_plot(out / "fid_degradation.svg", "FID degradation vs message length", "n (bits)",
                   "FID degradation", {deg});
    files.push_back("capacity_utility.svg");
    files.push_back("fid_degradation.svg");
  }
  if (t.contains("attacks")) {
    std::map<std::string, Series> by_attack;
    Series front{"Pareto front", {}, {}};
    std::vector<std::pair<double, double>> fp;
    for (const auto& r : t["attacks"]) {
      auto& s = by_attack[r["attack"].get<std::string>()];
      s.name = r["attack"].get<std::string>();
      s.line = false;
      s.x.push_back(r["fid"]);
      s.y.push_back(r["capacity"]);
      if (r["pareto"].get<bool>()) fp.emplace_back(r["fid"].get<double>(), r["capacity"].get<double>());
    }
    std::sort(fp.begin(), fp.end());
    for (auto [x, y] : fp) {
      front.x.push_back(x);
      front.y.push_back(y);
    }
    std::vector<Series> series{front};
    for (auto& [_, s] : by_attack) series.push_back(s);
    write_svg_plot(out / "attacks.svg", "Attacks: residual capacity vs FID", "FID", "capacity (bits)",
                   series);
    files.push_back("attacks.svg");
  }
  if (t.contains("rpt")) {
    Series deg{"FID degradation", {}, {}};
    for (const auto& r : t["rpt"]) {
      deg.x.push_back(r["R"]);
      deg.y.push_back(r["fid_degradation"]);
    }
    write_svg_plot(out / "rpt.svg", "RPT: FID damage vs real images", "R", "FID degradation", {deg});
    files.push_back("rpt.svg");
  }
  if (t.contains("detection")) {
    for (const auto& [axis, rows] : t["detection"].items()) {
      Series acc{"accuracy", {}, {}};
      for (const auto& r : rows) {
        acc.x.push_back(r["value"]);
        acc.y.push_back(r["accuracy"]);
      }
      const auto name = "detect_" + axis + ".svg";
      write_svg_plot(out / name, "Detection accuracy vs " + axis, axis, "accuracy", {acc});
      files.push_back(name);
    }
  }
  return files;
}

}  // namespace ptw::harness
