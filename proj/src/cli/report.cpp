// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "tade/cli.hpp"
#include "tade/error.hpp"
#include "tade/eval.hpp"

namespace tade::cli {

namespace {

std::string fmt_rho(double rho) {
  std::ostringstream ss;
  if (rho == std::floor(rho) && rho < 1e15) {
    ss << static_cast<long long>(rho);
  } else {
    ss << std::setprecision(6) << rho;
  }
  return ss.str();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double to_real(const std::string& s, std::size_t line, const char* col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("eval csv line " + std::to_string(line) + ": bad " + col + " '" + s + "'");
  }
}

std::optional<double> to_opt(const std::string& s, std::size_t line, const char* col) {
  if (s.empty()) return std::nullopt;
  return to_real(s, line, col);
}

std::string pct(std::optional<double> v, int digits = 2) {
  if (!v) return "n/a";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << 100.0 * *v;
  return ss.str();
}

std::string signed_pct(double v) {
  std::ostringstream ss;
  ss << std::showpos << std::fixed << std::setprecision(2) << 100.0 * v;
  return ss.str();
}

std::string num(std::optional<double> v) {
  if (!v) return "nan";
  std::ostringstream ss;
  ss << std::setprecision(10) << *v;
  return ss.str();
}

// Last occurrence wins when the same (split, variant) appears twice, so a
// rerun appended to an old CSV supersedes it.
std::map<std::pair<std::string, std::string>, ReportRow> index_rows(
    const std::vector<ReportRow>& rows) {
  std::map<std::pair<std::string, std::string>, ReportRow> out;
  for (const auto& r : rows) out[{r.split, r.variant}] = r;
  return out;
}

std::vector<std::string> variants_of(const std::vector<ReportRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.variant) == out.end()) out.push_back(r.variant);
  return out;
}

}  // namespace

std::string split_name(data::Direction d, double rho) {
  if (d == data::Direction::kUniform || rho == 1.0) return "uniform";
  return data::to_string(d) + "_" + fmt_rho(rho);
}

std::optional<SplitKey> parse_split_name(const std::string& name) {
  if (name == "uniform") return SplitKey{};
  const auto us = name.find('_');
  if (us == std::string::npos) return std::nullopt;
  const std::string dir = name.substr(0, us);
  SplitKey key;
  if (dir == "forward") {
    key.direction = data::Direction::kForward;
  } else if (dir == "backward") {
    key.direction = data::Direction::kBackward;
  } else {
    return std::nullopt;
  }
  try {
    std::size_t used = 0;
    const std::string tail = name.substr(us + 1);
    key.rho = std::stod(tail, &used);
    if (used != tail.size() || !(key.rho >= 1.0)) return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return key;
}

std::vector<ReportRow> parse_eval_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ReportRow> rows;
  std::size_t lineno = 0;
  bool have_header = false;
  const std::string expected = eval::EvalReport::csv_header();
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      if (line != expected)
        throw SchemaError("eval csv: unexpected header '" + line + "', expected '" + expected + "'");
      have_header = true;
      continue;
    }
    if (line == expected) continue;  // header repeated by concatenation
    const auto f = split_fields(line);
    if (f.size() != 12)
      throw SchemaError("eval csv line " + std::to_string(lineno) + ": expected 12 fields, got " +
                        std::to_string(f.size()));
    ReportRow r;
    r.split = f[0];
    r.variant = f[1];
    if (r.split.empty() || r.variant.empty())
      throw SchemaError("eval csv line " + std::to_string(lineno) + ": empty split or variant");
    const double samples = to_real(f[2], lineno, "samples");
    if (samples < 0 || samples != std::floor(samples))
      throw SchemaError("eval csv line " + std::to_string(lineno) + ": bad samples");
    r.samples = static_cast<std::size_t>(samples);
    r.top1 = to_real(f[3], lineno, "top1");
    r.many = to_opt(f[4], lineno, "many");
    r.medium = to_opt(f[5], lineno, "medium");
    r.few = to_opt(f[6], lineno, "few");
    r.confidence = to_real(f[7], lineno, "confidence");
    r.mi_nats = to_real(f[8], lineno, "mi_nats");
    r.entropy_nats = to_real(f[9], lineno, "entropy_nats");
    r.stability = to_real(f[10], lineno, "stability");
    r.weights = f[11];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::string> ordered_splits(const std::vector<ReportRow>& rows) {
  std::vector<std::string> known, unknown;
  for (const auto& r : rows) {
    auto& bucket = parse_split_name(r.split) ? known : unknown;
    if (std::find(bucket.begin(), bucket.end(), r.split) == bucket.end()) bucket.push_back(r.split);
  }
  // Position on a signed log-imbalance axis: forward is negative.
  auto axis = [](const std::string& name) {
    const auto k = *parse_split_name(name);
    const double l = std::log(k.rho);
    if (k.direction == data::Direction::kForward) return -l;
    if (k.direction == data::Direction::kBackward) return l;
    return 0.0;
  };
  std::stable_sort(known.begin(), known.end(),
                   [&](const std::string& a, const std::string& b) { return axis(a) < axis(b); });
  known.insert(known.end(), unknown.begin(), unknown.end());
  return known;
}

std::string render_markdown(const std::vector<ReportRow>& rows, const std::string& baseline) {
  const auto idx = index_rows(rows);
  const auto splits = ordered_splits(rows);
  auto variants = variants_of(rows);
  const bool has_base = std::find(variants.begin(), variants.end(), baseline) != variants.end();
  if (has_base) {
    variants.erase(std::find(variants.begin(), variants.end(), baseline));
    variants.insert(variants.begin(), baseline);
  }

  std::ostringstream md;
  md << "# Top-1 accuracy (%) per test distribution\n\n";
  md << "| split | samples |";
  for (const auto& v : variants) md << ' ' << v << " |";
  if (has_base)
    for (const auto& v : variants)
      if (v != baseline) md << " delta " << v << " |";
  md << "\n|---|---:|";
  for (std::size_t i = 0; i < variants.size(); ++i) md << "---:|";
  if (has_base)
    for (std::size_t i = 1; i < variants.size(); ++i) md << "---:|";
  md << '\n';

  for (const auto& s : splits) {
    std::size_t samples = 0;
    for (const auto& v : variants)
      if (auto it = idx.find({s, v}); it != idx.end()) {
        samples = it->second.samples;
        break;
      }
    md << "| " << s << " | " << samples << " |";
    for (const auto& v : variants) {
      auto it = idx.find({s, v});
      md << ' ' << (it == idx.end() ? std::string("-") : pct(it->second.top1)) << " |";
    }
    if (has_base) {
      auto base = idx.find({s, baseline});
      for (const auto& v : variants) {
        if (v == baseline) continue;
        auto it = idx.find({s, v});
        md << ' '
           << (it == idx.end() || base == idx.end() ? std::string("-")
                                                    : signed_pct(it->second.top1 - base->second.top1))
           << " |";
      }
    }
    md << '\n';
  }

  md << "\n# Group accuracy (%) and diagnostics\n\n";
  md << "| split | variant | many | medium | few | confidence | MI (nats) | H(pred) (nats) | "
        "stability | weights |\n";
  md << "|---|---|---:|---:|---:|---:|---:|---:|---:|---|\n";
  for (const auto& s : splits)
    for (const auto& v : variants) {
      auto it = idx.find({s, v});
      if (it == idx.end()) continue;
      const auto& r = it->second;
      md << "| " << s << " | " << v << " | " << pct(r.many) << " | " << pct(r.medium) << " | "
         << pct(r.few) << " | " << std::fixed << std::setprecision(4) << r.confidence << " | "
         << r.mi_nats << " | " << r.entropy_nats << " | " << r.stability << " | " << r.weights
         << " |\n";
      md.unsetf(std::ios::fixed);
    }
  return md.str();
}

std::string render_tsv(const std::vector<ReportRow>& rows, const std::string& variant) {
  const auto idx = index_rows(rows);
  std::ostringstream out;
  out << "position\tsplit\tdirection\trho\ttop1\tmany\tmedium\tfew\tconfidence\tmi_nats\t"
         "entropy_nats\tstability\n";
  std::size_t pos = 0;
  for (const auto& s : ordered_splits(rows)) {
    auto it = idx.find({s, variant});
    if (it == idx.end()) continue;
    const auto& r = it->second;
    const auto key = parse_split_name(s);
    out << pos++ << '\t' << s << '\t' << (key ? data::to_string(key->direction) : "unknown")
        << '\t' << (key ? num(key->rho) : "nan") << '\t' << num(r.top1) << '\t' << num(r.many)
        << '\t' << num(r.medium) << '\t' << num(r.few) << '\t' << num(r.confidence) << '\t'
        << num(r.mi_nats) << '\t' << num(r.entropy_nats) << '\t' << num(r.stability) << '\n';
  }
  return out.str();
}

}  // namespace tade::cli
