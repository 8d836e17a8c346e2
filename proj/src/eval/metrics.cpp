#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dvr/eval.hpp"

namespace dvr {

std::string to_string(Quantity q) { return q == Quantity::hr ? "hr" : "rr"; }

Quantity parse_quantity(const std::string& s) {
  if (s == "hr") return Quantity::hr;
  if (s == "rr") return Quantity::rr;
  throw InvalidArgument("unknown quantity '" + s + "'");
}

void PredictionSet::add(Prediction p) {
  if (!(p.truth > 0.0)) throw InvalidArgument("prediction for " + p.clip_id + " has non-positive truth");
  for (const auto& e : entries_) {
    if (e.clip_id == p.clip_id && e.quantity == p.quantity) {
      throw InvalidArgument("duplicate " + to_string(p.quantity) + " prediction for " + p.clip_id);
    }
  }
  entries_.push_back(std::move(p));
}

std::vector<Prediction> PredictionSet::of(Quantity q) const {
  std::vector<Prediction> out;
  for (const auto& e : entries_) {
    if (e.quantity == q) out.push_back(e);
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad number '" + s + "' in " + what);
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  f.push_back(cur);
  return f;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

}  // namespace

void save_predictions(const PredictionSet& preds, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "clip_id,quantity,predicted,truth\n";
  for (const auto& e : preds.entries()) {
    f << e.clip_id << ',' << to_string(e.quantity) << ',' << fmt(e.predicted) << ',' << fmt(e.truth) << '\n';
  }
  if (!f) throw IoError("write failed for " + path.string());
}

PredictionSet load_predictions(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || split_csv(line) != std::vector<std::string>{"clip_id", "quantity", "predicted", "truth"}) {
    throw FormatError(path.string() + ": unexpected predictions header");
  }
  PredictionSet out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto v = split_csv(line);
    if (v.size() != 4) throw FormatError(path.string() + ": malformed row '" + line + "'");
    out.add({v[0], parse_quantity(v[1]), parse_double(v[2], path.string()), parse_double(v[3], path.string())});
  }
  return out;
}

EvalReport compute_metrics(const std::vector<double>& predicted, const std::vector<double>& truth) {
  if (predicted.size() != truth.size()) throw InvalidArgument("prediction and truth counts differ");
  if (predicted.size() < 2) throw InvalidArgument("need at least two predictions for agreement statistics");
  EvalReport r;
  r.n = predicted.size();
  const double n = static_cast<double>(r.n);
  double se = 0.0, sum_d = 0.0, mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double d = predicted[i] - truth[i];
    se += d * d;
    sum_d += d;
    mp += predicted[i];
    mt += truth[i];
  }
  r.mse = se / n;
  r.rms = std::sqrt(r.mse);
  r.bias = sum_d / n;
  mp /= n;
  mt /= n;
  double ss_d = 0.0, spp = 0.0, stt = 0.0, spt = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double d = predicted[i] - truth[i] - r.bias;
    ss_d += d * d;
    spp += (predicted[i] - mp) * (predicted[i] - mp);
    stt += (truth[i] - mt) * (truth[i] - mt);
    spt += (predicted[i] - mp) * (truth[i] - mt);
  }
  r.sd_diff = std::sqrt(ss_d / (n - 1.0));
  r.loa_low = r.bias - 1.96 * r.sd_diff;
  r.loa_high = r.bias + 1.96 * r.sd_diff;
  if (spp == 0.0 || stt == 0.0) {
    r.degenerate_r = true;
    r.pearson_r = predicted == truth ? 1.0 : 0.0;
  } else {
    r.pearson_r = std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
  }
  return r;
}

EvalReport compute_metrics(const PredictionSet& preds, Quantity q) {
  std::vector<double> p, t;
  for (const auto& e : preds.of(q)) {
    p.push_back(e.predicted);
    t.push_back(e.truth);
  }
  return compute_metrics(p, t);
}

void emit_report(const PredictionSet& preds, const std::filesystem::path& out_dir, const std::string& title,
                 const std::map<std::string, double>& reference) {
  std::filesystem::create_directories(out_dir);
  auto ba = open_out(out_dir / "bland_altman.csv");
  auto corr = open_out(out_dir / "correlation.csv");
  ba << "clip_id,quantity,mean,diff\n";
  corr << "clip_id,quantity,truth,predicted\n";
  for (const auto& e : preds.entries()) {
    ba << e.clip_id << ',' << to_string(e.quantity) << ',' << fmt(0.5 * (e.predicted + e.truth)) << ','
       << fmt(e.predicted - e.truth) << '\n';
    corr << e.clip_id << ',' << to_string(e.quantity) << ',' << fmt(e.truth) << ',' << fmt(e.predicted) << '\n';
  }

  std::ostringstream s;
  s << title << '\n';
  char line[256];
  for (Quantity q : {Quantity::hr, Quantity::rr}) {
    const auto n = preds.of(q).size();
    if (n == 0) continue;
    s << '\n' << (q == Quantity::hr ? "HR (bpm)" : "RR (brpm)") << "  n=" << n << '\n';
    if (n < 2) {
      s << "  too few predictions for agreement statistics\n";
      continue;
    }
    const EvalReport r = compute_metrics(preds, q);
    std::snprintf(line, sizeof line, "  mse %.4f\n  rms %.4f\n  bias %.4f\n  loa [%.4f, %.4f]\n  pearson_r %.4f%s\n",
                  r.mse, r.rms, r.bias, r.loa_low, r.loa_high, r.pearson_r,
                  r.degenerate_r ? " (degenerate: zero variance)" : "");
    s << line;
    if (auto it = reference.find(to_string(q)); it != reference.end()) {
      std::snprintf(line, sizeof line, "  reference rms %.4f\n", it->second);
      s << line;
    }
  }
  auto sum = open_out(out_dir / "summary.txt");
  sum << s.str();
  if (!ba || !corr || !sum) throw IoError("report write failed in " + out_dir.string());
}

}  // namespace dvr
