#include <charconv>
#include <fstream>

#include "dvr/eval.hpp"
#include "dvr/net/checkpoint.hpp"

namespace dvr {

PredictionSet evaluate_model(const std::filesystem::path& checkpoint, const std::filesystem::path& catalog_path,
                             const std::vector<std::string>& clip_ids, Channel channel, Task task,
                             std::size_t batch_size) {
  nn::LoadedCheckpoint ck = nn::load_checkpoint(checkpoint);
  auto meta = [&](const std::string& key) -> const std::string& {
    auto it = ck.extra.find(key);
    if (it == ck.extra.end()) throw FormatError(checkpoint.string() + ": missing '" + key + "' entry");
    return it->second;
  };
  if (parse_task(meta("task")) != task) {
    throw InvalidArgument("checkpoint was trained for task " + meta("task") + ", not " + to_string(task));
  }
  if (parse_channel(meta("channel")) != channel) {
    throw InvalidArgument("checkpoint was trained on the " + meta("channel") + " channel, not " + to_string(channel));
  }
  const std::size_t window = std::stoul(meta("window_frames"));
  const std::size_t net_frames = ck.model.config().input.frames;
  const LabelScaler scaler = LabelScaler::from_meta(ck.extra, ck.model.n_outputs());

  const Catalog catalog = load_catalog(catalog_path);
  const LabeledClips data = load_labeled_clips(catalog_path, catalog, clip_ids, channel);
  std::vector<const RealFrames*> ptrs;
  for (const auto& c : data.clips) ptrs.push_back(&c);
  const auto pred = predict(ck.model, scaler, ptrs, window, net_frames, batch_size);

  PredictionSet out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (task != Task::rr) out.add({data.ids[i], Quantity::hr, pred[i][0], data.labels[i][0]});
    if (task == Task::rr) out.add({data.ids[i], Quantity::rr, pred[i][0], data.labels[i][1]});
    if (task == Task::both) out.add({data.ids[i], Quantity::rr, pred[i][1], data.labels[i][1]});
  }
  return out;
}

std::vector<BaselineRow> run_baseline(const std::filesystem::path& catalog_path, const std::vector<std::string>& clip_ids,
                                      const EemdConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Catalog catalog = load_catalog(catalog_path, false);
  std::vector<BaselineRow> rows;
  for (const auto& id : clip_ids) {
    BaselineRow row;
    row.clip_id = id;
    try {
      const ClipRecord& rec = catalog.at(id);
      const FrameSequence clip = read_clip(resolve_clip_path(catalog_path, rec));
      const auto trace = mean_pixel_trace(extract_red(clip));
      const BaselineEstimate e = estimate(trace, clip.fps(), cfg, seed);
      row.hr_pred = e.hr_bpm;
      row.rr_pred = e.rr_brpm;
      row.status = e.status;
    } catch (const std::exception& ex) {
      row.status = std::string("error: ") + ex.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, p);
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("bad number '" + s + "' in baseline file");
  return v;
}

}  // namespace

void save_baseline(const std::vector<BaselineRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << "clip_id,hr_pred,rr_pred,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ';';
    }
    f << r.clip_id << ',' << fmt_opt(r.hr_pred) << ',' << fmt_opt(r.rr_pred) << ',' << status << '\n';
  }
  if (!f) throw IoError("write failed for " + path.string());
}

std::vector<BaselineRow> load_baseline(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "clip_id,hr_pred,rr_pred,status") {
    throw FormatError(path.string() + ": unexpected baseline header");
  }
  std::vector<BaselineRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> v;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
      const auto comma = line.find(',', start);
      if (comma == std::string::npos) throw FormatError(path.string() + ": malformed row '" + line + "'");
      v.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    v.push_back(line.substr(start));
    rows.push_back({v[0], parse_opt(v[1]), parse_opt(v[2]), v[3]});
  }
  return rows;
}

PredictionSet baseline_predictions(const std::vector<BaselineRow>& rows, const Catalog& catalog) {
  PredictionSet out;
  for (const auto& r : rows) {
    const ClipRecord& rec = catalog.at(r.clip_id);
    if (r.hr_pred) out.add({r.clip_id, Quantity::hr, *r.hr_pred, rec.hr_bpm});
    if (r.rr_pred) out.add({r.clip_id, Quantity::rr, *r.rr_pred, rec.rr_brpm});
  }
  return out;
}

}  // namespace dvr
