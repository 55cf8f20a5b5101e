#include "gbm/evaluation.hpp"

#include <fstream>
#include <set>

#include "gbm/csv.hpp"
#include "gbm/error.hpp"
#include "gbm/raster_io.hpp"

namespace gbm {

namespace fs = std::filesystem;

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

Confusion confusion(const RasterGrid& pred, const RasterGrid& ref) {
  if (pred.width() != ref.width() || pred.height() != ref.height()) {
    throw Error(Errc::dims_mismatch, "prediction and reference differ in size");
  }
  const auto p = pred.band(0);
  const auto r = ref.band(0);
  Confusion c;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!pred.is_valid(p[k]) || !ref.is_valid(r[k])) continue;
    const bool pp = p[k] != 0.0F;
    const bool rp = r[k] != 0.0F;
    if (pp && rp) ++c.tp;
    else if (pp) ++c.fp;
    else if (rp) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::optional<Scores> f1_iou(const Confusion& c) {
  const std::int64_t denom = c.tp + c.fp + c.fn;
  if (denom == 0) return std::nullopt;
  const double tp = static_cast<double>(c.tp);
  return Scores{2.0 * tp / static_cast<double>(c.tp + denom), tp / static_cast<double>(denom)};
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "micro") return Aggregation::micro;
  if (s == "macro") return Aggregation::macro;
  throw Error(Errc::invalid_argument, "unknown aggregation '" + std::string(s) + "'");
}

ScoreRow aggregate_group(std::string scope, std::string scope_id,
                         std::span<const Confusion> patches, Aggregation mode) {
  if (patches.empty()) throw Error(Errc::empty_group, "group '" + scope_id + "' has no patches");
  ScoreRow row{std::move(scope), std::move(scope_id), 0, std::nullopt, std::nullopt};
  Confusion sum;
  double f1_sum = 0.0, iou_sum = 0.0;
  for (const Confusion& c : patches) {
    const auto s = f1_iou(c);
    if (!s) continue;
    ++row.n_patches;
    sum += c;
    f1_sum += s->f1;
    iou_sum += s->iou;
  }
  if (row.n_patches == 0) return row;
  if (mode == Aggregation::micro) {
    const auto s = f1_iou(sum);
    row.f1 = s->f1;
    row.iou = s->iou;
  } else {
    row.f1 = f1_sum / static_cast<double>(row.n_patches);
    row.iou = iou_sum / static_cast<double>(row.n_patches);
  }
  return row;
}

std::vector<PatchGroup> read_groups(const fs::path& path) {
  const csv::Table t = csv::read(path);
  const int id = t.column("patch_id");
  const int city = t.column("city");
  const int continent = t.column("continent");
  if (id < 0 || city < 0 || continent < 0) {
    throw Error(Errc::malformed_header, path.string() + ": needs patch_id,city,continent");
  }
  std::vector<PatchGroup> out;
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    PatchGroup g{row[static_cast<std::size_t>(id)], row[static_cast<std::size_t>(city)],
                 row[static_cast<std::size_t>(continent)]};
    if (!seen.insert(g.patch_id).second) {
      throw Error(Errc::malformed_header, path.string() + ": duplicate patch " + g.patch_id);
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<ScoreRow> evaluate_groups(const std::map<std::string, Confusion>& patches,
                                      const std::vector<PatchGroup>& groups, Aggregation mode) {
  std::map<std::string, std::vector<Confusion>> by_city, by_continent;
  std::map<std::string, Confusion> selected;
  for (const PatchGroup& g : groups) {
    const auto it = patches.find(g.patch_id);
    if (it == patches.end()) throw Error(Errc::io, "no prediction for patch " + g.patch_id);
    selected.emplace(g.patch_id, it->second);
    by_city[g.city].push_back(it->second);
    by_continent[g.continent].push_back(it->second);
  }
  if (groups.empty()) selected = patches;

  std::vector<ScoreRow> rows;
  std::vector<Confusion> world;
  for (const auto& [id, c] : selected) {
    rows.push_back(aggregate_group("patch", id, std::span(&c, 1), mode));
    world.push_back(c);
  }
  for (const auto& [id, cs] : by_city) rows.push_back(aggregate_group("city", id, cs, mode));
  for (const auto& [id, cs] : by_continent) {
    rows.push_back(aggregate_group("continent", id, cs, mode));
  }
  rows.push_back(aggregate_group("world", "world", world, mode));
  return rows;
}

namespace {

std::map<std::string, fs::path> raster_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::io, "not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".tif" || ext == ".tiff" || ext == ".json") {
      out.emplace(e.path().stem().string(), e.path());
    }
  }
  return out;
}

}  // namespace

std::vector<ScoreRow> evaluate_dirs(const fs::path& pred_dir, const fs::path& ref_dir,
                                    const std::optional<fs::path>& groups_csv, Aggregation mode) {
  const auto preds = raster_files(pred_dir);
  const auto refs = raster_files(ref_dir);
  std::vector<PatchGroup> groups;
  std::set<std::string> wanted;
  if (groups_csv) {
    groups = read_groups(*groups_csv);
    for (const PatchGroup& g : groups) wanted.insert(g.patch_id);
  } else {
    for (const auto& [id, p] : preds) wanted.insert(id);
  }
  std::map<std::string, Confusion> patches;
  for (const std::string& id : wanted) {
    const auto p = preds.find(id);
    const auto r = refs.find(id);
    if (p == preds.end()) throw Error(Errc::io, "no prediction for patch " + id);
    if (r == refs.end()) throw Error(Errc::io, "no reference for patch " + id);
    patches.emplace(id, confusion(read_raster(p->second), read_raster(r->second)));
  }
  return evaluate_groups(patches, groups, mode);
}

void write_scores_csv(const std::vector<ScoreRow>& rows, const fs::path& path) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot create " + path.string());
  out << "scope,scope_id,n_patches,f1,iou\n";
  for (const ScoreRow& r : rows) {
    out << r.scope << ',' << r.scope_id << ',' << r.n_patches << ','
        << (r.f1 ? csv::format_double(*r.f1) : "") << ','
        << (r.iou ? csv::format_double(*r.iou) : "") << '\n';
  }
}

}  // namespace gbm
