#include "arbor/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace arbor {

using nlohmann::json;

bool Rule::matches(std::span<const double> sa) const {
  for (std::size_t d = 0; d < bounds.size(); ++d) {
    if (!(sa[d] >= bounds[d].lo && sa[d] < bounds[d].hi)) return false;
  }
  return true;
}

std::string Rule::condition(const std::vector<std::string>& names) const {
  std::ostringstream out;
  out.precision(6);
  bool first = true;
  auto clause = [&](const std::string& text) {
    out << (first ? "" : " AND ") << text;
    first = false;
  };
  for (std::size_t d = 0; d < bounds.size(); ++d) {
    const std::string name = d < names.size() ? names[d] : "d" + std::to_string(d);
    std::ostringstream c;
    c.precision(6);
    if (std::isfinite(bounds[d].lo)) {
      c << name << " >= " << bounds[d].lo;
      clause(c.str());
      c.str("");
    }
    if (std::isfinite(bounds[d].hi)) {
      c << name << " < " << bounds[d].hi;
      clause(c.str());
    }
  }
  if (first) out << "TRUE";
  return out.str();
}

std::vector<Rule> to_dnf(const RewardTree& tree) {
  const auto boxes = tree.leaf_boxes();
  std::vector<Rule> rules;
  for (std::size_t x = 0; x < boxes.size(); ++x) {
    rules.push_back({x, boxes[x], tree.leaves()[x].mean, tree.leaves()[x].variance});
  }
  return rules;
}

std::vector<double> feature_importance(const RewardTree& tree) {
  std::vector<double> importance(tree.dims(), 0.0);
  double total = 0.0;
  for (const auto& s : tree.splits()) {
    const double g = std::max(0.0, s.gain);
    importance[s.dim] += g;
    total += g;
  }
  if (total > 0.0) {
    for (double& v : importance) v /= total;
  }
  return importance;
}

RectangleProjection rectangle_projection(const RewardTree& tree, std::size_t dim_x,
                                         std::size_t dim_y, const TrajectoryStore& store) {
  if (dim_x == dim_y || dim_x >= tree.dims() || dim_y >= tree.dims()) {
    throw std::invalid_argument("projection needs two distinct valid dimensions");
  }
  const auto ranges = store.observed_ranges();
  const auto boxes = tree.leaf_boxes();
  auto clip = [](double v, std::pair<double, double> r) { return std::clamp(v, r.first, r.second); };

  RectangleProjection proj;
  proj.dim_x = dim_x;
  proj.dim_y = dim_y;
  std::vector<double> masses(tree.leaf_count(), 0.0);
  for (const auto& t : store.trajectories()) {
    for (const auto& step : t.steps) masses[tree.assign_leaf(step)] += 1.0;
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t x = 0; x < boxes.size(); ++x) {
    ProjectedRectangle r;
    r.leaf = x;
    r.x_lo = clip(boxes[x][dim_x].lo, ranges[dim_x]);
    r.x_hi = clip(boxes[x][dim_x].hi, ranges[dim_x]);
    r.y_lo = clip(boxes[x][dim_y].lo, ranges[dim_y]);
    r.y_hi = clip(boxes[x][dim_y].hi, ranges[dim_y]);
    r.mean = tree.leaves()[x].mean;
    r.mass = masses[x];
    xs.insert(xs.end(), {r.x_lo, r.x_hi});
    ys.insert(ys.end(), {r.y_lo, r.y_hi});
    proj.rectangles.push_back(r);
  }
  for (auto* v : {&xs, &ys}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }

  // Cells are the grid spanned by every rectangle edge. A degenerate axis
  // (all data on one value) still yields one zero-width cell.
  auto cell_edges = [](const std::vector<double>& v) {
    std::vector<std::pair<double, double>> out;
    if (v.size() == 1) out.emplace_back(v[0], v[0]);
    for (std::size_t k = 0; k + 1 < v.size(); ++k) out.emplace_back(v[k], v[k + 1]);
    return out;
  };
  const auto cx = cell_edges(xs);
  const auto cy = cell_edges(ys);
  auto covers = [](double lo, double hi, std::pair<double, double> cell) {
    if (cell.first == cell.second) return cell.first >= lo && cell.first <= hi;
    return lo <= cell.first && cell.second <= hi;
  };
  auto locate = [](const std::vector<std::pair<double, double>>& cells, double v) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const bool last = k + 1 == cells.size();
      if (v >= cells[k].first && (v < cells[k].second || (last && v <= cells[k].second))) return k;
    }
    return cells.size() - 1;
  };

  // Per-cell, per-leaf sample mass.
  std::vector<std::map<std::size_t, double>> mass_in(cx.size() * cy.size());
  for (const auto& t : store.trajectories()) {
    for (const auto& step : t.steps) {
      const auto a = locate(cx, step[dim_x]);
      const auto b = locate(cy, step[dim_y]);
      mass_in[a * cy.size() + b][tree.assign_leaf(step)] += 1.0;
    }
  }
  for (std::size_t a = 0; a < cx.size(); ++a) {
    for (std::size_t b = 0; b < cy.size(); ++b) {
      ProjectionCell cell{cx[a].first, cx[a].second, cy[b].first, cy[b].second, {}, 0.0};
      const auto& found = mass_in[a * cy.size() + b];
      double weight = 0.0;
      double plain = 0.0;
      for (const auto& r : proj.rectangles) {
        if (!covers(r.x_lo, r.x_hi, cx[a]) || !covers(r.y_lo, r.y_hi, cy[b])) continue;
        auto it = found.find(r.leaf);
        const double m = it == found.end() ? 0.0 : it->second;
        cell.leaf_mass.emplace_back(r.leaf, m);
        cell.blended_mean += m * r.mean;
        weight += m;
        plain += r.mean;
      }
      if (cell.leaf_mass.empty()) continue;
      if (cell.leaf_mass.size() > 1) proj.has_overlaps = true;
      cell.blended_mean = weight > 0.0 ? cell.blended_mean / weight
                                       : plain / static_cast<double>(cell.leaf_mass.size());
      proj.cells.push_back(std::move(cell));
    }
  }
  return proj;
}

std::vector<LineageEdge> lineage(const RewardTree& previous, const RewardTree& next,
                                 const TrajectoryStore& store) {
  const auto old_boxes = previous.leaf_boxes();
  const auto new_boxes = next.leaf_boxes();
  std::map<std::pair<std::size_t, std::size_t>, double> mass;
  for (const auto& t : store.trajectories()) {
    for (const auto& step : t.steps) mass[{previous.assign_leaf(step), next.assign_leaf(step)}] += 1.0;
  }
  std::vector<LineageEdge> edges;
  for (std::size_t to = 0; to < new_boxes.size(); ++to) {
    for (std::size_t from = 0; from < old_boxes.size(); ++from) {
      bool overlap = true;
      for (std::size_t d = 0; d < next.dims() && overlap; ++d) {
        overlap = std::max(old_boxes[from][d].lo, new_boxes[to][d].lo) <
                  std::min(old_boxes[from][d].hi, new_boxes[to][d].hi);
      }
      if (!overlap) continue;
      auto it = mass.find({from, to});
      edges.push_back({from, to, it == mass.end() ? 0.0 : it->second});
    }
  }
  return edges;
}

namespace {

json bound(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json tree_to_json(const RewardTree& tree, const std::vector<std::string>& names, std::size_t version) {
  json doc;
  doc["format"] = "arbor.tree/1";
  doc["version"] = version;
  doc["dims"] = tree.dims();
  doc["dimension_names"] = names;
  doc["leaf_count"] = tree.leaf_count();
  json nodes = json::array();
  for (std::size_t k = 0; k < tree.nodes().size(); ++k) {
    const auto& n = tree.nodes()[k];
    if (n.is_leaf()) {
      const auto& s = tree.leaves()[static_cast<std::size_t>(n.leaf)];
      nodes.push_back({{"id", k},
                       {"component", n.leaf + 1},
                       {"mean", s.mean},
                       {"variance", s.variance},
                       {"mass", s.mass}});
    } else {
      nodes.push_back({{"id", k}, {"dim", n.dim}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
  }
  doc["nodes"] = std::move(nodes);
  json splits = json::array();
  for (const auto& s : tree.splits()) {
    splits.push_back({{"component", s.leaf + 1}, {"dim", s.dim}, {"threshold", s.threshold}, {"gain", s.gain}});
  }
  doc["splits"] = std::move(splits);
  json rules = json::array();
  for (const auto& r : to_dnf(tree)) {
    json bounds = json::array();
    for (const auto& iv : r.bounds) bounds.push_back({bound(iv.lo), bound(iv.hi)});
    rules.push_back({{"component", r.leaf + 1},
                     {"condition", r.condition(names)},
                     {"bounds", std::move(bounds)},
                     {"mean", r.mean},
                     {"variance", r.variance}});
  }
  doc["rules"] = std::move(rules);
  doc["feature_importance"] = {{"metric", "share of RSS reduction per split dimension"},
                               {"values", feature_importance(tree)}};
  return doc;
}

RewardTree tree_from_json(const json& doc) {
  if (doc.value("format", "") != "arbor.tree/1") throw std::runtime_error("unsupported tree format");
  RewardTree tree(doc.at("dims").get<std::size_t>());
  for (const auto& s : doc.at("splits")) {
    tree = tree.split(s.at("component").get<std::size_t>() - 1, s.at("dim").get<std::size_t>(),
                      s.at("threshold").get<double>(), s.at("gain").get<double>());
  }
  const auto& nodes = doc.at("nodes");
  if (nodes.size() != tree.nodes().size()) throw std::runtime_error("tree nodes disagree with splits");
  std::vector<double> means(tree.leaf_count()), variances(tree.leaf_count()), masses(tree.leaf_count());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& n = nodes[k];
    const auto& expect = tree.nodes()[k];
    if (n.contains("component")) {
      const auto x = n.at("component").get<std::size_t>() - 1;
      if (!expect.is_leaf() || static_cast<std::size_t>(expect.leaf) != x) {
        throw std::runtime_error("tree nodes disagree with splits");
      }
      means[x] = n.at("mean").get<double>();
      variances[x] = n.at("variance").get<double>();
      masses[x] = n.at("mass").get<double>();
    } else if (expect.is_leaf() || expect.dim != n.at("dim").get<std::size_t>() ||
               expect.threshold != n.at("threshold").get<double>()) {
      throw std::runtime_error("tree nodes disagree with splits");
    }
  }
  tree.set_components(means, variances);
  tree.set_masses(masses);
  return tree;
}

json history_to_json(const GrowthHistory& history) {
  json doc;
  doc["format"] = "arbor.history/1";
  doc["dims"] = history.dims;
  json splits = json::array();
  for (const auto& s : history.splits) {
    splits.push_back({{"component", s.leaf + 1}, {"dim", s.dim}, {"threshold", s.threshold}, {"gain", s.gain}});
  }
  doc["splits"] = std::move(splits);
  json snaps = json::array();
  for (std::size_t m = 0; m < history.snapshots.size(); ++m) {
    snaps.push_back({{"m", m + 1}, {"mean", history.snapshots[m].mean}, {"variance", history.snapshots[m].variance}});
  }
  doc["snapshots"] = std::move(snaps);
  return doc;
}

json projection_to_json(const RectangleProjection& p, const std::vector<std::string>& names) {
  json doc;
  doc["format"] = "arbor.rectangles/1";
  doc["dims"] = {p.dim_x, p.dim_y};
  if (p.dim_x < names.size() && p.dim_y < names.size()) doc["dim_names"] = {names[p.dim_x], names[p.dim_y]};
  doc["has_overlaps"] = p.has_overlaps;
  json rects = json::array();
  for (const auto& r : p.rectangles) {
    rects.push_back({{"component", r.leaf + 1},
                     {"x", {r.x_lo, r.x_hi}},
                     {"y", {r.y_lo, r.y_hi}},
                     {"mean", r.mean},
                     {"mass", r.mass}});
  }
  doc["rectangles"] = std::move(rects);
  json cells = json::array();
  for (const auto& c : p.cells) {
    json members = json::array();
    for (const auto& [leaf, mass] : c.leaf_mass) members.push_back({{"component", leaf + 1}, {"mass", mass}});
    cells.push_back({{"x", {c.x_lo, c.x_hi}},
                     {"y", {c.y_lo, c.y_hi}},
                     {"components", std::move(members)},
                     {"blended_mean", c.blended_mean}});
  }
  doc["cells"] = std::move(cells);
  return doc;
}

}  // namespace arbor
