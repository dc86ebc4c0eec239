#include "arbor/reward_tree.hpp"

#include <stdexcept>

namespace arbor {

RewardTree::RewardTree(std::size_t dims) : dims_(dims) {
  if (dims == 0) throw std::invalid_argument("reward tree needs at least one dimension");
  TreeNode root;
  root.leaf = 0;
  nodes_.push_back(root);
  leaf_node_.push_back(0);
  leaves_.emplace_back();
}

std::size_t RewardTree::assign_leaf(std::span<const double> sa) const {
  std::size_t node = 0;
  while (!nodes_[node].is_leaf()) {
    const auto& n = nodes_[node];
    node = static_cast<std::size_t>(sa[n.dim] >= n.threshold ? n.right : n.left);
  }
  return static_cast<std::size_t>(nodes_[node].leaf);
}

std::pair<double, double> RewardTree::predict(std::span<const double> sa) const {
  const auto& stats = leaves_[assign_leaf(sa)];
  return {stats.mean, stats.variance};
}

RewardTree RewardTree::split(std::size_t leaf, std::size_t dim, double threshold,
                             double gain) const {
  if (leaf >= leaves_.size()) throw std::out_of_range("split of unknown leaf");
  if (dim >= dims_) throw std::out_of_range("split on unknown dimension");
  RewardTree next = *this;
  const std::size_t node = leaf_node_[leaf];
  for (auto& n : next.nodes_) {
    if (n.is_leaf() && static_cast<std::size_t>(n.leaf) > leaf) ++n.leaf;
  }
  TreeNode left;
  left.leaf = static_cast<std::ptrdiff_t>(leaf);
  TreeNode right;
  right.leaf = static_cast<std::ptrdiff_t>(leaf + 1);
  const auto left_id = static_cast<std::ptrdiff_t>(next.nodes_.size());
  next.nodes_.push_back(left);
  next.nodes_.push_back(right);
  auto& parent = next.nodes_[node];
  parent.leaf = -1;
  parent.dim = dim;
  parent.threshold = threshold;
  parent.left = left_id;
  parent.right = left_id + 1;

  next.leaf_node_.assign(leaves_.size() + 1, 0);
  for (std::size_t k = 0; k < next.nodes_.size(); ++k) {
    if (next.nodes_[k].is_leaf()) next.leaf_node_[static_cast<std::size_t>(next.nodes_[k].leaf)] = k;
  }
  next.leaves_.insert(next.leaves_.begin() + static_cast<std::ptrdiff_t>(leaf) + 1, LeafStats{});
  next.leaves_[leaf] = LeafStats{};
  next.splits_.push_back({leaf, dim, threshold, gain});
  return next;
}

RewardTree RewardTree::prefix(std::size_t leaves) const {
  if (leaves < 1 || leaves > splits_.size() + 1) throw std::out_of_range("prefix size out of range");
  RewardTree tree(dims_);
  for (std::size_t s = 0; s + 1 < leaves; ++s) {
    const auto& rec = splits_[s];
    tree = tree.split(rec.leaf, rec.dim, rec.threshold, rec.gain);
  }
  return tree;
}

void RewardTree::set_components(std::span<const double> means, std::span<const double> variances) {
  if (means.size() != leaves_.size() || variances.size() != leaves_.size()) {
    throw std::invalid_argument("component count does not match leaf count");
  }
  for (std::size_t x = 0; x < leaves_.size(); ++x) {
    if (variances[x] < 0.0) throw std::invalid_argument("negative component variance");
    leaves_[x].mean = means[x];
    leaves_[x].variance = variances[x];
  }
}

void RewardTree::set_masses(std::span<const double> masses) {
  if (masses.size() != leaves_.size()) throw std::invalid_argument("mass count mismatch");
  for (std::size_t x = 0; x < leaves_.size(); ++x) leaves_[x].mass = masses[x];
}

std::vector<double> RewardTree::means() const {
  std::vector<double> out;
  for (const auto& l : leaves_) out.push_back(l.mean);
  return out;
}

std::vector<double> RewardTree::variances() const {
  std::vector<double> out;
  for (const auto& l : leaves_) out.push_back(l.variance);
  return out;
}

std::vector<Box> RewardTree::leaf_boxes() const {
  std::vector<Box> boxes(leaves_.size());
  struct Frame {
    std::size_t node;
    Box box;
  };
  std::vector<Frame> stack{{0, Box(dims_)}};
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const auto& n = nodes_[f.node];
    if (n.is_leaf()) {
      boxes[static_cast<std::size_t>(n.leaf)] = std::move(f.box);
      continue;
    }
    Box left = f.box;
    left[n.dim].hi = std::min(left[n.dim].hi, n.threshold);
    Box right = std::move(f.box);
    right[n.dim].lo = std::max(right[n.dim].lo, n.threshold);
    stack.push_back({static_cast<std::size_t>(n.left), std::move(left)});
    stack.push_back({static_cast<std::size_t>(n.right), std::move(right)});
  }
  return boxes;
}

bool operator==(const RewardTree& a, const RewardTree& b) {
  if (a.dims_ != b.dims_ || a.nodes_.size() != b.nodes_.size() ||
      a.leaves_.size() != b.leaves_.size() || a.splits_.size() != b.splits_.size()) {
    return false;
  }
  for (std::size_t k = 0; k < a.nodes_.size(); ++k) {
    const auto& x = a.nodes_[k];
    const auto& y = b.nodes_[k];
    if (x.leaf != y.leaf || x.left != y.left || x.right != y.right) return false;
    if (!x.is_leaf() && (x.dim != y.dim || x.threshold != y.threshold)) return false;
  }
  for (std::size_t k = 0; k < a.leaves_.size(); ++k) {
    const auto& x = a.leaves_[k];
    const auto& y = b.leaves_[k];
    if (x.mean != y.mean || x.variance != y.variance || x.mass != y.mass) return false;
  }
  for (std::size_t k = 0; k < a.splits_.size(); ++k) {
    const auto& x = a.splits_[k];
    const auto& y = b.splits_[k];
    if (x.leaf != y.leaf || x.dim != y.dim || x.threshold != y.threshold || x.gain != y.gain) {
      return false;
    }
  }
  return true;
}

FeatureCounts feature_counts(const RewardTree& tree, const TrajectoryStore& store) {
  FeatureCounts counts(tree.leaf_count(), store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (const auto& step : store[i].steps) ++counts(tree.assign_leaf(step), i);
  }
  return counts;
}

FeatureCounts feature_counts(const RewardTree& tree, const TrajectoryStore& store,
                             std::span<const std::size_t> indices) {
  FeatureCounts counts(tree.leaf_count(), indices.size());
  for (std::size_t c = 0; c < indices.size(); ++c) {
    for (const auto& step : store[indices[c]].steps) ++counts(tree.assign_leaf(step), c);
  }
  return counts;
}

ComponentFit fit_components(const FeatureCounts& counts, const FitnessEstimate& fitness,
                            std::size_t horizon) {
  const std::size_t m = counts.leaves();
  ComponentFit fit{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0),
                   std::vector<double>(m, 0.0)};
  const auto t = static_cast<double>(horizon);
  for (std::size_t k = 0; k < fitness.labelled.size(); ++k) {
    const auto col = counts.column(fitness.labelled[k]);
    const double target = fitness.mu[k] / t;
    for (std::size_t x = 0; x < m; ++x) {
      fit.mean[x] += static_cast<double>(col[x]) * target;
      fit.mass[x] += static_cast<double>(col[x]);
    }
  }
  for (std::size_t x = 0; x < m; ++x) {
    if (fit.mass[x] > 0.0) fit.mean[x] /= fit.mass[x];
  }
  for (std::size_t k = 0; k < fitness.labelled.size(); ++k) {
    const auto col = counts.column(fitness.labelled[k]);
    const double target = fitness.mu[k] / t;
    for (std::size_t x = 0; x < m; ++x) {
      const double r = target - fit.mean[x];
      fit.variance[x] += static_cast<double>(col[x]) * r * r;
    }
  }
  for (std::size_t x = 0; x < m; ++x) {
    if (fit.mass[x] > 0.0) fit.variance[x] /= fit.mass[x];
  }
  return fit;
}

void install_components(RewardTree& tree, const ComponentFit& fit, const FeatureCounts& counts) {
  tree.set_components(fit.mean, fit.variance);
  std::vector<double> masses(counts.leaves(), 0.0);
  for (std::size_t i = 0; i < counts.trajectories(); ++i) {
    const auto col = counts.column(i);
    for (std::size_t x = 0; x < masses.size(); ++x) masses[x] += static_cast<double>(col[x]);
  }
  tree.set_masses(masses);
}

}  // namespace arbor
