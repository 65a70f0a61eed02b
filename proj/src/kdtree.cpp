#include "gtrack/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace gtrack {

namespace {
constexpr int32_t kLeafSize = 8;
}

double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = static_cast<double>(a.x()) - b.x();
  const double dy = static_cast<double>(a.y()) - b.y();
  const double dz = static_cast<double>(a.z()) - b.z();
  return dx * dx + dy * dy + dz * dz;
}

KdTree::KdTree(const PointMatrix& points) : points_(points), order_(points.rows()) {
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) {
    nodes_.reserve(2 * order_.size() / kLeafSize + 1);
    build(0, static_cast<int32_t>(order_.size()), 0);
  }
}

int32_t KdTree::build(int32_t begin, int32_t end, int depth) {
  const auto id = static_cast<int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) {
    return id;
  }
  // Split on the widest axis at the median.
  Vec3 lo = points_.row(order_[begin]);
  Vec3 hi = lo;
  for (int32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(order_[i]).transpose());
    hi = hi.cwiseMax(points_.row(order_[i]).transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int64_t a, int64_t b) { return points_(a, axis) < points_(b, axis); });
  const float split = points_(order_[mid], axis);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const int32_t left = build(begin, mid, depth + 1);
  const int32_t right = build(mid, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int32_t node_id, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int32_t i = node.begin; i < node.end; ++i) {
      const int64_t idx = order_[i];
      const double d = squared_distance(q, points_.row(idx));
      if (best.index < 0 || d < best.squared_distance ||
          (d == best.squared_distance && idx < best.index)) {
        best = {idx, d};
      }
    }
    return;
  }
  // Points left of the split have coord <= split, right ones >= split.
  const double diff = static_cast<double>(q[node.axis]) - node.split;
  const int32_t near = diff <= 0.0 ? node.left : node.right;
  const int32_t far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best);
  // Visit on equality too so that equidistant lower indices are found.
  if (best.index < 0 || diff * diff <= best.squared_distance) {
    search(far, q, best);
  }
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  Hit best;
  if (!nodes_.empty()) {
    search(0, query, best);
  }
  return best;
}

}  // namespace gtrack
