#pragma once

#include <cstdint>
#include <vector>

#include "gtrack/types.hpp"

namespace gtrack {

/// Static 3-d tree over the rows of a point matrix. Queries are exact; among
/// equidistant points the lowest row index wins, matching a linear scan.
class KdTree {
 public:
  explicit KdTree(const PointMatrix& points);

  struct Hit {
    int64_t index = -1;
    double squared_distance = 0.0;
  };

  [[nodiscard]] Hit nearest(const Vec3& query) const;
  [[nodiscard]] size_t size() const { return order_.size(); }

 private:
  struct Node {
    int32_t begin;
    int32_t end;
    int32_t left = -1;
    int32_t right = -1;
    int axis = -1;
    float split = 0.0F;
  };

  int32_t build(int32_t begin, int32_t end, int depth);
  void search(int32_t node, const Vec3& q, Hit& best) const;

  const PointMatrix& points_;
  std::vector<int64_t> order_;
  std::vector<Node> nodes_;
};

/// Squared Euclidean distance with the same arithmetic the tree uses.
double squared_distance(const Vec3& a, const Vec3& b);

}  // namespace gtrack
