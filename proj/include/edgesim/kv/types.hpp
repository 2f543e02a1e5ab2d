#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgesim/packet.hpp"

namespace edgesim::kv {

// Version timestamp ordering concurrent writes: a global counter plus the
// issuing client's identifier as tie-break. The zero tag is below every
// client-generated tag.
struct Tag {
  std::uint64_t counter = 0;
  std::uint32_t client_id = 0;

  friend auto operator<=>(const Tag&, const Tag&) = default;
  static constexpr Tag zero() { return {}; }
};

struct StoredValue {
  std::string value;
  Tag tag;
};

// r x c grid of servers; rows are read-quorums, columns are write-quorums.
// Every row intersects every column in exactly one server.
class QuorumSystem {
 public:
  QuorumSystem(std::vector<NodeId> grid_row_major, int rows, int cols)
      : grid_(std::move(grid_row_major)), rows_(rows), cols_(cols) {
    if (rows_ <= 0 || cols_ <= 0 ||
        grid_.size() != static_cast<std::size_t>(rows_) * cols_) {
      throw std::invalid_argument("grid dimensions do not match server count");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return grid_.size(); }
  NodeId at(int r, int c) const { return grid_[static_cast<std::size_t>(r) * cols_ + c]; }
  const std::vector<NodeId>& servers() const { return grid_; }

  std::vector<NodeId> read_quorum(int r) const {
    std::vector<NodeId> q;
    for (int c = 0; c < cols_; ++c) q.push_back(at(r, c));
    return q;
  }
  std::vector<NodeId> write_quorum(int c) const {
    std::vector<NodeId> q;
    for (int r = 0; r < rows_; ++r) q.push_back(at(r, c));
    return q;
  }

  // (row, col) grid position of a server, or (-1, -1).
  std::pair<int, int> position(NodeId n) const {
    for (int r = 0; r < rows_; ++r) {
      for (int c = 0; c < cols_; ++c) {
        if (at(r, c) == n) return {r, c};
      }
    }
    return {-1, -1};
  }

 private:
  std::vector<NodeId> grid_;
  int rows_, cols_;
};

}  // namespace edgesim::kv
