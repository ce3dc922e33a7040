#pragma once

#include "gprar/skeleton.hpp"
#include "gprar/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace gprar {

inline constexpr Index kGridRows = 3;
inline constexpr Index kGridCols = 4;
inline constexpr Index kGridCells = kGridRows * kGridCols;

/// Per-pixel displacement images, stored as [T, H, W, 2].
class FlowField {
 public:
  FlowField() = default;
  FlowField(Index frames, Index width, Index height);

  Index frames() const { return data_.shape()[0]; }
  Index height() const { return data_.shape()[1]; }
  Index width() const { return data_.shape()[2]; }

  Eigen::Vector2d at(Index t, Index x, Index y) const;
  void set(Index t, Index x, Index y, const Eigen::Vector2d& v);
  void fill(Index t, const Eigen::Vector2d& v);

  const Tensor& data() const { return data_; }

  friend bool operator==(const FlowField& a, const FlowField& b) { return a.data_ == b.data_; }

 private:
  Tensor data_{Shape{1, 1, 1, 2}};
};

/// T x 24: for each frame, the mean flow of the 3x4 grid cells in row-major
/// cell order, interleaved (dx, dy).
struct GridFlow {
  RowMatrix<double> cells;

  Index frames() const { return cells.rows(); }
  Eigen::Vector2d cell(Index t, Index index) const { return cells.block<1, 2>(t, 2 * index).transpose(); }
  friend bool operator==(const GridFlow& a, const GridFlow& b) { return a.cells == b.cells; }
};

/// Pixel range [begin, end) of grid cell `index` along an axis of `extent`
/// pixels split into `parts`; the last cell takes the remainder.
std::pair<Index, Index> grid_span(Index extent, Index parts, Index index);

GridFlow grid_flow(const FlowField& flow);

/// Binary flow file: "GPFLOW1\0", int64 T, W, H, then T*H*W*2 little-endian doubles.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

/// CSV with header t,cell,dx,dy.
void write_grid_csv(std::ostream& out, const GridFlow& grid);
GridFlow read_grid_csv(std::istream& in);

/// CSV with header t,x,y.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

}  // namespace gprar
