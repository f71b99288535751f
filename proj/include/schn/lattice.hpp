#pragma once

// Finite-box 2D Ising model with hard-frozen boundary specifications.
//
// A lattice is a rectangle of sites [x_min, x_max] x [y_min, y_max]. The
// outer ring of the rectangle is frozen to a single value; horizontal
// segments strictly inside may be frozen to either sign. Everything else is
// free. Sites are indexed row-major (y outer, x inner), which fixes the
// enumeration order used by every kernel in the library.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "schn/error.hpp"

namespace schn {

using Spin = std::int8_t;

struct Site {
  int x = 0;
  int y = 0;

  friend constexpr bool operator==(const Site&, const Site&) = default;
  friend constexpr auto operator<=>(const Site&, const Site&) = default;
};

inline std::string to_string(Site s) {
  return "(" + std::to_string(s.x) + "," + std::to_string(s.y) + ")";
}

/// Horizontal run of sites [(x_begin, y), (x_end, y)], both ends included.
struct Segment {
  int x_begin = 0;
  int x_end = 0;
  int y = 0;
  Spin value = 1;

  [[nodiscard]] int length() const { return x_end - x_begin + 1; }
  [[nodiscard]] bool contains(Site s) const {
    return s.y == y && s.x >= x_begin && s.x <= x_end;
  }
  [[nodiscard]] Segment flipped() const {
    return {x_begin, x_end, y, static_cast<Spin>(-value)};
  }

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct FrozenSpec {
  Spin ring_value = -1;
  std::vector<Segment> segments;

  [[nodiscard]] FrozenSpec flipped() const {
    FrozenSpec out{static_cast<Spin>(-ring_value), {}};
    out.segments.reserve(segments.size());
    for (const auto& seg : segments) out.segments.push_back(seg.flipped());
    return out;
  }

  friend bool operator==(const FrozenSpec&, const FrozenSpec&) = default;
};

/// Zero field, J = 1; only the inverse temperature varies.
struct ModelParams {
  double beta = 1.0;
};

/// Axis-aligned rectangle of sites, ring included.
struct BoxShape {
  int x_min = -1;
  int x_max = 1;
  int y_min = -1;
  int y_max = 1;

  static BoxShape square(int M) { return {-M, M, -M, M}; }

  /// Interior of `rows` x `cols` free rows/columns; rows centred on y = 0,
  /// columns on x = 0 (x from -cols/2).
  static BoxShape strip(int rows, int cols) {
    const int y0 = -(rows - 1) / 2;
    const int x0 = -cols / 2;
    return {x0 - 1, x0 + cols, y0 - 1, y0 + rows};
  }

  [[nodiscard]] int width() const { return x_max - x_min + 1; }
  [[nodiscard]] int height() const { return y_max - y_min + 1; }
  [[nodiscard]] int interior_rows() const { return height() - 2; }
  [[nodiscard]] int interior_cols() const { return width() - 2; }
  [[nodiscard]] bool contains(Site s) const {
    return s.x >= x_min && s.x <= x_max && s.y >= y_min && s.y <= y_max;
  }
  [[nodiscard]] bool on_ring(Site s) const {
    return contains(s) &&
           (s.x == x_min || s.x == x_max || s.y == y_min || s.y == y_max);
  }
  [[nodiscard]] bool strictly_inside(Site s) const {
    return contains(s) && !on_ring(s);
  }

  friend bool operator==(const BoxShape&, const BoxShape&) = default;
};

class Lattice {
 public:
  static constexpr int kNoSite = -1;

  Lattice(BoxShape shape, FrozenSpec spec) : shape_(shape), spec_(std::move(spec)) {
    detail::require(shape_.width() >= 3 && shape_.height() >= 3,
                    "lattice: box must have at least one interior site");
    detail::require(spec_.ring_value == 1 || spec_.ring_value == -1,
                    "lattice: ring value must be +1 or -1");
    const int n = shape_.width() * shape_.height();
    frozen_.assign(static_cast<std::size_t>(n), 0);
    free_index_.assign(static_cast<std::size_t>(n), kNoSite);
    for (int i = 0; i < n; ++i) {
      if (shape_.on_ring(site(i))) frozen_[i] = spec_.ring_value;
    }
    for (const auto& seg : spec_.segments) {
      detail::require(seg.value == 1 || seg.value == -1,
                      "lattice: segment value must be +1 or -1");
      detail::require(seg.x_begin <= seg.x_end, "lattice: empty segment");
      for (int x = seg.x_begin; x <= seg.x_end; ++x) {
        const Site s{x, seg.y};
        detail::require(shape_.strictly_inside(s),
                        "lattice: segment site " + to_string(s) + " is not strictly inside the box");
        const int i = index(s);
        detail::require(frozen_[i] == 0,
                        "lattice: segments overlap at " + to_string(s));
        frozen_[i] = seg.value;
      }
    }
    for (int i = 0; i < n; ++i) {
      if (frozen_[i] == 0) {
        free_index_[i] = static_cast<int>(free_sites_.size());
        free_sites_.push_back(i);
      }
    }
  }

  [[nodiscard]] const BoxShape& shape() const { return shape_; }
  [[nodiscard]] const FrozenSpec& spec() const { return spec_; }
  [[nodiscard]] int width() const { return shape_.width(); }
  [[nodiscard]] int height() const { return shape_.height(); }
  [[nodiscard]] int size() const { return width() * height(); }

  [[nodiscard]] bool contains(Site s) const { return shape_.contains(s); }
  [[nodiscard]] int index(Site s) const {
    return (s.y - shape_.y_min) * width() + (s.x - shape_.x_min);
  }
  [[nodiscard]] Site site(int i) const {
    return {shape_.x_min + i % width(), shape_.y_min + i / width()};
  }

  [[nodiscard]] bool is_free(int i) const { return frozen_[i] == 0; }
  [[nodiscard]] bool is_free(Site s) const { return contains(s) && is_free(index(s)); }
  /// 0 for free sites.
  [[nodiscard]] Spin frozen_value(int i) const { return frozen_[i]; }

  /// Row-major list of free-site indices.
  [[nodiscard]] const std::vector<int>& free_sites() const { return free_sites_; }
  [[nodiscard]] int free_count() const { return static_cast<int>(free_sites_.size()); }
  /// Position of site i in free_sites(), or kNoSite.
  [[nodiscard]] int free_index(int i) const { return free_index_[i]; }

  /// Neighbours of site i that lie inside the box (2 to 4 of them).
  [[nodiscard]] std::vector<int> neighbors(int i) const {
    std::vector<int> out;
    const Site s = site(i);
    for (const Site t : {Site{s.x + 1, s.y}, Site{s.x - 1, s.y}, Site{s.x, s.y + 1},
                         Site{s.x, s.y - 1}}) {
      if (contains(t)) out.push_back(index(t));
    }
    return out;
  }

 private:
  BoxShape shape_;
  FrozenSpec spec_;
  std::vector<Spin> frozen_;
  std::vector<int> free_index_;
  std::vector<int> free_sites_;
};

using LatticePtr = std::shared_ptr<const Lattice>;

inline LatticePtr build_lattice(int M, FrozenSpec spec) {
  detail::require(M >= 1, "build_lattice: M must be >= 1");
  return std::make_shared<const Lattice>(BoxShape::square(M), std::move(spec));
}

inline LatticePtr build_lattice(BoxShape shape, FrozenSpec spec) {
  return std::make_shared<const Lattice>(shape, std::move(spec));
}

inline LatticePtr build_strip(int rows, int cols, FrozenSpec spec) {
  detail::require(rows >= 1 && cols >= 1, "build_strip: empty interior");
  return std::make_shared<const Lattice>(BoxShape::strip(rows, cols), std::move(spec));
}

/// Spin values on every box site. Frozen sites always carry their frozen value.
class SpinConfiguration {
 public:
  /// Ground state of the boundary condition: ring value everywhere except
  /// the frozen segments.
  explicit SpinConfiguration(LatticePtr lattice) : lattice_(std::move(lattice)) {
    detail::require(lattice_ != nullptr, "SpinConfiguration: null lattice");
    spins_.resize(static_cast<std::size_t>(lattice_->size()));
    for (int i = 0; i < lattice_->size(); ++i) {
      const Spin f = lattice_->frozen_value(i);
      spins_[i] = f != 0 ? f : lattice_->spec().ring_value;
    }
  }

  [[nodiscard]] const Lattice& lattice() const { return *lattice_; }
  [[nodiscard]] const LatticePtr& lattice_ptr() const { return lattice_; }

  [[nodiscard]] Spin operator[](int i) const { return spins_[i]; }
  [[nodiscard]] Spin at(Site s) const { return spins_[lattice_->index(s)]; }
  [[nodiscard]] const std::vector<Spin>& spins() const { return spins_; }

  void set(int i, Spin value) {
    detail::require(lattice_->is_free(i), "SpinConfiguration: cannot set a frozen site");
    spins_[i] = value;
  }
  void set(Site s, Spin value) { set(lattice_->index(s), value); }

  /// Unchecked write for sampling kernels; caller guarantees i is free.
  void assign_free(int i, Spin value) { spins_[i] = value; }
  /// Unchecked storage access for sampling kernels.
  [[nodiscard]] Spin* raw() { return spins_.data(); }

  [[nodiscard]] bool respects_frozen() const {
    for (int i = 0; i < lattice_->size(); ++i) {
      const Spin f = lattice_->frozen_value(i);
      if (f != 0 && spins_[i] != f) return false;
    }
    return true;
  }

  /// Spin values on the free sites, packed LSB-first in free-site order.
  [[nodiscard]] std::uint64_t free_bits() const {
    std::uint64_t bits = 0;
    const auto& fs = lattice_->free_sites();
    for (std::size_t k = 0; k < fs.size() && k < 64; ++k) {
      if (spins_[fs[k]] > 0) bits |= std::uint64_t{1} << k;
    }
    return bits;
  }

 private:
  LatticePtr lattice_;
  std::vector<Spin> spins_;
};

/// H = -sum over nearest-neighbour bonds inside the box of s_i s_j,
/// frozen-frozen bonds included.
inline long hamiltonian(const SpinConfiguration& config) {
  const Lattice& lat = config.lattice();
  const int w = lat.width();
  const int h = lat.height();
  long energy = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int i = r * w + c;
      if (c + 1 < w) energy -= config[i] * config[i + 1];
      if (r + 1 < h) energy -= config[i] * config[i + w];
    }
  }
  return energy;
}

/// Constant part of the Hamiltonian from bonds whose ends are both frozen.
inline long frozen_bond_energy(const Lattice& lat) {
  const int w = lat.width();
  const int h = lat.height();
  long energy = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int i = r * w + c;
      const Spin a = lat.frozen_value(i);
      if (a == 0) continue;
      if (c + 1 < w && lat.frozen_value(i + 1) != 0) energy -= a * lat.frozen_value(i + 1);
      if (r + 1 < h && lat.frozen_value(i + w) != 0) energy -= a * lat.frozen_value(i + w);
    }
  }
  return energy;
}

/// Sum of the four neighbour spins of an interior site.
inline int local_field(const SpinConfiguration& config, int i) {
  const int w = config.lattice().width();
  return config[i - 1] + config[i + 1] + config[i - w] + config[i + w];
}

/// Energy change from flipping the free site s.
inline long flip_delta(const SpinConfiguration& config, Site s) {
  const Lattice& lat = config.lattice();
  detail::require(lat.is_free(s), "flip_delta: site " + to_string(s) + " is frozen or outside the box");
  const int i = lat.index(s);
  return 2L * config[i] * local_field(config, i);
}

}  // namespace schn
