#pragma once

#include <cstdint>
#include <filesystem>
#include <iterator>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "forge/bytes.hpp"
#include "forge/edges.hpp"
#include "forge/mapped_file.hpp"
#include "forge/nodes.hpp"
#include "forge/rng.hpp"

namespace forge {

enum class Direction : std::uint8_t { out, in, both };

// Incident records of one alias: outgoing (alias = a) then incoming (alias = b).
class Adjacency {
 public:
  class iterator {
   public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = EdgeRecord;
    using difference_type = std::ptrdiff_t;
    using pointer = const EdgeRecord*;
    using reference = const EdgeRecord&;

    iterator() = default;
    iterator(const Adjacency* adj, std::size_t pos) : adj_(adj), pos_(pos) {}
    reference operator*() const { return (*adj_)[pos_]; }
    pointer operator->() const { return &(*adj_)[pos_]; }
    iterator& operator++() {
      ++pos_;
      return *this;
    }
    iterator operator++(int) {
      auto t = *this;
      ++pos_;
      return t;
    }
    friend bool operator==(const iterator& x, const iterator& y) { return x.pos_ == y.pos_; }

   private:
    const Adjacency* adj_ = nullptr;
    std::size_t pos_ = 0;
  };

  Adjacency() = default;
  Adjacency(std::span<const EdgeRecord> out, std::span<const EdgeRecord> in) : out_(out), in_(in) {}

  std::span<const EdgeRecord> out() const { return out_; }
  std::span<const EdgeRecord> in() const { return in_; }
  std::size_t size() const { return out_.size() + in_.size(); }
  bool empty() const { return size() == 0; }
  const EdgeRecord& operator[](std::size_t i) const { return i < out_.size() ? out_[i] : in_[i - out_.size()]; }
  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size()}; }
  std::vector<EdgeRecord> to_vector() const;

 private:
  std::span<const EdgeRecord> out_;
  std::span<const EdgeRecord> in_;
};

// Immutable node table plus edge table with forward ((a, b)-sorted) and
// reverse ((b, a)-sorted) mirrors and per-node offset indexes. The in-memory
// image is the on-disk image, so a built store and a reopened one are the
// same bytes.
class GraphStore {
 public:
  static constexpr std::uint64_t kFormatVersion = 1;
  static constexpr std::size_t kHeaderSize = 32;
  static constexpr std::size_t kNodeRowSize = 21 * 8;
  static constexpr std::size_t kEdgeRowSize = sizeof(EdgeRecord);

  GraphStore();
  GraphStore(GraphStore&&) noexcept;
  GraphStore& operator=(GraphStore&&) noexcept;
  ~GraphStore();

  // Throws InconsistentInputs on duplicate aliases or dangling endpoints,
  // DuplicateEdgeKey on a repeated (a, b).
  static GraphStore build(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> edges);
  // Throws SchemaMismatch when either header differs from the canonical one.
  static GraphStore import_csv(const std::filesystem::path& nodes_csv, const std::filesystem::path& edges_csv);
  static GraphStore open(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  std::size_t node_count() const;
  std::size_t edge_count() const;
  bool contains(Alias alias) const { return index_of(alias).has_value(); }
  std::optional<std::size_t> index_of(Alias alias) const;
  Alias alias_at(std::size_t index) const;
  NodeRecord node_at(std::size_t index) const;
  NodeRecord node(Alias alias) const;  // UnknownAlias
  std::vector<NodeRecord> nodes() const;
  std::span<const EdgeRecord> edges() const;  // (a, b) order
  std::span<const EdgeRecord> edges_by_recipient() const;  // (b, a) order

  Adjacency adjacency(Alias alias, Direction dir = Direction::both) const;  // UnknownAlias
  std::size_t degree(Alias alias, Direction dir = Direction::both) const;
  // k incident records drawn uniformly without replacement, in adjacency
  // order; all of them when the degree is at most k.
  std::vector<EdgeRecord> random_edge_sample(Alias alias, std::size_t k, Rng& rng) const;

  void export_csv(const std::filesystem::path& nodes_csv, const std::filesystem::path& edges_csv) const;
  void export_sql(std::ostream& out) const;

 private:
  struct Region {
    Bytes owned;
    MappedFile mapped;
    std::span<const std::uint8_t> view;
  };

  void bind();
  std::span<const std::uint64_t> offsets(bool reverse) const;

  Region nodes_;
  Region edges_;
  Region edges_rev_;
  Region offsets_;
};

// Documentation of the binary layout written next to the store files.
std::string_view store_format_text();

}  // namespace forge
