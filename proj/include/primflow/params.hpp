#pragma once

#include <string>
#include <utility>
#include <vector>

#include "primflow/tape.hpp"

namespace primflow {

/// Insertion-ordered named tensors. Order is part of the contract: it fixes
/// checkpoint layout and gradient-accumulation order, keeping runs bit-for-bit
/// reproducible.
struct ParamStore {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }
  const Tensor* find(const std::string& name) const {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }
  Tensor& at(const std::string& name) {
    if (Tensor* t = find(name)) return *t;
    throw std::out_of_range("param not found: " + name);
  }
  const Tensor& at(const std::string& name) const {
    if (const Tensor* t = find(name)) return *t;
    throw std::out_of_range("param not found: " + name);
  }
  void add(const std::string& name, Tensor t) {
    if (find(name)) throw std::invalid_argument("duplicate param: " + name);
    items.emplace_back(name, std::move(t));
  }
  bool has(const std::string& name) const { return find(name) != nullptr; }
  size_t size() const { return items.size(); }
};

/// Tape handles for every tensor of a ParamStore, leafed in store order.
struct LeafMap {
  std::vector<std::pair<std::string, ad::Val>> items;
  ad::Val at(const std::string& name) const {
    for (auto& [n, v] : items)
      if (n == name) return v;
    throw std::out_of_range("leaf not found: " + name);
  }
  bool has(const std::string& name) const {
    for (auto& [n, v] : items)
      if (n == name) return true;
    return false;
  }
};

inline LeafMap leaf_all(ad::Tape& tape, const ParamStore& store) {
  LeafMap m;
  m.items.reserve(store.items.size());
  for (auto& [n, t] : store.items) m.items.emplace_back(n, tape.leaf(t, "param"));
  return m;
}

}  // namespace primflow
