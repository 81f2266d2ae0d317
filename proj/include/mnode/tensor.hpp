#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mnode {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Ordered name -> dense tensor map. Iteration order is insertion order so
/// that flattening, checkpoints and optimizer updates are deterministic.
class TensorDict {
 public:
  void add(const std::string& name, Mat value);
  bool contains(const std::string& name) const;
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;

  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  Mat& operator[](std::size_t i) { return tensors_[i]; }
  const Mat& operator[](std::size_t i) const { return tensors_[i]; }

  /// Total scalar count, optionally restricted to names starting with `prefix`.
  Index numel(const std::string& prefix = "") const;

  /// Concatenate (column-major within a tensor) all tensors whose name starts
  /// with `prefix`, in insertion order.
  Vec flatten(const std::string& prefix = "") const;
  /// Inverse of flatten for the same prefix.
  void assign_flat(const Vec& flat, const std::string& prefix = "");

  /// Same names and shapes, all zeros.
  TensorDict zeros_like(const std::string& prefix = "") const;

  /// Elementwise accumulate; every tensor of `other` must exist here with
  /// the same shape.
  TensorDict& operator+=(const TensorDict& other);
  TensorDict& operator*=(double s);

 private:
  std::vector<std::string> names_;
  std::vector<Mat> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Gradients = TensorDict;

/// Named parameters plus Adam moments. The step counter is shared by every
/// parameter and advances once per optimizer step.
class ParamStore {
 public:
  void add(const std::string& name, Mat value);
  bool contains(const std::string& name) const { return values_.contains(name); }
  Mat& at(const std::string& name) { return values_.at(name); }
  const Mat& at(const std::string& name) const { return values_.at(name); }

  const TensorDict& values() const { return values_; }
  TensorDict& values() { return values_; }
  const TensorDict& first_moment() const { return m1_; }
  const TensorDict& second_moment() const { return m2_; }
  TensorDict& first_moment() { return m1_; }
  TensorDict& second_moment() { return m2_; }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  Gradients zeros_like(const std::string& prefix = "") const {
    return values_.zeros_like(prefix);
  }

 private:
  TensorDict values_;
  TensorDict m1_;
  TensorDict m2_;
  std::int64_t step_ = 0;
};

}  // namespace mnode
