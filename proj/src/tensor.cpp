#include "mnode/tensor.hpp"

#include "mnode/error.hpp"

namespace mnode {

namespace {
bool has_prefix(const std::string& name, const std::string& prefix) {
  return name.compare(0, prefix.size(), prefix) == 0;
}
}  // namespace

void TensorDict::add(const std::string& name, Mat value) {
  if (index_.contains(name)) throw Error("duplicate tensor name '" + name + "'");
  index_.emplace(name, tensors_.size());
  names_.push_back(name);
  tensors_.push_back(std::move(value));
}

bool TensorDict::contains(const std::string& name) const { return index_.contains(name); }

Mat& TensorDict::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown tensor '" + name + "'");
  return tensors_[it->second];
}

const Mat& TensorDict::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown tensor '" + name + "'");
  return tensors_[it->second];
}

Index TensorDict::numel(const std::string& prefix) const {
  Index n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (has_prefix(names_[i], prefix)) n += tensors_[i].size();
  return n;
}

Vec TensorDict::flatten(const std::string& prefix) const {
  Vec out(numel(prefix));
  Index pos = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!has_prefix(names_[i], prefix)) continue;
    const Mat& t = tensors_[i];
    out.segment(pos, t.size()) = t.reshaped();
    pos += t.size();
  }
  return out;
}

void TensorDict::assign_flat(const Vec& flat, const std::string& prefix) {
  if (flat.size() != numel(prefix))
    throw DimensionError("assign_flat: expected " + std::to_string(numel(prefix)) +
                         " values, got " + std::to_string(flat.size()));
  Index pos = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!has_prefix(names_[i], prefix)) continue;
    Mat& t = tensors_[i];
    t.reshaped() = flat.segment(pos, t.size());
    pos += t.size();
  }
}

TensorDict TensorDict::zeros_like(const std::string& prefix) const {
  TensorDict out;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (has_prefix(names_[i], prefix))
      out.add(names_[i], Mat::Zero(tensors_[i].rows(), tensors_[i].cols()));
  return out;
}

TensorDict& TensorDict::operator+=(const TensorDict& other) {
  for (std::size_t i = 0; i < other.size(); ++i) {
    Mat& mine = at(other.names_[i]);
    const Mat& theirs = other.tensors_[i];
    if (mine.rows() != theirs.rows() || mine.cols() != theirs.cols())
      throw DimensionError("shape mismatch accumulating '" + other.names_[i] + "'");
    mine += theirs;
  }
  return *this;
}

TensorDict& TensorDict::operator*=(double s) {
  for (auto& t : tensors_) t *= s;
  return *this;
}

void ParamStore::add(const std::string& name, Mat value) {
  m1_.add(name, Mat::Zero(value.rows(), value.cols()));
  m2_.add(name, Mat::Zero(value.rows(), value.cols()));
  values_.add(name, std::move(value));
}

}  // namespace mnode
