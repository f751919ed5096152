#include "incidur/binary_io.hpp"

#include <bit>
#include <cstring>

#include "incidur/error.hpp"

namespace incidur {

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  buf_.append(s);
}

void BinaryWriter::f64s(const std::vector<double>& v) {
  u64(v.size());
  for (double d : v) f64(d);
}

void BinaryWriter::strs(const std::vector<std::string>& v) {
  u64(v.size());
  for (const auto& s : v) str(s);
}

void BinaryWriter::vec(const Eigen::VectorXd& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
}

void BinaryWriter::mat(const Eigen::MatrixXd& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
}

void BinaryReader::need(std::size_t n) const {
  if (n > data_.size() - pos_) throw ArtifactError("artifact truncated or malformed");
}

std::uint8_t BinaryReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

bool BinaryReader::boolean() {
  const auto b = u8();
  if (b > 1) throw ArtifactError("artifact malformed: bad boolean");
  return b == 1;
}

std::size_t BinaryReader::count(std::size_t element_size) {
  const std::uint64_t n = u64();
  if (element_size > 0 && n > remaining() / element_size) throw ArtifactError("artifact truncated or malformed");
  return static_cast<std::size_t>(n);
}

std::string BinaryReader::str() {
  const std::size_t n = count(1);
  return std::string(bytes(n));
}

std::string_view BinaryReader::bytes(std::size_t n) {
  need(n);
  const std::string_view out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::vector<double> BinaryReader::f64s() {
  const std::size_t n = count(8);
  std::vector<double> v(n);
  for (auto& d : v) d = f64();
  return v;
}

std::vector<std::string> BinaryReader::strs() {
  const std::size_t n = count(8);
  std::vector<std::string> v(n);
  for (auto& s : v) s = str();
  return v;
}

Eigen::VectorXd BinaryReader::vec() {
  const std::size_t n = count(8);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
  return v;
}

Eigen::MatrixXd BinaryReader::mat() {
  const std::uint64_t rows = u64();
  const std::uint64_t cols = u64();
  if (rows != 0 && cols > remaining() / 8 / rows) throw ArtifactError("artifact truncated or malformed");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = f64();
  return m;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : data) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace incidur
