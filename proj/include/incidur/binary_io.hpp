#pragma once

// Little-endian binary encoding used by the model artifact. Doubles are
// stored by bit pattern so a round trip is exact.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace incidur {

class BinaryWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void boolean(bool v) { u8(v ? 1 : 0); }
  void str(std::string_view s);
  void bytes(std::string_view s) { buf_.append(s); }
  void f64s(const std::vector<double>& v);
  void strs(const std::vector<std::string>& v);
  void vec(const Eigen::VectorXd& v);
  void mat(const Eigen::MatrixXd& m);

  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Every read is bounds-checked; running off the end throws ArtifactError.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  bool boolean();
  std::string str();
  std::string_view bytes(std::size_t n);
  std::vector<double> f64s();
  std::vector<std::string> strs();
  Eigen::VectorXd vec();
  Eigen::MatrixXd mat();

  // Length prefix sanity check against remaining bytes.
  std::size_t count(std::size_t element_size);
  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a64(std::string_view data);

}  // namespace incidur
