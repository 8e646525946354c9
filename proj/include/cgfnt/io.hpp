#pragma once

// Sample CSV input and the binary calibration file.
//
// Calibration file layout (all integers and doubles little-endian):
//   "CGFNT-CAL"            9 bytes magic
//   u32 version
//   u8  kind               0 multivariate, 1 univariate
//   u64 n, p, s_reps, seed
//   f64 radius
//   u64 point count N, u64 point-set seed
//   f64 mean_h, sd_h, mean_d, sd_d
//   u64 redraws
//   f64[N*p] points (row-major)
//   u64 len + f64[len]  null_t, null_h, null_d
//   u32 CRC-32 of every preceding byte

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <boost/crc.hpp>

#include "cgfnt/calibration.hpp"
#include "cgfnt/error.hpp"
#include "cgfnt/standardize.hpp"

namespace cgfnt {

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Parses comma-separated numeric rows. Blank lines are skipped; with
/// `header` the first non-blank line is skipped. Errors carry the 1-based
/// line and column (field index) of the problem.
inline SampleMatrix parse_sample_csv_text(std::string_view text, bool header) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool header_pending = header;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::size_t field = 0;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      const std::string_view cell =
          detail::trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      ++field;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError("non-numeric cell '" + std::string(cell) + "'", line_no, field);
      }
      if (!std::isfinite(v)) throw ParseError("non-finite cell '" + std::string(cell) + "'", line_no, field);
      values.push_back(v);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (rows == 0) {
      cols = field;
    } else if (field != cols) {
      throw ParseError("row has " + std::to_string(field) + " fields, expected " + std::to_string(cols), line_no,
                       std::min(field, cols) + 1);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", line_no, 0);
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::copy(values.begin(), values.end(), m.data());
  return SampleMatrix(std::move(m));
}

inline SampleMatrix parse_sample_csv(const std::string& path, bool header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_sample_csv_text(text, header);
}

// ---------------------------------------------------------------------------
// Calibration file

inline constexpr char kCalibrationMagic[] = "CGFNT-CAL";
inline constexpr std::size_t kCalibrationMagicSize = sizeof(kCalibrationMagic) - 1;
inline constexpr std::uint32_t kCalibrationVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    for (std::size_t k = 0; k < sizeof(U); ++k) bytes_.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw CorruptCalibration("calibration file is truncated");
  }
  template <class U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(static_cast<U>(data_[pos_ + k]) << (8 * k));
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return le<std::uint8_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::vector<double> f64s() {
    const std::uint64_t len = u64();
    if (len > (size_ - pos_) / 8) throw CorruptCalibration("calibration array length exceeds file size");
    std::vector<double> v(len);
    for (auto& x : v) x = f64();
    return v;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    std::string_view s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

}  // namespace detail

inline std::vector<unsigned char> encode_calibration(const NullCalibration& cal) {
  cal.validate();
  detail::ByteWriter w;
  w.raw(kCalibrationMagic, kCalibrationMagicSize);
  w.u32(kCalibrationVersion);
  w.u8(static_cast<std::uint8_t>(cal.kind));
  w.u64(cal.n);
  w.u64(cal.p);
  w.u64(cal.s_reps);
  w.u64(cal.seed);
  w.f64(cal.point_set.radius);
  w.u64(cal.point_set.size());
  w.u64(cal.point_set.seed);
  w.f64(cal.mean_h);
  w.f64(cal.sd_h);
  w.f64(cal.mean_d);
  w.f64(cal.sd_d);
  w.u64(cal.redraws);
  const double* pts = cal.point_set.points.data();
  for (std::size_t k = 0; k < cal.point_set.size() * cal.p; ++k) w.f64(pts[k]);
  w.f64s(cal.null_t);
  w.f64s(cal.null_h);
  w.f64s(cal.null_d);
  auto& bytes = w.bytes();
  w.u32(detail::crc32(bytes.data(), bytes.size()));
  return std::move(bytes);
}

inline NullCalibration decode_calibration(const unsigned char* data, std::size_t size) {
  if (size < kCalibrationMagicSize + 4 + 4) throw CorruptCalibration("calibration file is truncated");
  detail::ByteReader r(data, size);
  if (r.raw(kCalibrationMagicSize) != std::string_view(kCalibrationMagic, kCalibrationMagicSize)) {
    throw CorruptCalibration("not a calibration file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCalibrationVersion) {
    throw CorruptCalibration("unsupported calibration format version " + std::to_string(version) + " (expected " +
                             std::to_string(kCalibrationVersion) + ")");
  }
  detail::ByteReader tail(data + size - 4, 4);
  if (tail.u32() != detail::crc32(data, size - 4)) throw CorruptCalibration("calibration checksum mismatch");

  detail::ByteReader body(data + kCalibrationMagicSize + 4, size - kCalibrationMagicSize - 4 - 4);
  NullCalibration cal;
  const std::uint8_t kind = body.u8();
  if (kind > 1) throw CorruptCalibration("unknown calibration kind");
  cal.kind = static_cast<CalibrationKind>(kind);
  cal.n = body.u64();
  cal.p = body.u64();
  cal.s_reps = body.u64();
  cal.seed = body.u64();
  const double radius = body.f64();
  const std::uint64_t count = body.u64();
  const std::uint64_t pts_seed = body.u64();
  cal.mean_h = body.f64();
  cal.sd_h = body.f64();
  cal.mean_d = body.f64();
  cal.sd_d = body.f64();
  cal.redraws = body.u64();
  if (cal.p == 0 || count == 0 || count > body.remaining() / 8 / cal.p) {
    throw CorruptCalibration("calibration point set size is inconsistent");
  }
  cal.point_set.points.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(cal.p));
  double* pts = cal.point_set.points.data();
  for (std::size_t k = 0; k < count * cal.p; ++k) pts[k] = body.f64();
  cal.point_set.radius = radius;
  cal.point_set.seed = pts_seed;
  cal.null_t = body.f64s();
  cal.null_h = body.f64s();
  cal.null_d = body.f64s();
  if (body.remaining() != 0) throw CorruptCalibration("trailing bytes in calibration file");
  cal.validate();
  return cal;
}

inline void write_calibration(const NullCalibration& cal, const std::string& path) {
  const auto bytes = encode_calibration(cal);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInput("write to '" + path + "' failed");
}

inline NullCalibration read_calibration(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_calibration(bytes.data(), bytes.size());
}

}  // namespace cgfnt
