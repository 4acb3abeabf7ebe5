#include "gnfeat/data.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <vector>

#include "gnfeat/error.hpp"
#include "gnfeat/prng.hpp"
#include "gnfeat/serialize.hpp"

namespace gnfeat {

using nlohmann::json;

namespace {

constexpr char kDatasetMagic[8] = {'G', 'N', 'F', 'D', 'A', 'T', 'A', '\0'};
constexpr char kNetMagic[8] = {'G', 'N', 'F', 'N', 'E', 'T', '\0', '\0'};

class ByteWriter {
 public:
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  void u32(std::uint32_t x) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t x) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
  }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  template <typename Derived>
  void row_major(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  void expect_magic(const char (&magic)[8]) {
    need(8);
    if (std::memcmp(data_.data() + pos_, magic, 8) != 0) throw MalformedFileError(what_ + ": bad magic bytes");
    pos_ += 8;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return x;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return x;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    need(static_cast<std::size_t>(rows * cols) * 8);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    return m;
  }
  Vector vector(Eigen::Index n) { return matrix(n, 1).col(0); }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw MalformedFileError(what_ + ": truncated file");
  }
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MalformedFileError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + p.string());
}

// Appends the checksum of everything written so far and returns it.
std::uint64_t seal(ByteWriter& w) {
  const std::uint64_t sum = fnv1a64(w.str());
  w.u64(sum);
  return sum;
}

// Verifies the trailing checksum; returns the payload without it.
std::string_view unseal(const std::string& bytes, const std::string& what, std::uint64_t& sum) {
  if (bytes.size() < 8) throw MalformedFileError(what + ": truncated file");
  std::string_view body(bytes.data(), bytes.size() - 8);
  ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8), what);
  sum = tail.u64();
  return body;
}

void check_version(int found, const std::string& what) {
  if (found != kFormatVersion) {
    throw VersionMismatchError(what + ": format_version " + std::to_string(found) + " is not supported (expected " +
                               std::to_string(kFormatVersion) + ")");
  }
}

json read_manifest(const std::filesystem::path& stem, const std::string& kind) {
  const auto path = manifest_path(stem);
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw MalformedFileError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("format_version") || !j.contains("kind")) {
    throw MalformedFileError(path.string() + ": missing format_version or kind");
  }
  check_version(j.at("format_version").get<int>(), path.string());
  if (j.at("kind") != kind) throw MalformedFileError(path.string() + ": expected kind '" + kind + "'");
  return j;
}

Eigen::Index as_index(std::uint64_t x, const std::string& what) {
  if (x > (std::uint64_t{1} << 40)) throw MalformedFileError(what + ": implausible dimension " + std::to_string(x));
  return static_cast<Eigen::Index>(x);
}

void expect_dim(const std::string& what, const char* name, Eigen::Index manifest, Eigen::Index payload) {
  if (manifest != payload) {
    throw DimensionError(what + ": " + name + " is " + std::to_string(payload) + " in the payload but " +
                         std::to_string(manifest) + " in the manifest");
  }
}

}  // namespace

Matrix gaussian_matrix(std::uint64_t seed, std::string_view label, Eigen::Index rows, Eigen::Index cols,
                       double std_dev) {
  if (!(std_dev >= 0.0)) throw InvalidArgument("std must be >= 0");
  if (rows < 0 || cols < 0) throw DimensionError("negative matrix shape");
  Matrix out(rows, cols);
  if (std_dev == 0.0) return Matrix::Zero(rows, cols);
  const GaussianStream stream(seed, label);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      out(r, c) = std_dev * stream(static_cast<std::uint64_t>(r * cols + c));
  return out;
}

void TeacherSpec::validate() const {
  if (M_star < 1) throw InvalidArgument("teacher needs M_star >= 1");
  if (d < 1) throw InvalidArgument("teacher needs d >= 1");
  act.validate();
}

TwoLayerNet make_teacher(const TeacherSpec& spec) {
  spec.validate();
  Matrix u = gaussian_matrix(spec.seed, streams::kTeacherU, spec.M_star, spec.d, 1.0);
  Vector v = gaussian_matrix(spec.seed, streams::kTeacherV, spec.M_star, 1, 1.0).col(0);
  return TwoLayerNet(std::move(v), std::move(u), spec.scaling, spec.act);
}

bool has_duplicate_rows(const Matrix& X) {
  std::set<std::vector<double>> seen;
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    std::vector<double> row(X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) row[c] = X(r, c);
    if (!seen.insert(std::move(row)).second) return true;
  }
  return false;
}

void Dataset::validate() const {
  const Eigen::Index d = X_train.cols();
  if (X_test.cols() != d) throw DimensionError("train and test inputs have different dimensions");
  if (Y_train.size() != X_train.rows() || Y_test.size() != X_test.rows()) {
    throw DimensionError("targets and inputs have different lengths");
  }
  if (teacher.input_dim() != d) throw DimensionError("teacher dimension does not match the data");
}

Dataset make_teacher_dataset(const TeacherSpec& spec, Eigen::Index N, Eigen::Index N_test, std::uint64_t data_seed) {
  if (N < 1) throw InvalidArgument("dataset needs N >= 1");
  if (N_test < 0) throw InvalidArgument("N_test must be >= 0");
  Dataset ds;
  ds.teacher = make_teacher(spec);
  ds.manifest = {spec, data_seed, N, N_test, 0};
  for (int attempt = 0;; ++attempt) {
    const std::string label =
        attempt == 0 ? std::string(streams::kDataTrain) : std::string(streams::kDataTrain) + "#" + std::to_string(attempt);
    ds.X_train = gaussian_matrix(data_seed, label, N, spec.d, 1.0);
    if (!has_duplicate_rows(ds.X_train)) {
      ds.manifest.train_attempt = attempt;
      break;
    }
    if (attempt == 16) throw NumericalError("could not draw a training set without duplicate rows");
  }
  ds.X_test = gaussian_matrix(data_seed, streams::kDataTest, N_test, spec.d, 1.0);
  ds.Y_train = forward(ds.teacher, ds.X_train);
  ds.Y_test = N_test > 0 ? forward(ds.teacher, ds.X_test) : Vector();
  return ds;
}

TwoLayerNet init_student(std::uint64_t seed, Eigen::Index M, Eigen::Index d, double tau0, Activation act,
                         Scaling scaling) {
  if (M < 1 || d < 1) throw InvalidArgument("student needs M >= 1 and d >= 1");
  if (!(tau0 >= 0.0)) throw InvalidArgument("tau0 must be >= 0");
  return TwoLayerNet(Vector::Zero(M), gaussian_matrix(seed, streams::kStudentU, M, d, tau0), scaling, act);
}

TwoLayerNet embed_teacher(const TwoLayerNet& teacher, Eigen::Index M, Scaling scaling) {
  const Eigen::Index m_star = teacher.width();
  if (M < m_star) throw InvalidArgument("student width must be at least the teacher width");
  Matrix u = Matrix::Zero(M, teacher.input_dim());
  Vector v = Vector::Zero(M);
  u.topRows(m_star) = teacher.u;
  v.head(m_star) = teacher.v * (teacher.alpha() / output_scale(scaling, M));
  return TwoLayerNet(std::move(v), std::move(u), scaling, teacher.act);
}

std::filesystem::path manifest_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".manifest.json");
}

std::filesystem::path payload_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".bin");
}

std::string checksum_hex(std::uint64_t checksum) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << checksum;
  return ss.str();
}

void save_dataset(const Dataset& ds, const std::filesystem::path& stem) {
  ds.validate();
  ByteWriter w;
  w.bytes(kDatasetMagic, 8);
  w.u32(kFormatVersion);
  w.u32(0);
  w.u64(static_cast<std::uint64_t>(ds.X_train.rows()));
  w.u64(static_cast<std::uint64_t>(ds.X_test.rows()));
  w.u64(static_cast<std::uint64_t>(ds.X_train.cols()));
  w.u64(static_cast<std::uint64_t>(ds.teacher.width()));
  w.row_major(ds.X_train);
  w.row_major(ds.Y_train);
  w.row_major(ds.X_test);
  w.row_major(ds.Y_test);
  w.row_major(ds.teacher.v);
  w.row_major(ds.teacher.u);
  const std::uint64_t sum = seal(w);

  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "dataset";
  j["payload"] = payload_path(stem).filename().string();
  j["checksum"] = checksum_hex(sum);
  j["N"] = ds.X_train.rows();
  j["N_test"] = ds.X_test.rows();
  j["d"] = ds.X_train.cols();
  j["manifest"] = ds.manifest;
  j["teacher_scaling"] = to_string(ds.teacher.scaling);
  j["teacher_activation"] = ds.teacher.act;
  write_file(payload_path(stem), w.str());
  write_file(manifest_path(stem), j.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& stem) {
  const json j = read_manifest(stem, "dataset");
  const std::string what = payload_path(stem).string();
  const std::string bytes = read_file(payload_path(stem));
  std::uint64_t stored = 0;
  const std::string_view body = unseal(bytes, what, stored);
  ByteReader r(body, what);
  r.expect_magic(kDatasetMagic);
  check_version(static_cast<int>(r.u32()), what);
  r.u32();
  const Eigen::Index N = as_index(r.u64(), what), N_test = as_index(r.u64(), what), d = as_index(r.u64(), what),
                     m_star = as_index(r.u64(), what);
  const std::size_t expected = 8 + 4 + 4 + 4 * 8 + 8 * static_cast<std::size_t>(N * d + N + N_test * d + N_test +
                                                                                 m_star + m_star * d);
  if (body.size() != expected) throw MalformedFileError(what + ": truncated or oversized payload (size does not match its header)");
  if (fnv1a64(body) != stored) throw ChecksumError(what + ": checksum mismatch");

  Dataset ds;
  try {
    ds.manifest = j.at("manifest").get<DatasetManifest>();
    expect_dim(what, "N", j.at("N").get<Eigen::Index>(), N);
    expect_dim(what, "N_test", j.at("N_test").get<Eigen::Index>(), N_test);
    expect_dim(what, "d", j.at("d").get<Eigen::Index>(), d);
    if (j.at("checksum").get<std::string>() != checksum_hex(stored)) {
      throw ChecksumError(what + ": checksum does not match the manifest");
    }
    ds.X_train = r.matrix(N, d);
    ds.Y_train = r.vector(N);
    ds.X_test = r.matrix(N_test, d);
    ds.Y_test = r.vector(N_test);
    Vector tv = r.vector(m_star);
    Matrix tu = r.matrix(m_star, d);
    ds.teacher = TwoLayerNet(std::move(tv), std::move(tu), parse_scaling(j.at("teacher_scaling").get<std::string>()),
                             j.at("teacher_activation").get<Activation>());
  } catch (const json::exception& e) {
    throw MalformedFileError(manifest_path(stem).string() + ": " + e.what());
  }
  return ds;
}

void save_net(const TwoLayerNet& net, const std::filesystem::path& stem) {
  net.validate();
  ByteWriter w;
  w.bytes(kNetMagic, 8);
  w.u32(kFormatVersion);
  w.u32(0);
  w.u64(static_cast<std::uint64_t>(net.v.size()));
  w.u64(static_cast<std::uint64_t>(net.u.rows()));
  w.u64(static_cast<std::uint64_t>(net.u.cols()));
  w.row_major(net.v);
  w.row_major(net.u);
  const std::uint64_t sum = seal(w);

  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "net";
  j["payload"] = payload_path(stem).filename().string();
  j["checksum"] = checksum_hex(sum);
  j["M"] = net.width();
  j["d"] = net.input_dim();
  j["scaling"] = to_string(net.scaling);
  j["activation"] = net.act;
  j["parameter_order"] = "v then u row-major";
  write_file(payload_path(stem), w.str());
  write_file(manifest_path(stem), j.dump(2) + "\n");
}

TwoLayerNet load_net(const std::filesystem::path& stem) {
  const json j = read_manifest(stem, "net");
  const std::string what = payload_path(stem).string();
  const std::string bytes = read_file(payload_path(stem));
  std::uint64_t stored = 0;
  const std::string_view body = unseal(bytes, what, stored);
  ByteReader r(body, what);
  r.expect_magic(kNetMagic);
  check_version(static_cast<int>(r.u32()), what);
  r.u32();
  const Eigen::Index v_len = as_index(r.u64(), what), rows = as_index(r.u64(), what), cols = as_index(r.u64(), what);
  const std::size_t expected = 8 + 4 + 4 + 3 * 8 + 8 * static_cast<std::size_t>(v_len + rows * cols);
  if (body.size() != expected) throw MalformedFileError(what + ": truncated or oversized payload (size does not match its header)");
  if (fnv1a64(body) != stored) throw ChecksumError(what + ": checksum mismatch");
  try {
    const Eigen::Index M = j.at("M").get<Eigen::Index>();
    if (v_len != M) {
      throw DimensionError(what + ": linear weights have length " + std::to_string(v_len) + " but M=" +
                           std::to_string(M));
    }
    expect_dim(what, "M (hidden rows)", M, rows);
    expect_dim(what, "d", j.at("d").get<Eigen::Index>(), cols);
    if (j.at("checksum").get<std::string>() != checksum_hex(stored)) {
      throw ChecksumError(what + ": checksum does not match the manifest");
    }
    Vector v = r.vector(v_len);
    Matrix u = r.matrix(rows, cols);
    return TwoLayerNet(std::move(v), std::move(u), parse_scaling(j.at("scaling").get<std::string>()),
                       j.at("activation").get<Activation>());
  } catch (const json::exception& e) {
    throw MalformedFileError(manifest_path(stem).string() + ": " + e.what());
  }
}

}  // namespace gnfeat
