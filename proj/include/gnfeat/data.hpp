#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "gnfeat/model.hpp"

namespace gnfeat {

// Stream labels. Each generated quantity has its own stream so that, e.g.,
// changing N never perturbs the teacher or the student initialization.
namespace streams {
inline constexpr std::string_view kTeacherU = "teacher-u";
inline constexpr std::string_view kTeacherV = "teacher-v";
inline constexpr std::string_view kDataTrain = "data-train";
inline constexpr std::string_view kDataTest = "data-test";
inline constexpr std::string_view kStudentU = "student-u";
}  // namespace streams

/// rows x cols matrix of i.i.d. Normal(0, std^2) draws, filled row-major:
/// entry (r, c) is draw r * cols + c of stream (seed, label).
Matrix gaussian_matrix(std::uint64_t seed, std::string_view label, Eigen::Index rows, Eigen::Index cols,
                       double std_dev);

struct TeacherSpec {
  Eigen::Index d = 10;
  Eigen::Index M_star = 5;
  Activation act = Activation::relu();
  Scaling scaling = Scaling::MeanField;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TeacherSpec&) const = default;
};

/// Teacher network with v*, u* drawn i.i.d. standard Gaussian.
TwoLayerNet make_teacher(const TeacherSpec& spec);

struct DatasetManifest {
  TeacherSpec teacher;
  std::uint64_t data_seed = 0;
  Eigen::Index N = 0;
  Eigen::Index N_test = 0;
  int train_attempt = 0;  // > 0 when a duplicate row forced a redraw

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  Matrix X_train;
  Vector Y_train;
  Matrix X_test;
  Vector Y_test;
  TwoLayerNet teacher;
  DatasetManifest manifest;

  Eigen::Index input_dim() const { return X_train.cols(); }
  void validate() const;
};

inline constexpr Eigen::Index kDefaultTrainSize = 500;
inline constexpr Eigen::Index kDefaultTestSize = 10000;
inline constexpr Eigen::Index kDefaultStudentWidth = 5000;

/// Standard Gaussian inputs labelled by the teacher. Training rows are
/// checked for exact duplicates; on collision the training stream is redrawn
/// under a suffixed label and the attempt number is recorded.
Dataset make_teacher_dataset(const TeacherSpec& spec, Eigen::Index N = kDefaultTrainSize,
                             Eigen::Index N_test = kDefaultTestSize, std::uint64_t data_seed = 0);

/// True when two rows of X are bitwise identical.
bool has_duplicate_rows(const Matrix& X);

/// Student with u ~ Normal(0, tau0^2) i.i.d. and v = 0.
TwoLayerNet init_student(std::uint64_t seed, Eigen::Index M, Eigen::Index d, double tau0,
                         Activation act = Activation::relu(), Scaling scaling = Scaling::MeanField);

/// Width-M student that reproduces the teacher exactly: teacher units are
/// copied into the first M* rows with v rescaled by alpha(M*)/alpha(M), the
/// remaining rows are zero.
TwoLayerNet embed_teacher(const TwoLayerNet& teacher, Eigen::Index M, Scaling scaling);

// Persistence. A stem `path/name` maps to `path/name.manifest.json` (JSON,
// human readable) and `path/name.bin` (little-endian binary payload with a
// magic tag, format version, dimensions and a trailing FNV-1a checksum).
inline constexpr int kFormatVersion = 1;

std::filesystem::path manifest_path(const std::filesystem::path& stem);
std::filesystem::path payload_path(const std::filesystem::path& stem);

void save_dataset(const Dataset& ds, const std::filesystem::path& stem);
Dataset load_dataset(const std::filesystem::path& stem);

void save_net(const TwoLayerNet& net, const std::filesystem::path& stem);
TwoLayerNet load_net(const std::filesystem::path& stem);

std::string checksum_hex(std::uint64_t checksum);

}  // namespace gnfeat
